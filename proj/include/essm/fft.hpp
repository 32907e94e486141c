#pragma once

#include "essm/errors.hpp"
#include "essm/types.hpp"

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace essm {

/// Smallest power of two >= n (n >= 1).
inline Index next_pow2(Index n) {
    Index p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Precomputed tables for a radix-2 transform of fixed power-of-two length.
/// A plan is immutable after construction and may be shared across threads.
struct FftPlan {
    Index n = 0;
    std::vector<Index> bitrev;       // bit-reversal permutation
    std::vector<Complex> twiddles;   // w[j] = exp(-2*pi*i*j/n), j < n/2

    explicit FftPlan(Index length) : n(length) {
        if (n < 1 || (n & (n - 1)) != 0)
            throw InvalidArgument("FftPlan: length must be a power of two");
        bitrev.resize(static_cast<std::size_t>(n));
        int bits = 0;
        while ((Index{1} << bits) < n) ++bits;
        for (Index i = 0; i < n; ++i) {
            Index r = 0;
            for (int b = 0; b < bits; ++b)
                if (i & (Index{1} << b)) r |= Index{1} << (bits - 1 - b);
            bitrev[static_cast<std::size_t>(i)] = r;
        }
        twiddles.resize(static_cast<std::size_t>(n / 2));
        for (Index j = 0; j < n / 2; ++j) {
            double ang = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
            twiddles[static_cast<std::size_t>(j)] = Complex(std::cos(ang), std::sin(ang));
        }
    }
};

/// In-place decimation-in-time FFT along the row index, batched over columns.
/// Real and imaginary parts live in separate row-major matrices so the inner
/// butterfly loops run on contiguous doubles.
inline void fft_rows_split(SeqMatrix& re, SeqMatrix& im, const FftPlan& plan, bool inverse) {
    const Index n = plan.n;
    const Index m = re.cols();
    if (re.rows() != n || im.rows() != n || im.cols() != m)
        throw InvalidArgument("fft_rows_split: shape does not match plan length");

    for (Index i = 0; i < n; ++i) {
        Index j = plan.bitrev[static_cast<std::size_t>(i)];
        if (i < j) {
            re.row(i).swap(re.row(j));
            im.row(i).swap(im.row(j));
        }
    }

    for (Index len = 2; len <= n; len <<= 1) {
        const Index half = len >> 1;
        const Index step = n / len;  // twiddle stride at this stage
        for (Index start = 0; start < n; start += len) {
            for (Index j = 0; j < half; ++j) {
                const Complex w = plan.twiddles[static_cast<std::size_t>(j * step)];
                const double wr = w.real();
                const double wi = inverse ? -w.imag() : w.imag();
                double* __restrict ur = re.row(start + j).data();
                double* __restrict ui = im.row(start + j).data();
                double* __restrict lr = re.row(start + j + half).data();
                double* __restrict li = im.row(start + j + half).data();
                for (Index c = 0; c < m; ++c) {
                    const double tr = lr[c] * wr - li[c] * wi;
                    const double ti = lr[c] * wi + li[c] * wr;
                    lr[c] = ur[c] - tr;
                    li[c] = ui[c] - ti;
                    ur[c] += tr;
                    ui[c] += ti;
                }
            }
        }
    }

    if (inverse) {
        const double scale = 1.0 / static_cast<double>(n);
        re *= scale;
        im *= scale;
    }
}

/// Interleaved-complex convenience wrapper over the split transform.
inline void fft_rows(ComplexSeqMatrix& a, const FftPlan& plan, bool inverse) {
    if (a.rows() != plan.n) throw InvalidArgument("fft_rows: row count does not match plan length");
    SeqMatrix re = a.real();
    SeqMatrix im = a.imag();
    fft_rows_split(re, im, plan, inverse);
    a.real() = re;
    a.imag() = im;
}

/// Single-signal wrapper.
inline void fft_inplace(std::vector<Complex>& x, bool inverse) {
    const Index n = static_cast<Index>(x.size());
    FftPlan plan(n);
    ComplexSeqMatrix a(n, 1);
    for (Index i = 0; i < n; ++i) a(i, 0) = x[static_cast<std::size_t>(i)];
    fft_rows(a, plan, inverse);
    for (Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = a(i, 0);
}

}  // namespace essm
