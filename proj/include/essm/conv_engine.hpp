#pragma once

#include "essm/errors.hpp"
#include "essm/fft.hpp"
#include "essm/parallel.hpp"
#include "essm/types.hpp"

#include <cmath>
#include <functional>
#include <utility>

namespace essm {

/// System kernel V: v(k, i) = lambda_bar_i^k. A causal kernel has L rows; the
/// bidirectional extension has 2L rows (forward part then reversed copy).
struct KernelTensor {
    ComplexSeqMatrix v;
    bool bidirectional = false;

    Index length() const { return v.rows(); }
    Index modes() const { return v.cols(); }
    /// Signal length the kernel convolves against (L, not the padded 2L).
    Index signal_length() const { return bidirectional ? v.rows() / 2 : v.rows(); }
};

/// Per-step projected inputs bu(k, :) = b_bar * u_k.
struct ProjectedInput {
    ComplexSeqMatrix bu;  // L x N

    Index steps() const { return bu.rows(); }
};

/// Builds V by cumulative products, O(LN) time and space.
inline KernelTensor system_kernel(const ComplexVector& lambda_bar, Index len) {
    if (len < 1) throw InvalidArgument("system_kernel: length must be >= 1");
    const Index n = lambda_bar.size();
    KernelTensor kernel;
    kernel.v.resize(len, n);
    kernel.v.row(0).setOnes();
    for (Index k = 1; k < len; ++k)
        kernel.v.row(k) = kernel.v.row(k - 1).cwiseProduct(lambda_bar.transpose());
    return kernel;
}

inline ProjectedInput project_input(const ComplexMatrix& b_bar, const SeqMatrix& u) {
    if (b_bar.cols() != u.cols())
        throw InvalidArgument("project_input: input width must match b_bar columns");
    ProjectedInput out;
    out.bu = u.cast<Complex>() * b_bar.transpose();
    return out;
}

/// Brute-force causal convolution x(k, i) = sum_{m<=k} v(m, i) bu(k-m, i).
/// O(L^2 N); this is the oracle the FFT path is checked against.
inline ComplexSeqMatrix conv_direct(const KernelTensor& kernel, const ProjectedInput& pin) {
    if (kernel.bidirectional)
        throw InvalidArgument("conv_direct: causal kernels only");
    const Index l = pin.steps();
    if (kernel.length() != l)
        throw InvalidArgument("conv_direct: kernel length must equal input length");
    const Index n = kernel.modes();
    if (pin.bu.cols() != n) throw InvalidArgument("conv_direct: mode count mismatch");
    ComplexSeqMatrix x(l, n);
    parallel_for_chunks(n, [&](std::ptrdiff_t c0, std::ptrdiff_t c1) {
        for (std::ptrdiff_t i = c0; i < c1; ++i) {
            for (Index k = 0; k < l; ++k) {
                Complex acc(0.0, 0.0);
                for (Index m = 0; m <= k; ++m) acc += kernel.v(m, i) * pin.bu(k - m, i);
                x(k, i) = acc;
            }
        }
    });
    return x;
}

namespace detail {
// Reused per-thread transform buffers; repeated calls at the same sizes stay
// warm instead of re-faulting fresh pages.
struct ConvScratch {
    SeqMatrix kre, kim, sre, sim;
};
inline ConvScratch& conv_scratch() {
    thread_local ConvScratch scratch;
    return scratch;
}
}  // namespace detail

/// FFT-based convolution, column by column. The transform length is the
/// smallest power of two holding the full linear convolution (2L-1 causal,
/// 3L-1 bidirectional), so there is no circular wraparound.
///
/// For a bidirectional kernel [v; reverse(v)] the linear convolution y holds
/// the causal response in y[0..L-1] and the anticausal response (reversed
/// kernel applied to steps k..L-1) in y[2L-1..3L-2]; the output is their sum,
/// which matches the two-pass forward + reversed-input-forward reference.
inline ComplexSeqMatrix conv_fft(const KernelTensor& kernel, const ProjectedInput& pin) {
    const Index l = pin.steps();
    const Index lk = kernel.length();
    if (kernel.bidirectional) {
        if (lk != 2 * l)
            throw InvalidArgument("conv_fft: bidirectional kernel must have 2L rows");
    } else if (lk != l) {
        throw InvalidArgument("conv_fft: kernel length must equal input length");
    }
    const Index n = kernel.modes();
    if (pin.bu.cols() != n) throw InvalidArgument("conv_fft: mode count mismatch");

    const Index fft_len = next_pow2(lk + l - 1);
    const FftPlan plan(fft_len);
    ComplexSeqMatrix x(l, n);

    parallel_for_chunks(
        n,
        [&](std::ptrdiff_t c0, std::ptrdiff_t c1) {
            const Index cols = static_cast<Index>(c1 - c0);
            detail::ConvScratch& ws = detail::conv_scratch();
            ws.kre.resize(fft_len, cols);
            ws.kim.resize(fft_len, cols);
            ws.sre.resize(fft_len, cols);
            ws.sim.resize(fft_len, cols);
            ws.kre.topRows(lk) = kernel.v.middleCols(c0, cols).real();
            ws.kim.topRows(lk) = kernel.v.middleCols(c0, cols).imag();
            ws.kre.bottomRows(fft_len - lk).setZero();
            ws.kim.bottomRows(fft_len - lk).setZero();
            ws.sre.topRows(l) = pin.bu.middleCols(c0, cols).real();
            ws.sim.topRows(l) = pin.bu.middleCols(c0, cols).imag();
            ws.sre.bottomRows(fft_len - l).setZero();
            ws.sim.bottomRows(fft_len - l).setZero();
            fft_rows_split(ws.kre, ws.kim, plan, false);
            fft_rows_split(ws.sre, ws.sim, plan, false);
            {
                double* __restrict ar = ws.kre.data();
                double* __restrict ai = ws.kim.data();
                const double* __restrict br = ws.sre.data();
                const double* __restrict bi = ws.sim.data();
                const Index total = fft_len * cols;
                for (Index q = 0; q < total; ++q) {
                    const double tr = ar[q] * br[q] - ai[q] * bi[q];
                    ai[q] = ar[q] * bi[q] + ai[q] * br[q];
                    ar[q] = tr;
                }
            }
            fft_rows_split(ws.kre, ws.kim, plan, true);
            auto block = x.middleCols(c0, cols);
            if (kernel.bidirectional) {
                block.real() = ws.kre.topRows(l) + ws.kre.middleRows(2 * l - 1, l);
                block.imag() = ws.kim.topRows(l) + ws.kim.middleRows(2 * l - 1, l);
            } else {
                block.real() = ws.kre.topRows(l);
                block.imag() = ws.kim.topRows(l);
            }
        },
        /*min_chunk=*/8);
    return x;
}

/// Extends a causal kernel with its time reversal: the forward kernel padded
/// with L trailing zeros plus the reversed kernel padded with L leading zeros.
/// No new parameters are introduced.
inline KernelTensor bidirectional_kernel(const KernelTensor& kernel) {
    if (kernel.bidirectional)
        throw InvalidArgument("bidirectional_kernel: kernel is already bidirectional");
    const Index l = kernel.length();
    KernelTensor out;
    out.bidirectional = true;
    out.v.resize(2 * l, kernel.modes());
    out.v.topRows(l) = kernel.v;
    out.v.bottomRows(l) = kernel.v.colwise().reverse();
    return out;
}

/// Perturbs the input at step k and reports whether every output before k is
/// bit-unchanged (true for causal systems, false for bidirectional kernels).
inline bool causality_probe(const std::function<SeqMatrix(const SeqMatrix&)>& run,
                            const SeqMatrix& u, Index k) {
    if (k < 0 || k >= u.rows()) throw InvalidArgument("causality_probe: step out of range");
    const SeqMatrix base = run(u);
    SeqMatrix bumped = u;
    bumped.row(k).array() += 1.0;
    const SeqMatrix probed = run(bumped);
    if (base.rows() != probed.rows() || base.cols() != probed.cols())
        throw NumericFailure("causality_probe: output shape changed under perturbation");
    for (Index r = 0; r < k; ++r)
        for (Index c = 0; c < base.cols(); ++c)
            if (base(r, c) != probed(r, c)) return false;
    return true;
}

}  // namespace essm
