#pragma once

#include "essm/errors.hpp"
#include "essm/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace essm {

/// Normal part of the HiPPO-LegS matrix: diagonal -1/2, off-diagonal
/// magnitudes sqrt((n+1/2)(k+1/2)) arranged skew-symmetrically (upper
/// triangle positive). The skew arrangement pins every eigenvalue's real
/// part to -1/2, which is what makes the spectrum usable as a stable init.
inline RealMatrix hippo_normal_matrix(Index n) {
    if (n < 1) throw InvalidArgument("hippo_normal_matrix: dimension must be >= 1");
    RealMatrix a(n, n);
    for (Index r = 0; r < n; ++r) {
        for (Index c = 0; c < n; ++c) {
            if (r == c) {
                a(r, c) = -0.5;
            } else {
                double mag = std::sqrt((static_cast<double>(r) + 0.5) *
                                       (static_cast<double>(c) + 0.5));
                a(r, c) = (r < c) ? mag : -mag;
            }
        }
    }
    return a;
}

struct SpectrumInit {
    ComplexVector lambda;   // eigenvalues, ascending imaginary part
    ComplexMatrix eigvecs;  // matching unit-norm eigenvectors (columns)
};

/// Eigendecomposition of hippo_normal_matrix(n).
///
/// The matrix is -(1/2)I + S with S real skew-symmetric, so i*S is Hermitian
/// and a self-adjoint solve yields an exactly unitary eigenbasis. Eigenvalues
/// are returned sorted by ascending imaginary part (ties by real part).
inline SpectrumInit hippo_eigen_init(Index n) {
    if (n < 1) throw InvalidArgument("hippo_eigen_init: dimension must be >= 1");
    const RealMatrix a = hippo_normal_matrix(n);
    ComplexMatrix hermitian(n, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c)
            hermitian(r, c) = Complex(0.0, r == c ? 0.0 : a(r, c));

    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(hermitian);
    if (solver.info() != Eigen::Success)
        throw NumericFailure("hippo_eigen_init: eigensolver failed to converge");

    // i*S v = mu v  (mu real)  =>  A v = (-1/2 - i*mu) v
    const RealVector mu = solver.eigenvalues();
    SpectrumInit out;
    out.lambda.resize(n);
    out.eigvecs.resize(n, n);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    // imag(lambda_j) = -mu_j, so ascending imag means descending mu.
    std::stable_sort(order.begin(), order.end(),
                     [&](Index l, Index r) { return mu(l) > mu(r); });
    for (Index j = 0; j < n; ++j) {
        Index src = order[static_cast<std::size_t>(j)];
        out.lambda(j) = Complex(-0.5, -mu(src));
        out.eigvecs.col(j) = solver.eigenvectors().col(src);
    }
    return out;
}

/// Per-mode discretization steps sampled uniformly from [lo, hi].
inline RealVector init_delta(Index n, double lo, double hi, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("init_delta: dimension must be >= 1");
    if (!(lo > 0.0) || !(lo <= hi))
        throw InvalidArgument("init_delta: need 0 < lo <= hi");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    RealVector delta(n);
    for (Index i = 0; i < n; ++i) delta(i) = dist(rng);
    return delta;
}

inline RealVector init_delta(Index n, std::uint64_t seed) {
    return init_delta(n, 1e-3, 1e-1, seed);
}

struct ProjectionInit {
    RealMatrix b;  // N x H
    RealMatrix c;  // M x N
};

/// Input/output projections. B is sampled N(0, 1/H) and mapped through the
/// HiPPO eigenbasis (real part kept); C is truncated normal, std 1/sqrt(N),
/// cut at two standard deviations.
inline ProjectionInit init_projections(Index n, Index h, Index m,
                                       const ComplexMatrix& eigvecs,
                                       std::uint64_t seed) {
    if (n < 1 || h < 1 || m < 1)
        throw InvalidArgument("init_projections: sizes must be >= 1");
    if (eigvecs.rows() != n || eigvecs.cols() != n)
        throw InvalidArgument("init_projections: eigvecs must be N x N");
    const double unitary_err =
        (eigvecs.adjoint() * eigvecs - ComplexMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
    if (unitary_err > 1e-8)
        throw InvalidArgument("init_projections: eigvecs not unitary within 1e-8");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    RealMatrix raw(n, h);
    const double b_std = 1.0 / std::sqrt(static_cast<double>(h));
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < h; ++j) raw(i, j) = b_std * gauss(rng);

    ProjectionInit out;
    out.b = (eigvecs.adjoint() * raw.cast<Complex>()).real();

    const double c_std = 1.0 / std::sqrt(static_cast<double>(n));
    out.c.resize(m, n);
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
            double v;
            do {
                v = gauss(rng);
            } while (std::abs(v) > 2.0);
            out.c(i, j) = c_std * v;
        }
    }
    return out;
}

/// Everything needed to seed one eSSM head.
struct InitBundle {
    ComplexVector lambda_init;  // N
    ComplexMatrix eigvecs;      // N x N
    RealMatrix b_init;          // N x H
    RealMatrix c_init;          // M x N
    RealVector d_init;          // min(M, H), all ones
    RealVector delta_init;      // N
};

inline InitBundle make_init_bundle(Index n, Index h, Index m, std::uint64_t seed,
                                   double delta_lo = 1e-3, double delta_hi = 1e-1) {
    SpectrumInit spec = hippo_eigen_init(n);
    ProjectionInit proj = init_projections(n, h, m, spec.eigvecs, seed);
    InitBundle bundle;
    bundle.lambda_init = std::move(spec.lambda);
    bundle.eigvecs = std::move(spec.eigvecs);
    bundle.b_init = std::move(proj.b);
    bundle.c_init = std::move(proj.c);
    bundle.d_init = RealVector::Ones(std::min(m, h));
    bundle.delta_init = init_delta(n, delta_lo, delta_hi, seed + 1);
    return bundle;
}

}  // namespace essm
