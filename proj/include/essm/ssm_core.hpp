#pragma once

#include "essm/errors.hpp"
#include "essm/types.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace essm {

/// Continuous-time MIMO system dx = Ax + Bu, y = Cx + Du with a full A.
struct ContinuousFull {
    RealMatrix a;  // N x N
    RealMatrix b;  // N x H
    RealMatrix c;  // M x N
    RealMatrix d;  // M x H

    Index state_dim() const { return a.rows(); }
    Index input_dim() const { return b.cols(); }
    Index output_dim() const { return c.rows(); }
};

/// Decoupled continuous system: complex diagonal spectrum, real projections,
/// diagonal feedthrough, per-mode step sizes.
struct DiagonalSystem {
    ComplexVector lambda;  // N
    RealMatrix b;          // N x H
    RealMatrix c;          // M x N
    RealVector d;          // min(M, H), applied channelwise
    RealVector delta;      // N, > 0

    Index state_dim() const { return lambda.size(); }
    Index input_dim() const { return b.cols(); }
    Index output_dim() const { return c.rows(); }
};

/// Zero-shot step rescaling (e.g. halving the sample rate doubles delta).
inline void scale_delta(DiagonalSystem& sys, double factor) {
    if (!(factor > 0.0)) throw InvalidArgument("scale_delta: factor must be positive");
    sys.delta *= factor;
}

enum class DiscretizeMethod { zoh, gbt };

struct DiscreteDiagonal {
    ComplexVector lambda_bar;  // N
    ComplexMatrix b_bar;       // N x H
    DiscretizeMethod method = DiscretizeMethod::zoh;
    double gbt_alpha = 0.0;    // meaningful for method == gbt
};

struct StateTrajectory {
    ComplexSeqMatrix states;  // L x N
    SeqMatrix outputs;        // L x M
};

// Below |lambda| ~ 1e-12 the exact ZOH input factor (e^{lambda*delta}-1)/lambda
// cancels catastrophically; the series limit is delta.
inline constexpr double kZohSeriesThreshold = 1e-12;

/// Per-mode ZOH input scaling phi_i = (e^{lambda_i delta_i} - 1) / lambda_i.
inline ComplexVector zoh_input_scale(const ComplexVector& lambda, const RealVector& delta) {
    if (lambda.size() != delta.size())
        throw InvalidArgument("zoh_input_scale: lambda and delta lengths differ");
    ComplexVector phi(lambda.size());
    for (Index i = 0; i < lambda.size(); ++i) {
        if (!(delta(i) > 0.0)) throw InvalidArgument("zoh_input_scale: delta must be positive");
        if (std::abs(lambda(i)) < kZohSeriesThreshold) {
            phi(i) = Complex(delta(i), 0.0);
        } else {
            phi(i) = (std::exp(lambda(i) * delta(i)) - 1.0) / lambda(i);
        }
    }
    return phi;
}

/// Zero-order hold for a diagonal system: lambda_bar = exp(lambda delta),
/// b_bar = diag(phi) * b.
inline DiscreteDiagonal discretize_zoh(const ComplexVector& lambda, const ComplexMatrix& b,
                                       const RealVector& delta) {
    if (lambda.size() != b.rows())
        throw InvalidArgument("discretize_zoh: lambda length must match rows of b");
    DiscreteDiagonal out;
    out.method = DiscretizeMethod::zoh;
    out.lambda_bar.resize(lambda.size());
    const ComplexVector phi = zoh_input_scale(lambda, delta);
    for (Index i = 0; i < lambda.size(); ++i)
        out.lambda_bar(i) = std::exp(lambda(i) * delta(i));
    out.b_bar = phi.asDiagonal() * b;
    return out;
}

inline DiscreteDiagonal discretize_zoh(const ComplexVector& lambda, const RealMatrix& b,
                                       const RealVector& delta) {
    return discretize_zoh(lambda, ComplexMatrix(b.cast<Complex>()), delta);
}

/// Generalized bilinear transform on a full system:
///   a_bar = (I - alpha delta A)^{-1} (I + (1-alpha) delta A)
///   b_bar = (I - alpha delta A)^{-1} delta B
/// alpha = 0 is forward Euler, 0.5 bilinear, 1 backward Euler.
inline std::pair<RealMatrix, RealMatrix> discretize_gbt(const RealMatrix& a, const RealMatrix& b,
                                                        double delta, double alpha) {
    if (a.rows() != a.cols()) throw InvalidArgument("discretize_gbt: A must be square");
    if (b.rows() != a.rows()) throw InvalidArgument("discretize_gbt: B row count must match A");
    if (!(delta > 0.0)) throw InvalidArgument("discretize_gbt: delta must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw InvalidArgument("discretize_gbt: alpha must be in [0,1]");
    const Index n = a.rows();
    const RealMatrix lhs = RealMatrix::Identity(n, n) - alpha * delta * a;
    Eigen::FullPivLU<RealMatrix> lu(lhs);
    if (!lu.isInvertible())
        throw NumericFailure("discretize_gbt: (I - alpha*delta*A) is singular");
    RealMatrix a_bar = lu.solve(RealMatrix::Identity(n, n) + (1.0 - alpha) * delta * a);
    RealMatrix b_bar = lu.solve(delta * b);
    return {std::move(a_bar), std::move(b_bar)};
}

/// Exact ZOH for a full system via the augmented matrix exponential
///   exp([[A, B], [0, 0]] * delta) = [[a_bar, b_bar], [0, I]],
/// valid whether or not A is invertible.
inline std::pair<RealMatrix, RealMatrix> discretize_zoh_full(const RealMatrix& a,
                                                             const RealMatrix& b, double delta) {
    if (a.rows() != a.cols()) throw InvalidArgument("discretize_zoh_full: A must be square");
    if (b.rows() != a.rows())
        throw InvalidArgument("discretize_zoh_full: B row count must match A");
    if (!(delta > 0.0)) throw InvalidArgument("discretize_zoh_full: delta must be positive");
    const Index n = a.rows();
    const Index h = b.cols();
    RealMatrix aug = RealMatrix::Zero(n + h, n + h);
    aug.topLeftCorner(n, n) = a * delta;
    aug.topRightCorner(n, h) = b * delta;
    const RealMatrix phi = aug.exp();
    return {phi.topLeftCorner(n, n), phi.topRightCorner(n, h)};
}

/// Streaming simulation of x_k = a_bar x_{k-1} + b_bar u_k, y_k = c x_k + d u_k.
/// One time step is processed per loop iteration (the recurrence is a data
/// dependency chain); this is the full-matrix reference path.
inline StateTrajectory recurrent_scan_full(const RealMatrix& a_bar, const RealMatrix& b_bar,
                                           const RealMatrix& c, const RealMatrix& d,
                                           const SeqMatrix& u, const RealVector& x0) {
    const Index n = a_bar.rows();
    const Index l = u.rows();
    if (a_bar.cols() != n || b_bar.rows() != n || c.cols() != n || x0.size() != n ||
        b_bar.cols() != u.cols() || d.rows() != c.rows() || d.cols() != u.cols())
        throw InvalidArgument("recurrent_scan_full: inconsistent shapes");
    StateTrajectory traj;
    traj.states.resize(l, n);
    traj.outputs.resize(l, c.rows());
    RealVector x = x0;
    RealVector xn(n);
    RealVector y(c.rows());
    for (Index k = 0; k < l; ++k) {
        xn.noalias() = a_bar * x;
        xn.noalias() += b_bar * u.row(k).transpose();
        x.swap(xn);
        y.noalias() = c * x;
        y.noalias() += d * u.row(k).transpose();
        traj.states.row(k) = x.cast<Complex>();
        traj.outputs.row(k) = y;
    }
    return traj;
}

/// Streaming simulation of the diagonal recurrence: x_k = lambda_bar .* x_{k-1}
/// + b_bar u_k, y_k = Re(c x_k) + dmat u_k. c may be complex (diagonalized
/// systems carry C T); outputs take the real part.
inline StateTrajectory recurrent_scan_diagonal(const DiscreteDiagonal& dd, const ComplexMatrix& c,
                                               const RealMatrix& dmat, const SeqMatrix& u,
                                               const ComplexVector& x0) {
    const Index n = dd.lambda_bar.size();
    const Index l = u.rows();
    if (dd.b_bar.rows() != n || c.cols() != n || x0.size() != n ||
        dd.b_bar.cols() != u.cols() || dmat.rows() != c.rows() || dmat.cols() != u.cols())
        throw InvalidArgument("recurrent_scan_diagonal: inconsistent shapes");
    StateTrajectory traj;
    traj.states.resize(l, n);
    traj.outputs.resize(l, c.rows());
    ComplexVector x = x0;
    ComplexVector y(c.rows());
    for (Index k = 0; k < l; ++k) {
        x.array() *= dd.lambda_bar.array();
        x.noalias() += dd.b_bar * u.row(k).transpose();
        y.noalias() = c * x;
        traj.states.row(k) = x;
        traj.outputs.row(k) =
            y.real().transpose() + (dmat * u.row(k).transpose()).transpose();
    }
    return traj;
}

struct DiagonalizationResult {
    ComplexVector lambda;    // eigenvalues of A
    ComplexMatrix t;         // transform, columns = eigenvectors
    ComplexMatrix b_prime;   // T^{-1} B
    ComplexMatrix c_prime;   // C T
};

/// Similarity transform decoupling a full system into scalar modes.
/// Requires distinct eigenvalues; the reconstruction ||T L T^{-1} - A|| is
/// checked against 1e-8 ||A||.
inline DiagonalizationResult diagonalize(const ContinuousFull& sys) {
    const Index n = sys.a.rows();
    if (sys.a.cols() != n || sys.b.rows() != n || sys.c.cols() != n)
        throw InvalidArgument("diagonalize: inconsistent shapes");

    Eigen::EigenSolver<RealMatrix> solver(sys.a);
    if (solver.info() != Eigen::Success)
        throw NumericFailure("diagonalize: eigensolver failed to converge");

    const double a_norm = sys.a.norm();
    ComplexVector lambda = solver.eigenvalues();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (std::abs(lambda(i) - lambda(j)) <= 1e-8 * a_norm)
                throw NonDiagonalizable("diagonalize: eigenvalues not distinct");

    // Deterministic mode order: ascending imaginary part, ties by real part.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index lhs, Index rhs) {
        if (lambda(lhs).imag() != lambda(rhs).imag())
            return lambda(lhs).imag() < lambda(rhs).imag();
        return lambda(lhs).real() < lambda(rhs).real();
    });

    DiagonalizationResult out;
    out.lambda.resize(n);
    out.t.resize(n, n);
    for (Index j = 0; j < n; ++j) {
        out.lambda(j) = lambda(order[static_cast<std::size_t>(j)]);
        out.t.col(j) = solver.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    }

    Eigen::PartialPivLU<ComplexMatrix> lu(out.t);
    out.b_prime = lu.solve(sys.b.cast<Complex>());
    out.c_prime = sys.c.cast<Complex>() * out.t;

    const ComplexMatrix recon = out.t * out.lambda.asDiagonal() * lu.inverse();
    if ((recon - sys.a.cast<Complex>()).norm() > 1e-8 * a_norm)
        throw NumericFailure("diagonalize: reconstruction residual too large");
    return out;
}

}  // namespace essm
