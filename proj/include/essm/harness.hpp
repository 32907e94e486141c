#pragma once

// Desk-scale experiment drivers shared by the CLI and the acceptance suite.

#include "essm/benchmark.hpp"
#include "essm/conv_engine.hpp"
#include "essm/layer.hpp"
#include "essm/parallel.hpp"
#include "essm/spectral_init.hpp"
#include "essm/ssm_core.hpp"
#include "essm/trainer.hpp"
#include "essm/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

namespace essm::harness {

/// The fixed two-state system of the equivalence and convergence experiments:
/// A = [[-0.2, 1], [-1, -3]], B = C = I, D = 0, delta = 0.005, 10 s horizon,
/// driven by u(t) = [sin t, cos 2t].
struct ToySetup {
    ContinuousFull sys;
    SeqMatrix u;
    double dt = 0.005;
    Index steps = 2000;
};

inline ToySetup make_toy() {
    ToySetup toy;
    toy.sys.a.resize(2, 2);
    toy.sys.a << -0.2, 1.0, -1.0, -3.0;
    toy.sys.b = RealMatrix::Identity(2, 2);
    toy.sys.c = RealMatrix::Identity(2, 2);
    toy.sys.d = RealMatrix::Zero(2, 2);
    toy.u.resize(toy.steps, 2);
    for (Index k = 0; k < toy.steps; ++k) {
        const double t = static_cast<double>(k + 1) * toy.dt;
        toy.u(k, 0) = std::sin(t);
        toy.u(k, 1) = std::cos(2.0 * t);
    }
    return toy;
}

struct ToyTrajectories {
    SeqMatrix y_rec, y_diag, y_conv, y_fft;
    RealMatrix a_bar, b_bar;
    DiagonalizationResult diag;
    DiscreteDiagonal dd;

    double max_pairwise_deviation() const {
        const SeqMatrix* ys[] = {&y_rec, &y_diag, &y_conv, &y_fft};
        double dev = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                dev = std::max(dev, (*ys[i] - *ys[j]).cwiseAbs().maxCoeff());
        return dev;
    }
};

/// Runs all four computation paths of the toy system from a zero state.
inline ToyTrajectories run_toy_paths(const ToySetup& toy) {
    ToyTrajectories out;
    std::tie(out.a_bar, out.b_bar) = discretize_zoh_full(toy.sys.a, toy.sys.b, toy.dt);
    out.y_rec = recurrent_scan_full(out.a_bar, out.b_bar, toy.sys.c, toy.sys.d, toy.u,
                                    RealVector::Zero(2))
                    .outputs;

    out.diag = diagonalize(toy.sys);
    out.dd = discretize_zoh(out.diag.lambda, out.diag.b_prime,
                            RealVector::Constant(2, toy.dt));
    out.y_diag = recurrent_scan_diagonal(out.dd, out.diag.c_prime, toy.sys.d, toy.u,
                                         ComplexVector::Zero(2))
                     .outputs;

    const KernelTensor kernel = system_kernel(out.dd.lambda_bar, toy.steps);
    const ProjectedInput pin = project_input(out.dd.b_bar, toy.u);
    out.y_conv = (conv_direct(kernel, pin) * out.diag.c_prime.transpose()).real();
    out.y_fft = (conv_fft(kernel, pin) * out.diag.c_prime.transpose()).real();
    return out;
}

struct ConvergenceResult {
    SeqMatrix err;  // (steps + 1) x 2, row 0 = initial offset
    double final_err = 0.0;
    bool windows_decreasing = true;
};

/// True system starts at [1, 0]; the convolutional estimate assumes [0, 0].
inline ConvergenceResult run_convergence_experiment(const ToySetup& toy) {
    auto [a_bar, b_bar] = discretize_zoh_full(toy.sys.a, toy.sys.b, toy.dt);
    RealVector x0_true(2);
    x0_true << 1.0, 0.0;
    const StateTrajectory truth =
        recurrent_scan_full(a_bar, b_bar, toy.sys.c, toy.sys.d, toy.u, x0_true);

    const DiagonalizationResult diag = diagonalize(toy.sys);
    const DiscreteDiagonal dd =
        discretize_zoh(diag.lambda, diag.b_prime, RealVector::Constant(2, toy.dt));
    const ComplexSeqMatrix z = conv_fft(system_kernel(dd.lambda_bar, toy.steps),
                                        project_input(dd.b_bar, toy.u));
    const SeqMatrix x_biased = (z * diag.t.transpose()).real();

    ConvergenceResult out;
    out.err.resize(toy.steps + 1, 2);
    out.err.row(0) << 1.0, 0.0;
    for (Index k = 0; k < toy.steps; ++k) {
        out.err(k + 1, 0) = std::abs(truth.states(k, 0).real() - x_biased(k, 0));
        out.err(k + 1, 1) = std::abs(truth.states(k, 1).real() - x_biased(k, 1));
    }
    out.final_err = out.err.row(toy.steps).maxCoeff();
    const Index window = 100;
    double prev = -1.0;
    for (Index start = 1; start + window <= toy.steps + 1; start += window) {
        const double peak = out.err.middleRows(start, window).maxCoeff();
        if (prev >= 0.0 && peak >= prev) out.windows_decreasing = false;
        prev = peak;
    }
    return out;
}

struct SweepCase {
    Index l, n, h;
    double fft_vs_direct;
    double recurrent_vs_conv;
};

struct SweepOutcome {
    double max_fft_vs_direct = 0.0;
    double max_recurrent_vs_conv = 0.0;
    std::vector<SweepCase> cases;
};

/// 200 randomized stable diagonal systems over the pinned size grid; compares
/// the FFT path against the direct-convolution oracle and the recurrent scan.
inline SweepOutcome oracle_sweep(std::uint64_t seed, int total_cases = 200) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::vector<Index> lengths{1, 2, 3, 8, 64, 257};
    const std::vector<Index> states{1, 2, 5};
    const std::vector<Index> inputs{1, 3};

    SweepOutcome out;
    for (int case_id = 0; case_id < total_cases; ++case_id) {
        const Index l = lengths[case_id % lengths.size()];
        const Index n = states[(case_id / lengths.size()) % states.size()];
        const Index h = inputs[(case_id / (lengths.size() * states.size())) % inputs.size()];

        ComplexVector lambda(n);
        RealVector delta(n);
        for (Index i = 0; i < n; ++i) {
            lambda(i) = Complex(-(0.05 + 1.5 * unit(rng)), 6.0 * (unit(rng) - 0.5));
            delta(i) = 0.001 + 0.1 * unit(rng);
        }
        RealMatrix b(n, h);
        for (Index r = 0; r < n; ++r)
            for (Index c = 0; c < h; ++c) b(r, c) = gauss(rng);
        SeqMatrix u(l, h);
        for (Index r = 0; r < l; ++r)
            for (Index c = 0; c < h; ++c) u(r, c) = gauss(rng);

        const DiscreteDiagonal dd = discretize_zoh(lambda, b, delta);
        const KernelTensor kernel = system_kernel(dd.lambda_bar, l);
        const ProjectedInput pin = project_input(dd.b_bar, u);
        const ComplexSeqMatrix x_direct = conv_direct(kernel, pin);
        const ComplexSeqMatrix x_fft = conv_fft(kernel, pin);
        const StateTrajectory rec = recurrent_scan_diagonal(
            dd, ComplexMatrix::Zero(1, n), RealMatrix::Zero(1, h), u, ComplexVector::Zero(n));

        const double scale = std::max(1.0, x_direct.cwiseAbs().maxCoeff());
        const double fft_dev = (x_fft - x_direct).cwiseAbs().maxCoeff() / scale;
        const double rec_dev = (rec.states - x_direct).cwiseAbs().maxCoeff() / scale;
        out.max_fft_vs_direct = std::max(out.max_fft_vs_direct, fft_dev);
        out.max_recurrent_vs_conv = std::max(out.max_recurrent_vs_conv, rec_dev);
        out.cases.push_back({l, n, h, fft_dev, rec_dev});
    }
    return out;
}

struct BenchModels {
    RealMatrix a_bar, b_bar, c_full, d_full;  // discretized vanilla system
    DiagonalSystem diag;                      // eSSM head

    long long vanilla_params(Index n, Index h, Index m) const {
        return static_cast<long long>(n) * n + static_cast<long long>(n) * h +
               static_cast<long long>(m) * n + static_cast<long long>(m) * h;
    }
    long long diagonal_params(Index n, Index h, Index m) const {
        return 2LL * n + static_cast<long long>(n) * h + static_cast<long long>(m) * n +
               std::min(m, h) + n;
    }
};

/// One random stable full system and one standard eSSM head at sizes (n, h).
inline BenchModels make_bench_models(Index n, Index h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Index m = h;
    RealMatrix raw(n, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) raw(r, c) = gauss(rng);
    const double shift = raw.eigenvalues().real().maxCoeff() + 0.5;
    BenchModels models;
    const RealMatrix a_full = raw - shift * RealMatrix::Identity(n, n);
    RealMatrix b_full(n, h);
    models.c_full.resize(m, n);
    for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < h; ++c) b_full(r, c) = gauss(rng) / std::sqrt(double(h));
    for (Index r = 0; r < m; ++r)
        for (Index c = 0; c < n; ++c) models.c_full(r, c) = gauss(rng) / std::sqrt(double(n));
    models.d_full = RealMatrix::Zero(m, h);
    std::tie(models.a_bar, models.b_bar) = discretize_zoh_full(a_full, b_full, 0.01);

    const InitBundle bundle = make_init_bundle(n, h, m, seed + 1);
    models.diag = DiagonalSystem{bundle.lambda_init, bundle.b_init, bundle.c_init,
                                 bundle.d_init, bundle.delta_init};
    return models;
}

struct StrategyTimes {
    double vanilla = -1.0;     // < 0 when skipped
    bool vanilla_extrapolated = false;
    double recurrent = 0.0;
    double fft = 0.0;
};

inline constexpr long long kVanillaWorkCap = 1LL << 20;

/// Times the three strategies' forward passes at length l on a shared random
/// input, pinned to a single worker, median of `reps` after one warm-up. The
/// vanilla path extrapolates linearly in L above the work cap.
inline StrategyTimes time_strategies(const BenchModels& models, Index l, std::uint64_t seed,
                                     int reps = 5) {
    const Index n = models.a_bar.rows();
    const Index h = models.b_bar.cols();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SeqMatrix u(l, h);
    for (Index r = 0; r < l; ++r)
        for (Index c = 0; c < h; ++c) u(r, c) = gauss(rng);

    StrategyTimes t;
    ThreadCapGuard single(1);

    Index l_vanilla = l;
    if (static_cast<long long>(l) * n > kVanillaWorkCap) {
        l_vanilla = static_cast<Index>(kVanillaWorkCap / n);
        t.vanilla_extrapolated = true;
    }
    {
        const SeqMatrix u_v = u.topRows(l_vanilla);
        const double base = time_median_seconds(
            [&] {
                const StateTrajectory traj = recurrent_scan_full(
                    models.a_bar, models.b_bar, models.c_full, models.d_full, u_v,
                    RealVector::Zero(n));
                volatile double keep = traj.outputs(l_vanilla - 1, 0);
                (void)keep;
            },
            reps);
        t.vanilla = base * static_cast<double>(l) / static_cast<double>(l_vanilla);
    }

    t.recurrent = time_median_seconds(
        [&] {
            const StateTrajectory traj = head_recurrent(models.diag, u, ComplexVector::Zero(n));
            volatile double keep = traj.outputs(l - 1, 0);
            (void)keep;
        },
        reps);

    t.fft = time_median_seconds(
        [&] {
            const SeqMatrix y = head_forward(models.diag, u, false, KernelMode::full_complex);
            volatile double keep = y(l - 1, 0);
            (void)keep;
        },
        reps);
    return t;
}

/// Direct-convolution forward time at length l (the quadratic reference).
inline double time_conv_direct(Index l, Index n, std::uint64_t seed, int reps = 3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ComplexVector lambda_bar(n);
    for (Index i = 0; i < n; ++i)
        lambda_bar(i) = std::polar(0.95 + 0.04 * static_cast<double>(i) / double(n),
                                   0.1 * static_cast<double>(i));
    const KernelTensor kernel = system_kernel(lambda_bar, l);
    ProjectedInput pin;
    pin.bu.resize(l, n);
    for (Index r = 0; r < l; ++r)
        for (Index c = 0; c < n; ++c) pin.bu(r, c) = Complex(gauss(rng), gauss(rng));
    ThreadCapGuard single(1);
    return time_median_seconds(
        [&] {
            const ComplexSeqMatrix x = conv_direct(kernel, pin);
            volatile double keep = x(l - 1, 0).real();
            (void)keep;
        },
        reps);
}

struct DemoSetup {
    DiagonalSystem teacher;
    MultiHeadLayer student;
    TrainConfig cfg;
};

/// Default tiny system-identification demo (N = H = M = 4, L = 128, 500 GD
/// steps at lr 0.01). The teacher's feedthrough sits away from the student's
/// init so D is genuinely learned rather than pre-solved.
inline DemoSetup make_train_demo(std::uint64_t seed, Index l = 128, Index n = 4, Index h = 4,
                                 Index m = 4) {
    DemoSetup demo;
    const InitBundle teacher_init = make_init_bundle(n, h, m, seed + 1000);
    demo.teacher = DiagonalSystem{teacher_init.lambda_init, teacher_init.b_init,
                                  teacher_init.c_init, teacher_init.d_init,
                                  teacher_init.delta_init};
    demo.teacher.d.array() = 1.6;
    demo.student = make_system_id_student(h, n, m, seed);
    demo.cfg.seed = seed;
    demo.cfg.seq_len = l;
    return demo;
}

}  // namespace essm::harness
