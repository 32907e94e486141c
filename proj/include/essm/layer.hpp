#pragma once

#include "essm/conv_engine.hpp"
#include "essm/errors.hpp"
#include "essm/spectral_init.hpp"
#include "essm/ssm_core.hpp"
#include "essm/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace essm {

/// Raw spectrum parameters plus the enforcing floor. The effective eigenvalue
/// is -max(raw_real, floor) + imag*i, so the real part can never cross zero
/// no matter where training pushes the raw values.
struct StabilizedSpectrum {
    RealVector raw_real;
    RealVector imag;
    double floor = 1e-3;
};

inline ComplexVector enforce_stability(const StabilizedSpectrum& spec) {
    ComplexVector lambda(spec.raw_real.size());
    for (Index i = 0; i < lambda.size(); ++i)
        lambda(i) = Complex(-std::max(spec.raw_real(i), spec.floor), spec.imag(i));
    return lambda;
}

/// Whether kernels keep their full complex value or only the real part.
/// Simulation/equivalence work uses full_complex (it reproduces the recurrent
/// scan exactly); the trainable layer uses real_part.
enum class KernelMode { full_complex, real_part };

/// Trainable parameters of one eSSM head.
struct HeadParams {
    StabilizedSpectrum spectrum;
    RealMatrix b;     // n x h
    RealMatrix c;     // m x n
    RealVector d;     // min(m, h)
    RealVector delta; // n

    Index state_dim() const { return spectrum.raw_real.size(); }
    Index input_dim() const { return b.cols(); }
    Index output_dim() const { return c.rows(); }

    DiagonalSystem system() const {
        return DiagonalSystem{enforce_stability(spectrum), b, c, d, delta};
    }
};

inline HeadParams head_from_bundle(const InitBundle& bundle) {
    HeadParams head;
    head.spectrum.raw_real = -bundle.lambda_init.real();
    head.spectrum.imag = bundle.lambda_init.imag();
    head.b = bundle.b_init;
    head.c = bundle.c_init;
    head.d = bundle.d_init;
    head.delta = bundle.delta_init;
    return head;
}

/// Convolutional forward pass of one head: ZOH discretization, system kernel
/// (optionally made bidirectional), FFT state inference, then
/// y_k = Re(C x_k) + D u_k with D acting on the leading min(m, h) channels.
inline SeqMatrix head_forward(const DiagonalSystem& sys, const SeqMatrix& u, bool bidirectional,
                              KernelMode mode = KernelMode::real_part) {
    if (u.cols() != sys.input_dim())
        throw InvalidArgument("head_forward: input width mismatch");
    const Index l = u.rows();
    const ComplexVector phi = zoh_input_scale(sys.lambda, sys.delta);
    ComplexVector lambda_bar(sys.lambda.size());
    for (Index i = 0; i < sys.lambda.size(); ++i)
        lambda_bar(i) = std::exp(sys.lambda(i) * sys.delta(i));

    KernelTensor kernel = system_kernel(lambda_bar, l);
    if (mode == KernelMode::real_part)
        kernel.v = kernel.v.real().cast<Complex>();
    if (bidirectional) kernel = bidirectional_kernel(kernel);

    // b_bar factors as diag(phi) * B, so project with the real B first.
    ProjectedInput pin;
    pin.bu = (u * sys.b.transpose()).cast<Complex>() * phi.asDiagonal();

    const ComplexSeqMatrix x = conv_fft(kernel, pin);
    const SeqMatrix x_re = x.real();
    SeqMatrix y = x_re * sys.c.transpose();
    const Index feed = std::min(sys.output_dim(), sys.input_dim());
    for (Index j = 0; j < feed && j < sys.d.size(); ++j)
        y.col(j) += sys.d(j) * u.col(j);
    return y;
}

/// Streaming (recurrent-mode) inference of the same head, one step at a time.
inline StateTrajectory head_recurrent(const DiagonalSystem& sys, const SeqMatrix& u,
                                      const ComplexVector& x0) {
    if (u.cols() != sys.input_dim())
        throw InvalidArgument("head_recurrent: input width mismatch");
    if (x0.size() != sys.state_dim())
        throw InvalidArgument("head_recurrent: initial state size mismatch");
    const Index l = u.rows();
    const Index n = sys.state_dim();
    const ComplexVector phi = zoh_input_scale(sys.lambda, sys.delta);
    ComplexVector lambda_bar(n);
    for (Index i = 0; i < n; ++i) lambda_bar(i) = std::exp(sys.lambda(i) * sys.delta(i));

    StateTrajectory traj;
    traj.states.resize(l, n);
    traj.outputs.resize(l, sys.output_dim());
    ComplexVector x = x0;
    RealVector p(n);
    RealVector y(sys.output_dim());
    const Index feed = std::min(sys.output_dim(), sys.input_dim());
    for (Index k = 0; k < l; ++k) {
        p.noalias() = sys.b * u.row(k).transpose();
        x.array() *= lambda_bar.array();
        x.array() += phi.array() * p.array().cast<Complex>();
        y.noalias() = sys.c * x.real().matrix();
        for (Index j = 0; j < feed && j < sys.d.size(); ++j) y(j) += sys.d(j) * u(k, j);
        traj.states.row(k) = x;
        traj.outputs.row(k) = y;
    }
    return traj;
}

enum class NormKind { none, batch, layer };
enum class NormPlacement { pre, post };

/// s parallel heads over feature blocks, a mixing projection, and the gate.
struct MultiHeadLayer {
    std::vector<HeadParams> heads;
    RealMatrix mixer_w;  // M x M
    RealVector mixer_b;  // M
    RealMatrix gate_w;   // M x M
    bool bidirectional = false;
    KernelMode kernel_mode = KernelMode::real_part;

    bool apply_gate = true;
    bool apply_residual = true;
    NormKind norm = NormKind::batch;
    NormPlacement norm_placement = NormPlacement::post;

    Index head_count() const { return static_cast<Index>(heads.size()); }
    Index input_dim() const {
        Index h = 0;
        for (const auto& head : heads) h += head.input_dim();
        return h;
    }
    Index state_dim() const {
        Index n = 0;
        for (const auto& head : heads) n += head.state_dim();
        return n;
    }
    Index output_dim() const { return mixer_w.rows(); }
};

/// Builds an s-head layer for total sizes (H, N, M). Heads are seeded
/// independently; the mixer starts at identity and the gate at small noise.
inline MultiHeadLayer make_multi_head_layer(Index h, Index n, Index m, Index s,
                                            std::uint64_t seed, bool bidirectional = false) {
    if (s < 1 || h % s != 0 || n % s != 0 || m % s != 0)
        throw InvalidArgument("make_multi_head_layer: head count must divide H, N and M");
    MultiHeadLayer layer;
    layer.bidirectional = bidirectional;
    layer.heads.reserve(static_cast<std::size_t>(s));
    for (Index j = 0; j < s; ++j)
        layer.heads.push_back(
            head_from_bundle(make_init_bundle(n / s, h / s, m / s, seed + 1000 * static_cast<std::uint64_t>(j))));
    layer.mixer_w = RealMatrix::Identity(m, m);
    layer.mixer_b = RealVector::Zero(m);
    std::mt19937_64 rng(seed + 7);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(m)));
    layer.gate_w.resize(m, m);
    for (Index r = 0; r < m; ++r)
        for (Index col = 0; col < m; ++col) layer.gate_w(r, col) = gauss(rng);
    return layer;
}

/// Splits the input into per-head feature blocks, runs each head, concatenates
/// and mixes: W concat(...) + b.
inline SeqMatrix multi_head_forward(const MultiHeadLayer& layer, const SeqMatrix& u) {
    if (layer.heads.empty()) throw InvalidArgument("multi_head_forward: no heads");
    if (u.cols() != layer.input_dim())
        throw InvalidArgument("multi_head_forward: input width must equal the summed head widths");
    const Index l = u.rows();
    Index m_total = 0;
    for (const auto& head : layer.heads) m_total += head.output_dim();
    if (layer.mixer_w.cols() != m_total || layer.mixer_b.size() != layer.mixer_w.rows())
        throw InvalidArgument("multi_head_forward: mixer shape mismatch");

    SeqMatrix concat(l, m_total);
    Index in_off = 0;
    Index out_off = 0;
    for (const auto& head : layer.heads) {
        const SeqMatrix block = u.middleCols(in_off, head.input_dim());
        concat.middleCols(out_off, head.output_dim()) =
            head_forward(head.system(), block, layer.bidirectional, layer.kernel_mode);
        in_off += head.input_dim();
        out_off += head.output_dim();
    }
    SeqMatrix y = concat * layer.mixer_w.transpose();
    y.rowwise() += layer.mixer_b.transpose();
    return y;
}

inline double gelu(double z) {
    return 0.5 * z * (1.0 + std::erf(z / std::numbers::sqrt2));
}

inline double gelu_grad(double z) {
    const double cdf = 0.5 * (1.0 + std::erf(z / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + z * pdf;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Weighted sigmoid gated unit: g = GELU(y), output g .* sigmoid(W g).
inline SeqMatrix gated_activation(const SeqMatrix& y, const RealMatrix& gate_w) {
    if (gate_w.rows() != y.cols() || gate_w.cols() != y.cols())
        throw InvalidArgument("gated_activation: gate must be M x M");
    SeqMatrix g = y.unaryExpr([](double z) { return gelu(z); });
    SeqMatrix s = (g * gate_w.transpose()).unaryExpr([](double z) { return sigmoid(z); });
    return g.cwiseProduct(s);
}

// Normalization over the time axis (batch flavor) or feature axis (layer
// flavor); affine-free, epsilon 1e-5.
inline constexpr double kNormEpsilon = 1e-5;

inline SeqMatrix batch_norm_time(const SeqMatrix& x) {
    SeqMatrix out(x.rows(), x.cols());
    for (Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        const double var = x.col(c).squaredNorm() / static_cast<double>(x.rows()) - mean * mean;
        out.col(c) = (x.col(c).array() - mean) / std::sqrt(var + kNormEpsilon);
    }
    return out;
}

inline SeqMatrix layer_norm_features(const SeqMatrix& x) {
    SeqMatrix out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = x.row(r).squaredNorm() / static_cast<double>(x.cols()) - mean * mean;
        out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kNormEpsilon);
    }
    return out;
}

inline SeqMatrix apply_norm(const SeqMatrix& x, NormKind kind) {
    switch (kind) {
        case NormKind::batch: return batch_norm_time(x);
        case NormKind::layer: return layer_norm_features(x);
        case NormKind::none: break;
    }
    return x;
}

/// Full layer: multi-head SSM, gate, residual from the layer input, norm
/// before or after the block.
inline SeqMatrix layer_forward(const MultiHeadLayer& layer, const SeqMatrix& u) {
    if (layer.apply_residual && layer.output_dim() != u.cols())
        throw InvalidArgument("layer_forward: residual needs M == H");
    const bool pre = layer.norm_placement == NormPlacement::pre;
    const SeqMatrix core_in = pre ? apply_norm(u, layer.norm) : u;
    SeqMatrix a = multi_head_forward(layer, core_in);
    if (layer.apply_gate) a = gated_activation(a, layer.gate_w);
    SeqMatrix r = layer.apply_residual ? SeqMatrix(u + a) : std::move(a);
    return pre ? r : apply_norm(r, layer.norm);
}

/// Encoder -> layer stack -> mean pool over time -> decoder.
struct DeepModel {
    RealMatrix encoder;  // H x H_in
    std::vector<MultiHeadLayer> layers;
    RealMatrix decoder;  // classes x H
};

inline RealVector deep_forward(const DeepModel& model, const SeqMatrix& u) {
    if (model.encoder.cols() != u.cols())
        throw InvalidArgument("deep_forward: encoder width mismatch");
    SeqMatrix x = u * model.encoder.transpose();
    for (const auto& layer : model.layers) x = layer_forward(layer, x);
    if (model.decoder.cols() != x.cols())
        throw InvalidArgument("deep_forward: decoder width mismatch");
    const RealVector pooled = x.colwise().mean().transpose();
    return model.decoder * pooled;
}

/// Direct sum of per-head systems: the monolithic block-diagonal composite.
inline DiagonalSystem direct_sum(const std::vector<DiagonalSystem>& heads) {
    if (heads.empty()) throw InvalidArgument("direct_sum: no systems");
    Index n = 0, h = 0, m = 0, dlen = 0;
    for (const auto& sys : heads) {
        n += sys.state_dim();
        h += sys.input_dim();
        m += sys.output_dim();
        dlen += sys.d.size();
    }
    DiagonalSystem out;
    out.lambda.resize(n);
    out.b = RealMatrix::Zero(n, h);
    out.c = RealMatrix::Zero(m, n);
    out.d = RealVector::Zero(std::min(m, h));
    out.delta.resize(n);
    Index no = 0, ho = 0, mo = 0;
    for (const auto& sys : heads) {
        out.lambda.segment(no, sys.state_dim()) = sys.lambda;
        out.delta.segment(no, sys.state_dim()) = sys.delta;
        out.b.block(no, ho, sys.state_dim(), sys.input_dim()) = sys.b;
        out.c.block(mo, no, sys.output_dim(), sys.state_dim()) = sys.c;
        no += sys.state_dim();
        ho += sys.input_dim();
        mo += sys.output_dim();
    }
    // The composite feedthrough is diagonal only when every head has m == h;
    // heads place their d on their own leading channels.
    Index dho = 0, dmo = 0;
    for (const auto& sys : heads) {
        for (Index j = 0; j < sys.d.size(); ++j) {
            Index mi = dmo + j;
            Index hi = dho + j;
            if (mi < out.d.size() && mi == hi) out.d(mi) = sys.d(j);
        }
        dho += sys.input_dim();
        dmo += sys.output_dim();
    }
    return out;
}

struct ParamCountConfig {
    Index h = 64;
    Index n = 64;
    Index m = 64;
    Index s = 1;
    bool bidirectional = false;
};

struct ParamBreakdown {
    long long lambda = 0;
    long long b = 0;
    long long c = 0;
    long long d = 0;
    long long delta = 0;
    long long mixer = 0;
    long long gate = 0;

    long long total() const { return lambda + b + c + d + delta + mixer + gate; }
};

/// Parameter accounting. Block diagonalization shrinks the B and C blocks by
/// a factor of s; the bidirectional flag adds nothing.
inline ParamBreakdown count_params(const ParamCountConfig& cfg) {
    if (cfg.s < 1 || cfg.h % cfg.s != 0 || cfg.n % cfg.s != 0 || cfg.m % cfg.s != 0)
        throw InvalidArgument("count_params: head count must divide H, N and M");
    ParamBreakdown out;
    out.lambda = 2 * cfg.n;
    out.b = cfg.n * cfg.h / cfg.s;
    out.c = cfg.m * cfg.n / cfg.s;
    out.d = std::min(cfg.m, cfg.h);
    out.delta = cfg.n;
    out.mixer = cfg.m * cfg.m + cfg.m;
    out.gate = cfg.m * cfg.m;
    return out;
}

}  // namespace essm
