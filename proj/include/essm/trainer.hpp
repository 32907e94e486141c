#pragma once

#include "essm/errors.hpp"
#include "essm/fft.hpp"
#include "essm/layer.hpp"
#include "essm/ssm_core.hpp"
#include "essm/types.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace essm {

struct HeadGrads {
    RealVector raw_real;
    RealVector imag;
    RealMatrix b;
    RealMatrix c;
    RealVector d;
    RealVector delta;
};

struct GradBundle {
    std::vector<HeadGrads> heads;
    RealMatrix mixer_w;
    RealVector mixer_b;
    RealMatrix gate_w;
};

inline GradBundle zero_grads(const MultiHeadLayer& layer) {
    GradBundle g;
    g.heads.resize(layer.heads.size());
    for (std::size_t j = 0; j < layer.heads.size(); ++j) {
        const HeadParams& head = layer.heads[j];
        g.heads[j].raw_real = RealVector::Zero(head.state_dim());
        g.heads[j].imag = RealVector::Zero(head.state_dim());
        g.heads[j].b = RealMatrix::Zero(head.b.rows(), head.b.cols());
        g.heads[j].c = RealMatrix::Zero(head.c.rows(), head.c.cols());
        g.heads[j].d = RealVector::Zero(head.d.size());
        g.heads[j].delta = RealVector::Zero(head.delta.size());
    }
    g.mixer_w = RealMatrix::Zero(layer.mixer_w.rows(), layer.mixer_w.cols());
    g.mixer_b = RealVector::Zero(layer.mixer_b.size());
    g.gate_w = RealMatrix::Zero(layer.gate_w.rows(), layer.gate_w.cols());
    return g;
}

/// Visits every trainable tensor of the layer paired with its slot in a
/// GradBundle, in a fixed order. f(name, tensor, grad_tensor).
template <typename LayerT, typename BundleT, typename F>
void zip_params(LayerT& layer, BundleT& grads, F&& f) {
    for (std::size_t j = 0; j < layer.heads.size(); ++j) {
        const std::string p = "head" + std::to_string(j) + ".";
        f(p + "raw_real", layer.heads[j].spectrum.raw_real, grads.heads[j].raw_real);
        f(p + "imag", layer.heads[j].spectrum.imag, grads.heads[j].imag);
        f(p + "b", layer.heads[j].b, grads.heads[j].b);
        f(p + "c", layer.heads[j].c, grads.heads[j].c);
        f(p + "d", layer.heads[j].d, grads.heads[j].d);
        f(p + "delta", layer.heads[j].delta, grads.heads[j].delta);
    }
    f(std::string("mixer_w"), layer.mixer_w, grads.mixer_w);
    f(std::string("mixer_b"), layer.mixer_b, grads.mixer_b);
    f(std::string("gate_w"), layer.gate_w, grads.gate_w);
}

inline void accumulate_grads(GradBundle& dst, const GradBundle& src, double scale) {
    for (std::size_t j = 0; j < dst.heads.size(); ++j) {
        dst.heads[j].raw_real += scale * src.heads[j].raw_real;
        dst.heads[j].imag += scale * src.heads[j].imag;
        dst.heads[j].b += scale * src.heads[j].b;
        dst.heads[j].c += scale * src.heads[j].c;
        dst.heads[j].d += scale * src.heads[j].d;
        dst.heads[j].delta += scale * src.heads[j].delta;
    }
    dst.mixer_w += scale * src.mixer_w;
    dst.mixer_b += scale * src.mixer_b;
    dst.gate_w += scale * src.gate_w;
}

inline double mse_loss(const SeqMatrix& pred, const SeqMatrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw InvalidArgument("mse_loss: shape mismatch");
    return (pred - target).squaredNorm() /
           static_cast<double>(pred.rows() * pred.cols());
}

namespace detail {

/// Columnwise linear convolution: out(:, i) = a(:, i) * b(:, i), length
/// la + lb - 1. Direct for short sequences, FFT otherwise.
inline SeqMatrix linear_conv_cols(const SeqMatrix& a, const SeqMatrix& b) {
    if (a.cols() != b.cols()) throw InvalidArgument("linear_conv_cols: column mismatch");
    const Index la = a.rows(), lb = b.rows(), n = a.cols();
    const Index lo = la + lb - 1;
    if (la + lb <= 128) {
        SeqMatrix out = SeqMatrix::Zero(lo, n);
        for (Index i = 0; i < n; ++i)
            for (Index r = 0; r < la; ++r)
                for (Index s = 0; s < lb; ++s) out(r + s, i) += a(r, i) * b(s, i);
        return out;
    }
    const Index fft_len = next_pow2(lo);
    const FftPlan plan(fft_len);
    ComplexSeqMatrix fa = ComplexSeqMatrix::Zero(fft_len, n);
    ComplexSeqMatrix fb = ComplexSeqMatrix::Zero(fft_len, n);
    fa.topRows(la) = a.cast<Complex>();
    fb.topRows(lb) = b.cast<Complex>();
    fft_rows(fa, plan, false);
    fft_rows(fb, plan, false);
    fa.array() *= fb.array();
    fft_rows(fa, plan, true);
    return fa.topRows(lo).real();
}

inline SeqMatrix reverse_rows(const SeqMatrix& m) { return m.colwise().reverse(); }

/// First L rows of the columnwise linear convolution (causal response).
inline SeqMatrix causal_conv(const SeqMatrix& k, const SeqMatrix& p) {
    return linear_conv_cols(k, p).topRows(p.rows());
}

struct HeadCache {
    SeqMatrix u_block;      // core input slice, L x h
    RealVector rho;         // enforced -Re(lambda)
    ComplexVector lambda;
    ComplexVector lambda_bar;
    ComplexVector dphi;     // phi'(lambda), complex derivative
    RealVector g;           // Re(phi)
    SeqMatrix kern_re;      // Re(lambda_bar^k), L x n
    SeqMatrix kern_im;      // Im(lambda_bar^k)
    SeqMatrix proj;         // u_block * b^T
    SeqMatrix scaled;       // proj scaled by g
    SeqMatrix states;       // conv output (real part arithmetic throughout)
};

struct ForwardCache {
    SeqMatrix core_in;      // input to heads (u, or norm(u) under pre-norm)
    std::vector<HeadCache> heads;
    SeqMatrix concat;       // L x M, head outputs before the mixer
    SeqMatrix mixed;        // after mixer
    SeqMatrix gate_g;       // GELU(mixed)
    SeqMatrix gate_s;       // sigmoid(gate_g * gate_w^T)
    SeqMatrix pre_norm_arg; // residual sum fed into a post-norm
    SeqMatrix out;
};

/// Real-arithmetic forward mirroring layer_forward for real-part kernel mode,
/// keeping every intermediate needed by the backward pass.
inline ForwardCache forward_with_cache(const MultiHeadLayer& layer, const SeqMatrix& u) {
    if (layer.kernel_mode != KernelMode::real_part)
        throw InvalidArgument("analytic_grad: layer must use real-part kernel mode");
    if (layer.apply_residual && layer.output_dim() != u.cols())
        throw InvalidArgument("analytic_grad: residual needs M == H");
    const Index l = u.rows();
    ForwardCache cache;
    const bool pre = layer.norm_placement == NormPlacement::pre;
    cache.core_in = pre ? apply_norm(u, layer.norm) : u;

    Index m_total = 0;
    for (const auto& head : layer.heads) m_total += head.output_dim();
    cache.concat.resize(l, m_total);
    cache.heads.resize(layer.heads.size());

    Index in_off = 0, out_off = 0;
    for (std::size_t j = 0; j < layer.heads.size(); ++j) {
        const HeadParams& head = layer.heads[j];
        HeadCache& hc = cache.heads[j];
        const Index n = head.state_dim();
        hc.u_block = cache.core_in.middleCols(in_off, head.input_dim());
        hc.rho.resize(n);
        hc.lambda.resize(n);
        hc.lambda_bar.resize(n);
        hc.dphi.resize(n);
        hc.g.resize(n);
        for (Index i = 0; i < n; ++i) {
            hc.rho(i) = std::max(head.spectrum.raw_real(i), head.spectrum.floor);
            hc.lambda(i) = Complex(-hc.rho(i), head.spectrum.imag(i));
            const double dt = head.delta(i);
            if (!(dt > 0.0)) throw InvalidArgument("analytic_grad: delta must be positive");
            hc.lambda_bar(i) = std::exp(hc.lambda(i) * dt);
            const Complex phi = (hc.lambda_bar(i) - 1.0) / hc.lambda(i);
            hc.g(i) = phi.real();
            hc.dphi(i) = (dt * hc.lambda_bar(i) - phi) / hc.lambda(i);
        }
        hc.kern_re.resize(l, n);
        hc.kern_im.resize(l, n);
        ComplexVector pow_acc = ComplexVector::Ones(n);
        for (Index k = 0; k < l; ++k) {
            for (Index i = 0; i < n; ++i) {
                hc.kern_re(k, i) = pow_acc(i).real();
                hc.kern_im(k, i) = pow_acc(i).imag();
            }
            pow_acc.array() *= hc.lambda_bar.array();
        }
        hc.proj = hc.u_block * head.b.transpose();
        hc.scaled = hc.proj * hc.g.asDiagonal();
        hc.states = causal_conv(hc.kern_re, hc.scaled);
        if (layer.bidirectional)
            hc.states += reverse_rows(causal_conv(hc.kern_re, reverse_rows(hc.scaled)));

        SeqMatrix y = hc.states * head.c.transpose();
        const Index feed = std::min(head.output_dim(), head.input_dim());
        for (Index ch = 0; ch < feed && ch < head.d.size(); ++ch)
            y.col(ch) += head.d(ch) * hc.u_block.col(ch);
        cache.concat.middleCols(out_off, head.output_dim()) = y;
        in_off += head.input_dim();
        out_off += head.output_dim();
    }

    cache.mixed = cache.concat * layer.mixer_w.transpose();
    cache.mixed.rowwise() += layer.mixer_b.transpose();

    SeqMatrix activated;
    if (layer.apply_gate) {
        cache.gate_g = cache.mixed.unaryExpr([](double z) { return gelu(z); });
        cache.gate_s = (cache.gate_g * layer.gate_w.transpose())
                           .unaryExpr([](double z) { return sigmoid(z); });
        activated = cache.gate_g.cwiseProduct(cache.gate_s);
    } else {
        activated = cache.mixed;
    }
    SeqMatrix summed = layer.apply_residual ? SeqMatrix(u + activated) : std::move(activated);
    if (!pre) {
        cache.pre_norm_arg = summed;
        cache.out = apply_norm(summed, layer.norm);
    } else {
        cache.out = std::move(summed);
    }
    return cache;
}

/// Backward through an affine-free normalization given its input.
inline SeqMatrix norm_backward(const SeqMatrix& dout, const SeqMatrix& x, NormKind kind) {
    if (kind == NormKind::none) return dout;
    SeqMatrix dx(x.rows(), x.cols());
    if (kind == NormKind::batch) {
        const double len = static_cast<double>(x.rows());
        for (Index c = 0; c < x.cols(); ++c) {
            const double mean = x.col(c).mean();
            const double var = x.col(c).squaredNorm() / len - mean * mean;
            const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
            const RealVector xh = (x.col(c).array() - mean).matrix() * inv;
            const double dmean = dout.col(c).mean();
            const double dproj = dout.col(c).dot(xh) / len;
            dx.col(c) = inv * (dout.col(c).array() - dmean - xh.array() * dproj);
        }
    } else {
        const double len = static_cast<double>(x.cols());
        for (Index r = 0; r < x.rows(); ++r) {
            const double mean = x.row(r).mean();
            const double var = x.row(r).squaredNorm() / len - mean * mean;
            const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
            const Eigen::RowVectorXd xh = (x.row(r).array() - mean).matrix() * inv;
            const double dmean = dout.row(r).mean();
            const double dproj = dout.row(r).dot(xh) / len;
            dx.row(r) = inv * (dout.row(r).array() - dmean - xh.array() * dproj);
        }
    }
    return dx;
}

}  // namespace detail

/// Exact reverse-mode gradients of mse_loss(layer_forward(layer, u), target)
/// for every trainable tensor. The convolution is differentiated through its
/// adjoint (correlation); ZOH enters through exp(lambda delta) and the phi
/// factor; the stability clip contributes zero on the clipped branch.
inline std::pair<double, GradBundle> analytic_grad(const MultiHeadLayer& layer,
                                                   const SeqMatrix& u, const SeqMatrix& target) {
    using namespace detail;
    const ForwardCache cache = forward_with_cache(layer, u);
    if (!cache.out.allFinite())
        throw NumericFailure("analytic_grad: non-finite forward intermediate");
    const double loss = mse_loss(cache.out, target);
    const Index l = u.rows();
    GradBundle grads = zero_grads(layer);

    SeqMatrix dout =
        2.0 * (cache.out - target) / static_cast<double>(cache.out.rows() * cache.out.cols());
    const bool pre = layer.norm_placement == NormPlacement::pre;
    SeqMatrix dsum = pre ? std::move(dout)
                         : norm_backward(dout, cache.pre_norm_arg, layer.norm);

    // Residual: the u branch carries no trainable parameters.
    SeqMatrix dmixed;
    if (layer.apply_gate) {
        const SeqMatrix& g = cache.gate_g;
        const SeqMatrix& s = cache.gate_s;
        SeqMatrix dg = dsum.cwiseProduct(s);
        const SeqMatrix dpre =
            dsum.cwiseProduct(g).cwiseProduct(s).cwiseProduct((1.0 - s.array()).matrix());
        grads.gate_w = dpre.transpose() * g;
        dg += dpre * layer.gate_w;
        dmixed = dg.cwiseProduct(
            cache.mixed.unaryExpr([](double z) { return gelu_grad(z); }));
    } else {
        dmixed = std::move(dsum);
    }

    grads.mixer_w = dmixed.transpose() * cache.concat;
    grads.mixer_b = dmixed.colwise().sum().transpose();
    const SeqMatrix dconcat = dmixed * layer.mixer_w;

    RealVector step_weights(l);
    for (Index k = 0; k < l; ++k) step_weights(k) = static_cast<double>(k);

    Index out_off = 0;
    for (std::size_t j = 0; j < layer.heads.size(); ++j) {
        const HeadParams& head = layer.heads[j];
        const HeadCache& hc = cache.heads[j];
        HeadGrads& hg = grads.heads[j];
        const Index n = head.state_dim();

        const SeqMatrix dy = dconcat.middleCols(out_off, head.output_dim());
        out_off += head.output_dim();

        hg.c = dy.transpose() * hc.states;
        const Index feed = std::min(head.output_dim(), head.input_dim());
        for (Index ch = 0; ch < feed && ch < head.d.size(); ++ch)
            hg.d(ch) = dy.col(ch).dot(hc.u_block.col(ch));

        const SeqMatrix dstates = dy * head.c;

        // Adjoint of the causal convolution: correlations realized as
        // convolutions against reversed sequences.
        const SeqMatrix dstates_rev = reverse_rows(dstates);
        SeqMatrix dkern = reverse_rows(causal_conv(hc.scaled, dstates_rev));
        SeqMatrix dscaled = reverse_rows(causal_conv(hc.kern_re, dstates_rev));
        if (layer.bidirectional) {
            dkern += reverse_rows(causal_conv(reverse_rows(hc.scaled), dstates));
            dscaled += causal_conv(hc.kern_re, dstates);
        }

        const RealVector dg =
            dscaled.cwiseProduct(hc.proj).colwise().sum().transpose();
        const SeqMatrix dproj = dscaled * hc.g.asDiagonal();
        hg.b = dproj.transpose() * hc.u_block;

        // Kernel entries are e^{-k a} cos(k beta) with a = rho*delta and
        // beta = imag*delta, so dK/da = -k*Re and dK/dbeta = -k*Im.
        const RealVector da =
            -(dkern.cwiseProduct(hc.kern_re).transpose() * step_weights);
        const RealVector dbeta =
            -(dkern.cwiseProduct(hc.kern_im).transpose() * step_weights);

        for (Index i = 0; i < n; ++i) {
            const double dt = head.delta(i);
            double drho = da(i) * dt - dg(i) * hc.dphi(i).real();
            double dq = dbeta(i) * dt - dg(i) * hc.dphi(i).imag();
            double ddt = da(i) * hc.rho(i) + dbeta(i) * head.spectrum.imag(i) +
                         dg(i) * hc.lambda_bar(i).real();
            hg.raw_real(i) =
                head.spectrum.raw_real(i) > head.spectrum.floor ? drho : 0.0;
            hg.imag(i) = dq;
            hg.delta(i) = ddt;
        }
    }
    return {loss, std::move(grads)};
}

struct TrainConfig {
    int steps = 500;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    double fd_epsilon = 1e-5;
    Index seq_len = 128;
};

/// Central finite differences of loss_fn over every scalar parameter.
inline GradBundle finite_diff_grad(const std::function<double(const MultiHeadLayer&)>& loss_fn,
                                   const MultiHeadLayer& layer, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("finite_diff_grad: epsilon must be positive");
    MultiHeadLayer work = layer;
    GradBundle grads = zero_grads(layer);
    zip_params(work, grads, [&](const std::string&, auto& tensor, auto& gtensor) {
        double* values = tensor.data();
        double* slots = gtensor.data();
        const Index count = tensor.size();
        for (Index i = 0; i < count; ++i) {
            const double saved = values[i];
            values[i] = saved + epsilon;
            const double hi = loss_fn(work);
            values[i] = saved - epsilon;
            const double lo = loss_fn(work);
            values[i] = saved;
            slots[i] = (hi - lo) / (2.0 * epsilon);
        }
    });
    return grads;
}

/// Moves raw spectrum entries off the clip kink so central differences do not
/// straddle the non-differentiable point.
inline void nudge_off_clip_boundary(MultiHeadLayer& layer, double margin) {
    for (auto& head : layer.heads)
        for (Index i = 0; i < head.spectrum.raw_real.size(); ++i)
            if (std::abs(head.spectrum.raw_real(i) - head.spectrum.floor) < margin)
                head.spectrum.raw_real(i) = head.spectrum.floor + margin;
}

struct TensorCheck {
    std::string name;
    double rel_error = 0.0;
};

/// Visits every tensor of a bundle with a stable name.
template <typename F>
void for_each_grad_tensor(const GradBundle& g, F&& f) {
    for (std::size_t j = 0; j < g.heads.size(); ++j) {
        const std::string p = "head" + std::to_string(j) + ".";
        f(p + "raw_real", g.heads[j].raw_real.data(), g.heads[j].raw_real.size());
        f(p + "imag", g.heads[j].imag.data(), g.heads[j].imag.size());
        f(p + "b", g.heads[j].b.data(), g.heads[j].b.size());
        f(p + "c", g.heads[j].c.data(), g.heads[j].c.size());
        f(p + "d", g.heads[j].d.data(), g.heads[j].d.size());
        f(p + "delta", g.heads[j].delta.data(), g.heads[j].delta.size());
    }
    f(std::string("mixer_w"), g.mixer_w.data(), g.mixer_w.size());
    f(std::string("mixer_b"), g.mixer_b.data(), g.mixer_b.size());
    f(std::string("gate_w"), g.gate_w.data(), g.gate_w.size());
}

/// Per-tensor relative error between two bundles: max abs difference over the
/// larger of the two tensors' max magnitudes. The denominator is floored so a
/// tensor that vanishes on both sides (up to finite-difference noise) compares
/// equal instead of amplifying the noise.
inline std::vector<TensorCheck> compare_grads(const GradBundle& a, const GradBundle& b) {
    std::vector<std::pair<const double*, Index>> rhs;
    for_each_grad_tensor(b, [&](const std::string&, const double* data, Index size) {
        rhs.emplace_back(data, size);
    });
    std::vector<TensorCheck> checks;
    std::size_t slot = 0;
    for_each_grad_tensor(a, [&](const std::string& name, const double* data, Index size) {
        const double* other = rhs[slot].first;
        if (rhs[slot].second != size)
            throw InvalidArgument("compare_grads: bundle shapes differ");
        ++slot;
        double diff = 0.0, mag = 0.0;
        for (Index i = 0; i < size; ++i) {
            diff = std::max(diff, std::abs(data[i] - other[i]));
            mag = std::max({mag, std::abs(data[i]), std::abs(other[i])});
        }
        checks.push_back({name, diff / std::max(mag, 1e-6)});
    });
    return checks;
}

/// Configures a layer so its forward is the bare multi-head SSM + mixer (the
/// same function family as a DiagonalSystem teacher).
inline MultiHeadLayer make_system_id_student(Index h, Index n, Index m, std::uint64_t seed) {
    MultiHeadLayer student = make_multi_head_layer(h, n, m, 1, seed);
    student.apply_gate = false;
    student.apply_residual = false;
    student.norm = NormKind::none;
    return student;
}

// Lower bound keeping trained step sizes inside the ZOH-feasible region.
inline constexpr double kDeltaFloor = 1e-5;

/// Gradient descent fitting a student layer to a stable teacher system on a
/// fixed batch of random input sequences. Returns the per-step losses.
inline std::vector<double> fit_system_id(const DiagonalSystem& teacher, MultiHeadLayer& student,
                                         const TrainConfig& cfg) {
    if (cfg.steps < 1) throw InvalidArgument("fit_system_id: steps must be >= 1");
    for (Index i = 0; i < teacher.lambda.size(); ++i)
        if (!(teacher.lambda(i).real() < 0.0))
            throw InvalidArgument("fit_system_id: teacher must be stable");
    if (student.input_dim() != teacher.input_dim() ||
        student.output_dim() != teacher.output_dim())
        throw InvalidArgument("fit_system_id: student/teacher size mismatch");

    constexpr int kBatch = 4;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<SeqMatrix> inputs;
    std::vector<SeqMatrix> targets;
    for (int s = 0; s < kBatch; ++s) {
        SeqMatrix u(cfg.seq_len, teacher.input_dim());
        for (Index r = 0; r < u.rows(); ++r)
            for (Index c = 0; c < u.cols(); ++c) u(r, c) = gauss(rng);
        inputs.push_back(u);
        targets.push_back(head_forward(teacher, u, false, KernelMode::real_part));
    }

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(cfg.steps));
    for (int step = 0; step < cfg.steps; ++step) {
        double total = 0.0;
        GradBundle acc = zero_grads(student);
        for (int s = 0; s < kBatch; ++s) {
            auto [loss, grads] = analytic_grad(student, inputs[static_cast<std::size_t>(s)],
                                               targets[static_cast<std::size_t>(s)]);
            total += loss / kBatch;
            accumulate_grads(acc, grads, 1.0 / kBatch);
        }
        if (!std::isfinite(total) || total > 1e6)
            throw TrainingDiverged("fit_system_id: loss exceeded divergence threshold");
        losses.push_back(total);
        zip_params(student, acc, [&](const std::string&, auto& tensor, auto& g) {
            tensor -= cfg.learning_rate * g;
        });
        // Projected step: ZOH needs strictly positive step sizes.
        for (auto& head : student.heads)
            head.delta = head.delta.cwiseMax(kDeltaFloor);
    }
    return losses;
}

}  // namespace essm
