#include "essm/harness.hpp"
#include "essm/trainer.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace essm;
using Catch::Matchers::WithinAbs;

namespace {

SeqMatrix random_seq(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SeqMatrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) m(r, c) = gauss(rng);
    return m;
}

double worst_rel_error(const MultiHeadLayer& layer, const SeqMatrix& u, const SeqMatrix& target,
                       std::string* which = nullptr) {
    const auto [loss, analytic] = analytic_grad(layer, u, target);
    (void)loss;
    const GradBundle fd = finite_diff_grad(
        [&](const MultiHeadLayer& candidate) {
            return mse_loss(layer_forward(candidate, u), target);
        },
        layer, 1e-5);
    double worst = 0.0;
    for (const TensorCheck& chk : compare_grads(analytic, fd)) {
        if (chk.rel_error > worst) {
            worst = chk.rel_error;
            if (which) *which = chk.name;
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("mse loss") {
    CHECK(mse_loss(SeqMatrix::Ones(3, 2), SeqMatrix::Ones(3, 2)) == 0.0);
    CHECK_THAT(mse_loss(SeqMatrix::Ones(3, 2), SeqMatrix::Zero(3, 2)), WithinAbs(1.0, 1e-15));
    SeqMatrix pred(1, 2), target(1, 2);
    pred << 0.0, 0.0;
    target << 3.0, 4.0;
    CHECK_THAT(mse_loss(pred, target), WithinAbs(12.5, 1e-15));
    CHECK_THROWS_AS(mse_loss(SeqMatrix::Zero(2, 2), SeqMatrix::Zero(3, 2)), InvalidArgument);
}

TEST_CASE("finite differences on simple functionals") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 0);
    layer.mixer_b(0) = 3.0;
    SECTION("quadratic in one parameter") {
        const GradBundle g = finite_diff_grad(
            [](const MultiHeadLayer& l) { return l.mixer_b(0) * l.mixer_b(0); }, layer, 1e-5);
        CHECK_THAT(g.mixer_b(0), WithinAbs(6.0, 1e-6));
    }
    SECTION("constant loss") {
        const GradBundle g =
            finite_diff_grad([](const MultiHeadLayer&) { return 1.25; }, layer, 1e-5);
        double mx = 0.0;
        for_each_grad_tensor(g, [&](const std::string&, const double* d, Index n) {
            for (Index i = 0; i < n; ++i) mx = std::max(mx, std::abs(d[i]));
        });
        CHECK(mx <= 1e-9);
    }
    SECTION("epsilon must be positive") {
        CHECK_THROWS_AS(finite_diff_grad([](const MultiHeadLayer&) { return 0.0; }, layer, 0.0),
                        InvalidArgument);
    }
}

TEST_CASE("analytic loss matches the public forward") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 7);
    const SeqMatrix u = random_seq(8, 2, 8);
    const SeqMatrix target = random_seq(8, 2, 9);
    const auto [loss, grads] = analytic_grad(layer, u, target);
    (void)grads;
    CHECK_THAT(loss, WithinAbs(mse_loss(layer_forward(layer, u), target), 1e-12));
}

TEST_CASE("analytic gradients match finite differences across configurations") {
    int instance = 0;
    double worst_overall = 0.0;
    std::string worst_name;
    for (Index s : {Index{1}, Index{2}}) {
        for (bool bidir : {false, true}) {
            for (bool gate : {true, false}) {
                for (NormKind norm : {NormKind::none, NormKind::batch, NormKind::layer}) {
                    for (NormPlacement place : {NormPlacement::post, NormPlacement::pre}) {
                        MultiHeadLayer layer = make_multi_head_layer(
                            s == 1 ? 2 : 4, s == 1 ? 2 : 4, s == 1 ? 2 : 4, s,
                            100 + static_cast<std::uint64_t>(instance), bidir);
                        layer.apply_gate = gate;
                        layer.norm = norm;
                        layer.norm_placement = place;
                        nudge_off_clip_boundary(layer, 1e-3);
                        const Index width = layer.input_dim();
                        const SeqMatrix u =
                            random_seq(8, width, 200 + static_cast<std::uint64_t>(instance));
                        const SeqMatrix target =
                            random_seq(8, width, 300 + static_cast<std::uint64_t>(instance));
                        std::string name;
                        const double worst = worst_rel_error(layer, u, target, &name);
                        CAPTURE(s, bidir, gate, static_cast<int>(norm), static_cast<int>(place),
                                name);
                        CHECK(worst <= 1e-4);
                        if (worst > worst_overall) {
                            worst_overall = worst;
                            worst_name = name;
                        }
                        ++instance;
                    }
                }
            }
        }
    }
    INFO("worst tensor " << worst_name << " rel " << worst_overall << " over " << instance
                         << " instances");
    CHECK(instance >= 48);
    CHECK(worst_overall <= 1e-4);
}

TEST_CASE("gradient flows to C before B when C is zero") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 17);
    layer.heads[0].c.setZero();
    layer.apply_gate = false;
    layer.apply_residual = false;
    layer.norm = NormKind::none;
    const SeqMatrix u = random_seq(8, 2, 18);
    const SeqMatrix target = random_seq(8, 2, 19);
    const auto [loss, grads] = analytic_grad(layer, u, target);
    (void)loss;
    CHECK(grads.heads[0].c.cwiseAbs().maxCoeff() > 1e-8);
    CHECK(grads.heads[0].b.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("zero input and zero target sit at a stationary point") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 23);
    const auto [loss, grads] = analytic_grad(layer, SeqMatrix::Zero(8, 2), SeqMatrix::Zero(8, 2));
    CHECK(loss == 0.0);
    double mx = 0.0;
    for_each_grad_tensor(grads, [&](const std::string&, const double* d, Index n) {
        for (Index i = 0; i < n; ++i) mx = std::max(mx, std::abs(d[i]));
    });
    CHECK(mx == 0.0);
}

TEST_CASE("delta gradient in isolation matches finite differences") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 29);
    layer.apply_gate = false;
    nudge_off_clip_boundary(layer, 1e-3);
    const SeqMatrix u = random_seq(8, 2, 30);
    const SeqMatrix target = random_seq(8, 2, 31);
    const auto [loss, grads] = analytic_grad(layer, u, target);
    (void)loss;
    const double eps = 1e-6;
    for (Index i = 0; i < 2; ++i) {
        MultiHeadLayer up = layer, dn = layer;
        up.heads[0].delta(i) += eps;
        dn.heads[0].delta(i) -= eps;
        const double fd = (mse_loss(layer_forward(up, u), target) -
                           mse_loss(layer_forward(dn, u), target)) /
                          (2.0 * eps);
        CHECK_THAT(grads.heads[0].delta(i), WithinAbs(fd, 1e-4 * std::max(1.0, std::abs(fd))));
    }
}

TEST_CASE("analytic_grad requires the real-part kernel mode") {
    MultiHeadLayer layer = make_multi_head_layer(2, 2, 2, 1, 37);
    layer.kernel_mode = KernelMode::full_complex;
    CHECK_THROWS_AS(analytic_grad(layer, SeqMatrix::Zero(4, 2), SeqMatrix::Zero(4, 2)),
                    InvalidArgument);
}

TEST_CASE("system id fixed point and determinism") {
    const harness::DemoSetup demo = harness::make_train_demo(3);
    SECTION("student at teacher parameters stays put at lr = 0") {
        MultiHeadLayer student = make_system_id_student(4, 4, 4, 3);
        student.heads[0].spectrum.raw_real = -demo.teacher.lambda.real();
        student.heads[0].spectrum.imag = demo.teacher.lambda.imag();
        student.heads[0].b = demo.teacher.b;
        student.heads[0].c = demo.teacher.c;
        student.heads[0].d = demo.teacher.d;
        student.heads[0].delta = demo.teacher.delta;
        const MultiHeadLayer before = student;
        TrainConfig cfg;
        cfg.steps = 20;
        cfg.learning_rate = 0.0;
        cfg.seed = 3;
        const std::vector<double> losses = fit_system_id(demo.teacher, student, cfg);
        for (double loss : losses) CHECK(loss <= 1e-12);
        double drift = 0.0;
        drift = std::max(drift, (student.heads[0].b - before.heads[0].b).cwiseAbs().maxCoeff());
        drift = std::max(drift, (student.heads[0].delta - before.heads[0].delta)
                                    .cwiseAbs()
                                    .maxCoeff());
        drift = std::max(drift,
                         (student.mixer_w - before.mixer_w).cwiseAbs().maxCoeff());
        CHECK(drift <= 1e-6);
    }
    SECTION("same seed twice gives identical trajectories") {
        harness::DemoSetup a = harness::make_train_demo(5);
        harness::DemoSetup b = harness::make_train_demo(5);
        a.cfg.steps = 25;
        b.cfg.steps = 25;
        const std::vector<double> la = fit_system_id(a.teacher, a.student, a.cfg);
        const std::vector<double> lb = fit_system_id(b.teacher, b.student, b.cfg);
        REQUIRE(la.size() == lb.size());
        for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
    }
}

TEST_CASE("system id reduces the loss by 10x at the default config") {
    harness::DemoSetup demo = harness::make_train_demo(0);
    const std::vector<double> losses = fit_system_id(demo.teacher, demo.student, demo.cfg);
    REQUIRE(losses.size() == 500);
    CHECK(losses.back() / losses.front() <= 0.1);
    for (const auto& head : demo.student.heads) {
        const DiagonalSystem sys = head.system();
        for (Index i = 0; i < sys.state_dim(); ++i) CHECK(sys.lambda(i).real() <= -1e-3);
        CHECK(head.delta.minCoeff() > 0.0);
    }
}

TEST_CASE("training diverges loudly at an absurd learning rate") {
    harness::DemoSetup demo = harness::make_train_demo(9);
    demo.cfg.learning_rate = 1e9;
    demo.cfg.steps = 50;
    CHECK_THROWS_AS(fit_system_id(demo.teacher, demo.student, demo.cfg), TrainingDiverged);
}
