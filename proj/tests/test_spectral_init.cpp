#include "essm/spectral_init.hpp"

#include <Eigen/Eigenvalues>
#include <catch2/catch_amalgamated.hpp>

using namespace essm;

TEST_CASE("hippo normal matrix small cases") {
    const RealMatrix a1 = hippo_normal_matrix(1);
    REQUIRE(a1.rows() == 1);
    CHECK(a1(0, 0) == -0.5);

    const RealMatrix a2 = hippo_normal_matrix(2);
    CHECK(a2(0, 0) == -0.5);
    CHECK(a2(1, 1) == -0.5);
    CHECK_THAT(a2(0, 1), Catch::Matchers::WithinAbs(0.8660254, 1e-7));
    CHECK_THAT(a2(1, 0), Catch::Matchers::WithinAbs(-0.8660254, 1e-7));

    const RealMatrix a3 = hippo_normal_matrix(3);
    CHECK_THAT(a3(2, 0), Catch::Matchers::WithinAbs(-1.1180340, 1e-7));
}

TEST_CASE("hippo normal matrix rejects zero dimension") {
    CHECK_THROWS_AS(hippo_normal_matrix(0), InvalidArgument);
}

TEST_CASE("hippo normal structure for n up to 16") {
    for (Index n = 1; n <= 16; ++n) {
        const RealMatrix a = hippo_normal_matrix(n);
        for (Index r = 0; r < n; ++r) {
            CHECK(a(r, r) == -0.5);
            for (Index c = 0; c < n; ++c) {
                if (r == c) continue;
                CHECK(a(r, c) == -a(c, r));
                const double mag = std::sqrt((double(r) + 0.5) * (double(c) + 0.5));
                CHECK_THAT(std::abs(a(r, c)), Catch::Matchers::WithinRel(mag, 1e-14));
            }
        }
    }
}

TEST_CASE("spectrum real parts sit at -1/2 (independent general eigensolver)") {
    for (Index n = 1; n <= 16; ++n) {
        Eigen::EigenSolver<RealMatrix> solver(hippo_normal_matrix(n));
        REQUIRE(solver.info() == Eigen::Success);
        for (Index i = 0; i < n; ++i)
            CHECK_THAT(solver.eigenvalues()(i).real(), Catch::Matchers::WithinAbs(-0.5, 1e-9));
    }
}

TEST_CASE("hippo eigen init") {
    const SpectrumInit one = hippo_eigen_init(1);
    CHECK(one.lambda(0) == Complex(-0.5, 0.0));

    const SpectrumInit two = hippo_eigen_init(2);
    CHECK_THAT(two.lambda(0).imag(), Catch::Matchers::WithinAbs(-0.8660254, 1e-7));
    CHECK_THAT(two.lambda(1).imag(), Catch::Matchers::WithinAbs(0.8660254, 1e-7));
    CHECK_THAT(two.lambda(0).real(), Catch::Matchers::WithinAbs(-0.5, 1e-12));

    const SpectrumInit four = hippo_eigen_init(4);
    for (Index i = 0; i < 4; ++i)
        CHECK_THAT(four.lambda(i).real(), Catch::Matchers::WithinAbs(-0.5, 1e-10));
}

TEST_CASE("eigenpairs satisfy the residual and norm contracts") {
    for (Index n : {Index{1}, Index{3}, Index{8}, Index{16}}) {
        const RealMatrix a = hippo_normal_matrix(n);
        const SpectrumInit init = hippo_eigen_init(n);
        for (Index j = 0; j < n; ++j) {
            const ComplexVector v = init.eigvecs.col(j);
            CHECK_THAT(v.norm(), Catch::Matchers::WithinAbs(1.0, 1e-12));
            const double residual = (a.cast<Complex>() * v - init.lambda(j) * v).norm();
            CHECK(residual <= 1e-8);
        }
        for (Index j = 1; j < n; ++j)
            CHECK(init.lambda(j - 1).imag() <= init.lambda(j).imag());
        const double unitary_err =
            (init.eigvecs.adjoint() * init.eigvecs - ComplexMatrix::Identity(n, n))
                .cwiseAbs()
                .maxCoeff();
        CHECK(unitary_err <= 1e-8);
    }
}

TEST_CASE("init_delta") {
    SECTION("degenerate interval") {
        const RealVector d = init_delta(3, 0.005, 0.005, 1);
        for (Index i = 0; i < 3; ++i) CHECK(d(i) == 0.005);
    }
    SECTION("default bounds") {
        const RealVector d = init_delta(100, 42);
        CHECK(d.minCoeff() >= 0.001);
        CHECK(d.maxCoeff() <= 0.1);
        CHECK(d.minCoeff() > 0.0);
    }
    SECTION("determinism") {
        const RealVector a = init_delta(100, 0.001, 0.1, 7);
        const RealVector b = init_delta(100, 0.001, 0.1, 7);
        CHECK(a == b);
    }
    SECTION("errors") {
        CHECK_THROWS_AS(init_delta(3, 0.0, 0.1, 0), InvalidArgument);
        CHECK_THROWS_AS(init_delta(3, -0.1, 0.1, 0), InvalidArgument);
        CHECK_THROWS_AS(init_delta(3, 0.2, 0.1, 0), InvalidArgument);
        CHECK_THROWS_AS(init_delta(0, 0.001, 0.1, 0), InvalidArgument);
    }
}

TEST_CASE("init_projections") {
    SECTION("1x1 identity basis") {
        const ComplexMatrix eye = ComplexMatrix::Identity(1, 1);
        const ProjectionInit p = init_projections(1, 1, 1, eye, 3);
        CHECK(std::isfinite(p.b(0, 0)));
        CHECK(p.b.rows() == 1);
        CHECK(p.c.rows() == 1);
    }
    SECTION("truncation bound at n = 64") {
        const SpectrumInit init = hippo_eigen_init(64);
        const ProjectionInit p = init_projections(64, 64, 64, init.eigvecs, 11);
        CHECK(p.c.cwiseAbs().maxCoeff() <= 2.0 / 8.0);
        CHECK(p.b.rows() == 64);
        CHECK(p.b.cols() == 64);
    }
    SECTION("determinism") {
        const SpectrumInit init = hippo_eigen_init(8);
        const ProjectionInit a = init_projections(8, 4, 6, init.eigvecs, 5);
        const ProjectionInit b = init_projections(8, 4, 6, init.eigvecs, 5);
        CHECK(a.b == b.b);
        CHECK(a.c == b.c);
    }
    SECTION("errors") {
        const SpectrumInit init = hippo_eigen_init(4);
        CHECK_THROWS_AS(init_projections(5, 2, 2, init.eigvecs, 0), InvalidArgument);
        ComplexMatrix bad = init.eigvecs;
        bad(0, 0) += Complex(0.1, 0.0);
        CHECK_THROWS_AS(init_projections(4, 2, 2, bad, 0), InvalidArgument);
    }
}

TEST_CASE("init bundle wiring") {
    const InitBundle bundle = make_init_bundle(6, 4, 2, 9);
    CHECK(bundle.lambda_init.size() == 6);
    for (Index i = 0; i < 6; ++i) CHECK(bundle.lambda_init(i).real() < 0.0);
    CHECK(bundle.d_init.size() == 2);
    CHECK((bundle.d_init.array() == 1.0).all());
    CHECK(bundle.delta_init.minCoeff() > 0.0);
    CHECK(bundle.b_init.rows() == 6);
    CHECK(bundle.b_init.cols() == 4);
    CHECK(bundle.c_init.rows() == 2);
    CHECK(bundle.c_init.cols() == 6);
}
