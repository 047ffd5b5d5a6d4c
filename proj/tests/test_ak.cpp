#include <catch2/catch_amalgamated.hpp>

#include <sp2n/arthurs_kelly.hpp>
#include <sp2n/core.hpp>
#include <sp2n/williamson.hpp>

#include "test_util.hpp"

using namespace sp2n;
using testutil::Rng;

namespace {

AKParams params(double k1, double k2, double t, double b1 = 1.0, double b2 = 1.0,
                double hbar = 1.0) {
    return AKParams{k1, k2, b1, b2, hbar, t};
}

Matrix closed_form_matrix(const AKParams& p) {
    Matrix s = Matrix::Identity(6, 6);
    s(0, 2) = p.t * p.k1;
    s(1, 4) = p.t * p.k2;
    s(3, 1) = -p.t * p.k1;
    s(3, 4) = -0.5 * p.t * p.t * p.k1 * p.k2;
    s(5, 0) = p.t * p.k2;
    s(5, 2) = 0.5 * p.t * p.t * p.k1 * p.k2;
    return s;
}

}  // namespace

TEST_CASE("model hamiltonian entries and rendered terms") {
    const auto ham = ak_hamiltonian(1.0, 1.0);
    Matrix expect = Matrix::Zero(6, 6);
    expect(0, 3) = expect(3, 0) = 1.0;
    expect(1, 5) = expect(5, 1) = 1.0;
    REQUIRE(max_abs(ham.h - expect) == 0.0);
    REQUIRE(hamiltonian_to_string(ham, ModeLayout::arthurs_kelly()) == "1*q*P1 + 1*p*P2");

    REQUIRE(max_abs(ak_hamiltonian(0.0, 0.0).h) == 0.0);
}

TEST_CASE("closed-form propagator entries") {
    const auto p = params(1.0, 1.0, 1.0);
    const SymplecticMatrix s = ak_propagator(p);
    REQUIRE(s.m(3, 4) == -0.5);
    REQUIRE(s.m(5, 2) == 0.5);
    REQUIRE(max_abs(s.m - closed_form_matrix(p)) == 0.0);

    const auto rest = params(0.7, -1.3, 2.1);
    REQUIRE(max_abs(ak_propagator(rest).m - closed_form_matrix(rest)) < 1e-15 * 10.0);

    REQUIRE(max_abs(ak_propagator(params(2.0, 3.0, 0.0)).m - Matrix::Identity(6, 6)) == 0.0);
}

TEST_CASE("propagator is bit-equal to its defining polynomial") {
    for (const auto& p : {params(1.0, 1.0, 1.0), params(-2.5, 0.3, 1.7), params(4.0, -4.0, 0.25)}) {
        const Generator gen = generator(ak_hamiltonian(p.k1, p.k2));
        const Matrix tj = -p.t * gen.j;
        const Matrix poly = Matrix::Identity(6, 6) + tj + (tj * tj) / 2.0;
        REQUIRE(max_abs(ak_propagator(p).m - poly) == 0.0);
    }
}

TEST_CASE("closed form agrees with the generic exponential across the coupling sweep") {
    // Entrywise agreement scaled by the matrix magnitude; at the largest
    // couplings the entries themselves reach t^2 K1 K2 / 2 = 5000.
    for (double k1 : {-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0}) {
        for (double k2 : {-10.0, -5.0, -1.0, 0.0, 1.0, 5.0, 10.0}) {
            for (double t : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0}) {
                const auto p = params(k1, k2, t);
                const Matrix s = ak_propagator(p).m;
                const Matrix ref = expm(-t * generator(ak_hamiltonian(k1, k2)).j);
                REQUIRE(max_abs(s - ref) <= 1e-14 * std::max(1.0, max_abs(s)));
            }
        }
    }
}

TEST_CASE("propagator stays in the group across the sweep") {
    Rng rng(9001);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = params(testutil::uniform(rng, -10.0, 10.0),
                              testutil::uniform(rng, -10.0, 10.0),
                              testutil::uniform(rng, 0.0, 10.0));
        const SymplecticMatrix s = ak_propagator(p);
        REQUIRE(is_symplectic(s.m, 1e-10 * std::max(1.0, max_abs(s.m))));
        REQUIRE(std::abs(s.m.determinant() - 1.0) < 1e-10 * std::max(1.0, max_abs(s.m)));
    }
}

TEST_CASE("mean pointer readings") {
    const auto p = params(1.4, -0.6, 0.9);

    Vector xi0 = Vector::Zero(6);
    auto [z1, z2] = pointer_means(xi0, p);
    REQUIRE(z1 == 0.0);
    REQUIRE(z2 == 0.0);

    // Product-form preparation: apparatus means vanish.
    xi0(0) = 0.8;
    xi0(1) = -1.1;
    auto [m1, m2] = pointer_means(xi0, p);
    REQUIRE(m1 == Catch::Approx(p.t * p.k1 * 0.8).margin(1e-15));
    REQUIRE(m2 == Catch::Approx(p.t * p.k2 * -1.1).margin(1e-15));

    // General initial means: same thing as full mean evolution.
    Rng rng(9002);
    for (int trial = 0; trial < 50; ++trial) {
        Vector xi(6);
        for (int i = 0; i < 6; ++i) xi(i) = testutil::uniform(rng, -2.0, 2.0);
        const Vector full = evolve_mean(ak_propagator(p), xi);
        auto [q1, q2] = pointer_means(xi, p);
        REQUIRE(q1 == Catch::Approx(full(2)).margin(1e-14));
        REQUIRE(q2 == Catch::Approx(full(4)).margin(1e-14));
    }

    REQUIRE_THROWS_AS(pointer_means(Vector::Zero(4), p), std::invalid_argument);
}

TEST_CASE("product-form variance matrix") {
    const auto p = params(1.0, 1.0, 1.0, 2.0, 0.5);
    const SystemMoments m{0.3, -0.2, 0.7, 0.5, 0.1};
    const VarianceMatrix v = product_variance(m, p);

    REQUIRE(v.v(0, 0) == 0.7);
    REQUIRE(v.v(1, 1) == 0.5);
    REQUIRE(v.v(0, 1) == 0.1);
    REQUIRE(v.v(2, 2) == 0.5);       // b1/4
    REQUIRE(v.v(3, 3) == 0.5);       // hbar^2/b1
    REQUIRE(v.v(4, 4) == 0.125);     // b2/4
    REQUIRE(v.v(5, 5) == 2.0);       // hbar^2/b2
    REQUIRE(max_abs(v.v - Matrix(v.v.diagonal().asDiagonal())) == 0.1);

    // Minimum-uncertainty system with unit widths: every mode exactly at the
    // boundary.
    const SystemMoments vac{0.0, 0.0, 0.25, 1.0, 0.0};
    const VarianceMatrix vb = product_variance(vac, params(1.0, 1.0, 1.0));
    const auto phys = is_physical(vb);
    REQUIRE(phys.physical);
    REQUIRE(phys.margin == Catch::Approx(0.0).margin(1e-12));
    for (double k : symplectic_eigenvalues(vb)) REQUIRE(k == Catch::Approx(0.5).margin(1e-12));

    const SystemMoments bad{0.0, 0.0, 0.1, 0.1, 0.0};
    REQUIRE_THROWS_AS(product_variance(bad, p), std::invalid_argument);
    REQUIRE_NOTHROW(product_variance(bad, p, PhysicalityMode::warn_only));
}

TEST_CASE("pointer spreads against the congruence route") {
    Rng rng(9003);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = params(testutil::uniform(rng, -3.0, 3.0), testutil::uniform(rng, -3.0, 3.0),
                              testutil::uniform(rng, 0.0, 3.0));
        const auto pv = testutil::random_physical_variance(3, rng);
        const VarianceMatrix v0(pv.v);
        const auto [s1, s2] = pointer_spreads(v0, p);
        const VarianceMatrix vt = evolve_variance(ak_propagator(p), v0);
        REQUIRE(s1 == Catch::Approx(vt.v(2, 2)).epsilon(1e-12).margin(1e-12));
        REQUIRE(s2 == Catch::Approx(vt.v(4, 4)).epsilon(1e-12).margin(1e-12));
        REQUIRE(vt.is_positive_definite());
    }
}

TEST_CASE("pointer spreads at t = 0 and on product preparations") {
    Rng rng(9004);
    const auto pv = testutil::random_physical_variance(3, rng);
    const VarianceMatrix v0(pv.v);
    const auto [s1, s2] = pointer_spreads(v0, params(1.3, 0.4, 0.0));
    REQUIRE(s1 == v0.v(2, 2));
    REQUIRE(s2 == v0.v(4, 4));

    // Product preparation: closed form with the apparatus noise floor.
    for (int trial = 0; trial < 100; ++trial) {
        const auto p = params(testutil::uniform(rng, -2.0, 2.0), testutil::uniform(rng, -2.0, 2.0),
                              testutil::uniform(rng, 0.0, 2.0), testutil::uniform(rng, 0.2, 3.0),
                              testutil::uniform(rng, 0.2, 3.0));
        const SystemMoments m{0.0, 0.0, testutil::uniform(rng, 0.3, 2.0),
                              testutil::uniform(rng, 0.3, 2.0), 0.0};
        if (!m.physical(p.hbar)) continue;
        const auto [v1, v2] = pointer_spreads(product_variance(m, p), p);
        const double d = p.t * p.t * p.hbar * p.k1 * p.k2;
        const double num = p.b1 * p.b2 + d * d;
        const double tk1 = p.t * p.k1, tk2 = p.t * p.k2;
        REQUIRE(v1 == Catch::Approx(tk1 * tk1 * m.var_q + num / (4.0 * p.b2)).epsilon(1e-12));
        REQUIRE(v2 == Catch::Approx(tk2 * tk2 * m.var_p + num / (4.0 * p.b1)).epsilon(1e-12));
    }
}

TEST_CASE("unit desk check of the first pointer spread") {
    const auto p = params(1.0, 1.0, 1.0, 1.0, 1.0);
    const SystemMoments m{0.0, 0.0, 0.5, 0.5, 0.0};
    const auto [v1, v2] = pointer_spreads(product_variance(m, p), p);
    REQUIRE(v1 == Catch::Approx(1.0).margin(1e-14));
    REQUIRE(v2 == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("uncertainty bound closed form and consistency at t = 0") {
    REQUIRE(uncertainty_bound(params(1.0, 1.0, 1.0)) == Catch::Approx(1.0).margin(1e-14));

    const auto p0 = params(1.7, 0.4, 0.0, 1.9, 0.6);
    const double root = std::sqrt(p0.b1 * p0.b2);
    REQUIRE(uncertainty_bound(p0) == Catch::Approx(root / 4.0).margin(1e-14));
    const SystemMoments vac{0.0, 0.0, 0.5, 0.5, 0.0};
    const auto [v1, v2] = pointer_spreads(product_variance(vac, p0), p0);
    REQUIRE(std::sqrt(v1 * v2) == Catch::Approx(uncertainty_bound(p0)).margin(1e-14));
}

TEST_CASE("bound inequality over random physical product preparations") {
    Rng rng(9005);
    int checked = 0;
    while (checked < 1000) {
        const auto p = params(testutil::uniform(rng, -2.0, 2.0), testutil::uniform(rng, -2.0, 2.0),
                              testutil::uniform(rng, 0.0, 2.0), testutil::uniform(rng, 0.3, 3.0),
                              testutil::uniform(rng, 0.3, 3.0));
        SystemMoments m;
        m.var_q = testutil::uniform(rng, 0.2, 3.0);
        m.cov_qp = testutil::uniform(rng, -0.5, 0.5);
        const double need = (0.25 + m.cov_qp * m.cov_qp) / m.var_q;
        m.var_p = need * testutil::uniform(rng, 1.0, 3.0);
        if (!m.physical(p.hbar)) continue;
        ++checked;
        const auto [v1, v2] = pointer_spreads(product_variance(m, p), p);
        REQUIRE(std::sqrt(v1 * v2) >= uncertainty_bound(p) - 1e-12);
    }
}

TEST_CASE("bound saturation at the balanced minimum-uncertainty preparation") {
    Rng rng(9006);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = params(testutil::uniform(rng, 0.2, 2.0), testutil::uniform(rng, 0.2, 2.0),
                              testutil::uniform(rng, 0.1, 2.0), testutil::uniform(rng, 0.3, 3.0),
                              testutil::uniform(rng, 0.3, 3.0));
        SystemMoments m;
        m.var_q = std::abs(p.k2 / p.k1) * std::sqrt(p.b1 / p.b2) * 0.5 * p.hbar;
        m.var_p = 0.25 * p.hbar * p.hbar / m.var_q;
        m.cov_qp = 0.0;
        const auto [v1, v2] = pointer_spreads(product_variance(m, p), p);
        REQUIRE(std::sqrt(v1 * v2) == Catch::Approx(uncertainty_bound(p)).epsilon(1e-8));
    }
}

TEST_CASE("estimation round trip on exact statistics") {
    Rng rng(9007);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = params(testutil::uniform(rng, 0.3, 2.0), testutil::uniform(rng, 0.3, 2.0),
                              testutil::uniform(rng, 0.2, 2.0), testutil::uniform(rng, 0.4, 2.5),
                              testutil::uniform(rng, 0.4, 2.5));
        SystemMoments m;
        m.q0 = testutil::uniform(rng, -2.0, 2.0);
        m.p0 = testutil::uniform(rng, -2.0, 2.0);
        m.var_q = testutil::uniform(rng, 0.3, 2.0);
        m.var_p = (0.26 / m.var_q) * testutil::uniform(rng, 1.0, 3.0);
        m.cov_qp = 0.0;
        if (!m.physical(p.hbar)) continue;

        Vector xi0 = Vector::Zero(6);
        xi0(0) = m.q0;
        xi0(1) = m.p0;
        const auto [mq1, mq2] = pointer_means(xi0, p);
        const auto [vq1, vq2] = pointer_spreads(product_variance(m, p), p);
        const MomentEstimate est = invert_pointer_statistics(mq1, mq2, vq1, vq2, p);

        REQUIRE(est.q.has_value());
        REQUIRE(est.p.has_value());
        REQUIRE(est.q->variance_ok);
        REQUIRE(est.p->variance_ok);
        REQUIRE(est.q->mean == Catch::Approx(m.q0).margin(1e-12));
        REQUIRE(est.p->mean == Catch::Approx(m.p0).margin(1e-12));
        REQUIRE(est.q->variance == Catch::Approx(m.var_q).epsilon(1e-12).margin(1e-12));
        REQUIRE(est.p->variance == Catch::Approx(m.var_p).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("estimation with a switched-off channel and the failure path") {
    const auto only_p = params(0.0, 1.2, 0.8);
    const MomentEstimate ep = invert_pointer_statistics(0.1, 0.96, 0.5, 1.4, only_p);
    REQUIRE_FALSE(ep.q.has_value());
    REQUIRE(ep.p.has_value());
    REQUIRE(ep.p->mean == Catch::Approx(0.96 / (0.8 * 1.2)).margin(1e-14));

    const auto only_q = params(1.2, 0.0, 0.8);
    const MomentEstimate eq = invert_pointer_statistics(0.96, 0.1, 1.4, 0.5, only_q);
    REQUIRE(eq.q.has_value());
    REQUIRE_FALSE(eq.p.has_value());

    REQUIRE_THROWS_AS(invert_pointer_statistics(0.0, 0.0, 1.0, 1.0, params(1.0, 1.0, 0.0)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(invert_pointer_statistics(0.0, 0.0, 1.0, 1.0, params(0.0, 0.0, 1.0)),
                      std::invalid_argument);

    // Reported variance below the apparatus noise floor: flagged, raw value kept.
    const auto p = params(1.0, 1.0, 0.1, 1.0, 50.0);
    const auto [noise_q, noise_p] = inversion_noise_terms(p);
    const MomentEstimate fail = invert_pointer_statistics(0.2, 0.3, 1.0, 0.5 * noise_p, p);
    REQUIRE(fail.p.has_value());
    REQUIRE_FALSE(fail.p->variance_ok);
    REQUIRE(fail.p->variance < 0.0);
    REQUIRE(fail.p->variance ==
            Catch::Approx(-0.5 * noise_p / (p.t * p.k2 * p.t * p.k2)).epsilon(1e-12));
    REQUIRE(fail.p->mean == Catch::Approx(0.3 / (p.t * p.k2)).margin(1e-14));
}

TEST_CASE("sequential composite propagator") {
    const auto stage1 = params(1.0, 0.0, 1.0);
    const auto stage2 = params(0.0, 1.0, 1.0);

    const SymplecticMatrix s = sequential_propagator(stage1, stage2);
    REQUIRE(is_symplectic(s.m, 1e-10));

    // Later p-measurement leaves the q-record mean alone.
    Rng rng(9008);
    for (int trial = 0; trial < 20; ++trial) {
        Vector xi0(6);
        for (int i = 0; i < 6; ++i) xi0(i) = testutil::uniform(rng, -2.0, 2.0);
        const Vector fin = evolve_mean(s, xi0);
        REQUIRE(fin(2) == Catch::Approx(xi0(2) + xi0(0)).margin(1e-14));
    }

    auto trivial2 = stage2;
    trivial2.t = 0.0;
    REQUIRE(max_abs(sequential_propagator(stage1, trivial2).m - ak_propagator(stage1).m) == 0.0);

    auto trivial1 = stage1;
    trivial1.t = 0.0;
    REQUIRE(max_abs(sequential_propagator(trivial1, trivial2).m - Matrix::Identity(6, 6)) == 0.0);

    REQUIRE_THROWS_AS(sequential_propagator(params(1.0, 0.5, 1.0), stage2), std::invalid_argument);
    REQUIRE_THROWS_AS(sequential_propagator(stage1, params(0.5, 1.0, 1.0)), std::invalid_argument);
}

TEST_CASE("sequential disturbance term on product preparations") {
    // Composite second-pointer spread carries an extra (t1 t2 K1 K2)^2 hbar^2 / b1
    // from the stage-1 momentum kick.
    Rng rng(9009);
    for (int trial = 0; trial < 100; ++trial) {
        const double k1 = testutil::uniform(rng, 0.2, 2.0), k2 = testutil::uniform(rng, 0.2, 2.0);
        const double t1 = testutil::uniform(rng, 0.1, 2.0), t2 = testutil::uniform(rng, 0.1, 2.0);
        const double b1 = testutil::uniform(rng, 0.4, 3.0), b2 = testutil::uniform(rng, 0.4, 3.0);
        const SystemMoments m{0.0, 0.0, testutil::uniform(rng, 0.3, 2.0),
                              testutil::uniform(rng, 0.3, 2.0), 0.0};
        const auto base = params(1.0, 1.0, 1.0, b1, b2);
        if (!m.physical(1.0)) continue;
        const VarianceMatrix v0 = product_variance(m, base);

        const SymplecticMatrix s =
            sequential_propagator(params(k1, 0.0, t1, b1, b2), params(0.0, k2, t2, b1, b2));
        const VarianceMatrix vt = evolve_variance(s, v0);

        const double plain = t2 * k2 * t2 * k2 * m.var_p + b2 / 4.0;
        const double kick = t1 * t2 * k1 * k2;
        REQUIRE(vt.v(4, 4) == Catch::Approx(plain + kick * kick / b1).epsilon(1e-12));
    }
}
