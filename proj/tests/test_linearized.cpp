#include <gtest/gtest.h>

#include <random>

#include <boltz/linearized.hpp>

using namespace boltz;

TEST(K1, Examples) {
    KernelParams p;
    EXPECT_EQ(k1_kernel({0, 0, 0}, {0, 0, 0}, p), 0.0);
    EXPECT_DOUBLE_EQ(k1_kernel({1, 0, 0}, {0, 0, 0}, p), 2 * pi * std::exp(-0.25));
    // quoted as 4.8924; the formula gives 4.89335
    EXPECT_NEAR(k1_kernel({1, 0, 0}, {0, 0, 0}, p), 4.8924, 2e-3);
    p.gamma = -1;
    EXPECT_THROW(k1_kernel({1, 1, 0}, {1, 1, 0}, p), Error);
}

TEST(K1, Symmetric) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (double gamma : {1.0, 0.0, -1.5}) {
        KernelParams p;
        p.gamma = gamma;
        for (int k = 0; k < 1000; ++k) {
            const Vec3 v{nd(rng), nd(rng), nd(rng)}, e{nd(rng), nd(rng), nd(rng)};
            EXPECT_EQ(k1_kernel(v, e, p), k1_kernel(e, v, p));
        }
    }
}

// int k1(0, eta) d eta = 2 pi int |eta| e^{-|eta|^2/4} = 64 pi^2, times the Maxwellian normalization
TEST(K1, IntegralAgainstClosedFormAndDirectK1) {
    KernelParams p;
    const PolarRule rule(40.0, 16, 8, 16, 32);
    const Vec3 v{0, 0, 0};
    const double exact = 64 * pi * pi * maxwellian_norm;
    const double kernel_route = k1_normalization() * integrate_k1(v, p, [](const Vec3&) { return 1.0; }, rule);
    EXPECT_NEAR(kernel_route, exact, 1e-6 * exact);
    auto g = [](const Vec3& w) { return std::cos(w.x) * std::exp(-0.1 * norm2(w)); };
    const Vec3 v1{0.7, -0.2, 0.4};
    const double a = k1_normalization() * integrate_k1(v1, p, g, rule);
    const double b = apply_K1_direct(v1, p, g, rule, SphereQuadrature(16, 16));
    EXPECT_NEAR(a, b, 1e-6 * std::abs(b));
}

TEST(KernelEval, PartsRecombine) {
    KernelParams p;
    const auto e = kernel_k({1, 0.5, 0}, {-0.3, 0.2, 1}, p);
    EXPECT_EQ(e.value, e.part2 - e.part1);
    const auto l = l_bound({1, 0.5, 0}, {-0.3, 0.2, 1}, -1, 0.2, 1.0);
    EXPECT_EQ(l.value, l.part1 + l.part2);
}

TEST(CutoffSplit, ProfileShape) {
    EXPECT_THROW(CutoffSplit(0.0), Error);
    EXPECT_THROW(CutoffSplit(1.5), Error);
    for (double m : {0.1, 0.5, 1.0}) {
        CutoffSplit c(m);
        EXPECT_EQ(c.chi(0), 1.0);
        EXPECT_EQ(c.chi(m), 1.0);
        EXPECT_EQ(c.chi(2 * m), 0.0);
        double prev = 1.0;
        for (double s = m; s <= 2 * m; s += m / 64) {
            const double x = c.chi(s);
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, prev);
            prev = x;
        }
    }
}

class LatticeK : public ::testing::Test {
protected:
    VelocityGrid g{5, 8};
    CollisionOperator op{g, KernelParams(), SphereQuadrature(8, 16)};
    LinearizedOperator L{op};

    std::vector<double> invariant(int k) const {
        std::vector<double> f(g.size());
        for (std::size_t j = 0; j < g.size(); ++j) {
            const Vec3 v = g.node(j);
            const double m[5] = {1.0, v.x, v.y, v.z, norm2(v)};
            f[j] = m[k] * g.sqrt_mu()[j];
        }
        return f;
    }
};

TEST_F(LatticeK, ZeroProfile) {
    const std::vector<double> z(g.size(), 0.0);
    for (double x : L.apply_K_field(z.data())) EXPECT_EQ(x, 0.0);
    const auto P = L.prepare(z.data());
    EXPECT_EQ(apply_Km(L, P, 100, CutoffSplit(0.5)), 0.0);
    EXPECT_EQ(apply_Kc(L, P, 100, CutoffSplit(0.5)), 0.0);
}

TEST_F(LatticeK, NullSpace) {
    for (int k = 0; k < 5; ++k) {
        const auto f = invariant(k);
        const auto Kf = L.apply_K_field(f.data());
        double err = 0, scale = 0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            err = std::max(err, std::abs(Kf[j] - op.nu()[j] * f[j]));
            scale = std::max(scale, op.nu()[j] * std::abs(f[j]));
        }
        EXPECT_LE(err, (k == 0 ? 1e-13 : 1e-5) * scale) << "invariant " << k;
    }
}

TEST_F(LatticeK, NodeAndFieldPathsAgree) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    std::vector<double> f(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) f[j] = nd(rng) * g.sqrt_mu()[j];
    const auto Kf = L.apply_K_field(f.data());
    const auto P = L.prepare(f.data());
    for (std::size_t j : {0ul, 99ul, 300ul, 511ul}) EXPECT_NEAR(L.apply_K(P, j), Kf[j], 1e-12 * (1 + std::abs(Kf[j])));
}

TEST_F(LatticeK, SplitRecombination) {
    const auto f = invariant(0);
    const auto P = L.prepare(f.data());
    for (double m : {0.25, 1.0})
        for (std::size_t j : {g.index(4, 4, 4), g.index(1, 5, 2)}) {
            const CutoffSplit s(m);
            const double K = L.apply_K(P, j);
            EXPECT_NEAR(apply_Km(L, P, j, s) + apply_Kc(L, P, j, s), K, 1e-12 * std::abs(K));
            EXPECT_NEAR(K, op.nu()[j] * f[j], 1e-12 * op.nu()[j] * f[j]);
        }
}

TEST(Km, GaussianTailDecay) {
    KernelParams p;
    const CutoffSplit split(0.5);
    auto rho = [](const Vec3& w) { return 1.0 / std::sqrt(maxwellian(w)); };  // g = 1
    double prev = std::numeric_limits<double>::infinity();
    for (double s = 4; s <= 8; s += 1) {
        const double x = std::abs(apply_Km_local(rho, {s, 0, 0}, p, split)) * std::exp(s * s / 20);
        EXPECT_LT(x, prev) << "|v| = " << s;
        prev = x;
    }
}

TEST(Verifiers, KernelBoundFiniteAndStable) {
    KernelParams p;
    const auto r = verify_kernel_bound(p, {0.0, 5.0}, {0.0, 2.0, 4.0, 8.0}, EtaRule::for_grid(24));
    EXPECT_TRUE(r.pass) << r.to_json().dump();
    EXPECT_LE(r.refinement_delta, 0.05);
    for (const auto& s : r.samples) {
        EXPECT_GT(s["value"].get<double>(), 0.0);
        EXPECT_LE(s["value"].get<double>(), r.fitted_constant);
    }
    EXPECT_EQ(r.to_json()["bound_id"], "kernel");
}

TEST(Verifiers, KernelBoundFlagsCoarseRule) {
    KernelParams p;
    const auto r = verify_kernel_bound(p, {0.0}, {0.0, 8.0}, EtaRule::for_grid(4));
    EXPECT_FALSE(r.pass);
    EXPECT_EQ(r.message, "refinement instability");
}

TEST(Verifiers, RemainderSlopeSoft) {
    KernelParams p;
    p.gamma = -1;
    const auto r = verify_remainder_bound(p, {0.1, 0.2, 0.4, 0.8}, {0.0, 2.0, 4.0, 8.0}, 0.0, EtaRule::for_grid(24));
    EXPECT_TRUE(r.pass) << r.message;
    EXPECT_NEAR(r.slope, -2.0, 0.4);
}

TEST(Verifiers, RemainderFlatHard) {
    KernelParams p;
    const auto r = verify_remainder_bound(p, {0.1, 0.2, 0.4, 0.8}, {0.0, 2.0, 4.0, 8.0}, 0.0, EtaRule::for_grid(24));
    EXPECT_TRUE(r.pass) << r.message;
    const auto c = r.params["m_constants"].get<std::vector<double>>();
    EXPECT_LE(*std::max_element(c.begin(), c.end()), 1.1 * *std::min_element(c.begin(), c.end()));
}

TEST(Verifiers, KmScalingSlopes) {
    KernelParams p;
    const std::vector<double> ms{1.0, 0.5, 0.25, 0.125};
    const auto r1 = verify_km_scaling(p, ms, ray_samples(4.0, 1.0), km_test_profiles());
    EXPECT_TRUE(r1.pass);
    EXPECT_GE(r1.slope, 3.6);
    p.gamma = -2;
    const auto r2 = verify_km_scaling(p, ms, ray_samples(4.0, 1.0), km_test_profiles());
    EXPECT_TRUE(r2.pass);
    EXPECT_NEAR(r2.slope, 1.0, 0.4);
    const auto r0 = verify_km_scaling(p, ms, ray_samples(2.0, 1.0), {[](const Vec3&) { return 0.0; }});
    EXPECT_TRUE(r0.pass);
    for (const auto& s : r0.samples) EXPECT_EQ(s["S"].get<double>(), 0.0);
}
