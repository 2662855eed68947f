#include <gtest/gtest.h>

#include <random>

#include <boltz/phase.hpp>

using namespace boltz;

TEST(Maxwellian, ValuesAtOriginAndUnitSpeed) {
    EXPECT_NEAR(maxwellian({0, 0, 0}), 0.0634936, 1e-7);
    // the quoted 0.0385104 is rounded loosely; the formula gives 0.03851084
    EXPECT_NEAR(maxwellian({1, 0, 0}), 0.0385104, 1e-6);
    EXPECT_DOUBLE_EQ(maxwellian({0, 0, 0}), std::pow(2 * pi, -1.5));
    EXPECT_DOUBLE_EQ(maxwellian({1, 0, 0}), std::pow(2 * pi, -1.5) * std::exp(-0.5));
}

// The tolerance comes from the n = 64 run: the midpoint rule error of mu is
// far below the truncation floor, so both sums sit within 1e-6 of 1.
TEST(Maxwellian, RiemannSumIsOne) {
    for (int n : {32, 64}) {
        VelocityGrid g(6.0, n);
        CompensatedSum s;
        for (double m : g.mu()) s.add(m * g.cell_volume());
        EXPECT_NEAR(s.value(), 1.0, 1e-6) << "n=" << n;
    }
}

TEST(Weight, Values) {
    EXPECT_DOUBLE_EQ(weight({0, 0, 0}, 4), 1.0);
    EXPECT_DOUBLE_EQ(weight({1, 0, 0}, 2), 2.0);
    EXPECT_DOUBLE_EQ(weight({1, 1, 1}, 4), 16.0);
    EXPECT_THROW(weight({1, 0, 0}, -1), Error);
}

TEST(VelocityGrid, Invariants) {
    EXPECT_THROW(VelocityGrid(6, 3), Error);
    EXPECT_THROW(VelocityGrid(6, 2), Error);
    EXPECT_THROW(VelocityGrid(0, 8), Error);
    VelocityGrid g(6, 8);
    EXPECT_DOUBLE_EQ(g.spacing(), 1.5);
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3 v = g.node(j), w = g.node(g.mirror(j));
        EXPECT_EQ(v.x, -w.x);
        EXPECT_EQ(v.y, -w.y);
        EXPECT_EQ(v.z, -w.z);
        EXPECT_GT(norm(v), 0.0);
    }
}

TEST(Perturbation, EquilibriumAndDouble) {
    VelocityGrid g(6, 8);
    auto F = DistributionField::equilibrium(SpatialGrid::homogeneous(), g);
    auto f = to_perturbation(F);
    for (double x : f.values) EXPECT_EQ(x, 0.0);
    for (auto& x : F.values) x *= 2;
    f = to_perturbation(F);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(f.at(0, j), g.sqrt_mu()[j], 1e-15);
}

TEST(Perturbation, RoundTripProperty) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 5; ++trial) {
        VelocityGrid g(5, 6);
        DistributionField F(SpatialGrid::slab(1, 3), g);
        double fmax = 0;
        for (auto& x : F.values) fmax = std::max(fmax, x = u(rng) * 0.1);
        const auto G = from_perturbation(to_perturbation(F));
        for (std::size_t k = 0; k < F.values.size(); ++k) EXPECT_LE(std::abs(G.values[k] - F.values[k]), 1e-12 * fmax);
    }
}

TEST(Perturbation, TailMaskFlagsOverflow) {
    VelocityGrid g(14, 8);  // corner mu far below the mask
    auto F = DistributionField::equilibrium(SpatialGrid::homogeneous(), g);
    EXPECT_FALSE(to_perturbation(F).tail_overflow);
    std::size_t corner = g.index(0, 0, 0);
    ASSERT_LT(g.mu()[corner], tail_mask);
    F.at(0, corner) = 1e-3;
    const auto f = to_perturbation(F);
    EXPECT_TRUE(f.tail_overflow);
    EXPECT_EQ(f.at(0, corner), 0.0);
    EXPECT_EQ(from_perturbation(f).at(0, corner), g.mu()[corner]);
}

TEST(Snapshot, EquilibriumVanishes) {
    VelocityGrid g(6, 12);
    const auto F = DistributionField::equilibrium(SpatialGrid::slab(1, 4), g);
    const auto s = conserved_snapshot(F);
    EXPECT_EQ(s.M0, 0.0);
    EXPECT_EQ(s.J0.x, 0.0);
    EXPECT_EQ(s.E0, 0.0);
    EXPECT_NEAR(s.entropy, 0.0, 1e-15);
}

TEST(Snapshot, ConstantDensityEntropy) {
    VelocityGrid g(6, 24);
    auto F = DistributionField::equilibrium(SpatialGrid::homogeneous(), g);
    for (auto& x : F.values) x *= 2;
    // rho ln rho - rho + 1 times the discrete mass of mu
    CompensatedSum m;
    for (double x : g.mu()) m.add(x * g.cell_volume());
    EXPECT_NEAR(conserved_snapshot(F).entropy, (2 * std::log(2.0) - 1) * m.value(), 1e-12);
    EXPECT_NEAR(conserved_snapshot(F).entropy, 0.386294, 1e-6);
}

TEST(Snapshot, EntropyNonnegativeOnRandomFields) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    VelocityGrid g(4, 6);
    for (int t = 0; t < 20; ++t) {
        DistributionField F(SpatialGrid::slab(2, 3), g);
        for (auto& x : F.values) x = u(rng) < 0.2 ? 0.0 : 0.2 * u(rng);
        EXPECT_GE(conserved_snapshot(F).entropy, 0.0);
    }
}

TEST(Norms, ZeroField) {
    PerturbationField f(SpatialGrid::slab(1, 4), VelocityGrid(6, 8), 4.0);
    const auto n = norms(f, 4);
    EXPECT_EQ(n.winf, 0);
    EXPECT_EQ(n.l1x_linfv, 0);
    EXPECT_EQ(n.linfx_l1v, 0);
    EXPECT_EQ(n.l2, 0);
}

TEST(Norms, ConstantFieldVelocityMass) {
    VelocityGrid g(6, 32);
    PerturbationField f(SpatialGrid::homogeneous(), g, 0.0, 0.5);
    EXPECT_NEAR(norms(f, 0).linfx_l1v, 0.5 * 1728.0, 1e-9);
}

TEST(Norms, SeparableSlab) {
    VelocityGrid g(4, 8);
    SpatialGrid s = SpatialGrid::slab(2.0, 5);
    PerturbationField f(s, g, 0.0);
    double ref = 0;
    for (int c = 0; c < s.n_cells; ++c) {
        const double gx = std::cos(3 * s.center(c)) - 0.2;
        ref += std::abs(gx) * s.dx();
        for (std::size_t j = 0; j < g.size(); ++j) f.at(c, j) = gx * std::exp(-g.v2()[j]);
    }
    // the velocity sup of e^{-|v|^2} on the midpoint lattice
    double vmax = 0;
    for (double v2 : g.v2()) vmax = std::max(vmax, std::exp(-v2));
    EXPECT_NEAR(norms(f, 0).l1x_linfv, ref * vmax, 1e-14);
}

TEST(Norms, HomogeneityAndHolder) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    VelocityGrid g(4, 6);
    PerturbationField f(SpatialGrid::slab(1, 3), g, 4.0);
    for (auto& x : f.values) x = nd(rng);
    const auto a = norms(f, 4);
    PerturbationField h = f;
    for (auto& x : h.values) x *= -2.5;
    const auto b = norms(h, 4);
    EXPECT_NEAR(b.winf, 2.5 * a.winf, 1e-12 * a.winf);
    EXPECT_NEAR(b.l1x_linfv, 2.5 * a.l1x_linfv, 1e-12 * a.l1x_linfv);
    EXPECT_NEAR(b.linfx_l1v, 2.5 * a.linfx_l1v, 1e-12 * a.linfx_l1v);
    EXPECT_NEAR(b.l2, 2.5 * a.l2, 1e-12 * a.l2);
    EXPECT_LE(a.linfx_l1v, g.domain_volume() * norms(f, 0).winf * (1 + 1e-12));
}

TEST(SpatialGrid, Validation) {
    EXPECT_THROW(SpatialGrid(2, 1, 1), Error);
    EXPECT_THROW(SpatialGrid(1, 0, 4), Error);
    EXPECT_THROW(SpatialGrid(0, 1, 3), Error);
    SpatialGrid s = SpatialGrid::slab(1, 4);
    EXPECT_NEAR(s.wrap(-0.15), 0.85, 1e-15);
    EXPECT_NEAR(s.wrap(1.25), 0.25, 1e-15);
}
