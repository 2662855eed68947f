#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "core.hpp"

namespace boltz {

inline constexpr double maxwellian_norm = 0.063493635934240969;  // (2 pi)^{-3/2}
inline constexpr double tail_mask = 1e-30;

inline double maxwellian_v2(double v2) { return maxwellian_norm * std::exp(-0.5 * v2); }
inline double maxwellian(const Vec3& v) { return maxwellian_v2(norm2(v)); }

inline double weight(const Vec3& v, double beta) {
    if (beta < 0) throw Error("weight: beta must be >= 0");
    return std::pow(1.0 + norm2(v), 0.5 * beta);
}

/// Midpoint lattice on [-v_max, v_max]^3 with n nodes per axis. Node i sits at
/// -v_max + (i + 1/2) h, so the node set is symmetric under v -> -v and never
/// contains the origin.
class VelocityGrid {
public:
    VelocityGrid() : VelocityGrid(6.0, 24) {}
    VelocityGrid(double v_max, int n_per_axis) : v_max_(v_max), n_(n_per_axis) {
        if (!(v_max > 0)) throw Error("velocity grid: v_max must be positive");
        if (n_per_axis < 4 || n_per_axis % 2 != 0)
            throw Error("velocity grid: n_per_axis must be even and >= 4");
        h_ = 2.0 * v_max / n_per_axis;
        auto t = std::make_shared<Tables>();
        const std::size_t N = size();
        t->v2.resize(N);
        t->mu.resize(N);
        t->sqrt_mu.resize(N);
        for (std::size_t j = 0; j < N; ++j) {
            const double v2 = norm2(node(j));
            t->v2[j] = v2;
            t->mu[j] = maxwellian_v2(v2);
            t->sqrt_mu[j] = std::sqrt(t->mu[j]);
        }
        tables_ = std::move(t);
    }

    double v_max() const { return v_max_; }
    int n() const { return n_; }
    double spacing() const { return h_; }
    std::size_t size() const { return std::size_t(n_) * n_ * n_; }
    double cell_volume() const { return h_ * h_ * h_; }
    double domain_volume() const { return 8.0 * v_max_ * v_max_ * v_max_; }

    double coord(int i) const { return -v_max_ + (i + 0.5) * h_; }
    std::size_t index(int ix, int iy, int iz) const {
        return (std::size_t(ix) * n_ + iy) * n_ + iz;
    }
    void split(std::size_t j, int& ix, int& iy, int& iz) const {
        iz = int(j % n_);
        iy = int((j / n_) % n_);
        ix = int(j / (std::size_t(n_) * n_));
    }
    Vec3 node(std::size_t j) const {
        int ix, iy, iz;
        split(j, ix, iy, iz);
        return {coord(ix), coord(iy), coord(iz)};
    }
    /// Index of the node reflected through the origin.
    std::size_t mirror(std::size_t j) const {
        int ix, iy, iz;
        split(j, ix, iy, iz);
        return index(n_ - 1 - ix, n_ - 1 - iy, n_ - 1 - iz);
    }

    const std::vector<double>& v2() const { return tables_->v2; }
    const std::vector<double>& mu() const { return tables_->mu; }
    const std::vector<double>& sqrt_mu() const { return tables_->sqrt_mu; }

    bool operator==(const VelocityGrid& o) const { return v_max_ == o.v_max_ && n_ == o.n_; }

private:
    struct Tables {
        std::vector<double> v2, mu, sqrt_mu;
    };
    double v_max_;
    int n_;
    double h_;
    std::shared_ptr<const Tables> tables_;
};

/// Periodic slab (dimension 1, F depends on x1 only) or a homogeneous gas
/// (dimension 0, a single cell of unit measure).
struct SpatialGrid {
    int dimension = 0;
    double period = 1.0;
    int n_cells = 1;

    SpatialGrid() = default;
    SpatialGrid(int dim, double per, int cells) : dimension(dim), period(per), n_cells(cells) {
        validate();
    }
    static SpatialGrid homogeneous() { return SpatialGrid(0, 1.0, 1); }
    static SpatialGrid slab(double period, int cells) { return SpatialGrid(1, period, cells); }

    void validate() const {
        if (dimension != 0 && dimension != 1) throw Error("spatial grid: dimension must be 0 or 1");
        if (dimension == 0 && n_cells != 1) throw Error("spatial grid: dimension 0 has one cell");
        if (dimension == 1 && !(period > 0)) throw Error("spatial grid: period must be positive");
        if (n_cells < 1) throw Error("spatial grid: n_cells must be >= 1");
    }
    double dx() const { return dimension == 0 ? 1.0 : period / n_cells; }
    double center(int i) const { return dimension == 0 ? 0.0 : (i + 0.5) * dx(); }
    double wrap(double x) const {
        if (dimension == 0) return x;
        double y = std::fmod(x, period);
        if (y < 0) y += period;
        if (y >= period) y = 0.0;
        return y;
    }
    bool operator==(const SpatialGrid& o) const {
        return dimension == o.dimension && period == o.period && n_cells == o.n_cells;
    }
};

/// Values on SpatialGrid x VelocityGrid, cell-major: values[cell * N + node].
struct PhaseField {
    SpatialGrid space;
    VelocityGrid vel;
    std::vector<double> values;

    PhaseField() = default;
    PhaseField(SpatialGrid s, VelocityGrid v, double fill = 0.0)
        : space(s), vel(std::move(v)), values(std::size_t(space.n_cells) * vel.size(), fill) {}

    std::size_t nodes() const { return vel.size(); }
    int cells() const { return space.n_cells; }
    double& at(int cell, std::size_t node) { return values[std::size_t(cell) * nodes() + node]; }
    double at(int cell, std::size_t node) const { return values[std::size_t(cell) * nodes() + node]; }
    double* cell(int c) { return values.data() + std::size_t(c) * nodes(); }
    const double* cell(int c) const { return values.data() + std::size_t(c) * nodes(); }
    bool same_grid(const PhaseField& o) const { return space == o.space && vel == o.vel; }
};

struct DistributionField : PhaseField {
    using PhaseField::PhaseField;

    static DistributionField equilibrium(SpatialGrid s, VelocityGrid v) {
        DistributionField F(s, v);
        for (int c = 0; c < F.cells(); ++c)
            for (std::size_t j = 0; j < F.nodes(); ++j) F.at(c, j) = F.vel.mu()[j];
        return F;
    }
};

struct PerturbationField : PhaseField {
    double beta = 0.0;
    /// Set by to_perturbation when F differs from mu on tail-masked nodes.
    bool tail_overflow = false;

    PerturbationField() = default;
    PerturbationField(SpatialGrid s, VelocityGrid v, double b, double fill = 0.0)
        : PhaseField(s, std::move(v), fill), beta(b) {}
};

inline PerturbationField to_perturbation(const DistributionField& F, double beta = 0.0) {
    PerturbationField f(F.space, F.vel, beta);
    const auto& mu = F.vel.mu();
    const auto& smu = F.vel.sqrt_mu();
    for (int c = 0; c < F.cells(); ++c)
        for (std::size_t j = 0; j < F.nodes(); ++j) {
            const double d = F.at(c, j) - mu[j];
            if (mu[j] < tail_mask) {
                if (d != 0.0) f.tail_overflow = true;
                continue;
            }
            f.at(c, j) = d / smu[j];
        }
    return f;
}

inline DistributionField from_perturbation(const PerturbationField& f) {
    DistributionField F(f.space, f.vel);
    const auto& mu = f.vel.mu();
    const auto& smu = f.vel.sqrt_mu();
    for (int c = 0; c < f.cells(); ++c)
        for (std::size_t j = 0; j < f.nodes(); ++j)
            F.at(c, j) = mu[j] < tail_mask ? mu[j] : mu[j] + smu[j] * f.at(c, j);
    return F;
}

struct ConservedSnapshot {
    double M0 = 0;
    Vec3 J0{};
    double E0 = 0;
    double entropy = 0;
};

/// Pointwise integrand of the entropy defect. F ln F - mu ln mu plus the
/// [3/2 ln(2pi) - 1] and 1/2 |v|^2 multiples of F - mu collapses to
/// F ln(F/mu) - F + mu, which is nonnegative node by node.
inline double entropy_density(double F, double mu) {
    if (F <= 0.0) return mu;
    return F * std::log(F / mu) - F + mu;
}

inline ConservedSnapshot conserved_snapshot(const DistributionField& F) {
    const auto& mu = F.vel.mu();
    const auto& v2 = F.vel.v2();
    const double w = F.space.dx() * F.vel.cell_volume();
    CompensatedSum m, jx, jy, jz, e, s;
    for (int c = 0; c < F.cells(); ++c)
        for (std::size_t j = 0; j < F.nodes(); ++j) {
            const double Fv = F.at(c, j);
            const double d = Fv - mu[j];
            const Vec3 v = F.vel.node(j);
            m.add(w * d);
            jx.add(w * v.x * d);
            jy.add(w * v.y * d);
            jz.add(w * v.z * d);
            e.add(w * v2[j] * d);
            s.add(w * entropy_density(Fv, mu[j]));
        }
    return {m.value(), {jx.value(), jy.value(), jz.value()}, e.value(), s.value()};
}

struct Norms {
    double winf = 0;
    double l1x_linfv = 0;
    double linfx_l1v = 0;
    double l2 = 0;
};

inline Norms norms(const PhaseField& f, double beta) {
    Norms r;
    const double h3 = f.vel.cell_volume();
    const double dx = f.space.dx();
    std::vector<double> w(f.nodes());
    for (std::size_t j = 0; j < f.nodes(); ++j) w[j] = std::pow(1.0 + f.vel.v2()[j], 0.5 * beta);
    CompensatedSum l1x, l2;
    for (int c = 0; c < f.cells(); ++c) {
        double sup = 0;
        CompensatedSum l1v;
        for (std::size_t j = 0; j < f.nodes(); ++j) {
            const double a = std::abs(f.at(c, j));
            r.winf = std::max(r.winf, w[j] * a);
            sup = std::max(sup, a);
            l1v.add(a * h3);
            l2.add(a * a * h3 * dx);
        }
        l1x.add(sup * dx);
        r.linfx_l1v = std::max(r.linfx_l1v, l1v.value());
    }
    r.l1x_linfv = l1x.value();
    r.l2 = std::sqrt(l2.value());
    return r;
}

inline double weighted_sup(const PerturbationField& f) { return norms(f, f.beta).winf; }

struct CellMoments {
    double x = 0;
    double rho = 0;
    Vec3 u{};
    double T = 0;
};

inline CellMoments cell_moments(const DistributionField& F, int c) {
    const double h3 = F.vel.cell_volume();
    CompensatedSum m, px, py, pz, e;
    for (std::size_t j = 0; j < F.nodes(); ++j) {
        const double a = F.at(c, j) * h3;
        const Vec3 v = F.vel.node(j);
        m.add(a);
        px.add(a * v.x);
        py.add(a * v.y);
        pz.add(a * v.z);
        e.add(a * F.vel.v2()[j]);
    }
    CellMoments r;
    r.x = F.space.center(c);
    r.rho = m.value();
    if (r.rho > 0) {
        r.u = {px.value() / r.rho, py.value() / r.rho, pz.value() / r.rho};
        r.T = (e.value() / r.rho - norm2(r.u)) / 3.0;
    }
    return r;
}

inline double cell_density(const DistributionField& F, int c) {
    CompensatedSum m;
    const double* p = F.cell(c);
    for (std::size_t j = 0; j < F.nodes(); ++j) m.add(p[j]);
    return m.value() * F.vel.cell_volume();
}

}  // namespace boltz
