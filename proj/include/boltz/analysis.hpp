#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evolve.hpp"

namespace boltz {

// ---- smallness certificate ------------------------------------------------------

struct Certificate {
    double winf_beta = 0;
    double l1x_linfv = 0;
    double entropy = 0;
    double epsilon0 = 0.1;
    double t1 = 0;
    double m_bar = 10;
    double beta = 0;
    double c4_tilde = 1;
    bool pass = false;

    nlohmann::json to_json() const {
        return {{"winf_beta", winf_beta}, {"l1x_linfv", l1x_linfv}, {"entropy", entropy},
                {"epsilon0", epsilon0},   {"t1", t1},               {"m_bar", m_bar},
                {"beta", beta},           {"c4_tilde", c4_tilde},   {"verdict", pass ? "pass" : "fail"}};
    }
};

inline Certificate certify(const DistributionField& F0, double beta, double epsilon0 = 0.1, double m_bar = 10.0,
                           double c4_tilde = 1.0) {
    if (!(epsilon0 > 0)) throw Error("certify: epsilon0 must be positive");
    if (!(m_bar >= 1)) throw Error("certify: m_bar must be >= 1");
    Certificate c;
    const PerturbationField f = to_perturbation(F0, beta);
    const Norms nb = norms(f, beta);
    c.winf_beta = nb.winf;
    c.l1x_linfv = nb.l1x_linfv;
    c.entropy = conserved_snapshot(F0).entropy;
    c.epsilon0 = epsilon0;
    c.m_bar = m_bar;
    c.beta = beta;
    c.c4_tilde = c4_tilde;
    c.t1 = lifespan(c.winf_beta, c4_tilde);
    c.pass = c.entropy + c.l1x_linfv <= epsilon0 && c.winf_beta <= m_bar;
    return c;
}

// ---- entropy to L2/L1 inequality --------------------------------------------------

struct EntropyCheck {
    double lhs = 0;
    double rhs = 0;
    bool pass = false;
};

/// lhs = sum |F-mu|^2/(4 mu) where |F-mu| < mu, plus sum |F-mu|/4 where |F-mu| >= mu.
inline double entropy_split_lhs(const DistributionField& F) {
    const auto& mu = F.vel.mu();
    const double w = F.space.dx() * F.vel.cell_volume();
    CompensatedSum s;
    for (int c = 0; c < F.cells(); ++c)
        for (std::size_t j = 0; j < F.nodes(); ++j) {
            const double d = std::abs(F.at(c, j) - mu[j]);
            s.add(w * (d >= mu[j] ? 0.25 * d : d * d / (4.0 * mu[j])));
        }
    return s.value();
}

inline EntropyCheck check_entropy_split(const DistributionField& F, const ConservedSnapshot& snapshot0,
                                    double tol = 1e-12) {
    EntropyCheck r;
    r.lhs = entropy_split_lhs(F);
    r.rhs = snapshot0.entropy;
    r.pass = r.lhs <= r.rhs * (1 + tol);
    return r;
}

// ---- nonlinear estimate ---------------------------------------------------------------

/// p = 1 + (3 + g) / (4 (9 - g)).
inline double p_exponent(double gamma) {
    if (!(gamma > -3 && gamma <= 1)) throw Error("p_exponent: gamma must lie in (-3, 1]");
    return 1.0 + (3.0 + gamma) / (4.0 * (9.0 - gamma));
}

struct PConditions {
    double p = 0;
    bool le_9_8 = false, conj_ge_9 = false, soft_moment = false, hard_moment = false;
    bool all() const { return p > 1 && le_9_8 && conj_ge_9 && soft_moment && hard_moment; }
};

inline PConditions p_conditions(double gamma) {
    PConditions c;
    c.p = p_exponent(gamma);
    c.le_9_8 = c.p <= 9.0 / 8.0;
    c.conj_ge_9 = c.p / (c.p - 1.0) >= 9.0;
    c.soft_moment = c.p * (gamma - 3.0) / 2.0 > -3.0;
    c.hard_moment = c.p * gamma > -3.0;
    return c;
}

struct NonlinearCheck {
    double max_ratio = 0;
    double max_ratio_gain = 0;
    double max_ratio_loss = 0;
    double p = 0;
    std::size_t samples = 0;

    nlohmann::json to_json() const {
        return {{"max_ratio", max_ratio},
                {"max_ratio_gain", max_ratio_gain},
                {"max_ratio_loss", max_ratio_loss},
                {"p", p},
                {"samples", samples}};
    }
};

/// Seeded (cell, node) samples.
inline std::vector<std::pair<int, std::size_t>> sample_nodes(int cells, std::size_t nodes, std::size_t count,
                                                             std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, std::size_t>> out;
    for (std::size_t k = 0; k < count; ++k) {
        const int c = int(rng() % std::uint64_t(cells));
        const std::size_t j = std::size_t(rng() % std::uint64_t(nodes));
        out.push_back({c, j});
    }
    return out;
}

/// Ratios |w_a Gamma_pm(f, f)| / RHS at the sampled nodes, with
///   RHS_- = nu |w_a f|_inf |f|_inf^{(4p+1)/(5p)} (int |f(y, u)| du)^{(p-1)/(5p)},
///   RHS_+ = same with |w_{1/2} f|_inf.
/// A vanishing right-hand side with vanishing left-hand side counts as ratio 0.
inline NonlinearCheck check_nonlinear_estimate(const PerturbationField& f, double alpha, const CollisionOperator& op,
                                      const std::vector<std::pair<int, std::size_t>>& samples) {
    const auto& g = op.grid();
    if (!(f.vel == g)) throw Error("check_nonlinear_estimate: grid mismatch");
    NonlinearCheck r;
    r.p = p_exponent(op.params().gamma);
    r.samples = samples.size();
    const double p = r.p;
    const double e1 = (4 * p + 1) / (5 * p), e2 = (p - 1) / (5 * p);
    const double wa = norms(f, alpha).winf;
    const double sup0 = norms(f, 0).winf;
    const double sup_half = norms(f, 0.5).winf;
    const std::size_t N = g.size();
    const double h3 = g.cell_volume();
    int last_cell = -1;
    PaddedProfile P;
    double l1 = 0;
    for (const auto& [c, j] : samples) {
        const double* fc = f.cell(c);
        if (c != last_cell) {
            const auto rho = perturbation_profile(g, fc);
            P = op.pad_profile(rho.data(), 1);
            CompensatedSum s;
            for (std::size_t u = 0; u < N; ++u) s.add(std::abs(fc[u]) * h3);
            l1 = s.value();
            last_cell = c;
        }
        const double w = std::pow(1.0 + g.v2()[j], 0.5 * alpha);
        const double plus = g.sqrt_mu()[j] * op.gain_sum_node(P, P, j, 0, false);
        int vx, vy, vz;
        g.split(j, vx, vy, vz);
        const int n = g.n();
        double conv = 0;
        for (int ux = 0; ux < n; ++ux)
            for (int uy = 0; uy < n; ++uy)
                for (int uz = 0; uz < n; ++uz) {
                    const std::size_t u = g.index(ux, uy, uz);
                    conv += op.pair_weight(ux - vx, uy - vy, uz - vz) * g.sqrt_mu()[u] * fc[u];
                }
        const double minus = two_pi * op.params().b_amplitude * conv * fc[j];
        const double nu = op.nu()[j];
        const double rl = nu * wa * std::pow(sup0, e1) * std::pow(l1, e2);
        const double rg = nu * wa * std::pow(sup_half, e1) * std::pow(l1, e2);
        const double ql = rl > 0 ? std::abs(w * minus) / rl : 0.0;
        const double qg = rg > 0 ? std::abs(w * plus) / rg : 0.0;
        r.max_ratio_loss = std::max(r.max_ratio_loss, ql);
        r.max_ratio_gain = std::max(r.max_ratio_gain, qg);
    }
    r.max_ratio = std::max(r.max_ratio_gain, r.max_ratio_loss);
    return r;
}

// ---- density bound --------------------------------------------------------------------

struct DensityCheck {
    double sup_dev = 0;
    double t0 = 0;
    bool pass = false;
};

/// sup over rows with t >= t0 of |rho - 1|; pass iff <= 3/4.
inline DensityCheck check_density_bound(const DiagnosticsSeries& s, double t0) {
    DensityCheck r;
    r.t0 = t0;
    bool any = false;
    for (const auto& row : s.rows) {
        if (row.t < t0) continue;
        any = true;
        r.sup_dev = std::max({r.sup_dev, std::abs(row.rho_min - 1.0), std::abs(row.rho_max - 1.0)});
    }
    if (!any) throw Error("check_density_bound: no report at or after t0");
    r.pass = r.sup_dev <= 0.75;
    return r;
}

// ---- decay fits -----------------------------------------------------------------------

enum class DecayModel { exponential, algebraic };

inline const char* to_string(DecayModel m) { return m == DecayModel::exponential ? "exp" : "alg"; }

struct DecayFit {
    DecayModel model = DecayModel::exponential;
    double rate = 0;  // sigma0, or the algebraic exponent
    double amplitude = 0;
    double residual = 0;  // RMS of log residuals
    double t_lo = 0, t_hi = 0;
    std::size_t samples = 0;
    bool pass() const { return rate > 0 && std::isfinite(residual); }

    nlohmann::json to_json() const {
        return {{"model", to_string(model)}, {"rate", rate},   {"amplitude", amplitude}, {"residual", residual},
                {"window", {t_lo, t_hi}},     {"samples", samples}, {"pass", pass()}};
    }
};

/// Least squares of log y against t (exponential) or log(1+t) (algebraic) over
/// samples with t in [t_lo, t_hi]. The window ends before the first
/// non-positive sample.
inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& y, DecayModel model, double t_lo,
                          double t_hi) {
    if (t.size() != y.size()) throw Error("fit_decay: size mismatch");
    std::vector<double> xs, ls;
    double last = t_lo;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] < t_lo || t[i] > t_hi) continue;
        if (!(y[i] > 0) || !std::isfinite(y[i])) break;
        xs.push_back(model == DecayModel::exponential ? t[i] : std::log1p(t[i]));
        ls.push_back(std::log(y[i]));
        last = t[i];
    }
    if (xs.size() < 5) throw Error("fit_decay: fewer than 5 positive samples in the window");
    const double n = double(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ls[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ls[i] - my);
    }
    if (!(sxx > 0)) throw Error("fit_decay: degenerate window");
    const double slope = sxy / sxx, icpt = my - slope * mx;
    double ss = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ls[i] - (icpt + slope * xs[i]);
        ss += e * e;
    }
    DecayFit f;
    f.model = model;
    f.rate = -slope;
    f.amplitude = std::exp(icpt);
    f.residual = std::sqrt(ss / n);
    f.t_lo = t_lo;
    f.t_hi = last;
    f.samples = xs.size();
    return f;
}

/// Fit of the winf column; t_lo < 0 selects the time of the fifth window.
inline DecayFit fit_decay(const DiagnosticsSeries& s, DecayModel model, double t_lo = -1,
                          double t_hi = std::numeric_limits<double>::infinity()) {
    std::vector<double> t, y;
    for (const auto& r : s.rows) {
        t.push_back(r.t);
        y.push_back(r.winf);
    }
    if (t_lo < 0) t_lo = t.size() > 5 ? t[5] : 0.0;
    return fit_decay(t, y, model, t_lo, t_hi);
}

/// 1 + 2/|g| - delta, the algebraic exponent targeted for soft potentials.
inline double soft_decay_exponent(double gamma, double delta) { return 1.0 + 2.0 / std::abs(gamma) - delta; }

}  // namespace boltz
