#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "collision.hpp"

namespace boltz {

enum class Stepper { kaniel_shinbrot, mild };

inline const char* to_string(Stepper s) { return s == Stepper::mild ? "mild" : "ks"; }

struct StepConfig {
    double dt = 0.05;          // longest window
    double t_end = 1.0;
    double picard_tol = 1e-8;  // relative to max(1, |w^{1/2} f|)
    int picard_max = 40;
    double c4_tilde = 1.0;
    int substeps = 4;
    double beta = 4.5;  // > max{3, 3 + gamma} for every gamma in (-3, 1]
    Stepper stepper = Stepper::kaniel_shinbrot;
    bool conservative = false;  // remove the moment defect of Q per stage and restore the totals per window
    int report_every = 1;       // windows per report row
    double min_window = 1e-6;

    void validate() const {
        if (!(dt > 0)) throw Error("step config: dt must be positive");
        if (!(t_end >= 0)) throw Error("step config: t_end must be >= 0");
        if (!(picard_tol > 0)) throw Error("step config: picard_tol must be positive");
        if (picard_max < 1) throw Error("step config: picard_max must be >= 1");
        if (!(c4_tilde >= 1)) throw Error("step config: c4_tilde must be >= 1");
        if (substeps < 1) throw Error("step config: substeps must be >= 1");
        if (!(beta >= 0)) throw Error("step config: beta must be >= 0");
        if (report_every < 1) throw Error("step config: report_every must be >= 1");
        if (!(min_window > 0)) throw Error("step config: min_window must be positive");
    }
};

/// t1 = 1 / (8 c4 (1 + |w_beta f0|_inf)).
inline double lifespan(double winf0, double c4_tilde = 1.0) {
    if (winf0 < 0 || c4_tilde < 1) throw Error("lifespan: need winf0 >= 0 and c4_tilde >= 1");
    return 1.0 / (8.0 * c4_tilde * (1.0 + winf0));
}

/// Foot of the characteristic through x after time dt along the slab axis.
inline double trace_back(double x, const Vec3& v, double dt, const SpatialGrid& grid) {
    if (grid.dimension == 0) return x;
    return grid.wrap(x - v.x * dt);
}

// ---- helpers ------------------------------------------------------------------

namespace detail {

/// Linear periodic interpolation of cell-centred data: value at x is
/// w0 * data[c0] + w1 * data[c1].
struct Foot {
    int c0 = 0, c1 = 0;
    double w0 = 1, w1 = 0;
};

inline Foot foot(const SpatialGrid& s, int cell, double shift) {
    Foot f;
    if (s.dimension == 0) {
        f.c0 = f.c1 = cell;
        return f;
    }
    const int n = s.n_cells;
    const double pos = s.wrap(s.center(cell) - shift) / s.dx() - 0.5;
    const double fl = std::floor(pos);
    const double t = pos - fl;
    int c0 = int(fl) % n;
    if (c0 < 0) c0 += n;
    f.c0 = c0;
    f.c1 = (c0 + 1) % n;
    f.w0 = 1.0 - t;
    f.w1 = t;
    return f;
}

/// phi1 = (1 - e^{-l}) / l and phi2 = (1 - (1 + l) e^{-l}) / l^2.
/// Taylor series below l = 0.5, where the closed form cancels.
inline void phi12(double l, double& p1, double& p2) {
    if (l < 0.5) {
        // phi1 = sum (-l)^k / (k+1)!, phi2 = sum (-l)^k (k+1) / (k+2)!
        double term = 0.5, s1 = 0, s2 = 0;  // term = (-l)^k / (k+2)!
        for (int k = 0; k < 20; ++k) {
            s1 += term * (k + 2);
            s2 += term * (k + 1);
            term *= -l / (k + 3);
        }
        p1 = s1;
        p2 = s2;
        return;
    }
    const double e = std::exp(-l);
    p1 = -std::expm1(-l) / l;
    p2 = (1.0 - (1.0 + l) * e) / (l * l);
}

}  // namespace detail

/// Loss frequency and gain of one field sequence, cell-major like the fields.
struct StageCollision {
    std::vector<std::vector<double>> g, G;
};

/// Evaluates g and Q+ for every stage and cell in one batched call.
inline StageCollision stage_collision(const std::vector<const DistributionField*>& stages, const CollisionOperator& op,
                                      bool conservative = false) {
    const std::size_t S = stages.size();
    StageCollision r;
    r.g.resize(S);
    r.G.resize(S);
    if (S == 0) return r;
    const std::size_t N = op.grid().size();
    const int C = stages[0]->cells();
    const std::size_t B = S * C;
    std::vector<double> F(N * B), G(N * B), g(N * B);
    for (std::size_t s = 0; s < S; ++s)
        for (int c = 0; c < C; ++c) {
            const double* p = stages[s]->cell(c);
            const std::size_t b = s * C + c;
            for (std::size_t j = 0; j < N; ++j) F[j * B + b] = p[j];
        }
    collision_batch(op, F.data(), B, G.data(), g.data());
    std::vector<double> Q(N);
    for (std::size_t s = 0; s < S; ++s) {
        r.g[s].resize(N * C);
        r.G[s].resize(N * C);
        for (int c = 0; c < C; ++c) {
            const std::size_t b = s * C + c;
            for (std::size_t j = 0; j < N; ++j) {
                r.g[s][c * N + j] = g[j * B + b];
                r.G[s][c * N + j] = G[j * B + b];
            }
            if (conservative) {
                for (std::size_t j = 0; j < N; ++j) Q[j] = G[j * B + b] - g[j * B + b] * F[j * B + b];
                const std::vector<double> Q0 = Q;
                conservative_correction(op.grid(), Q.data());
                for (std::size_t j = 0; j < N; ++j) r.G[s][c * N + j] += Q[j] - Q0[j];
            }
        }
    }
    return r;
}

/// Integrates y' = -a y + b along characteristics over the window [0, t] with
/// y(0) = y0 and stage values a_l, b_l at t_l = l t / S (cell-major arrays).
/// The exponent uses the trapezoid rule; the source is linear between stages
/// and integrated exactly against the exponential. Returns y at t_1..t_S.
inline std::vector<std::vector<double>> characteristic_integrate(const VelocityGrid& vel, const SpatialGrid& space,
                                                                 const double* y0,
                                                                 const std::vector<const double*>& a,
                                                                 const std::vector<const double*>& b, double t) {
    const int S = int(a.size()) - 1;
    const int C = space.n_cells;
    const std::size_t N = vel.size();
    const double dt = t / S;
    const int n = vel.n();
    std::vector<std::vector<double>> out(S, std::vector<double>(N * C));
    // foot tables per (velocity x-index, lag)
    std::vector<detail::Foot> feet(std::size_t(n) * (S + 1) * C);
    for (int ix = 0; ix < n; ++ix)
        for (int lag = 0; lag <= S; ++lag)
            for (int c = 0; c < C; ++c)
                feet[(std::size_t(ix) * (S + 1) + lag) * C + c] = detail::foot(space, c, vel.coord(ix) * lag * dt);
    parallel_for(std::size_t(C), [&](std::size_t cu) {
        const int c = int(cu);
        for (std::size_t j = 0; j < N; ++j) {
            int ix, iy, iz;
            vel.split(j, ix, iy, iz);
            for (int k = 1; k <= S; ++k) {
                auto at = [&](const double* arr, int l) {
                    const detail::Foot& f = feet[(std::size_t(ix) * (S + 1) + (k - l)) * C + c];
                    return f.w0 * arr[f.c0 * N + j] + f.w1 * arr[f.c1 * N + j];
                };
                double A = 0, acc = 0;
                double a_hi = at(a[k], k), b_hi = at(b[k], k);
                for (int l = k - 1; l >= 0; --l) {
                    const double a_lo = at(a[l], l), b_lo = at(b[l], l);
                    const double lam = 0.5 * dt * (a_lo + a_hi);
                    double p1, p2;
                    detail::phi12(lam, p1, p2);
                    acc += std::exp(-A) * dt * (p2 * b_lo + (p1 - p2) * b_hi);
                    A += lam;
                    a_hi = a_lo;
                    b_hi = b_lo;
                }
                acc += std::exp(-A) * at(y0, 0);
                out[k - 1][c * N + j] = acc;
            }
        }
    });
    return out;
}

/// One Kaniel-Shinbrot sweep over a window of length t. `prev` holds the
/// previous iterate at the S + 1 stage times (prev[0] is the data at time 0);
/// returns F^{n+1} at the same stages, stage 0 being F0.
inline std::vector<DistributionField> ks_linear_step(const std::vector<DistributionField>& prev,
                                                     const DistributionField& F0, double t,
                                                     const CollisionOperator& op, bool conservative = false,
                                                     const StageCollision* cached = nullptr) {
    if (prev.size() < 2) throw Error("ks_linear_step: need at least two stages");
    std::vector<const DistributionField*> ptrs;
    for (const auto& f : prev) ptrs.push_back(&f);
    const StageCollision sc = cached ? *cached : stage_collision(ptrs, op, conservative);
    std::vector<const double*> a, b;
    for (std::size_t l = 0; l < prev.size(); ++l) {
        a.push_back(sc.g[l].data());
        b.push_back(sc.G[l].data());
    }
    auto ys = characteristic_integrate(op.grid(), F0.space, F0.values.data(), a, b, t);
    std::vector<DistributionField> out;
    out.push_back(F0);
    for (auto& y : ys) {
        DistributionField F(F0.space, F0.vel);
        F.values = std::move(y);
        for (double x : F.values)
            if (!(x >= 0)) throw Error("ks_linear_step: negative or non-finite value (interpolation bug)");
        out.push_back(std::move(F));
    }
    return out;
}

/// Same window with F_prev frozen in time.
inline DistributionField ks_linear_step(const DistributionField& F_prev, const DistributionField& F0, double t,
                                        int substeps, const CollisionOperator& op) {
    std::vector<DistributionField> prev(substeps + 1, F_prev);
    return ks_linear_step(prev, F0, t, op).back();
}

/// One sweep of the mild form in f: f(t) = e^{-nu t} f0(x - vt) + int e^{-nu(t-s)} (K f + Gamma(f, f)),
/// with K f + Gamma(f, f) = Q(F, F)/sqrt(mu) + nu f evaluated on the previous iterate.
inline std::vector<DistributionField> mild_step(const std::vector<DistributionField>& prev,
                                                const DistributionField& F0, double t,
                                                const CollisionOperator& op, bool conservative = false,
                                                const StageCollision* cached = nullptr) {
    const auto& vel = op.grid();
    const std::size_t N = vel.size();
    const int C = F0.cells();
    std::vector<const DistributionField*> ptrs;
    for (const auto& f : prev) ptrs.push_back(&f);
    const StageCollision sc = cached ? *cached : stage_collision(ptrs, op, conservative);
    std::vector<double> nu_field(N * C);
    for (int c = 0; c < C; ++c)
        for (std::size_t j = 0; j < N; ++j) nu_field[c * N + j] = op.nu()[j];
    std::vector<std::vector<double>> src(prev.size(), std::vector<double>(N * C, 0.0));
    const auto& mu = vel.mu();
    const auto& smu = vel.sqrt_mu();
    for (std::size_t l = 0; l < prev.size(); ++l)
        for (int c = 0; c < C; ++c)
            for (std::size_t j = 0; j < N; ++j) {
                if (mu[j] < tail_mask) continue;
                const std::size_t k = c * N + j;
                const double F = prev[l].values[k];
                src[l][k] = (sc.G[l][k] - sc.g[l][k] * F) / smu[j] + op.nu()[j] * (F - mu[j]) / smu[j];
            }
    const PerturbationField f0 = to_perturbation(F0);
    std::vector<const double*> a, b;
    for (std::size_t l = 0; l < prev.size(); ++l) {
        a.push_back(nu_field.data());
        b.push_back(src[l].data());
    }
    auto ys = characteristic_integrate(vel, F0.space, f0.values.data(), a, b, t);
    std::vector<DistributionField> out;
    out.push_back(F0);
    for (auto& y : ys) {
        PerturbationField f(F0.space, F0.vel, 0.0);
        f.values = std::move(y);
        out.push_back(from_perturbation(f));
    }
    return out;
}

// ---- local solve ----------------------------------------------------------------

struct IterateTrace {
    std::vector<double> d;       // |w^{1/2}(f^{n+1} - f^n)|_inf over the window
    std::vector<double> ratios;  // d_{n+1} / d_n
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    bool partial = false;
    double bound_max = 0;    // sup over iterates and stages of |w_beta f^n|_inf
    double bound_limit = 0;  // 2 |w_beta f0|_inf
    bool bound_ok = true;

    double max_ratio() const {
        double r = 0;
        for (double x : ratios) r = std::max(r, x);
        return r;
    }
    nlohmann::json to_json() const {
        return {{"d", d},
                {"ratios", ratios},
                {"iterations", iterations},
                {"converged", converged},
                {"diverged", diverged},
                {"partial", partial},
                {"bound_max", bound_max},
                {"bound_limit", bound_limit},
                {"bound_ok", bound_ok}};
    }
};

struct LocalSolution {
    std::vector<DistributionField> stages;  // window stages, stages.back() at time t
    IterateTrace trace;
    const DistributionField& final() const { return stages.back(); }
};

/// Absolute slack on the iterate bound, covering round-off of an exact equilibrium.
inline constexpr double iterate_bound_slack = 1e-9;

/// Picard iteration over one window of length t from F^0 = mu.
inline LocalSolution local_solve(const DistributionField& F0, double t, const StepConfig& cfg,
                                 const CollisionOperator& op) {
    cfg.validate();
    const auto& vel = op.grid();
    const std::size_t N = vel.size();
    const double winf0 = norms(to_perturbation(F0), cfg.beta).winf;
    if (t > lifespan(winf0, cfg.c4_tilde) * (1 + 1e-12))
        throw Error("local_solve: window exceeds the lifespan t1");
    const int S = cfg.substeps;

    std::vector<double> wh(N), wf(N);
    for (std::size_t j = 0; j < N; ++j) {
        wf[j] = std::pow(1.0 + vel.v2()[j], 0.5 * cfg.beta);
        wh[j] = std::sqrt(wf[j]);
    }
    auto pert = [&](double F, std::size_t j) {
        return vel.mu()[j] < tail_mask ? 0.0 : (F - vel.mu()[j]) / vel.sqrt_mu()[j];
    };

    LocalSolution sol;
    IterateTrace& tr = sol.trace;
    tr.bound_limit = 2.0 * winf0;
    std::vector<DistributionField> cur(S + 1, DistributionField::equilibrium(F0.space, F0.vel));

    // the data at time 0 is the same for every iterate after the first
    std::vector<const DistributionField*> zero{&F0};
    const StageCollision sc0 = stage_collision(zero, op, cfg.conservative);
    int rising = 0;
    for (int it = 0; it < cfg.picard_max; ++it) {
        std::vector<const DistributionField*> ptrs;
        for (int l = (it == 0 ? 0 : 1); l <= S; ++l) ptrs.push_back(&cur[l]);
        StageCollision sc = stage_collision(ptrs, op, cfg.conservative);
        if (it > 0) {
            sc.g.insert(sc.g.begin(), sc0.g[0]);
            sc.G.insert(sc.G.begin(), sc0.G[0]);
        }
        auto next = cfg.stepper == Stepper::mild ? mild_step(cur, F0, t, op, cfg.conservative, &sc)
                                                 : ks_linear_step(cur, F0, t, op, cfg.conservative, &sc);
        double d = 0, scale = 0;
        for (int l = 1; l <= S; ++l)
            for (int c = 0; c < F0.cells(); ++c)
                for (std::size_t j = 0; j < N; ++j) {
                    const double fn = pert(next[l].at(c, j), j);
                    const double fo = pert(cur[l].at(c, j), j);
                    if (!std::isfinite(fn)) throw Error("local_solve: non-finite iterate");
                    d = std::max(d, wh[j] * std::abs(fn - fo));
                    scale = std::max(scale, wh[j] * std::abs(fn));
                    tr.bound_max = std::max(tr.bound_max, wf[j] * std::abs(fn));
                }
        if (!tr.d.empty()) {
            const double r = tr.d.back() > 0 ? d / tr.d.back() : (d > 0 ? std::numeric_limits<double>::infinity() : 0.0);
            tr.ratios.push_back(r);
            rising = r >= 1 ? rising + 1 : 0;
        }
        tr.d.push_back(d);
        tr.iterations = it + 1;
        cur = std::move(next);
        if (tr.bound_max > tr.bound_limit + iterate_bound_slack) tr.bound_ok = false;
        if (d <= cfg.picard_tol * std::max(1.0, scale)) {
            tr.converged = true;
            break;
        }
        if (rising >= 3) {
            tr.diverged = true;
            break;
        }
    }
    if (!tr.converged && !tr.diverged) tr.partial = true;
    sol.stages = std::move(cur);
    return sol;
}

// ---- run loop ------------------------------------------------------------------

struct DiagnosticsRow {
    double t = 0;
    ConservedSnapshot snap;
    double winf = 0;
    double linfx_l1v = 0;
    double rho_min = 0, rho_max = 0;
    double window = 0;
    int iterations = 0;
    double ratio = 0;
};

struct DiagnosticsSeries {
    std::vector<DiagnosticsRow> rows;
    double beta = 0;
    double t1_initial = 0;
    int windows = 0;
    int halvings = 0;
    int partial_windows = 0;
    double wall_seconds = 0;
    std::vector<double> window_lengths;
    std::vector<nlohmann::json> traces;
    DistributionField final_state;

    static const char* csv_columns() {
        return "t,M0,J0x,J0y,J0z,E0,entropy,winf,linfx_l1v,rho_min,rho_max,window,iterations,ratio";
    }

    /// `header` lines are written as "# ..." comments before the column row.
    void write_csv(std::ostream& os, const std::vector<std::string>& header = {}) const {
        for (const auto& h : header) os << "# " << h << '\n';
        os << csv_columns() << '\n';
        char buf[64];
        auto put = [&](double x, bool last = false) {
            std::snprintf(buf, sizeof buf, "%.17g", x);
            os << buf << (last ? '\n' : ',');
        };
        for (const auto& r : rows) {
            put(r.t);
            put(r.snap.M0);
            put(r.snap.J0.x);
            put(r.snap.J0.y);
            put(r.snap.J0.z);
            put(r.snap.E0);
            put(r.snap.entropy);
            put(r.winf);
            put(r.linfx_l1v);
            put(r.rho_min);
            put(r.rho_max);
            put(r.window);
            os << r.iterations << ',';
            put(r.ratio, true);
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json rs = nlohmann::json::array();
        for (const auto& r : rows)
            rs.push_back({{"t", r.t},
                          {"M0", r.snap.M0},
                          {"J0", {r.snap.J0.x, r.snap.J0.y, r.snap.J0.z}},
                          {"E0", r.snap.E0},
                          {"entropy", r.snap.entropy},
                          {"winf", r.winf},
                          {"linfx_l1v", r.linfx_l1v},
                          {"rho_min", r.rho_min},
                          {"rho_max", r.rho_max},
                          {"window", r.window},
                          {"iterations", r.iterations},
                          {"ratio", r.ratio}});
        return {{"beta", beta},
                {"t1_initial", t1_initial},
                {"windows", windows},
                {"halvings", halvings},
                {"partial_windows", partial_windows},
                {"wall_seconds", wall_seconds},
                {"rows", rs},
                {"traces", traces}};
    }
};

inline DiagnosticsRow diagnostics_row(const DistributionField& F, double t, double beta) {
    DiagnosticsRow r;
    r.t = t;
    r.snap = conserved_snapshot(F);
    const Norms nb = norms(to_perturbation(F), beta);
    r.winf = nb.winf;
    r.linfx_l1v = nb.linfx_l1v;
    r.rho_min = std::numeric_limits<double>::infinity();
    r.rho_max = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < F.cells(); ++c) {
        const double rho = cell_density(F, c);
        r.rho_min = std::min(r.rho_min, rho);
        r.rho_max = std::max(r.rho_max, rho);
    }
    return r;
}

class SolverAbort : public Error {
public:
    SolverAbort(const std::string& what, std::string dump) : Error(what), dump_path(std::move(dump)) {}
    std::string dump_path;
};

struct RunHooks {
    /// Called at t = 0 and at every report with the current state.
    std::function<void(double, const DistributionField&)> on_report;
    /// Called after every window with its trace.
    std::function<void(double, double, const IterateTrace&)> on_window;
    /// Writes a state dump on abort; returns its path.
    std::function<std::string(const DistributionField&)> dump;
    /// Checkpoint writer and cadence in windows (0 disables).
    std::function<void(double, const DistributionField&)> checkpoint;
    int checkpoint_every = 0;
    /// One summary line per window.
    std::ostream* log = nullptr;
};

/// Rescales F by 1 + a + b.v + c|v|^2, uniform in x, so the totals of {1, v, |v|^2}
/// match `target`. Undoes the slow drift from interpolating the loss term at foot points.
inline void restore_moments(DistributionField& F, const ConservedSnapshot& target) {
    const ConservedSnapshot now = conserved_snapshot(F);
    double rhs[5] = {target.M0 - now.M0, target.J0.x - now.J0.x, target.J0.y - now.J0.y, target.J0.z - now.J0.z,
                     target.E0 - now.E0};
    double A[5][5] = {};
    const double w = F.space.dx() * F.vel.cell_volume();
    for (int c = 0; c < F.cells(); ++c)
        for (std::size_t j = 0; j < F.nodes(); ++j) {
            const Vec3 v = F.vel.node(j);
            const double phi[5] = {1.0, v.x, v.y, v.z, F.vel.v2()[j]};
            const double f = w * F.at(c, j);
            for (int k = 0; k < 5; ++k)
                for (int l = 0; l < 5; ++l) A[k][l] += f * phi[k] * phi[l];
        }
    // Gaussian elimination with partial pivoting
    for (int k = 0; k < 5; ++k) {
        int p = k;
        for (int i = k + 1; i < 5; ++i)
            if (std::abs(A[i][k]) > std::abs(A[p][k])) p = i;
        if (!(std::abs(A[p][k]) > 0)) throw Error("restore_moments: singular moment matrix");
        std::swap(A[k], A[p]);
        std::swap(rhs[k], rhs[p]);
        for (int i = k + 1; i < 5; ++i) {
            const double m = A[i][k] / A[k][k];
            for (int l = k; l < 5; ++l) A[i][l] -= m * A[k][l];
            rhs[i] -= m * rhs[k];
        }
    }
    double x[5];
    for (int k = 4; k >= 0; --k) {
        double s = rhs[k];
        for (int l = k + 1; l < 5; ++l) s -= A[k][l] * x[l];
        x[k] = s / A[k][k];
    }
    std::vector<double> factor(F.nodes());
    for (std::size_t j = 0; j < F.nodes(); ++j) {
        const Vec3 v = F.vel.node(j);
        factor[j] = 1 + x[0] + x[1] * v.x + x[2] * v.y + x[3] * v.z + x[4] * F.vel.v2()[j];
        if (!(factor[j] > 0)) throw Error("restore_moments: correction too large to keep F >= 0");
    }
    for (int c = 0; c < F.cells(); ++c)
        for (std::size_t j = 0; j < F.nodes(); ++j) F.at(c, j) *= factor[j];
}

/// Chains local solves over windows of length min(dt, t1(current state)).
/// A diverging window is retried at half length.
inline DiagnosticsSeries run(const DistributionField& F0, const StepConfig& cfg, const CollisionOperator& op,
                             const RunHooks& hooks = RunHooks()) {
    cfg.validate();
    if (!(F0.vel == op.grid())) throw Error("run: velocity grid does not match the operator");
    const auto start = std::chrono::steady_clock::now();
    DiagnosticsSeries ser;
    ser.beta = cfg.beta;
    DistributionField F = F0;
    auto abort = [&](const std::string& msg) {
        std::string path;
        if (hooks.dump) path = hooks.dump(F);
        throw SolverAbort(msg, path);
    };
    for (double x : F.values)
        if (!(x >= 0) || !std::isfinite(x)) abort("run: initial data must be finite and nonnegative");

    double t = 0;
    DiagnosticsRow row0 = diagnostics_row(F, 0.0, cfg.beta);
    ser.rows.push_back(row0);
    ser.t1_initial = lifespan(row0.winf, cfg.c4_tilde);
    if (hooks.on_report) hooks.on_report(0.0, F);

    double winf = row0.winf;
    int since_report = 0;
    while (t < cfg.t_end * (1 - 1e-12)) {
        double w = std::min({cfg.dt, lifespan(winf, cfg.c4_tilde), cfg.t_end - t});
        LocalSolution sol;
        for (;;) {
            sol = local_solve(F, w, cfg, op);
            if (!sol.trace.diverged && sol.trace.bound_ok) break;
            w *= 0.5;
            ++ser.halvings;
            if (w < cfg.min_window) abort("run: window fell below min_window without contraction");
        }
        const DistributionField& Fn = sol.final();
        for (double x : Fn.values) {
            if (!std::isfinite(x)) abort("run: non-finite value");
            if (x < 0) abort("run: positivity violation");
        }
        F = Fn;
        if (cfg.conservative) {
            try {
                restore_moments(F, row0.snap);
            } catch (const Error& e) {
                abort(e.what());
            }
        }
        t += w;
        ++ser.windows;
        ser.window_lengths.push_back(w);
        if (sol.trace.partial) ++ser.partial_windows;
        ser.traces.push_back(sol.trace.to_json());
        if (hooks.on_window) hooks.on_window(t, w, sol.trace);
        if (hooks.checkpoint && hooks.checkpoint_every > 0 && ser.windows % hooks.checkpoint_every == 0)
            hooks.checkpoint(t, F);

        DiagnosticsRow r = diagnostics_row(F, t, cfg.beta);
        winf = r.winf;
        r.window = w;
        r.iterations = sol.trace.iterations;
        r.ratio = sol.trace.max_ratio();
        if (hooks.log) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "t=%.6f window=%.3e iters=%d ratio=%.3f winf=%.4e entropy=%.6e rho=[%.4f,%.4f]%s\n",
                          t, w, r.iterations, r.ratio, r.winf, r.snap.entropy, r.rho_min, r.rho_max,
                          sol.trace.partial ? " partial" : "");
            *hooks.log << buf << std::flush;
        }
        const bool last = !(t < cfg.t_end * (1 - 1e-12));
        if (++since_report >= cfg.report_every || last) {
            since_report = 0;
            ser.rows.push_back(r);
            if (hooks.on_report) hooks.on_report(t, F);
        }
    }
    ser.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ser.final_state = std::move(F);
    return ser;
}

}  // namespace boltz
