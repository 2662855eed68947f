#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "interpolation.hpp"
#include "phase.hpp"
#include "quadrature.hpp"

namespace boltz {

struct KernelParams {
    double gamma = 1.0;
    double b_amplitude = 1.0;
    double soft_regularization = 0.0;

    void validate() const {
        if (!(gamma > -3.0 && gamma <= 1.0)) throw Error("kernel: gamma must lie in (-3, 1]");
        if (!(b_amplitude > 0)) throw Error("kernel: b_amplitude must be positive");
        if (!(soft_regularization >= 0)) throw Error("kernel: soft_regularization must be >= 0");
    }

    /// |z|^gamma with the relative-speed floor applied for gamma < 0. Zero at z = 0
    /// unless the floor is active.
    double speed_power(double r) const {
        if (gamma < 0 && r < soft_regularization) r = soft_regularization;
        if (r == 0.0) return 0.0;
        return gamma == 1.0 ? r : std::pow(r, gamma);
    }
};

inline double kernel_B(const Vec3& rel, const Vec3& omega, const KernelParams& p) {
    const double r = norm(rel);
    if (r == 0.0) return 0.0;
    const double c = std::abs(dot(rel, omega)) / r;
    return p.speed_power(r) * p.b_amplitude * c;
}

/// Returns (v', u').
inline std::pair<Vec3, Vec3> post_collision(const Vec3& v, const Vec3& u, const Vec3& omega) {
    const double s = dot(v - u, omega);
    return {v - s * omega, u + s * omega};
}

/// Integral of |z|^gamma (with floor) over the lattice cell centred at z = 0.
/// Uses the divergence form: the cube is the union of six pyramids with apex at
/// the origin, each reduced to a smooth integral over its face.
inline double diagonal_cell_integral(double h, const KernelParams& p) {
    const double g = p.gamma, eps = g < 0 ? p.soft_regularization : 0.0;
    auto Phi = [&](double R) {
        if (eps > 0) {
            const double e3 = std::pow(eps, g);
            if (R <= eps) return e3 * R * R * R / 3.0;
            return e3 * eps * eps * eps / 3.0 + (std::pow(R, 3 + g) - std::pow(eps, 3 + g)) / (3 + g);
        }
        return std::pow(R, 3 + g) / (3 + g);
    };
    const double a = 0.5 * h;
    const Rule1D r = composite_gl(-a, a, 8, 8);
    CompensatedSum s;
    for (std::size_t i = 0; i < r.x.size(); ++i)
        for (std::size_t j = 0; j < r.x.size(); ++j) {
            const double R = std::sqrt(a * a + r.x[i] * r.x[i] + r.x[j] * r.x[j]);
            s.add(r.w[i] * r.w[j] * a * Phi(R) / (R * R * R));
        }
    return 6.0 * s.value();
}

/// E|v - U|^gamma for U standard normal in 3D, times 2 pi C_b: the continuum
/// collision frequency. |v - U| follows a noncentral chi law with 3 degrees of
/// freedom.
inline double nu_exact(double speed, const KernelParams& p) {
    const double lam = speed;
    auto density = [&](double r) {
        const double gauss = std::exp(-0.5 * (r * r + lam * lam)) / std::sqrt(two_pi);
        const double sh = lam * r > 1e-8 ? 2.0 * r * std::sinh(lam * r) / lam : 2.0 * r * r;
        return sh * gauss;
    };
    // r = s^2 near the origin tames r^(2+gamma) for soft potentials
    CompensatedSum sum;
    const Rule1D inner = composite_gl(0.0, 1.0, 16, 8);
    for (std::size_t i = 0; i < inner.x.size(); ++i) {
        const double s = inner.x[i], r = s * s;
        sum.add(inner.w[i] * 2.0 * s * p.speed_power(r) * density(r));
    }
    const double hi = 1.0 + lam + 14.0;
    const Rule1D outer = composite_gl(1.0, hi, 64, 8);
    for (std::size_t i = 0; i < outer.x.size(); ++i) {
        const double r = outer.x[i];
        sum.add(outer.w[i] * p.speed_power(r) * density(r));
    }
    return two_pi * p.b_amplitude * sum.value();
}

struct GainOptions {
    /// Evaluate interpolated ratios as max(0, R) (distributions) or signed (perturbations).
    bool clamp = true;
    /// Radius outside which every profile in the batch vanishes on the lattice
    /// (support at least three nodes inside the box). Enables exact pair pruning.
    double support_radius = std::numeric_limits<double>::infinity();
};

/// Discrete cutoff collision operator on one velocity lattice.
///
/// Gain terms are written for ratio profiles R = F/mu (or f/sqrt(mu)):
///   Q+(v) = mu(v) S(v),
///   S(v)  = C_b sum_{u != v} h^3 |u-v|^g mu(u) sum_hemi 2 w c R1(u') R2(v') + diagonal,
/// using mu(u')mu(v') = mu(u)mu(v). The hemisphere is aligned with u - v.
class CollisionOperator {
public:
    CollisionOperator() : CollisionOperator(VelocityGrid(), KernelParams()) {}
    CollisionOperator(VelocityGrid g, KernelParams p, SphereQuadrature s = SphereQuadrature(),
                      Interp m = Interp::quadratic)
        : grid_(std::move(g)), params_(p), sphere_(std::move(s)), interp_(m) {
        params_.validate();
        pad_ = collision_pad(grid_);
        const int n = grid_.n(), w = 2 * n - 1;
        const double h = grid_.spacing(), h3 = grid_.cell_volume();
        diag_ = diagonal_cell_integral(h, params_);
        pow_.resize(std::size_t(w) * w * w);
        for (int a = -(n - 1); a < n; ++a)
            for (int b = -(n - 1); b < n; ++b)
                for (int c = -(n - 1); c < n; ++c) {
                    const double r = h * std::sqrt(double(a * a + b * b + c * c));
                    pow_[pow_index(a, b, c)] = (a == 0 && b == 0 && c == 0) ? diag_ : h3 * params_.speed_power(r);
                }
        nu_.resize(grid_.size());
        convolve(grid_.mu().data(), 1, nu_.data());
        for (auto& x : nu_) x *= two_pi * params_.b_amplitude;
    }

    const VelocityGrid& grid() const { return grid_; }
    const KernelParams& params() const { return params_; }
    const SphereQuadrature& sphere() const { return sphere_; }
    Interp interp() const { return interp_; }
    int pad() const { return pad_; }
    /// Cell integral of |z|^gamma replacing the omitted diagonal u = v.
    double diagonal() const { return diag_; }
    /// h^3 |z|^gamma for the lattice offset (a, b, c); diagonal() at the origin.
    double pair_weight(int a, int b, int c) const { return pow_[pow_index(a, b, c)]; }

    /// Collision frequency at the lattice nodes.
    const std::vector<double>& nu() const { return nu_; }

    /// Collision frequency at an arbitrary velocity (lattice value on nodes).
    double nu_at(const Vec3& v) const {
        const double h = grid_.spacing();
        int idx[3];
        bool on_node = true;
        for (int a = 0; a < 3; ++a) {
            const double s = (v[a] + grid_.v_max()) / h - 0.5;
            idx[a] = int(std::lround(s));
            if (idx[a] < 0 || idx[a] >= grid_.n() || std::abs(s - idx[a]) > 1e-12) on_node = false;
        }
        if (on_node) return nu_[grid_.index(idx[0], idx[1], idx[2])];
        CompensatedSum s;
        const auto& mu = grid_.mu();
        for (std::size_t j = 0; j < grid_.size(); ++j)
            s.add(grid_.cell_volume() * params_.speed_power(norm(grid_.node(j) - v)) * mu[j]);
        return two_pi * params_.b_amplitude * s.value();
    }

    /// out[j*B + b] = sum_u pair_weight(u - j) X[u*B + b].
    void convolve(const double* X, std::size_t B, double* out) const {
        const int n = grid_.n();
        const std::size_t N = grid_.size();
        parallel_for(N, [&](std::size_t j) {
            int vx, vy, vz;
            grid_.split(j, vx, vy, vz);
            if (B == 1) {
                double acc = 0;
                for (int ux = 0; ux < n; ++ux)
                    for (int uy = 0; uy < n; ++uy) {
                        const double* p = &pow_[pow_index(ux - vx, uy - vy, -vz)];
                        const double* x = X + grid_.index(ux, uy, 0);
                        double r = 0;
                        for (int uz = 0; uz < n; ++uz) r += p[uz] * x[uz];
                        acc += r;
                    }
                out[j] = acc;
                return;
            }
            double* o = out + j * B;
            for (std::size_t b = 0; b < B; ++b) o[b] = 0;
            for (int ux = 0; ux < n; ++ux)
                for (int uy = 0; uy < n; ++uy)
                    for (int uz = 0; uz < n; ++uz) {
                        const double p = pow_[pow_index(ux - vx, uy - vy, uz - vz)];
                        const double* x = X + grid_.index(ux, uy, uz) * B;
                        for (std::size_t b = 0; b < B; ++b) o[b] += p * x[b];
                    }
        });
    }

    /// Loss frequency g = 2 pi C_b sum_u h^3|u-v|^g F(u), so Q-(F, G)(v) = g(v) G(v).
    void loss_frequency(const double* F, std::size_t B, double* g) const {
        convolve(F, B, g);
        const double s = two_pi * params_.b_amplitude;
        for (std::size_t k = 0; k < grid_.size() * B; ++k) g[k] *= s;
    }

    PaddedProfile pad_profile(const double* R, std::size_t B) const { return PaddedProfile(grid_, pad_, R, B); }

    /// Gain sums S for every node: out[j*B + b].
    void gain_sum(const PaddedProfile& R1, const PaddedProfile& R2, double* out,
                  const GainOptions& opt = GainOptions()) const {
        check_profiles(R1, R2);
        if (interp_ == Interp::quadratic) gain_sum_impl<Interp::quadratic>(R1, R2, out, opt);
        else gain_sum_impl<Interp::linear>(R1, R2, out, opt);
    }

    /// Gain sum S at a single node, same quadrature as gain_sum.
    double gain_sum_node(const PaddedProfile& R1, const PaddedProfile& R2, std::size_t j, std::size_t b,
                         bool clamp) const {
        check_profiles(R1, R2);
        return interp_ == Interp::quadratic ? gain_node_impl<Interp::quadratic>(R1, R2, j, b, clamp)
                                            : gain_node_impl<Interp::linear>(R1, R2, j, b, clamp);
    }

    /// Interpolated ratio profile at an arbitrary velocity.
    double eval_profile(const PaddedProfile& R, const Vec3& w, std::size_t b = 0) const {
        return interp_ == Interp::quadratic ? R.eval<Interp::quadratic>(w, b) : R.eval<Interp::linear>(w, b);
    }

    /// Per-pair quadrature geometry for lattice offset (a, b, c) = u - v.
    /// For each hemisphere node: displacement of v' from v in index units and
    /// the weight 2 w cos(theta).
    struct PairNode {
        double dv[3];
        double du[3];
        double weight;
    };
    void pair_nodes(int a, int b, int c, std::vector<PairNode>& out) const {
        const auto& hemi = sphere_.hemisphere();
        out.resize(hemi.size());
        const double h = grid_.spacing();
        const Vec3 z{a * h, b * h, c * h};
        const double zn = norm(z);
        const Vec3 zh = (1.0 / zn) * z;
        Vec3 e1, e2;
        complete_frame(zh, e1, e2);
        const int off[3] = {a, b, c};
        for (std::size_t q = 0; q < hemi.size(); ++q) {
            const Vec3 om = SphereQuadrature::rotate(hemi[q].omega, zh, e1, e2);
            const double cth = hemi[q].omega.z;
            const Vec3 d = (zn * cth / h) * om;
            for (int ax = 0; ax < 3; ++ax) {
                out[q].dv[ax] = d[ax];
                out[q].du[ax] = off[ax] - d[ax];
            }
            out[q].weight = hemi[q].weight * cth;
        }
    }

private:
    std::size_t pow_index(int a, int b, int c) const {
        const int n = grid_.n(), w = 2 * n - 1;
        return (std::size_t(a + n - 1) * w + (b + n - 1)) * w + (c + n - 1);
    }

    void check_profiles(const PaddedProfile& R1, const PaddedProfile& R2) const {
        if (R1.n() != grid_.n() || R2.n() != grid_.n() || R1.pad() != pad_ || R2.pad() != pad_ ||
            R1.batch() != R2.batch())
            throw Error("collision: profile layout mismatch");
    }

    template <Interp M>
    double gain_node_impl(const PaddedProfile& R1, const PaddedProfile& R2, std::size_t j, std::size_t bi,
                          bool clamp) const {
        const int n = grid_.n();
        int vx, vy, vz;
        grid_.split(j, vx, vy, vz);
        const auto& mu = grid_.mu();
        std::vector<PairNode> nodes;
        double S = 0;
        for (int a = -(n - 1); a < n; ++a) {
            if (vx + a < 0 || vx + a >= n) continue;
            for (int b = -(n - 1); b < n; ++b) {
                if (vy + b < 0 || vy + b >= n) continue;
                for (int c = -(n - 1); c < n; ++c) {
                    if (vz + c < 0 || vz + c >= n || (a == 0 && b == 0 && c == 0)) continue;
                    pair_nodes(a, b, c, nodes);
                    double acc = 0;
                    for (const auto& q : nodes) {
                        double r1 = R1.eval_from_node<M>(vx, vy, vz, q.du, bi);
                        double r2 = R2.eval_from_node<M>(vx, vy, vz, q.dv, bi);
                        if (clamp) {
                            r1 = std::max(r1, 0.0);
                            r2 = std::max(r2, 0.0);
                        }
                        acc += q.weight * r1 * r2;
                    }
                    S += pow_[pow_index(a, b, c)] * mu[grid_.index(vx + a, vy + b, vz + c)] * acc;
                }
            }
        }
        const std::size_t pj = R1.node_flat(vx, vy, vz) * R1.batch() + bi;
        double d1 = R1.data()[pj], d2 = R2.data()[pj];
        if (clamp) {
            d1 = std::max(d1, 0.0);
            d2 = std::max(d2, 0.0);
        }
        return params_.b_amplitude * (S + two_pi * diag_ * mu[j] * d1 * d2);
    }

    struct Box {
        int x0 = 0, y0 = 0, z0 = 0, lx = 0, ly = 0, lz = 0;
        std::size_t size() const { return std::size_t(lx) * ly * lz; }
        bool empty() const { return lx <= 0 || ly <= 0 || lz <= 0; }
    };

    template <Interp M>
    void gain_sum_impl(const PaddedProfile& R1, const PaddedProfile& R2, double* out, const GainOptions& opt) const {
        const bool sym = &R1 == &R2;
        const std::size_t B = R1.batch();
        const std::size_t nt = std::min<std::size_t>(threads(), B);
        if (nt <= 1) {
            gain_sum_serial<M>(R1, R2, sym, out, opt);
            return;
        }
        // Threads own disjoint batch columns; every column sees the same
        // arithmetic whatever the split, so results do not depend on nt.
        const std::size_t N = grid_.size();
        parallel_for(nt, [&](std::size_t t) {
            const std::size_t b0 = B * t / nt, b1 = B * (t + 1) / nt, nb = b1 - b0;
            const PaddedProfile P1 = R1.columns(b0, b1);
            const PaddedProfile P2 = sym ? PaddedProfile() : R2.columns(b0, b1);
            std::vector<double> part(N * nb);
            gain_sum_serial<M>(P1, sym ? P1 : P2, sym, part.data(), opt);
            for (std::size_t j = 0; j < N; ++j)
                for (std::size_t b = 0; b < nb; ++b) out[j * B + b0 + b] = part[j * nb + b];
        });
    }

    /// Interpolates R at v + delta for every v in `box`: out[((x*ly)+y)*lz*B + z*B + b].
    template <Interp M>
    static void interpolate_box(const PaddedProfile& R, const Box& box, const double delta[3], double* out,
                                std::vector<double>& t1, std::vector<double>& t2) {
        constexpr int W = stencil_width<M>;
        const std::size_t B = R.batch();
        const int P = R.pad();
        AxisWeights aw[3];
        for (int ax = 0; ax < 3; ++ax) aw[ax] = axis_weights<M>(delta[ax]);
        const int ex = box.lx + W - 1, ey = box.ly + W - 1;
        const std::size_t row = std::size_t(box.lz) * B;
        t1.resize(std::size_t(ex) * ey * row);
        t2.resize(std::size_t(ex) * box.ly * row);
        const double* data = R.data();
        const double wz0 = aw[2].w[0], wz1 = aw[2].w[1], wz2 = aw[2].w[2];
        for (int xi = 0; xi < ex; ++xi)
            for (int yi = 0; yi < ey; ++yi) {
                const double* __restrict s =
                    data + R.flat(box.x0 + P + aw[0].base + xi, box.y0 + P + aw[1].base + yi, box.z0 + P + aw[2].base) * B;
                double* __restrict d = t1.data() + (std::size_t(xi) * ey + yi) * row;
                if constexpr (W == 3)
                    for (std::size_t e = 0; e < row; ++e) d[e] = wz0 * s[e] + wz1 * s[e + B] + wz2 * s[e + 2 * B];
                else
                    for (std::size_t e = 0; e < row; ++e) d[e] = wz0 * s[e] + wz1 * s[e + B];
            }
        const double wy0 = aw[1].w[0], wy1 = aw[1].w[1], wy2 = aw[1].w[2];
        for (int xi = 0; xi < ex; ++xi) {
            const double* __restrict s = t1.data() + std::size_t(xi) * ey * row;
            double* __restrict d = t2.data() + std::size_t(xi) * box.ly * row;
            const std::size_t len = std::size_t(box.ly) * row;
            if constexpr (W == 3)
                for (std::size_t e = 0; e < len; ++e) d[e] = wy0 * s[e] + wy1 * s[e + row] + wy2 * s[e + 2 * row];
            else
                for (std::size_t e = 0; e < len; ++e) d[e] = wy0 * s[e] + wy1 * s[e + row];
        }
        const double wx0 = aw[0].w[0], wx1 = aw[0].w[1], wx2 = aw[0].w[2];
        const std::size_t plane = std::size_t(box.ly) * row, len = std::size_t(box.lx) * plane;
        const double* __restrict s = t2.data();
        double* __restrict d = out;
        if constexpr (W == 3)
            for (std::size_t e = 0; e < len; ++e) d[e] = wx0 * s[e] + wx1 * s[e + plane] + wx2 * s[e + 2 * plane];
        else
            for (std::size_t e = 0; e < len; ++e) d[e] = wx0 * s[e] + wx1 * s[e + plane];
    }

    template <Interp M>
    void gain_sum_serial(const PaddedProfile& R1, const PaddedProfile& R2, bool sym, double* out,
                         const GainOptions& opt) const {
        const int n = grid_.n();
        const std::size_t N = grid_.size(), B = R1.batch();
        const double h = grid_.spacing(), vm = grid_.v_max();
        const auto& mu = grid_.mu();
        const bool prune = std::isfinite(opt.support_radius);
        const double reach = 1.5 * std::sqrt(3.0) * h;
        const double lim = 2.0 * (opt.support_radius + reach) * (opt.support_radius + reach);
        std::vector<double> S(N * B, 0.0), acc, va, vb, t1, t2;
        std::vector<PairNode> nodes;
        for (int a = -(n - 1); a < n; ++a)
            for (int b = -(n - 1); b < n; ++b)
                for (int c = -(n - 1); c < n; ++c) {
                    if (a == 0 && b == 0 && c == 0) continue;
                    // (a,b,c) and its negative give the same products when R1 == R2
                    if (sym && (a < 0 || (a == 0 && (b < 0 || (b == 0 && c < 0))))) continue;
                    const int off[3] = {a, b, c};
                    int lo[3], hi[3];
                    for (int ax = 0; ax < 3; ++ax) {
                        lo[ax] = std::max(0, -off[ax]);
                        hi[ax] = std::min(n, n - off[ax]);
                    }
                    if (prune) {
                        // pairs with |v|^2 + |u|^2 > lim vanish: v in the ball about -z/2
                        const double z2 = h * h * double(a * a + b * b + c * c);
                        const double r2 = 0.5 * (lim - 0.5 * z2);
                        if (r2 < 0) continue;
                        const double r = std::sqrt(r2);
                        for (int ax = 0; ax < 3; ++ax) {
                            const double ctr = -0.5 * off[ax] * h;
                            lo[ax] = std::max(lo[ax], int(std::floor((ctr - r + vm) / h - 0.5)));
                            hi[ax] = std::min(hi[ax], int(std::ceil((ctr + r + vm) / h - 0.5)) + 1);
                        }
                    }
                    const Box box{lo[0], lo[1], lo[2], hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
                    if (box.empty()) continue;
                    pair_nodes(a, b, c, nodes);
                    const std::size_t len = box.size() * B;
                    acc.assign(len, 0.0);
                    va.resize(len);
                    vb.resize(len);
                    for (const auto& q : nodes) {
                        interpolate_box<M>(R1, box, q.du, va.data(), t1, t2);
                        interpolate_box<M>(R2, box, q.dv, vb.data(), t1, t2);
                        const double w = q.weight;
                        double* __restrict ac = acc.data();
                        const double* __restrict pa = va.data();
                        const double* __restrict pb = vb.data();
                        if (opt.clamp)
                            for (std::size_t e = 0; e < len; ++e)
                                ac[e] += w * std::max(pa[e], 0.0) * std::max(pb[e], 0.0);
                        else
                            for (std::size_t e = 0; e < len; ++e) ac[e] += w * pa[e] * pb[e];
                    }
                    const double pw = pow_[pow_index(a, b, c)];
                    std::size_t k = 0;
                    for (int ix = lo[0]; ix < hi[0]; ++ix)
                        for (int iy = lo[1]; iy < hi[1]; ++iy)
                            for (int iz = lo[2]; iz < hi[2]; ++iz, k += B) {
                                const std::size_t v = grid_.index(ix, iy, iz), u = grid_.index(ix + a, iy + b, iz + c);
                                const double fv = pw * mu[u];
                                double* sv = S.data() + v * B;
                                for (std::size_t e = 0; e < B; ++e) sv[e] += fv * acc[k + e];
                                if (sym) {
                                    const double fu = pw * mu[v];
                                    double* su = S.data() + u * B;
                                    for (std::size_t e = 0; e < B; ++e) su[e] += fu * acc[k + e];
                                }
                            }
                }
        const double cb = params_.b_amplitude;
        const double* r1d = R1.data();
        const double* r2d = R2.data();
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy)
                for (int iz = 0; iz < n; ++iz) {
                    const std::size_t j = grid_.index(ix, iy, iz);
                    const std::size_t pj = R1.node_flat(ix, iy, iz) * B;
                    for (std::size_t e = 0; e < B; ++e) {
                        double d1 = r1d[pj + e], d2 = r2d[pj + e];
                        if (opt.clamp) {
                            d1 = std::max(d1, 0.0);
                            d2 = std::max(d2, 0.0);
                        }
                        out[j * B + e] = cb * (S[j * B + e] + two_pi * diag_ * mu[j] * d1 * d2);
                    }
                }
    }

    VelocityGrid grid_;
    KernelParams params_;
    SphereQuadrature sphere_;
    Interp interp_;
    int pad_ = 0;
    double diag_ = 0;
    std::vector<double> pow_;
    std::vector<double> nu_;
};

// ---- profile helpers --------------------------------------------------------

/// R = F / mu on unmasked nodes, 0 on the tail mask.
inline std::vector<double> ratio_profile(const VelocityGrid& g, const double* F) {
    std::vector<double> R(g.size(), 0.0);
    const auto& mu = g.mu();
    for (std::size_t j = 0; j < g.size(); ++j)
        if (mu[j] >= tail_mask) R[j] = F[j] / mu[j];
    return R;
}

/// rho = f / sqrt(mu) on unmasked nodes.
inline std::vector<double> perturbation_profile(const VelocityGrid& g, const double* f) {
    std::vector<double> R(g.size(), 0.0);
    const auto& mu = g.mu();
    const auto& s = g.sqrt_mu();
    for (std::size_t j = 0; j < g.size(); ++j)
        if (mu[j] >= tail_mask) R[j] = f[j] / s[j];
    return R;
}

/// Gain and loss at single nodes for a fixed pair of cell profiles.
class PairEvaluator {
public:
    PairEvaluator(const CollisionOperator& op, const double* F1, const double* F2)
        : op_(&op), F1_(F1, F1 + op.grid().size()), F2_(F2, F2 + op.grid().size()) {
        const auto r1 = ratio_profile(op.grid(), F1);
        const auto r2 = ratio_profile(op.grid(), F2);
        R1_ = op.pad_profile(r1.data(), 1);
        R2_ = op.pad_profile(r2.data(), 1);
    }

    double gain(std::size_t j) const { return op_->grid().mu()[j] * op_->gain_sum_node(R1_, R2_, j, 0, true); }

    double loss(std::size_t j) const {
        const auto& g = op_->grid();
        if (F2_[j] == 0.0) return 0.0;
        int vx, vy, vz;
        g.split(j, vx, vy, vz);
        const int n = g.n();
        double s = 0;
        for (int ux = 0; ux < n; ++ux)
            for (int uy = 0; uy < n; ++uy)
                for (int uz = 0; uz < n; ++uz)
                    s += op_->pair_weight(ux - vx, uy - vy, uz - vz) * F1_[g.index(ux, uy, uz)];
        return two_pi * op_->params().b_amplitude * s * F2_[j];
    }

    const PaddedProfile& R1() const { return R1_; }
    const PaddedProfile& R2() const { return R2_; }
    const CollisionOperator& op() const { return *op_; }

private:
    const CollisionOperator* op_;
    std::vector<double> F1_, F2_;
    PaddedProfile R1_, R2_;
};

inline double q_gain(const DistributionField& F1, const DistributionField& F2, int cell, std::size_t node,
                     const CollisionOperator& op) {
    if (!F1.same_grid(F2) || !(F1.vel == op.grid())) throw Error("q_gain: grid mismatch");
    return PairEvaluator(op, F1.cell(cell), F2.cell(cell)).gain(node);
}

inline double q_loss(const DistributionField& F1, const DistributionField& F2, int cell, std::size_t node,
                     const CollisionOperator& op) {
    if (!F1.same_grid(F2) || !(F1.vel == op.grid())) throw Error("q_loss: grid mismatch");
    return PairEvaluator(op, F1.cell(cell), F2.cell(cell)).loss(node);
}

/// Q(F1, F2) = Q+ - Q- on every node of one cell (F1, F2 node arrays).
inline std::vector<double> collision_cell(const CollisionOperator& op, const double* F1, const double* F2,
                                          const GainOptions& opt = GainOptions()) {
    const auto& g = op.grid();
    const std::size_t N = g.size();
    const auto r1 = ratio_profile(g, F1), r2 = ratio_profile(g, F2);
    const PaddedProfile P1 = op.pad_profile(r1.data(), 1), P2 = op.pad_profile(r2.data(), 1);
    std::vector<double> S(N), L(N), Q(N);
    op.gain_sum(P1, P2, S.data(), opt);
    op.loss_frequency(F1, 1, L.data());
    for (std::size_t j = 0; j < N; ++j) Q[j] = g.mu()[j] * S[j] - L[j] * F2[j];
    return Q;
}

/// Batched Q(F, F) for B profiles stored node-major (F[j*B + b]).
/// Returns gain G and loss frequency g so that Q = G - g F.
/// Columns with F = c mu to `const_tol` (relative, on every node) skip both sums:
/// interpolation reproduces constants, so there S = c^2 nu and g = c nu.
inline void collision_batch(const CollisionOperator& op, const double* F, std::size_t B, double* G, double* g,
                            const GainOptions& opt = GainOptions(), double const_tol = 1e-13) {
    const auto& grid = op.grid();
    const std::size_t N = grid.size();
    const auto& mu = grid.mu();
    const std::size_t peak = std::size_t(std::max_element(mu.begin(), mu.end()) - mu.begin());
    std::vector<std::size_t> live;
    std::vector<double> level(B, -1.0);
    for (std::size_t b = 0; b < B; ++b) {
        const double c = F[peak * B + b] / mu[peak];
        bool flat = c >= 0;
        for (std::size_t j = 0; j < N && flat; ++j)
            if (std::abs(F[j * B + b] - c * mu[j]) > const_tol * c * mu[j]) flat = false;
        if (flat) level[b] = c;
        else live.push_back(b);
    }
    const std::size_t L = live.size();
    if (L > 0) {
        std::vector<double> Fl(N * L), Rl(N * L, 0.0), Sl(N * L), gl(N * L);
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < L; ++k) {
                Fl[j * L + k] = F[j * B + live[k]];
                if (mu[j] >= tail_mask) Rl[j * L + k] = Fl[j * L + k] / mu[j];
            }
        const PaddedProfile P = op.pad_profile(Rl.data(), L);
        op.gain_sum(P, P, Sl.data(), opt);
        op.loss_frequency(Fl.data(), L, gl.data());
        for (std::size_t j = 0; j < N; ++j)
            for (std::size_t k = 0; k < L; ++k) {
                G[j * B + live[k]] = mu[j] * Sl[j * L + k];
                g[j * B + live[k]] = gl[j * L + k];
            }
    }
    for (std::size_t b = 0; b < B; ++b)
        if (level[b] >= 0)
            for (std::size_t j = 0; j < N; ++j) {
                G[j * B + b] = mu[j] * op.nu()[j] * level[b] * level[b];
                g[j * B + b] = op.nu()[j] * level[b];
            }
}

/// Gamma(f, f) = Gamma+ - Gamma- at one node of one cell.
inline double gamma_nl(const PerturbationField& f, int cell, std::size_t node, const CollisionOperator& op) {
    const auto& g = op.grid();
    if (!(f.vel == g)) throw Error("gamma_nl: grid mismatch");
    const double* fc = f.cell(cell);
    const auto rho = perturbation_profile(g, fc);
    const PaddedProfile P = op.pad_profile(rho.data(), 1);
    const double plus = g.sqrt_mu()[node] * op.gain_sum_node(P, P, node, 0, false);
    int vx, vy, vz;
    g.split(node, vx, vy, vz);
    const int n = g.n();
    double s = 0;
    for (int ux = 0; ux < n; ++ux)
        for (int uy = 0; uy < n; ++uy)
            for (int uz = 0; uz < n; ++uz) {
                const std::size_t u = g.index(ux, uy, uz);
                s += op.pair_weight(ux - vx, uy - vy, uz - vz) * g.sqrt_mu()[u] * fc[u];
            }
    const double minus = two_pi * op.params().b_amplitude * s * fc[node];
    return plus - minus;
}

// ---- z-split (Carleman-type) gain -------------------------------------------

struct ZsplitRule {
    int radial_panels = 10;
    int radial_order = 4;
    int sphere_polar = 10;
    int sphere_azimuth = 20;
    int plane_panels = 10;
    int plane_order = 4;
    int plane_azimuth = 16;
};

/// Gain term in the parametrization v' = v + z_par, u' = v + z_perp:
///   Q+(v) = 2 C_b int_0^inf r dr int_S2 dsigma F2(v + r sigma)
///           int_{plane perp sigma} (r^2 + |p|^2)^{(g-1)/2} F1(v + p) dp.
/// F(w) = mu(w) max(0, R(w)) with the same interpolated ratio as q_gain, so the
/// two representations differ only by quadrature.
inline double q_gain_zsplit(const PairEvaluator& ev, std::size_t node, const ZsplitRule& rule = ZsplitRule()) {
    const auto& op = ev.op();
    const auto& g = op.grid();
    const Vec3 v = g.node(node);
    const double gam = op.params().gamma;
    const double Rmax = std::sqrt(3.0) * g.v_max() + norm(v);
    // r = s^2 grading toward the origin; the inner weight is singular there for soft kernels
    const Rule1D rad = composite_gl(0.0, std::sqrt(Rmax), rule.radial_panels, rule.radial_order);
    const SphereQuadrature sph(rule.sphere_polar, rule.sphere_azimuth);
    auto F = [&](const PaddedProfile& R, const Vec3& w) {
        const double r = op.eval_profile(R, w);
        return r > 0 ? r * maxwellian(w) : 0.0;
    };
    const double dpsi = two_pi / rule.plane_azimuth;
    CompensatedSum total;
    for (std::size_t i = 0; i < rad.x.size(); ++i) {
        const double s = rad.x[i], r = s * s, wr = rad.w[i] * 2.0 * s;
        for (const auto& nd : sph.nodes()) {
            const Vec3 sig = nd.omega;
            const double f2 = F(ev.R2(), v + r * sig);
            if (f2 == 0.0) continue;
            Vec3 e1, e2;
            complete_frame(sig, e1, e2);
            double inner = 0;
            for (std::size_t k = 0; k < rad.x.size(); ++k) {
                const double t = rad.x[k], rho = t * t, wrho = rad.w[k] * 2.0 * t;
                const double ker = std::pow(r * r + rho * rho, 0.5 * (gam - 1.0));
                double ring = 0;
                for (int l = 0; l < rule.plane_azimuth; ++l) {
                    const double psi = (l + 0.5) * dpsi;
                    ring += F(ev.R1(), v + rho * (std::cos(psi) * e1 + std::sin(psi) * e2));
                }
                inner += wrho * rho * ker * ring * dpsi;
            }
            total.add(wr * r * nd.weight * f2 * inner);
        }
    }
    return 2.0 * op.params().b_amplitude * total.value();
}

// ---- conservation -----------------------------------------------------------

struct MomentDefect {
    double mass = 0;
    Vec3 momentum{};
    double energy = 0;
};

inline MomentDefect moment_defect(const VelocityGrid& g, const double* Q) {
    CompensatedSum m, px, py, pz, e;
    const double h3 = g.cell_volume();
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3 v = g.node(j);
        const double q = Q[j] * h3;
        m.add(q);
        px.add(q * v.x);
        py.add(q * v.y);
        pz.add(q * v.z);
        e.add(q * g.v2()[j]);
    }
    return {m.value(), {px.value(), py.value(), pz.value()}, e.value()};
}

/// Subtracts mu (a + b.v + c|v|^2) from Q so its discrete moments against
/// {1, v, |v|^2} vanish. Optional; the default pipeline leaves Q untouched.
inline void conservative_correction(const VelocityGrid& g, double* Q) {
    const MomentDefect d = moment_defect(g, Q);
    const double h3 = g.cell_volume();
    const auto& mu = g.mu();
    double m0 = 0, m2 = 0, m4 = 0, mx = 0, my = 0, mz = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const Vec3 v = g.node(j);
        const double w = mu[j] * h3, v2 = g.v2()[j];
        m0 += w;
        m2 += w * v2;
        m4 += w * v2 * v2;
        mx += w * v.x * v.x;
        my += w * v.y * v.y;
        mz += w * v.z * v.z;
    }
    const double det = m0 * m4 - m2 * m2;
    const double a = (d.mass * m4 - d.energy * m2) / det;
    const double c = (m0 * d.energy - m2 * d.mass) / det;
    const Vec3 b{d.momentum.x / mx, d.momentum.y / my, d.momentum.z / mz};
    for (std::size_t j = 0; j < g.size(); ++j) Q[j] -= mu[j] * (a + dot(b, g.node(j)) + c * g.v2()[j]);
}

}  // namespace boltz
