#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "phase.hpp"

namespace boltz {

enum class Interp { linear, quadratic };

inline const char* to_string(Interp m) { return m == Interp::linear ? "linear" : "quadratic"; }

/// Per-axis interpolation weights. Nodes base, base+1, ... carry w[0], w[1], ...
struct AxisWeights {
    int base = 0;
    double w[3] = {0, 0, 0};
};

/// Weights for a point at signed offset `delta` (index units) from a node.
/// Quadratic uses the three nodes around the nearest one; linear the two
/// bracketing nodes.
template <Interp M>
inline AxisWeights axis_weights(double delta) {
    AxisWeights a;
    if constexpr (M == Interp::quadratic) {
        const double k = std::floor(delta + 0.5);
        const double t = delta - k;
        a.base = int(k) - 1;
        a.w[0] = 0.5 * t * (t - 1.0);
        a.w[1] = 1.0 - t * t;
        a.w[2] = 0.5 * t * (t + 1.0);
    } else {
        const double k = std::floor(delta);
        const double t = delta - k;
        a.base = int(k);
        a.w[0] = 1.0 - t;
        a.w[1] = t;
    }
    return a;
}

template <Interp M>
inline constexpr int stencil_width = M == Interp::quadratic ? 3 : 2;

/// Batch of velocity profiles on a lattice padded by `pad` ghost layers.
/// Ghost layers 1 and 2 hold the quadratic extrapolation of the edge nodes,
/// deeper layers repeat layer 2. Layout: values[padded_node * batch + b].
class PaddedProfile {
public:
    PaddedProfile() = default;

    /// `src` is node-major: src[node * batch + b].
    PaddedProfile(const VelocityGrid& g, int pad, const double* src, std::size_t batch)
        : n_(g.n()), pad_(pad), np_(g.n() + 2 * pad), batch_(batch), v_max_(g.v_max()), h_(g.spacing()) {
        data_.assign(std::size_t(np_) * np_ * np_ * batch_, 0.0);
        for (int ix = 0; ix < n_; ++ix)
            for (int iy = 0; iy < n_; ++iy)
                for (int iz = 0; iz < n_; ++iz) {
                    const std::size_t s = g.index(ix, iy, iz) * batch_;
                    double* d = ptr(ix + pad_, iy + pad_, iz + pad_);
                    for (std::size_t b = 0; b < batch_; ++b) d[b] = src[s + b];
                }
        extend(0);
        extend(1);
        extend(2);
    }

    /// Copy of batch columns [b0, b1).
    PaddedProfile columns(std::size_t b0, std::size_t b1) const {
        PaddedProfile r;
        r.n_ = n_;
        r.pad_ = pad_;
        r.np_ = np_;
        r.batch_ = b1 - b0;
        r.v_max_ = v_max_;
        r.h_ = h_;
        const std::size_t cells = std::size_t(np_) * np_ * np_;
        r.data_.resize(cells * r.batch_);
        for (std::size_t k = 0; k < cells; ++k)
            for (std::size_t b = b0; b < b1; ++b) r.data_[k * r.batch_ + b - b0] = data_[k * batch_ + b];
        return r;
    }

    int n() const { return n_; }
    int pad() const { return pad_; }
    int np() const { return np_; }
    std::size_t batch() const { return batch_; }
    const double* data() const { return data_.data(); }

    std::size_t flat(int px, int py, int pz) const { return (std::size_t(px) * np_ + py) * np_ + pz; }
    /// Padded flat index of grid node (ix, iy, iz).
    std::size_t node_flat(int ix, int iy, int iz) const { return flat(ix + pad_, iy + pad_, iz + pad_); }

    /// Value at an arbitrary velocity, constant beyond the padded block.
    template <Interp M>
    double eval(const Vec3& w, std::size_t b = 0) const {
        AxisWeights a[3];
        for (int ax = 0; ax < 3; ++ax) {
            double s = (w[ax] + v_max_) / h_ - 0.5 + pad_;
            s = std::clamp(s, 0.0, double(np_ - 1));
            int k0;
            if constexpr (M == Interp::quadratic) {
                k0 = std::clamp(int(std::floor(s + 0.5)), 1, np_ - 2);
                a[ax] = axis_weights<M>(s - k0);
                a[ax].base += k0;
            } else {
                k0 = std::clamp(int(std::floor(s)), 0, np_ - 2);
                a[ax] = axis_weights<M>(s - k0);
                a[ax].base += k0;
            }
        }
        return combine<M>(a, b);
    }

    /// Value at a point displaced by `delta` (index units) from node (ix, iy, iz).
    template <Interp M>
    double eval_from_node(int ix, int iy, int iz, const double delta[3], std::size_t b = 0) const {
        AxisWeights a[3];
        const int c[3] = {ix + pad_, iy + pad_, iz + pad_};
        for (int ax = 0; ax < 3; ++ax) {
            a[ax] = axis_weights<M>(delta[ax]);
            a[ax].base += c[ax];
        }
        return combine<M>(a, b);
    }

    template <Interp M>
    double combine(const AxisWeights a[3], std::size_t b) const {
        constexpr int W = stencil_width<M>;
        double acc = 0;
        for (int i = 0; i < W; ++i) {
            double ay = 0;
            for (int j = 0; j < W; ++j) {
                const double* p = data_.data() + flat(a[0].base + i, a[1].base + j, a[2].base) * batch_ + b;
                double az = 0;
                for (int k = 0; k < W; ++k) az += a[2].w[k] * p[std::size_t(k) * batch_];
                ay += a[1].w[j] * az;
            }
            acc += a[0].w[i] * ay;
        }
        return acc;
    }

private:
    double* ptr(int px, int py, int pz) { return data_.data() + flat(px, py, pz) * batch_; }

    // Fills ghost layers along `axis` on every line whose other coordinates
    // are already populated: full padded range for earlier axes, interior
    // for later ones.
    void extend(int axis) {
        int lo[3], hi[3];
        for (int ax = 0; ax < 3; ++ax) {
            lo[ax] = ax < axis ? 0 : pad_;
            hi[ax] = ax < axis ? np_ : pad_ + n_;
        }
        lo[axis] = 0;
        hi[axis] = 1;
        int p[3];
        auto at = [&](int pos) {
            int q[3] = {p[0], p[1], p[2]};
            q[axis] = pos;
            return ptr(q[0], q[1], q[2]);
        };
        for (p[0] = lo[0]; p[0] < hi[0]; ++p[0])
            for (p[1] = lo[1]; p[1] < hi[1]; ++p[1])
                for (p[2] = lo[2]; p[2] < hi[2]; ++p[2]) {
                    const double *f0 = at(pad_), *f1 = at(pad_ + 1), *f2 = at(pad_ + 2);
                    const double *g0 = at(pad_ + n_ - 1), *g1 = at(pad_ + n_ - 2), *g2 = at(pad_ + n_ - 3);
                    for (int layer = 1; layer <= pad_; ++layer) {
                        double* l = at(pad_ - layer);
                        double* r = at(pad_ + n_ - 1 + layer);
                        for (std::size_t k = 0; k < batch_; ++k) {
                            if (layer == 1) {
                                l[k] = 3 * f0[k] - 3 * f1[k] + f2[k];
                                r[k] = 3 * g0[k] - 3 * g1[k] + g2[k];
                            } else {
                                l[k] = 6 * f0[k] - 8 * f1[k] + 3 * f2[k];
                                r[k] = 6 * g0[k] - 8 * g1[k] + 3 * g2[k];
                            }
                        }
                    }
                }
    }

    int n_ = 0, pad_ = 0, np_ = 0;
    std::size_t batch_ = 0;
    double v_max_ = 0, h_ = 0;
    std::vector<double> data_;
};

/// Ghost depth that keeps every post-collision velocity of a lattice pair
/// inside the padded block: |v'| <= sqrt(|v|^2 + |u|^2) <= sqrt(6) * corner.
inline int collision_pad(const VelocityGrid& g) {
    const double corner = g.v_max() - 0.5 * g.spacing();
    const double reach = std::sqrt(6.0) * corner;
    const int p = int(std::ceil((reach - g.v_max()) / g.spacing() + 0.5)) + 2;
    return std::max(p, 3);
}

}  // namespace boltz
