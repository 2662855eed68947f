#pragma once

#include <cmath>
#include <ostream>
#include <vector>

#include "core.hpp"

namespace boltz {

struct Rule1D {
    std::vector<double> x, w;
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline Rule1D gauss_legendre(int n) {
    if (n < 1) throw Error("gauss_legendre: n must be >= 1");
    Rule1D r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 1, p2 = 0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) * x * p2 - (j - 1) * p3) / j;
            }
            pp = n * (x * p1 - p2) / (x * x - 1);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                p1 = 1, p2 = 0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j - 1) * x * p2 - (j - 1) * p3) / j;
                }
                pp = n * (x * p1 - p2) / (x * x - 1);
                break;
            }
        }
        const double w = 2.0 / ((1 - x * x) * pp * pp);
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    if (n % 2 == 1) r.x[n / 2] = 0.0;
    return r;
}

/// Composite Gauss-Legendre on [a, b] with `panels` equal panels.
inline Rule1D composite_gl(double a, double b, int panels, int order) {
    const Rule1D g = gauss_legendre(order);
    Rule1D r;
    const double len = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * len;
        for (int i = 0; i < order; ++i) {
            r.x.push_back(lo + 0.5 * len * (g.x[i] + 1));
            r.w.push_back(0.5 * len * g.w[i]);
        }
    }
    return r;
}

/// Product rule on the unit sphere: Gauss-Legendre in cos(theta) on each of
/// [-1, 0] and [0, 1], uniform midpoint rule in azimuth. Node directions are
/// given in a local frame whose polar axis is e3; collision integrals rotate
/// the polar axis onto the relative velocity so |cos(theta)| has its kink on
/// a panel boundary.
class SphereQuadrature {
public:
    struct Node {
        Vec3 omega;  // local frame, polar axis = e3
        double weight;
    };

    SphereQuadrature() : SphereQuadrature(16, 16) {}
    SphereQuadrature(int n_polar, int n_azimuth) : n_polar_(n_polar), n_azimuth_(n_azimuth) {
        if (n_polar < 2 || n_polar % 2 != 0) throw Error("sphere quadrature: n_polar must be even and >= 2");
        if (n_azimuth < 1) throw Error("sphere quadrature: n_azimuth must be >= 1");
        const Rule1D g = gauss_legendre(n_polar / 2);
        const double dphi = two_pi / n_azimuth;
        for (int sign : {-1, 1})
            for (int i = 0; i < n_polar / 2; ++i) {
                const double c = sign * 0.5 * (g.x[i] + 1.0);
                const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                const double wc = 0.5 * g.w[i];
                for (int k = 0; k < n_azimuth; ++k) {
                    const double phi = (k + 0.5) * dphi;
                    nodes_.push_back({{s * std::cos(phi), s * std::sin(phi), c}, wc * dphi});
                    if (sign > 0) hemi_.push_back({{s * std::cos(phi), s * std::sin(phi), c}, 2.0 * wc * dphi});
                }
            }
    }

    int n_polar() const { return n_polar_; }
    int n_azimuth() const { return n_azimuth_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    /// Upper hemisphere with doubled weights: exact for integrands even under omega -> -omega.
    const std::vector<Node>& hemisphere() const { return hemi_; }

    /// Node direction rotated so the local polar axis maps onto `axis` (unit).
    static Vec3 rotate(const Vec3& local, const Vec3& axis, const Vec3& e1, const Vec3& e2) {
        return local.x * e1 + local.y * e2 + local.z * axis;
    }

    void write_csv(std::ostream& os) const {
        os << "index,omega_x,omega_y,omega_z,weight\n";
        os.precision(17);
        for (std::size_t k = 0; k < nodes_.size(); ++k)
            os << k << ',' << nodes_[k].omega.x << ',' << nodes_[k].omega.y << ',' << nodes_[k].omega.z << ','
               << nodes_[k].weight << '\n';
    }

private:
    int n_polar_, n_azimuth_;
    std::vector<Node> nodes_, hemi_;
};

}  // namespace boltz
