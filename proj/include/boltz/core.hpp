#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace boltz {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

struct Vec3 {
    double x = 0, y = 0, z = 0;

    constexpr double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }
    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr double norm2(const Vec3& a) { return dot(a, a); }
inline double norm(const Vec3& a) { return std::sqrt(norm2(a)); }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Orthonormal frame (e1, e2) completing the unit vector `n`.
/// e1 flips sign with n and e2 does not, so frame(-n) spans the same plane.
inline void complete_frame(const Vec3& n, Vec3& e1, Vec3& e2) {
    const double ax = std::abs(n.x), ay = std::abs(n.y), az = std::abs(n.z);
    Vec3 a{1, 0, 0};
    if (ay < ax && ay <= az) a = {0, 1, 0};
    else if (az < ax && az < ay) a = {0, 0, 1};
    e1 = cross(a, n);
    e1 *= 1.0 / norm(e1);
    e2 = cross(n, e1);
}

/// Neumaier compensated sum; adding in a fixed order gives reproducible totals.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) c_ += (sum_ - t) + x;
        else c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0, c_ = 0;
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- worker threads -------------------------------------------------------

inline std::atomic<int>& thread_setting() {
    static std::atomic<int> n{0};
    return n;
}

/// Thread count used by parallel_for. 0 means "read BOLTZ_THREADS, else 1".
inline void set_threads(int n) { thread_setting().store(std::max(0, n)); }

inline int threads() {
    int n = thread_setting().load();
    if (n > 0) return n;
    if (const char* env = std::getenv("BOLTZ_THREADS")) {
        const int e = std::atoi(env);
        if (e > 0) return e;
    }
    return 1;
}

/// Runs f(i) for i in [0, n) split into contiguous chunks. Each index is
/// handled by exactly one call, so results never depend on the thread count
/// as long as f(i) only writes data owned by i.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads()), n);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    auto chunk = [&](std::size_t t) {
        const std::size_t lo = n * t / nt, hi = n * (t + 1) / nt;
        for (std::size_t i = lo; i < hi; ++i) f(i);
    };
    for (std::size_t t = 1; t < nt; ++t) pool.emplace_back(chunk, t);
    chunk(0);
    for (auto& th : pool) th.join();
}

}  // namespace boltz
