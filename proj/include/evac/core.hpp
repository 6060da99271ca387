#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace evac {

// All solver-level failures are reported through this type; the CLI maps it
// to exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& t, const Rest&... rest) {
    os << t;
    format_into(os, rest...);
}
} // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
    std::ostringstream os;
    os.precision(17);
    detail::format_into(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    throw Error(concat(args...));
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2 operator-() const { return {-x, -y}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
    // Rotation by +90 degrees.
    Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

struct Mat2 {
    // Row-major 2x2.
    double a00 = 0.0, a01 = 0.0, a10 = 0.0, a11 = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 outer(Vec2 a, Vec2 b) { return {a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y}; }

    Vec2 apply(Vec2 v) const { return {a00 * v.x + a01 * v.y, a10 * v.x + a11 * v.y}; }
    Vec2 apply_transposed(Vec2 v) const { return {a00 * v.x + a10 * v.y, a01 * v.x + a11 * v.y}; }
    Mat2 transposed() const { return {a00, a10, a01, a11}; }
    double det() const { return a00 * a11 - a01 * a10; }

    Mat2 operator+(const Mat2& o) const { return {a00 + o.a00, a01 + o.a01, a10 + o.a10, a11 + o.a11}; }
    Mat2 operator-(const Mat2& o) const { return {a00 - o.a00, a01 - o.a01, a10 - o.a10, a11 - o.a11}; }
    Mat2 operator*(double s) const { return {a00 * s, a01 * s, a10 * s, a11 * s}; }

    // Solves this * x = b; fails on a singular matrix.
    Vec2 solve(Vec2 b) const {
        const double d = det();
        if (std::abs(d) < 1e-300) fail("2x2 solve: singular matrix (det = ", d, ")");
        return {(a11 * b.x - a01 * b.y) / d, (-a10 * b.x + a00 * b.y) / d};
    }
};

inline bool finite(double v) { return std::isfinite(v); }
inline bool finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

} // namespace evac
