#pragma once

#include <cmath>

namespace mmfbsde::sys {

// Forward-mode dual number (value, directional derivative) used to take
// exact drift Jacobians one column at a time.
struct Dual {
    double v = 0.0;
    double d = 0.0;

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
    Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual sin(Dual a) { return {std::sin(a.v), a.d * std::cos(a.v)}; }
inline Dual cos(Dual a) { return {std::cos(a.v), -a.d * std::sin(a.v)}; }
inline Dual tan(Dual a) {
    const double c = std::cos(a.v);
    return {std::tan(a.v), a.d / (c * c)};
}

using std::cos;
using std::sin;
using std::tan;

}  // namespace mmfbsde::sys
