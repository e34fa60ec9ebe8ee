#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace crush {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

// ||a - b|| / max(||b||, floor); floor guards the all-zero reference case.
inline double rel_l2(const Vec& a, const Vec& b, double floor = 1e-300) {
    if (a.size() != b.size()) throw std::invalid_argument("rel_l2: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i];
    return y;
}

}  // namespace crush
