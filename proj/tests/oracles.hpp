#pragma once

// Brute-force reference computations, deliberately independent of the library's closed forms.

#include <cmath>
#include <complex>
#include <functional>

#include <Eigen/Dense>

namespace oracle {

using cplx = std::complex<double>;

/// Composite trapezoid on [a, b] with n intervals; spectrally accurate for rapidly decaying integrands.
template <class F>
auto trapezoid(F&& f, double a, double b, int n) {
    const double h = (b - a) / n;
    auto s = 0.5 * (f(a) + f(b));
    for (int i = 1; i < n; ++i) s += f(a + i * h);
    return s * h;
}

template <class F>
auto trapezoid_2d(F&& f, double a, double b, int n) {
    return trapezoid([&](double x) { return trapezoid([&](double y) { return f(x, y); }, a, b, n); }, a, b, n);
}

/// <x^k> of a centered normal with variance s, (k-1)!! s^(k/2).
inline double normal_moment(int k, double s) {
    if (k % 2) return 0.0;
    double r = 1.0;
    for (int i = k - 1; i > 0; i -= 2) r *= i;
    return r * std::pow(s, k / 2);
}

/// Expectation of f(q + x) over N(0, s) by dense quadrature.
inline double normal_expectation(const std::function<double(double)>& f, double q, double s) {
    const double w = 12.0 * std::sqrt(s);
    return trapezoid(
        [&](double x) { return f(q + x) * std::exp(-x * x / (2 * s)) / std::sqrt(2 * M_PI * s); }, -w, w, 4000);
}

/// Central difference of a scalar function of one variable with Richardson extrapolation.
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-3) {
    auto d = [&](double hh) { return (f(x + hh) - f(x - hh)) / (2 * hh); };
    return (4 * d(h / 2) - d(h)) / 3;
}

/// 1-D harmonic oscillator (m, omega): Q, P propagated by the rotation of the classical flow.
struct Harmonic1D {
    double m, w;
    std::pair<cplx, cplx> flow(cplx Q, cplx P, double t) const {
        const double c = std::cos(w * t), s = std::sin(w * t);
        return {c * Q + s / (m * w) * P, -m * w * s * Q + c * P};
    }
};

} // namespace oracle
