#ifndef INTERTWINE_NUMERIC_HPP
#define INTERTWINE_NUMERIC_HPP

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "intertwine/errors.hpp"

namespace itw {

using cx = std::complex<double>;

inline double abs2(cx z) { return std::norm(z); }

// binomial coefficients for Leibniz ladders
inline double binom(int n, int k) {
    static std::vector<std::vector<double>> table;
    if (int(table.size()) <= n) {
        int from = int(table.size());
        table.resize(n + 1);
        for (int m = from; m <= n; ++m) {
            table[m].assign(m + 1, 1.0);
            for (int j = 1; j < m; ++j) table[m][j] = table[m - 1][j - 1] + table[m - 1][j];
        }
    }
    return table[n][k];
}

// --- two-point quintic Hermite interpolation ---------------------------
//
// Matches value, first and second derivative at both cell ends; used to
// evaluate sampled functions between nodes (interpolation error ~ h^6).

template <class T>
T hermite5(T fa, T da, T dda, T fb, T db, T ddb, double h, double t, int deriv = 0) {
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    std::array<double, 6> H;
    switch (deriv) {
    case 0:
        H = {1 - 10 * t3 + 15 * t4 - 6 * t5,
             t - 6 * t3 + 8 * t4 - 3 * t5,
             0.5 * (t2 - 3 * t3 + 3 * t4 - t5),
             10 * t3 - 15 * t4 + 6 * t5,
             -4 * t3 + 7 * t4 - 3 * t5,
             0.5 * (t3 - 2 * t4 + t5)};
        break;
    case 1:
        H = {-30 * t2 + 60 * t3 - 30 * t4,
             1 - 18 * t2 + 32 * t3 - 15 * t4,
             0.5 * (2 * t - 9 * t2 + 12 * t3 - 5 * t4),
             30 * t2 - 60 * t3 + 30 * t4,
             -12 * t2 + 28 * t3 - 15 * t4,
             0.5 * (3 * t2 - 8 * t3 + 5 * t4)};
        break;
    case 2:
        H = {-60 * t + 180 * t2 - 120 * t3,
             -36 * t + 96 * t2 - 60 * t3,
             0.5 * (2 - 18 * t + 36 * t2 - 20 * t3),
             60 * t - 180 * t2 + 120 * t3,
             -24 * t + 84 * t2 - 60 * t3,
             0.5 * (6 * t - 24 * t2 + 20 * t3)};
        break;
    default:
        throw Error("hermite5: derivative order must be 0, 1 or 2");
    }
    T v = fa * H[0] + da * (h * H[1]) + dda * (h * h * H[2]) + fb * H[3] + db * (h * H[4]) +
          ddb * (h * h * H[5]);
    const double s = (deriv == 0) ? 1.0 : (deriv == 1 ? 1.0 / h : 1.0 / (h * h));
    return v * s;
}

// --- adaptive Simpson quadrature ---------------------------------------

namespace detail {

template <class F, class T>
T simpson_rec(const F& f, double a, double b, T fa, T fm, T fb, T whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const T flm = f(lm), frm = f(rm);
    const T left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const T right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const T sum = left + right;
    if (depth <= 0) return sum;
    if (std::abs(sum - whole) <= 15.0 * tol) return sum + (sum - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

} // namespace detail

template <class F>
auto adaptive_simpson(const F& f, double a, double b, double tol = 1e-12, int max_depth = 40)
    -> decltype(f(a)) {
    using T = decltype(f(a));
    if (a == b) return T{};
    const T fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const T whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// --- high-order centered first-derivative stencil -----------------------
//
// Eighth-order stencil used only by diagnostics that must stay independent
// of the ODE right-hand side.

template <class T>
T stencil_d1(const std::vector<T>& f, int i, double h) {
    return ((f[i + 1] - f[i - 1]) * (4.0 / 5.0) + (f[i - 2] - f[i + 2]) * (1.0 / 5.0) +
            (f[i + 3] - f[i - 3]) * (4.0 / 105.0) + (f[i - 4] - f[i + 4]) * (1.0 / 280.0)) /
           h;
}

// principal branch sqrt/quartic-root with the cut on the negative real axis
inline cx branch_sqrt(cx w) {
    if (w.real() < 0.0 && w.imag() == 0.0)
        throw BranchError("sqrt branch condition |arg| < pi violated");
    return std::sqrt(w);
}

inline cx branch_quartic_root(cx w) {
    if (w.real() < 0.0 && w.imag() == 0.0)
        throw BranchError("quartic-root branch condition |arg| < pi violated");
    return std::pow(w, 0.25);
}

} // namespace itw

#endif
