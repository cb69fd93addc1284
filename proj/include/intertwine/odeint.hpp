#ifndef INTERTWINE_ODEINT_HPP
#define INTERTWINE_ODEINT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "intertwine/errors.hpp"
#include "intertwine/numeric.hpp"

namespace itw {

// Dormand-Prince 5(4) for the second-order linear system
//
//     psi'' = w(x) psi - s(x)
//
// written as y = (psi, psi').  Steps are adaptive inside a requested span,
// the caller lands exactly on grid nodes.  T is double or complex<double>.

template <class T>
struct OdeOpts {
    double rtol = 1e-13;
    double atol_scale = 1e-300;  // absolute floor, solutions are scale-free
    double hmin_frac = 1e-12;    // relative to span
    int max_steps = 200000;
};

template <class T, class W, class S>
class LinearOde {
public:
    LinearOde(W w, S s) : w_(std::move(w)), s_(std::move(s)) {}

    void rhs(double x, const std::array<T, 2>& y, std::array<T, 2>& dy) const {
        dy[0] = y[1];
        dy[1] = w_(x) * y[0] - s_(x);
    }

    // advance y from a to b (either direction); returns number of accepted steps
    int integrate(double a, double b, std::array<T, 2>& y, const OdeOpts<T>& opt = {}) const {
        if (a == b) return 0;
        const double span = b - a;
        double x = a;
        double h = span / 8.0;
        const double hmin = std::abs(span) * opt.hmin_frac;
        int steps = 0;
        std::array<T, 2> k1;
        rhs(x, y, k1);
        while ((span > 0) ? (x < b) : (x > b)) {
            if ((span > 0) ? (x + h > b) : (x + h < b)) h = b - x;
            std::array<T, 2> ynew, k1new;
            const double err = step(x, h, y, k1, ynew, k1new, opt);
            if (err <= 1.0) {
                x += h;
                y = ynew;
                k1 = k1new;
                if (++steps > opt.max_steps)
                    throw IntegrationError("ODE step budget exhausted", x);
            }
            double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
            fac = std::clamp(fac, 0.2, 5.0);
            h *= fac;
            if (std::abs(h) < hmin && ((span > 0) ? (x < b) : (x > b)))
                throw IntegrationError("ODE step size underflow (non-convergence)", x);
        }
        return steps;
    }

private:
    W w_;
    S s_;

    // one embedded step; returns scaled error estimate (accept when <= 1)
    double step(double x, double h, const std::array<T, 2>& y, const std::array<T, 2>& k1,
                std::array<T, 2>& out, std::array<T, 2>& k1out, const OdeOpts<T>& opt) const {
        static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        static constexpr double a21 = 1.0 / 5;
        static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                                a53 = 64448.0 / 6561, a54 = -212.0 / 729;
        static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                                a64 = 49.0 / 176, a65 = -5103.0 / 18656;
        static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                                b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                                e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

        std::array<T, 2> k2, k3, k4, k5, k6, k7, t;
        for (int i = 0; i < 2; ++i) t[i] = y[i] + h * (a21 * k1[i]);
        rhs(x + c2 * h, t, k2);
        for (int i = 0; i < 2; ++i) t[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        rhs(x + c3 * h, t, k3);
        for (int i = 0; i < 2; ++i) t[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(x + c4 * h, t, k4);
        for (int i = 0; i < 2; ++i)
            t[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(x + c5 * h, t, k5);
        for (int i = 0; i < 2; ++i)
            t[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                               a65 * k5[i]);
        rhs(x + h, t, k6);
        for (int i = 0; i < 2; ++i)
            out[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(x + h, out, k7);
        k1out = k7;

        // common error scale: components of a linear system stay comparable,
        // and a per-component scale stalls at zero crossings
        double mag = 0.0;
        for (int i = 0; i < 2; ++i)
            mag = std::max({mag, std::abs(y[i]), std::abs(out[i])});
        const double sc = opt.atol_scale + opt.rtol * mag;
        double err = 0.0;
        for (int i = 0; i < 2; ++i) {
            const T e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                             e7 * k7[i]);
            err = std::max(err, std::abs(e) / sc);
        }
        return err;
    }
};

template <class T, class W, class S>
LinearOde<T, W, S> make_linear_ode(W w, S s) {
    return LinearOde<T, W, S>(std::move(w), std::move(s));
}

} // namespace itw

#endif
