#ifndef INTERTWINE_GRID_HPP
#define INTERTWINE_GRID_HPP

#include <cmath>
#include <memory>

#include "intertwine/errors.hpp"

namespace itw {

// Uniform node set on [x0, x1].  All sampled objects (solutions, factor
// coefficients, grid potentials) live on a shared Grid.
class Grid {
public:
    Grid(double x0, double x1, int n) : x0_(x0), x1_(x1), n_(n) {
        if (n < 16 || !(x1 > x0)) throw ConfigError("grid requires x1 > x0 and n >= 16");
        h_ = (x1 - x0) / double(n - 1);
    }

    static std::shared_ptr<const Grid> symmetric(double X, int n) {
        return std::make_shared<const Grid>(-X, X, n);
    }

    int size() const { return n_; }
    double h() const { return h_; }
    double xmin() const { return x0_; }
    double xmax() const { return x1_; }
    double x(int i) const { return x0_ + h_ * double(i); }

    // cell index such that x(i) <= xq <= x(i+1), clamped to valid range
    int cell(double xq) const {
        int i = int(std::floor((xq - x0_) / h_));
        if (i < 0) i = 0;
        if (i > n_ - 2) i = n_ - 2;
        return i;
    }

    int nearest(double xq) const {
        int i = int(std::lround((xq - x0_) / h_));
        if (i < 0) i = 0;
        if (i > n_ - 1) i = n_ - 1;
        return i;
    }

    bool contains(double xq) const { return xq >= x0_ - 1e-12 && xq <= x1_ + 1e-12; }

private:
    double x0_, x1_, h_;
    int n_;
};

using GridCPtr = std::shared_ptr<const Grid>;

} // namespace itw

#endif
