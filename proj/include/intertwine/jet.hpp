#ifndef INTERTWINE_JET_HPP
#define INTERTWINE_JET_HPP

#include <cstdint>
#include <vector>

#include "intertwine/expr.hpp"
#include "intertwine/grid.hpp"
#include "intertwine/numeric.hpp"
#include "intertwine/potential.hpp"

namespace itw {

using Ladder = std::vector<std::vector<cx>>;       // rows: derivative order, cols: node
using RealLadder = std::vector<std::vector<double>>;

// Derivative samples f, f', ..., f^(depth) of a smooth function on a grid.
// Operators consume depth: a first-order factor eats one row, a Hamiltonian
// two.  Test functions start from expression trees, so every row is exact.
struct GridJet {
    GridCPtr grid;
    Ladder d;
    int depth() const { return int(d.size()) - 1; }
    int size() const { return d.empty() ? 0 : int(d[0].size()); }
};

inline GridJet jet_from_expr(const ExprPtr& e, const GridCPtr& g, int depth) {
    GridJet j;
    j.grid = g;
    j.d.resize(depth + 1);
    ExprPtr cur = e;
    for (int k = 0; k <= depth; ++k) {
        j.d[k].resize(g->size());
        for (int i = 0; i < g->size(); ++i) j.d[k][i] = expr_eval(cur, g->x(i));
        if (k < depth) cur = expr_diff(cur);
    }
    return j;
}

inline void require_depth(const GridJet& f, int need, const char* who) {
    if (f.depth() < need)
        throw Error(std::string(who) + ": jet depth " + std::to_string(f.depth()) +
                    " insufficient, need " + std::to_string(need));
}

// g = (h - lambda) f  with  h = -d^2/dx^2 + V;  consumes two derivative rows
inline GridJet jet_apply_h(const GridJet& f, const PotentialBase& pot, cx lambda) {
    const int out_depth = f.depth() - 2;
    require_depth(f, 2, "jet_apply_h");
    auto V = pot.ladder(f.grid, out_depth < 0 ? 0 : out_depth);
    GridJet g;
    g.grid = f.grid;
    g.d.assign(out_depth + 1, std::vector<cx>(f.size()));
    for (int k = 0; k <= out_depth; ++k)
        for (int i = 0; i < f.size(); ++i) {
            cx acc = -f.d[k + 2][i] - lambda * f.d[k][i];
            for (int j = 0; j <= k; ++j) acc += binom(k, j) * (*V)[j][i] * f.d[k - j][i];
            g.d[k][i] = acc;
        }
    return g;
}

// g = prod_i (roots[i] - h) f
inline GridJet jet_apply_poly_h(GridJet f, const PotentialBase& pot,
                                const std::vector<double>& roots) {
    for (double e : roots) {
        GridJet hf = jet_apply_h(f, pot, 0.0);
        GridJet g;
        g.grid = f.grid;
        g.d.assign(hf.d.size(), std::vector<cx>(f.size()));
        for (size_t k = 0; k < hf.d.size(); ++k)
            for (int i = 0; i < f.size(); ++i) g.d[k][i] = e * f.d[k][i] - hf.d[k][i];
        f = std::move(g);
    }
    return f;
}

inline GridJet jet_linear(const GridJet& a, cx ca, const GridJet& b, cx cb) {
    const int depth = std::min(a.depth(), b.depth());
    GridJet g;
    g.grid = a.grid;
    g.d.assign(depth + 1, std::vector<cx>(a.size()));
    for (int k = 0; k <= depth; ++k)
        for (int i = 0; i < a.size(); ++i) g.d[k][i] = ca * a.d[k][i] + cb * b.d[k][i];
    return g;
}

// --- norms ----------------------------------------------------------------

struct NormWindow {
    int lo = 0, hi = 0;  // half-open node range
    double h = 0.0;

    static NormWindow interior(const GridCPtr& g, double margin_frac = 0.05) {
        NormWindow w;
        const int m = std::max(4, int(g->size() * margin_frac));
        w.lo = m;
        w.hi = g->size() - m;
        w.h = g->h();
        return w;
    }
};

inline double l2_norm(const std::vector<cx>& v, const NormWindow& w) {
    double s = 0.0;
    for (int i = w.lo; i < w.hi; ++i) s += abs2(v[i]);
    return std::sqrt(s * w.h);
}

inline double l2_norm(const GridJet& f, const NormWindow& w) { return l2_norm(f.d[0], w); }

inline double l2_diff(const std::vector<cx>& a, const std::vector<cx>& b, const NormWindow& w) {
    double s = 0.0;
    for (int i = w.lo; i < w.hi; ++i) s += abs2(a[i] - b[i]);
    return std::sqrt(s * w.h);
}

// relative discrepancy of two operator outputs against a reference scale
inline double rel_residual(const GridJet& a, const GridJet& b, double ref_norm,
                           const NormWindow& w) {
    return l2_diff(a.d[0], b.d[0], w) / (ref_norm > 0 ? ref_norm : 1.0);
}

// --- seeded test-function family -------------------------------------------
//
// Gaussian-enveloped polynomials; the seed is recorded in run manifests so
// residual tables are reproducible.

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : s_(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (s_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform(double a, double b) {
        return a + (b - a) * double(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t s_;
};

inline std::vector<ExprPtr> make_test_functions(std::uint64_t seed, int count, int degree = 3) {
    SplitMix64 rng(seed);
    std::vector<ExprPtr> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        std::vector<double> coeff(degree + 1);
        for (auto& c : coeff) c = rng.uniform(-1.0, 1.0);
        if (std::abs(coeff[0]) < 0.1) coeff[0] += 0.5;  // keep away from the zero function
        const double mu = rng.uniform(-1.5, 1.5);
        const double sg = rng.uniform(0.9, 1.6);
        // poly(x) * exp(-(x-mu)^2 / (2 sg^2))
        const double a = -0.5 / (sg * sg);
        ExprPtr gauss = make_exp(make_poly({a * mu * mu, -2.0 * a * mu, a}));
        out.push_back(make_mul({make_poly(coeff), gauss}));
    }
    return out;
}

} // namespace itw

#endif
