#ifndef INTERTWINE_SCHRODINGER_HPP
#define INTERTWINE_SCHRODINGER_HPP

#include <algorithm>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "intertwine/grid.hpp"
#include "intertwine/jet.hpp"
#include "intertwine/numeric.hpp"
#include "intertwine/odeint.hpp"
#include "intertwine/potential.hpp"

namespace itw {

enum class Side { plus, minus };
enum class DecayClass { decaying, growing };
enum class NormClass { normalizable, nonnormalizable, unknown };

inline Side other(Side s) { return s == Side::plus ? Side::minus : Side::plus; }
inline const char* name(Side s) { return s == Side::plus ? "+inf" : "-inf"; }
inline const char* name(NormClass c) {
    switch (c) {
    case NormClass::normalizable: return "normalizable";
    case NormClass::nonnormalizable: return "nonnormalizable";
    default: return "unknown";
    }
}

// admissible spectral values: real lambda <= 0, or Im lambda != 0
inline bool admissible_lambda(cx lambda) {
    return lambda.imag() != 0.0 || lambda.real() <= 0.0;
}

struct SpectralValue {
    enum class Kind { real_nonpositive, complex_pair_member };
    cx value;
    int multiplicity = 1;
    Kind kind = Kind::real_nonpositive;

    static SpectralValue real(double v, int mult = 1) {
        if (v > 0.0) throw DomainError("real spectral values must satisfy lambda <= 0");
        return {cx(v, 0.0), mult, Kind::real_nonpositive};
    }
    static SpectralValue pair_member(cx v, int mult = 1) {
        if (v.imag() == 0.0) throw DomainError("pair members must have Im lambda != 0");
        return {v, mult, Kind::complex_pair_member};
    }
};

// --- asymptotic seeds (leading-order WKB data at a tail point) --------------

struct AsymptoticSeed {
    Side side;
    DecayClass decay;
    double x_seed;
    cx value;
    cx derivative;
    cx xi;           // phase integral from +-R0 to x_seed
    bool eta_finite; // whether int dx/sqrt(|V|) converges on this side
};

namespace detail {

inline cx phase_integral(const PotentialBase& p, cx lambda, Side side, double x_to,
                         double tol = 1e-12) {
    const double a = (side == Side::plus) ? p.r0() : -p.r0();
    auto f = [&](double t) { return branch_sqrt(cx(p.value(t), 0.0) - lambda); };
    const cx raw = adaptive_simpson(f, a, x_to, tol);
    return (side == Side::plus) ? raw : -raw;
}

inline bool eta_integral_converges(const PotentialBase& p, Side side, double x_ref) {
    // doubling heuristic for int dx / sqrt(|V|) toward the chosen infinity,
    // capped at the potential's usable domain (undecided tails count as
    // divergent, which selects the R0-anchored ladder prefactor)
    const double sgn = (side == Side::plus) ? 1.0 : -1.0;
    auto f = [&](double t) { return 1.0 / std::sqrt(std::abs(p.value(t))); };
    double total = std::abs(adaptive_simpson(f, sgn * p.r0(), sgn * x_ref, 1e-9));
    const double cap = 0.995 * p.max_abscissa();
    double lo = x_ref;
    for (int k = 0; k < 6 && lo < cap; ++k) {
        const double hi = std::min(lo * 2.0, cap);
        const double inc = std::abs(adaptive_simpson(f, sgn * lo, sgn * hi, 1e-9));
        total += inc;
        if (inc < 0.01 * total) return true;
        lo = hi;
    }
    return false;
}

} // namespace detail

inline AsymptoticSeed seed_asymptotic(const PotentialBase& p, cx lambda, Side side,
                                      DecayClass decay, double x_seed, int order = 0) {
    if (std::abs(x_seed) < p.r0()) throw DomainError("seed point must satisfy |x| >= R0");
    if ((side == Side::plus) != (x_seed > 0)) throw DomainError("seed point on the wrong side");
    if (!admissible_lambda(lambda))
        throw DomainError("spectral value must satisfy lambda <= 0 or Im lambda != 0");

    const cx w = cx(p.value(x_seed), 0.0) - lambda;
    const cx root4 = branch_quartic_root(w);  // throws BranchError on the cut
    const cx xi = detail::phase_integral(p, lambda, side, x_seed);

    AsymptoticSeed s;
    s.side = side;
    s.decay = decay;
    s.x_seed = x_seed;
    s.xi = xi;
    s.eta_finite =
        (order > 0) ? detail::eta_integral_converges(p, side, std::abs(x_seed)) : true;

    cx pref = 1.0;
    if (order > 0) {
        // ladder prefactor (+-1/2 int dt / sqrt(V - lambda))^n / n!, taken from
        // the seeded infinity when that integral converges and from R0 if not
        auto g = [&](double t) { return 1.0 / branch_sqrt(cx(p.value(t), 0.0) - lambda); };
        const double sgn = (side == Side::plus) ? 1.0 : -1.0;
        cx I;
        if (s.eta_finite) {
            const double cap = 0.999 * p.max_abscissa();
            double far = std::abs(x_seed);
            cx acc = 0.0;
            for (int k = 0; k < 24 && far < cap; ++k) {
                const double next = std::min(far * 2.0, cap);
                const cx inc = adaptive_simpson(g, sgn * far, sgn * next, 1e-12);
                acc += inc;
                far = next;
                if (std::abs(inc) < 1e-12 * (1.0 + std::abs(acc))) break;
            }
            I = -acc;  // tail integral, oriented from infinity down to x_seed
        } else {
            I = adaptive_simpson(g, sgn * p.r0(), x_seed, 1e-12);
        }
        const double u = (side == Side::plus) ? 0.5 : -0.5;
        const cx base = (decay == DecayClass::decaying ? u : -u) * I;
        double fact = 1.0;
        for (int k = 2; k <= order; ++k) fact *= k;
        pref = std::pow(base, order) / fact;
    }

    const cx damp = std::exp(decay == DecayClass::decaying ? -xi : xi);
    s.value = pref * damp / root4;
    const double dsign = (decay == DecayClass::decaying) == (side == Side::plus) ? -1.0 : 1.0;
    s.derivative = dsign * pref * damp * root4;
    return s;
}

// --- formal eigenfunctions and associated functions --------------------------

class FormalFunction {
public:
    struct Data {
        GridCPtr grid;
        PotentialCPtr pot;
        cx lambda;
        int order = 0;
        std::shared_ptr<const Data> parent;
        std::vector<cx> psi, dpsi;
        NormClass norm_plus = NormClass::unknown;
        NormClass norm_minus = NormClass::unknown;
        mutable Ladder rows;  // derivative rows, grown lazily (single-threaded)
    };

    FormalFunction() = default;
    explicit FormalFunction(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

    bool valid() const { return bool(d_); }
    const GridCPtr& grid() const { return d_->grid; }
    const PotentialCPtr& pot() const { return d_->pot; }
    cx lambda() const { return d_->lambda; }
    int order() const { return d_->order; }
    FormalFunction parent() const {
        return d_->parent ? FormalFunction(d_->parent) : FormalFunction();
    }
    const std::vector<cx>& psi() const { return d_->psi; }
    const std::vector<cx>& dpsi() const { return d_->dpsi; }
    NormClass norm(Side s) const { return s == Side::plus ? d_->norm_plus : d_->norm_minus; }
    bool one_sided() const {
        return (d_->norm_plus == NormClass::normalizable) !=
               (d_->norm_minus == NormClass::normalizable);
    }
    bool both_normalizable() const {
        return d_->norm_plus == NormClass::normalizable &&
               d_->norm_minus == NormClass::normalizable;
    }
    bool neither_normalizable() const {
        return d_->norm_plus == NormClass::nonnormalizable &&
               d_->norm_minus == NormClass::nonnormalizable;
    }

    // derivative rows through the differential equation:
    //   psi^(k+2) = sum_j C(k,j) V^(j) psi^(k-j) - lambda psi^(k) - parent^(k)
    const Ladder& ladder(int depth) const {
        Ladder& rows = d_->rows;
        if (rows.empty()) {
            rows.push_back(d_->psi);
            rows.push_back(d_->dpsi);
        }
        if (int(rows.size()) > depth) return rows;
        const int n = d_->grid->size();
        auto V = d_->pot->ladder(d_->grid, depth - 2);
        const Ladder* par = nullptr;
        if (d_->parent) par = &parent().ladder(depth - 2);
        for (int k = int(rows.size()) - 2; k + 2 <= depth; ++k) {
            std::vector<cx> row(n);
            for (int i = 0; i < n; ++i) {
                cx acc = -d_->lambda * rows[k][i];
                for (int j = 0; j <= k; ++j) acc += binom(k, j) * (*V)[j][i] * rows[k - j][i];
                if (par) acc -= (*par)[k][i];
                row[i] = acc;
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    // off-node evaluation (quintic Hermite backed by ODE second derivatives)
    cx value_at(double x, int k = 0) const {
        if (k > 1) throw Error("FormalFunction::value_at supports k <= 1");
        const Ladder& rows = ladder(2);
        const Grid& g = *d_->grid;
        const int c = g.cell(x);
        const double t = (x - g.x(c)) / g.h();
        return hermite5(rows[k][c], rows[k + 1][c], rows[k + 2][c], rows[k][c + 1],
                        rows[k + 1][c + 1], rows[k + 2][c + 1], g.h(), t);
    }

    GridJet jet(int depth) const {
        GridJet j;
        j.grid = d_->grid;
        const Ladder& rows = ladder(depth);
        j.d.assign(rows.begin(), rows.begin() + depth + 1);
        return j;
    }

    FormalFunction with_flags(NormClass plus, NormClass minus) const {
        auto nd = std::make_shared<Data>(*d_);
        nd->rows.clear();
        nd->norm_plus = plus;
        nd->norm_minus = minus;
        return FormalFunction(std::move(nd));
    }

    // same samples viewed as a function of another Hamiltonian / ladder slot
    FormalFunction rebound(PotentialCPtr pot, int order, FormalFunction new_parent) const {
        auto nd = std::make_shared<Data>(*d_);
        nd->rows.clear();
        nd->pot = std::move(pot);
        nd->order = order;
        nd->parent = new_parent.valid() ? new_parent.data() : nullptr;
        return FormalFunction(std::move(nd));
    }

    const std::shared_ptr<const Data>& data() const { return d_; }

private:
    std::shared_ptr<const Data> d_;
};

namespace detail {

// integrate psi'' = (V - lambda) psi - s across consecutive nodes [from..to]
template <class T>
void integrate_nodes(const PotentialBase& pot, const Grid& g, cx lambda,
                     const FormalFunction* parent, int from, int to, cx psi0, cx dpsi0,
                     std::vector<cx>& psi, std::vector<cx>& dpsi, bool allow_rescale) {
    auto w = [&pot, lambda](double x) -> T {
        if constexpr (std::is_same_v<T, double>)
            return pot.value(x) - lambda.real();
        else
            return cx(pot.value(x), 0.0) - lambda;
    };
    auto s = [parent](double x) -> T {
        if (!parent) return T{};
        if constexpr (std::is_same_v<T, double>)
            return parent->value_at(x).real();
        else
            return parent->value_at(x);
    };
    auto ode = make_linear_ode<T>(w, s);
    OdeOpts<T> opts;
    std::array<T, 2> y;
    if constexpr (std::is_same_v<T, double>) y = {psi0.real(), dpsi0.real()};
    else y = {psi0, dpsi0};
    const int step = (to >= from) ? 1 : -1;
    psi[from] = psi0;
    dpsi[from] = dpsi0;
    for (int i = from; i != to; i += step) {
        ode.integrate(g.x(i), g.x(i + step), y, opts);
        const double mag = std::max(std::abs(y[0]), std::abs(y[1]));
        if (mag > 1e120) {
            if (!allow_rescale)
                throw IntegrationError("solution overflow in associated-function solve", g.x(i));
            // defined up to scale: renormalize everything stored so far
            const double f = 1.0 / mag;
            y[0] *= f;
            y[1] *= f;
            for (int j = from; j != i + step; j += step) {
                psi[j] *= f;
                dpsi[j] *= f;
            }
        }
        if (!std::isfinite(std::abs(y[0])) || !std::isfinite(std::abs(y[1])))
            throw IntegrationError("non-finite solution sample", g.x(i));
        psi[i + step] = y[0];
        dpsi[i + step] = y[1];
    }
}

inline bool real_path_ok(cx lambda, const FormalFunction* parent, cx v0, cx d0) {
    if (lambda.imag() != 0.0 || v0.imag() != 0.0 || d0.imag() != 0.0) return false;
    if (!parent) return true;
    for (const cx& v : parent->psi())
        if (v.imag() != 0.0) return false;
    return true;
}

inline void integrate_dispatch(const PotentialBase& pot, const Grid& g, cx lambda,
                               const FormalFunction* parent, int from, int to, cx psi0, cx dpsi0,
                               std::vector<cx>& psi, std::vector<cx>& dpsi, bool allow_rescale) {
    if (real_path_ok(lambda, parent, psi0, dpsi0))
        integrate_nodes<double>(pot, g, lambda, parent, from, to, psi0, dpsi0, psi, dpsi,
                                allow_rescale);
    else
        integrate_nodes<cx>(pot, g, lambda, parent, from, to, psi0, dpsi0, psi, dpsi,
                            allow_rescale);
}

} // namespace detail

// log-slope classification against the two WKB branches +-Re sqrt(V - lambda)
inline NormClass classify_normalizability(const FormalFunction& f, Side side) {
    const Grid& g = *f.grid();
    const int n = g.size();
    const int w = std::max(16, n / 5);
    const int lo = (side == Side::plus) ? n - w : 2;
    const int hi = (side == Side::plus) ? n - 2 : w;
    const double r0 = f.pot()->r0();
    if ((side == Side::plus && g.x(lo) < r0) || (side == Side::minus && g.x(hi - 1) > -r0))
        throw ClassificationError("classification window overlaps [-R0, R0]");

    double slope = 0.0, branch = 0.0;
    int used = 0;
    for (int i = lo; i < hi; ++i) {
        const cx p = f.psi()[i];
        if (std::abs(p) < 1e-280) continue;
        slope += (f.dpsi()[i] / p).real();
        branch += branch_sqrt(cx(f.pot()->value(g.x(i)), 0.0) - f.lambda()).real();
        ++used;
    }
    if (used < 8) throw ClassificationError("too few usable nodes in classification window");
    const double sbar = slope / used;
    const double b = branch / used;  // >= 0 on the principal branch
    const double scale = std::max(std::abs(b), std::abs(sbar));
    const double d_minus = std::abs(sbar + b);  // distance to the -sqrt branch
    const double d_plus = std::abs(sbar - b);
    if (d_minus <= 0.05 * scale && d_plus <= 0.05 * scale)
        throw ClassificationError("log-slope " + std::to_string(sbar) +
                                  " within 5% of both branches +-" + std::to_string(b));
    if (d_minus == d_plus) {  // degenerate branches: decide by slope direction
        const bool toward_zero = (side == Side::plus) ? (sbar < 0) : (sbar > 0);
        return toward_zero ? NormClass::normalizable : NormClass::nonnormalizable;
    }
    const bool decays = (side == Side::plus) ? (d_minus < d_plus) : (d_plus < d_minus);
    return decays ? NormClass::normalizable : NormClass::nonnormalizable;
}

namespace detail {

inline FormalFunction finalize(std::shared_ptr<FormalFunction::Data> d, bool normalize,
                               bool classify = true) {
    if (normalize) {
        double m = 0.0;
        for (auto& v : d->psi) m = std::max(m, std::abs(v));
        for (auto& v : d->dpsi) m = std::max(m, std::abs(v));
        if (m > 0.0)
            for (size_t i = 0; i < d->psi.size(); ++i) {
                d->psi[i] /= m;
                d->dpsi[i] /= m;
            }
    }
    FormalFunction f(std::move(d));
    if (!classify) return f;
    NormClass np = NormClass::unknown, nm = NormClass::unknown;
    try { np = classify_normalizability(f, Side::plus); } catch (const ClassificationError&) {}
    try { nm = classify_normalizability(f, Side::minus); } catch (const ClassificationError&) {}
    return f.with_flags(np, nm);
}

} // namespace detail

// Integrate the decaying solution (or an associated ladder element) from the
// seeded infinity inward across the whole grid; the inward direction damps
// contamination by the complementary solution exponentially.
inline FormalFunction solve_decaying(const PotentialCPtr& pot, const GridCPtr& grid, cx lambda,
                                     Side side, int order, FormalFunction parent,
                                     bool glue_at_eigenvalue);

inline FormalFunction solve_decaying(const PotentialCPtr& pot, const GridCPtr& grid, cx lambda,
                                     Side side, int order = 0,
                                     FormalFunction parent = FormalFunction()) {
    return solve_decaying(pot, grid, lambda, side, order, parent, true);
}

inline FormalFunction solve_decaying(const PotentialCPtr& pot, const GridCPtr& grid, cx lambda,
                                     Side side, int order, FormalFunction parent,
                                     bool glue_at_eigenvalue) {
    if ((order >= 1) != parent.valid())
        throw DomainError("associated solve requires a parent of order j-1");
    if (parent.valid() &&
        (parent.order() != order - 1 || std::abs(parent.lambda() - lambda) > 1e-12))
        throw DomainError("parent must share lambda and have order j-1");
    const int n = grid->size();
    const int from = (side == Side::plus) ? n - 1 : 0;
    const int to = (side == Side::plus) ? 0 : n - 1;
    const double x_seed = grid->x(from);

    const AsymptoticSeed s =
        seed_asymptotic(*pot, lambda, side, DecayClass::decaying, x_seed, order);
    cx v0 = s.value, d0 = s.derivative;
    if (parent.valid()) {
        // match the ladder scale carried by the stored (possibly renormalized) parent
        const AsymptoticSeed ps =
            seed_asymptotic(*pot, lambda, side, DecayClass::decaying, x_seed, order - 1);
        const cx stored = parent.psi()[from];
        if (std::abs(ps.value) > 0.0 && std::abs(stored) > 0.0) {
            const cx scale = stored / ps.value;
            v0 *= scale;
            d0 *= scale;
        }
        if (order == 1) {
            // leading-order seeds leave (parent, child) parallel at the seed
            // node, collapsing their Wronskian there; start it at the correct
            // subleading tail value W = -+ int parent^2 / (2 sqrt(V - lambda))
            const cx w_seed = cx(pot->value(x_seed), 0.0) - lambda;
            const cx target = (side == Side::plus ? 1.0 : -1.0) * stored * stored /
                              (2.0 * branch_sqrt(w_seed));
            const cx w_now = stored * d0 - parent.dpsi()[from] * v0;
            d0 += (target - w_now) / stored;
        }
    }

    auto d = std::make_shared<FormalFunction::Data>();
    d->grid = grid;
    d->pot = pot;
    d->lambda = lambda;
    d->order = order;
    d->parent = parent.valid() ? parent.data() : nullptr;
    d->psi.resize(n);
    d->dpsi.resize(n);
    detail::integrate_dispatch(*pot, *grid, lambda, parent.valid() ? &parent : nullptr, from, to,
                               v0, d0, d->psi, d->dpsi, order == 0);

    // When lambda is an eigenvalue the true decaying solution decays at both
    // infinities, but one-sided shooting loses its far tail once the round-off
    // seeded complementary component is amplified by e^{2 xi}.  Detect the
    // eigenvalue case (solutions from the two sides proportional) and glue.
    if (glue_at_eigenvalue && order == 0 && lambda.imag() == 0.0) {
        auto far_slope = [&] {
            const int i = (side == Side::plus) ? 4 : n - 5;
            const cx p = d->psi[i];
            return std::abs(p) > 0 ? (d->dpsi[i] / p).real() : 0.0;
        };
        const double grow = (side == Side::plus) ? -1.0 : 1.0;
        if (far_slope() * grow > 0) {
            FormalFunction counter =
                solve_decaying(pot, grid, lambda, other(side), 0, FormalFunction(), false);
            const int mid = n / 2;
            const double wmid =
                std::abs(d->psi[mid] * counter.dpsi()[mid] - d->dpsi[mid] * counter.psi()[mid]);
            const double smid = std::hypot(std::abs(d->psi[mid]), std::abs(d->dpsi[mid])) *
                                std::hypot(std::abs(counter.psi()[mid]),
                                           std::abs(counter.dpsi()[mid]));
            if (wmid < 1e-6 * smid) {
                // glue where the solution is largest: both branches agree there
                // to integrator accuracy, so the seam is invisible
                int glue = mid;
                double best = 0.0;
                for (int i = n / 4; i < 3 * n / 4; ++i)
                    if (std::abs(d->psi[i]) > best) { best = std::abs(d->psi[i]); glue = i; }
                const cx scale = d->psi[glue] / counter.psi()[glue];
                if (side == Side::plus)
                    for (int i = 0; i < glue; ++i) {
                        d->psi[i] = scale * counter.psi()[i];
                        d->dpsi[i] = scale * counter.dpsi()[i];
                    }
                else
                    for (int i = glue + 1; i < n; ++i) {
                        d->psi[i] = scale * counter.psi()[i];
                        d->dpsi[i] = scale * counter.dpsi()[i];
                    }
            }
        }
    }
    return detail::finalize(std::move(d), order == 0);
}

// Integrate outward to both ends from interior initial data.  Growth lies in
// the direction of travel, so this is the stable route to growing solutions
// and to generic (nonnormalizable) associated functions.
inline FormalFunction solve_from_ic(const PotentialCPtr& pot, const GridCPtr& grid, cx lambda,
                                    int anchor, cx value, cx deriv,
                                    FormalFunction parent = FormalFunction(),
                                    bool normalize = false) {
    const int n = grid->size();
    auto d = std::make_shared<FormalFunction::Data>();
    d->grid = grid;
    d->pot = pot;
    d->lambda = lambda;
    d->order = parent.valid() ? parent.order() + 1 : 0;
    d->parent = parent.valid() ? parent.data() : nullptr;
    d->psi.resize(n);
    d->dpsi.resize(n);
    const FormalFunction* par = parent.valid() ? &parent : nullptr;
    if (anchor < n - 1)
        detail::integrate_dispatch(*pot, *grid, lambda, par, anchor, n - 1, value, deriv, d->psi,
                                   d->dpsi, false);
    if (anchor > 0)
        detail::integrate_dispatch(*pot, *grid, lambda, par, anchor, 0, value, deriv, d->psi,
                                   d->dpsi, false);
    return detail::finalize(std::move(d), normalize);
}

// second linearly independent solution, normalized to W(f, g) = 1
inline FormalFunction complementary_solution(const FormalFunction& f) {
    const int n = f.grid()->size();
    int anchor = n / 2;
    double best = 0.0;
    for (int i = n / 4; i < 3 * n / 4; ++i)
        if (std::abs(f.psi()[i]) > best) { best = std::abs(f.psi()[i]); anchor = i; }
    if (best == 0.0) throw Error("complementary_solution of the zero function");
    return solve_from_ic(f.pot(), f.grid(), f.lambda(), anchor, 0.0, 1.0 / f.psi()[anchor]);
}

// combined spec-facing entry point
inline FormalFunction solve_formal(const PotentialCPtr& pot, const GridCPtr& grid, cx lambda,
                                   Side side, DecayClass decay, int order = 0,
                                   FormalFunction parent = FormalFunction()) {
    if (decay == DecayClass::decaying)
        return solve_decaying(pot, grid, lambda, side, order, parent);
    if (order == 0) return complementary_solution(solve_decaying(pot, grid, lambda, side, 0));
    // growing associated element: generic interior data, growth dominates
    return solve_from_ic(pot, grid, lambda, grid->size() / 2, 0.0, 1.0, parent, false);
}

// linear combination a*f + b*g of functions sharing grid and lambda
inline FormalFunction combine(const FormalFunction& f, cx a, const FormalFunction& g, cx b) {
    if (f.grid().get() != g.grid().get() || std::abs(f.lambda() - g.lambda()) > 1e-12)
        throw DomainError("combine requires matching grid and lambda");
    auto d = std::make_shared<FormalFunction::Data>();
    d->grid = f.grid();
    d->pot = f.pot();
    d->lambda = f.lambda();
    d->order = std::max(f.order(), g.order());
    d->parent = (f.order() >= g.order()) ? f.data()->parent : g.data()->parent;
    const int n = f.grid()->size();
    d->psi.resize(n);
    d->dpsi.resize(n);
    for (int i = 0; i < n; ++i) {
        d->psi[i] = a * f.psi()[i] + b * g.psi()[i];
        d->dpsi[i] = a * f.dpsi()[i] + b * g.dpsi()[i];
    }
    return detail::finalize(std::move(d), false);
}

inline FormalFunction conjugate_function(const FormalFunction& f) {
    auto d = std::make_shared<FormalFunction::Data>(*f.data());
    d->rows.clear();
    d->lambda = std::conj(d->lambda);
    for (auto& v : d->psi) v = std::conj(v);
    for (auto& v : d->dpsi) v = std::conj(v);
    if (d->parent) d->parent = conjugate_function(f.parent()).data();
    return FormalFunction(std::move(d));
}

// --- diagnostics --------------------------------------------------------------

// pointwise ODE residual measured independently of the integrator: an
// 8th-order stencil differentiates the stored samples
struct OdeResidual {
    double max_rel_second = 0.0;  // d(psi')/dx vs (V - lambda) psi - parent
    double max_rel_first = 0.0;   // d(psi)/dx vs psi'
};

inline OdeResidual ode_residual(const FormalFunction& f) {
    const Grid& g = *f.grid();
    const int n = g.size();
    OdeResidual r;
    const FormalFunction par = f.parent();
    // global scale keeps the relative test meaningful at nodes where the
    // local right-hand side passes through zero
    double gscale = 0.0;
    for (int i = 4; i < n - 4; ++i) {
        const double w = std::abs(cx(f.pot()->value(g.x(i)), 0.0) - f.lambda());
        gscale = std::max(gscale, w * std::abs(f.psi()[i]));
    }
    for (int i = 4; i < n - 4; ++i) {
        const cx d2 = stencil_d1(f.dpsi(), i, g.h());
        const cx w = cx(f.pot()->value(g.x(i)), 0.0) - f.lambda();
        const cx rhs = w * f.psi()[i] - (par.valid() ? par.psi()[i] : cx(0.0));
        const double scale = std::abs(d2) + std::abs(w) * std::abs(f.psi()[i]) +
                             (par.valid() ? std::abs(par.psi()[i]) : 0.0) + 1e-2 * gscale +
                             1e-300;
        r.max_rel_second = std::max(r.max_rel_second, std::abs(d2 - rhs) / scale);
        const cx d1 = stencil_d1(f.psi(), i, g.h());
        const double s1 = std::abs(d1) + std::abs(f.dpsi()[i]) + 1e-2 * gscale + 1e-300;
        r.max_rel_first = std::max(r.max_rel_first, std::abs(d1 - f.dpsi()[i]) / s1);
    }
    return r;
}

inline std::vector<cx> wronskian(const FormalFunction& a, const FormalFunction& b) {
    const int n = a.grid()->size();
    std::vector<cx> w(n);
    for (int i = 0; i < n; ++i) w[i] = a.psi()[i] * b.dpsi()[i] - a.dpsi()[i] * b.psi()[i];
    return w;
}

// relative drift of a conserved Wronskian across the interior
inline double wronskian_drift(const FormalFunction& a, const FormalFunction& b,
                              double margin_frac = 0.05) {
    const auto w = wronskian(a, b);
    const int n = int(w.size());
    const int m = std::max(4, int(n * margin_frac));
    const cx ref = w[n / 2];
    double drift = 0.0;
    for (int i = m; i < n - m; ++i) drift = std::max(drift, std::abs(w[i] - ref));
    return drift / (std::abs(ref) + 1e-300);
}

// least-squares expansion of f in a basis over an interior window
struct ExpansionReport {
    std::vector<cx> coeff;
    double rel_residual = 0.0;
};

inline ExpansionReport expand_in_basis(const FormalFunction& f,
                                       const std::vector<FormalFunction>& basis,
                                       const NormWindow& w) {
    const int m = int(basis.size());
    std::vector<std::vector<cx>> G(m, std::vector<cx>(m));
    std::vector<cx> c(m);
    for (int a = 0; a < m; ++a) {
        for (int b = 0; b < m; ++b) {
            cx s = 0.0;
            for (int i = w.lo; i < w.hi; ++i)
                s += std::conj(basis[a].psi()[i]) * basis[b].psi()[i];
            G[a][b] = s;
        }
        cx s = 0.0;
        for (int i = w.lo; i < w.hi; ++i) s += std::conj(basis[a].psi()[i]) * f.psi()[i];
        c[a] = s;
    }
    for (int col = 0; col < m; ++col) {  // tiny system: plain pivoted elimination
        int piv = col;
        for (int r2 = col + 1; r2 < m; ++r2)
            if (std::abs(G[r2][col]) > std::abs(G[piv][col])) piv = r2;
        std::swap(G[col], G[piv]);
        std::swap(c[col], c[piv]);
        for (int r2 = col + 1; r2 < m; ++r2) {
            const cx fac = G[r2][col] / G[col][col];
            for (int k = col; k < m; ++k) G[r2][k] -= fac * G[col][k];
            c[r2] -= fac * c[col];
        }
    }
    for (int col = m - 1; col >= 0; --col) {
        for (int k = col + 1; k < m; ++k) c[col] -= G[col][k] * c[k];
        c[col] /= G[col][col];
    }
    ExpansionReport rep;
    rep.coeff = c;
    double num = 0.0, den = 0.0;
    for (int i = w.lo; i < w.hi; ++i) {
        cx approx = 0.0;
        for (int a = 0; a < m; ++a) approx += c[a] * basis[a].psi()[i];
        num += abs2(f.psi()[i] - approx);
        den += abs2(f.psi()[i]);
    }
    rep.rel_residual = std::sqrt(num / (den + 1e-300));
    return rep;
}

// --- bound states ---------------------------------------------------------------

inline int node_count(const FormalFunction& f, double margin_frac = 0.02) {
    const int n = f.grid()->size();
    const int m = std::max(2, int(n * margin_frac));
    double mx = 0.0;
    for (int i = m; i < n - m; ++i) mx = std::max(mx, std::abs(f.psi()[i]));
    int count = 0;
    double prev = 0.0;
    for (int i = m; i < n - m; ++i) {
        const double v = f.psi()[i].real();
        if (std::abs(v) < 1e-9 * mx) continue;
        if (prev != 0.0 && v * prev < 0.0) ++count;
        prev = v;
    }
    return count;
}

namespace detail {

// fast shooting mismatch: integrates end -> match point without dense output.
// E may sit anywhere below the potential tails (bound-state scans probe
// energies that are not admissible intertwining spectral values).
inline double shoot_defect(const PotentialBase& pot, double x_lo, double x_hi, double xm,
                           double E) {
    auto w = [&](double x) { return pot.value(x) - E; };
    auto zero = [](double) { return 0.0; };
    auto ode = make_linear_ode<double>(w, zero);
    OdeOpts<double> opts;
    opts.rtol = 1e-12;

    std::array<double, 2> yp{1.0, -std::sqrt(std::max(pot.value(x_hi) - E, 1e-12))};
    ode.integrate(x_hi, xm, yp, opts);
    const double mp = std::max(std::abs(yp[0]), std::abs(yp[1]));
    yp[0] /= mp;
    yp[1] /= mp;
    std::array<double, 2> ym{1.0, std::sqrt(std::max(pot.value(x_lo) - E, 1e-12))};
    ode.integrate(x_lo, xm, ym, opts);
    const double mm = std::max(std::abs(ym[0]), std::abs(ym[1]));
    ym[0] /= mm;
    ym[1] /= mm;

    const double wr = ym[0] * yp[1] - ym[1] * yp[0];
    return wr / (std::hypot(yp[0], yp[1]) * std::hypot(ym[0], ym[1]) + 1e-300);
}

} // namespace detail

// Shooting search over [e_min, e_max): decaying solutions from both
// infinities, normalized Wronskian mismatch at the potential minimum, and
// bisection to 1e-10.  Eigenfunctions are glued, L2-normalized, classified.
inline std::vector<std::pair<double, FormalFunction>> find_bound_states(const PotentialCPtr& pot,
                                                                        const GridCPtr& grid,
                                                                        double e_min,
                                                                        double e_max) {
    if (!(e_min < e_max)) throw ConfigError("find_bound_states requires e_min < e_max");
    double tail_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid->size(); ++i)
        if (std::abs(grid->x(i)) >= pot->r0())
            tail_min = std::min(tail_min, pot->value(grid->x(i)));
    if (e_max > tail_min + 1e-9)
        throw ConfigError("find_bound_states window must stay below the potential tail");

    double vmin = std::numeric_limits<double>::infinity();
    double xm = 0.0;
    for (int i = 0; i < grid->size(); ++i)
        if (pot->value(grid->x(i)) < vmin) { vmin = pot->value(grid->x(i)); xm = grid->x(i); }
    const double x_lo = grid->xmin(), x_hi = grid->xmax();

    std::vector<std::pair<double, FormalFunction>> states;
    const int steps = std::max(64, int(std::ceil((e_max - e_min) / 0.05)));
    const double de = (e_max - e_min) / steps;
    double eprev = e_min;
    double fprev = detail::shoot_defect(*pot, x_lo, x_hi, xm, eprev);
    for (int k = 1; k <= steps; ++k) {
        const double e = e_min + k * de - (k == steps ? 1e-12 : 0.0);
        const double fe = detail::shoot_defect(*pot, x_lo, x_hi, xm, e);
        if (fprev == 0.0 || fprev * fe < 0.0) {
            double lo = eprev, hi = e, flo = fprev;
            while (hi - lo > 1e-13 * std::max(1.0, std::abs(lo))) {
                const double mid = 0.5 * (lo + hi);
                const double fm = detail::shoot_defect(*pot, x_lo, x_hi, xm, mid);
                if (flo * fm <= 0.0) hi = mid;
                else { lo = mid; flo = fm; }
            }
            const double E = 0.5 * (lo + hi);

            auto tail_solve = [&](Side side) {
                auto dd = std::make_shared<FormalFunction::Data>();
                dd->grid = grid;
                dd->pot = pot;
                dd->lambda = cx(E, 0.0);
                dd->psi.resize(grid->size());
                dd->dpsi.resize(grid->size());
                const int a = (side == Side::plus) ? grid->size() - 1 : 0;
                const int b = (side == Side::plus) ? 0 : grid->size() - 1;
                const double slope = (side == Side::plus ? -1.0 : 1.0) *
                                     std::sqrt(std::max(pot->value(grid->x(a)) - E, 1e-12));
                detail::integrate_dispatch(*pot, *grid, cx(E, 0.0), nullptr, a, b, 1.0, slope,
                                           dd->psi, dd->dpsi, true);
                return detail::finalize(std::move(dd), true, false);
            };
            FormalFunction up = tail_solve(Side::plus);
            FormalFunction um = tail_solve(Side::minus);
            // splice where both one-sided solutions are sizable (the defect
            // vanished, so they are proportional; avoid nodes of the state)
            int im = grid->nearest(xm);
            double best = 0.0;
            for (int i = grid->size() / 8; i < grid->size() - grid->size() / 8; ++i) {
                const double score =
                    std::min(std::abs(up.psi()[i]), std::abs(um.psi()[i]));
                if (score > best) { best = score; im = i; }
            }
            auto d = std::make_shared<FormalFunction::Data>();
            d->grid = grid;
            d->pot = pot;
            d->lambda = cx(E, 0.0);
            const int n = grid->size();
            d->psi.resize(n);
            d->dpsi.resize(n);
            const cx scale = um.psi()[im] / up.psi()[im];
            for (int i = 0; i < n; ++i) {
                d->psi[i] = (i < im) ? um.psi()[i] : scale * up.psi()[i];
                d->dpsi[i] = (i < im) ? um.dpsi()[i] : scale * up.dpsi()[i];
            }
            double norm = 0.0;
            for (int i = 0; i < n; ++i) norm += abs2(d->psi[i]);
            norm = std::sqrt(norm * grid->h());
            for (int i = 0; i < n; ++i) {
                d->psi[i] /= norm;
                d->dpsi[i] /= norm;
            }
            states.emplace_back(E, detail::finalize(std::move(d), false));
        }
        eprev = e;
        fprev = fe;
    }
    return states;
}

// all bound states with energies up to and including `top` (driver inventory)
inline std::vector<std::pair<double, FormalFunction>> bound_state_inventory(
    const PotentialCPtr& pot, const GridCPtr& grid, double top) {
    double vmin = std::numeric_limits<double>::infinity();
    double tail_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid->size(); ++i) {
        vmin = std::min(vmin, pot->value(grid->x(i)));
        if (std::abs(grid->x(i)) >= pot->r0())
            tail_min = std::min(tail_min, pot->value(grid->x(i)));
    }
    const double hi = std::min(top + 1e-7, tail_min - 1e-6);
    if (!(vmin - 1.0 < hi)) return {};
    return find_bound_states(pot, grid, vmin - 1.0, hi);
}

inline double ground_energy(const PotentialCPtr& pot, const GridCPtr& grid) {
    double tail_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid->size(); ++i)
        if (std::abs(grid->x(i)) >= pot->r0())
            tail_min = std::min(tail_min, pot->value(grid->x(i)));
    auto states = bound_state_inventory(pot, grid, tail_min);
    if (states.empty()) return tail_min;  // no discrete level below the tail
    return states.front().first;
}

} // namespace itw

#endif
