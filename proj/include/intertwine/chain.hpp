#ifndef INTERTWINE_CHAIN_HPP
#define INTERTWINE_CHAIN_HPP

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "intertwine/darboux.hpp"

namespace itw {

// --- matrix-S bookkeeping ----------------------------------------------------
//
// The matrix S is never materialized: all statements consume eigenvalues,
// algebraic multiplicities, Jordan block sizes and normalizability flags.

struct SpectrumEntry {
    cx lambda;
    int k = 1;                       // algebraic multiplicity
    std::vector<int> blocks = {1};   // Jordan block sizes (sum = k)
    bool pair_member = false;
};

struct MatrixSSpectrum {
    std::vector<SpectrumEntry> entries;

    int total_order() const {
        int n = 0;
        for (const auto& e : entries) n += e.k;
        return n;
    }

    SpectrumEntry* find(cx lambda) {
        for (auto& e : entries)
            if (std::abs(e.lambda - lambda) < 1e-9) return &e;
        return nullptr;
    }
    const SpectrumEntry* find(cx lambda) const {
        return const_cast<MatrixSSpectrum*>(this)->find(lambda);
    }

    // real entries descending first, then conjugate pairs
    void canonicalize() {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const SpectrumEntry& a, const SpectrumEntry& b) {
                             const bool ra = a.lambda.imag() == 0.0, rb = b.lambda.imag() == 0.0;
                             if (ra != rb) return ra;
                             if (ra) return a.lambda.real() > b.lambda.real();
                             if (a.lambda.real() != b.lambda.real())
                                 return a.lambda.real() > b.lambda.real();
                             return a.lambda.imag() > b.lambda.imag();
                         });
        for (auto& e : entries) {
            int s = 0;
            for (int b : e.blocks) s += b;
            if (s != e.k) throw SpectrumError("Jordan blocks inconsistent with multiplicity");
            if (e.lambda.imag() == 0.0 && e.lambda.real() > 0.0)
                throw SpectrumError("real spectral values must satisfy lambda <= 0");
        }
        for (const auto& e : entries) {
            if (e.lambda.imag() == 0.0) continue;
            const SpectrumEntry* partner = find(std::conj(e.lambda));
            if (!partner || partner->k != e.k)
                throw SpectrumError("complex eigenvalues must come in conjugate pairs "
                                    "with equal multiplicity");
        }
    }

    int real_count() const {
        int m = 0;
        for (const auto& e : entries)
            if (e.lambda.imag() == 0.0) ++m;
        return m;
    }
    int pair_count() const {
        int l = 0;
        for (const auto& e : entries)
            if (e.lambda.imag() > 0.0) ++l;
        return l;
    }
};

// Jordan ladder of canonical kernel functions at one eigenvalue
struct KernelLadder {
    cx lambda;
    std::vector<FormalFunction> fn;  // orders 0 .. k-1, identity-linked parents
};

// --- the chain ----------------------------------------------------------------

class FactorChain {
public:
    struct Data {
        GridCPtr grid;
        PotentialCPtr source;                // h^+ potential
        PotentialCPtr target;                // h^- potential (== source when empty)
        std::vector<DarbouxFactor> factors;  // application order: factors[0] acts first
        std::vector<double> dressing_roots;  // P(h^+), applied before the factors
        MatrixSSpectrum spectrum;
        std::vector<KernelLadder> kernel;    // canonical kernel on the source
    };

    FactorChain() = default;
    explicit FactorChain(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

    bool valid() const { return bool(d_); }
    const GridCPtr& grid() const { return d_->grid; }
    const PotentialCPtr& source() const { return d_->source; }
    const PotentialCPtr& target() const { return d_->target; }
    const std::vector<DarbouxFactor>& factors() const { return d_->factors; }
    const std::vector<double>& dressing_roots() const { return d_->dressing_roots; }
    const MatrixSSpectrum& spectrum() const { return d_->spectrum; }
    const std::vector<KernelLadder>& kernel_ladders() const { return d_->kernel; }
    const std::shared_ptr<const Data>& data() const { return d_; }

    int order() const {
        int n = 2 * int(d_->dressing_roots.size());
        for (const auto& f : d_->factors) n += f.order();
        return n;
    }

    // (E - h) f for a solution-backed function: exact and pointwise
    static FormalFunction apply_dressing_root(double e, const FormalFunction& f) {
        const cx c = cx(e, 0.0) - f.lambda();
        const FormalFunction par = f.parent();
        if (!par.valid()) {
            if (std::abs(c) < 1e-14) return FormalFunction();  // annihilated exactly
            return combine(f, c, f, 0.0);
        }
        FormalFunction shifted = combine(f, c, par, -1.0);
        if (std::abs(c) >= 1e-14) return shifted;
        // (E - h) drops a ladder rung: result is -par, whose own chain must be
        // negated as well to keep the rung relation exact
        FormalFunction neg_grandparent =
            par.parent().valid() ? negate_ladder(par.parent()) : FormalFunction();
        return shifted.rebound(f.pot(), par.order(), neg_grandparent);
    }

    static FormalFunction negate_ladder(const FormalFunction& f) {
        FormalFunction npar = f.parent().valid() ? negate_ladder(f.parent()) : FormalFunction();
        FormalFunction neg = combine(f, -1.0, f, 0.0);
        return neg.rebound(f.pot(), f.order(), npar);
    }

    FormalFunction apply(const FormalFunction& f) const {
        FormalFunction g = f;
        for (double e : d_->dressing_roots) {
            g = apply_dressing_root(e, g);
            if (!g.valid()) return g;
        }
        for (const auto& p : d_->factors) {
            g = p.apply(g);
            if (!g.valid()) return g;
        }
        return g;
    }

    GridJet apply_jet(GridJet f) const {
        f = jet_apply_poly_h(std::move(f), *d_->source, d_->dressing_roots);
        for (const auto& p : d_->factors) f = p.apply_jet(f);
        return f;
    }

    // transpose acts factors-reversed, then the polynomial again
    GridJet apply_transpose_jet(GridJet f) const {
        for (auto it = d_->factors.rbegin(); it != d_->factors.rend(); ++it)
            f = it->transpose().apply_jet(f);
        return jet_apply_poly_h(std::move(f), *d_->source, d_->dressing_roots);
    }

private:
    std::shared_ptr<const Data> d_;
};

// --- product identity ----------------------------------------------------------

struct ResidualReport {
    std::vector<double> per_function;
    double max = 0.0;
};

// residual of transpose(c) c f = prod_i (h^+ - lambda_i)^{k_i} P^2(h^+) f
inline ResidualReport product_identity_check(const FactorChain& c,
                                             const std::vector<ExprPtr>& fns) {
    ResidualReport rep;
    const GridCPtr& g = c.grid();
    const NormWindow w = NormWindow::interior(g);
    const int consumed = 2 * c.order();
    for (const auto& e : fns) {
        GridJet f = jet_from_expr(e, g, consumed);
        GridJet lhs = c.apply_transpose_jet(c.apply_jet(f));
        GridJet rhs = f;
        for (const auto& s : c.spectrum().entries)
            for (int j = 0; j < s.k; ++j) rhs = jet_apply_h(rhs, *c.source(), s.lambda);
        const double r = rel_residual(lhs, rhs, l2_norm(f, w), w);
        rep.per_function.push_back(r);
        rep.max = std::max(rep.max, r);
    }
    return rep;
}

// intertwining residual of the whole chain against its endpoints
inline double chain_intertwining_residual(const FactorChain& c, const std::vector<ExprPtr>& fns) {
    const GridCPtr& g = c.grid();
    const NormWindow w = NormWindow::interior(g);
    const int consumed = c.order() + 2;
    double worst = 0.0;
    for (const auto& e : fns) {
        GridJet f = jet_from_expr(e, g, consumed);
        GridJet lhs = c.apply_jet(jet_apply_h(f, *c.source(), 0.0));
        GridJet rhs = jet_apply_h(c.apply_jet(f), *c.target(), 0.0);
        worst = std::max(worst, rel_residual(lhs, rhs, l2_norm(f, w), w));
    }
    return worst;
}

// annihilation of the canonical kernel: max ||c(u)|| / ||u||
inline double kernel_annihilation_residual(const FactorChain& c) {
    const NormWindow w = NormWindow::interior(c.grid());
    double worst = 0.0;
    for (const auto& lad : c.kernel_ladders())
        for (const auto& u : lad.fn) {
            GridJet uj = u.jet(c.order());
            GridJet img = c.apply_jet(uj);
            worst = std::max(worst, l2_norm(img, w) / (l2_norm(uj, w) + 1e-300));
        }
    return worst;
}

// --- canonical basis report ------------------------------------------------------

struct LadderFlags {
    cx lambda;
    std::vector<NormClass> at_plus, at_minus;  // per ladder order j
    int k_up = 0, k_down = 0;                  // split indices per Corollary 4
};

inline std::vector<LadderFlags> canonical_basis(const FactorChain& c) {
    std::vector<LadderFlags> out;
    for (const auto& lad : c.kernel_ladders()) {
        LadderFlags lf;
        lf.lambda = lad.lambda;
        for (const auto& f : lad.fn) {
            lf.at_plus.push_back(f.norm(Side::plus));
            lf.at_minus.push_back(f.norm(Side::minus));
        }
        auto split = [&](const std::vector<NormClass>& v) {
            int k = 0;
            while (k < int(v.size()) && v[k] == NormClass::normalizable) ++k;
            for (int j = k; j < int(v.size()); ++j)
                if (v[j] == NormClass::normalizable)
                    throw BasisOrderError(
                        "normalizable ladder element above a nonnormalizable one");
            return k;
        };
        lf.k_up = split(lf.at_plus);
        lf.k_down = split(lf.at_minus);
        out.push_back(std::move(lf));
    }
    return out;
}

// --- minimization bookkeeping -----------------------------------------------------

struct DressingPolynomial {
    std::vector<double> roots;  // P(E) = prod (root - E)
    int degree() const { return int(roots.size()); }
};

// Split the spectrum into the nonminimizable core and the polynomial part:
// a factor (h - E) divides the chain on the right exactly when both solutions
// at E lie in the kernel, i.e. E carries two Jordan blocks.
inline std::pair<MatrixSSpectrum, DressingPolynomial> minimize_bookkeeping(const FactorChain& c) {
    MatrixSSpectrum core = c.spectrum();
    DressingPolynomial poly;
    for (auto& e : core.entries) {
        while (e.blocks.size() >= 2) {
            std::sort(e.blocks.begin(), e.blocks.end(), std::greater<int>());
            e.blocks[0] -= 1;
            e.blocks[1] -= 1;
            e.k -= 2;
            poly.roots.push_back(e.lambda.real());
            e.blocks.erase(std::remove(e.blocks.begin(), e.blocks.end(), 0), e.blocks.end());
        }
    }
    core.entries.erase(std::remove_if(core.entries.begin(), core.entries.end(),
                                      [](const SpectrumEntry& e) { return e.k == 0; }),
                       core.entries.end());
    return {core, poly};
}

inline bool nonminimizable(const FactorChain& c) {
    return minimize_bookkeeping(c).second.degree() == 0;
}

// --- chain assembly ------------------------------------------------------------------
//
// Chains are assembled on a fixed source Hamiltonian by naming spectral edits;
// canonical kernel functions are constructed on the source and transported
// through the already-built factors, so the bookkeeping (Jordan ladders,
// normalizability flags, factor sharing by identity) is exact by construction.

class ChainBuilder {
public:
    ChainBuilder(PotentialCPtr source, GridCPtr grid)
        : grid_(std::move(grid)), source_(std::move(source)), current_(source_) {}

    const PotentialCPtr& current() const { return current_; }

    // remove a bound state of the source (kernel element normalizable at both ends)
    ChainBuilder& delete_level(double e) {
        FormalFunction u = bound_function(e);
        push_first_order(u, SpectralValue::real(e));
        return *this;
    }

    // strictly isospectral first-order step below the ground state
    ChainBuilder& one_sided(double lambda, Side side) {
        FormalFunction u = solve_decaying(source_, grid_, cx(lambda, 0.0), side);
        push_first_order(u, SpectralValue::real(lambda));
        return *this;
    }

    // create a new bound state at lambda below the current ground state;
    // mix > 0 selects the member of the one-parameter isospectral family
    ChainBuilder& insert_level(double lambda, double mix = 1.0) {
        if (!(mix > 0.0)) throw ConfigError("insert_level requires mix > 0");
        FormalFunction wp = solve_decaying(current_, grid_, cx(lambda, 0.0), Side::plus, 0,
                                           FormalFunction(), false);
        FormalFunction wm = solve_decaying(current_, grid_, cx(lambda, 0.0), Side::minus, 0,
                                           FormalFunction(), false);
        FormalFunction kappa = combine(wp, 1.0, wm, mix);
        // source-side preimage: solve chain(a u+ + b u-) = kappa at an anchor
        FormalFunction up = solve_decaying(source_, grid_, cx(lambda, 0.0), Side::plus, 0,
                                           FormalFunction(), false);
        FormalFunction um = solve_decaying(source_, grid_, cx(lambda, 0.0), Side::minus, 0,
                                           FormalFunction(), false);
        FormalFunction gp = apply_current(up), gm = apply_current(um);
        const auto [a, b] = match_two(gp, gm, kappa);
        FormalFunction u = combine(up, a, um, b);

        DarbouxFactor f = make_first_order(kappa);
        factors_.push_back(f);
        current_ = f.target();
        KernelLadder lad;
        lad.lambda = cx(lambda, 0.0);
        lad.fn = {u};
        ladders_.push_back(std::move(lad));
        return *this;
    }

    // type-I block for the conjugate pair (lambda, lambda*); repeated calls at
    // the same lambda extend the Jordan ladder of the pair
    ChainBuilder& pair_type_I(cx lambda, Side side) {
        if (lambda.imag() == 0.0) throw ConfigError("pair_type_I requires Im lambda != 0");
        if (lambda.imag() < 0.0) lambda = std::conj(lambda);
        KernelLadder* lad = find_ladder(lambda);
        FormalFunction u;
        if (!lad) {
            u = solve_decaying(source_, grid_, lambda, side);
        } else {
            u = solve_decaying(source_, grid_, lambda, side, int(lad->fn.size()),
                               lad->fn.back());
        }
        FormalFunction kappa = apply_current(u);
        DarbouxFactor f = make_type_I(kappa);
        factors_.push_back(f);
        current_ = f.target();
        if (!lad) {
            KernelLadder fresh;
            fresh.lambda = lambda;
            fresh.fn = {u};
            ladders_.push_back(fresh);
            KernelLadder conj_lad;
            conj_lad.lambda = std::conj(lambda);
            conj_lad.fn = {conjugate_function(u)};
            ladders_.push_back(conj_lad);
        } else {
            lad->fn.push_back(u);
            find_ladder(std::conj(lambda))->fn.push_back(conjugate_function(u));
        }
        return *this;
    }

    // delete + re-create a bound level: second-order isospectral deformation
    // with a size-2 Jordan block at e
    ChainBuilder& iso_jordan(double e, double mix = 1.0) {
        FormalFunction psi = bound_function(e);
        push_first_order(psi, SpectralValue::real(e));

        FormalFunction wp = solve_decaying(current_, grid_, cx(e, 0.0), Side::plus, 0,
                                           FormalFunction(), false);
        FormalFunction wm = solve_decaying(current_, grid_, cx(e, 0.0), Side::minus, 0,
                                           FormalFunction(), false);
        FormalFunction kappa = combine(wp, 1.0, wm, mix);

        // preimage of kappa is a first-order associated function of the source;
        // normalize so that (h - e) u1 = psi exactly (the stored parent)
        FormalFunction comp = complementary_solution(psi);
        FormalFunction part = solve_from_ic(source_, grid_, cx(e, 0.0), grid_->size() / 2, 0.0,
                                            1.0, psi, false);
        FormalFunction g_part = apply_current(part), g_comp = apply_current(comp);
        const auto [a, b] = match_two(g_part, g_comp, kappa);
        if (std::abs(a) < 1e-250) throw SpectrumError("degenerate associated preimage");
        FormalFunction u1 = combine(part, 1.0, comp, b / a);
        u1 = u1.rebound(source_, 1, psi);

        DarbouxFactor f = make_first_order(kappa);
        factors_.push_back(f);
        current_ = f.target();
        ladders_.back().fn.push_back(u1);
        return *this;
    }

    // extend an existing real ladder by one associated rung, emitted as a
    // first-order factor (its transported kernel has order zero)
    ChainBuilder& jordan_step(double lambda, Side side) {
        KernelLadder* lad = find_ladder(cx(lambda, 0.0));
        if (!lad) throw SpectrumError("jordan_step requires an existing ladder");
        FormalFunction u = solve_decaying(source_, grid_, cx(lambda, 0.0), side,
                                          int(lad->fn.size()), lad->fn.back());
        FormalFunction kappa = apply_current(u);
        if (kappa.order() != 0)
            throw SpectrumError("jordan_step image is not an eigenfunction");
        DarbouxFactor f = make_first_order(kappa);
        factors_.push_back(f);
        current_ = f.target();
        lad->fn.push_back(u);
        return *this;
    }

    // irreducible second-order block at a real lambda above the ground state:
    // Jordan pair of one-sided functions (kernel elements carry nodes)
    ChainBuilder& gap_pair_III(double lambda, Side side) {
        FormalFunction u0 = solve_decaying(source_, grid_, cx(lambda, 0.0), side, 0,
                                           FormalFunction(), false);
        FormalFunction u1 = solve_decaying(source_, grid_, cx(lambda, 0.0), side, 1, u0);
        FormalFunction k0 = apply_current(u0), k1 = apply_current(u1);
        DarbouxFactor f = make_type_III(k0, k1);
        factors_.push_back(f);
        current_ = f.target();
        KernelLadder lad;
        lad.lambda = cx(lambda, 0.0);
        lad.fn = {u0, u1};
        ladders_.push_back(std::move(lad));
        return *this;
    }

    // irreducible second-order block deleting two adjacent excited levels
    ChainBuilder& delete_pair_II(double ea, double eb) {
        if (ea >= eb) std::swap(ea, eb);
        FormalFunction ua = bound_function(ea), ub = bound_function(eb);
        FormalFunction ka = apply_current(ua), kb = apply_current(ub);
        DarbouxFactor f = make_type_II(ka, kb);
        factors_.push_back(f);
        current_ = f.target();
        KernelLadder la, lb;
        la.lambda = cx(ea, 0.0);
        la.fn = {ua};
        lb.lambda = cx(eb, 0.0);
        lb.fn = {ub};
        ladders_.push_back(la);
        ladders_.push_back(lb);
        return *this;
    }

    ChainBuilder& dress(double e) {
        dressing_.push_back(e);
        return *this;
    }

    FactorChain build() const {
        auto d = std::make_shared<FactorChain::Data>();
        d->grid = grid_;
        d->source = source_;
        d->target = current_;
        d->factors = factors_;
        d->dressing_roots = dressing_;
        d->kernel = ladders_;
        MatrixSSpectrum spec;
        for (const auto& lad : ladders_) {
            SpectrumEntry e;
            e.lambda = lad.lambda;
            e.k = int(lad.fn.size());
            e.blocks = {e.k};
            e.pair_member = lad.lambda.imag() != 0.0;
            spec.entries.push_back(e);
        }
        for (double root : dressing_) {
            if (SpectrumEntry* e = spec.find(cx(root, 0.0))) {
                e->k += 2;
                e->blocks.push_back(1);
                e->blocks.push_back(1);
            } else {
                SpectrumEntry fresh;
                fresh.lambda = cx(root, 0.0);
                fresh.k = 2;
                fresh.blocks = {1, 1};
                spec.entries.push_back(fresh);
            }
        }
        spec.canonicalize();
        d->spectrum = spec;
        return FactorChain(std::move(d));
    }

private:
    GridCPtr grid_;
    PotentialCPtr source_;
    PotentialCPtr current_;
    std::vector<DarbouxFactor> factors_;
    std::vector<KernelLadder> ladders_;
    std::vector<double> dressing_;

    KernelLadder* find_ladder(cx lambda) {
        for (auto& lad : ladders_)
            if (std::abs(lad.lambda - lambda) < 1e-9) return &lad;
        return nullptr;
    }

    FormalFunction bound_function(double e) {
        auto states = bound_state_inventory(source_, grid_, e + 0.5);
        for (auto& [energy, fn] : states)
            if (std::abs(energy - e) < 1e-6) {
                // rebind to the requested nominal energy for exact bookkeeping
                auto data = std::make_shared<FormalFunction::Data>(*fn.data());
                data->rows.clear();
                data->lambda = cx(e, 0.0);
                return FormalFunction(std::move(data));
            }
        throw SpectrumError("no bound state at the requested energy " + std::to_string(e));
    }

    FormalFunction apply_current(const FormalFunction& u) const {
        FormalFunction g = u;
        for (const auto& f : factors_) {
            g = f.apply(g);
            if (!g.valid()) throw SpectrumError("edit function lies in the chain kernel");
        }
        return g;
    }

    // solve alpha*ga + beta*gb = target using (value, derivative) at an anchor
    std::pair<cx, cx> match_two(const FormalFunction& ga, const FormalFunction& gb,
                                const FormalFunction& target) const {
        int anchor = grid_->size() / 2;
        double best = 0.0;
        for (int i = grid_->size() / 4; i < 3 * grid_->size() / 4; ++i) {
            const double s = std::min(std::abs(ga.psi()[i]), std::abs(gb.psi()[i]));
            if (s > best) { best = s; anchor = i; }
        }
        const cx a11 = ga.psi()[anchor], a12 = gb.psi()[anchor];
        const cx a21 = ga.dpsi()[anchor], a22 = gb.dpsi()[anchor];
        const cx det = a11 * a22 - a12 * a21;
        if (std::abs(det) < 1e-250) throw SpectrumError("degenerate preimage system");
        const cx r1 = target.psi()[anchor], r2 = target.dpsi()[anchor];
        return {(r1 * a22 - r2 * a12) / det, (a11 * r2 - a21 * r1) / det};
    }

    void push_first_order(const FormalFunction& u, SpectralValue sv) {
        FormalFunction kappa = apply_current(u);
        DarbouxFactor f = make_first_order(kappa);
        factors_.push_back(f);
        current_ = f.target();
        KernelLadder lad;
        lad.lambda = sv.value;
        lad.fn = {u};
        ladders_.push_back(std::move(lad));
    }
};

} // namespace itw

#endif
