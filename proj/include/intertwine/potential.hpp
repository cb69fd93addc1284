#ifndef INTERTWINE_POTENTIAL_HPP
#define INTERTWINE_POTENTIAL_HPP

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "intertwine/expr.hpp"
#include "intertwine/grid.hpp"
#include "intertwine/numeric.hpp"

namespace itw {

// A potential knows its value and derivatives everywhere, plus the class-K
// metadata (R0, eps) it claims.  Derivative rows on grid nodes ("ladders")
// feed every higher-order identity in the library; nothing downstream ever
// finite-differences a potential.
class PotentialBase {
public:
    PotentialBase(double r0, double eps, std::string label)
        : r0_(r0), eps_(eps), label_(std::move(label)) {
        if (!(r0 > 0.0) || !(eps > 0.0)) throw ConfigError("potential requires R0 > 0 and eps > 0");
    }
    virtual ~PotentialBase() = default;

    // k-th derivative at x.  Off-node evaluation of sampled potentials is
    // limited to k <= 2.
    virtual double value(double x, int k = 0) const = 0;

    // rows [V, V', ..., V^(depth)] sampled on g's nodes
    virtual std::shared_ptr<const std::vector<std::vector<double>>> ladder(const GridCPtr& g,
                                                                           int depth) const = 0;

    virtual bool analytic() const = 0;

    // largest |x| at which the potential may be evaluated
    virtual double max_abscissa() const { return 1e6; }

    double r0() const { return r0_; }
    double eps() const { return eps_; }
    const std::string& label() const { return label_; }
    const std::string& provenance() const { return provenance_; }

protected:
    double r0_, eps_;
    std::string label_;
    std::string provenance_;
};

using PotentialCPtr = std::shared_ptr<const PotentialBase>;

// spec-facing evaluation with the finiteness contract
inline double eval(const PotentialBase& p, double x, int deriv_order) {
    if (deriv_order < 0 || deriv_order > 2)
        throw EvaluationError("deriv_order must be 0, 1 or 2");
    const double v = p.value(x, deriv_order);
    if (!std::isfinite(v))
        throw EvaluationError("potential evaluated to a non-finite value", x);
    return v;
}

// --- analytic potentials ------------------------------------------------

class AnalyticPotential : public PotentialBase {
public:
    AnalyticPotential(ExprPtr e, double r0, double eps, std::string label)
        : PotentialBase(r0, eps, std::move(label)) {
        diffs_.push_back(std::move(e));
    }

    AnalyticPotential(const std::string& spec, double r0, double eps, std::string label = "")
        : AnalyticPotential(parse_expr(spec), r0, eps, label.empty() ? spec : std::move(label)) {
        spec_string_ = spec;
    }

    double value(double x, int k = 0) const override { return expr_eval(derivative(k), x); }

    std::shared_ptr<const std::vector<std::vector<double>>> ladder(const GridCPtr& g,
                                                                   int depth) const override {
        auto& entry = cache_[g.get()];
        if (!entry || int(entry->size()) <= depth) {
            auto rows = std::make_shared<std::vector<std::vector<double>>>(depth + 1);
            for (int k = 0; k <= depth; ++k) {
                auto& row = (*rows)[k];
                row.resize(g->size());
                const ExprPtr& d = derivative(k);
                for (int i = 0; i < g->size(); ++i) row[i] = expr_eval(d, g->x(i));
            }
            entry = rows;
        }
        return entry;
    }

    bool analytic() const override { return true; }
    const ExprPtr& expression() const { return diffs_[0]; }
    const std::string& spec_string() const { return spec_string_; }

    const ExprPtr& derivative(int k) const {
        while (int(diffs_.size()) <= k) diffs_.push_back(expr_diff(diffs_.back()));
        return diffs_[k];
    }

private:
    mutable std::vector<ExprPtr> diffs_;
    mutable std::map<const Grid*, std::shared_ptr<std::vector<std::vector<double>>>> cache_;
    std::string spec_string_;
};

// --- grid-sampled potentials (Darboux targets) ---------------------------

class GridPotential : public PotentialBase {
public:
    GridPotential(GridCPtr grid, std::vector<std::vector<double>> rows, double r0, double eps,
                  std::string label, std::string provenance)
        : PotentialBase(r0, eps, std::move(label)), grid_(std::move(grid)) {
        if (rows.size() < 3) throw Error("grid potential needs rows V, V', V'' at least");
        rows_ = std::make_shared<std::vector<std::vector<double>>>(std::move(rows));
        for (size_t k = 0; k < rows_->size(); ++k)
            if (int((*rows_)[k].size()) != grid_->size())
                throw Error("grid potential row size mismatch");
        for (double v : (*rows_)[0])
            if (!std::isfinite(v)) throw SingularFactorError("grid potential has non-finite samples");
        provenance_ = std::move(provenance);
    }

    double value(double x, int k = 0) const override {
        if (x < grid_->xmin() - grid_->h() || x > grid_->xmax() + grid_->h())
            throw EvaluationError("grid potential evaluated outside its grid", x);
        const auto& rows = *rows_;
        const int i = grid_->nearest(x);
        if (std::abs(grid_->x(i) - x) < 1e-13 * (1.0 + std::abs(x)) && k < int(rows.size()))
            return rows[k][i];
        if (k > 2 || k + 2 >= int(rows.size()))
            throw EvaluationError("off-node grid-potential derivative order not available", x);
        const int c = grid_->cell(x);
        const double t = (x - grid_->x(c)) / grid_->h();
        return hermite5(rows[k][c], rows[k + 1][c], rows[k + 2][c], rows[k][c + 1],
                        rows[k + 1][c + 1], rows[k + 2][c + 1], grid_->h(), t);
    }

    std::shared_ptr<const std::vector<std::vector<double>>> ladder(const GridCPtr& g,
                                                                   int depth) const override {
        if (g.get() != grid_.get()) throw Error("grid potential queried on a foreign grid");
        if (depth >= int(rows_->size()))
            throw Error("grid potential ladder depth exceeded: have " +
                        std::to_string(rows_->size() - 1) + ", need " + std::to_string(depth));
        return rows_;
    }

    bool analytic() const override { return false; }
    double max_abscissa() const override {
        return std::min(-grid_->xmin(), grid_->xmax());
    }
    const GridCPtr& grid() const { return grid_; }
    int depth() const { return int(rows_->size()) - 1; }

private:
    GridCPtr grid_;
    std::shared_ptr<std::vector<std::vector<double>>> rows_;
};

// --- class-K membership --------------------------------------------------

enum class KVerdict { verified, refuted, inconclusive };

struct KMembershipReport {
    bool property2_ok = false;
    double property3_sup_right = 0.0;
    double property3_sup_left = 0.0;
    std::pair<double, double> sample_range;
    KVerdict verdict = KVerdict::inconclusive;
    std::optional<double> witness_x;  // present whenever verdict == refuted
};

// Samples property (2) and the two growth-control expressions on log-dense
// points of [R0, x_max] and [-x_max, -R0].  "verified" means every sample
// satisfied V >= eps and both suprema plateaued over the outer half of the
// sampled range; certification is only ever on the sampled window.
inline KMembershipReport check_class_k(const PotentialBase& p, double x_max, int n_samples) {
    if (!(x_max > p.r0())) throw ConfigError("check_class_k requires x_max > R0");
    if (n_samples < 100) throw ConfigError("check_class_k requires n_samples >= 100");

    KMembershipReport rep;
    rep.sample_range = {p.r0(), x_max};
    rep.property2_ok = true;

    const double ratio = x_max / p.r0();
    const double mid = 0.5 * (p.r0() + x_max);  // outer half of the sampled range
    auto sample_side = [&](int sgn, double& sup_out) -> bool {
        double sup_inner = 0.0, sup_outer = 0.0;
        double xi = 0.0;
        double prev_x = sgn * p.r0();
        double prev_sq = std::sqrt(std::abs(p.value(prev_x)));
        bool finite = true;
        for (int j = 0; j < n_samples; ++j) {
            const double mag = p.r0() * std::pow(ratio, double(j) / double(n_samples - 1));
            const double x = sgn * mag;
            const double v = p.value(x);
            if (!(v >= p.eps())) {
                rep.property2_ok = false;
                if (!rep.witness_x) rep.witness_x = x;
                return false;
            }
            const double sq = std::sqrt(std::abs(v));
            xi += 0.5 * (sq + prev_sq) * std::abs(x - prev_x);
            prev_x = x;
            prev_sq = sq;
            const double dv = p.value(x, 1), ddv = p.value(x, 2);
            const double av = std::abs(v);
            const double e = xi * xi * (dv * dv / (av * av * av) + std::abs(ddv) / (av * av));
            if (!std::isfinite(e)) { finite = false; continue; }
            double& sup = (mag < mid) ? sup_inner : sup_outer;
            sup = std::max(sup, e);
        }
        sup_out = std::max(sup_inner, sup_outer);
        return finite && sup_outer <= sup_inner * 1.05 + 1e-9;
    };

    const bool right = sample_side(+1, rep.property3_sup_right);
    if (!rep.property2_ok) { rep.verdict = KVerdict::refuted; return rep; }
    const bool left = sample_side(-1, rep.property3_sup_left);
    if (!rep.property2_ok) { rep.verdict = KVerdict::refuted; return rep; }
    rep.verdict = (right && left) ? KVerdict::verified : KVerdict::inconclusive;
    return rep;
}

// --- built-in families ----------------------------------------------------

inline std::shared_ptr<const AnalyticPotential> shifted_harmonic(double shift) {
    const double r0 = std::sqrt(1.0 - std::min(0.0, shift));
    return std::make_shared<const AnalyticPotential>(
        make_add({make_poly({0.0, 0.0, 1.0}), make_const(shift)}), r0, 1.0,
        "x^2 + " + std::to_string(shift));
}

inline std::shared_ptr<const AnalyticPotential> constant_potential(double c) {
    if (!(c > 0.0)) throw ConfigError("constant fixture requires c > 0");
    return std::make_shared<const AnalyticPotential>(make_const(c), 1.0, c,
                                                     "const " + std::to_string(c));
}

// the non-class-K fixture: V -> -inf at +infinity
inline std::shared_ptr<const AnalyticPotential> counterexample_potential(double alpha, double beta,
                                                                         double delta) {
    ExprPtr e = make_add({make_mul({make_const(-alpha * alpha),
                                    make_exp(make_poly({0.0, 2.0 * beta}))}),
                          make_mul({make_const(2.0 * alpha * delta),
                                    make_exp(make_poly({0.0, beta}))})});
    return std::make_shared<const AnalyticPotential>(e, 1.0, 1.0, "exp counterexample");
}

inline std::shared_ptr<const AnalyticPotential> rational_quadratic(double shift, double bump) {
    // x^2 + shift + bump / (1 + x^2)
    ExprPtr e = make_add({make_poly({shift, 0.0, 1.0}),
                          make_mul({make_const(bump), make_pow(make_poly({1.0, 0.0, 1.0}), -1)})});
    const double r0 = std::sqrt(1.0 - std::min(0.0, shift)) + 1.0;
    return std::make_shared<const AnalyticPotential>(e, r0, 1.0, "rational+quadratic");
}

} // namespace itw

#endif
