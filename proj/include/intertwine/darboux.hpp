#ifndef INTERTWINE_DARBOUX_HPP
#define INTERTWINE_DARBOUX_HPP

#include <memory>
#include <string>
#include <vector>

#include "intertwine/jet.hpp"
#include "intertwine/potential.hpp"
#include "intertwine/schrodinger.hpp"

namespace itw {

enum class FactorKind { first_order, type_I, type_II, type_III };

inline const char* name(FactorKind k) {
    switch (k) {
    case FactorKind::first_order: return "first_order";
    case FactorKind::type_I: return "type_I";
    case FactorKind::type_II: return "type_II";
    default: return "type_III";
    }
}

namespace detail {

// derivative depth a potential can serve on grid nodes
inline int available_depth(const PotentialBase& p) {
    if (p.analytic()) return 26;
    return static_cast<const GridPotential&>(p).depth();
}

// local envelope scale of a solution: |psi| and |psi'|/kappa cannot both be
// small relative to it away from a genuine zero
inline double local_scale(const FormalFunction& f, int i) {
    const double x = f.grid()->x(i);
    const double kappa = std::sqrt(std::abs(f.pot()->value(x) - f.lambda().real())) + 1.0;
    return std::abs(f.psi()[i]) + std::abs(f.dpsi()[i]) / kappa;
}

inline void check_zero_free(const FormalFunction& phi, const char* what) {
    const int n = phi.grid()->size();
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
        const double re = phi.psi()[i].real();
        const double mag = std::abs(phi.psi()[i]);
        if (mag < 1e-12 * local_scale(phi, i))
            throw SingularFactorError(std::string(what) + " has a grid zero",
                                      phi.grid()->x(i));
        if (phi.lambda().imag() == 0.0) {
            if (prev != 0.0 && re * prev < 0.0)
                throw SingularFactorError(std::string(what) + " changes sign",
                                          phi.grid()->x(i));
            prev = re;
        }
    }
}

// Deep derivative rows of ratios like phi'/phi or W'/W are much smaller than
// the individual recurrence terms, so their construction cancels heavily;
// extended precision in the construction keeps the stored double rows clean.
using lx = std::complex<long double>;
using LLadder = std::vector<std::vector<lx>>;

inline LLadder widen(const Ladder& a) {
    LLadder out(a.size());
    for (size_t m = 0; m < a.size(); ++m) {
        out[m].resize(a[m].size());
        for (size_t i = 0; i < a[m].size(); ++i)
            out[m][i] = lx(a[m][i].real(), a[m][i].imag());
    }
    return out;
}

inline Ladder narrow(const LLadder& a) {
    Ladder out(a.size());
    for (size_t m = 0; m < a.size(); ++m) {
        out[m].resize(a[m].size());
        for (size_t i = 0; i < a[m].size(); ++i)
            out[m][i] = cx(double(a[m][i].real()), double(a[m][i].imag()));
    }
    return out;
}

// chi = phi'/phi and its derivatives: chi^(m+1) = V^(m) - lambda[m=0] - (chi^2)^(m)
inline Ladder chi_ladder(const FormalFunction& phi, int depth) {
    const int n = phi.grid()->size();
    auto V = phi.pot()->ladder(phi.grid(), std::max(depth - 1, 0));
    LLadder chi(depth + 1, std::vector<lx>(n));
    for (int i = 0; i < n; ++i) {
        const cx r = phi.dpsi()[i] / phi.psi()[i];
        chi[0][i] = lx(r.real(), r.imag());
    }
    const lx lam(phi.lambda().real(), phi.lambda().imag());
    for (int m = 0; m < depth; ++m)
        for (int i = 0; i < n; ++i) {
            lx sq = 0.0;
            for (int j = 0; j <= m; ++j)
                sq += (long double)binom(m, j) * chi[j][i] * chi[m - j][i];
            lx v = (long double)(*V)[m][i];
            if (m == 0) v -= lam;
            chi[m + 1][i] = v - sq;
        }
    return narrow(chi);
}

// numerator/denominator quotient ladder: given q*W = N as function identities,
// q^(m) = (N^(m) - sum_{j<m} C(m,j) q^(j) W^(m-j)) / W
inline LLadder quotient_ladder(const LLadder& N, const LLadder& W, int depth) {
    const int n = int(N[0].size());
    LLadder q(depth + 1, std::vector<lx>(n));
    for (int m = 0; m <= depth; ++m)
        for (int i = 0; i < n; ++i) {
            lx acc = N[m][i];
            for (int j = 0; j < m; ++j) acc -= (long double)binom(m, j) * q[j][i] * W[m - j][i];
            q[m][i] = acc / W[0][i];
        }
    return q;
}

// Zero out imaginary parts that a real-coefficient identity guarantees to
// cancel.  The reality audit uses the base-row scale: derivative rows of a
// coefficient that happens to be (nearly) constant are cancellation noise at
// any magnitude and say nothing about reality of the operator.
inline double zero_imag_audit(Ladder& rows, int audit_rows = 3) {
    double base = 0.0;
    for (auto& v : rows[0]) base = std::max(base, std::abs(v));
    double worst = 0.0;
    for (int m = 0; m < int(rows.size()); ++m) {
        double scale = base;
        for (auto& v : rows[m]) scale = std::max(scale, std::abs(v));
        for (auto& v : rows[m]) {
            if (m < audit_rows && scale > 0.0)
                worst = std::max(worst, std::abs(v.imag()) / scale);
            v = cx(v.real(), 0.0);
        }
    }
    return worst;
}

} // namespace detail

// A first- or second-order Darboux block.  Coefficients are sampled together
// with their derivative ladders, so applying the factor (or its transpose) to
// solutions and to deep jets never touches a finite difference.
class DarbouxFactor {
public:
    struct Data {
        int order = 1;
        FactorKind kind = FactorKind::first_order;
        GridCPtr grid;
        PotentialCPtr source, target;
        std::vector<FormalFunction> kernel;   // functions of the source Hamiltonian
        std::vector<SpectralValue> spectrum;
        Ladder chi;        // order 1
        Ladder a1, a0;     // order 2
        int coeff_depth = 0;
        double im_coeff_max = 0.0;
        KMembershipReport target_k;
        mutable std::vector<FormalFunction> tkernel;  // kernel of the transpose, lazy
    };

    DarbouxFactor() = default;
    DarbouxFactor(std::shared_ptr<const Data> d, bool transposed)
        : d_(std::move(d)), transposed_(transposed) {}

    bool valid() const { return bool(d_); }
    int order() const { return d_->order; }
    FactorKind kind() const { return d_->kind; }
    bool transposed() const { return transposed_; }
    const GridCPtr& grid() const { return d_->grid; }
    const PotentialCPtr& source() const { return transposed_ ? d_->target : d_->source; }
    const PotentialCPtr& target() const { return transposed_ ? d_->source : d_->target; }
    const std::vector<SpectralValue>& spectrum() const { return d_->spectrum; }
    const KMembershipReport& target_class_k() const { return d_->target_k; }
    double im_coeff_max() const { return d_->im_coeff_max; }
    int coeff_depth() const { return d_->coeff_depth; }
    const std::shared_ptr<const Data>& data() const { return d_; }

    DarbouxFactor transpose() const { return DarbouxFactor(d_, !transposed_); }

    const std::vector<FormalFunction>& kernel_basis() const {
        if (!transposed_) return d_->kernel;
        build_transpose_kernel();
        return d_->tkernel;
    }

    int multiplicity_at(cx lambda) const {
        int m = 0;
        for (const auto& s : d_->spectrum)
            if (std::abs(s.value - lambda) < 1e-9) ++m;
        return m;
    }

    // --- application to formal functions -----------------------------------

    FormalFunction apply(const FormalFunction& f) const {
        if (f.pot().get() != source().get())
            throw DomainError("factor applied to a function of a different Hamiltonian");
        // identity-linked kernel elements map to zero exactly
        for (const auto& k : kernel_basis())
            if (k.data().get() == f.data().get()) return FormalFunction();

        FormalFunction new_parent;
        if (f.parent().valid()) new_parent = apply(f.parent());
        const int order = new_parent.valid() ? new_parent.order() + 1 : 0;

        const int n = d_->grid->size();
        auto out = std::make_shared<FormalFunction::Data>();
        out->grid = d_->grid;
        out->pot = target();
        out->lambda = f.lambda();
        out->order = order;
        out->parent = new_parent.valid() ? new_parent.data() : nullptr;
        out->psi.resize(n);
        out->dpsi.resize(n);

        if (d_->order == 1) {
            const Ladder& rows = f.ladder(2);
            const Ladder& chi = d_->chi;
            if (!transposed_) {
                for (int i = 0; i < n; ++i) {
                    out->psi[i] = rows[1][i] - chi[0][i] * rows[0][i];
                    out->dpsi[i] = rows[2][i] - chi[1][i] * rows[0][i] - chi[0][i] * rows[1][i];
                }
            } else {
                for (int i = 0; i < n; ++i) {
                    out->psi[i] = -rows[1][i] - chi[0][i] * rows[0][i];
                    out->dpsi[i] = -rows[2][i] - chi[1][i] * rows[0][i] - chi[0][i] * rows[1][i];
                }
            }
        } else {
            const Ladder& rows = f.ladder(3);
            const Ladder &a1 = d_->a1, &a0 = d_->a0;
            if (!transposed_) {
                for (int i = 0; i < n; ++i) {
                    out->psi[i] = rows[2][i] + a1[0][i] * rows[1][i] + a0[0][i] * rows[0][i];
                    out->dpsi[i] = rows[3][i] + a1[1][i] * rows[1][i] + a1[0][i] * rows[2][i] +
                                   a0[1][i] * rows[0][i] + a0[0][i] * rows[1][i];
                }
            } else {
                // p2^t = d^2 - a1 d + (a0 - a1')
                for (int i = 0; i < n; ++i) {
                    const cx b0 = a0[0][i] - a1[1][i];
                    const cx b0p = a0[1][i] - a1[2][i];
                    out->psi[i] = rows[2][i] - a1[0][i] * rows[1][i] + b0 * rows[0][i];
                    out->dpsi[i] = rows[3][i] - a1[1][i] * rows[1][i] - a1[0][i] * rows[2][i] +
                                   b0p * rows[0][i] + b0 * rows[1][i];
                }
            }
        }

        // functions that are numerically in the kernel (transported ladder
        // elements lose their identity links) map to zero as well; the test is
        // pointwise relative so that exponentially spanned inputs cannot hide
        // a genuinely nonzero image
        if (mean_relative_size(*out, f, d_->order) < 1e-9) return FormalFunction();
        return detail::finalize(std::move(out), false);
    }

    // mean over the interior of |g| against the locally expected output scale
    // of an order-`ord` operator applied to f
    static double mean_relative_size(const FormalFunction::Data& g, const FormalFunction& f,
                                     int ord) {
        const Grid& gr = *f.grid();
        const int n = gr.size();
        const int lo = n / 8, hi = n - n / 8;
        double acc = 0.0;
        for (int i = lo; i < hi; ++i) {
            const double kap =
                std::sqrt(std::abs(f.pot()->value(gr.x(i)) - f.lambda().real())) + 1.0;
            double scale = std::abs(f.psi()[i]) + std::abs(f.dpsi()[i]) / kap;
            for (int k = 0; k < ord; ++k) scale *= kap;
            acc += std::abs(g.psi[i]) / (scale + 1e-300);
        }
        return acc / double(hi - lo);
    }

    // --- application to jets ------------------------------------------------

    GridJet apply_jet(const GridJet& f) const {
        const int ord = d_->order;
        const int out_depth = f.depth() - ord;
        require_depth(f, ord, "DarbouxFactor::apply_jet");
        const int need = out_depth + ((ord == 2 && transposed_) ? 1 : 0);
        if (d_->coeff_depth < need)
            throw Error("factor coefficient ladder too shallow for this jet");
        GridJet g;
        g.grid = f.grid;
        const int n = f.size();
        g.d.assign(out_depth + 1, std::vector<cx>(n));
        for (int k = 0; k <= out_depth; ++k) {
            for (int i = 0; i < n; ++i) {
                cx acc;
                if (ord == 1) {
                    acc = transposed_ ? -f.d[k + 1][i] : f.d[k + 1][i];
                    for (int j = 0; j <= k; ++j)
                        acc -= binom(k, j) * d_->chi[j][i] * f.d[k - j][i];
                } else if (!transposed_) {
                    acc = f.d[k + 2][i];
                    for (int j = 0; j <= k; ++j)
                        acc += binom(k, j) * (d_->a1[j][i] * f.d[k + 1 - j][i] +
                                              d_->a0[j][i] * f.d[k - j][i]);
                } else {
                    acc = f.d[k + 2][i];
                    for (int j = 0; j <= k; ++j)
                        acc += binom(k, j) * (-d_->a1[j][i] * f.d[k + 1 - j][i] +
                                              (d_->a0[j][i] - d_->a1[j + 1][i]) * f.d[k - j][i]);
                }
                g.d[k][i] = acc;
            }
        }
        return g;
    }

private:
    std::shared_ptr<const Data> d_;
    bool transposed_ = false;

    void build_transpose_kernel() const {
        if (!d_->tkernel.empty()) return;
        if (d_->order == 1) {
            // ker p^t = 1/phi on the target Hamiltonian
            const FormalFunction& phi = d_->kernel[0];
            const int n = d_->grid->size();
            auto out = std::make_shared<FormalFunction::Data>();
            out->grid = d_->grid;
            out->pot = d_->target;
            out->lambda = phi.lambda();
            out->order = 0;
            out->psi.resize(n);
            out->dpsi.resize(n);
            for (int i = 0; i < n; ++i) {
                out->psi[i] = 1.0 / phi.psi()[i];
                out->dpsi[i] = -phi.dpsi()[i] / (phi.psi()[i] * phi.psi()[i]);
            }
            d_->tkernel.push_back(detail::finalize(std::move(out), false));
            return;
        }
        // order 2: images of complementary-solution data span ker p^t
        DarbouxFactor fwd(d_, false);
        const FormalFunction& base = d_->kernel[0];
        FormalFunction comp = complementary_solution(base);
        d_->tkernel.push_back(fwd.apply(comp));
        if (d_->kernel[1].order() == 1) {
            // Jordan block: push an associated element over the complementary
            FormalFunction assoc = solve_from_ic(base.pot(), base.grid(), base.lambda(),
                                                 base.grid()->size() / 2, 0.0, 1.0, comp, false);
            d_->tkernel.push_back(fwd.apply(assoc));
        } else {
            d_->tkernel.push_back(fwd.apply(complementary_solution(d_->kernel[1])));
        }
    }
};

// --- builders -------------------------------------------------------------

namespace detail {

inline PotentialCPtr make_target(const PotentialCPtr& src, const GridCPtr& grid,
                                 const Ladder& rho, int tdepth, const std::string& provenance) {
    auto V = src->ladder(grid, tdepth);
    std::vector<std::vector<double>> rows(tdepth + 1, std::vector<double>(grid->size()));
    for (int m = 0; m <= tdepth; ++m)
        for (int i = 0; i < grid->size(); ++i)
            rows[m][i] = (*V)[m][i] - 2.0 * rho[m + 1][i].real();

    // the target is again class K, but with its own (R0, eps): the transformed
    // tail may dip where the source tail was already positive.  Scan radii for
    // the smallest R0 whose outer region keeps a healthy positive floor.
    const int n = grid->size();
    auto tail_min = [&](double r) {
        double t = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            if (std::abs(grid->x(i)) >= r) t = std::min(t, rows[0][i]);
        return t;
    };
    const double r_hi = 0.8 * std::min(std::abs(grid->xmin()), grid->xmax());
    double best_floor = 0.0;
    for (double r = src->r0(); r <= r_hi; r += 0.25)
        best_floor = std::max(best_floor, tail_min(r));
    double r0 = src->r0(), eps = src->eps();
    if (best_floor > 0.0) {
        const double want = std::min(0.5 * src->eps(), 0.5 * best_floor);
        for (double r = src->r0(); r <= r_hi; r += 0.25)
            if (tail_min(r) >= want) {
                r0 = r;
                eps = std::min(src->eps(), 0.9 * tail_min(r));
                break;
            }
    }
    return std::make_shared<const GridPotential>(grid, std::move(rows), r0, eps,
                                                 src->label() + " | " + provenance, provenance);
}

} // namespace detail

// p = d/dx - phi'/phi from a zero-free formal eigenfunction
inline DarbouxFactor make_first_order(const FormalFunction& phi) {
    if (phi.order() != 0)
        throw DomainError("first-order factor requires a zero-order kernel function");
    detail::check_zero_free(phi, "first-order kernel function");

    auto d = std::make_shared<DarbouxFactor::Data>();
    d->order = 1;
    d->kind = FactorKind::first_order;
    d->grid = phi.grid();
    d->source = phi.pot();
    d->kernel = {phi};
    d->spectrum = {SpectralValue{phi.lambda(), 1,
                                 phi.lambda().imag() == 0.0
                                     ? SpectralValue::Kind::real_nonpositive
                                     : SpectralValue::Kind::complex_pair_member}};

    const int avail = detail::available_depth(*phi.pot());
    const int cdepth = std::min(avail + 1, 24);
    d->chi = detail::chi_ladder(phi, cdepth);
    d->coeff_depth = cdepth;
    if (phi.lambda().imag() == 0.0) d->im_coeff_max = detail::zero_imag_audit(d->chi);

    const int tdepth = std::min(cdepth - 1, avail);
    // V_target^(m) = V^(m) - 2 chi^(m+1): the log-derivative ladder is exactly
    // the log-Wronskian ladder for a single kernel function
    d->target = detail::make_target(phi.pot(), phi.grid(), d->chi, tdepth,
                                    "darboux1(lambda=" + std::to_string(phi.lambda().real()) +
                                        (phi.lambda().imag() != 0.0 ? "+i*..." : "") + ")");
    d->target_k = check_class_k(*d->target, d->grid->xmax() - 2.0 * d->grid->h(),
                                std::max(150, d->grid->size() / 16));
    return DarbouxFactor(std::move(d), false);
}

namespace detail {

inline DarbouxFactor make_second_order(const FormalFunction& u1, const FormalFunction& u2,
                                       FactorKind kind, std::vector<SpectralValue> spec,
                                       const std::string& provenance) {
    const GridCPtr& grid = u1.grid();
    const int n = grid->size();
    const int avail = available_depth(*u1.pot());
    const int cdepth = std::min(avail, 24);

    const LLadder r1 = widen(u1.ladder(cdepth + 2));
    const LLadder r2 = widen(u2.ladder(cdepth + 2));

    // Wronskian ladder W^(m), numerator ladder A^(m) for a0 = A/W
    LLadder W(cdepth + 2, std::vector<lx>(n)), A(cdepth + 1, std::vector<lx>(n));
    for (int m = 0; m <= cdepth + 1; ++m)
        for (int i = 0; i < n; ++i) {
            lx acc = 0.0;
            for (int j = 0; j <= m; ++j)
                acc += (long double)binom(m, j) *
                       (r1[j][i] * r2[m - j + 1][i] - r1[j + 1][i] * r2[m - j][i]);
            W[m][i] = acc;
        }
    for (int m = 0; m <= cdepth; ++m)
        for (int i = 0; i < n; ++i) {
            lx acc = 0.0;
            for (int j = 0; j <= m; ++j)
                acc += (long double)binom(m, j) *
                       (r1[j + 1][i] * r2[m - j + 2][i] - r1[j + 2][i] * r2[m - j + 1][i]);
            A[m][i] = acc;
        }

    // nonsingularity of the block: zero-free Wronskian
    const bool imaginary_pair = (kind == FactorKind::type_I);
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = grid->x(i);
        const double kappa = std::sqrt(std::abs(u1.pot()->value(x) - u1.lambda().real())) + 1.0;
        const double s1 = std::abs(u1.psi()[i]) + std::abs(u1.dpsi()[i]) / kappa;
        const double s2 = std::abs(u2.psi()[i]) + std::abs(u2.dpsi()[i]) / kappa;
        const double scale = s1 * s2 * kappa;
        const cx w0(double(W[0][i].real()), double(W[0][i].imag()));
        if (std::abs(w0) < 1e-12 * scale)
            throw SingularFactorError("second-order kernel Wronskian has a grid zero", x);
        const double track = imaginary_pair ? (cx(0, 1) * w0).real() : w0.real();
        if (prev != 0.0 && track * prev < 0.0)
            throw SingularFactorError("second-order kernel Wronskian changes sign", x);
        prev = track;
    }
    if (imaginary_pair) {
        // iW is real and strictly monotone when Im lambda != 0
        int bad = 0;
        const double dir = (u2.lambda().imag() > 0) ? 1.0 : -1.0;
        for (int i = 1; i < n; ++i) {
            const double a = -double(W[0][i - 1].imag()), b = -double(W[0][i].imag());
            if (dir * (b - a) <= 0.0) ++bad;
        }
        if (bad > 0)
            throw SingularFactorError("type-I Wronskian monotonicity violated on the grid");
    }

    auto d = std::make_shared<DarbouxFactor::Data>();
    d->order = 2;
    d->kind = kind;
    d->grid = grid;
    d->source = u1.pot();
    d->kernel = {u1, u2};
    d->spectrum = std::move(spec);

    LLadder rho_l = quotient_ladder(LLadder(W.begin() + 1, W.end()), W, cdepth);
    Ladder rho = narrow(rho_l);
    d->a1.assign(cdepth + 1, std::vector<cx>(n));
    for (int m = 0; m <= cdepth; ++m)
        for (int i = 0; i < n; ++i) d->a1[m][i] = -rho[m][i];
    d->a0 = narrow(quotient_ladder(A, W, cdepth));
    d->coeff_depth = cdepth;
    {
        const double w1 = zero_imag_audit(d->a1);
        const double w0 = zero_imag_audit(d->a0);
        d->im_coeff_max = std::max(w1, w0);
    }

    const int tdepth = std::min(cdepth - 1, avail);
    Ladder rho_real(rho);
    zero_imag_audit(rho_real);
    d->target = make_target(u1.pot(), grid, rho_real, tdepth, provenance);
    d->target_k = check_class_k(*d->target, grid->xmax() - 2.0 * grid->h(),
                                std::max(150, grid->size() / 16));
    return DarbouxFactor(std::move(d), false);
}

} // namespace detail

// really irreducible type-I block with kernel {phi, phi*}, Im lambda != 0
inline DarbouxFactor make_type_I(const FormalFunction& phi) {
    if (phi.lambda().imag() == 0.0)
        throw DomainError("type-I factor requires Im lambda != 0");
    if (!(phi.norm(Side::plus) == NormClass::normalizable ||
          phi.norm(Side::minus) == NormClass::normalizable))
        throw DomainError("type-I kernel function must be normalizable at one infinity");
    FormalFunction bar = conjugate_function(phi);
    std::vector<SpectralValue> spec = {SpectralValue::pair_member(bar.lambda()),
                                       SpectralValue::pair_member(phi.lambda())};
    return detail::make_second_order(bar, phi, FactorKind::type_I, std::move(spec),
                                     "darboux2_I(lambda=" + std::to_string(phi.lambda().real()) +
                                         "+-" + std::to_string(std::abs(phi.lambda().imag())) +
                                         "i)");
}

// real second-order block: two distinct real eigenvalues (type II) or a
// doubly degenerate one realized by a Jordan pair (type III)
inline DarbouxFactor make_type_II(const FormalFunction& ua, const FormalFunction& ub) {
    if (ua.lambda().imag() != 0.0 || ub.lambda().imag() != 0.0)
        throw DomainError("type-II factor requires real eigenvalues");
    if (std::abs(ua.lambda() - ub.lambda()) < 1e-12)
        throw DomainError("type-II factor requires distinct eigenvalues");
    std::vector<SpectralValue> spec = {SpectralValue::real(ua.lambda().real()),
                                       SpectralValue::real(ub.lambda().real())};
    return detail::make_second_order(ua, ub, FactorKind::type_II, std::move(spec),
                                     "darboux2_II(" + std::to_string(ua.lambda().real()) + "," +
                                         std::to_string(ub.lambda().real()) + ")");
}

inline DarbouxFactor make_type_III(const FormalFunction& u0, const FormalFunction& u1) {
    if (u0.lambda().imag() != 0.0)
        throw DomainError("type-III factor requires a real eigenvalue");
    if (u1.order() != u0.order() + 1)
        throw DomainError("type-III factor requires a Jordan pair (orders j, j+1)");
    std::vector<SpectralValue> spec = {SpectralValue::real(u0.lambda().real(), 2)};
    return detail::make_second_order(u0, u1, FactorKind::type_III, std::move(spec),
                                     "darboux2_III(" + std::to_string(u0.lambda().real()) + ")");
}

// --- residual checks ---------------------------------------------------------

// max over the family of ||(p h_src - h_tgt p) f|| / ||f||
inline double intertwining_residual(const DarbouxFactor& p, const std::vector<ExprPtr>& fams,
                                    int jet_depth = 8) {
    const GridCPtr& g = p.grid();
    const NormWindow w = NormWindow::interior(g);
    double worst = 0.0;
    for (const auto& e : fams) {
        GridJet f = jet_from_expr(e, g, jet_depth);
        GridJet lhs = p.apply_jet(jet_apply_h(f, *p.source(), 0.0));
        GridJet rhs = jet_apply_h(p.apply_jet(f), *p.target(), 0.0);
        worst = std::max(worst, rel_residual(lhs, rhs, l2_norm(f, w), w));
    }
    return worst;
}

// residual of transpose(p) p - prod (h_src - lambda_i) on the family
inline double product_identity_residual(const DarbouxFactor& p, const std::vector<ExprPtr>& fams,
                                        int jet_depth = 10) {
    const GridCPtr& g = p.grid();
    const NormWindow w = NormWindow::interior(g);
    double worst = 0.0;
    for (const auto& e : fams) {
        GridJet f = jet_from_expr(e, g, jet_depth);
        GridJet lhs = p.transpose().apply_jet(p.apply_jet(f));
        GridJet rhs = f;
        for (const auto& s : p.spectrum()) rhs = jet_apply_h(rhs, *p.source(), s.value);
        worst = std::max(worst, rel_residual(lhs, rhs, l2_norm(f, w), w));
    }
    return worst;
}

// annihilation audit: ||p u|| / ||u|| for each kernel element
inline double annihilation_residual(const DarbouxFactor& p) {
    const NormWindow w = NormWindow::interior(p.grid());
    double worst = 0.0;
    for (const auto& u : p.kernel_basis()) {
        // bypass the identity shortcut: rebuild via jets
        GridJet uj = u.jet(p.order());
        GridJet img = p.apply_jet(uj);
        worst = std::max(worst, l2_norm(img, w) / (l2_norm(uj, w) + 1e-300));
    }
    return worst;
}

} // namespace itw

#endif
