#ifndef INTERTWINE_ANALYSIS_HPP
#define INTERTWINE_ANALYSIS_HPP

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "intertwine/chain.hpp"

namespace itw {

// --- index balance -------------------------------------------------------------

struct IndexReport {
    cx lambda;
    int nu_plus = 0, nu_minus = 0;
    int n_plus = 0, n_minus = 0, n0 = 0;
    bool balanced = false;
    bool zero_branch = false;  // the n0 > 0 case: both sides must vanish
};

namespace detail {

inline bool is_level(const std::vector<std::pair<double, FormalFunction>>& inv, cx lambda,
                     FormalFunction* fn = nullptr) {
    if (lambda.imag() != 0.0) return false;
    for (const auto& [e, f] : inv)
        if (std::abs(e - lambda.real()) < 1e-6) {
            if (fn) *fn = f;
            return true;
        }
    return false;
}

// Normalizability flags of the canonical ladder of ker q^+ at lambda.
// Pushing complementary solutions through the chain loses the decaying side
// to round-off (the image is exponentially subdominant there), so instead a
// decaying ladder candidate is built directly on h^- for each side, and
// membership in ker q^+ is tested with the transposed chain.  A candidate in
// the kernel is a legitimate canonical element normalizable at that side.
struct SideFlags {
    NormClass plus = NormClass::nonnormalizable;
    NormClass minus = NormClass::nonnormalizable;
};

inline std::vector<SideFlags> transpose_ladder_flags(const FactorChain& c,
                                                     const KernelLadder& lad) {
    const int k = int(lad.fn.size());
    std::vector<SideFlags> flags(k);
    const Grid& gr = *c.grid();
    const int n = gr.size();
    for (Side side : {Side::plus, Side::minus}) {
        FormalFunction prev;
        for (int j = 0; j < k; ++j) {
            FormalFunction cand;
            try {
                cand = solve_decaying(c.target(), c.grid(), lad.lambda, side, j, prev, false);
            } catch (const Error&) {
                break;
            }
            prev = cand;
            GridJet fj = cand.jet(c.order() + 2);
            GridJet img = c.apply_transpose_jet(fj);
            // pointwise-relative membership: an L2 quotient would be swamped
            // wherever the candidate is dominated by a kernel direction
            double acc = 0.0;
            const int lo = n / 8, hi = n - n / 8;
            for (int i = lo; i < hi; ++i) {
                const double kap =
                    std::sqrt(std::abs(c.target()->value(gr.x(i)) - lad.lambda.real())) + 1.0;
                double scale = std::abs(cand.psi()[i]) + std::abs(cand.dpsi()[i]) / kap;
                for (int m = 0; m < c.order(); ++m) scale *= kap;
                acc += std::abs(img.d[0][i]) / (scale + 1e-300);
            }
            if (acc / double(hi - lo) >= 1e-6) break;  // downward closure: stop this side
            (side == Side::plus ? flags[j].plus : flags[j].minus) = NormClass::normalizable;
        }
    }
    return flags;
}

} // namespace detail

// Balance counters at one spectral value.  n_plus counts both-sides
// normalizable members of the chain kernel (functions of h^+), n_minus the
// same for the transposed kernel (functions of h^-); the adopted reading is
// cross-validated by the ground-state-deletion fixture.
inline IndexReport index_report(const FactorChain& c, cx lambda) {
    if (!admissible_lambda(lambda))
        throw DomainError("index balance is defined for lambda <= 0 or Im lambda != 0");
    IndexReport rep;
    rep.lambda = lambda;

    const auto inv_plus = bound_state_inventory(c.source(), c.grid(), 0.0);
    const auto inv_minus = bound_state_inventory(c.target(), c.grid(), 0.0);
    rep.nu_plus = detail::is_level(inv_plus, lambda) ? 1 : 0;
    rep.nu_minus = detail::is_level(inv_minus, lambda) ? 1 : 0;

    for (const auto& lad : c.kernel_ladders()) {
        if (std::abs(lad.lambda - lambda) > 1e-9) continue;
        for (const auto& f : lad.fn) {
            if (f.both_normalizable()) ++rep.n_plus;
            if (f.one_sided()) ++rep.n0;
        }
        for (const auto& v : detail::transpose_ladder_flags(c, lad))
            if (v.plus == NormClass::normalizable && v.minus == NormClass::normalizable)
                ++rep.n_minus;
    }
    for (double root : c.dressing_roots()) {
        if (std::abs(root - lambda.real()) > 1e-9 || lambda.imag() != 0.0) continue;
        FormalFunction psi;
        if (detail::is_level(inv_plus, cx(root, 0.0), &psi)) {
            ++rep.n_plus;  // the bound wave function sits in ker(q P(h))
            // its associated partner maps to the h^- bound function
            FormalFunction assoc = solve_from_ic(c.source(), c.grid(), cx(root, 0.0),
                                                 c.grid()->size() / 2 + 9, 0.0, 1.0, psi, false);
            FormalFunction image = c.apply(assoc);
            if (image.valid() && image.both_normalizable()) ++rep.n_minus;
        } else {
            rep.n0 += 2;  // both solutions at the root are one-sided
        }
    }

    rep.balanced = (rep.nu_plus - rep.n_plus) == (rep.nu_minus - rep.n_minus);
    rep.zero_branch = rep.n0 > 0;
    if (rep.zero_branch)
        rep.balanced = rep.balanced && (rep.nu_plus - rep.n_plus == 0);
    return rep;
}

// --- kernel membership ------------------------------------------------------------

// true iff the chain annihilates the bound state; the equivalence with
// membership of its energy in the matrix-S spectrum is asserted
inline bool kernel_membership(const FactorChain& c, const FormalFunction& bound_state) {
    if (!bound_state.both_normalizable())
        throw DomainError("kernel_membership expects a bound state (normalizable both sides)");
    const NormWindow w = NormWindow::interior(c.grid());
    GridJet fj = bound_state.jet(c.order());
    GridJet img = c.apply_jet(fj);
    const double ratio = l2_norm(img, w) / (l2_norm(fj, w) + 1e-300);
    const bool annihilated = ratio < 1e-6;

    const double e = bound_state.lambda().real();
    bool in_spectrum = c.spectrum().find(bound_state.lambda()) != nullptr;
    for (double root : c.dressing_roots())
        if (std::abs(root - e) < 1e-9) in_spectrum = true;

    if (annihilated != in_spectrum) {
        std::ostringstream os;
        os << "kernel membership mismatch at E = " << e << ": residual " << ratio
           << ", spectrum membership " << (in_spectrum ? "yes" : "no");
        throw AuditError(os.str());
    }
    return annihilated;
}

// --- structural audits (Corollaries 5..10) -------------------------------------------

struct AuditRow {
    std::string name;
    bool pass = false;
    bool skipped = false;
    std::string note;
};

using AuditTable = std::vector<AuditRow>;

inline AuditTable corollary_audit(const FactorChain& c) {
    AuditTable table;
    const auto inv_plus = bound_state_inventory(c.source(), c.grid(), 0.0);
    const auto inv_minus = bound_state_inventory(c.target(), c.grid(), 0.0);

    auto flags = canonical_basis(c);  // throws BasisOrderError on inverted ladders
    table.push_back({"corollary3_ladder_monotonicity", true, false, "downward-closed"});

    std::map<std::string, AuditRow> rows;
    auto touch = [&](const std::string& name) -> AuditRow& {
        auto it = rows.find(name);
        if (it == rows.end()) {
            AuditRow r;
            r.name = name;
            r.pass = true;
            it = rows.emplace(name, r).first;
        }
        return it->second;
    };
    auto fail = [&](const std::string& name, const std::string& why) {
        AuditRow& r = touch(name);
        r.pass = false;
        r.note += (r.note.empty() ? "" : "; ") + why;
    };

    for (size_t idx = 0; idx < c.kernel_ladders().size(); ++idx) {
        const KernelLadder& lad = c.kernel_ladders()[idx];
        const LadderFlags& lf = flags[idx];
        const int k = int(lad.fn.size());
        std::ostringstream tag;
        tag << "lambda=" << lad.lambda.real();
        if (lad.lambda.imag() != 0.0) tag << (lad.lambda.imag() > 0 ? "+" : "") << lad.lambda.imag() << "i";

        // transposed ladder flags feed corollaries 7, 8, 9
        std::vector<detail::SideFlags> tlad = detail::transpose_ladder_flags(c, lad);
        auto t_both = [&](int j) {
            return tlad[j].plus == NormClass::normalizable &&
                   tlad[j].minus == NormClass::normalizable;
        };
        auto t_neither = [&](int j) {
            return tlad[j].plus == NormClass::nonnormalizable &&
                   tlad[j].minus == NormClass::nonnormalizable;
        };

        // Corollary 5: at most the top may be nonnormalizable at both ends;
        // one split index >= k-1, the other <= 1; opposite sides transpose
        touch("corollary5_split_indices");
        for (int j = 0; j + 1 < k; ++j)
            if (lad.fn[j].neither_normalizable())
                fail("corollary5_split_indices", tag.str() + ": interior element j=" +
                                                     std::to_string(j) + " nonnormalizable both");
        if (!(std::max(lf.k_up, lf.k_down) >= k - 1 && std::min(lf.k_up, lf.k_down) <= 1))
            fail("corollary5_split_indices", tag.str() + ": split indices " +
                                                 std::to_string(lf.k_up) + "/" +
                                                 std::to_string(lf.k_down));

        // Corollary 6: bottom nonnormalizable at both ends forces k = 1
        touch("corollary6_bottom_nonnormalizable");
        if (lad.fn[0].neither_normalizable() && k != 1)
            fail("corollary6_bottom_nonnormalizable", tag.str());

        // Corollary 7: both bottoms normalizable at both ends forces k >= 2
        touch("corollary7_double_bound");
        if (lad.fn[0].both_normalizable() && t_both(0) && k < 2)
            fail("corollary7_double_bound", tag.str());

        // Corollary 8: complex pairs are one-sided throughout, transposed
        // ladders normalizable at the opposite infinity
        if (lad.lambda.imag() != 0.0) {
            touch("corollary8_complex_one_sided");
            Side s = lad.fn[0].norm(Side::plus) == NormClass::normalizable ? Side::plus
                                                                           : Side::minus;
            for (const auto& f : lad.fn)
                if (!(f.one_sided() && f.norm(s) == NormClass::normalizable))
                    fail("corollary8_complex_one_sided", tag.str());
            for (int j = 0; j < k; ++j) {
                const NormClass opp =
                    (other(s) == Side::plus) ? tlad[j].plus : tlad[j].minus;
                const NormClass same = (s == Side::plus) ? tlad[j].plus : tlad[j].minus;
                if (!(opp == NormClass::normalizable && same == NormClass::nonnormalizable))
                    fail("corollary8_complex_one_sided", tag.str() + " (transpose side)");
            }
        }

        // Corollary 9: a bound state of h^- (h^+) at lambda_i exactly when the
        // top of the phi^- (phi^+) ladder is nonnormalizable at both ends
        touch("corollary9_bound_iff_top_nonnormalizable");
        const bool minus_level = detail::is_level(inv_minus, lad.lambda);
        if (minus_level != lad.fn[k - 1].neither_normalizable())
            fail("corollary9_bound_iff_top_nonnormalizable", tag.str() + " (h^-)");
        const bool plus_level = detail::is_level(inv_plus, lad.lambda);
        if (plus_level != t_neither(k - 1))
            fail("corollary9_bound_iff_top_nonnormalizable", tag.str() + " (h^+)");
    }

    for (auto& [name, row] : rows) table.push_back(row);

    AuditRow c10;
    c10.name = "corollary10_complex_coefficient_split";
    c10.skipped = true;
    c10.note = "no complex-coefficient chain fixture supplied";
    table.push_back(c10);
    return table;
}

} // namespace itw

#endif
