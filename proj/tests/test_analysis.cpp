#include <catch2/catch_amalgamated.hpp>

#include "intertwine/analysis.hpp"

using namespace itw;

namespace {

const auto osc = shifted_harmonic(-3.0);
const auto osc_grid = Grid::symmetric(8.0, 3201);

bool row(const AuditTable& t, const std::string& name, bool* skipped = nullptr) {
    for (const auto& r : t)
        if (r.name == name) {
            if (skipped) *skipped = r.skipped;
            return r.pass;
        }
    return false;
}

} // namespace

TEST_CASE("index balance for the ground-state deletion chain") {
    FactorChain c = ChainBuilder(osc, osc_grid).delete_level(-2.0).build();
    auto rep = index_report(c, cx(-2.0, 0.0));
    CHECK(rep.nu_plus == 1);
    CHECK(rep.n_plus == 1);
    CHECK(rep.nu_minus == 0);
    CHECK(rep.n_minus == 0);
    CHECK(rep.balanced);
    CHECK_FALSE(rep.zero_branch);
    CHECK(rep.nu_plus - rep.n_plus == 0);

    SECTION("off-spectrum values balance trivially") {
        auto r2 = index_report(c, cx(-3.3, 0.0));
        CHECK(r2.nu_plus == 0);
        CHECK(r2.n_plus == 0);
        CHECK(r2.n_minus == 0);
        CHECK(r2.balanced);
        auto r3 = index_report(c, cx(-1.0, 0.5));
        CHECK(r3.balanced);
        CHECK(r3.n0 == 0);
    }
    SECTION("positive real values are out of scope") {
        CHECK_THROWS_AS(index_report(c, cx(1.0, 0.0)), DomainError);
    }
}

TEST_CASE("index balance with n0 > 0 forces both sides to vanish") {
    FactorChain c = ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).build();
    auto rep = index_report(c, cx(-4.0, 0.0));
    CHECK(rep.n0 == 1);
    CHECK(rep.zero_branch);
    CHECK(rep.balanced);
    CHECK(rep.nu_plus - rep.n_plus == 0);
    CHECK(rep.nu_minus - rep.n_minus == 0);
}

TEST_CASE("index balance across remaining fixtures") {
    SECTION("isospectral Jordan chain at the shared level") {
        FactorChain c = ChainBuilder(osc, osc_grid).iso_jordan(-2.0, 1.0).build();
        auto rep = index_report(c, cx(-2.0, 0.0));
        CHECK(rep.nu_plus == 1);
        CHECK(rep.nu_minus == 1);
        CHECK(rep.n_plus == 1);
        CHECK(rep.n_minus == 1);
        CHECK(rep.n0 == 0);
        CHECK(rep.balanced);
    }
    SECTION("type-I pair") {
        FactorChain c = ChainBuilder(osc, osc_grid).pair_type_I(cx(-1.0, 1.0), Side::plus).build();
        for (cx probe : {cx(-1.0, 1.0), cx(-1.0, -1.0), cx(-2.0, 0.0)}) {
            auto rep = index_report(c, probe);
            CHECK(rep.balanced);
        }
    }
}

TEST_CASE("kernel membership equivalence") {
    FactorChain del = ChainBuilder(osc, osc_grid).delete_level(-2.0).build();
    FactorChain shift = ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).build();
    auto states = find_bound_states(osc, osc_grid, -3.0, 0.5);
    REQUIRE(states.size() == 2);
    const auto& ground = states[0].second;
    const auto& excited = states[1].second;

    CHECK(kernel_membership(del, ground));
    CHECK_FALSE(kernel_membership(del, excited));
    CHECK_FALSE(kernel_membership(shift, ground));

    SECTION("dressing roots join the membership set") {
        FactorChain dressed =
            ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).dress(-2.0).build();
        CHECK(kernel_membership(dressed, ground));
        CHECK_FALSE(kernel_membership(dressed, excited));
    }
    SECTION("non-bound input is rejected") {
        auto one_sided_fn = solve_decaying(osc, osc_grid, cx(-4.0, 0.0), Side::plus);
        CHECK_THROWS_AS(kernel_membership(del, one_sided_fn), DomainError);
    }
}

TEST_CASE("corollary audit tables") {
    SECTION("type-I chain satisfies the complex-pair corollaries") {
        FactorChain c = ChainBuilder(osc, osc_grid).pair_type_I(cx(-1.0, 1.0), Side::plus).build();
        auto t = corollary_audit(c);
        CHECK(row(t, "corollary3_ladder_monotonicity"));
        CHECK(row(t, "corollary5_split_indices"));
        CHECK(row(t, "corollary8_complex_one_sided"));
        CHECK(row(t, "corollary9_bound_iff_top_nonnormalizable"));
        bool skipped = false;
        row(t, "corollary10_complex_coefficient_split", &skipped);
        CHECK(skipped);
    }
    SECTION("one-sided k=1 chain") {
        FactorChain c = ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).build();
        auto t = corollary_audit(c);
        CHECK(row(t, "corollary5_split_indices"));
        CHECK(row(t, "corollary6_bottom_nonnormalizable"));
        CHECK(row(t, "corollary9_bound_iff_top_nonnormalizable"));
    }
    SECTION("ground-state deletion: transpose kernel grows both ways") {
        FactorChain c = ChainBuilder(osc, osc_grid).delete_level(-2.0).build();
        auto t = corollary_audit(c);
        CHECK(row(t, "corollary7_double_bound"));
        CHECK(row(t, "corollary9_bound_iff_top_nonnormalizable"));
    }
    SECTION("isospectral Jordan chain: k = 2 forced by the double bound state") {
        FactorChain c = ChainBuilder(osc, osc_grid).iso_jordan(-2.0, 1.0).build();
        auto t = corollary_audit(c);
        CHECK(row(t, "corollary5_split_indices"));
        CHECK(row(t, "corollary6_bottom_nonnormalizable"));
        CHECK(row(t, "corollary7_double_bound"));
        CHECK(row(t, "corollary9_bound_iff_top_nonnormalizable"));
    }
}
