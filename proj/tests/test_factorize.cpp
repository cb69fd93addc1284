#include <catch2/catch_amalgamated.hpp>

#include "intertwine/factorize.hpp"

using namespace itw;

namespace {

const auto osc = shifted_harmonic(-3.0);           // levels -2, 0, 2, ...
const auto osc_grid = Grid::symmetric(8.0, 3201);
const auto deep = shifted_harmonic(-6.0);          // levels -5, -3, -1, 1, ...
const auto tests6 = make_test_functions(0xfeed, 6);

int group_count(const FactorizationPlan& p, PlanGroup g) {
    int n = 0;
    for (const auto& pf : p.factors)
        if (pf.group == g) ++n;
    return n;
}

} // namespace

TEST_CASE("first-order extraction at the bottom of the spectrum") {
    SECTION("single-factor chain extracts itself") {
        FactorChain c = ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).build();
        auto ex = extract_first_order_bottom(c, tests6);
        CHECK(ex.remainder.order() == 0);
        CHECK(ex.factor.spectrum()[0].value.real() == Catch::Approx(-4.0));
        CHECK(ex.factor.kernel_basis()[0].one_sided());
        CHECK(ex.reproduction_residual < 1e-5);
    }
    SECTION("two-level chain: the lower eigenvalue leaves first") {
        FactorChain c =
            ChainBuilder(osc, osc_grid).delete_level(-2.0).one_sided(-4.0, Side::plus).build();
        auto ex = extract_first_order_bottom(c, tests6);
        CHECK(ex.factor.spectrum()[0].value.real() == Catch::Approx(-4.0));
        CHECK(ex.remainder.order() == 1);
        CHECK(ex.remainder.spectrum().entries[0].lambda.real() == Catch::Approx(-2.0));
        CHECK(ex.reproduction_residual < 1e-5);
        CHECK(ex.factor.target_class_k().verdict != KVerdict::refuted);
    }
    SECTION("a bound energy of h^+ gives a both-sides-normalizable kernel") {
        FactorChain c = ChainBuilder(osc, osc_grid).delete_level(-2.0).build();
        auto ex = extract_first_order_bottom(c, tests6);
        CHECK(ex.factor.kernel_basis()[0].both_normalizable());
    }
    SECTION("precondition: the eigenvalue must lie below the h^- ground state") {
        FactorChain c = ChainBuilder(osc, osc_grid).iso_jordan(-2.0, 1.0).build();
        CHECK_THROWS_AS(extract_first_order_bottom(c, tests6), OrderingError);
    }
}

TEST_CASE("type-I extraction") {
    SECTION("order-2 pair chain extracts to an empty remainder") {
        FactorChain c =
            ChainBuilder(osc, osc_grid).pair_type_I(cx(-1.0, 1.0), Side::plus).build();
        auto ex = extract_type_I(c, cx(-1.0, 1.0), tests6);
        CHECK(ex.remainder.order() == 0);
        CHECK(ex.factor.kind() == FactorKind::type_I);
        CHECK(ex.reproduction_residual < 1e-5);
    }
    SECTION("order-3 chain leaves a first-order remainder at the real eigenvalue") {
        FactorChain c = ChainBuilder(osc, osc_grid)
                            .one_sided(-4.0, Side::plus)
                            .pair_type_I(cx(-1.0, 1.0), Side::plus)
                            .build();
        auto ex = extract_type_I(c, cx(-1.0, 1.0), tests6);
        CHECK(ex.remainder.order() == 1);
        CHECK(ex.remainder.spectrum().entries[0].lambda.real() == Catch::Approx(-4.0));
        CHECK(ex.reproduction_residual < 1e-5);
    }
    SECTION("conjugate pairs may be pulled out in either order") {
        FactorChain c = ChainBuilder(osc, osc_grid)
                            .pair_type_I(cx(-1.0, 1.0), Side::plus)
                            .pair_type_I(cx(-2.0, 2.0), Side::plus)
                            .build();
        auto exA = extract_type_I(c, cx(-1.0, 1.0), tests6);
        auto exB = extract_type_I(c, cx(-2.0, 2.0), tests6);
        CHECK(exA.reproduction_residual < 1e-5);
        CHECK(exB.reproduction_residual < 1e-5);
        // both orders end at the same potential
        const auto& ta = *exA.remainder.target();
        const auto& tb = *exB.remainder.target();
        double worst = 0.0;
        for (double x = -6.0; x <= 6.0; x += 0.17)
            worst = std::max(worst, std::abs(ta.value(x) - tb.value(x)));
        CHECK(worst < 1e-5);
    }
    SECTION("absent pair raises SpectrumError") {
        FactorChain c =
            ChainBuilder(osc, osc_grid).pair_type_I(cx(-1.0, 1.0), Side::plus).build();
        CHECK_THROWS_AS(extract_type_I(c, cx(-3.0, 1.0), tests6), SpectrumError);
    }
}

TEST_CASE("lemma-9 swap on the shifted oscillator") {
    FormalFunction phi0 = solve_decaying(osc, osc_grid, cx(-2.0, 0.0), Side::plus);
    DarbouxFactor p11 = make_first_order(phi0);
    FormalFunction psi =
        solve_decaying(p11.target(), osc_grid, cx(-4.0, 0.0), Side::plus);
    DarbouxFactor k11 = make_first_order(psi);

    auto swap = permute_lemma9(p11, k11, tests6);
    CHECK(swap.identity_residual < 1e-6);
    CHECK(swap.hamiltonian_residual < 1e-5);

    SECTION("spectra are preserved exactly under the swap") {
        CHECK(swap.p12.spectrum()[0].value == cx(-4.0, 0.0));
        CHECK(swap.k12.spectrum()[0].value == cx(-2.0, 0.0));
    }
    SECTION("pulled-back kernel element is one-sided, same side as psi") {
        const auto& kb = swap.p12.kernel_basis()[0];
        CHECK(kb.one_sided());
        CHECK(kb.norm(Side::plus) == NormClass::normalizable);
    }
    SECTION("swapped ground state sits at E0 on h2") {
        auto states = find_bound_states(swap.p12.target(), osc_grid, -3.0, -1.0);
        REQUIRE(states.size() == 1);
        CHECK(std::abs(states[0].first + 2.0) < 1e-6);
    }
    SECTION("precondition: lambda must lie below E0") {
        FormalFunction above =
            solve_decaying(p11.target(), osc_grid, cx(-1.0, 0.0), Side::plus);
        DarbouxFactor bad = make_first_order(above);
        CHECK_THROWS_AS(permute_lemma9(p11, bad, tests6), OrderingError);
    }
}

TEST_CASE("lemma-10 double factorization of an order-3 chain") {
    FactorChain c3 = ChainBuilder(osc, osc_grid)
                         .one_sided(-4.0, Side::plus)
                         .pair_type_I(cx(-1.0, 1.0), Side::plus)
                         .build();
    auto swap = permute_lemma10(c3, tests6);
    CHECK(swap.identity_residual < 1e-5);
    CHECK(swap.backmap_residual < 1e-5);
    CHECK(swap.p2.kind() == FactorKind::type_I);
    CHECK(swap.k1.spectrum()[0].value == cx(-4.0, 0.0));

    SECTION("kernel element of k1 is nonzero and annihilated by k1") {
        const NormWindow w = NormWindow::interior(osc_grid);
        CHECK(l2_norm(swap.psi.psi(), w) > 0.0);
        CHECK(annihilation_residual(swap.k1) < 1e-8);
    }
}

TEST_CASE("theorem-2 factorization plans") {
    SECTION("ground-state deletion: groups (1, 0, 0)") {
        FactorChain c = ChainBuilder(osc, osc_grid).delete_level(-2.0).build();
        auto plan = theorem2_factorize(c, tests6);
        CHECK(plan.n_low_plus == 1);
        CHECK(plan.n_cap_plus == 1);
        CHECK(plan.n_low_minus == 0);
        CHECK(plan.n_cap_minus == 0);
        CHECK(plan.dressing.degree() == 0);
        CHECK(plan.count_right == 1);
        CHECK(plan.count_middle == 0);
        CHECK(plan.count_left == 0);
        CHECK(plan.factors.size() == 1);
        CHECK(plan.end_to_end_residual < 1e-5);
        CHECK(plan.intermediates_class_k);
    }
    SECTION("one-sided shift below both ground states: groups (0, 1, 0)") {
        FactorChain c = ChainBuilder(osc, osc_grid).one_sided(-4.0, Side::plus).build();
        auto plan = theorem2_factorize(c, tests6);
        CHECK(plan.n_low_plus == 0);
        CHECK(plan.n_low_minus == 0);
        CHECK(plan.dressing.degree() == 0);
        CHECK(plan.count_middle == 1);
        CHECK(plan.factors[0].kernel_class == "plus");
        CHECK(plan.end_to_end_residual < 1e-5);
    }
    SECTION("isospectral Jordan chain: groups (1, 0, 1)") {
        FactorChain c = ChainBuilder(osc, osc_grid).iso_jordan(-2.0, 1.0).build();
        auto plan = theorem2_factorize(c, tests6);
        CHECK(plan.n_low_plus == 1);
        CHECK(plan.n_cap_plus == 1);
        CHECK(plan.n_low_minus == 1);
        CHECK(plan.n_cap_minus == 1);
        CHECK(plan.count_right == 1);
        CHECK(plan.count_middle == 0);
        CHECK(plan.count_left == 1);
        CHECK(plan.factors.front().kernel_class == "both");
        CHECK(plan.factors.back().kernel_class == "neither");
        CHECK(plan.end_to_end_residual < 1e-5);
    }
    SECTION("above-ground Jordan pair needs dressing: groups (1, 2, 1)") {
        FactorChain c = ChainBuilder(osc, osc_grid).gap_pair_III(-1.0, Side::plus).build();
        auto plan = theorem2_factorize(c, tests6);
        CHECK(plan.dressing.degree() == 1);
        CHECK(plan.dressing.roots[0] == Catch::Approx(-2.0).margin(1e-6));
        CHECK(plan.count_right == 1);
        CHECK(plan.count_middle == 2);
        CHECK(plan.count_left == 1);
        CHECK(plan.factors.size() == 4);  // N + N+ + N- - N^+ - N^- = 2+1+1-0-0
        CHECK(plan.end_to_end_residual < 1e-5);
        CHECK(plan.max_factor_intertwining < 1e-6);
    }
    SECTION("complex spectrum is routed to the theorem-3 driver") {
        FactorChain c =
            ChainBuilder(osc, osc_grid).pair_type_I(cx(-1.0, 1.0), Side::plus).build();
        CHECK_THROWS_AS(theorem2_factorize(c, tests6), SpectrumError);
    }
}

TEST_CASE("theorem-3 factorization plans") {
    SECTION("M=1, L=1 with a Jordan pair: (J1, J2, J3) = (2, 1, 0)") {
        FactorChain c = ChainBuilder(osc, osc_grid)
                            .one_sided(-4.0, Side::plus)
                            .pair_type_I(cx(-1.0, 1.0), Side::plus)
                            .pair_type_I(cx(-1.0, 1.0), Side::plus)
                            .build();
        REQUIRE(c.order() == 5);
        auto plan = theorem3_factorize(c, tests6);
        CHECK(plan.j1 == 2);
        CHECK(plan.j2 == 1);
        CHECK(plan.j3 == 0);
        CHECK(group_count(plan, PlanGroup::type_I) == 2);
        CHECK(group_count(plan, PlanGroup::first_order) == 1);
        CHECK(plan.factors[0].factor.kind() == FactorKind::type_I);
        CHECK(plan.factors[1].factor.kind() == FactorKind::type_I);
        CHECK(plan.end_to_end_residual < 1e-5);
        CHECK(plan.intermediates_class_k);
    }
    SECTION("everything below both ground states degenerates to first order") {
        FactorChain c =
            ChainBuilder(osc, osc_grid).delete_level(-2.0).one_sided(-4.0, Side::plus).build();
        auto plan = theorem3_factorize(c, tests6);
        CHECK(plan.j1 == 0);
        CHECK(plan.j3 == 0);
        CHECK(plan.j2 == 2);
        // eigenvalues ascend from the right
        CHECK(plan.factors[0].factor.spectrum()[0].value.real() == Catch::Approx(-4.0));
        CHECK(plan.factors[1].factor.spectrum()[0].value.real() == Catch::Approx(-2.0));
        CHECK(plan.end_to_end_residual < 1e-5);
    }
    SECTION("above-ground Jordan pair fuses into one type-III block") {
        FactorChain c = ChainBuilder(osc, osc_grid).gap_pair_III(-1.0, Side::plus).build();
        auto plan = theorem3_factorize(c, tests6);
        CHECK(plan.j1 == 0);
        CHECK(plan.j2 == 0);
        CHECK(plan.j3 == 1);
        REQUIRE(plan.factors.size() == 1);
        CHECK(plan.factors[0].factor.kind() == FactorKind::type_III);
        CHECK(plan.end_to_end_residual < 1e-5);
    }
    SECTION("deleting two adjacent excited levels fuses into one type-II block") {
        auto deep_grid = Grid::symmetric(8.0, 3201);
        FactorChain c = ChainBuilder(deep, deep_grid).delete_pair_II(-3.0, -1.0).build();
        auto plan = theorem3_factorize(c, tests6);
        CHECK(plan.j1 == 0);
        CHECK(plan.j2 == 0);
        CHECK(plan.j3 == 1);
        REQUIRE(plan.factors.size() == 1);
        CHECK(plan.factors[0].factor.kind() == FactorKind::type_II);
        CHECK(plan.end_to_end_residual < 1e-5);
    }
    SECTION("parity violation is rejected") {
        FactorChain good = ChainBuilder(osc, osc_grid).gap_pair_III(-1.0, Side::plus).build();
        auto data = std::make_shared<FactorChain::Data>(*good.data());
        data->kernel[0].fn.pop_back();  // pretend a single above-ground rung
        data->spectrum.entries[0].k = 1;
        data->spectrum.entries[0].blocks = {1};
        FactorChain bad{std::move(data)};
        CHECK_THROWS_AS(theorem3_factorize(bad, tests6), InfeasibleOrderingError);
    }
}

TEST_CASE("permutation route reproduces the fused block") {
    // the same deformation assembled from three first-order factors
    FactorChain split = ChainBuilder(osc, osc_grid)
                            .delete_level(-2.0)
                            .one_sided(-1.0, Side::plus)
                            .jordan_step(-1.0, Side::plus)
                            .build();
    REQUIRE(split.order() == 3);

    auto swap = permute_lemma10(split, tests6);
    CHECK(swap.identity_residual < 1e-5);
    CHECK(swap.p2.kind() == FactorKind::type_III);
    CHECK(swap.k1.spectrum()[0].value == cx(-2.0, 0.0));
    // conclusion (5): both lambda factors delete a bound state
    CHECK(swap.k1.kernel_basis()[0].both_normalizable());

    // the swapped-out first-order factor meets its left-group partner and the
    // product contracts to E_max minus the intermediate Hamiltonian
    FactorChain fused = ChainBuilder(osc, osc_grid).gap_pair_III(-1.0, Side::plus).build();
    auto plan = theorem2_factorize(fused, tests6);
    REQUIRE(plan.count_left == 1);
    const DarbouxFactor& left = plan.factors.back().factor;

    const NormWindow w = NormWindow::interior(osc_grid);
    double pot_gap = 0.0;
    for (double x = -6.0; x <= 6.0; x += 0.11)
        pot_gap = std::max(pot_gap,
                           std::abs(left.source()->value(x) - swap.k1.target()->value(x)));
    CHECK(pot_gap < 1e-5);  // the permuted world rebuilt the plan's intermediate

    double contraction = 0.0, fused_match = 0.0;
    for (const auto& e : tests6) {
        GridJet f = jet_from_expr(e, osc_grid, 6);
        GridJet lhs = left.apply_jet(swap.k1.apply_jet(f));
        GridJet rhs = jet_apply_poly_h(f, *swap.k1.source(), {-2.0});
        contraction = std::max(contraction, rel_residual(lhs, rhs, l2_norm(f, w), w));

        GridJet a = swap.p2.apply_jet(f);
        GridJet b = fused.apply_jet(f);
        fused_match = std::max(fused_match, rel_residual(a, b, l2_norm(f, w), w));
    }
    CHECK(contraction < 1e-5);
    CHECK(fused_match < 1e-5);
}
