#include <catch2/catch_amalgamated.hpp>

#include "intertwine/darboux.hpp"

using namespace itw;

namespace {

const auto osc = shifted_harmonic(-3.0);           // levels -2, 0, 2, ...
const auto osc_grid = Grid::symmetric(8.0, 3201);
const auto flat = constant_potential(1.0);
const auto flat_grid = Grid::symmetric(12.0, 2401);
const auto tests10 = make_test_functions(0x1234, 10);

} // namespace

TEST_CASE("ground-state factor maps x^2-3 to x^2-1") {
    auto phi = solve_decaying(osc, osc_grid, cx(-2.0, 0.0), Side::plus);
    auto p = make_first_order(phi);
    REQUIRE(p.order() == 1);
    const auto& tgt = *p.target();
    for (double x : {-6.0, -2.5, 0.0, 1.7, 5.5}) {
        CHECK(tgt.value(x) == Catch::Approx(x * x - 1.0).margin(1e-7));
        CHECK(tgt.value(x, 1) == Catch::Approx(2.0 * x).margin(1e-6));
        CHECK(tgt.value(x, 2) == Catch::Approx(2.0).margin(1e-5));
    }
    CHECK(p.target_class_k().verdict != KVerdict::refuted);
    CHECK(p.target_class_k().property2_ok);
    CHECK(intertwining_residual(p, tests10) < 1e-6);
}

TEST_CASE("free-particle factor is shape invariant") {
    auto phi = solve_decaying(flat, flat_grid, cx(0.0, 0.0), Side::plus);
    auto p = make_first_order(phi);
    for (double x : {-9.0, -3.0, 0.0, 4.0, 9.0})
        CHECK(p.target()->value(x) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("below-ground one-sided factor gives a class-K target") {
    auto phi = solve_decaying(osc, osc_grid, cx(-4.0, 0.0), Side::plus);
    auto p = make_first_order(phi);
    CHECK(p.target_class_k().verdict != KVerdict::refuted);
    CHECK(p.target_class_k().property2_ok);
    CHECK(intertwining_residual(p, tests10) < 1e-6);

    SECTION("log-kernel integrates the potential difference") {
        // ln(phi) must equal C1 + C2 x + (1/2) iint (V_src - V_tgt) up to the
        // integration constants; fit the line and require a small residual
        const int n = osc_grid->size();
        const double h = osc_grid->h();
        std::vector<double> diff(n), single(n, 0.0), dbl(n, 0.0), logk(n);
        for (int i = 0; i < n; ++i) {
            diff[i] = 0.5 * (osc->value(osc_grid->x(i)) - p.target()->value(osc_grid->x(i)));
            logk[i] = std::log(std::abs(phi.psi()[i]));
        }
        for (int i = 1; i < n; ++i) single[i] = single[i - 1] + 0.5 * h * (diff[i - 1] + diff[i]);
        for (int i = 1; i < n; ++i) dbl[i] = dbl[i - 1] + 0.5 * h * (single[i - 1] + single[i]);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int m0 = n / 16, m1 = n - n / 16;
        for (int i = m0; i < m1; ++i) {
            const double x = osc_grid->x(i), y = logk[i] - dbl[i];
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        const double cnt = m1 - m0;
        const double b = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        const double a = (sy - b * sx) / cnt;
        double worst = 0.0, scale = 0.0;
        for (int i = m0; i < m1; ++i) {
            worst = std::max(worst, std::abs(logk[i] - dbl[i] - a - b * osc_grid->x(i)));
            scale = std::max(scale, std::abs(logk[i]));
        }
        CHECK(worst < 1e-5 * scale);
    }
}

TEST_CASE("factor kernels with nodes are rejected with a witness") {
    auto phi = solve_decaying(osc, osc_grid, cx(-1.0, 0.0), Side::plus);  // inside the gap
    try {
        make_first_order(phi);
        FAIL("expected SingularFactorError");
    } catch (const SingularFactorError& e) {
        CHECK(e.has_witness);
        CHECK(std::abs(e.witness_x) < 4.0);  // the node sits in the well
    }
}

TEST_CASE("factor application") {
    auto phi = solve_decaying(osc, osc_grid, cx(-2.0, 0.0), Side::plus);
    auto p = make_first_order(phi);

    SECTION("kernel element maps to zero") {
        CHECK_FALSE(p.apply(phi).valid());
    }
    SECTION("first excited state maps to the target ground state") {
        auto states = find_bound_states(osc, osc_grid, -3.0, 0.5);
        REQUIRE(states.size() == 2);
        auto image = p.apply(states[1].second);
        REQUIRE(image.valid());
        CHECK(image.both_normalizable());
        // image is proportional to exp(-x^2/2), the ground state of x^2 - 1
        const int i0 = osc_grid->nearest(0.0);
        for (double x : {-3.0, -1.0, 0.5, 2.5}) {
            const cx ratio = image.psi()[osc_grid->nearest(x)] / image.psi()[i0];
            CHECK(std::abs(ratio - std::exp(-0.5 * x * x)) < 1e-7);
        }
        CHECK(ode_residual(image).max_rel_second < 1e-7);
    }
    SECTION("normalizability at +inf survives the map") {
        auto f = solve_decaying(osc, osc_grid, cx(-4.0, 0.0), Side::plus);
        auto image = p.apply(f);
        REQUIRE(image.valid());
        CHECK(image.norm(Side::plus) == NormClass::normalizable);
        CHECK(image.norm(Side::minus) == NormClass::nonnormalizable);
    }
}

TEST_CASE("transpose of a first-order factor") {
    auto phi = solve_decaying(osc, osc_grid, cx(-2.0, 0.0), Side::plus);
    auto p = make_first_order(phi);
    auto pt = p.transpose();

    SECTION("p^t p recovers h + 2 on a quartic Gaussian") {
        auto f = parse_expr("exp(-x^4/4)");
        GridJet fj = jet_from_expr(f, osc_grid, 6);
        GridJet lhs = pt.apply_jet(p.apply_jet(fj));
        GridJet rhs = jet_apply_h(fj, *osc, cx(-2.0, 0.0));
        const NormWindow w = NormWindow::interior(osc_grid);
        CHECK(rel_residual(lhs, rhs, l2_norm(fj, w), w) < 1e-7);
    }
    SECTION("p p^t recovers h_target + 2") {
        auto f = parse_expr("exp(-x^4/4)");
        GridJet fj = jet_from_expr(f, osc_grid, 6);
        GridJet lhs = p.apply_jet(pt.apply_jet(fj));
        GridJet rhs = jet_apply_h(fj, *p.target(), cx(-2.0, 0.0));
        const NormWindow w = NormWindow::interior(osc_grid);
        CHECK(rel_residual(lhs, rhs, l2_norm(fj, w), w) < 1e-6);
    }
    SECTION("transpose kernel is 1/phi, nonnormalizable at both infinities") {
        const auto& tk = pt.kernel_basis();
        REQUIRE(tk.size() == 1);
        CHECK(tk[0].neither_normalizable());
        const int i0 = osc_grid->nearest(0.0);
        for (double x : {-2.0, 1.5}) {
            const cx ratio = tk[0].psi()[osc_grid->nearest(x)] / tk[0].psi()[i0];
            CHECK(std::abs(ratio - std::exp(0.5 * x * x)) < 1e-6 * std::exp(0.5 * x * x));
        }
    }
    SECTION("double transpose is the identity") {
        CHECK(pt.transpose().data().get() == p.data().get());
        CHECK_FALSE(pt.transpose().transposed());
    }
}

TEST_CASE("type-I factor from a complex pair") {
    auto phi = solve_decaying(flat, flat_grid, cx(-1.0, 1.0), Side::plus);
    auto p = make_type_I(phi);
    REQUIRE(p.order() == 2);
    CHECK(p.kind() == FactorKind::type_I);

    SECTION("coefficients are real after the conjugation cancellation") {
        CHECK(p.im_coeff_max() < 1e-10);
    }
    SECTION("target is real, smooth, class-K on the window") {
        CHECK(p.target_class_k().verdict != KVerdict::refuted);
    CHECK(p.target_class_k().property2_ok);
    }
    SECTION("kernel annihilation") {
        CHECK(annihilation_residual(p) < 1e-8);
    }
    SECTION("intertwining residual") {
        CHECK(intertwining_residual(p, tests10) < 1e-6);
    }
    SECTION("product identity against (h - lambda)(h - lambda*)") {
        CHECK(product_identity_residual(p, tests10) < 1e-5);
    }
    SECTION("oscillator host behaves the same") {
        auto phi2 = solve_decaying(osc, osc_grid, cx(-1.0, 1.0), Side::plus);
        auto p2 = make_type_I(phi2);
        CHECK(p2.im_coeff_max() < 1e-10);
        CHECK(p2.target_class_k().verdict != KVerdict::refuted);
        CHECK(intertwining_residual(p2, tests10) < 1e-6);
        CHECK(product_identity_residual(p2, tests10) < 1e-5);
    }
}

TEST_CASE("type-I rejects real spectral values") {
    auto phi = solve_decaying(osc, osc_grid, cx(-4.0, 0.0), Side::plus);
    CHECK_THROWS_AS(make_type_I(phi), DomainError);
}
