#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "voltvar/certificate.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/sim.hpp"
#include "voltvar/surrogate.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;

namespace {

ScalarShapeFunction unit(double w_in, double w_out, double b = 0.0)
{
    ScalarShapeFunction f;
    f.input_weights = {w_in};
    f.output_weights = {w_out};
    f.biases = {b};
    return f;
}

SurrogateSet affine_set(double psi_slope, double phi_slope, double box = 0.4)
{
    SurrogateSet set;
    NodeSurrogate n;
    n.bus = 1;
    n.q_min = -box;
    n.q_max = box;
    n.psi = make_affine(psi_slope);
    n.phi = make_affine(phi_slope, 1.0);
    if (phi_slope <= 0.0)
        n.phi.sign_mode = SignMode::nonincreasing;
    set.nodes.push_back(n);
    return set;
}

} // namespace

TEST_CASE("shape function evaluation")
{
    ScalarShapeFunction flat = unit(3.0, 0.0, 0.2);
    flat.offset = 0.7;
    for (double x : {-5.0, 0.0, 2.5})
        CHECK(evaluate(flat, x) == 0.7);

    const ScalarShapeFunction f = unit(1.0, -0.5);
    CHECK(evaluate(f, 0.0) == 0.0);
    CHECK(evaluate(f, 1.0) == doctest::Approx(-0.3807970779778824).epsilon(1e-15));

    ScalarShapeFunction shifted = unit(1.0, -0.5);
    shifted.input_shift = 1.0;
    shifted.input_scale = 20.0;
    CHECK(evaluate(shifted, 1.05) == doctest::Approx(-0.5 * std::tanh(1.0)).epsilon(1e-14));
}

TEST_CASE("analytic derivative matches central differences")
{
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        const ScalarShapeFunction f = fixture::random_shape(rng, 5, 1.0, 20.0, SignMode::free,
                                                            std::numeric_limits<double>::infinity(), 1.0);
        for (double x = 0.9; x <= 1.1; x += 0.013) {
            const double h = 1e-6;
            const double fd = (evaluate(f, x + h) - evaluate(f, x - h)) / (2.0 * h);
            CHECK(std::abs(fd - derivative(f, x)) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("nonincreasing maps are monotone on a fine grid")
{
    std::mt19937_64 rng(2);
    for (int k = 0; k < 50; ++k) {
        const ScalarShapeFunction f = fixture::random_shape(rng, 6, 1.0, 20.0, SignMode::nonincreasing,
                                                            std::numeric_limits<double>::infinity(), 2.0);
        CHECK(satisfies_constraints(f));
        double prev = evaluate(f, 0.9);
        for (int i = 1; i < 1000; ++i) {
            const double x = 0.9 + 0.2 * i / 999.0;
            const double y = evaluate(f, x);
            CHECK(y <= prev);
            CHECK(derivative(f, x) <= 0.0);
            prev = y;
        }
    }
}

TEST_CASE("equilibrium function examples")
{
    SurrogateSet zero;
    zero.nodes.push_back({1, make_zero(), make_zero(), -0.4, 0.4});
    CHECK(evaluate_h(zero, 0, 0.1, 0.97) == 0.0);

    const SurrogateSet lin = affine_set(0.3, -0.5);
    CHECK(evaluate_h(lin, 0, 0.1, 0.99) == doctest::Approx(0.035).epsilon(1e-14));

    SurrogateSet high = affine_set(0.0, 0.0);
    high.nodes[0].psi.offset = 0.9;
    CHECK(evaluate_h_unclamped(high, 0, 0.0, 1.0) == doctest::Approx(0.9));
    CHECK(evaluate_h(high, 0, 0.0, 1.0) == 0.4);

    try {
        evaluate_h(lin, 0, 0.5, 1.0);
        FAIL("out-of-box q accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::domain);
    }
}

TEST_CASE("Lipschitz bound examples")
{
    CHECK(lipschitz_bound(unit(0.0, 0.0)) == 0.0);
    CHECK(lipschitz_bound(make_zero()) == 0.0);

    const ScalarShapeFunction one = unit(2.0, 0.3, 0.4);
    const SlopeReport rep = slope_report(one, -1.0, 1.0);
    CHECK(rep.bound == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(rep.sampled == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(rep.argmax == doctest::Approx(-0.2).epsilon(1e-15));

    ScalarShapeFunction two;
    two.input_weights = {1.0, 3.0};
    two.output_weights = {0.2, -0.1};
    two.biases = {0.0, 0.5};
    CHECK(lipschitz_bound(two) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("sampled difference quotients never exceed the bound")
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.85, 1.15);
    for (int k = 0; k < 30; ++k) {
        const ScalarShapeFunction f = fixture::random_shape(rng, 8, 1.0, 20.0, SignMode::free, 0.7, 3.0);
        const double bound = lipschitz_bound(f);
        CHECK(bound <= 0.7);
        for (int s = 0; s < 200; ++s) {
            const double a = u(rng), b = u(rng);
            if (a == b)
                continue;
            CHECK(std::abs(evaluate(f, a) - evaluate(f, b)) / std::abs(a - b) <= bound + 1e-12);
        }
    }
}

TEST_CASE("projection lands on the constraint set and is idempotent")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 3.0);
    for (int k = 0; k < 100; ++k) {
        ScalarShapeFunction f;
        for (int i = 0; i < 5; ++i) {
            f.input_weights.push_back(g(rng));
            f.output_weights.push_back(g(rng));
            f.biases.push_back(g(rng));
        }
        f.sign_mode = k % 2 ? SignMode::nonincreasing : SignMode::free;
        f.slope_cap = k % 3 ? 0.45 : std::numeric_limits<double>::infinity();
        project_constraints(f);
        CHECK(satisfies_constraints(f));
        ScalarShapeFunction again = f;
        project_constraints(again);
        CHECK(again.input_weights == f.input_weights);
        CHECK(again.output_weights == f.output_weights);
        CHECK(again.biases == f.biases);
    }
}

TEST_CASE("certificate arithmetic")
{
    const StabilityCertificate a = certify_constants(Regime::cvp_sc, 0.3, 0.5, 0.2, false);
    CHECK(a.coupled_slope() == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(a.c1_satisfied);
    CHECK(a.eps_max == 1.0);
    CHECK(a.contraction_factor(1.0) == doctest::Approx(0.4).epsilon(1e-15));

    const StabilityCertificate b = certify_constants(Regime::rp_sc, 0.3, 0.5, 0.2, true);
    CHECK(b.c2_satisfied);
    CHECK(rpsc_step_bound(0.3, 0.5, 0.2) == doctest::Approx(2.0 / 1.4).epsilon(1e-15));
    CHECK(b.eps_max == 1.0);

    const StabilityCertificate z = certify_constants(Regime::cvp_sc, 0.0, 0.0, 3.0, false);
    for (double eps : {0.0, 0.25, 1.0})
        CHECK(z.contraction_factor(eps) == doctest::Approx(1.0 - eps).epsilon(1e-15));
}

TEST_CASE("reported step bounds of the two study cases admit the chosen steps")
{
    // Coupled slopes implied by the bounds 0.7916 and 0.6471.
    for (auto [bound, eps] : {std::pair{0.7916, 0.79}, std::pair{0.6471, 0.64}}) {
        const double coupled = 2.0 / bound - 1.0;
        const StabilityCertificate c = certify_constants(Regime::rp_sc, 0.5, (coupled - 0.5) / 0.1, 0.1, true);
        CHECK(c.valid());
        CHECK(c.eps_max == doctest::Approx(bound).epsilon(1e-12));
        CHECK(eps < c.eps_max);
        CHECK(!c.c1_satisfied);
    }
}

TEST_CASE("violated regimes produce an invalid certificate")
{
    const StabilityCertificate steep = certify_constants(Regime::cvp_sc, 0.6, 3.0, 0.2, true);
    CHECK(!steep.c1_satisfied);
    CHECK(!steep.valid());
    CHECK(steep.eps_max == 0.0);

    const StabilityCertificate rising = certify_constants(Regime::rp_sc, 0.5, 1.0, 0.2, false);
    CHECK(!rising.c2_satisfied);
    CHECK(rising.eps_max == 0.0);

    const StabilityCertificate psi = certify_constants(Regime::rp_sc, 1.2, 1.0, 0.2, true);
    CHECK(!psi.valid());
}

TEST_CASE("certify reads slopes from the set and the norm from the model")
{
    const FeederModel model = fixture::single_line();
    const SensitivityModel s = build_sensitivity(model);
    const StabilityCertificate c = certify(affine_set(0.3, -0.5), s);
    CHECK(c.l_psi == doctest::Approx(0.3));
    CHECK(c.l_phi == doctest::Approx(0.5));
    CHECK(c.x_norm == doctest::Approx(0.2));
    CHECK(c.c1_satisfied);
    CHECK(c.c2_satisfied);
}

TEST_CASE("Jacobian examples")
{
    const SensitivityModel s = build_sensitivity(fixture::single_line());
    const SurrogateSet set = affine_set(0.3, -0.5);
    const Eigen::VectorXd q0 = Eigen::VectorXd::Zero(1);
    CHECK(jacobian_spectral_radius(set, s, q0, 1.0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(jacobian_spectral_radius(set, s, q0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));

    try {
        jacobian_spectral_radius(set, s, Eigen::VectorXd::Constant(1, 0.4), 1.0);
        FAIL("boundary equilibrium accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::nonsmooth_point);
    }
    // Interior q but the clamp is active at the plant voltage.
    SurrogateSet pinned = set;
    pinned.nodes[0].psi.offset = 2.0;
    try {
        jacobian_spectral_radius(pinned, s, q0, 1.0);
        FAIL("active clamp accepted");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::nonsmooth_point);
    }
}

TEST_CASE("Jacobian matches a finite-difference linearization of the operator")
{
    std::mt19937_64 rng(6);
    RandomFeederOptions opts;
    opts.buses = 10;
    opts.generators = 3;
    const FeederModel model = random_radial_feeder(opts, rng);
    const SensitivityModel s = build_sensitivity(model);
    const SurrogateSet set = fixture::random_cvpsc(rng, model, s.x_norm);
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(3, 0.01);
    const double eps = 0.7;
    const JacobianSpectrum js = jacobian_spectrum(set, s, q, eps);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 3; ++j) {
        Eigen::VectorXd up = q, down = q;
        up(j) += h;
        down(j) -= h;
        const Eigen::VectorXd col =
            (closed_loop_operator(set, s, up, eps) - closed_loop_operator(set, s, down, eps)) / (2.0 * h);
        CHECK((col - js.jacobian.col(j)).cwiseAbs().maxCoeff() <= 1e-7);
    }
}

TEST_CASE("closed-loop operator respects the contraction factor")
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        RandomFeederOptions opts;
        opts.buses = 3 + trial % 15;
        opts.generators = 1 + trial % 4 % opts.buses;
        const FeederModel model = random_radial_feeder(opts, rng);
        const SensitivityModel s = build_sensitivity(model);
        const SurrogateSet set = fixture::random_cvpsc(rng, model, s.x_norm);
        const StabilityCertificate cert = certify(set, s);
        REQUIRE(cert.c1_satisfied);
        const Eigen::VectorXd lo = set.q_min(), hi = set.q_max();
        std::uniform_real_distribution<double> u(0.0, 1.0);
        auto draw = [&] {
            Eigen::VectorXd q(lo.size());
            for (Eigen::Index i = 0; i < q.size(); ++i)
                q(i) = lo(i) + (hi(i) - lo(i)) * u(rng);
            return q;
        };
        for (double eps : {0.3, 1.0})
            for (int k = 0; k < 50; ++k) {
                const Eigen::VectorXd a = draw(), b = draw();
                const double lhs =
                    (closed_loop_operator(set, s, a, eps) - closed_loop_operator(set, s, b, eps)).norm();
                CHECK(lhs <= cert.contraction_factor(eps) * (a - b).norm() + 1e-10);
            }
    }
}

TEST_CASE("eigenvalues move by at most the perturbation norm")
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 6;
        Eigen::MatrixXd a(n, n), e(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                a(i, j) = g(rng);
                e(i, j) = 0.1 * g(rng);
            }
        a = (a + a.transpose()).eval();
        const Eigen::VectorXd base = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues();
        const Eigen::VectorXcd moved = Eigen::EigenSolver<Eigen::MatrixXd>(a + e).eigenvalues();
        const double bound = e.jacobiSvd().singularValues()(0);
        for (Eigen::Index k = 0; k < moved.size(); ++k) {
            double nearest = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < base.size(); ++j)
                nearest = std::min(nearest, std::abs(moved(k) - base(j)));
            CHECK(nearest <= bound + 1e-10);
        }
    }
}

TEST_CASE("monotone voltage terms give a real closed-loop spectrum")
{
    std::mt19937_64 rng(9);
    int checked = 0;
    for (int trial = 0; trial < 40; ++trial) {
        RandomFeederOptions opts;
        opts.buses = 4 + trial % 10;
        opts.generators = 2 + trial % 3 % (opts.buses - 1);
        const FeederModel model = random_radial_feeder(opts, rng);
        const SensitivityModel s = build_sensitivity(model);
        const SurrogateSet set = fixture::random_rpsc(rng, model, 0.9, 0.3);
        const StabilityCertificate cert = certify(set, s);
        REQUIRE(cert.c2_satisfied);
        FixedPoint fp;
        try {
            fp = find_fixed_point(set, s);
        } catch (const Error&) {
            continue;
        }
        JacobianSpectrum js;
        try {
            js = jacobian_spectrum(set, s, fp.q, 0.99 * cert.eps_max);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::nonsmooth_point);
            continue;
        }
        if (!js.phi_negative_definite)
            continue;
        ++checked;
        CHECK(js.spectrum_real);
        CHECK(js.max_imaginary <= 1e-8);
        CHECK(js.radius < 1.0);
    }
    CHECK(checked >= 10);
}

TEST_CASE("model JSON round trip is bit-stable")
{
    std::mt19937_64 rng(10);
    const FeederModel model = synthetic_ieee37({}, 3);
    const SensitivityModel s = build_sensitivity(model);
    for (Regime r : {Regime::cvp_sc, Regime::rp_sc}) {
        const SurrogateSet set =
            r == Regime::cvp_sc ? fixture::random_cvpsc(rng, model, s.x_norm) : fixture::random_rpsc(rng, model, 0.9, 1.0);
        const std::string text = surrogate_to_json(set);
        const SurrogateSet back = surrogate_from_json(text);
        CHECK(surrogate_to_json(back) == text);
        CHECK(back.regime == r);
        for (std::size_t n = 0; n < set.size(); ++n) {
            CHECK(back.nodes[n].psi.output_weights == set.nodes[n].psi.output_weights);
            CHECK(back.nodes[n].phi.input_weights == set.nodes[n].phi.input_weights);
            CHECK(back.nodes[n].phi.slope_cap == set.nodes[n].phi.slope_cap);
            CHECK(evaluate_h(back, n, 0.05, 1.01) == evaluate_h(set, n, 0.05, 1.01));
        }
    }
    CHECK(parse_regime("rpsc") == Regime::rp_sc);
    CHECK_THROWS_AS(parse_regime("droop"), Error);
}
