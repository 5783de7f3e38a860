#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "voltvar/orpf.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;

namespace {

OrpfProblem nominal_problem(const FeederModel& model)
{
    return assemble(build_sensitivity(model), model, model.nominal_operating_point());
}

} // namespace

TEST_CASE("single line problem data")
{
    const FeederModel model = fixture::single_line(-0.3);
    const OrpfProblem pr = nominal_problem(model);
    CHECK(pr.r(0, 0) == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(pr.linear(0) == 0.0);
    CHECK(pr.constant == doctest::Approx(0.009).epsilon(1e-12));
    CHECK(pr.voltage_map(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(pr.v_hat(0) == doctest::Approx(0.97).epsilon(1e-14));
    CHECK(pr.objective(Eigen::VectorXd::Constant(1, 0.1)) == doctest::Approx(0.1 * 0.01 + 0.009).epsilon(1e-12));
}

TEST_CASE("linear and constant terms follow the load injections")
{
    std::mt19937_64 rng(8);
    RandomFeederOptions opts;
    opts.buses = 10;
    opts.generators = 3;
    const FeederModel model = random_radial_feeder(opts, rng);
    const SensitivityModel s = build_sensitivity(model);
    OperatingPoint op = model.nominal_operating_point();

    const OrpfProblem loaded = assemble(s, model, op);
    CHECK((loaded.linear - s.r_l * op.q_load).cwiseAbs().maxCoeff() < 1e-15);
    const double c = op.p.dot(s.r_tilde * op.p) + op.q_load.dot(s.r_ll * op.q_load);
    CHECK(loaded.constant == doctest::Approx(c).epsilon(1e-12));

    op.q_load.setZero();
    const OrpfProblem bare = assemble(s, model, op);
    CHECK(bare.linear.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single line optimum with and without a binding voltage limit")
{
    const OrpfSolution free = solve(nominal_problem(fixture::single_line(-0.3)));
    CHECK(free.status == OrpfStatus::optimal);
    CHECK(std::abs(free.q_star(0)) <= 1e-6);
    CHECK(free.objective == doctest::Approx(0.009).epsilon(1e-6));

    // v_hat = 0.92, so the lower limit pins q at (0.95 - 0.92) / 0.2.
    const OrpfSolution bound = solve(nominal_problem(fixture::single_line(-0.8)));
    CHECK(bound.status == OrpfStatus::optimal);
    CHECK(std::abs(bound.q_star(0) - 0.15) <= 1e-6);
    CHECK(bound.kkt_residual <= 1e-6);
    CHECK(bound.dual(1) < 0.0);
}

TEST_CASE("agrees with exhaustive grid search on small instances")
{
    std::mt19937_64 rng(31);
    int compared = 0;
    for (int trial = 0; trial < 25; ++trial) {
        RandomFeederOptions opts;
        opts.buses = 3 + trial % 6;
        opts.generators = 1 + trial % 2;
        opts.load_max = 0.5;
        const FeederModel model = random_radial_feeder(opts, rng);
        const OrpfProblem pr = nominal_problem(model);
        const OrpfSolution sol = solve(pr);
        const oracle::GridResult grid = oracle::grid_search(pr, 2e-3, 0.0);
        if (!grid.feasible) {
            CHECK(sol.status != OrpfStatus::optimal);
            continue;
        }
        REQUIRE(sol.status == OrpfStatus::optimal);
        ++compared;
        CHECK(sol.kkt_residual <= 1e-6);
        // The grid point is feasible, so the optimum can only be lower.
        CHECK(sol.objective <= grid.objective + 1e-9);
        CHECK(grid.objective - sol.objective <= 1e-3);
    }
    CHECK(compared >= 10);
}

TEST_CASE("box-only problems match active-set enumeration")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        RandomFeederOptions opts;
        opts.buses = 4 + trial % 5;
        opts.generators = 1 + trial % 3;
        const FeederModel model = random_radial_feeder(opts, rng);
        const SensitivityModel s = build_sensitivity(model);
        OperatingPoint op = model.nominal_operating_point();
        for (Eigen::Index j = 0; j < op.q_load.size(); ++j)
            op.q_load(j) = 2.0 * u(rng);
        const Eigen::VectorXd inf = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.size()),
                                                              std::numeric_limits<double>::infinity());
        const OrpfProblem pr = assemble(s, op, model.q_min(), model.q_max(), -inf, inf);
        const OrpfSolution sol = solve(pr);
        const Eigen::VectorXd ref = oracle::box_qp(pr.r, pr.linear, pr.q_min, pr.q_max);
        REQUIRE(ref.size() == pr.r.rows());
        REQUIRE(sol.status == OrpfStatus::optimal);
        CHECK((sol.q_star - ref).cwiseAbs().maxCoeff() <= 1e-5);
    }
}

TEST_CASE("KKT residuals are small on the 37-bus feeder")
{
    const FeederModel model = synthetic_ieee37({}, 1);
    const OrpfSolution sol = solve(nominal_problem(model));
    CHECK(sol.status == OrpfStatus::optimal);
    CHECK(sol.kkt_residual <= 1e-6);
    CHECK(sol.residuals.max() == sol.kkt_residual);
}

TEST_CASE("warm start does not change the optimum")
{
    std::mt19937_64 rng(12);
    RandomFeederOptions opts;
    opts.buses = 12;
    opts.generators = 3;
    opts.load_max = 0.4;
    // Heavy loading so that some voltage rows bind; redraw until feasible.
    OrpfProblem pr;
    OrpfSolution cold;
    for (int attempt = 0; attempt < 50 && cold.status != OrpfStatus::optimal; ++attempt) {
        pr = nominal_problem(random_radial_feeder(opts, rng));
        cold = solve(pr);
    }
    REQUIRE(cold.status == OrpfStatus::optimal);
    OrpfWarmStart warm{cold.q_star, cold.dual};
    const OrpfSolution again = solve(pr, {}, &warm);
    CHECK((again.q_star - cold.q_star).cwiseAbs().maxCoeff() <= 1e-6);
    OrpfWarmStart off{Eigen::VectorXd::Constant(3, 0.25), Eigen::VectorXd::Zero(cold.dual.size())};
    const OrpfSolution shifted = solve(pr, {}, &off);
    CHECK((shifted.q_star - cold.q_star).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("incumbent objective never increases")
{
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 10; ++trial) {
        RandomFeederOptions opts;
        opts.buses = 6 + trial;
        opts.generators = 2;
        opts.load_max = 0.5;
        const FeederModel model = random_radial_feeder(opts, rng);
        OrpfOptions o;
        o.record_log = true;
        const OrpfSolution sol = solve(nominal_problem(model), o);
        REQUIRE(!sol.log.empty());
        for (std::size_t k = 1; k < sol.log.size(); ++k)
            CHECK(sol.log[k].best_feasible_objective <= sol.log[k - 1].best_feasible_objective);
    }
}

TEST_CASE("infeasible voltage limits are detected")
{
    // With only 0.01 of reactive support the voltage cannot reach 0.95.
    const OrpfSolution sol = solve(nominal_problem(fixture::single_line(-0.8, 0.01)));
    CHECK(sol.status == OrpfStatus::infeasible);
    CHECK(std::string(to_string(sol.status)) == "infeasible");
}

TEST_CASE("constraint matrix stacks the box over the voltage map")
{
    const OrpfProblem pr = nominal_problem(fixture::path3(-0.1, -0.2));
    const OrpfConstraints c = constraints(pr);
    CHECK(c.a.rows() == 4);
    CHECK(c.a.topRows(2) == Eigen::MatrixXd::Identity(2, 2));
    CHECK(c.a.bottomRows(2) == pr.voltage_map);
    CHECK(c.lower.head(2) == pr.q_min);
    CHECK(c.upper.tail(2) == pr.v_max - pr.v_hat);
}
