#include "voltvar/sim.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "voltvar/certificate.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

const char* to_string(Plant p) { return p == Plant::linear ? "linear" : "ac"; }

Plant parse_plant(const std::string& text)
{
    if (text == "linear")
        return Plant::linear;
    if (text == "ac")
        return Plant::ac;
    throw Error(ErrorKind::input, "unknown plant '" + text + "' (expected linear or ac)");
}

Eigen::VectorXd step(const SurrogateSet& set, const Eigen::VectorXd& q, const Eigen::VectorXd& v, double eps)
{
    if (!(eps >= 0.0 && eps <= 1.0))
        throw Error(ErrorKind::domain, "step size " + format_real(eps) + " outside [0, 1]");
    const Eigen::VectorXd h = evaluate_h(set, q, v);
    Eigen::VectorXd next = (1.0 - eps) * q + eps * h;
    // Convex combination of two points in the box; the clamp only absorbs round-off.
    return next.cwiseMax(set.q_min()).cwiseMin(set.q_max());
}

Eigen::VectorXd closed_loop_operator(const SurrogateSet& set, const SensitivityModel& sens, const Eigen::VectorXd& q,
                                     double eps)
{
    return step(set, q, generator_voltage(sens, q), eps);
}

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Plant evaluation with AC warm-start state.
class PlantState {
public:
    PlantState(const FeederModel& model, const SensitivityModel& sens, const ClosedLoopOptions& opts)
        : model_(model), sens_(&sens), opts_(opts)
    {
    }

    void rebind(const SensitivityModel& sens) { sens_ = &sens; }

    /// `t` only labels errors.
    Eigen::VectorXd voltage(const Eigen::VectorXd& q, int t)
    {
        if (opts_.plant == Plant::linear)
            return generator_voltage(*sens_, q);
        AcSolution sol;
        try {
            sol = solve_ac(model_, sens_->operating_point, q, opts_.ac, warm_ ? &*warm_ : nullptr);
        } catch (const Error& e) {
            throw Error(e.kind(), std::string(e.what()) + " (closed-loop step " + std::to_string(t) + ")");
        }
        warm_ = sol.voltage;
        const auto& gens = model_.generator_buses();
        Eigen::VectorXd v(q.size());
        for (std::size_t i = 0; i < gens.size(); ++i)
            v(static_cast<Eigen::Index>(i)) = sol.v_mag(gens[i]);
        return v;
    }

private:
    const FeederModel& model_;
    const SensitivityModel* sens_;
    ClosedLoopOptions opts_;
    std::optional<Eigen::VectorXcd> warm_;
};

/// Runs up to `steps` updates, appending to `trace`. Returns true on convergence.
bool advance(const SurrogateSet& set, PlantState& plant, double eps, int steps, double tol, SimulationTrace& trace)
{
    for (int k = 0; k < steps; ++k) {
        const TracePoint& cur = trace.steps.back();
        TracePoint next;
        next.t = cur.t + 1;
        next.q = step(set, cur.q, cur.v, eps);
        next.v = plant.voltage(next.q, next.t);
        const double residual = inf_norm(next.q - cur.q);
        trace.residuals.push_back(residual);
        trace.final_residual = residual;
        trace.steps.push_back(std::move(next));
        if (residual < tol) {
            trace.converged = true;
            trace.iterations = trace.steps.back().t - 1;
            return true;
        }
    }
    return false;
}

void check_start(const SurrogateSet& set, const Eigen::VectorXd& q0)
{
    if (q0.size() != static_cast<Eigen::Index>(set.size()))
        throw Error(ErrorKind::dimension, "initial setpoint has the wrong length");
    for (std::size_t i = 0; i < set.size(); ++i) {
        const double q = q0(static_cast<Eigen::Index>(i));
        if (!(q >= set.nodes[i].q_min && q <= set.nodes[i].q_max))
            throw Error(ErrorKind::domain, "initial setpoint outside the box at generator bus "
                                               + std::to_string(set.nodes[i].bus));
    }
}

} // namespace

SimulationTrace run_closed_loop(const SurrogateSet& set, const FeederModel& model, const SensitivityModel& sens,
                                double eps, const Eigen::VectorXd& q0, const ClosedLoopOptions& opts)
{
    check_start(set, q0);
    PlantState plant(model, sens, opts);
    SimulationTrace trace;
    trace.eps = eps;
    trace.steps.push_back({0, q0, plant.voltage(q0, 0)});
    if (!advance(set, plant, eps, opts.max_steps, opts.tol, trace))
        trace.iterations = trace.steps.back().t;
    return trace;
}

FixedPoint find_fixed_point(const SurrogateSet& set, const SensitivityModel& sens)
{
    const StabilityCertificate cert = certify(set, sens);
    if (!cert.valid())
        throw Error(ErrorKind::domain, "fixed point requested for a surrogate without a valid certificate");

    constexpr int kMaxIter = 1000000;
    constexpr double kStepTol = 1e-12;
    constexpr double kResidualTol = 1e-10;
    double eps = std::min(cert.eps_max, 1.0) * 0.99;
    double last_residual = INFINITY;
    // The coupled-slope regime contracts globally; the monotone regime is only
    // locally stable, so smaller steps are retried before giving up.
    for (int attempt = 0; attempt < 6; ++attempt, eps *= 0.5) {
        Eigen::VectorXd q = 0.5 * (set.q_min() + set.q_max());
        int iter = 0;
        double delta = INFINITY;
        for (; iter < kMaxIter && !(delta <= kStepTol); ++iter) {
            const Eigen::VectorXd next = closed_loop_operator(set, sens, q, eps);
            delta = inf_norm(next - q);
            q = next;
        }
        FixedPoint fp;
        fp.q = q;
        fp.v = generator_voltage(sens, q);
        fp.residual = inf_norm(q - evaluate_h(set, q, fp.v));
        fp.iterations = iter;
        fp.eps = eps;
        last_residual = fp.residual;
        if (fp.residual <= kResidualTol)
            return fp;
    }
    throw Error(ErrorKind::non_contraction, "fixed-point iteration stagnated at residual " + format_real(last_residual));
}

SimulationTrace time_varying_run(const SurrogateSet& set, const FeederModel& model, const SensitivityModel& sens,
                                 double eps, const std::vector<OperatingPoint>& profiles, int steps_per_change,
                                 const Eigen::VectorXd& q0, const ClosedLoopOptions& opts)
{
    if (profiles.empty())
        throw Error(ErrorKind::input, "time-varying run needs at least one profile window");
    check_start(set, q0);

    SimulationTrace trace;
    trace.eps = eps;
    SensitivityModel window_sens = with_operating_point(sens, profiles.front());
    PlantState plant(model, window_sens, opts);
    trace.steps.push_back({0, q0, plant.voltage(q0, 0)});

    double total = 0.0;
    for (std::size_t w = 0; w < profiles.size(); ++w) {
        if (w > 0) {
            window_sens = with_operating_point(sens, profiles[w]);
            plant.rebind(window_sens);
            // Voltages respond to the new injections before the next update.
            trace.steps.back().v = plant.voltage(trace.steps.back().q, trace.steps.back().t);
        }
        trace.converged = false;
        advance(set, plant, eps, steps_per_change, -1.0, trace);
        trace.converged = trace.final_residual < opts.tol;

        const OrpfSolution opt = solve(assemble(window_sens, model, profiles[w]));
        WindowMetric metric;
        metric.window = w;
        metric.q_star = opt.q_star;
        metric.status = opt.status;
        metric.distance = (trace.steps.back().q - opt.q_star).norm();
        total += metric.distance;
        trace.windows.push_back(std::move(metric));
    }
    trace.iterations = trace.steps.back().t;
    trace.distance_to_orpf = trace.windows.back().distance;
    trace.mean_window_distance = total / static_cast<double>(trace.windows.size());
    return trace;
}

bool residual_drops(const SimulationTrace& trace, int window)
{
    if (trace.residuals.empty())
        return true;
    const double initial = trace.residuals.front();
    const auto limit = std::min<std::size_t>(trace.residuals.size(), static_cast<std::size_t>(window));
    for (std::size_t t = 1; t < limit; ++t)
        if (trace.residuals[t] < initial)
            return true;
    return false;
}

bool within_box(const SimulationTrace& trace, const Eigen::VectorXd& q_min, const Eigen::VectorXd& q_max)
{
    return std::all_of(trace.steps.begin(), trace.steps.end(), [&](const TracePoint& p) {
        return (p.q.array() >= q_min.array()).all() && (p.q.array() <= q_max.array()).all();
    });
}

std::string trace_to_csv(const SimulationTrace& trace, const std::vector<int>& generator_buses)
{
    std::string out = "t,bus,q_pu,v_pu\n";
    for (const TracePoint& p : trace.steps)
        for (std::size_t i = 0; i < generator_buses.size(); ++i)
            out += std::to_string(p.t) + "," + std::to_string(generator_buses[i]) + ","
                 + format_real(p.q(static_cast<Eigen::Index>(i))) + "," + format_real(p.v(static_cast<Eigen::Index>(i)))
                 + "\n";
    return out;
}

std::string trace_summary_json(const SimulationTrace& trace, Regime regime)
{
    nlohmann::ordered_json j;
    j["converged"] = trace.converged;
    j["steps"] = trace.iterations;
    j["final_residual"] = trace.final_residual;
    if (trace.distance_to_orpf)
        j["distance_to_orpf"] = *trace.distance_to_orpf;
    else
        j["distance_to_orpf"] = nullptr;
    j["eps"] = trace.eps;
    j["regime"] = to_string(regime);
    if (!trace.windows.empty()) {
        nlohmann::ordered_json windows = nlohmann::ordered_json::array();
        for (const auto& w : trace.windows)
            windows.push_back({{"window", w.window}, {"distance", w.distance}, {"orpf_status", to_string(w.status)}});
        j["windows"] = std::move(windows);
        j["mean_window_distance"] = *trace.mean_window_distance;
    }
    return j.dump(2) + "\n";
}

} // namespace voltvar
