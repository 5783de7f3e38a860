#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/acpf.hpp"
#include "voltvar/feeder.hpp"
#include "voltvar/orpf.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/surrogate.hpp"

namespace voltvar {

enum class Plant { linear, ac };
const char* to_string(Plant p);
Plant parse_plant(const std::string& text);

struct TracePoint {
    int t = 0;
    Eigen::VectorXd q;   // generator setpoints
    Eigen::VectorXd v;   // generator voltage magnitudes
};

struct WindowMetric {
    std::size_t window = 0;
    Eigen::VectorXd q_star;
    double distance = 0.0;   // ||q_C(end of window) - q_C*||_2
    OrpfStatus status = OrpfStatus::optimal;
};

struct SimulationTrace {
    std::vector<TracePoint> steps;
    std::vector<double> residuals;   // residuals[t] = ||q(t+1) - q(t)||_inf
    double eps = 0.0;
    bool converged = false;
    int iterations = 0;              // first t with ||q(t+1) - q(t)||_inf < tol
    double final_residual = 0.0;
    std::optional<double> distance_to_orpf;
    std::vector<WindowMetric> windows;
    std::optional<double> mean_window_distance;
};

/// One application of the incremental rule, (1-eps) q + eps h(q, v).
Eigen::VectorXd step(const SurrogateSet& set, const Eigen::VectorXd& q, const Eigen::VectorXd& v, double eps);

/// The closed-loop operator on the linear model: step(q, X q + v_hat_C).
Eigen::VectorXd closed_loop_operator(const SurrogateSet& set, const SensitivityModel& sens,
                                     const Eigen::VectorXd& q, double eps);

struct ClosedLoopOptions {
    Plant plant = Plant::linear;
    int max_steps = 1000;
    double tol = 1e-9;
    AcOptions ac;
};

/// Alternates plant evaluation and the incremental rule. The AC plant uses
/// the operating point stored in `sens` and warm-starts each solve.
SimulationTrace run_closed_loop(const SurrogateSet& set, const FeederModel& model, const SensitivityModel& sens,
                                double eps, const Eigen::VectorXd& q0, const ClosedLoopOptions& opts = {});

struct FixedPoint {
    Eigen::VectorXd q;
    Eigen::VectorXd v;
    double residual = 0.0;   // ||q - h(q, v)||_inf
    int iterations = 0;
    double eps = 0.0;
};

/// Picard iteration of the closed-loop operator. Requires a valid certificate.
FixedPoint find_fixed_point(const SurrogateSet& set, const SensitivityModel& sens);

/// Runs `steps_per_change` updates per profile window, carrying the
/// controller state across windows and scoring each window against its ORPF
/// solution.
SimulationTrace time_varying_run(const SurrogateSet& set, const FeederModel& model, const SensitivityModel& sens,
                                 double eps, const std::vector<OperatingPoint>& profiles, int steps_per_change,
                                 const Eigen::VectorXd& q0, const ClosedLoopOptions& opts = {});

/// True if some residual within the first `window` steps falls below the
/// initial residual; false classifies the run as non-convergent.
bool residual_drops(const SimulationTrace& trace, int window = 200);

/// Forward invariance over every recorded step.
bool within_box(const SimulationTrace& trace, const Eigen::VectorXd& q_min, const Eigen::VectorXd& q_max);

std::string trace_to_csv(const SimulationTrace& trace, const std::vector<int>& generator_buses);
std::string trace_summary_json(const SimulationTrace& trace, Regime regime);

} // namespace voltvar
