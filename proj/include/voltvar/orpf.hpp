#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"
#include "voltvar/sensitivity.hpp"

namespace voltvar {

/// Loss-minimizing reactive dispatch over the generator setpoints q_C:
///
///   min  q_C' R q_C + 2 (R_L q_L)' q_C + constant
///   s.t. v_min <= [X; X_L'] q_C + v_hat <= v_max,   q_min <= q_C <= q_max
///
/// All N-vectors are stored in partition order.
struct OrpfProblem {
    Eigen::MatrixXd r;             // C x C
    Eigen::VectorXd linear;        // R_L q_L
    double constant = 0.0;         // p' R~ p + q_L' R_LL q_L
    Eigen::MatrixXd voltage_map;   // N x C
    Eigen::VectorXd v_hat;
    Eigen::VectorXd v_min, v_max;
    Eigen::VectorXd q_min, q_max;

    std::size_t num_generators() const { return static_cast<std::size_t>(r.rows()); }
    double objective(const Eigen::VectorXd& q) const;
    Eigen::VectorXd voltage(const Eigen::VectorXd& q) const { return voltage_map * q + v_hat; }
};

/// `v_min`/`v_max` are over buses 1..N in bus order; infinite entries drop the row.
OrpfProblem assemble(const SensitivityModel& sens, const OperatingPoint& op, const Eigen::VectorXd& q_min,
                     const Eigen::VectorXd& q_max, const Eigen::VectorXd& v_min, const Eigen::VectorXd& v_max);

/// Boxes and voltage limits taken from the feeder.
OrpfProblem assemble(const SensitivityModel& sens, const FeederModel& model, const OperatingPoint& op);

enum class OrpfStatus { optimal, infeasible, max_iter };
const char* to_string(OrpfStatus status);

struct OrpfOptions {
    double kkt_tol = 1e-6;
    double feasibility_tol = 1e-8;
    double admm_tol = 1e-7;        // residual level at which polishing is attempted
    double infeasibility_tol = 1e-6;
    int max_iter = 50000;
    int check_every = 10;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;
    bool adaptive_rho = true;
    bool polish = true;
    bool record_log = false;
};

struct KktResiduals {
    double stationarity = 0.0;
    double primal = 0.0;
    double complementarity = 0.0;
    double max() const { return std::max({stationarity, primal, complementarity}); }
};

/// One entry per residual check of the splitting loop.
struct OrpfLogEntry {
    int iteration = 0;
    double objective = 0.0;            // at the current iterate
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double rho = 0.0;
    double best_feasible_objective = 0.0;  // incumbent; +inf until a feasible iterate appears
};

struct OrpfSolution {
    Eigen::VectorXd q_star;
    Eigen::VectorXd dual;          // over [box rows; voltage rows]; >0 upper active, <0 lower active
    double objective = 0.0;
    double kkt_residual = 0.0;
    KktResiduals residuals;
    OrpfStatus status = OrpfStatus::max_iter;
    int iterations = 0;
    bool polished = false;
    std::vector<OrpfLogEntry> log;
};

struct OrpfWarmStart {
    Eigen::VectorXd q;
    Eigen::VectorXd dual;
};

OrpfSolution solve(const OrpfProblem& problem, const OrpfOptions& opts = {},
                   const OrpfWarmStart* warm = nullptr);

/// KKT residuals of (q, dual) measured on the original, unscaled problem.
KktResiduals kkt_residuals(const OrpfProblem& problem, const Eigen::VectorXd& q, const Eigen::VectorXd& dual);

/// Constraint matrix [I; voltage_map] and its bounds.
struct OrpfConstraints {
    Eigen::MatrixXd a;
    Eigen::VectorXd lower, upper;
};
OrpfConstraints constraints(const OrpfProblem& problem);

} // namespace voltvar
