#pragma once

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"

namespace voltvar {

struct AcOptions {
    int max_iter = 100;
    double voltage_tol = 1e-10;   // infinity norm of the complex voltage update
    double mismatch_tol = 1e-8;   // complex power mismatch, p.u.
    double collapse_voltage = 0.5;
};

struct AcSolution {
    Eigen::VectorXd v_mag;        // N+1, bus 0 first
    Eigen::VectorXd v_ang;        // rad
    Eigen::VectorXcd voltage;
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Backward/forward sweep from flat start, or from `warm_start` when given.
/// Generator reactive injections come from `q_c`; everything else from `op`.
AcSolution solve_ac(const FeederModel& model, const OperatingPoint& op, const Eigen::VectorXd& q_c,
                    const AcOptions& opts = {}, const Eigen::VectorXcd* warm_start = nullptr);

/// Nominal operating point of the feeder.
AcSolution solve_ac(const FeederModel& model, const Eigen::VectorXd& q_c, const AcOptions& opts = {});

/// Complex injections S_n = p_n + j q_n over all buses (entry 0 unused).
Eigen::VectorXcd bus_injections(const FeederModel& model, const OperatingPoint& op, const Eigen::VectorXd& q_c);

/// max_n |V_n conj((Y V)_n) - S_n| over non-substation buses.
double power_mismatch(const FeederModel& model, const Eigen::VectorXcd& injections,
                      const Eigen::VectorXcd& voltage);

} // namespace voltvar
