#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"

namespace voltvar {

/// Linearized voltage sensitivities of a radial feeder.
///
/// `r_tilde`/`x_tilde` are indexed by bus order 1..N. The blocks use the
/// generator/load partition: generators first (ascending id), then loads.
/// `v_hat` is stored in partition order and depends on the operating point
/// held alongside it.
struct SensitivityModel {
    std::vector<int> generator_buses;
    std::vector<int> load_buses;

    Eigen::MatrixXd r_tilde;
    Eigen::MatrixXd x_tilde;
    Eigen::MatrixXd r, x;          // C x C
    Eigen::MatrixXd r_l, x_l;      // C x (N-C)
    Eigen::MatrixXd r_ll, x_ll;    // (N-C) x (N-C)

    OperatingPoint operating_point;
    Eigen::VectorXd v_hat;         // N, partition order

    double x_norm = 0.0;           // spectral norm of X
    double x_min_eigenvalue = 0.0;
    double r_min_eigenvalue = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(r_tilde.rows()); }
    std::size_t num_generators() const { return generator_buses.size(); }

    Eigen::VectorXd v_hat_generators() const { return v_hat.head(x.rows()); }
    Eigen::VectorXd v_hat_loads() const { return v_hat.tail(x_ll.rows()); }

    /// Bus id (1..N) of each partition-order position.
    std::vector<int> partition_buses() const;
};

/// Inverts the reduced admittance matrix, extracts the partition blocks and
/// assembles v_hat for the feeder's nominal operating point.
SensitivityModel build_sensitivity(const FeederModel& model);

/// v_hat = [X_L; X_LL] q_L + R~ p + 1, partition order.
Eigen::VectorXd offset_voltage(const SensitivityModel& sens, const OperatingPoint& op);

/// Copy of `sens` re-anchored at a different operating point.
SensitivityModel with_operating_point(SensitivityModel sens, const OperatingPoint& op);

/// Full linearized voltage [X; X_L^T] q_C + v_hat, partition order.
Eigen::VectorXd linear_voltage(const SensitivityModel& sens, const Eigen::VectorXd& q_c);

/// Generator block X q_C + v_hat_C. The closed-loop operator and the linear
/// plant both go through this function.
Eigen::VectorXd generator_voltage(const SensitivityModel& sens, const Eigen::VectorXd& q_c);

/// Reorders a bus-order vector (buses 1..N) into partition order.
Eigen::VectorXd to_partition_order(const SensitivityModel& sens, const Eigen::VectorXd& bus_order);

std::string sensitivity_to_json(const SensitivityModel& sens);
SensitivityModel sensitivity_from_json(const std::string& text);

} // namespace voltvar
