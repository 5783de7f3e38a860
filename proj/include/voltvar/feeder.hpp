#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace voltvar {

enum class BusKind { substation, generator, load };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::load;
    double p = 0.0;      // active injection, p.u. (negative = consumption)
    double q = 0.0;      // reactive injection for loads; initial setpoint for generators
    double q_min = 0.0;  // generators only
    double q_max = 0.0;
    double v_min = 0.95;
    double v_max = 1.05;
};

struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;

    std::complex<double> impedance() const { return {r, x}; }
};

/// Uncontrolled injections at one instant: p over buses 1..N (bus order),
/// q over load buses (ascending id).
struct OperatingPoint {
    Eigen::VectorXd p;
    Eigen::VectorXd q_load;
};

/// Radial feeder rooted at substation bus 0. Validated on construction and
/// immutable afterwards.
class FeederModel {
public:
    FeederModel(std::vector<Bus> buses, std::vector<Line> lines);

    /// Number of non-substation buses (N).
    std::size_t size() const { return buses_.size() - 1; }
    std::size_t num_generators() const { return generator_buses_.size(); }

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Line>& lines() const { return lines_; }
    const Bus& bus(int id) const { return buses_.at(static_cast<std::size_t>(id)); }

    /// Generator bus ids, ascending. Defines the order of every C-vector.
    const std::vector<int>& generator_buses() const { return generator_buses_; }
    /// Load bus ids, ascending. Defines the order of q_load.
    const std::vector<int>& load_buses() const { return load_buses_; }

    /// Parent bus of `id` on the path to the substation (-1 for bus 0).
    int parent(int id) const { return parent_[static_cast<std::size_t>(id)]; }
    /// Index into lines() of the line joining `id` to its parent.
    std::size_t parent_line(int id) const { return parent_line_[static_cast<std::size_t>(id)]; }
    /// Buses in breadth-first order from the substation.
    const std::vector<int>& bfs_order() const { return bfs_order_; }

    OperatingPoint nominal_operating_point() const;
    Eigen::VectorXd q_min() const;
    Eigen::VectorXd q_max() const;
    /// Generator initial setpoints from the bus table.
    Eigen::VectorXd q_initial() const;
    /// Per-bus voltage limits over buses 1..N (bus order).
    Eigen::VectorXd v_min() const;
    Eigen::VectorXd v_max() const;

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    std::vector<int> generator_buses_;
    std::vector<int> load_buses_;
    std::vector<int> parent_;
    std::vector<std::size_t> parent_line_;
    std::vector<int> bfs_order_;
};

/// Bus admittance matrix over all N+1 buses, shunts neglected.
Eigen::MatrixXcd build_admittance(const FeederModel& model);

} // namespace voltvar
