#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"
#include "voltvar/orpf.hpp"
#include "voltvar/profiles.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/surrogate.hpp"

namespace voltvar {

struct Scenario {
    int id = 0;
    std::size_t step = 0;
    Eigen::VectorXd p;        // buses 1..N
    Eigen::VectorXd q_load;   // load order
    Eigen::VectorXd q_init;   // generator order, inside the box
};

struct ScenarioBatch {
    std::vector<Scenario> scenarios;
    std::vector<OperatingPoint> steps;   // profile after any redraws
    std::vector<std::string> resampled;  // one message per redrawn step
};

/// `samples_per_step` uniform draws of q_C per profile step. Steps whose ORPF
/// is infeasible are redrawn through the source (up to 100 attempts) and logged.
ScenarioBatch generate_scenarios(const FeederModel& model, const SensitivityModel& sens, const ProfileSource& source,
                                 std::size_t samples_per_step, std::uint64_t seed, int threads = 1);

struct NodeDataset {
    int bus = 0;
    double q_min = 0.0;
    double q_max = 0.0;
    double v_max = 1.05;
    std::vector<double> v, q, q_star;

    std::size_t rows() const { return v.size(); }
};

struct ScenarioLabel {
    Eigen::VectorXd q_star;
    double objective = 0.0;
    double kkt_residual = 0.0;
    OrpfStatus status = OrpfStatus::optimal;
};

struct LabelledData {
    std::vector<ScenarioLabel> labels;   // per scenario
    std::vector<NodeDataset> datasets;   // per generator, ascending bus id
    double max_kkt_residual = 0.0;
};

/// v_C = X q_init + v_hat_C at each scenario's operating point and q_C* from
/// the ORPF. Scenarios sharing a step share one solve.
LabelledData build_datasets(const FeederModel& model, const SensitivityModel& sens,
                            const std::vector<Scenario>& scenarios, int threads = 1);

struct TrainHyper {
    std::size_t hidden = 20;
    double learning_rate = 1e-2;
    double momentum = 0.9;
    int epochs = 5000;
    std::uint64_t seed = 1;
    double psi_cap_cvpsc = 0.45;
    double phi_budget_cvpsc = 0.5;   // phi cap = budget / ||X||
    double psi_cap_rpsc = 0.9;
    bool psi_enabled = true;         // false: phi-only baseline
    int log_every = 1;
    int threads = 1;
    /// Called after every projected update with (node index, epoch, parameters).
    /// Runs on the worker thread of that node.
    std::function<void(std::size_t, int, const NodeSurrogate&)> observer;
};

/// Keys are the field names; keys it does not know are left to the caller.
TrainHyper hyper_from_config(const std::map<std::string, std::string>& config);

/// key = value lines; '#' starts a comment.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& name);

/// Untrained node with the regime's caps, sign modes and input normalization.
NodeSurrogate initial_node(const NodeDataset& data, Regime regime, const TrainHyper& hyper, double x_norm,
                           std::size_t node_index);

/// Trainable parameters of a node, flattened: phi (input weights, biases,
/// output weights, offset) followed by psi (input weights, biases, output
/// weights) when psi is enabled.
std::vector<double> pack_parameters(const NodeSurrogate& node, bool psi_enabled);
void unpack_parameters(const std::vector<double>& theta, NodeSurrogate& node, bool psi_enabled);

/// Mean squared error of the unclamped h over the dataset, with its gradient
/// with respect to pack_parameters(node) when `gradient` is non-null.
double node_loss(const NodeDataset& data, const NodeSurrogate& node, bool psi_enabled,
                 std::vector<double>* gradient = nullptr);

/// Mean squared error of the clamped h.
double node_clamped_loss(const NodeDataset& data, const NodeSurrogate& node);

struct NodeFitSummary {
    int bus = 0;
    double loss = 0.0;           // clamped
    double lipschitz_psi = 0.0;
    double lipschitz_phi = 0.0;
    int best_epoch = 0;
};

struct FitResult {
    SurrogateSet set;
    double loss = 0.0;           // (1/(K C)) sum_n sum_k |q* - h_n|^2
    std::vector<NodeFitSummary> nodes;
    std::string log_jsonl;
};

/// Projected heavy-ball descent per node; returns the best iterate by clamped loss.
FitResult fit(const std::vector<NodeDataset>& datasets, Regime regime, const TrainHyper& hyper, double x_norm);

/// (1/(K C)) sum over nodes and rows of the clamped squared error.
double training_loss(const SurrogateSet& set, const std::vector<NodeDataset>& datasets);

} // namespace voltvar
