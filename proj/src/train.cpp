#include "voltvar/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

namespace {

constexpr int kMaxRedraws = 100;

/// Runs body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body body)
{
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

OrpfSolution solve_step(const FeederModel& model, const SensitivityModel& sens, const OperatingPoint& op)
{
    return solve(assemble(sens, model, op));
}

} // namespace

ScenarioBatch generate_scenarios(const FeederModel& model, const SensitivityModel& sens, const ProfileSource& source,
                                 std::size_t samples_per_step, std::uint64_t seed, int threads)
{
    if (source.steps.empty())
        throw Error(ErrorKind::input, "profile source is empty");

    ScenarioBatch batch;
    batch.steps = source.steps;
    std::vector<OrpfStatus> status(batch.steps.size());
    parallel_for(batch.steps.size(), threads,
                 [&](std::size_t t) { status[t] = solve_step(model, sens, batch.steps[t]).status; });

    // Redraws run sequentially in step order so they do not depend on the thread count.
    std::mt19937_64 redraw_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t t = 0; t < batch.steps.size(); ++t) {
        int attempts = 0;
        while (status[t] != OrpfStatus::optimal) {
            if (status[t] == OrpfStatus::max_iter)
                throw Error(ErrorKind::divergence, "ORPF did not converge for profile step " + std::to_string(t));
            if (!source.redraw)
                throw Error(ErrorKind::infeasible, "ORPF is infeasible for profile step " + std::to_string(t)
                                                       + " and the profile source cannot resample");
            if (++attempts > kMaxRedraws)
                throw Error(ErrorKind::infeasible, "profile step " + std::to_string(t) + " stayed infeasible after "
                                                       + std::to_string(kMaxRedraws) + " redraws");
            batch.steps[t] = source.redraw(t, redraw_rng);
            status[t] = solve_step(model, sens, batch.steps[t]).status;
        }
        if (attempts > 0)
            batch.resampled.push_back("step " + std::to_string(t) + ": resampled " + std::to_string(attempts)
                                      + " time(s) after an infeasible ORPF");
    }

    const Eigen::VectorXd lo = model.q_min();
    const Eigen::VectorXd hi = model.q_max();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int id = 0;
    for (std::size_t t = 0; t < batch.steps.size(); ++t)
        for (std::size_t s = 0; s < samples_per_step; ++s) {
            Scenario sc;
            sc.id = id++;
            sc.step = t;
            sc.p = batch.steps[t].p;
            sc.q_load = batch.steps[t].q_load;
            sc.q_init.resize(lo.size());
            for (Eigen::Index i = 0; i < lo.size(); ++i)
                sc.q_init(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
            batch.scenarios.push_back(std::move(sc));
        }
    return batch;
}

LabelledData build_datasets(const FeederModel& model, const SensitivityModel& sens,
                            const std::vector<Scenario>& scenarios, int threads)
{
    // One ORPF per distinct operating point; scenarios of a step share it.
    std::vector<std::size_t> solve_of(scenarios.size());
    std::vector<std::size_t> representative;
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
        const Scenario& sc = scenarios[k];
        if (k > 0 && scenarios[k - 1].step == sc.step && scenarios[k - 1].p == sc.p
            && scenarios[k - 1].q_load == sc.q_load) {
            solve_of[k] = solve_of[k - 1];
            continue;
        }
        solve_of[k] = representative.size();
        representative.push_back(k);
    }

    std::vector<OrpfSolution> solutions(representative.size());
    std::vector<Eigen::VectorXd> v_hat_c(representative.size());
    parallel_for(representative.size(), threads, [&](std::size_t j) {
        const Scenario& sc = scenarios[representative[j]];
        const OperatingPoint op{sc.p, sc.q_load};
        solutions[j] = solve_step(model, sens, op);
        v_hat_c[j] = offset_voltage(sens, op).head(static_cast<Eigen::Index>(sens.num_generators()));
    });

    LabelledData out;
    const auto& gens = model.generator_buses();
    for (std::size_t i = 0; i < gens.size(); ++i) {
        NodeDataset d;
        d.bus = gens[i];
        d.q_min = model.bus(gens[i]).q_min;
        d.q_max = model.bus(gens[i]).q_max;
        d.v_max = model.bus(gens[i]).v_max;
        d.v.reserve(scenarios.size());
        d.q.reserve(scenarios.size());
        d.q_star.reserve(scenarios.size());
        out.datasets.push_back(std::move(d));
    }
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
        const Scenario& sc = scenarios[k];
        const OrpfSolution& sol = solutions[solve_of[k]];
        if (sol.status != OrpfStatus::optimal)
            throw Error(ErrorKind::infeasible, "scenario " + std::to_string(sc.id) + ": ORPF status "
                                                   + to_string(sol.status));
        if (sc.q_init.size() != static_cast<Eigen::Index>(gens.size()))
            throw Error(ErrorKind::dimension, "scenario " + std::to_string(sc.id) + " has the wrong q_init length");
        const Eigen::VectorXd v = sens.x * sc.q_init + v_hat_c[solve_of[k]];
        for (std::size_t i = 0; i < gens.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            out.datasets[i].v.push_back(v(ii));
            out.datasets[i].q.push_back(sc.q_init(ii));
            out.datasets[i].q_star.push_back(sol.q_star(ii));
        }
        out.labels.push_back({sol.q_star, sol.objective, sol.kkt_residual, sol.status});
        out.max_kkt_residual = std::max(out.max_kkt_residual, sol.kkt_residual);
    }
    return out;
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& name)
{
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos)
            return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::input, name + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw Error(ErrorKind::input, name + ":" + std::to_string(lineno) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

TrainHyper hyper_from_config(const std::map<std::string, std::string>& config)
{
    TrainHyper h;
    auto real = [&](const char* key, double& field) {
        if (auto it = config.find(key); it != config.end())
            field = parse_real(it->second, std::string("config key ") + key);
    };
    auto integer = [&](const char* key, auto& field) {
        if (auto it = config.find(key); it != config.end()) {
            const int v = parse_int(it->second, std::string("config key ") + key);
            if (v < 0)
                throw Error(ErrorKind::input, std::string("config key ") + key + " must be non-negative");
            field = static_cast<std::remove_reference_t<decltype(field)>>(v);
        }
    };
    integer("hidden", h.hidden);
    real("learning_rate", h.learning_rate);
    real("momentum", h.momentum);
    integer("epochs", h.epochs);
    integer("seed", h.seed);
    real("psi_cap_cvpsc", h.psi_cap_cvpsc);
    real("phi_budget_cvpsc", h.phi_budget_cvpsc);
    real("psi_cap_rpsc", h.psi_cap_rpsc);
    integer("log_every", h.log_every);
    integer("threads", h.threads);
    if (auto it = config.find("psi_enabled"); it != config.end()) {
        if (it->second != "true" && it->second != "false")
            throw Error(ErrorKind::input, "config key psi_enabled must be true or false");
        h.psi_enabled = it->second == "true";
    }
    if (!(h.learning_rate > 0.0) || !(h.momentum >= 0.0 && h.momentum < 1.0))
        throw Error(ErrorKind::input, "learning_rate must be > 0 and momentum in [0, 1)");
    if (!(h.psi_cap_cvpsc > 0.0) || !(h.phi_budget_cvpsc > 0.0) || !(h.psi_cap_rpsc > 0.0))
        throw Error(ErrorKind::input, "slope budgets must be positive");
    if (h.psi_cap_cvpsc + h.phi_budget_cvpsc >= 1.0)
        throw Error(ErrorKind::input, "psi_cap_cvpsc + phi_budget_cvpsc must stay below 1");
    if (h.psi_cap_rpsc >= 1.0)
        throw Error(ErrorKind::input, "psi_cap_rpsc must stay below 1");
    if (h.hidden == 0)
        throw Error(ErrorKind::input, "hidden must be positive");
    if (h.log_every == 0)
        h.log_every = 1;
    return h;
}

NodeSurrogate initial_node(const NodeDataset& data, Regime regime, const TrainHyper& hyper, double x_norm,
                           std::size_t node_index)
{
    if (!(data.v_max > 1.0))
        throw Error(ErrorKind::input, "bus " + std::to_string(data.bus) + " needs v_max above nominal");
    NodeSurrogate node;
    node.bus = data.bus;
    node.q_min = data.q_min;
    node.q_max = data.q_max;

    // Separate streams keep phi's start identical with and without psi.
    std::mt19937_64 phi_rng(hyper.seed * 1000003ULL + 2 * node_index);
    std::mt19937_64 psi_rng(hyper.seed * 1000003ULL + 2 * node_index + 1);
    std::uniform_real_distribution<double> magnitude(0.5, 2.0);
    std::uniform_real_distribution<double> bias(-1.0, 1.0);
    std::uniform_real_distribution<double> out(0.0, 0.05);
    std::bernoulli_distribution coin(0.5);

    ScalarShapeFunction& phi = node.phi;
    phi.input_shift = 1.0;
    phi.input_scale = 1.0 / (data.v_max - 1.0);
    if (regime == Regime::cvp_sc) {
        phi.slope_cap = hyper.phi_budget_cvpsc / x_norm;
    } else {
        phi.sign_mode = SignMode::nonincreasing;
    }
    for (std::size_t i = 0; i < hyper.hidden; ++i) {
        const bool monotone = phi.sign_mode == SignMode::nonincreasing;
        phi.input_weights.push_back(magnitude(phi_rng) * (monotone || coin(phi_rng) ? 1.0 : -1.0));
        phi.biases.push_back(bias(phi_rng));
        phi.output_weights.push_back(out(phi_rng) * (monotone || coin(phi_rng) ? -1.0 : 1.0));
    }
    double mean = 0.0;
    for (double q : data.q_star)
        mean += q;
    phi.offset = data.rows() ? mean / static_cast<double>(data.rows()) : 0.0;
    project_constraints(phi);

    ScalarShapeFunction& psi = node.psi;
    psi.slope_cap = regime == Regime::cvp_sc ? hyper.psi_cap_cvpsc : hyper.psi_cap_rpsc;
    if (hyper.psi_enabled) {
        const double reach = std::max(std::abs(data.q_min), std::abs(data.q_max));
        psi.input_scale = reach > 0.0 ? 1.0 / reach : 1.0;
        for (std::size_t i = 0; i < hyper.hidden; ++i) {
            psi.input_weights.push_back(magnitude(psi_rng) * (coin(psi_rng) ? 1.0 : -1.0));
            psi.biases.push_back(bias(psi_rng));
            psi.output_weights.push_back(0.0);
        }
    }
    return node;
}

namespace {

void push_shape(const ScalarShapeFunction& f, std::vector<double>& theta)
{
    theta.insert(theta.end(), f.input_weights.begin(), f.input_weights.end());
    theta.insert(theta.end(), f.biases.begin(), f.biases.end());
    theta.insert(theta.end(), f.output_weights.begin(), f.output_weights.end());
}

std::size_t pull_shape(const std::vector<double>& theta, std::size_t at, ScalarShapeFunction& f)
{
    const std::size_t h = f.hidden_size();
    std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(at), h, f.input_weights.begin());
    std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(at + h), h, f.biases.begin());
    std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(at + 2 * h), h, f.output_weights.begin());
    return at + 3 * h;
}

std::size_t parameter_count(const NodeSurrogate& node, bool psi_enabled)
{
    return 3 * node.phi.hidden_size() + 1 + (psi_enabled ? 3 * node.psi.hidden_size() : 0);
}

/// f(x) - offset; leaves the normalized input in `u` and the hidden activations in `act`.
double forward(const ScalarShapeFunction& f, double x, double& u, double* act)
{
    u = f.input_scale * (x - f.input_shift);
    const bool tanh_act = f.activation == Activation::tanh;
    double value = 0.0;
    for (std::size_t i = 0; i < f.hidden_size(); ++i) {
        const double z = f.input_weights[i] * u + f.biases[i];
        act[i] = tanh_act ? std::tanh(z) : z;
        value += f.output_weights[i] * act[i];
    }
    return value;
}

/// Adds weight * d(forward)/dtheta to grad, laid out as input weights, biases, output weights.
void backward(const ScalarShapeFunction& f, double u, const double* act, double weight, double* grad)
{
    const std::size_t h = f.hidden_size();
    const bool tanh_act = f.activation == Activation::tanh;
    for (std::size_t i = 0; i < h; ++i) {
        const double slope = tanh_act ? 1.0 - act[i] * act[i] : 1.0;
        const double dz = weight * f.output_weights[i] * slope;
        grad[i] += dz * u;
        grad[h + i] += dz;
        grad[2 * h + i] += weight * act[i];
    }
}

struct LossPair {
    double smooth = 0.0;
    double clamped = 0.0;
};

LossPair evaluate_losses(const NodeDataset& data, const NodeSurrogate& node, bool psi_enabled,
                         std::vector<double>* gradient)
{
    const std::size_t k = data.rows();
    if (k == 0)
        throw Error(ErrorKind::input, "dataset for bus " + std::to_string(data.bus) + " is empty");
    if (gradient)
        gradient->assign(parameter_count(node, psi_enabled), 0.0);
    const std::size_t h_phi = node.phi.hidden_size();
    const double inv_k = 1.0 / static_cast<double>(k);

    std::vector<double> act_phi(h_phi), act_psi(node.psi.hidden_size());
    LossPair loss;
    for (std::size_t r = 0; r < k; ++r) {
        double u_phi = 0.0, u_psi = 0.0;
        const double h = node.phi.offset + node.psi.offset + forward(node.phi, data.v[r], u_phi, act_phi.data())
                       + forward(node.psi, data.q[r], u_psi, act_psi.data());
        const double e = h - data.q_star[r];
        loss.smooth += e * e;
        const double ec = std::clamp(h, node.q_min, node.q_max) - data.q_star[r];
        loss.clamped += ec * ec;
        if (gradient) {
            const double w = 2.0 * e * inv_k;
            double* g = gradient->data();
            backward(node.phi, u_phi, act_phi.data(), w, g);
            g[3 * h_phi] += w;
            if (psi_enabled)
                backward(node.psi, u_psi, act_psi.data(), w, g + 3 * h_phi + 1);
        }
    }
    loss.smooth *= inv_k;
    loss.clamped *= inv_k;
    return loss;
}

struct NodeFit {
    NodeSurrogate node;
    NodeFitSummary summary;
    std::string log;
};

NodeFit fit_node(const NodeDataset& data, Regime regime, const TrainHyper& hyper, double x_norm, std::size_t index)
{
    NodeSurrogate node = initial_node(data, regime, hyper, x_norm, index);
    std::vector<double> theta = pack_parameters(node, hyper.psi_enabled);
    std::vector<double> velocity(theta.size(), 0.0);
    std::vector<double> grad;

    NodeFit best;
    best.summary.loss = INFINITY;
    std::string log;
    for (int epoch = 0; epoch <= hyper.epochs; ++epoch) {
        const LossPair loss = evaluate_losses(data, node, hyper.psi_enabled, &grad);
        if (!std::isfinite(loss.smooth))
            throw Error(ErrorKind::divergence, "training loss became non-finite at bus " + std::to_string(data.bus)
                                                   + " in epoch " + std::to_string(epoch)
                                                   + "; try a smaller learning_rate");
        const double l_psi = lipschitz_bound(node.psi);
        const double l_phi = lipschitz_bound(node.phi);
        if (loss.clamped < best.summary.loss) {
            best.node = node;
            best.summary = {data.bus, loss.clamped, l_psi, l_phi, epoch};
        }
        if (epoch % hyper.log_every == 0 || epoch == hyper.epochs) {
            nlohmann::ordered_json j;
            j["epoch"] = epoch;
            j["node"] = data.bus;
            j["loss"] = loss.clamped;
            j["lipschitz_psi"] = l_psi;
            j["lipschitz_phi"] = l_phi;
            log += j.dump() + "\n";
        }
        if (epoch == hyper.epochs)
            break;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            velocity[i] = hyper.momentum * velocity[i] - hyper.learning_rate * grad[i];
            theta[i] += velocity[i];
        }
        unpack_parameters(theta, node, hyper.psi_enabled);
        project_constraints(node.phi);
        project_constraints(node.psi);
        theta = pack_parameters(node, hyper.psi_enabled);
        if (hyper.observer)
            hyper.observer(index, epoch + 1, node);
    }
    best.log = std::move(log);
    return best;
}

} // namespace

std::vector<double> pack_parameters(const NodeSurrogate& node, bool psi_enabled)
{
    std::vector<double> theta;
    theta.reserve(parameter_count(node, psi_enabled));
    push_shape(node.phi, theta);
    theta.push_back(node.phi.offset);
    if (psi_enabled)
        push_shape(node.psi, theta);
    return theta;
}

void unpack_parameters(const std::vector<double>& theta, NodeSurrogate& node, bool psi_enabled)
{
    if (theta.size() != parameter_count(node, psi_enabled))
        throw Error(ErrorKind::dimension, "parameter vector has the wrong length");
    std::size_t at = pull_shape(theta, 0, node.phi);
    node.phi.offset = theta[at++];
    if (psi_enabled)
        pull_shape(theta, at, node.psi);
}

double node_loss(const NodeDataset& data, const NodeSurrogate& node, bool psi_enabled, std::vector<double>* gradient)
{
    return evaluate_losses(data, node, psi_enabled, gradient).smooth;
}

double node_clamped_loss(const NodeDataset& data, const NodeSurrogate& node)
{
    return evaluate_losses(data, node, false, nullptr).clamped;
}

FitResult fit(const std::vector<NodeDataset>& datasets, Regime regime, const TrainHyper& hyper, double x_norm)
{
    if (datasets.empty())
        throw Error(ErrorKind::input, "no datasets to fit");
    if (!(x_norm > 0.0))
        throw Error(ErrorKind::input, "||X|| must be positive");
    const std::size_t rows = datasets.front().rows();
    for (const auto& d : datasets)
        if (d.rows() != rows || rows == 0)
            throw Error(ErrorKind::input, "every node dataset needs the same, non-zero row count");

    std::vector<NodeFit> fits(datasets.size());
    parallel_for(datasets.size(), hyper.threads,
                 [&](std::size_t i) { fits[i] = fit_node(datasets[i], regime, hyper, x_norm, i); });

    FitResult result;
    result.set.regime = regime;
    for (auto& f : fits) {
        result.set.nodes.push_back(std::move(f.node));
        result.nodes.push_back(f.summary);
        result.log_jsonl += f.log;
    }
    result.loss = training_loss(result.set, datasets);
    return result;
}

double training_loss(const SurrogateSet& set, const std::vector<NodeDataset>& datasets)
{
    if (set.size() != datasets.size())
        throw Error(ErrorKind::dimension, "surrogate and datasets cover different generator counts");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < datasets.size(); ++n) {
        const NodeDataset& d = datasets[n];
        for (std::size_t k = 0; k < d.rows(); ++k) {
            const double e = std::clamp(evaluate_h_unclamped(set, n, d.q[k], d.v[k]), set.nodes[n].q_min,
                                        set.nodes[n].q_max)
                           - d.q_star[k];
            total += e * e;
        }
        count += d.rows();
    }
    return count ? total / static_cast<double>(count) : 0.0;
}

} // namespace voltvar
