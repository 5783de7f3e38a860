#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voltvar/certificate.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/feeder_io.hpp"
#include "voltvar/format.hpp"
#include "voltvar/profiles.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/sim.hpp"
#include "voltvar/synthetic.hpp"
#include "voltvar/train.hpp"

namespace fs = std::filesystem;

namespace voltvar::cli {

namespace {

enum class LogLevel { error, info, debug };

LogLevel log_level()
{
    const char* env = std::getenv("VOLTVAR_LOG");
    if (!env)
        return LogLevel::error;
    const std::string v = env;
    if (v == "debug")
        return LogLevel::debug;
    if (v == "info")
        return LogLevel::info;
    return LogLevel::error;
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    LogLevel level = log_level();

    void info(const std::string& msg) const
    {
        if (level >= LogLevel::info)
            err << "[info] " << msg << "\n";
    }
    void debug(const std::string& msg) const
    {
        if (level >= LogLevel::debug)
            err << "[debug] " << msg << "\n";
    }
};

/// Settings shared by the pipeline stages. Command-line flags override the
/// config file, which overrides the defaults below.
struct RunConfig {
    std::string feeder, buses, profiles, out = ".";
    std::uint64_t seed = 1;
    Regime regime = Regime::cvp_sc;
    std::optional<double> eps;
    Plant plant = Plant::linear;
    int threads = 1;

    std::size_t samples_per_step = 5;
    SyntheticProfileOptions profile;

    TrainHyper hyper;
    bool baseline = false;

    int max_steps = 1000;
    double tol = 1e-9;
    int steps_per_change = 0;
    int profile_step = -1;
    AcOptions ac;
    int feeder_case = 1;
};

const std::set<std::string> kConfigKeys = {
    "seed", "regime", "eps", "plant", "threads", "samples_per_step", "steps", "load_scale", "solar_peak", "noise",
    "hidden", "learning_rate", "momentum", "epochs", "psi_cap_cvpsc", "phi_budget_cvpsc", "psi_cap_rpsc",
    "psi_enabled", "log_every", "max_steps", "tol", "steps_per_change", "profile_step", "ac_voltage_tol",
    "ac_mismatch_tol", "case"};

void apply_config(RunConfig& cfg, const std::string& path)
{
    const auto kv = parse_key_values(read_text_file(path), path);
    for (const auto& [key, value] : kv)
        if (!kConfigKeys.count(key))
            throw Error(ErrorKind::input, path + ": unknown key '" + key + "'");
    cfg.hyper = hyper_from_config(kv);
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    const std::string ctx = path + " key ";
    if (auto v = get("seed")) {
        const int s = parse_int(*v, ctx + "seed");
        if (s < 0)
            throw Error(ErrorKind::input, ctx + "seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (auto v = get("regime"))
        cfg.regime = parse_regime(*v);
    if (auto v = get("eps"))
        cfg.eps = parse_real(*v, ctx + "eps");
    if (auto v = get("plant"))
        cfg.plant = parse_plant(*v);
    if (auto v = get("threads"))
        cfg.threads = parse_int(*v, ctx + "threads");
    if (auto v = get("samples_per_step"))
        cfg.samples_per_step = static_cast<std::size_t>(std::max(0, parse_int(*v, ctx + "samples_per_step")));
    if (auto v = get("steps"))
        cfg.profile.steps = static_cast<std::size_t>(std::max(0, parse_int(*v, ctx + "steps")));
    if (auto v = get("load_scale"))
        cfg.profile.load_scale = parse_real(*v, ctx + "load_scale");
    if (auto v = get("solar_peak"))
        cfg.profile.solar_peak = parse_real(*v, ctx + "solar_peak");
    if (auto v = get("noise"))
        cfg.profile.noise = parse_real(*v, ctx + "noise");
    if (auto v = get("max_steps"))
        cfg.max_steps = parse_int(*v, ctx + "max_steps");
    if (auto v = get("tol"))
        cfg.tol = parse_real(*v, ctx + "tol");
    if (auto v = get("steps_per_change"))
        cfg.steps_per_change = parse_int(*v, ctx + "steps_per_change");
    if (auto v = get("profile_step"))
        cfg.profile_step = parse_int(*v, ctx + "profile_step");
    if (auto v = get("ac_voltage_tol"))
        cfg.ac.voltage_tol = parse_real(*v, ctx + "ac_voltage_tol");
    if (auto v = get("ac_mismatch_tol"))
        cfg.ac.mismatch_tol = parse_real(*v, ctx + "ac_mismatch_tol");
    if (auto v = get("case"))
        cfg.feeder_case = parse_int(*v, ctx + "case");
}

void validate(const RunConfig& cfg)
{
    if (!(cfg.tol > 0.0) || !(cfg.ac.voltage_tol > 0.0) || !(cfg.ac.mismatch_tol > 0.0))
        throw Error(ErrorKind::input, "tolerances must be positive");
    if (cfg.eps && !(*cfg.eps >= 0.0 && *cfg.eps <= 1.0))
        throw Error(ErrorKind::input, "--eps must lie in [0, 1]");
    if (cfg.threads < 1)
        throw Error(ErrorKind::input, "--threads must be at least 1");
    if (cfg.max_steps < 1)
        throw Error(ErrorKind::input, "max_steps must be at least 1");
    if (cfg.feeder_case != 1 && cfg.feeder_case != 2)
        throw Error(ErrorKind::input, "--case must be 1 or 2");
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void ensure_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::input, "cannot create output directory " + dir + ": " + ec.message());
}

FeederModel load_feeder(const RunConfig& cfg)
{
    if (cfg.feeder.empty() || cfg.buses.empty())
        throw Error(ErrorKind::input, "--feeder and --buses are required");
    return read_feeder(cfg.feeder, cfg.buses);
}

ProfileSource load_profiles(const RunConfig& cfg, const FeederModel& model)
{
    if (!cfg.profiles.empty())
        return read_profiles_csv(model, cfg.profiles);
    return synthetic_profiles(model, cfg.profile, cfg.seed);
}

// ---- synth-feeder / synth-profiles ------------------------------------------

int cmd_synth_feeder(const RunConfig& cfg, Context& ctx)
{
    SyntheticFeederOptions opts;
    opts.generators = cfg.feeder_case == 1 ? case1_generators() : case2_generators();
    // The ten-generator case uses smaller units.
    opts.q_capacity = cfg.feeder_case == 1 ? 0.4 : 0.2;
    const FeederModel model = synthetic_ieee37(opts, cfg.seed);
    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "lines.csv"), lines_to_csv(model));
    write_text_file(join(cfg.out, "buses.csv"), buses_to_csv(model));
    ctx.out << "wrote " << model.size() + 1 << "-bus feeder with " << model.num_generators()
            << " generators to " << cfg.out << "\n";
    return 0;
}

int cmd_synth_profiles(const RunConfig& cfg, Context& ctx)
{
    const FeederModel model = load_feeder(cfg);
    const ProfileSource src = synthetic_profiles(model, cfg.profile, cfg.seed);
    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "profiles.csv"), profiles_to_csv(model, src.steps));
    ctx.out << "wrote " << src.steps.size() << " profile steps to " << join(cfg.out, "profiles.csv") << "\n";
    return 0;
}

// ---- build -------------------------------------------------------------------

int cmd_build(const RunConfig& cfg, Context& ctx)
{
    const FeederModel model = load_feeder(cfg);
    const SensitivityModel sens = build_sensitivity(model);
    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "sensitivity.json"), sensitivity_to_json(sens));
    ctx.out << "||X|| = " << format_real(sens.x_norm) << "\n"
            << "min eig X = " << format_real(sens.x_min_eigenvalue) << "\n"
            << "min eig R = " << format_real(sens.r_min_eigenvalue) << "\n";
    return 0;
}

// ---- label -------------------------------------------------------------------

int cmd_label(const RunConfig& cfg, Context& ctx)
{
    const FeederModel model = load_feeder(cfg);
    const SensitivityModel sens = build_sensitivity(model);
    const ProfileSource src = load_profiles(cfg, model);
    ctx.info("profile with " + std::to_string(src.steps.size()) + " steps");

    const ScenarioBatch batch = generate_scenarios(model, sens, src, cfg.samples_per_step, cfg.seed, cfg.threads);
    for (const auto& msg : batch.resampled)
        ctx.info(msg);
    const LabelledData data = build_datasets(model, sens, batch.scenarios, cfg.threads);

    const auto& gens = model.generator_buses();
    std::vector<int> load_index(model.size() + 1, -1);
    for (std::size_t j = 0; j < model.load_buses().size(); ++j)
        load_index[static_cast<std::size_t>(model.load_buses()[j])] = static_cast<int>(j);
    std::vector<int> gen_index(model.size() + 1, -1);
    for (std::size_t j = 0; j < gens.size(); ++j)
        gen_index[static_cast<std::size_t>(gens[j])] = static_cast<int>(j);

    std::string scenarios = "id,step,bus,p_pu,q_pu,qinit_pu\n";
    std::string labels = "scenario_id,bus_id,q_star_pu,objective,status\n";
    for (std::size_t k = 0; k < batch.scenarios.size(); ++k) {
        const Scenario& sc = batch.scenarios[k];
        const std::string head = std::to_string(sc.id) + "," + std::to_string(sc.step) + ",";
        for (std::size_t bus = 1; bus <= model.size(); ++bus) {
            const int l = load_index[bus];
            const int g = gen_index[bus];
            scenarios += head + std::to_string(bus) + "," + format_real(sc.p(static_cast<Eigen::Index>(bus - 1))) + ","
                       + (l >= 0 ? format_real(sc.q_load(l)) : std::string()) + ","
                       + (g >= 0 ? format_real(sc.q_init(g)) : std::string()) + "\n";
        }
        const ScenarioLabel& lab = data.labels[k];
        for (std::size_t i = 0; i < gens.size(); ++i)
            labels += std::to_string(sc.id) + "," + std::to_string(gens[i]) + ","
                    + format_real(lab.q_star(static_cast<Eigen::Index>(i))) + "," + format_real(lab.objective) + ","
                    + to_string(lab.status) + "\n";
    }

    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "scenarios.csv"), scenarios);
    write_text_file(join(cfg.out, "orpf_labels.csv"), labels);
    for (const NodeDataset& d : data.datasets) {
        std::string csv = "v_pu,q_pu,qstar_pu\n";
        for (std::size_t k = 0; k < d.rows(); ++k)
            csv += format_real(d.v[k]) + "," + format_real(d.q[k]) + "," + format_real(d.q_star[k]) + "\n";
        write_text_file(join(cfg.out, "dataset_" + std::to_string(d.bus) + ".csv"), csv);
    }
    std::string log;
    for (const auto& msg : batch.resampled)
        log += msg + "\n";
    write_text_file(join(cfg.out, "resampled.log"), log);

    ctx.out << batch.scenarios.size() << " scenarios, " << batch.resampled.size() << " resampled steps, max KKT residual "
            << format_real(data.max_kkt_residual) << "\n";
    return 0;
}

// ---- train -------------------------------------------------------------------

NodeDataset read_dataset(const std::string& path, const Bus& bus)
{
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"v_pu", "q_pu", "qstar_pu"})
        throw Error(ErrorKind::input, path + ":1: expected header v_pu,q_pu,qstar_pu");
    NodeDataset d;
    d.bus = bus.id;
    d.q_min = bus.q_min;
    d.q_max = bus.q_max;
    d.v_max = bus.v_max;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto f = split_csv(line);
        const std::string where = path + ":" + std::to_string(lineno);
        if (f.size() != 3)
            throw Error(ErrorKind::input, where + ": expected 3 fields");
        d.v.push_back(parse_real(f[0], where + " v_pu"));
        d.q.push_back(parse_real(f[1], where + " q_pu"));
        d.q_star.push_back(parse_real(f[2], where + " qstar_pu"));
    }
    return d;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, Context& ctx)
{
    const FeederModel model = load_feeder(cfg);
    const SensitivityModel sens = build_sensitivity(model);
    const std::string dir = data_dir.empty() ? cfg.out : data_dir;
    std::vector<NodeDataset> datasets;
    for (int g : model.generator_buses())
        datasets.push_back(read_dataset(join(dir, "dataset_" + std::to_string(g) + ".csv"), model.bus(g)));
    if (datasets.front().rows() == 0)
        throw Error(ErrorKind::input, "datasets in " + dir + " have no rows");

    TrainHyper hyper = cfg.hyper;
    hyper.seed = cfg.seed;
    hyper.threads = cfg.threads;
    if (cfg.baseline)
        hyper.psi_enabled = false;
    const FitResult res = fit(datasets, cfg.regime, hyper, sens.x_norm);
    const std::string tag = std::string(to_string(cfg.regime)) + (hyper.psi_enabled ? "" : "_baseline");

    nlohmann::ordered_json summary;
    summary["regime"] = to_string(cfg.regime);
    summary["baseline"] = !hyper.psi_enabled;
    summary["loss"] = res.loss;
    summary["rows"] = datasets.front().rows();
    summary["epochs"] = hyper.epochs;
    summary["seed"] = hyper.seed;
    summary["hidden"] = hyper.hidden;
    summary["l_psi_max"] = res.set.l_psi_max();
    summary["l_phi_max"] = res.set.l_phi_max();
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : res.nodes)
        nodes.push_back({{"bus", n.bus},
                         {"loss", n.loss},
                         {"lipschitz_psi", n.lipschitz_psi},
                         {"lipschitz_phi", n.lipschitz_phi},
                         {"best_epoch", n.best_epoch}});
    summary["nodes"] = std::move(nodes);

    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "surrogate_" + tag + ".json"), surrogate_to_json(res.set));
    write_text_file(join(cfg.out, "train_log_" + tag + ".jsonl"), res.log_jsonl);
    write_text_file(join(cfg.out, "train_summary_" + tag + ".json"), summary.dump(2) + "\n");
    ctx.out << tag << " training loss " << format_real(res.loss) << "\n";
    return 0;
}

// ---- certify -----------------------------------------------------------------

void check_match(const SurrogateSet& set, const SensitivityModel& sens)
{
    if (set.size() != sens.num_generators())
        throw Error(ErrorKind::dimension, "surrogate has " + std::to_string(set.size()) + " nodes but the feeder has "
                                              + std::to_string(sens.num_generators()) + " generators");
    for (std::size_t i = 0; i < set.size(); ++i)
        if (set.nodes[i].bus != sens.generator_buses[i])
            throw Error(ErrorKind::input, "surrogate node " + std::to_string(i) + " is for bus "
                                              + std::to_string(set.nodes[i].bus) + ", feeder generator is bus "
                                              + std::to_string(sens.generator_buses[i]));
}

/// The step used when --eps is absent: the full step under the coupled slope
/// condition, 99% of the bound otherwise.
double default_eps(const StabilityCertificate& cert)
{
    if (!cert.valid())
        throw Error(ErrorKind::input, "surrogate is not certified for its regime; pass --eps explicitly");
    return cert.regime == Regime::cvp_sc ? std::min(1.0, cert.eps_max) : 0.99 * cert.eps_max;
}

int cmd_certify(const RunConfig& cfg, const std::string& surrogate_path, const std::string& sensitivity_path,
                Context& ctx)
{
    const SurrogateSet set = surrogate_from_json(read_text_file(surrogate_path));
    const SensitivityModel sens = sensitivity_from_json(read_text_file(sensitivity_path));
    check_match(set, sens);
    StabilityCertificate cert = certify(set, sens);
    const double eps = cfg.eps ? *cfg.eps : (cert.valid() ? default_eps(cert) : 0.0);
    if (cert.valid() && eps > 0.0) {
        try {
            const FixedPoint fp = find_fixed_point(set, sens);
            cert.jacobian_spectral_radius = jacobian_spectral_radius(set, sens, fp.q, eps);
        } catch (const Error& e) {
            // Boundary equilibria have no Jacobian; the certificate stands without it.
            ctx.info(std::string("no spectral radius: ") + e.what());
        }
    }
    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, std::string("certificate_") + to_string(set.regime) + ".json"),
                    certificate_to_json(cert, eps));
    ctx.out << to_string(set.regime) << (cert.valid() ? " certified" : " NOT certified") << ", eps_max "
            << format_real(cert.eps_max) << "\n";
    return cert.valid() ? 0 : 1;
}

// ---- simulate ----------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const std::string& surrogate_path, Context& ctx)
{
    const FeederModel model = load_feeder(cfg);
    const SensitivityModel nominal = build_sensitivity(model);
    const SurrogateSet set = surrogate_from_json(read_text_file(surrogate_path));
    check_match(set, nominal);
    const double eps = cfg.eps ? *cfg.eps : default_eps(certify(set, nominal));

    ClosedLoopOptions opts;
    opts.plant = cfg.plant;
    opts.max_steps = cfg.max_steps;
    opts.tol = cfg.tol;
    opts.ac = cfg.ac;
    const Eigen::VectorXd q0 = model.q_initial();

    SimulationTrace trace;
    if (cfg.steps_per_change > 0) {
        const ProfileSource src = load_profiles(cfg, model);
        trace = time_varying_run(set, model, nominal, eps, src.steps, cfg.steps_per_change, q0, opts);
    } else {
        OperatingPoint op = model.nominal_operating_point();
        if (cfg.profile_step >= 0) {
            const ProfileSource src = load_profiles(cfg, model);
            if (static_cast<std::size_t>(cfg.profile_step) >= src.steps.size())
                throw Error(ErrorKind::input, "--profile-step beyond the profile length");
            op = src.steps[static_cast<std::size_t>(cfg.profile_step)];
        }
        const SensitivityModel sens = with_operating_point(nominal, op);
        trace = run_closed_loop(set, model, sens, eps, q0, opts);
        const OrpfSolution opt = solve(assemble(sens, model, op));
        if (opt.status == OrpfStatus::optimal)
            trace.distance_to_orpf = (trace.steps.back().q - opt.q_star).norm();
        else
            ctx.info(std::string("ORPF reference ") + to_string(opt.status) + "; no distance reported");
    }

    const std::string tag = std::string(to_string(set.regime)) + "_" + to_string(cfg.plant);
    ensure_dir(cfg.out);
    write_text_file(join(cfg.out, "trace_" + tag + ".csv"), trace_to_csv(trace, model.generator_buses()));
    write_text_file(join(cfg.out, "summary_" + tag + ".json"), trace_summary_json(trace, set.regime));
    ctx.out << tag << (trace.converged ? " converged" : " did not converge") << " after " << trace.iterations
            << " steps, final residual " << format_real(trace.final_residual) << "\n";
    if (!within_box(trace, set.q_min(), set.q_max()))
        throw Error(ErrorKind::divergence, "trace left the capability box");
    return trace.converged || cfg.steps_per_change > 0 ? 0 : 1;
}

// ---- report ------------------------------------------------------------------

std::vector<std::string> files_matching(const std::string& dir, const std::string& prefix, const std::string& suffix)
{
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.size() >= prefix.size() + suffix.size()
            && name.compare(0, prefix.size(), prefix) == 0
            && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
            names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::string middle(const std::string& name, const std::string& prefix, const std::string& suffix)
{
    return name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
}

nlohmann::json read_json(const std::string& path)
{
    try {
        return nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::input, path + ": " + e.what());
    }
}

std::string json_real(const nlohmann::json& v) { return v.is_null() ? "" : format_real(v.get<double>()); }

/// Per-step infinity-norm residual recovered from a trace CSV.
std::vector<double> trace_residuals(const std::string& path)
{
    std::istringstream in(read_text_file(path));
    std::string line;
    std::getline(in, line);
    std::map<int, std::map<int, double>> q;   // t -> bus -> q
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto f = split_csv(line);
        if (f.size() != 4)
            throw Error(ErrorKind::input, path + ": malformed trace row");
        q[parse_int(f[0], path)][parse_int(f[1], path)] = parse_real(f[2], path);
    }
    std::vector<double> res;
    for (auto it = q.begin(); it != q.end() && std::next(it) != q.end(); ++it) {
        double m = 0.0;
        for (const auto& [bus, value] : it->second)
            m = std::max(m, std::abs(std::next(it)->second.at(bus) - value));
        res.push_back(m);
    }
    return res;
}

int cmd_report(const RunConfig& cfg, Context& ctx)
{
    const std::string dir = cfg.out;
    if (!fs::is_directory(dir))
        throw Error(ErrorKind::input, dir + " is not a directory");
    const auto train = files_matching(dir, "train_summary_", ".json");
    const auto certs = files_matching(dir, "certificate_", ".json");
    const auto sims = files_matching(dir, "summary_", ".json");
    const auto traces = files_matching(dir, "trace_", ".csv");
    if (train.empty() && certs.empty() && sims.empty() && traces.empty())
        throw Error(ErrorKind::input, dir + " holds no training, certificate or simulation artifacts");

    std::string md = "# Volt/Var controller report\n\n";

    // Training: each regime against its psi-free baseline.
    std::map<std::string, double> loss;
    for (const auto& name : train)
        loss[middle(name, "train_summary_", ".json")] = read_json(join(dir, name)).at("loss").get<double>();
    std::string train_csv = "regime,loss,baseline_loss,improvement\n";
    if (!loss.empty()) {
        md += "## Training loss\n\n| regime | loss (psi, phi) | loss (phi only) | improvement |\n|---|---|---|---|\n";
        for (const auto& [tag, value] : loss) {
            if (tag.size() > 9 && tag.compare(tag.size() - 9, 9, "_baseline") == 0)
                continue;
            const auto base = loss.find(tag + "_baseline");
            std::string base_s, impr_s;
            if (base != loss.end()) {
                base_s = format_real(base->second);
                impr_s = base->second > 0.0 ? format_real((base->second - value) / base->second) : "";
            }
            train_csv += tag + "," + format_real(value) + "," + base_s + "," + impr_s + "\n";
            md += "| " + tag + " | " + format_real(value) + " | " + base_s + " | " + impr_s + " |\n";
        }
        md += "\n";
    }

    std::string cert_csv = "regime,l_psi,l_phi,x_norm,coupled_slope,valid,eps_max,eps,jacobian_spectral_radius\n";
    if (!certs.empty()) {
        md += "## Certificates\n\n| regime | L_psi | L_phi | ||X|| | valid | eps_max | spectral radius |\n"
              "|---|---|---|---|---|---|---|\n";
        for (const auto& name : certs) {
            const auto j = read_json(join(dir, name));
            const std::string valid = j.at("valid").get<bool>() ? "true" : "false";
            cert_csv += j.at("regime").get<std::string>() + "," + json_real(j.at("l_psi")) + "," + json_real(j.at("l_phi"))
                      + "," + json_real(j.at("x_norm")) + "," + json_real(j.at("coupled_slope")) + "," + valid + ","
                      + json_real(j.at("eps_max")) + "," + json_real(j.at("eps")) + ","
                      + json_real(j.at("jacobian_spectral_radius")) + "\n";
            md += "| " + j.at("regime").get<std::string>() + " | " + json_real(j.at("l_psi")) + " | "
                + json_real(j.at("l_phi")) + " | " + json_real(j.at("x_norm")) + " | " + valid + " | "
                + json_real(j.at("eps_max")) + " | " + json_real(j.at("jacobian_spectral_radius")) + " |\n";
        }
        md += "\n";
    }

    std::string sim_csv = "run,converged,steps,final_residual,distance_to_orpf,mean_window_distance,eps\n";
    if (!sims.empty()) {
        md += "## Closed loop\n\n| run | converged | steps | final residual | distance to ORPF | eps |\n"
              "|---|---|---|---|---|---|\n";
        for (const auto& name : sims) {
            const auto j = read_json(join(dir, name));
            const std::string run = middle(name, "summary_", ".json");
            const std::string conv = j.at("converged").get<bool>() ? "true" : "false";
            const std::string mean = j.contains("mean_window_distance") ? json_real(j.at("mean_window_distance")) : "";
            sim_csv += run + "," + conv + "," + std::to_string(j.at("steps").get<int>()) + ","
                     + json_real(j.at("final_residual")) + "," + json_real(j.at("distance_to_orpf")) + "," + mean + ","
                     + json_real(j.at("eps")) + "\n";
            md += "| " + run + " | " + conv + " | " + std::to_string(j.at("steps").get<int>()) + " | "
                + json_real(j.at("final_residual")) + " | " + json_real(j.at("distance_to_orpf")) + " | "
                + json_real(j.at("eps")) + " |\n";
        }
        md += "\n";
    }

    std::vector<std::pair<std::string, std::string>> outputs = {
        {"report_training.csv", train_csv}, {"report_certificates.csv", cert_csv}, {"report_simulation.csv", sim_csv}};
    for (const auto& name : traces) {
        const auto res = trace_residuals(join(dir, name));
        std::string csv = "t,residual\n";
        for (std::size_t t = 0; t < res.size(); ++t)
            csv += std::to_string(t) + "," + format_real(res[t]) + "\n";
        outputs.emplace_back("convergence_" + middle(name, "trace_", ".csv") + ".csv", csv);
    }
    if (!traces.empty()) {
        md += "## Convergence traces\n\n";
        for (const auto& name : traces)
            md += "- convergence_" + middle(name, "trace_", ".csv") + ".csv\n";
        md += "\n";
    }
    for (const auto& [name, content] : outputs)
        write_text_file(join(dir, name), content);
    write_text_file(join(dir, "report.md"), md);
    ctx.out << "wrote " << join(dir, "report.md") << "\n";
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    Context ctx{out, err};
    CLI::App app{"Stable local Volt/Var controllers from separable ORPF surrogates", "voltvar"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path, regime, plant, data_dir, surrogate_path, sensitivity_path;
    std::optional<double> eps, tol;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads, max_steps, steps_per_change, profile_step, feeder_case, epochs;
    std::optional<std::size_t> samples, steps;
    bool baseline = false;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value configuration file");
        sub->add_option("--out", cfg.out, "output directory");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--threads", threads, "worker cap");
    };
    auto feeder_opts = [&](CLI::App* sub) {
        sub->add_option("--feeder", cfg.feeder, "line table CSV");
        sub->add_option("--buses", cfg.buses, "bus table CSV");
    };

    auto* synth = app.add_subcommand("synth-feeder", "write a synthetic 37-bus feeder");
    common(synth);
    synth->add_option("--case", feeder_case, "generator placement (1 or 2)");

    auto* synth_prof = app.add_subcommand("synth-profiles", "write synthetic daily profiles");
    common(synth_prof);
    feeder_opts(synth_prof);
    synth_prof->add_option("--steps", steps, "number of profile steps");

    auto* build = app.add_subcommand("build", "feeder CSVs to sensitivity JSON");
    common(build);
    feeder_opts(build);

    auto* label = app.add_subcommand("label", "scenarios and ORPF labels");
    common(label);
    feeder_opts(label);
    label->add_option("--profiles", cfg.profiles, "profile CSV (default: synthetic)");
    label->add_option("--samples-per-step", samples, "setpoint draws per profile step");
    label->add_option("--steps", steps, "synthetic profile length");

    auto* train = app.add_subcommand("train", "fit a surrogate");
    common(train);
    feeder_opts(train);
    train->add_option("--data", data_dir, "directory holding dataset_<bus>.csv (default: --out)");
    train->add_option("--regime", regime, "cvpsc or rpsc");
    train->add_option("--epochs", epochs, "optimizer epochs");
    train->add_flag("--baseline", baseline, "phi-only baseline (psi fixed at zero)");

    auto* cert = app.add_subcommand("certify", "stability certificate");
    common(cert);
    cert->add_option("--surrogate", surrogate_path, "surrogate JSON")->required();
    cert->add_option("--sensitivity", sensitivity_path, "sensitivity JSON")->required();
    cert->add_option("--eps", eps, "step size");

    auto* sim = app.add_subcommand("simulate", "closed-loop run");
    common(sim);
    feeder_opts(sim);
    sim->add_option("--surrogate", surrogate_path, "surrogate JSON")->required();
    sim->add_option("--eps", eps, "step size (default: certified)");
    sim->add_option("--plant", plant, "linear or ac");
    sim->add_option("--max-steps", max_steps, "step limit");
    sim->add_option("--tol", tol, "convergence tolerance");
    sim->add_option("--profiles", cfg.profiles, "profile CSV (default: synthetic)");
    sim->add_option("--profile-step", profile_step, "operating point from this profile step");
    sim->add_option("--steps-per-change", steps_per_change, "time-varying run with this many updates per step");

    auto* report = app.add_subcommand("report", "aggregate artifacts in --out");
    common(report);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!config_path.empty())
            apply_config(cfg, config_path);
        if (seed)
            cfg.seed = *seed;
        if (threads)
            cfg.threads = *threads;
        if (!regime.empty())
            cfg.regime = parse_regime(regime);
        if (!plant.empty())
            cfg.plant = parse_plant(plant);
        if (eps)
            cfg.eps = *eps;
        if (tol)
            cfg.tol = *tol;
        if (max_steps)
            cfg.max_steps = *max_steps;
        if (steps_per_change)
            cfg.steps_per_change = *steps_per_change;
        if (profile_step)
            cfg.profile_step = *profile_step;
        if (feeder_case)
            cfg.feeder_case = *feeder_case;
        if (samples)
            cfg.samples_per_step = *samples;
        if (steps)
            cfg.profile.steps = *steps;
        if (epochs)
            cfg.hyper.epochs = *epochs;
        cfg.baseline = baseline;
        validate(cfg);
        ctx.debug("seed " + std::to_string(cfg.seed) + ", threads " + std::to_string(cfg.threads));

        if (synth->parsed())
            return cmd_synth_feeder(cfg, ctx);
        if (synth_prof->parsed())
            return cmd_synth_profiles(cfg, ctx);
        if (build->parsed())
            return cmd_build(cfg, ctx);
        if (label->parsed())
            return cmd_label(cfg, ctx);
        if (train->parsed())
            return cmd_train(cfg, data_dir, ctx);
        if (cert->parsed())
            return cmd_certify(cfg, surrogate_path, sensitivity_path, ctx);
        if (sim->parsed())
            return cmd_simulate(cfg, surrogate_path, ctx);
        if (report->parsed())
            return cmd_report(cfg, ctx);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.is_input_error() ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace voltvar::cli
