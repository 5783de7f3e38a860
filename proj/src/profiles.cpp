#include "voltvar/profiles.hpp"

#include <cmath>
#include <sstream>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

namespace {

constexpr const char* kProfilesHeader = "step,bus,p_pu,q_pu";

double gauss(double x, double mu, double width) { return std::exp(-0.5 * ((x - mu) / width) * ((x - mu) / width)); }

} // namespace

double load_shape(double hour)
{
    // Night floor, a morning bump and a larger evening peak. Normalized by the
    // value at 19:00, where the evening term dominates.
    auto raw = [](double h) { return 0.35 + 0.35 * gauss(h, 8.0, 1.5) + 0.65 * gauss(h, 19.0, 2.0); };
    return raw(hour) / raw(19.0);
}

double solar_shape(double hour, double sunrise, double sunset)
{
    if (hour <= sunrise || hour >= sunset)
        return 0.0;
    const double mid = 0.5 * (sunrise + sunset);
    const double width = (sunset - sunrise) / 6.0;
    // Shift so the bell reaches exactly zero at sunrise and sunset.
    const double edge = gauss(sunrise, mid, width);
    return (gauss(hour, mid, width) - edge) / (1.0 - edge);
}

ProfileSource synthetic_profiles(const FeederModel& model, const SyntheticProfileOptions& opts, std::uint64_t seed)
{
    if (opts.steps == 0)
        throw Error(ErrorKind::input, "synthetic profile needs at least one step");
    if (!(opts.noise >= 0.0 && opts.noise < 1.0))
        throw Error(ErrorKind::input, "profile noise must lie in [0, 1)");

    const OperatingPoint nominal = model.nominal_operating_point();
    const auto& loads = model.load_buses();
    std::vector<bool> is_generator(model.size() + 1, false);
    for (int g : model.generator_buses())
        is_generator[static_cast<std::size_t>(g)] = true;
    const std::size_t total = opts.steps;

    auto draw = [nominal, loads, is_generator, opts, total](std::size_t step, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> jitter(1.0 - opts.noise, 1.0 + opts.noise);
        const double hour = 24.0 * static_cast<double>(step) / static_cast<double>(total);
        const double shape = opts.load_scale * load_shape(hour);
        const double sun = opts.solar_peak * solar_shape(hour, opts.sunrise, opts.sunset);

        OperatingPoint op;
        op.p.resize(nominal.p.size());
        op.q_load.resize(nominal.q_load.size());
        for (Eigen::Index i = 0; i < nominal.p.size(); ++i) {
            op.p(i) = nominal.p(i) * shape * jitter(rng);
            if (is_generator[static_cast<std::size_t>(i + 1)])
                op.p(i) += sun;
        }
        // Reactive loads follow their bus's active load so the power factor is kept.
        for (std::size_t j = 0; j < loads.size(); ++j) {
            const auto i = static_cast<Eigen::Index>(loads[j] - 1);
            const double ratio = nominal.p(i) != 0.0 ? op.p(i) / nominal.p(i) : shape;
            op.q_load(static_cast<Eigen::Index>(j)) = nominal.q_load(static_cast<Eigen::Index>(j)) * ratio;
        }
        return op;
    };

    ProfileSource src;
    std::mt19937_64 rng(seed);
    src.steps.reserve(opts.steps);
    for (std::size_t t = 0; t < opts.steps; ++t)
        src.steps.push_back(draw(t, rng));
    src.redraw = draw;
    return src;
}

ProfileSource parse_profiles_csv(const FeederModel& model, const std::string& text, const std::string& name)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::input, name + ": empty file");
    const auto header = split_csv(line);
    const auto want = split_csv(kProfilesHeader);
    for (std::size_t i = 0; i < want.size(); ++i)
        if (i >= header.size() || header[i] != want[i])
            throw Error(ErrorKind::input, name + ":1: expected column '" + want[i] + "' at position "
                                              + std::to_string(i + 1));
    if (header.size() != want.size())
        throw Error(ErrorKind::input, name + ":1: expected " + std::to_string(want.size()) + " columns");

    const std::size_t n = model.size();
    std::vector<int> load_index(n + 1, -1);
    for (std::size_t j = 0; j < model.load_buses().size(); ++j)
        load_index[static_cast<std::size_t>(model.load_buses()[j])] = static_cast<int>(j);

    ProfileSource src;
    std::vector<bool> seen;
    std::size_t lineno = 1;
    auto finish_step = [&](std::size_t at) {
        for (std::size_t i = 0; i < n; ++i)
            if (!seen[i])
                throw Error(ErrorKind::input, name + ":" + std::to_string(at) + ": step "
                                                  + std::to_string(src.steps.size() - 1) + " has no row for bus "
                                                  + std::to_string(i + 1));
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const auto f = split_csv(line);
        const std::string ctx = name + ":" + std::to_string(lineno);
        if (f.size() != want.size())
            throw Error(ErrorKind::input, ctx + ": expected 4 fields, got " + std::to_string(f.size()));
        const int step = parse_int(f[0], ctx + " step");
        const int bus = parse_int(f[1], ctx + " bus");
        const double p = parse_real(f[2], ctx + " p_pu");
        const double q = parse_real(f[3], ctx + " q_pu");
        if (step == static_cast<int>(src.steps.size())) {
            if (!src.steps.empty())
                finish_step(lineno);
            OperatingPoint op;
            op.p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
            op.q_load = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.load_buses().size()));
            src.steps.push_back(std::move(op));
            seen.assign(n, false);
        } else if (step != static_cast<int>(src.steps.size()) - 1) {
            throw Error(ErrorKind::input, ctx + ": steps must be consecutive from 0, got " + std::to_string(step));
        }
        if (bus < 1 || bus > static_cast<int>(n))
            throw Error(ErrorKind::input, ctx + ": bus " + std::to_string(bus) + " is not a non-substation bus");
        if (seen[static_cast<std::size_t>(bus - 1)])
            throw Error(ErrorKind::input, ctx + ": duplicate row for bus " + std::to_string(bus));
        seen[static_cast<std::size_t>(bus - 1)] = true;
        OperatingPoint& op = src.steps.back();
        op.p(bus - 1) = p;
        if (load_index[static_cast<std::size_t>(bus)] >= 0)
            op.q_load(load_index[static_cast<std::size_t>(bus)]) = q;
    }
    if (src.steps.empty())
        throw Error(ErrorKind::input, name + ": profile has no steps");
    finish_step(lineno);
    return src;
}

ProfileSource read_profiles_csv(const FeederModel& model, const std::string& path)
{
    return parse_profiles_csv(model, read_text_file(path), path);
}

std::string profiles_to_csv(const FeederModel& model, const std::vector<OperatingPoint>& steps)
{
    std::vector<int> load_index(model.size() + 1, -1);
    for (std::size_t j = 0; j < model.load_buses().size(); ++j)
        load_index[static_cast<std::size_t>(model.load_buses()[j])] = static_cast<int>(j);
    std::string out = std::string(kProfilesHeader) + "\n";
    for (std::size_t t = 0; t < steps.size(); ++t)
        for (std::size_t bus = 1; bus <= model.size(); ++bus) {
            const int j = load_index[bus];
            const double q = j >= 0 ? steps[t].q_load(j) : 0.0;
            out += std::to_string(t) + "," + std::to_string(bus) + "," + format_real(steps[t].p(static_cast<Eigen::Index>(bus - 1)))
                 + "," + format_real(q) + "\n";
        }
    return out;
}

} // namespace voltvar
