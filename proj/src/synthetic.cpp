#include "voltvar/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "voltvar/errors.hpp"

namespace voltvar {

namespace {

// Parent of each bus 1..36 in the 37-bus layout: a trunk with two long
// laterals ending in the generator-heavy region around buses 25-36.
constexpr std::array<int, 37> kIeee37Parent = {
    -1, 0, 1, 2, 3, 4, 5, 3, 7, 8, 9, 10, 9, 12, 13, 12, 15, 16, 17,
    8, 19, 20, 21, 20, 23, 24, 25, 26, 25, 28, 29, 30, 31, 29, 33, 34, 35};

} // namespace

std::vector<int> case1_generators() { return {27, 31, 32, 34, 35}; }

std::vector<int> case2_generators() { return {6, 18, 27, 28, 29, 31, 32, 33, 34, 35}; }

FeederModel synthetic_ieee37(const SyntheticFeederOptions& opts, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> r_dist(opts.r_min, opts.r_max);
    std::uniform_real_distribution<double> x_dist(opts.x_min, opts.x_max);
    std::uniform_real_distribution<double> load_dist(opts.load_min, opts.load_max);
    const double q_ratio = std::tan(std::acos(opts.power_factor));

    std::vector<Line> lines;
    for (int n = 1; n < static_cast<int>(kIeee37Parent.size()); ++n) {
        const double r = r_dist(rng);
        const double x = x_dist(rng);
        lines.push_back({kIeee37Parent[static_cast<std::size_t>(n)], n, r, x});
    }

    std::vector<Bus> buses;
    buses.push_back({0, BusKind::substation, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0});
    for (int n = 1; n < static_cast<int>(kIeee37Parent.size()); ++n) {
        Bus b;
        b.id = n;
        const double consumption = load_dist(rng);
        b.p = -consumption;
        b.v_min = opts.v_min;
        b.v_max = opts.v_max;
        if (std::find(opts.generators.begin(), opts.generators.end(), n) != opts.generators.end()) {
            b.kind = BusKind::generator;
            b.q = 0.0;
            b.q_min = -opts.q_capacity;
            b.q_max = opts.q_capacity;
        } else {
            b.kind = BusKind::load;
            b.q = -consumption * q_ratio;
        }
        buses.push_back(b);
    }
    for (int g : opts.generators)
        if (g < 1 || g >= static_cast<int>(kIeee37Parent.size()))
            throw Error(ErrorKind::input, "generator bus " + std::to_string(g) + " outside the 37-bus feeder");
    return FeederModel(std::move(buses), std::move(lines));
}

FeederModel random_radial_feeder(const RandomFeederOptions& opts, std::mt19937_64& rng)
{
    if (opts.generators == 0 || opts.generators > opts.buses)
        throw Error(ErrorKind::input, "random feeder needs 1..buses generators");
    std::uniform_real_distribution<double> r_dist(opts.r_min, opts.r_max);
    std::uniform_real_distribution<double> x_dist(opts.x_min, opts.x_max);
    std::uniform_real_distribution<double> load_dist(opts.load_min, opts.load_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Line> lines;
    for (std::size_t n = 1; n <= opts.buses; ++n) {
        std::uniform_int_distribution<std::size_t> parent(0, n - 1);
        const double r = r_dist(rng);
        const double x = x_dist(rng);
        lines.push_back({static_cast<int>(parent(rng)), static_cast<int>(n), r, x});
    }

    std::vector<int> ids(opts.buses);
    for (std::size_t i = 0; i < ids.size(); ++i)
        ids[i] = static_cast<int>(i + 1);
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<int> gens(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(opts.generators));

    std::vector<Bus> buses;
    buses.push_back({0, BusKind::substation, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0});
    for (std::size_t n = 1; n <= opts.buses; ++n) {
        Bus b;
        b.id = static_cast<int>(n);
        b.p = -load_dist(rng);
        b.v_min = 0.95;
        b.v_max = 1.05;
        if (std::find(gens.begin(), gens.end(), b.id) != gens.end()) {
            b.kind = BusKind::generator;
            b.q_min = -opts.q_capacity;
            b.q_max = opts.q_capacity;
        } else {
            b.kind = BusKind::load;
            b.q = b.p * 0.3 * unit(rng);
        }
        buses.push_back(b);
    }
    return FeederModel(std::move(buses), std::move(lines));
}

} // namespace voltvar
