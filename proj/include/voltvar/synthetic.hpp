#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "voltvar/feeder.hpp"

namespace voltvar {

/// Generator placements of the two 37-bus study cases.
std::vector<int> case1_generators();
std::vector<int> case2_generators();

struct SyntheticFeederOptions {
    double r_min = 0.003;
    double r_max = 0.008;
    double x_min = 0.003;
    double x_max = 0.008;
    double load_min = 0.01;   // consumed active power per load bus, p.u.
    double load_max = 0.05;
    double power_factor = 0.95;
    double q_capacity = 0.4;  // symmetric box [-q_capacity, q_capacity]
    double v_min = 0.95;
    double v_max = 1.05;
    std::vector<int> generators = case1_generators();
};

/// 37-bus radial feeder with randomized impedances and nominal loads.
/// Stands in for the modified IEEE 37-bus test feeder.
FeederModel synthetic_ieee37(const SyntheticFeederOptions& opts, std::uint64_t seed);

struct RandomFeederOptions {
    std::size_t buses = 8;       // non-substation buses
    std::size_t generators = 2;
    double r_min = 0.01;
    double r_max = 0.08;
    double x_min = 0.01;
    double x_max = 0.08;
    double load_min = 0.0;
    double load_max = 0.1;
    double q_capacity = 0.3;
};

/// Uniformly random tree (each bus attaches to an earlier one) for property tests.
FeederModel random_radial_feeder(const RandomFeederOptions& opts, std::mt19937_64& rng);

} // namespace voltvar
