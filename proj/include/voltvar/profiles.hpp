#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "voltvar/feeder.hpp"

namespace voltvar {

/// Time series of operating points. `redraw`, when set, produces a fresh
/// sample for a step whose ORPF turned out infeasible.
struct ProfileSource {
    std::vector<OperatingPoint> steps;
    std::function<OperatingPoint(std::size_t step, std::mt19937_64& rng)> redraw;
};

struct SyntheticProfileOptions {
    std::size_t steps = 1440;     // one day at minute resolution
    double noise = 0.05;          // relative uniform perturbation of each load
    double load_scale = 1.5;      // multiplies the feeder's nominal loads
    double solar_peak = 0.3;      // p.u. injection at generator buses at noon
    double sunrise = 6.0;         // hours
    double sunset = 19.0;
};

/// Daily profiles: loads follow a double-peak curve (morning and evening)
/// around the feeder's nominal values, generator buses add a truncated bell
/// of solar output. Reactive loads keep each bus's nominal power factor.
ProfileSource synthetic_profiles(const FeederModel& model, const SyntheticProfileOptions& opts, std::uint64_t seed);

/// Load shape in [0, 1] at hour `h` (peak 1 in the evening).
double load_shape(double hour);
/// Solar shape in [0, 1]; zero outside [sunrise, sunset].
double solar_shape(double hour, double sunrise, double sunset);

/// CSV `step,bus,p_pu,q_pu` with one row per non-substation bus and step.
/// `q_pu` is ignored at generator buses. Steps must be 0..T-1 in order.
ProfileSource parse_profiles_csv(const FeederModel& model, const std::string& text, const std::string& name);
ProfileSource read_profiles_csv(const FeederModel& model, const std::string& path);
std::string profiles_to_csv(const FeederModel& model, const std::vector<OperatingPoint>& steps);

} // namespace voltvar
