#pragma once

#include <random>
#include <vector>

#include "voltvar/feeder.hpp"
#include "voltvar/sensitivity.hpp"
#include "voltvar/surrogate.hpp"

namespace fixture {

using namespace voltvar;

inline Bus substation() { return {0, BusKind::substation, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0}; }

inline Bus generator(int id, double p, double box = 0.4, double q0 = 0.0)
{
    Bus b;
    b.id = id;
    b.kind = BusKind::generator;
    b.p = p;
    b.q = q0;
    b.q_min = -box;
    b.q_max = box;
    return b;
}

inline Bus load(int id, double p, double q)
{
    Bus b;
    b.id = id;
    b.kind = BusKind::load;
    b.p = p;
    b.q = q;
    return b;
}

/// Substation plus one generator bus behind z = 0.1 + 0.2j.
inline FeederModel single_line(double p = -0.3, double box = 0.4)
{
    return FeederModel({substation(), generator(1, p, box)}, {{0, 1, 0.1, 0.2}});
}

/// Path 0-1-2 with z = 0.1 + 0.2j per line, both far buses generators.
inline FeederModel path3(double p1 = 0.0, double p2 = 0.0)
{
    return FeederModel({substation(), generator(1, p1), generator(2, p2)}, {{0, 1, 0.1, 0.2}, {1, 2, 0.1, 0.2}});
}

/// tanh network with `hidden` units and random weights, then projected.
inline ScalarShapeFunction random_shape(std::mt19937_64& rng, std::size_t hidden, double shift, double scale,
                                        SignMode sign, double cap, double out_scale)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ScalarShapeFunction f;
    f.input_shift = shift;
    f.input_scale = scale;
    f.sign_mode = sign;
    f.slope_cap = cap;
    for (std::size_t i = 0; i < hidden; ++i) {
        f.input_weights.push_back(2.0 * u(rng));
        f.biases.push_back(u(rng));
        f.output_weights.push_back(out_scale * u(rng));
    }
    f.offset = 0.1 * u(rng);
    project_constraints(f);
    return f;
}

/// Coupled-slope set with L_psi <= a and L_phi ||X|| <= b at every node. The
/// raw weights are drawn large, so the projection usually lands on the caps.
inline SurrogateSet random_cvpsc(std::mt19937_64& rng, const FeederModel& model, double x_norm, double a = 0.45,
                                 double b = 0.5)
{
    SurrogateSet set;
    set.regime = Regime::cvp_sc;
    for (int g : model.generator_buses()) {
        NodeSurrogate n;
        n.bus = g;
        n.q_min = model.bus(g).q_min;
        n.q_max = model.bus(g).q_max;
        n.psi = random_shape(rng, 4, 0.0, 1.0 / n.q_max, SignMode::free, a, 10.0);
        n.phi = random_shape(rng, 4, 1.0, 20.0, SignMode::free, b / x_norm, 10.0);
        set.nodes.push_back(std::move(n));
    }
    return set;
}

/// Monotone-voltage set with uncapped phi of moderate steepness.
inline SurrogateSet random_rpsc(std::mt19937_64& rng, const FeederModel& model, double psi_cap, double phi_gain)
{
    SurrogateSet set;
    set.regime = Regime::rp_sc;
    for (int g : model.generator_buses()) {
        NodeSurrogate n;
        n.bus = g;
        n.q_min = model.bus(g).q_min;
        n.q_max = model.bus(g).q_max;
        n.psi = random_shape(rng, 4, 0.0, 1.0 / n.q_max, SignMode::free, psi_cap, 10.0);
        n.phi = random_shape(rng, 4, 1.0, 20.0, SignMode::nonincreasing, std::numeric_limits<double>::infinity(),
                             phi_gain);
        set.nodes.push_back(std::move(n));
    }
    return set;
}

} // namespace fixture
