#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voltvar {

enum class Activation { tanh, identity };
enum class SignMode { free, nonincreasing };
enum class Regime { cvp_sc, rp_sc };

const char* to_string(Activation a);
const char* to_string(SignMode s);
/// "cvpsc" / "rpsc", as used on the command line and in model files.
const char* to_string(Regime r);
Regime parse_regime(const std::string& text);

/// Single-hidden-layer scalar map
///
///   f(x) = offset + sum_i w_out_i * act(w_in_i * s * (x - x0) + b_i)
///
/// where x0 = input_shift and s = input_scale normalize the raw input.
/// `identity` activation yields exact affine maps (droop-style curves).
struct ScalarShapeFunction {
    std::vector<double> input_weights;
    std::vector<double> output_weights;
    std::vector<double> biases;
    double offset = 0.0;
    double input_shift = 0.0;
    double input_scale = 1.0;
    Activation activation = Activation::tanh;
    SignMode sign_mode = SignMode::free;
    double slope_cap = std::numeric_limits<double>::infinity();

    std::size_t hidden_size() const { return input_weights.size(); }
};

double evaluate(const ScalarShapeFunction& f, double x);
/// Analytic derivative with respect to the raw input.
double derivative(const ScalarShapeFunction& f, double x);

/// |s| * sum_i |w_out_i| |w_in_i|; an upper bound on the Lipschitz constant
/// because tanh has unit maximal slope.
double lipschitz_bound(const ScalarShapeFunction& f);

struct SlopeReport {
    double bound = 0.0;     // lipschitz_bound(f)
    double sampled = 0.0;   // max |f'| over the sample set
    double argmax = 0.0;
};

/// Bound plus a sampled lower estimate of the true slope. Samples a uniform
/// grid over [lo, hi] together with every unit's inflection point, so a
/// single-unit network reports its exact peak slope.
SlopeReport slope_report(const ScalarShapeFunction& f, double lo, double hi, int samples = 1001);

/// Sign pattern and slope cap both hold (cap compared with `tol` slack).
bool satisfies_constraints(const ScalarShapeFunction& f, double tol = 0.0);

/// Projects onto the constraint set: sign clipping for nonincreasing maps,
/// then a uniform rescale of the output weights when the bound exceeds the
/// cap. Idempotent on feasible parameters.
void project_constraints(ScalarShapeFunction& f);

/// f(x) = offset + slope * (x - shift), exactly.
ScalarShapeFunction make_affine(double slope, double shift = 0.0, double offset = 0.0);
ScalarShapeFunction make_zero();

struct NodeSurrogate {
    int bus = 0;
    ScalarShapeFunction psi;   // reactive-power term
    ScalarShapeFunction phi;   // voltage term
    double q_min = 0.0;
    double q_max = 0.0;
};

/// Separable equilibrium functions h_n(q, v) = clamp(psi_n(q) + phi_n(v)).
struct SurrogateSet {
    Regime regime = Regime::cvp_sc;
    std::vector<NodeSurrogate> nodes;

    std::size_t size() const { return nodes.size(); }
    double l_psi_max() const;
    double l_phi_max() const;
    bool phi_nonincreasing() const;
    Eigen::VectorXd q_min() const;
    Eigen::VectorXd q_max() const;
};

/// psi_n(q) + phi_n(v) before clamping.
double evaluate_h_unclamped(const SurrogateSet& set, std::size_t n, double q, double v);
/// Clamped into [q_min_n, q_max_n]. Throws a domain error if q lies outside the box.
double evaluate_h(const SurrogateSet& set, std::size_t n, double q, double v);
Eigen::VectorXd evaluate_h(const SurrogateSet& set, const Eigen::VectorXd& q, const Eigen::VectorXd& v);

std::string surrogate_to_json(const SurrogateSet& set);
SurrogateSet surrogate_from_json(const std::string& text);

} // namespace voltvar
