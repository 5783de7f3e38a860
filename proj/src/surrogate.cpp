#include "voltvar/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

const char* to_string(SignMode s) { return s == SignMode::free ? "free" : "nonincreasing"; }

const char* to_string(Regime r) { return r == Regime::cvp_sc ? "cvpsc" : "rpsc"; }

Regime parse_regime(const std::string& text)
{
    if (text == "cvpsc" || text == "CVP-SC")
        return Regime::cvp_sc;
    if (text == "rpsc" || text == "RP-SC")
        return Regime::rp_sc;
    throw Error(ErrorKind::input, "unknown regime '" + text + "' (expected cvpsc or rpsc)");
}

namespace {

double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : z; }

double activate_slope(Activation a, double z)
{
    if (a == Activation::identity)
        return 1.0;
    const double t = std::tanh(z);
    return 1.0 - t * t;
}

} // namespace

double evaluate(const ScalarShapeFunction& f, double x)
{
    const double u = f.input_scale * (x - f.input_shift);
    double y = f.offset;
    for (std::size_t i = 0; i < f.hidden_size(); ++i)
        y += f.output_weights[i] * activate(f.activation, f.input_weights[i] * u + f.biases[i]);
    return y;
}

double derivative(const ScalarShapeFunction& f, double x)
{
    const double u = f.input_scale * (x - f.input_shift);
    double dy = 0.0;
    for (std::size_t i = 0; i < f.hidden_size(); ++i)
        dy += f.output_weights[i] * f.input_weights[i] * activate_slope(f.activation, f.input_weights[i] * u + f.biases[i]);
    return dy * f.input_scale;
}

double lipschitz_bound(const ScalarShapeFunction& f)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < f.hidden_size(); ++i)
        sum += std::abs(f.output_weights[i]) * std::abs(f.input_weights[i]);
    return std::abs(f.input_scale) * sum;
}

SlopeReport slope_report(const ScalarShapeFunction& f, double lo, double hi, int samples)
{
    SlopeReport rep;
    rep.bound = lipschitz_bound(f);
    auto visit = [&](double x) {
        const double d = std::abs(derivative(f, x));
        if (d > rep.sampled) {
            rep.sampled = d;
            rep.argmax = x;
        }
    };
    for (int k = 0; k < samples; ++k)
        visit(samples == 1 ? lo : lo + (hi - lo) * k / (samples - 1));
    for (std::size_t i = 0; i < f.hidden_size(); ++i) {
        const double w = f.input_weights[i] * f.input_scale;
        if (w != 0.0)
            visit(f.input_shift - f.biases[i] / w);
    }
    return rep;
}

bool satisfies_constraints(const ScalarShapeFunction& f, double tol)
{
    if (f.sign_mode == SignMode::nonincreasing) {
        if (!(f.input_scale > 0.0))
            return false;
        for (std::size_t i = 0; i < f.hidden_size(); ++i)
            if (f.output_weights[i] > 0.0 || f.input_weights[i] < 0.0)
                return false;
    }
    return lipschitz_bound(f) <= f.slope_cap + tol;
}

void project_constraints(ScalarShapeFunction& f)
{
    if (f.sign_mode == SignMode::nonincreasing) {
        for (double& w : f.output_weights)
            w = std::min(w, 0.0);
        for (double& w : f.input_weights)
            w = std::max(w, 0.0);
    }
    if (!std::isfinite(f.slope_cap))
        return;
    double bound = lipschitz_bound(f);
    if (bound <= f.slope_cap)
        return;
    double factor = f.slope_cap / bound;
    for (double& w : f.output_weights)
        w *= factor;
    // Round-off can leave the rescaled bound a few ulps above the cap.
    while ((bound = lipschitz_bound(f)) > f.slope_cap) {
        factor = std::nextafter(1.0, 0.0);
        for (double& w : f.output_weights)
            w *= factor;
    }
}

ScalarShapeFunction make_affine(double slope, double shift, double offset)
{
    ScalarShapeFunction f;
    f.activation = Activation::identity;
    f.input_weights = {1.0};
    f.output_weights = {slope};
    f.biases = {0.0};
    f.input_shift = shift;
    f.offset = offset;
    return f;
}

ScalarShapeFunction make_zero() { return ScalarShapeFunction{}; }

double SurrogateSet::l_psi_max() const
{
    double m = 0.0;
    for (const auto& n : nodes)
        m = std::max(m, lipschitz_bound(n.psi));
    return m;
}

double SurrogateSet::l_phi_max() const
{
    double m = 0.0;
    for (const auto& n : nodes)
        m = std::max(m, lipschitz_bound(n.phi));
    return m;
}

bool SurrogateSet::phi_nonincreasing() const
{
    return std::all_of(nodes.begin(), nodes.end(), [](const NodeSurrogate& n) {
        return n.phi.sign_mode == SignMode::nonincreasing && satisfies_constraints(n.phi);
    });
}

Eigen::VectorXd SurrogateSet::q_min() const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = nodes[i].q_min;
    return v;
}

Eigen::VectorXd SurrogateSet::q_max() const
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t i = 0; i < nodes.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = nodes[i].q_max;
    return v;
}

double evaluate_h_unclamped(const SurrogateSet& set, std::size_t n, double q, double v)
{
    const NodeSurrogate& node = set.nodes.at(n);
    return evaluate(node.psi, q) + evaluate(node.phi, v);
}

double evaluate_h(const SurrogateSet& set, std::size_t n, double q, double v)
{
    const NodeSurrogate& node = set.nodes.at(n);
    if (!(q >= node.q_min && q <= node.q_max))
        throw Error(ErrorKind::domain, "q = " + format_real(q) + " outside the box of generator bus "
                                           + std::to_string(node.bus));
    return std::clamp(evaluate_h_unclamped(set, n, q, v), node.q_min, node.q_max);
}

Eigen::VectorXd evaluate_h(const SurrogateSet& set, const Eigen::VectorXd& q, const Eigen::VectorXd& v)
{
    const auto c = static_cast<Eigen::Index>(set.size());
    if (q.size() != c || v.size() != c)
        throw Error(ErrorKind::dimension, "h expects " + std::to_string(c) + "-vectors");
    Eigen::VectorXd out(c);
    for (Eigen::Index i = 0; i < c; ++i)
        out(i) = evaluate_h(set, static_cast<std::size_t>(i), q(i), v(i));
    return out;
}

namespace {

nlohmann::ordered_json function_json(const ScalarShapeFunction& f)
{
    nlohmann::ordered_json j;
    j["activation"] = to_string(f.activation);
    j["sign_mode"] = to_string(f.sign_mode);
    if (std::isfinite(f.slope_cap))
        j["slope_cap"] = f.slope_cap;
    else
        j["slope_cap"] = nullptr;
    j["input_shift"] = f.input_shift;
    j["input_scale"] = f.input_scale;
    j["offset"] = f.offset;
    j["input_weights"] = f.input_weights;
    j["biases"] = f.biases;
    j["output_weights"] = f.output_weights;
    j["lipschitz_bound"] = lipschitz_bound(f);
    return j;
}

ScalarShapeFunction function_from(const nlohmann::json& j)
{
    ScalarShapeFunction f;
    const auto act = j.at("activation").get<std::string>();
    if (act == "tanh")
        f.activation = Activation::tanh;
    else if (act == "identity")
        f.activation = Activation::identity;
    else
        throw Error(ErrorKind::input, "unknown activation '" + act + "'");
    const auto sign = j.at("sign_mode").get<std::string>();
    if (sign == "free")
        f.sign_mode = SignMode::free;
    else if (sign == "nonincreasing")
        f.sign_mode = SignMode::nonincreasing;
    else
        throw Error(ErrorKind::input, "unknown sign mode '" + sign + "'");
    const auto& cap = j.at("slope_cap");
    f.slope_cap = cap.is_null() ? std::numeric_limits<double>::infinity() : cap.get<double>();
    f.input_shift = j.at("input_shift").get<double>();
    f.input_scale = j.at("input_scale").get<double>();
    f.offset = j.at("offset").get<double>();
    f.input_weights = j.at("input_weights").get<std::vector<double>>();
    f.biases = j.at("biases").get<std::vector<double>>();
    f.output_weights = j.at("output_weights").get<std::vector<double>>();
    if (f.biases.size() != f.input_weights.size() || f.output_weights.size() != f.input_weights.size())
        throw Error(ErrorKind::input, "weight arrays of a shape function differ in length");
    return f;
}

} // namespace

std::string surrogate_to_json(const SurrogateSet& set)
{
    nlohmann::ordered_json j;
    j["regime"] = to_string(set.regime);
    j["l_psi_max"] = set.l_psi_max();
    j["l_phi_max"] = set.l_phi_max();
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (const auto& n : set.nodes) {
        nlohmann::ordered_json node;
        node["bus"] = n.bus;
        node["q_min"] = n.q_min;
        node["q_max"] = n.q_max;
        node["psi"] = function_json(n.psi);
        node["phi"] = function_json(n.phi);
        nodes.push_back(std::move(node));
    }
    j["nodes"] = std::move(nodes);
    return j.dump(2) + "\n";
}

SurrogateSet surrogate_from_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        SurrogateSet set;
        set.regime = parse_regime(j.at("regime").get<std::string>());
        for (const auto& node : j.at("nodes")) {
            NodeSurrogate n;
            n.bus = node.at("bus").get<int>();
            n.q_min = node.at("q_min").get<double>();
            n.q_max = node.at("q_max").get<double>();
            n.psi = function_from(node.at("psi"));
            n.phi = function_from(node.at("phi"));
            set.nodes.push_back(std::move(n));
        }
        return set;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::input, std::string("surrogate JSON: ") + e.what());
    }
}

} // namespace voltvar
