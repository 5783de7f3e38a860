#include "voltvar/certificate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

double rpsc_step_bound(double l_psi, double l_phi, double x_norm) { return 2.0 / (l_psi + l_phi * x_norm + 1.0); }

StabilityCertificate certify_constants(Regime regime, double l_psi, double l_phi, double x_norm,
                                       bool phi_nonincreasing)
{
    StabilityCertificate cert;
    cert.regime = regime;
    cert.l_psi = l_psi;
    cert.l_phi = l_phi;
    cert.x_norm = x_norm;
    cert.c1_satisfied = cert.coupled_slope() < 1.0;
    cert.c2_satisfied = phi_nonincreasing && l_psi < 1.0;
    if (regime == Regime::cvp_sc)
        cert.eps_max = cert.c1_satisfied ? 1.0 : 0.0;
    else
        cert.eps_max = cert.c2_satisfied ? std::min(1.0, rpsc_step_bound(l_psi, l_phi, x_norm)) : 0.0;
    return cert;
}

StabilityCertificate certify(const SurrogateSet& set, const SensitivityModel& sens)
{
    if (set.size() != sens.num_generators())
        throw Error(ErrorKind::dimension, "surrogate has " + std::to_string(set.size()) + " nodes, feeder has "
                                              + std::to_string(sens.num_generators()) + " generators");
    bool shapes_ok = true;
    for (const auto& n : set.nodes)
        shapes_ok = shapes_ok && satisfies_constraints(n.psi) && satisfies_constraints(n.phi);
    StabilityCertificate cert =
        certify_constants(set.regime, set.l_psi_max(), set.l_phi_max(), sens.x_norm, set.phi_nonincreasing());
    if (!shapes_ok) {
        // A shape that violates its own declared constraints voids both conditions.
        cert.c1_satisfied = cert.c2_satisfied = false;
        cert.eps_max = 0.0;
    }
    return cert;
}

JacobianSpectrum jacobian_spectrum(const SurrogateSet& set, const SensitivityModel& sens,
                                   const Eigen::VectorXd& q_eq, double eps)
{
    const auto c = static_cast<Eigen::Index>(set.size());
    if (q_eq.size() != c || sens.x.rows() != c)
        throw Error(ErrorKind::dimension, "equilibrium and sensitivity sizes disagree with the surrogate");
    if (!(eps >= 0.0 && eps <= 1.0))
        throw Error(ErrorKind::domain, "step size must lie in [0, 1]");

    const Eigen::VectorXd v = generator_voltage(sens, q_eq);
    Eigen::VectorXd d_psi(c), d_phi(c);
    for (Eigen::Index i = 0; i < c; ++i) {
        const auto& node = set.nodes[static_cast<std::size_t>(i)];
        const double raw = evaluate_h_unclamped(set, static_cast<std::size_t>(i), q_eq(i), v(i));
        if (!(q_eq(i) > node.q_min && q_eq(i) < node.q_max && raw > node.q_min && raw < node.q_max))
            throw Error(ErrorKind::nonsmooth_point, "equilibrium at generator bus " + std::to_string(node.bus)
                                                        + " is on the clamp boundary (q = " + format_real(q_eq(i))
                                                        + ", unclamped h = " + format_real(raw) + ")");
        d_psi(i) = derivative(node.psi, q_eq(i));
        d_phi(i) = derivative(node.phi, v(i));
    }

    JacobianSpectrum out;
    out.jacobian = (1.0 - eps) * Eigen::MatrixXd::Identity(c, c);
    out.jacobian.diagonal() += eps * d_psi;
    out.jacobian += eps * d_phi.asDiagonal() * sens.x;

    Eigen::EigenSolver<Eigen::MatrixXd> es(out.jacobian, false);
    out.eigenvalues = es.eigenvalues();
    out.radius = out.eigenvalues.cwiseAbs().maxCoeff();
    out.max_imaginary = out.eigenvalues.imag().cwiseAbs().maxCoeff();
    out.phi_negative_definite = (d_phi.array() < 0.0).all();
    out.spectrum_real = out.phi_negative_definite && out.max_imaginary <= 1e-8;
    return out;
}

double jacobian_spectral_radius(const SurrogateSet& set, const SensitivityModel& sens, const Eigen::VectorXd& q_eq,
                                double eps)
{
    return jacobian_spectrum(set, sens, q_eq, eps).radius;
}

std::string certificate_to_json(const StabilityCertificate& cert, double eps)
{
    nlohmann::ordered_json j;
    j["regime"] = to_string(cert.regime);
    j["l_psi"] = cert.l_psi;
    j["l_phi"] = cert.l_phi;
    j["x_norm"] = cert.x_norm;
    j["coupled_slope"] = cert.coupled_slope();
    j["c1_satisfied"] = cert.c1_satisfied;
    j["c2_satisfied"] = cert.c2_satisfied;
    j["valid"] = cert.valid();
    j["eps_max"] = cert.eps_max;
    j["rpsc_step_bound"] = rpsc_step_bound(cert.l_psi, cert.l_phi, cert.x_norm);
    j["eps"] = eps;
    j["contraction_factor"] = cert.contraction_factor(eps);
    if (cert.jacobian_spectral_radius)
        j["jacobian_spectral_radius"] = *cert.jacobian_spectral_radius;
    else
        j["jacobian_spectral_radius"] = nullptr;
    return j.dump(2) + "\n";
}

} // namespace voltvar
