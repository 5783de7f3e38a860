#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "voltvar/sensitivity.hpp"
#include "voltvar/surrogate.hpp"

namespace voltvar {

struct StabilityCertificate {
    Regime regime = Regime::cvp_sc;
    double l_psi = 0.0;
    double l_phi = 0.0;
    double x_norm = 0.0;
    bool c1_satisfied = false;    // L_psi + L_phi ||X|| < 1
    bool c2_satisfied = false;    // phi nonincreasing and L_psi < 1
    double eps_max = 0.0;         // 0 when the declared regime's condition fails
    std::optional<double> jacobian_spectral_radius;

    double coupled_slope() const { return l_psi + l_phi * x_norm; }
    /// 1 - eps + eps (L_psi + L_phi ||X||): Lipschitz constant of the
    /// closed-loop operator under the coupled slope condition.
    double contraction_factor(double eps) const { return 1.0 - eps + eps * coupled_slope(); }
    bool valid() const { return regime == Regime::cvp_sc ? c1_satisfied : c2_satisfied; }
};

/// 2 / (L_psi + L_phi ||X|| + 1), before clamping to the [0, 1] step range.
double rpsc_step_bound(double l_psi, double l_phi, double x_norm);

StabilityCertificate certify_constants(Regime regime, double l_psi, double l_phi, double x_norm,
                                       bool phi_nonincreasing);
StabilityCertificate certify(const SurrogateSet& set, const SensitivityModel& sens);

struct JacobianSpectrum {
    Eigen::MatrixXd jacobian;     // (1-eps) I + eps J_psi + eps J_phi X
    Eigen::VectorXcd eigenvalues;
    double radius = 0.0;
    bool phi_negative_definite = false;
    double max_imaginary = 0.0;
    /// Only meaningful when phi_negative_definite: spectrum real within 1e-8.
    bool spectrum_real = false;
};

/// Linearization of the closed-loop operator at an interior equilibrium.
/// Throws a nonsmooth_point error if q_eq touches its box or the clamp is active there.
JacobianSpectrum jacobian_spectrum(const SurrogateSet& set, const SensitivityModel& sens,
                                   const Eigen::VectorXd& q_eq, double eps);
double jacobian_spectral_radius(const SurrogateSet& set, const SensitivityModel& sens,
                                const Eigen::VectorXd& q_eq, double eps);

std::string certificate_to_json(const StabilityCertificate& cert, double eps);

} // namespace voltvar
