#include "voltvar/acpf.hpp"

#include <cmath>
#include <complex>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

using cd = std::complex<double>;

Eigen::VectorXcd bus_injections(const FeederModel& model, const OperatingPoint& op, const Eigen::VectorXd& q_c)
{
    const auto n = static_cast<Eigen::Index>(model.size());
    const auto& gens = model.generator_buses();
    const auto& loads = model.load_buses();
    if (op.p.size() != n || op.q_load.size() != static_cast<Eigen::Index>(loads.size())
        || q_c.size() != static_cast<Eigen::Index>(gens.size()))
        throw Error(ErrorKind::dimension, "injection vectors do not match the feeder");

    Eigen::VectorXcd s = Eigen::VectorXcd::Zero(n + 1);
    for (Eigen::Index i = 0; i < n; ++i)
        s(i + 1) = op.p(i);
    for (std::size_t k = 0; k < gens.size(); ++k)
        s(gens[k]) += cd(0.0, q_c(static_cast<Eigen::Index>(k)));
    for (std::size_t k = 0; k < loads.size(); ++k)
        s(loads[k]) += cd(0.0, op.q_load(static_cast<Eigen::Index>(k)));
    for (Eigen::Index i = 0; i <= n; ++i)
        if (!std::isfinite(s(i).real()) || !std::isfinite(s(i).imag()))
            throw Error(ErrorKind::domain, "non-finite injection at bus " + std::to_string(i));
    return s;
}

double power_mismatch(const FeederModel& model, const Eigen::VectorXcd& injections, const Eigen::VectorXcd& voltage)
{
    Eigen::VectorXcd current = Eigen::VectorXcd::Zero(voltage.size());
    for (const Line& l : model.lines()) {
        const cd flow = (voltage(l.from) - voltage(l.to)) / l.impedance();
        current(l.from) += flow;
        current(l.to) -= flow;
    }
    double worst = 0.0;
    for (Eigen::Index i = 1; i < voltage.size(); ++i)
        worst = std::max(worst, std::abs(voltage(i) * std::conj(current(i)) - injections(i)));
    return worst;
}

AcSolution solve_ac(const FeederModel& model, const OperatingPoint& op, const Eigen::VectorXd& q_c,
                    const AcOptions& opts, const Eigen::VectorXcd* warm_start)
{
    const Eigen::VectorXcd s = bus_injections(model, op, q_c);
    const auto n_bus = s.size();

    Eigen::VectorXcd v = Eigen::VectorXcd::Ones(n_bus);
    if (warm_start) {
        if (warm_start->size() != n_bus)
            throw Error(ErrorKind::dimension, "warm start has the wrong length");
        v = *warm_start;
        v(0) = 1.0;
    }

    const auto& order = model.bfs_order();
    Eigen::VectorXcd branch(n_bus);   // current from parent into each bus
    double mismatch = INFINITY;
    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        // Backward: branch current = load current of the bus plus all downstream branches.
        branch.setZero();
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const int m = *it;
            if (m == 0)
                continue;
            branch(m) -= std::conj(s(m) / v(m));
            branch(model.parent(m)) += branch(m);
        }
        // Forward: voltage drop along each line from the substation outwards.
        double update = 0.0;
        for (int m : order) {
            if (m == 0)
                continue;
            const Line& l = model.lines()[model.parent_line(m)];
            const cd next = v(model.parent(m)) - l.impedance() * branch(m);
            update = std::max(update, std::abs(next - v(m)));
            v(m) = next;
            if (!(std::abs(next) >= opts.collapse_voltage))
                throw Error(ErrorKind::infeasible, "voltage collapse at bus " + std::to_string(m) + " (|v| = "
                                                       + format_real(std::abs(next)) + ") in sweep "
                                                       + std::to_string(iter));
        }
        mismatch = power_mismatch(model, s, v);
        if (update < opts.voltage_tol && mismatch < opts.mismatch_tol) {
            AcSolution sol;
            sol.voltage = v;
            sol.v_mag = v.cwiseAbs();
            sol.v_ang = v.unaryExpr([](const cd& z) { return std::arg(z); }).real();
            sol.v_mag(0) = 1.0;
            sol.iterations = iter;
            sol.max_mismatch = mismatch;
            return sol;
        }
    }
    throw Error(ErrorKind::divergence, "backward/forward sweep did not converge in " + std::to_string(opts.max_iter)
                                           + " iterations (last mismatch " + format_real(mismatch) + ")");
}

AcSolution solve_ac(const FeederModel& model, const Eigen::VectorXd& q_c, const AcOptions& opts)
{
    return solve_ac(model, model.nominal_operating_point(), q_c, opts);
}

} // namespace voltvar
