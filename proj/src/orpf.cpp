#include "voltvar/orpf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "voltvar/errors.hpp"

namespace voltvar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoFree = 1e-6;   // penalty for rows with no finite bound

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
    return v.cwiseMax(lo).cwiseMin(hi);
}

double violation(const Eigen::VectorXd& av, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < av.size(); ++i)
        worst = std::max({worst, lo(i) - av(i), av(i) - hi(i)});
    return worst;
}

} // namespace

double OrpfProblem::objective(const Eigen::VectorXd& q) const
{
    return q.dot(r * q) + 2.0 * linear.dot(q) + constant;
}

const char* to_string(OrpfStatus status)
{
    switch (status) {
    case OrpfStatus::optimal:
        return "optimal";
    case OrpfStatus::infeasible:
        return "infeasible";
    case OrpfStatus::max_iter:
        return "max_iter";
    }
    return "max_iter";
}

OrpfProblem assemble(const SensitivityModel& sens, const OperatingPoint& op, const Eigen::VectorXd& q_min,
                     const Eigen::VectorXd& q_max, const Eigen::VectorXd& v_min, const Eigen::VectorXd& v_max)
{
    const auto n = static_cast<Eigen::Index>(sens.size());
    const auto c = static_cast<Eigen::Index>(sens.num_generators());
    if (q_min.size() != c || q_max.size() != c)
        throw Error(ErrorKind::dimension, "reactive boxes must have " + std::to_string(c) + " entries");
    if (v_min.size() != n || v_max.size() != n)
        throw Error(ErrorKind::dimension, "voltage limits must have " + std::to_string(n) + " entries");
    for (Eigen::Index i = 0; i < c; ++i)
        if (!(q_min(i) <= q_max(i)))
            throw Error(ErrorKind::domain, "empty reactive box for generator " + std::to_string(i));

    OrpfProblem pr;
    pr.v_hat = offset_voltage(sens, op);   // validates op dimensions
    pr.r = sens.r;
    pr.linear = sens.r_l * op.q_load;
    pr.constant = op.p.dot(sens.r_tilde * op.p) + op.q_load.dot(sens.r_ll * op.q_load);
    pr.voltage_map.resize(n, c);
    pr.voltage_map.topRows(c) = sens.x;
    pr.voltage_map.bottomRows(n - c) = sens.x_l.transpose();
    pr.v_min = to_partition_order(sens, v_min);
    pr.v_max = to_partition_order(sens, v_max);
    pr.q_min = q_min;
    pr.q_max = q_max;
    return pr;
}

OrpfProblem assemble(const SensitivityModel& sens, const FeederModel& model, const OperatingPoint& op)
{
    return assemble(sens, op, model.q_min(), model.q_max(), model.v_min(), model.v_max());
}

OrpfConstraints constraints(const OrpfProblem& pr)
{
    const auto c = static_cast<Eigen::Index>(pr.num_generators());
    const auto n = pr.voltage_map.rows();
    OrpfConstraints k;
    k.a.resize(c + n, c);
    k.a.topRows(c) = Eigen::MatrixXd::Identity(c, c);
    k.a.bottomRows(n) = pr.voltage_map;
    k.lower.resize(c + n);
    k.upper.resize(c + n);
    k.lower << pr.q_min, pr.v_min - pr.v_hat;
    k.upper << pr.q_max, pr.v_max - pr.v_hat;
    return k;
}

KktResiduals kkt_residuals(const OrpfProblem& pr, const Eigen::VectorXd& q, const Eigen::VectorXd& dual)
{
    const OrpfConstraints k = constraints(pr);
    const Eigen::VectorXd aq = k.a * q;
    KktResiduals res;
    res.stationarity = inf_norm(2.0 * pr.r * q + 2.0 * pr.linear + k.a.transpose() * dual);
    res.primal = std::max(0.0, violation(aq, k.lower, k.upper));
    for (Eigen::Index i = 0; i < dual.size(); ++i) {
        double term = 0.0;
        if (dual(i) > 0.0)
            term = std::isfinite(k.upper(i)) ? dual(i) * std::abs(k.upper(i) - aq(i)) : kInf;
        else if (dual(i) < 0.0)
            term = std::isfinite(k.lower(i)) ? -dual(i) * std::abs(aq(i) - k.lower(i)) : kInf;
        res.complementarity = std::max(res.complementarity, term);
    }
    return res;
}

namespace {

/// Equality-constrained QP on a guessed active set, solved on the original
/// data with a regularized KKT system plus iterative refinement.
bool polish(const OrpfProblem& pr, const OrpfConstraints& k, const Eigen::VectorXd& z_scaled,
            const Eigen::VectorXd& y_scaled, const Eigen::VectorXd& lo_scaled, const Eigen::VectorXd& hi_scaled,
            const OrpfOptions& opts, OrpfSolution& out)
{
    enum class Side { lower, upper, both };
    const auto c = static_cast<Eigen::Index>(pr.num_generators());
    const auto m = k.a.rows();
    std::vector<Eigen::Index> rows;
    std::vector<Side> sides;
    for (Eigen::Index i = 0; i < m; ++i) {
        const bool at_lower = std::isfinite(lo_scaled(i)) && z_scaled(i) - lo_scaled(i) < -y_scaled(i);
        const bool at_upper = std::isfinite(hi_scaled(i)) && hi_scaled(i) - z_scaled(i) < y_scaled(i);
        if (k.lower(i) == k.upper(i) && std::isfinite(k.lower(i))) {
            rows.push_back(i);
            sides.push_back(Side::both);
        } else if (at_lower) {
            rows.push_back(i);
            sides.push_back(Side::lower);
        } else if (at_upper) {
            rows.push_back(i);
            sides.push_back(Side::upper);
        }
    }
    const auto na = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(c + na, c + na);
    kkt.topLeftCorner(c, c) = 2.0 * pr.r;
    Eigen::VectorXd rhs(c + na);
    rhs.head(c) = -2.0 * pr.linear;
    for (Eigen::Index j = 0; j < na; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        kkt.block(c + j, 0, 1, c) = k.a.row(rows[idx]);
        kkt.block(0, c + j, c, 1) = k.a.row(rows[idx]).transpose();
        rhs(c + j) = sides[idx] == Side::upper ? k.upper(rows[idx]) : k.lower(rows[idx]);
    }
    constexpr double delta = 1e-9;
    Eigen::MatrixXd reg = kkt;
    reg.topLeftCorner(c, c).diagonal().array() += delta;
    reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(reg);
    Eigen::VectorXd sol = lu.solve(rhs);
    for (int refine = 0; refine < 5; ++refine)
        sol += lu.solve(rhs - kkt * sol);
    if (!sol.allFinite())
        return false;

    Eigen::VectorXd dual = Eigen::VectorXd::Zero(m);
    for (Eigen::Index j = 0; j < na; ++j) {
        const auto idx = static_cast<std::size_t>(j);
        const double yi = sol(c + j);
        switch (sides[idx]) {
        case Side::lower:
            if (yi > opts.kkt_tol)
                return false;
            dual(rows[idx]) = std::min(yi, 0.0);
            break;
        case Side::upper:
            if (yi < -opts.kkt_tol)
                return false;
            dual(rows[idx]) = std::max(yi, 0.0);
            break;
        case Side::both:
            dual(rows[idx]) = yi;
            break;
        }
    }
    const Eigen::VectorXd q = sol.head(c);
    const KktResiduals res = kkt_residuals(pr, q, dual);
    if (res.max() > opts.kkt_tol || res.primal > opts.feasibility_tol)
        return false;
    out.q_star = q;
    out.dual = dual;
    out.residuals = res;
    out.kkt_residual = res.max();
    out.objective = pr.objective(q);
    out.polished = true;
    out.status = OrpfStatus::optimal;
    return true;
}

} // namespace

OrpfSolution solve(const OrpfProblem& pr, const OrpfOptions& opts, const OrpfWarmStart* warm)
{
    const auto c = static_cast<Eigen::Index>(pr.num_generators());
    const OrpfConstraints k = constraints(pr);
    const auto m = k.a.rows();

    // Row equilibration and cost scaling; duals map back as y = D y_s / cost_scale.
    Eigen::VectorXd d(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double row = k.a.row(i).cwiseAbs().maxCoeff();
        d(i) = row > 0.0 ? 1.0 / row : 1.0;
    }
    const Eigen::MatrixXd p_orig = 2.0 * pr.r;
    const Eigen::VectorXd c_orig = 2.0 * pr.linear;
    const double cost_norm = std::max(p_orig.cwiseAbs().maxCoeff(), inf_norm(c_orig));
    const double cost_scale = cost_norm > 0.0 ? 1.0 / cost_norm : 1.0;
    const Eigen::MatrixXd p = cost_scale * p_orig;
    const Eigen::VectorXd q_lin = cost_scale * c_orig;
    const Eigen::MatrixXd a = d.asDiagonal() * k.a;
    const Eigen::VectorXd lo = d.cwiseProduct(k.lower);
    const Eigen::VectorXd hi = d.cwiseProduct(k.upper);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(c);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    if (warm) {
        if (warm->q.size() == c)
            x = warm->q;
        if (warm->dual.size() == m)
            y = warm->dual.cwiseQuotient(d) * cost_scale;
    }
    Eigen::VectorXd z = project(a * x, lo, hi);

    double rho = opts.rho;
    Eigen::VectorXd rho_vec(m);
    auto set_rho = [&](double value) {
        rho = std::clamp(value, kRhoMin, kRhoMax);
        for (Eigen::Index i = 0; i < m; ++i)
            rho_vec(i) = std::isfinite(lo(i)) || std::isfinite(hi(i)) ? rho : kRhoFree;
    };
    set_rho(rho);
    Eigen::LLT<Eigen::MatrixXd> factor;
    auto refactor = [&] {
        Eigen::MatrixXd kmat = p + a.transpose() * rho_vec.asDiagonal() * a;
        kmat.diagonal().array() += opts.sigma;
        factor.compute(kmat);
    };
    refactor();

    OrpfSolution out;
    out.q_star = x;
    out.dual = Eigen::VectorXd::Zero(m);
    double best_metric = kInf;
    double best_feasible = kInf;
    Eigen::VectorXd y_prev = y;

    auto unscaled_dual = [&](const Eigen::VectorXd& ys) -> Eigen::VectorXd {
        return d.cwiseProduct(ys) / cost_scale;
    };

    for (int iter = 1; iter <= opts.max_iter; ++iter) {
        y_prev = y;
        const Eigen::VectorXd rhs = opts.sigma * x - q_lin + a.transpose() * (rho_vec.cwiseProduct(z) - y);
        const Eigen::VectorXd x_tilde = factor.solve(rhs);
        const Eigen::VectorXd z_tilde = a * x_tilde;
        x = opts.alpha * x_tilde + (1.0 - opts.alpha) * x;
        const Eigen::VectorXd z_relax = opts.alpha * z_tilde + (1.0 - opts.alpha) * z;
        const Eigen::VectorXd z_next = project(z_relax + y.cwiseQuotient(rho_vec), lo, hi);
        y += rho_vec.cwiseProduct(z_relax - z_next);
        z = z_next;

        if (iter % opts.check_every != 0 && iter != opts.max_iter)
            continue;

        const Eigen::VectorXd ax = a * x;
        const Eigen::VectorXd px = p * x;
        const Eigen::VectorXd aty = a.transpose() * y;
        const double prim = inf_norm(ax - z);
        const double dual = inf_norm(px + q_lin + aty);
        const double prim_scale = std::max(inf_norm(ax), inf_norm(z));
        const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(q_lin)});

        const double obj = pr.objective(x);
        if (violation(k.a * x, k.lower, k.upper) <= opts.feasibility_tol)
            best_feasible = std::min(best_feasible, obj);
        if (opts.record_log)
            out.log.push_back({iter, obj, prim, dual, rho, best_feasible});

        const double metric = std::max(prim, dual);
        if (metric < best_metric) {
            best_metric = metric;
            out.q_star = x;
            out.dual = unscaled_dual(y);
        }
        out.iterations = iter;

        // Primal infeasibility certificate from the dual increment.
        const Eigen::VectorXd dy = y - y_prev;
        const double dy_norm = inf_norm(dy);
        if (dy_norm > 1e-14) {
            double support = 0.0;
            bool bounded = true;
            for (Eigen::Index i = 0; i < m; ++i) {
                if (dy(i) > 0.0) {
                    if (!std::isfinite(hi(i))) { bounded = false; break; }
                    support += hi(i) * dy(i);
                } else if (dy(i) < 0.0) {
                    if (!std::isfinite(lo(i))) { bounded = false; break; }
                    support += lo(i) * dy(i);
                }
            }
            if (bounded && inf_norm(a.transpose() * dy) <= opts.infeasibility_tol * dy_norm
                && support < -opts.infeasibility_tol * dy_norm) {
                out.status = OrpfStatus::infeasible;
                out.q_star = x;
                out.dual = unscaled_dual(dy);
                out.objective = pr.objective(x);
                out.residuals = kkt_residuals(pr, out.q_star, out.dual);
                out.kkt_residual = out.residuals.max();
                return out;
            }
        }

        const bool near = prim <= opts.admm_tol * (1.0 + prim_scale) && dual <= opts.admm_tol * (1.0 + dual_scale);
        if (near && opts.polish && polish(pr, k, z, y, lo, hi, opts, out)) {
            out.iterations = iter;
            return out;
        }
        if (near) {
            // Polishing failed or is disabled: accept the splitting iterate once it meets the KKT contract.
            const Eigen::VectorXd yq = unscaled_dual(y);
            const KktResiduals res = kkt_residuals(pr, x, yq);
            if (res.max() <= opts.kkt_tol && res.primal <= opts.feasibility_tol) {
                out.q_star = x;
                out.dual = yq;
                out.residuals = res;
                out.kkt_residual = res.max();
                out.objective = obj;
                out.status = OrpfStatus::optimal;
                return out;
            }
        }

        if (opts.adaptive_rho && prim_scale > 0.0 && dual_scale > 0.0 && dual > 0.0) {
            const double ratio = std::sqrt((prim / prim_scale) / (dual / dual_scale));
            const double next = std::clamp(rho * ratio, kRhoMin, kRhoMax);
            if (next > 5.0 * rho || next < 0.2 * rho) {
                set_rho(next);
                refactor();
            }
        }
    }

    out.status = OrpfStatus::max_iter;
    out.objective = pr.objective(out.q_star);
    out.residuals = kkt_residuals(pr, out.q_star, out.dual);
    out.kkt_residual = out.residuals.max();
    return out;
}

} // namespace voltvar
