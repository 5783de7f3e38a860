#include "voltvar/sensitivity.hpp"

#include <cmath>

#include <json.hpp>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

namespace {

constexpr double kPdRelativeTolerance = 1e-10;

Eigen::MatrixXd take(const Eigen::MatrixXd& m, const std::vector<int>& rows, const std::vector<int>& cols)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i] - 1, cols[j] - 1);
    return out;
}

/// Smallest eigenvalue after checking positive definiteness relative to the largest.
double require_pd(const Eigen::MatrixXd& m, const char* name, double* largest = nullptr)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || !(lo > kPdRelativeTolerance * hi))
        throw Error(ErrorKind::model_invalid, std::string(name) + " is not positive definite (smallest eigenvalue "
                                                  + format_real(lo) + ", largest " + format_real(hi) + ")");
    if (largest)
        *largest = hi;
    return lo;
}

} // namespace

std::vector<int> SensitivityModel::partition_buses() const
{
    std::vector<int> ids = generator_buses;
    ids.insert(ids.end(), load_buses.begin(), load_buses.end());
    return ids;
}

Eigen::VectorXd to_partition_order(const SensitivityModel& sens, const Eigen::VectorXd& bus_order)
{
    if (static_cast<std::size_t>(bus_order.size()) != sens.size())
        throw Error(ErrorKind::dimension, "expected a vector over " + std::to_string(sens.size()) + " buses, got "
                                              + std::to_string(bus_order.size()));
    const auto ids = sens.partition_buses();
    Eigen::VectorXd out(bus_order.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        out(static_cast<Eigen::Index>(i)) = bus_order(ids[i] - 1);
    return out;
}

SensitivityModel build_sensitivity(const FeederModel& model)
{
    const Eigen::MatrixXcd y_full = build_admittance(model);
    const auto n = static_cast<Eigen::Index>(model.size());
    const Eigen::MatrixXcd y = y_full.bottomRightCorner(n, n);

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);
    // Partial pivoting does not report singularity; check the pivots directly.
    const Eigen::MatrixXcd& packed = lu.matrixLU();
    double max_pivot = 0.0, min_pivot = INFINITY;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = std::abs(packed(i, i));
        max_pivot = std::max(max_pivot, a);
        min_pivot = std::min(min_pivot, a);
    }
    if (!(min_pivot > 1e-14 * max_pivot))
        throw Error(ErrorKind::numerical_rank, "reduced admittance matrix is numerically singular (pivot ratio "
                                                   + format_real(min_pivot / max_pivot) + ")");
    const Eigen::MatrixXcd z = lu.inverse();

    SensitivityModel s;
    s.generator_buses = model.generator_buses();
    s.load_buses = model.load_buses();
    // Symmetrize away round-off; the exact inverse of a symmetric matrix is symmetric.
    s.r_tilde = 0.5 * (z.real() + z.real().transpose());
    s.x_tilde = 0.5 * (z.imag() + z.imag().transpose());

    const auto& g = s.generator_buses;
    const auto& l = s.load_buses;
    s.r = take(s.r_tilde, g, g);
    s.x = take(s.x_tilde, g, g);
    s.r_l = take(s.r_tilde, g, l);
    s.x_l = take(s.x_tilde, g, l);
    s.r_ll = take(s.r_tilde, l, l);
    s.x_ll = take(s.x_tilde, l, l);

    s.x_min_eigenvalue = require_pd(s.x, "X", &s.x_norm);
    s.r_min_eigenvalue = require_pd(s.r, "R");

    s.operating_point = model.nominal_operating_point();
    s.v_hat = offset_voltage(s, s.operating_point);
    return s;
}

Eigen::VectorXd offset_voltage(const SensitivityModel& sens, const OperatingPoint& op)
{
    const auto n = static_cast<Eigen::Index>(sens.size());
    const auto c = static_cast<Eigen::Index>(sens.num_generators());
    if (op.p.size() != n || op.q_load.size() != n - c)
        throw Error(ErrorKind::dimension, "operating point must have " + std::to_string(n) + " active and "
                                              + std::to_string(n - c) + " load reactive injections");
    Eigen::VectorXd v(n);
    v.head(c) = sens.x_l * op.q_load;
    v.tail(n - c) = sens.x_ll * op.q_load;
    v += to_partition_order(sens, sens.r_tilde * op.p);
    v.array() += 1.0;
    return v;
}

SensitivityModel with_operating_point(SensitivityModel sens, const OperatingPoint& op)
{
    sens.v_hat = offset_voltage(sens, op);
    sens.operating_point = op;
    return sens;
}

Eigen::VectorXd generator_voltage(const SensitivityModel& sens, const Eigen::VectorXd& q_c)
{
    if (q_c.size() != sens.x.rows())
        throw Error(ErrorKind::dimension, "q_C has " + std::to_string(q_c.size()) + " entries, expected "
                                              + std::to_string(sens.x.rows()));
    Eigen::VectorXd v = sens.x * q_c;
    v += sens.v_hat.head(sens.x.rows());
    return v;
}

Eigen::VectorXd linear_voltage(const SensitivityModel& sens, const Eigen::VectorXd& q_c)
{
    const auto c = sens.x.rows();
    Eigen::VectorXd v(sens.v_hat.size());
    v.head(c) = generator_voltage(sens, q_c);
    v.tail(v.size() - c) = sens.x_l.transpose() * q_c + sens.v_hat.tail(v.size() - c);
    return v;
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v)
{
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw Error(ErrorKind::input, std::string("sensitivity JSON: '") + name + "' has wrong row count");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw Error(ErrorKind::input, std::string("sensitivity JSON: '") + name + "' has wrong column count");
        for (Eigen::Index k = 0; k < cols; ++k)
            m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

Eigen::VectorXd vector_from(const nlohmann::json& j, Eigen::Index size, const char* name)
{
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
        throw Error(ErrorKind::input, std::string("sensitivity JSON: '") + name + "' has wrong length");
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i)
        v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

} // namespace

std::string sensitivity_to_json(const SensitivityModel& s)
{
    nlohmann::ordered_json j;
    j["generator_buses"] = s.generator_buses;
    j["load_buses"] = s.load_buses;
    j["r_tilde"] = matrix_json(s.r_tilde);
    j["x_tilde"] = matrix_json(s.x_tilde);
    j["X"] = matrix_json(s.x);
    j["R"] = matrix_json(s.r);
    j["X_L"] = matrix_json(s.x_l);
    j["R_L"] = matrix_json(s.r_l);
    j["X_LL"] = matrix_json(s.x_ll);
    j["R_LL"] = matrix_json(s.r_ll);
    j["p"] = vector_json(s.operating_point.p);
    j["q_load"] = vector_json(s.operating_point.q_load);
    j["v_hat"] = vector_json(s.v_hat);
    j["x_norm"] = s.x_norm;
    j["x_min_eigenvalue"] = s.x_min_eigenvalue;
    j["r_min_eigenvalue"] = s.r_min_eigenvalue;
    return j.dump(2) + "\n";
}

SensitivityModel sensitivity_from_json(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        SensitivityModel s;
        s.generator_buses = j.at("generator_buses").get<std::vector<int>>();
        s.load_buses = j.at("load_buses").get<std::vector<int>>();
        const auto c = static_cast<Eigen::Index>(s.generator_buses.size());
        const auto l = static_cast<Eigen::Index>(s.load_buses.size());
        const auto n = c + l;
        s.r_tilde = matrix_from(j.at("r_tilde"), n, n, "r_tilde");
        s.x_tilde = matrix_from(j.at("x_tilde"), n, n, "x_tilde");
        s.x = matrix_from(j.at("X"), c, c, "X");
        s.r = matrix_from(j.at("R"), c, c, "R");
        s.x_l = matrix_from(j.at("X_L"), c, l, "X_L");
        s.r_l = matrix_from(j.at("R_L"), c, l, "R_L");
        s.x_ll = matrix_from(j.at("X_LL"), l, l, "X_LL");
        s.r_ll = matrix_from(j.at("R_LL"), l, l, "R_LL");
        s.operating_point.p = vector_from(j.at("p"), n, "p");
        s.operating_point.q_load = vector_from(j.at("q_load"), l, "q_load");
        s.v_hat = vector_from(j.at("v_hat"), n, "v_hat");
        s.x_norm = j.at("x_norm").get<double>();
        s.x_min_eigenvalue = j.at("x_min_eigenvalue").get<double>();
        s.r_min_eigenvalue = j.at("r_min_eigenvalue").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::input, std::string("sensitivity JSON: ") + e.what());
    }
}

} // namespace voltvar
