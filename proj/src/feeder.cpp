#include "voltvar/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "voltvar/errors.hpp"

namespace voltvar {

namespace {

std::string bus_label(int id) { return "bus " + std::to_string(id); }

} // namespace

FeederModel::FeederModel(std::vector<Bus> buses, std::vector<Line> lines)
    : buses_(std::move(buses)), lines_(std::move(lines))
{
    std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    if (buses_.size() < 2)
        throw Error(ErrorKind::input, "feeder needs a substation and at least one other bus");

    for (std::size_t i = 0; i < buses_.size(); ++i) {
        if (buses_[i].id != static_cast<int>(i))
            throw Error(ErrorKind::input, "bus ids must be 0..N without gaps or duplicates (saw id "
                                              + std::to_string(buses_[i].id) + " at position "
                                              + std::to_string(i) + ")");
    }

    int substations = 0;
    for (const Bus& b : buses_) {
        if (b.kind == BusKind::substation) {
            ++substations;
            if (b.id != 0)
                throw Error(ErrorKind::input, "substation must be bus 0, found at " + bus_label(b.id));
            continue;
        }
        if (!std::isfinite(b.p) || !std::isfinite(b.q))
            throw Error(ErrorKind::input, bus_label(b.id) + " has non-finite injection");
        if (!(b.v_min < b.v_max))
            throw Error(ErrorKind::input, bus_label(b.id) + " has v_min >= v_max");
        if (b.kind == BusKind::generator) {
            if (!std::isfinite(b.q_min) || !std::isfinite(b.q_max) || b.q_min > b.q_max)
                throw Error(ErrorKind::input, bus_label(b.id) + " has an empty reactive box");
            generator_buses_.push_back(b.id);
        } else {
            load_buses_.push_back(b.id);
        }
    }
    if (substations != 1)
        throw Error(ErrorKind::input, "feeder must have exactly one substation, found "
                                          + std::to_string(substations));

    const std::size_t n_bus = buses_.size();
    if (lines_.size() != n_bus - 1)
        throw Error(ErrorKind::topology, "radial feeder with " + std::to_string(n_bus)
                                             + " buses needs " + std::to_string(n_bus - 1)
                                             + " lines, got " + std::to_string(lines_.size()));

    std::vector<std::vector<std::size_t>> incident(n_bus);
    for (std::size_t k = 0; k < lines_.size(); ++k) {
        const Line& l = lines_[k];
        if (l.from < 0 || l.to < 0 || static_cast<std::size_t>(l.from) >= n_bus
            || static_cast<std::size_t>(l.to) >= n_bus)
            throw Error(ErrorKind::topology, "line " + std::to_string(k) + " references an unknown bus");
        if (l.from == l.to)
            throw Error(ErrorKind::topology, "line " + std::to_string(k) + " is a self-loop at "
                                                 + bus_label(l.from));
        if (l.r == 0.0 && l.x == 0.0)
            throw Error(ErrorKind::singular_line, "line " + std::to_string(l.from) + "-"
                                                      + std::to_string(l.to) + " has zero impedance");
        if (!(l.r >= 0.0) || !(l.x > 0.0) || !std::isfinite(l.r) || !std::isfinite(l.x))
            throw Error(ErrorKind::input, "line " + std::to_string(l.from) + "-" + std::to_string(l.to)
                                              + " needs r >= 0 and x > 0");
        incident[static_cast<std::size_t>(l.from)].push_back(k);
        incident[static_cast<std::size_t>(l.to)].push_back(k);
    }

    parent_.assign(n_bus, -2);
    parent_line_.assign(n_bus, 0);
    parent_[0] = -1;
    std::deque<int> frontier{0};
    while (!frontier.empty()) {
        const int m = frontier.front();
        frontier.pop_front();
        bfs_order_.push_back(m);
        for (std::size_t k : incident[static_cast<std::size_t>(m)]) {
            const Line& l = lines_[k];
            const int n = l.from == m ? l.to : l.from;
            if (n == parent_[static_cast<std::size_t>(m)] && parent_line_[static_cast<std::size_t>(m)] == k)
                continue;
            if (parent_[static_cast<std::size_t>(n)] != -2)
                throw Error(ErrorKind::topology, "feeder contains a loop through " + bus_label(n));
            parent_[static_cast<std::size_t>(n)] = m;
            parent_line_[static_cast<std::size_t>(n)] = k;
            frontier.push_back(n);
        }
    }
    if (bfs_order_.size() != n_bus) {
        for (std::size_t i = 0; i < n_bus; ++i)
            if (parent_[i] == -2)
                throw Error(ErrorKind::topology, "feeder is disconnected: " + bus_label(static_cast<int>(i))
                                                     + " is unreachable from the substation");
    }
    if (generator_buses_.empty())
        throw Error(ErrorKind::input, "feeder has no generator buses");
}

OperatingPoint FeederModel::nominal_operating_point() const
{
    OperatingPoint op;
    op.p.resize(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 1; i < buses_.size(); ++i)
        op.p(static_cast<Eigen::Index>(i - 1)) = buses_[i].p;
    op.q_load.resize(static_cast<Eigen::Index>(load_buses_.size()));
    for (std::size_t j = 0; j < load_buses_.size(); ++j)
        op.q_load(static_cast<Eigen::Index>(j)) = bus(load_buses_[j]).q;
    return op;
}

namespace {

template <typename Field>
Eigen::VectorXd gather(const FeederModel& m, const std::vector<int>& ids, Field field)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j)
        out(static_cast<Eigen::Index>(j)) = field(m.bus(ids[j]));
    return out;
}

std::vector<int> non_substation(const FeederModel& m)
{
    std::vector<int> ids(m.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        ids[i] = static_cast<int>(i + 1);
    return ids;
}

} // namespace

Eigen::VectorXd FeederModel::q_min() const
{
    return gather(*this, generator_buses_, [](const Bus& b) { return b.q_min; });
}

Eigen::VectorXd FeederModel::q_max() const
{
    return gather(*this, generator_buses_, [](const Bus& b) { return b.q_max; });
}

Eigen::VectorXd FeederModel::q_initial() const
{
    return gather(*this, generator_buses_, [](const Bus& b) { return b.q; });
}

Eigen::VectorXd FeederModel::v_min() const
{
    return gather(*this, non_substation(*this), [](const Bus& b) { return b.v_min; });
}

Eigen::VectorXd FeederModel::v_max() const
{
    return gather(*this, non_substation(*this), [](const Bus& b) { return b.v_max; });
}

Eigen::MatrixXcd build_admittance(const FeederModel& model)
{
    const auto n = static_cast<Eigen::Index>(model.buses().size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const Line& l : model.lines()) {
        const std::complex<double> y_line = 1.0 / l.impedance();
        y(l.from, l.to) -= y_line;
        y(l.to, l.from) -= y_line;
        y(l.from, l.from) += y_line;
        y(l.to, l.to) += y_line;
    }
    return y;
}

} // namespace voltvar
