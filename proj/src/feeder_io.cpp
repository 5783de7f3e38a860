#include "voltvar/feeder_io.hpp"

#include <sstream>
#include <vector>

#include "voltvar/errors.hpp"
#include "voltvar/format.hpp"

namespace voltvar {

namespace {

void check_header(const std::string& got, const char* expected, const std::string& file)
{
    const auto have = split_csv(got);
    const auto want = split_csv(expected);
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (i >= have.size())
            throw Error(ErrorKind::input, file + ":1: missing column '" + want[i] + "'");
        if (have[i] != want[i])
            throw Error(ErrorKind::input, file + ":1: expected column '" + want[i] + "' at position "
                                              + std::to_string(i + 1) + ", found '" + have[i] + "'");
    }
    if (have.size() > want.size())
        throw Error(ErrorKind::input, file + ":1: unexpected column '" + have[want.size()] + "'");
}

/// Non-empty data records with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::vector<std::string>>> records(const std::string& text,
                                                                      const char* header,
                                                                      const std::string& file)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::input, file + ": empty file");
    check_header(line, header, file);
    const std::size_t width = split_csv(header).size();

    std::vector<std::pair<std::size_t, std::vector<std::string>>> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto fields = split_csv(line);
        if (fields.size() != width)
            throw Error(ErrorKind::input, file + ":" + std::to_string(lineno) + ": expected "
                                              + std::to_string(width) + " fields, got "
                                              + std::to_string(fields.size()));
        out.emplace_back(lineno, std::move(fields));
    }
    return out;
}

BusKind parse_kind(const std::string& s, const std::string& ctx)
{
    if (s == "substation")
        return BusKind::substation;
    if (s == "generator")
        return BusKind::generator;
    if (s == "load")
        return BusKind::load;
    throw Error(ErrorKind::input, ctx + ": unknown bus kind '" + s + "'");
}

} // namespace

const char* to_string(BusKind kind)
{
    switch (kind) {
    case BusKind::substation:
        return "substation";
    case BusKind::generator:
        return "generator";
    case BusKind::load:
        return "load";
    }
    return "load";
}

FeederModel parse_feeder(const std::string& lines_csv, const std::string& buses_csv,
                         const std::string& lines_name, const std::string& buses_name)
{
    std::vector<Line> lines;
    for (const auto& [lineno, f] : records(lines_csv, kLinesHeader, lines_name)) {
        const std::string ctx = lines_name + ":" + std::to_string(lineno);
        lines.push_back({parse_int(f[0], ctx), parse_int(f[1], ctx), parse_real(f[2], ctx),
                         parse_real(f[3], ctx)});
    }

    std::vector<Bus> buses;
    for (const auto& [lineno, f] : records(buses_csv, kBusesHeader, buses_name)) {
        const std::string ctx = buses_name + ":" + std::to_string(lineno);
        Bus b;
        b.id = parse_int(f[0], ctx);
        b.kind = parse_kind(f[1], ctx);
        b.p = f[2].empty() ? 0.0 : parse_real(f[2], ctx);
        b.q = f[3].empty() ? 0.0 : parse_real(f[3], ctx);
        if (b.kind == BusKind::generator) {
            b.q_min = parse_real(f[4], ctx + " (qmin_pu)");
            b.q_max = parse_real(f[5], ctx + " (qmax_pu)");
        } else if (!f[4].empty() || !f[5].empty()) {
            throw Error(ErrorKind::input, ctx + ": qmin_pu/qmax_pu must be blank for non-generators");
        }
        if (b.kind != BusKind::substation) {
            b.v_min = parse_real(f[6], ctx + " (vmin_pu)");
            b.v_max = parse_real(f[7], ctx + " (vmax_pu)");
        }
        buses.push_back(b);
    }
    return FeederModel(std::move(buses), std::move(lines));
}

FeederModel read_feeder(const std::string& lines_path, const std::string& buses_path)
{
    return parse_feeder(read_text_file(lines_path), read_text_file(buses_path), lines_path, buses_path);
}

std::string lines_to_csv(const FeederModel& model)
{
    std::string out = std::string(kLinesHeader) + "\n";
    for (const Line& l : model.lines())
        out += std::to_string(l.from) + "," + std::to_string(l.to) + "," + format_real(l.r) + ","
             + format_real(l.x) + "\n";
    return out;
}

std::string buses_to_csv(const FeederModel& model)
{
    std::string out = std::string(kBusesHeader) + "\n";
    for (const Bus& b : model.buses()) {
        out += std::to_string(b.id) + "," + to_string(b.kind) + "," + format_real(b.p) + ","
             + format_real(b.q) + ",";
        if (b.kind == BusKind::generator)
            out += format_real(b.q_min) + "," + format_real(b.q_max);
        else
            out += ",";
        if (b.kind == BusKind::substation)
            out += ",,\n";
        else
            out += "," + format_real(b.v_min) + "," + format_real(b.v_max) + "\n";
    }
    return out;
}

} // namespace voltvar
