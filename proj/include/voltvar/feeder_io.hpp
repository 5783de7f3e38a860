#pragma once

#include <string>

#include "voltvar/feeder.hpp"

namespace voltvar {

inline constexpr const char* kLinesHeader = "from,to,r_pu,x_pu";
inline constexpr const char* kBusesHeader = "id,kind,p_pu,q_pu,qmin_pu,qmax_pu,vmin_pu,vmax_pu";

/// Parses the two-table feeder format. Errors carry file name and line number.
FeederModel parse_feeder(const std::string& lines_csv, const std::string& buses_csv,
                         const std::string& lines_name = "feeder.csv",
                         const std::string& buses_name = "buses.csv");
FeederModel read_feeder(const std::string& lines_path, const std::string& buses_path);

std::string lines_to_csv(const FeederModel& model);
std::string buses_to_csv(const FeederModel& model);

const char* to_string(BusKind kind);

} // namespace voltvar
