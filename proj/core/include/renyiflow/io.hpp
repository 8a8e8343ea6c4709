#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace renyiflow {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

/// One CSV row, '.' decimal, no trailing separator.
std::string csv_row(std::span<const double> values);

void write_csv_line(std::ostream& os, std::span<const std::string> cells);

}  // namespace renyiflow
