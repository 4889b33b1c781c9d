#pragma once

#include <string>

#include "gh/numerics.hpp"

namespace gh {

/// Shortest decimal form that parses back to the same double.
std::string format_real(Real value);
Real parse_real(const std::string& text);

}  // namespace gh
