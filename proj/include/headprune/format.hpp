#pragma once

#include <string>

namespace headprune {

// Shortest-stable text form used by every file writer: 17 significant digits.
std::string format_real(double value);

}  // namespace headprune
