#pragma once

#include <string>

namespace smoothcert {

/// Shortest decimal text that parses back to exactly `value`. NaN and infinities print as
/// "nan", "inf" and "-inf".
std::string format_double(double value);

}  // namespace smoothcert
