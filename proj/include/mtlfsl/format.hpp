#ifndef MTLFSL_FORMAT_HPP
#define MTLFSL_FORMAT_HPP

#include <optional>
#include <string>
#include <string_view>

namespace mtlfsl {

/// Shortest decimal that parses back to exactly `value`.
std::string format_double(double value);

/// Full-string parse; nullopt on anything that is not a finite-or-infinite number.
std::optional<double> parse_double(std::string_view text);

}  // namespace mtlfsl

#endif
