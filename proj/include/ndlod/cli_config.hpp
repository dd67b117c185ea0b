// Line-oriented "key = value" study configs and their round-trip
// serialization.
#pragma once

#include "ndlod/experiments.hpp"

#include <string>

namespace ndlod {

struct ConfigError : std::runtime_error {
    ConfigError(const std::string& what, int line_no)
        : std::runtime_error("config line " + std::to_string(line_no) + ": " + what), line(line_no)
    {
    }
    int line = 0;
};

/// Keys: field, rhs, coarse_n, fine_n, ell, epsilon, compare, out.
/// Comments start with '#'; unknown keys are errors. The parsed spec is
/// validated before it is returned.
StudySpec parse_config_text(const std::string& text);
StudySpec parse_config(const std::string& path);

std::string serialize_config(const StudySpec& spec);

/// Accepts "p/q", "2^-k" and plain decimals.
double parse_epsilon(const std::string& text);

std::vector<int> parse_int_list(const std::string& text);

} // namespace ndlod
