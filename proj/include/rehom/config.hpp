#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "rehom/errors.hpp"

// Plain `key = value` configuration files: one pair per line, '#' starts a
// comment, whitespace is trimmed, keys are dotted paths ("env.eta",
// "schedule.L0").  Unknown keys are tolerated by the loader and checked by
// the consumers that care.

namespace rehom {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

bool cfg_has(const ConfigMap& cfg, const std::string& key);

double cfg_double(const ConfigMap& cfg, const std::string& key, double fallback);
std::int64_t cfg_int(const ConfigMap& cfg, const std::string& key, std::int64_t fallback);
std::uint64_t cfg_u64(const ConfigMap& cfg, const std::string& key, std::uint64_t fallback);
bool cfg_bool(const ConfigMap& cfg, const std::string& key, bool fallback);
std::string cfg_string(const ConfigMap& cfg, const std::string& key,
                       const std::string& fallback);

}  // namespace rehom
