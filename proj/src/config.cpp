#include "rehom/config.hpp"

#include <fstream>
#include <sstream>

namespace rehom {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw InvalidParams("config line " + std::to_string(lineno) +
                                ": expected 'key = value', got '" + t + "'");
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw InvalidParams("config line " + std::to_string(lineno) + ": empty key");
        cfg[key] = val;
    }
    return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParams("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

bool cfg_has(const ConfigMap& cfg, const std::string& key) { return cfg.count(key) > 0; }

double cfg_double(const ConfigMap& cfg, const std::string& key, double fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw InvalidParams("config key '" + key + "': cannot parse '" + it->second +
                            "' as a real number");
    }
}

std::int64_t cfg_int(const ConfigMap& cfg, const std::string& key, std::int64_t fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        size_t pos = 0;
        const std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw InvalidParams("config key '" + key + "': cannot parse '" + it->second +
                            "' as an integer");
    }
}

std::uint64_t cfg_u64(const ConfigMap& cfg, const std::string& key, std::uint64_t fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    try {
        size_t pos = 0;
        const std::uint64_t v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw InvalidParams("config key '" + key + "': cannot parse '" + it->second +
                            "' as an unsigned integer");
    }
}

bool cfg_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
    const auto it = cfg.find(key);
    if (it == cfg.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidParams("config key '" + key + "': cannot parse '" + v + "' as a boolean");
}

std::string cfg_string(const ConfigMap& cfg, const std::string& key,
                       const std::string& fallback) {
    const auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

}  // namespace rehom
