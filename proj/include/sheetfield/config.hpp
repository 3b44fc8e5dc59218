#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sheetfield {

/// Configuration problem: the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Flat key-value configuration with one level of sections:
///   [experiment]
///   kind = girsanov
///   seed0 = 1
/// Values are kept verbatim as strings; typed getters parse on access. The
/// canonical serialization (sorted) is what gets hashed and embedded in
/// reports, so whitespace and comment changes never move a config hash.
class ExperimentConfig {
  public:
    static ExperimentConfig parse(const std::string& text) {
        ExperimentConfig cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string trimmed = trim(strip_comment(line));
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty())
                    throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            std::string target = section;
            // the canonical form writes "section.key = value" without headers
            if (const auto dot = key.find('.'); dot != std::string::npos && target.empty()) {
                target = key.substr(0, dot);
                key = key.substr(dot + 1);
            }
            if (target.empty() || key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": key outside a section");
            cfg.sections_[target][key] = value;
        }
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        if (s == sections_.end() || !s->second.count(key))
            throw ConfigError("missing config key " + section + "." + key);
        return s->second.at(key);
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& dflt) const {
        return has(section, key) ? get(section, key) : dflt;
    }

    double get_num(const std::string& section, const std::string& key) const {
        return parse_num(section, key, get(section, key));
    }

    double get_num(const std::string& section, const std::string& key, double dflt) const {
        return has(section, key) ? get_num(section, key) : dflt;
    }

    long long get_int(const std::string& section, const std::string& key, long long dflt) const {
        if (!has(section, key)) return dflt;
        const double v = get_num(section, key);
        const long long n = static_cast<long long>(v);
        if (static_cast<double>(n) != v)
            throw ConfigError("config key " + section + "." + key + " must be an integer");
        return n;
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t dflt) const {
        if (!has(section, key)) return dflt;
        const std::string v = get(section, key);
        try {
            std::size_t used = 0;
            const std::uint64_t n = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " must be an unsigned integer");
        }
    }

    /// Numeric parameters of one section (used for drift parameter maps);
    /// keys listed in `skip` are ignored, anything else must parse.
    std::map<std::string, double> numeric_section(const std::string& section,
                                                  const std::vector<std::string>& skip = {}) const {
        std::map<std::string, double> out;
        const auto s = sections_.find(section);
        if (s == sections_.end()) return out;
        for (const auto& [k, v] : s->second) {
            bool skipped = false;
            for (const auto& sk : skip) skipped |= (sk == k);
            if (!skipped) out[k] = parse_num(section, k, v);
        }
        return out;
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }

    /// Sorted "section.key = value" lines; the hash input and the embedded
    /// form inside reports.
    std::string canonical() const {
        std::string out;
        for (const auto& [sec, kv] : sections_)
            for (const auto& [k, v] : kv) out += sec + "." + k + " = " + v + "\n";
        return out;
    }

    /// FNV-1a over the canonical text.
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : canonical()) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    std::string hash_hex() const {
        static const char* digits = "0123456789abcdef";
        std::uint64_t h = hash();
        std::string out(16, '0');
        for (int i = 15; i >= 0; --i) {
            out[i] = digits[h & 0xF];
            h >>= 4;
        }
        return out;
    }

  private:
    static std::string strip_comment(const std::string& line) {
        const auto pos = line.find('#');
        return pos == std::string::npos ? line : line.substr(0, pos);
    }

    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static double parse_num(const std::string& section, const std::string& key,
                            const std::string& v) {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + section + "." + key + " is not a number: " + v);
        }
    }

    std::map<std::string, std::map<std::string, std::string>> sections_;
};

}  // namespace sheetfield
