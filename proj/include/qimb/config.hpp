#pragma once

// Flat experiment configuration: `[section]` headers and `key = value`
// lines, '#' comments. Keys are addressed as "section.key". The canonical
// form (sorted key=value lines) is what gets hashed for provenance.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qimb/error.hpp"
#include "qimb/text.hpp"

namespace qimb {

class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>") {
        Config c;
        std::string line, section;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            std::string_view body = trim(std::string_view(line).substr(0, hash));
            if (body.empty()) continue;
            if (body.front() == '[') {
                if (body.back() != ']')
                    throw UsageError(source + ":" + std::to_string(line_no) + ": malformed section header");
                section = std::string(trim(body.substr(1, body.size() - 2)));
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string_view::npos)
                throw UsageError(source + ":" + std::to_string(line_no) + ": expected key = value");
            const std::string key(trim(body.substr(0, eq)));
            if (key.empty()) throw UsageError(source + ":" + std::to_string(line_no) + ": empty key");
            c.values_[section.empty() ? key : section + "." + key] = std::string(trim(body.substr(eq + 1)));
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw UsageError("cannot open config " + path);
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Applies a "section.key=value" override.
    void apply_override(const std::string& kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("override '" + kv + "' is not key=value");
        set(std::string(trim(std::string_view(kv).substr(0, eq))), std::string(trim(std::string_view(kv).substr(eq + 1))));
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("missing required config key '" + key + "'");
        used_.insert(key);
        return it->second;
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    double get_double(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        if (!has(key) && fallback) return *fallback;
        const std::string raw = get(key);
        const auto v = parse_double(raw);
        if (!v) throw UsageError("config key '" + key + "' is not a number: '" + raw + "'");
        return *v;
    }

    std::uint64_t get_uint(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) const {
        if (!has(key) && fallback) return *fallback;
        const std::string raw = get(key);
        const auto v = parse_int<std::uint64_t>(raw);
        if (!v) throw UsageError("config key '" + key + "' is not a non-negative integer: '" + raw + "'");
        return *v;
    }

    bool get_bool(const std::string& key, std::optional<bool> fallback = std::nullopt) const {
        if (!has(key) && fallback) return *fallback;
        const std::string raw = get(key);
        if (raw == "true" || raw == "yes" || raw == "1" || raw == "on") return true;
        if (raw == "false" || raw == "no" || raw == "0" || raw == "off") return false;
        throw UsageError("config key '" + key + "' is not a boolean: '" + raw + "'");
    }

    std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback = {}) const {
        if (!has(key)) return fallback;
        std::vector<std::string> out;
        const std::string raw = get(key);
        if (trim(raw).empty()) return out;
        for (auto& item : split(raw, ',')) out.emplace_back(trim(item));
        return out;
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        for (const auto& s : get_list(key)) {
            const auto v = parse_double(s);
            if (!v) throw UsageError("config key '" + key + "' has a non-numeric entry '" + s + "'");
            out.push_back(*v);
        }
        return out;
    }

    std::vector<std::uint64_t> get_uints(const std::string& key, std::vector<std::uint64_t> fallback = {}) const {
        if (!has(key)) return fallback;
        std::vector<std::uint64_t> out;
        for (const auto& s : get_list(key)) {
            const auto v = parse_int<std::uint64_t>(s);
            if (!v) throw UsageError("config key '" + key + "' has a non-integer entry '" + s + "'");
            out.push_back(*v);
        }
        return out;
    }

    /// Keys present but never read; callers reject these as typos.
    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) out.push_back(k);
        return out;
    }

    std::string canonical() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
        return out;
    }

    std::string hash() const { return hex64(fnv1a64(canonical())); }

    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace qimb
