#pragma once

// Flat typed configuration with sections.
//
//   # comment
//   [section]
//   key = value        # trailing comments allowed
//
// Every key is addressed as section.key and must be declared in a Schema,
// which fixes its type and default. Values are parsed by type: integers,
// reals, true/false, strings (optionally double-quoted) and comma
// separated real lists.

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace e1::cli {

/// Invalid configuration or command line; maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ValueType { integer, real, boolean, string, real_list };

inline const char* type_name(ValueType t) {
    switch (t) {
        case ValueType::integer: return "integer";
        case ValueType::real: return "real";
        case ValueType::boolean: return "boolean";
        case ValueType::string: return "string";
        case ValueType::real_list: return "real list";
    }
    return "?";
}

struct KeySpec {
    ValueType type = ValueType::string;
    std::string default_text;
    std::string help;
};

namespace detail {

inline std::string strip(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Removes a trailing comment that is not inside double quotes.
inline std::string drop_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

inline bool parse_integer(const std::string& s, long long& out) {
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stoll(s, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == s.size();
}

inline bool parse_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t used = 0;
    try {
        out = std::stod(s, &used);
    } catch (const std::exception&) {
        return false;
    }
    return used == s.size();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep)) out.push_back(strip(item));
    return out;
}

} // namespace detail

class Schema {
public:
    Schema& add(const std::string& key, ValueType type, std::string default_text, std::string help = {}) {
        if (key.find('.') == std::string::npos) throw std::logic_error("Schema: key '" + key + "' needs a section");
        m_keys[key] = {type, std::move(default_text), std::move(help)};
        return *this;
    }

    const KeySpec* find(const std::string& key) const {
        auto it = m_keys.find(key);
        return it == m_keys.end() ? nullptr : &it->second;
    }

    const std::map<std::string, KeySpec>& keys() const noexcept { return m_keys; }

private:
    std::map<std::string, KeySpec> m_keys;
};

class Config {
public:
    explicit Config(const Schema& schema) : m_schema(&schema) {
        for (const auto& [key, spec] : schema.keys()) m_values[key] = spec.default_text;
    }

    /// Reads config text; `source` names it in error messages.
    void merge_text(const std::string& text, const std::string& source = "config") {
        std::istringstream in(text);
        std::string raw, section;
        for (int line_no = 1; std::getline(in, raw); ++line_no) {
            const std::string line = detail::strip(detail::drop_comment(raw));
            if (line.empty()) continue;
            const std::string where = source + ":" + std::to_string(line_no);
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) throw ConfigError(where + ": malformed section header");
                section = detail::strip(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
            const std::string key = detail::strip(line.substr(0, eq));
            if (section.empty()) throw ConfigError(where + ": key '" + key + "' outside any section");
            set(section + "." + key, detail::strip(line.substr(eq + 1)), where);
        }
    }

    /// Applies a dotted-key override "section.key=value".
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
        set(detail::strip(assignment.substr(0, eq)), detail::strip(assignment.substr(eq + 1)), "override");
    }

    void set(const std::string& key, std::string value, const std::string& where = "set") {
        const KeySpec* spec = m_schema->find(key);
        if (!spec) throw ConfigError(where + ": unknown key '" + key + "'");
        if (spec->type == ValueType::string && value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        check(key, *spec, value, where);
        m_values[key] = value;
    }

    long long get_int(const std::string& key) const {
        long long v = 0;
        detail::parse_integer(text(key, ValueType::integer), v);
        return v;
    }

    std::size_t get_count(const std::string& key) const {
        const long long v = get_int(key);
        if (v < 0) throw ConfigError(key + " must be non-negative, got " + std::to_string(v));
        return static_cast<std::size_t>(v);
    }

    std::uint64_t get_seed(const std::string& key) const { return static_cast<std::uint64_t>(get_count(key)); }

    double get_real(const std::string& key) const {
        double v = 0.0;
        detail::parse_real(text(key, ValueType::real), v);
        return v;
    }

    bool get_bool(const std::string& key) const { return text(key, ValueType::boolean) == "true"; }

    std::string get_string(const std::string& key) const { return text(key, ValueType::string); }

    std::vector<double> get_reals(const std::string& key) const {
        std::vector<double> out;
        const std::string t = text(key, ValueType::real_list);
        if (t.empty()) return out;
        for (const auto& item : detail::split(t, ',')) {
            double v = 0.0;
            detail::parse_real(item, v);
            out.push_back(v);
        }
        return out;
    }

    /// Every key with its current value, grouped by section.
    std::string resolved() const {
        std::ostringstream out;
        std::string section;
        for (const auto& [key, value] : m_values) {
            const auto dot = key.find('.');
            const std::string s = key.substr(0, dot);
            if (s != section) {
                out << (section.empty() ? "" : "\n") << '[' << s << "]\n";
                section = s;
            }
            const bool quote = m_schema->find(key)->type == ValueType::string;
            out << key.substr(dot + 1) << " = " << (quote ? "\"" + value + "\"" : value) << '\n';
        }
        return out.str();
    }

private:
    const std::string& text(const std::string& key, ValueType expected) const {
        const KeySpec* spec = m_schema->find(key);
        if (!spec) throw std::logic_error("Config: undeclared key '" + key + "'");
        if (spec->type != expected) throw std::logic_error("Config: key '" + key + "' read with the wrong type");
        return m_values.at(key);
    }

    static void check(const std::string& key, const KeySpec& spec, const std::string& value, const std::string& where) {
        bool ok = true;
        long long i = 0;
        double r = 0.0;
        switch (spec.type) {
            case ValueType::integer: ok = detail::parse_integer(value, i); break;
            case ValueType::real: ok = detail::parse_real(value, r); break;
            case ValueType::boolean: ok = value == "true" || value == "false"; break;
            case ValueType::string: ok = value.find('"') == std::string::npos; break;
            case ValueType::real_list:
                if (!value.empty())
                    for (const auto& item : detail::split(value, ',')) ok = ok && detail::parse_real(item, r);
                break;
        }
        if (!ok) throw ConfigError(where + ": " + key + " expects a " + type_name(spec.type) + ", got '" + value + "'");
    }

    const Schema* m_schema;
    std::map<std::string, std::string> m_values;
};

} // namespace e1::cli
