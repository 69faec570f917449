#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace smr::toml {

/// Scalar or flat array value from the config subset: strings, integers,
/// floats, booleans, single-line arrays of those.
struct Value {
    enum class Kind { string, integer, real, boolean, array };

    Kind kind = Kind::string;
    std::string str;
    std::int64_t int_v = 0;
    double real_v = 0.0;
    bool bool_v = false;
    std::vector<Value> items;
};

/// Flat view of a parsed config: keys are "section.key" (top-level keys have
/// no dot). Typed getters convert integers to doubles where a double is
/// requested and raise ConfigError for anything else.
class Table {
public:
    static Table parse(const std::string& text, const std::string& origin = "<config>");
    static Table parse_file(const std::string& path);

    bool has(const std::string& key) const;
    const Value& at(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_array(const std::string& key,
                                         const std::vector<double>& fallback) const;

    /// All keys in sorted order; used to reject unknown keys.
    std::vector<std::string> keys() const;

    /// Raw text the table was parsed from (hashed into run manifests).
    const std::string& source() const { return source_; }

private:
    std::map<std::string, Value> values_;
    std::string source_;
};

} // namespace smr::toml
