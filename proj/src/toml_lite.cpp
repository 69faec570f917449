#include "smr/toml_lite.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "smr/errors.hpp"

namespace smr::toml {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s, bool allow_dot) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
              (allow_dot && c == '.')))
            return false;
    return true;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

// Strips a trailing comment, honoring quotes.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_str) {
            if (c == '\\') ++i;
            else if (c == '"') in_str = false;
        } else if (c == '"') {
            in_str = true;
        } else if (c == '#') {
            return s.substr(0, i);
        }
    }
    return s;
}

Value parse_scalar(const std::string& tok, const std::string& origin, int line) {
    Value v;
    if (tok.empty()) fail(origin, line, "empty value");
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"') fail(origin, line, "unterminated string");
        v.kind = Value::Kind::string;
        for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
            char c = tok[i];
            if (c == '\\') {
                // An escape that consumes the final quote leaves no terminator.
                if (i + 2 >= tok.size()) fail(origin, line, "unterminated string");
                char e = tok[++i];
                switch (e) {
                case 'n': v.str += '\n'; break;
                case 't': v.str += '\t'; break;
                case '"': v.str += '"'; break;
                case '\\': v.str += '\\'; break;
                default: fail(origin, line, std::string("unknown escape \\") + e);
                }
            } else if (c == '"') {
                fail(origin, line, "stray quote inside string");
            } else {
                v.str += c;
            }
        }
        return v;
    }
    if (tok == "true" || tok == "false") {
        v.kind = Value::Kind::boolean;
        v.bool_v = tok == "true";
        return v;
    }
    // Number: integer when it consumes as one, float otherwise.
    bool int_like = true;
    for (std::size_t i = 0; i < tok.size(); ++i) {
        char c = tok[i];
        if (i == 0 && (c == '+' || c == '-')) continue;
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            int_like = false;
            break;
        }
    }
    const char* begin = tok.c_str();
    char* end = nullptr;
    if (int_like) {
        errno = 0;
        long long iv = std::strtoll(begin, &end, 10);
        if (end == begin + tok.size() && errno == 0) {
            v.kind = Value::Kind::integer;
            v.int_v = iv;
            return v;
        }
    }
    errno = 0;
    double dv = std::strtod(begin, &end);
    if (end != begin + tok.size() || errno == ERANGE)
        fail(origin, line, "cannot parse value '" + tok + "'");
    v.kind = Value::Kind::real;
    v.real_v = dv;
    return v;
}

// Splits "a, b, c" at top level (no nested arrays in this subset).
std::vector<std::string> split_items(const std::string& body, const std::string& origin,
                                     int line) {
    std::vector<std::string> out;
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (in_str) {
            cur += c;
            if (c == '\\' && i + 1 < body.size()) cur += body[++i];
            else if (c == '"') in_str = false;
        } else if (c == '"') {
            cur += c;
            in_str = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c == '[' || c == ']') {
            fail(origin, line, "nested arrays are not supported");
        } else {
            cur += c;
        }
    }
    std::string last = trim(cur);
    if (!last.empty()) out.push_back(last);
    else if (!out.empty()) fail(origin, line, "trailing comma in array");
    return out;
}

} // namespace

Table Table::parse(const std::string& text, const std::string& origin) {
    Table t;
    t.source_ = text;
    std::istringstream in(text);
    std::string raw, section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(origin, line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_name(section, true))
                fail(origin, line_no, "bad section name '" + section + "'");
            continue;
        }
        std::size_t eq = std::string::npos;
        bool in_str = false;
        for (std::size_t i = 0; i < line.size() && eq == std::string::npos; ++i) {
            if (line[i] == '"') in_str = !in_str;
            else if (line[i] == '=' && !in_str) eq = i;
        }
        if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!valid_name(key, false)) fail(origin, line_no, "bad key '" + key + "'");
        if (val.empty()) fail(origin, line_no, "missing value for '" + key + "'");
        std::string full = section.empty() ? key : section + "." + key;
        if (t.values_.count(full)) fail(origin, line_no, "duplicate key '" + full + "'");
        Value v;
        if (val.front() == '[') {
            if (val.back() != ']') fail(origin, line_no, "unterminated array (single line only)");
            v.kind = Value::Kind::array;
            for (const std::string& item :
                 split_items(val.substr(1, val.size() - 2), origin, line_no))
                v.items.push_back(parse_scalar(item, origin, line_no));
        } else {
            v = parse_scalar(val, origin, line_no);
        }
        t.values_.emplace(std::move(full), std::move(v));
    }
    return t;
}

Table Table::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

bool Table::has(const std::string& key) const { return values_.count(key) != 0; }

const Value& Table::at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

std::string Table::get_string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.kind != Value::Kind::string)
        throw ConfigError("config: '" + key + "' must be a string");
    return v.str;
}

std::int64_t Table::get_int(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.kind != Value::Kind::integer)
        throw ConfigError("config: '" + key + "' must be an integer");
    return v.int_v;
}

double Table::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.kind == Value::Kind::integer) return double(v.int_v);
    if (v.kind != Value::Kind::real)
        throw ConfigError("config: '" + key + "' must be a number");
    return v.real_v;
}

bool Table::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.kind != Value::Kind::boolean)
        throw ConfigError("config: '" + key + "' must be true or false");
    return v.bool_v;
}

std::vector<double> Table::get_double_array(const std::string& key,
                                            const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    const Value& v = at(key);
    if (v.kind != Value::Kind::array)
        throw ConfigError("config: '" + key + "' must be an array");
    std::vector<double> out;
    out.reserve(v.items.size());
    for (const Value& item : v.items) {
        if (item.kind == Value::Kind::integer) out.push_back(double(item.int_v));
        else if (item.kind == Value::Kind::real) out.push_back(item.real_v);
        else throw ConfigError("config: '" + key + "' must contain only numbers");
    }
    return out;
}

std::vector<std::string> Table::keys() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

} // namespace smr::toml
