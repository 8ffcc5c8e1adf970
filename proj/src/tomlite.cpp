#include "heatlens/tomlite.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "heatlens/error.hpp"

namespace heatlens {

namespace {

[[noreturn]] void fail_line(int line, const std::string& what) {
    throw ValidationError("config line " + std::to_string(line) + ": " + what);
}

std::string strip(const std::string& s) {
    size_t a = 0;
    size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Removes a trailing comment that starts outside any string literal.
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '#') {
            return s.substr(0, i);
        }
    }
    return s;
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

std::string parse_basic_string(const std::string& raw, int line) {
    if (raw.size() < 2 || raw.back() != '"') fail_line(line, "unterminated string");
    std::string out;
    for (size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '"') fail_line(line, "unexpected trailing characters after string");
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (i + 2 >= raw.size()) fail_line(line, "dangling escape in string");
        ++i;
        switch (raw[i]) {
            case '\\': out.push_back('\\'); break;
            case '"': out.push_back('"'); break;
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            default: fail_line(line, std::string("unsupported escape \\") + raw[i]);
        }
    }
    return out;
}

TomlValue parse_scalar(const std::string& raw, int line) {
    TomlValue v;
    if (raw.empty()) fail_line(line, "missing value");
    if (raw.front() == '"') {
        v.kind = TomlValue::Kind::String;
        v.str = parse_basic_string(raw, line);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = TomlValue::Kind::Boolean;
        v.boolean = raw == "true";
        return v;
    }
    const bool looks_float = raw.find_first_of(".eE") != std::string::npos &&
                             raw.find_first_not_of("+-0123456789.eE") == std::string::npos;
    if (!looks_float) {
        int64_t n = 0;
        auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), n);
        if (ec == std::errc() && p == raw.data() + raw.size()) {
            v.kind = TomlValue::Kind::Integer;
            v.integer = n;
            return v;
        }
    }
    try {
        size_t used = 0;
        const double d = std::stod(raw, &used);
        if (used == raw.size()) {
            v.kind = TomlValue::Kind::Float;
            v.real = d;
            return v;
        }
    } catch (const std::exception&) {
    }
    fail_line(line, "cannot parse value '" + raw + "'");
}

TomlValue parse_value(const std::string& raw, int line) {
    if (raw.empty()) fail_line(line, "missing value");
    if (raw.front() != '[') return parse_scalar(raw, line);
    if (raw.back() != ']') fail_line(line, "unterminated array");

    TomlValue v;
    v.kind = TomlValue::Kind::Array;
    const std::string body = strip(raw.substr(1, raw.size() - 2));
    if (body.empty()) return v;

    std::vector<std::string> parts;
    bool in_string = false;
    size_t start = 0;
    for (size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '[') {
            fail_line(line, "nested arrays are not supported");
        } else if (c == ',') {
            parts.push_back(body.substr(start, i - start));
            start = i + 1;
        }
    }
    if (in_string) fail_line(line, "unterminated string");
    parts.push_back(body.substr(start));

    for (const std::string& part : parts) {
        const std::string item = strip(part);
        if (item.empty()) fail_line(line, "empty array element");
        v.items.push_back(parse_scalar(item, line));
    }
    return v;
}

[[noreturn]] void fail_kind(const std::string& key, const char* want) {
    throw ValidationError("key " + key + " expects " + want);
}

}  // namespace

const char* TomlValue::kind_name() const {
    switch (kind) {
        case Kind::String: return "string";
        case Kind::Integer: return "integer";
        case Kind::Float: return "float";
        case Kind::Boolean: return "boolean";
        case Kind::Array: return "array";
    }
    return "unknown";
}

bool TomlTable::has(const std::string& key) const { return values.count(key) != 0; }

const TomlValue& TomlTable::get(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) {
        const size_t dot = key.rfind('.');
        throw ValidationError("missing key: " + (dot == std::string::npos ? key : key.substr(dot + 1)));
    }
    return it->second;
}

std::string TomlTable::get_string(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::String) fail_kind(key, "a string");
    return v.str;
}

int64_t TomlTable::get_int(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Integer) fail_kind(key, "an integer");
    return v.integer;
}

double TomlTable::get_double(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind == TomlValue::Kind::Integer) return static_cast<double>(v.integer);
    if (v.kind != TomlValue::Kind::Float) fail_kind(key, "a number");
    return v.real;
}

bool TomlTable::get_bool(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Boolean) fail_kind(key, "a boolean");
    return v.boolean;
}

std::vector<int64_t> TomlTable::get_ints(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Array) fail_kind(key, "an array");
    std::vector<int64_t> out;
    for (const TomlValue& item : v.items) {
        if (item.kind != TomlValue::Kind::Integer) fail_kind(key, "an array of integers");
        out.push_back(item.integer);
    }
    return out;
}

std::vector<double> TomlTable::get_doubles(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Array) fail_kind(key, "an array");
    std::vector<double> out;
    for (const TomlValue& item : v.items) {
        if (item.kind == TomlValue::Kind::Integer) {
            out.push_back(static_cast<double>(item.integer));
        } else if (item.kind == TomlValue::Kind::Float) {
            out.push_back(item.real);
        } else {
            fail_kind(key, "an array of numbers");
        }
    }
    return out;
}

std::vector<std::string> TomlTable::get_strings(const std::string& key) const {
    const TomlValue& v = get(key);
    if (v.kind != TomlValue::Kind::Array) fail_kind(key, "an array");
    std::vector<std::string> out;
    for (const TomlValue& item : v.items) {
        if (item.kind != TomlValue::Kind::String) fail_kind(key, "an array of strings");
        out.push_back(item.str);
    }
    return out;
}

TomlTable parse_toml(const std::string& text) {
    TomlTable table;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string body = strip(strip_comment(raw));
        if (body.empty()) continue;

        if (body.front() == '[') {
            if (body.back() != ']') fail_line(line, "unterminated section header");
            section = strip(body.substr(1, body.size() - 2));
            if (!valid_key(section)) fail_line(line, "invalid section name '" + section + "'");
            continue;
        }

        const size_t eq = [&] {
            bool in_string = false;
            for (size_t i = 0; i < body.size(); ++i) {
                const char c = body[i];
                if (in_string) {
                    if (c == '\\') {
                        ++i;
                    } else if (c == '"') {
                        in_string = false;
                    }
                } else if (c == '"') {
                    in_string = true;
                } else if (c == '=') {
                    return i;
                }
            }
            return std::string::npos;
        }();
        if (eq == std::string::npos) fail_line(line, "expected key = value");

        const std::string key = strip(body.substr(0, eq));
        if (!valid_key(key)) fail_line(line, "invalid key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.values.count(full)) fail_line(line, "duplicate key '" + full + "'");

        table.values.emplace(full, parse_value(strip(body.substr(eq + 1)), line));
    }
    return table;
}

TomlTable read_toml(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml(buf.str());
}

}  // namespace heatlens
