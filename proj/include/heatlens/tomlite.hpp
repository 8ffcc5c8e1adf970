#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace heatlens {

// Minimal TOML-style configuration parser covering the subset the pipeline
// uses: [section] headers, key = value lines, # comments, basic "strings"
// with \\ \" \n \t escapes, booleans, 64-bit integers, doubles, and
// single-line arrays of scalars. Keys inside a section are stored flattened
// as "section.key". Duplicate keys and syntax errors raise ValidationError
// with the offending line number.
struct TomlValue {
    enum class Kind { String, Integer, Float, Boolean, Array };

    Kind kind = Kind::String;
    std::string str;
    int64_t integer = 0;
    double real = 0.0;
    bool boolean = false;
    std::vector<TomlValue> items;

    const char* kind_name() const;
};

struct TomlTable {
    std::map<std::string, TomlValue> values;

    bool has(const std::string& key) const;

    // Typed getters throw ValidationError "missing key: <key>" when absent
    // and "key <key> expects <type>" on a kind mismatch. Integers widen to
    // double where a float is requested.
    const TomlValue& get(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int64_t> get_ints(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;
};

TomlTable parse_toml(const std::string& text);
TomlTable read_toml(const std::string& path);

}  // namespace heatlens
