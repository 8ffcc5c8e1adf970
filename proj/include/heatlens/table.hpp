#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "heatlens/error.hpp"

namespace heatlens {

// Minimal CSV support: comma-separated, first line is the header, no quoting
// or embedded commas. Empty fields are allowed and surface as missing values.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int col(const std::string& name) const; // -1 if absent
};

Csv read_csv(const std::string& path);

// Zone-level feature matrix. Every row is one zone with its centroid in
// world coordinates. Values are doubles; missing entries are NaN and are
// written/read as empty CSV fields.
struct FeatureTable {
    std::vector<std::string> columns;
    std::vector<int64_t> zone_ids;
    std::vector<double> cx, cy;
    std::vector<std::vector<double>> rows; // [n][columns.size()]

    size_t n() const { return zone_ids.size(); }

    static double missing() { return std::numeric_limits<double>::quiet_NaN(); }
    static bool is_missing(double v) { return std::isnan(v); }

    int find_column(const std::string& name) const;
    size_t column_index(const std::string& name) const; // throws if absent
    std::vector<double> column(const std::string& name) const;
    void add_column(const std::string& name, const std::vector<double>& vals);

    // Subset of columns in the requested order.
    FeatureTable select(const std::vector<std::string>& cols) const;
    // Rows with no missing value in any selected column.
    FeatureTable drop_missing(const std::vector<std::string>& cols) const;

    void validate() const;
};

// Header layout: zone_id,centroid_x,centroid_y,<value columns...>.
FeatureTable read_table(const std::string& path);
void write_table(const FeatureTable& t, const std::string& path);

} // namespace heatlens
