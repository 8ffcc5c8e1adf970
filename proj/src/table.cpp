#include "heatlens/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace heatlens {

int Csv::col(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return int(i);
    return -1;
}

Csv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open csv: " + path);
    Csv out;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : s) {
            if (ch == ',') { fields.push_back(cur); cur.clear(); }
            else if (ch != '\r') cur.push_back(ch);
        }
        fields.push_back(cur);
        return fields;
    };
    if (!std::getline(in, line)) throw ValidationError("empty csv: " + path);
    out.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        if (fields.size() != out.header.size())
            throw ValidationError("csv row width mismatch in " + path);
        out.rows.push_back(std::move(fields));
    }
    return out;
}

int FeatureTable::find_column(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return int(i);
    return -1;
}

size_t FeatureTable::column_index(const std::string& name) const {
    int i = find_column(name);
    if (i < 0) throw ValidationError("unknown column: " + name);
    return size_t(i);
}

std::vector<double> FeatureTable::column(const std::string& name) const {
    size_t i = column_index(name);
    std::vector<double> v(n());
    for (size_t r = 0; r < n(); ++r) v[r] = rows[r][i];
    return v;
}

void FeatureTable::add_column(const std::string& name, const std::vector<double>& vals) {
    if (find_column(name) >= 0) throw ValidationError("duplicate column: " + name);
    if (vals.size() != n()) throw ValidationError("column length mismatch: " + name);
    columns.push_back(name);
    for (size_t r = 0; r < n(); ++r) rows[r].push_back(vals[r]);
}

FeatureTable FeatureTable::select(const std::vector<std::string>& cols) const {
    FeatureTable out;
    out.columns = cols;
    out.zone_ids = zone_ids;
    out.cx = cx;
    out.cy = cy;
    std::vector<size_t> idx;
    for (const auto& c : cols) idx.push_back(column_index(c));
    out.rows.reserve(n());
    for (size_t r = 0; r < n(); ++r) {
        std::vector<double> row;
        row.reserve(idx.size());
        for (size_t i : idx) row.push_back(rows[r][i]);
        out.rows.push_back(std::move(row));
    }
    return out;
}

FeatureTable FeatureTable::drop_missing(const std::vector<std::string>& cols) const {
    std::vector<size_t> idx;
    for (const auto& c : cols) idx.push_back(column_index(c));
    FeatureTable out;
    out.columns = columns;
    for (size_t r = 0; r < n(); ++r) {
        bool ok = true;
        for (size_t i : idx)
            if (is_missing(rows[r][i])) { ok = false; break; }
        if (!ok) continue;
        out.zone_ids.push_back(zone_ids[r]);
        out.cx.push_back(cx[r]);
        out.cy.push_back(cy[r]);
        out.rows.push_back(rows[r]);
    }
    return out;
}

void FeatureTable::validate() const {
    if (zone_ids.size() != rows.size() || cx.size() != rows.size() || cy.size() != rows.size())
        throw ValidationError("table: column length mismatch");
    for (const auto& r : rows)
        if (r.size() != columns.size())
            throw ValidationError("table: row width mismatch");
    std::vector<int64_t> ids = zone_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("table: duplicate zone_id");
    for (const auto& r : rows)
        for (double v : r)
            if (!is_missing(v) && !std::isfinite(v))
                throw ValidationError("table: non-finite value");
}

FeatureTable read_table(const std::string& path) {
    Csv csv = read_csv(path);
    if (csv.header.size() < 3 || csv.header[0] != "zone_id" ||
        csv.header[1] != "centroid_x" || csv.header[2] != "centroid_y")
        throw ValidationError("table header must start zone_id,centroid_x,centroid_y: " + path);
    FeatureTable t;
    t.columns.assign(csv.header.begin() + 3, csv.header.end());
    auto parse_d = [&](const std::string& s) -> double {
        if (s.empty()) return FeatureTable::missing();
        char* end = nullptr;
        double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0')
            throw ValidationError("bad number '" + s + "' in " + path);
        return v;
    };
    for (const auto& row : csv.rows) {
        t.zone_ids.push_back(int64_t(std::strtoll(row[0].c_str(), nullptr, 10)));
        t.cx.push_back(parse_d(row[1]));
        t.cy.push_back(parse_d(row[2]));
        std::vector<double> vals;
        vals.reserve(t.columns.size());
        for (size_t i = 3; i < row.size(); ++i) vals.push_back(parse_d(row[i]));
        t.rows.push_back(std::move(vals));
    }
    t.validate();
    return t;
}

void write_table(const FeatureTable& t, const std::string& path) {
    t.validate();
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write table: " + path);
    out << "zone_id,centroid_x,centroid_y";
    for (const auto& c : t.columns) out << "," << c;
    out << "\n";
    char buf[64];
    auto fmt = [&](double v) -> std::string {
        if (FeatureTable::is_missing(v)) return "";
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    };
    for (size_t r = 0; r < t.n(); ++r) {
        out << t.zone_ids[r] << "," << fmt(t.cx[r]) << "," << fmt(t.cy[r]);
        for (double v : t.rows[r]) out << "," << fmt(v);
        out << "\n";
    }
    if (!out) throw ValidationError("write failed: " + path);
}

} // namespace heatlens
