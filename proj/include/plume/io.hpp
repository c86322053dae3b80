#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "plume/matrix.hpp"

namespace plume::io {

// Shortest round-trip decimal formatting; parse rejects trailing garbage.
std::string format_double(double v);
double parse_double(const std::string& s);

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
};

Csv read_csv(const std::string& path);
std::string csv_line(const std::vector<std::string>& fields);

// write temp file + rename so readers never observe partial content
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// FNV-1a 64-bit content digest for manifest bookkeeping
uint64_t fnv1a_digest(const std::string& content);

// ---------------------------------------------------------------------------
// Sectioned key/value config:
//   [section]
//   key = value      # comment
// Unknown sections/keys are rejected against a schema at load time.
// ---------------------------------------------------------------------------
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Config {
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string origin;  // path, for error messages

    static Config parse_string(const std::string& text, const std::string& origin = "<string>");
    static Config parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key,
                      double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& section, const std::string& key,
                     uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    // throws ConfigError naming the first unknown section or key
    void validate_keys(const std::map<std::string, std::set<std::string>>& schema) const;

    std::string to_string() const;  // canonical re-serialization
};

// ---------------------------------------------------------------------------
// Plot helpers (self-contained file writers; CSVs remain the contract)
// ---------------------------------------------------------------------------
struct LineSeries {
    std::string label;
    std::vector<double> x, y;
};

// simple SVG line plot; log_y plots log10 of positive values
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<LineSeries>& series, bool log_y);

// grayscale-to-heat raster of a field (row 0 at the bottom)
void write_heatmap_ppm(const std::string& path, const Matrix& field, double lo, double hi);

}  // namespace plume::io
