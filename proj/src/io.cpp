#include "plume/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace plume::io {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
    double v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    while (ptr < e && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
    if (ec != std::errc() || ptr != e)
        throw std::runtime_error("not a number: '" + s + "'");
    return v;
}

int Csv::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    for (std::string& f : out) {
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(f.begin());
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t')) f.pop_back();
    }
    return out;
}

}  // namespace

Csv read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    Csv csv;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error(path + ": empty file");
    csv.header = split_csv_line(line);
    size_t rowno = 1;
    while (std::getline(f, line)) {
        ++rowno;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != csv.header.size())
            throw std::runtime_error(path + ": row " + std::to_string(rowno) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(csv.header.size()));
        csv.rows.push_back(std::move(fields));
    }
    return csv;
}

std::string csv_line(const std::vector<std::string>& fields) {
    std::string out;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    out += '\n';
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
        f << content;
        if (!f) throw std::runtime_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

uint64_t fnv1a_digest(const std::string& content) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : content) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin = origin;
    std::istringstream is(text);
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section");
            cfg.sections[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": key outside any [section]");
        auto [it, inserted] = cfg.sections[section].emplace(key, value);
        if (!inserted)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "' in [" + section + "]");
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    return parse_string(read_file(path), path);
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = sections.find(section);
    return s != sections.end() && s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    auto s = sections.find(section);
    if (s == sections.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    if (!has(section, key)) return fallback;
    try {
        return parse_double(get(section, key, ""));
    } catch (const std::exception&) {
        throw ConfigError(origin + ": [" + section + "] " + key + ": not a number");
    }
}

int Config::get_int(const std::string& section, const std::string& key, int fallback) const {
    const double v = get_double(section, key, fallback);
    const int i = static_cast<int>(v);
    if (v != i) throw ConfigError(origin + ": [" + section + "] " + key + ": not an integer");
    return i;
}

uint64_t Config::get_u64(const std::string& section, const std::string& key,
                         uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string s = get(section, key, "");
    uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError(origin + ": [" + section + "] " + key + ": not an unsigned integer");
    return v;
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get(section, key, "");
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(origin + ": [" + section + "] " + key + ": not a boolean");
}

void Config::validate_keys(const std::map<std::string, std::set<std::string>>& schema) const {
    for (const auto& [section, kv] : sections) {
        auto s = schema.find(section);
        if (s == schema.end())
            throw ConfigError(origin + ": unknown section [" + section + "]");
        for (const auto& [key, value] : kv) {
            if (!s->second.count(key))
                throw ConfigError(origin + ": unknown key '" + key + "' in [" + section +
                                  "]");
        }
    }
}

std::string Config::to_string() const {
    std::ostringstream os;
    for (const auto& [section, kv] : sections) {
        os << "[" << section << "]\n";
        for (const auto& [key, value] : kv) os << key << " = " << value << "\n";
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<LineSeries>& series, bool log_y) {
    const int W = 860, H = 520, ml = 70, mr = 160, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto yval = [&](double y) {
        return log_y ? std::log10(std::max(y, 1e-300)) : y;
    };
    for (const LineSeries& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            const double y = yval(s.y[i]);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) {
        return H - mb - (yval(y) - ymin) / (ymax - ymin) * (H - mt - mb);
    };
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                            "#ff7f0e", "#8c564b", "#17becf"};

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
       << (log_y ? " (log10 y)" : "") << "</text>\n";
    os << "<rect x='" << ml << "' y='" << mt << "' width='" << W - ml - mr << "' height='"
       << H - mt - mb << "' fill='none' stroke='#999'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fy = ymin + (ymax - ymin) * i / 4;
        const double sy = H - mb - (fy - ymin) / (ymax - ymin) * (H - mt - mb);
        os << "<text x='" << ml - 8 << "' y='" << sy + 4
           << "' text-anchor='end' font-size='11'>" << static_cast<int>(fy * 100) / 100.0
           << "</text>\n";
        const double fx = xmin + (xmax - xmin) * i / 4;
        os << "<text x='" << px(fx) << "' y='" << H - mb + 18
           << "' text-anchor='middle' font-size='11'>" << static_cast<long>(fx)
           << "</text>\n";
    }
    int ci = 0;
    for (const LineSeries& s : series) {
        const char* color = colors[ci % 7];
        os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.4' points='";
        for (size_t i = 0; i < s.x.size(); ++i)
            os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        os << "'/>\n";
        os << "<text x='" << W - mr + 12 << "' y='" << mt + 16 + 18 * ci
           << "' font-size='12' fill='" << color << "'>" << s.label << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
    write_file_atomic(path, os.str());
}

void write_heatmap_ppm(const std::string& path, const Matrix& field, double lo, double hi) {
    if (hi <= lo) hi = lo + 1;
    std::ostringstream os;
    os << "P6\n" << field.cols << " " << field.rows << "\n255\n";
    std::string pix;
    pix.reserve(static_cast<size_t>(field.rows) * field.cols * 3);
    for (int j = field.rows - 1; j >= 0; --j) {
        for (int i = 0; i < field.cols; ++i) {
            double v = (field.at(j, i) - lo) / (hi - lo);
            v = std::clamp(v, 0.0, 1.0);
            // blue -> green -> red ramp
            const double r = std::clamp(1.5 - std::abs(4 * v - 3.0), 0.0, 1.0);
            const double g = std::clamp(1.5 - std::abs(4 * v - 2.0), 0.0, 1.0);
            const double b = std::clamp(1.5 - std::abs(4 * v - 1.0), 0.0, 1.0);
            pix += static_cast<char>(std::lround(255 * r));
            pix += static_cast<char>(std::lround(255 * g));
            pix += static_cast<char>(std::lround(255 * b));
        }
    }
    os << pix;
    write_file_atomic(path, os.str());
}

}  // namespace plume::io
