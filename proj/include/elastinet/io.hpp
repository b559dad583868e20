#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace elastinet::util {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::string lower(const std::string& s);

double parse_double(const std::string& s, const std::string& what);
long long parse_int(const std::string& s, const std::string& what);
std::vector<double> parse_double_list(const std::string& s, const std::string& what);
std::vector<int> parse_int_list(const std::string& s, const std::string& what);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// Sectioned key=value configuration. '#' starts a comment, sections are
// [name] headers, keys before any header land in the "" section.
class KvConfig {
public:
    static KvConfig parse_text(const std::string& text, const std::string& origin = "<text>");
    static KvConfig parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::string require(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;

    // Applies "section.key=value" (for --set overrides).
    void set_override(const std::string& dotted);

    const std::map<std::string, std::map<std::string, std::string>>& sections() const { return sections_; }
    const std::vector<std::string>& section_order() const { return order_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::vector<std::string> order_;
    std::string origin_;
};

// CSV with a fixed header row. Cells are written verbatim; none of the
// project's payloads contain commas or quotes.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

// Minimal static SVG line chart, one polyline per series.
struct SvgSeries {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
};

void write_svg_chart(const std::string& path, const std::string& title, const std::vector<SvgSeries>& series);

std::string format_double(double v);

// Shortest decimal that parses back to exactly the same double; used by file
// formats whose round-trip must be bit-exact.
std::string format_double_exact(double v);

}  // namespace elastinet::util
