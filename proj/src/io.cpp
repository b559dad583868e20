#include "elastinet/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace elastinet::util {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

double parse_double(const std::string& s, const std::string& what) {
    std::string t = trim(s);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        double v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": cannot parse '" + s + "' as a number");
    }
}

long long parse_int(const std::string& s, const std::string& what) {
    std::string t = trim(s);
    try {
        std::size_t pos = 0;
        long long v = std::stoll(t, &pos);
        if (pos != t.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": cannot parse '" + s + "' as an integer");
    }
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) {
        if (trim(part).empty()) continue;
        out.push_back(parse_double(part, what));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    for (const auto& part : split(s, ',')) {
        if (trim(part).empty()) continue;
        out.push_back(static_cast<int>(parse_int(part, what)));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << content;
    if (!f) throw std::runtime_error("write failed: " + path);
}

KvConfig KvConfig::parse_text(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    cfg.origin_ = origin;
    std::string section;
    int lineno = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!cfg.sections_.count(section)) cfg.order_.push_back(section);
            cfg.sections_[section];
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        if (!cfg.sections_.count(section)) cfg.order_.push_back(section);
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
    return parse_text(read_text_file(path), path);
}

bool KvConfig::has(const std::string& section, const std::string& key) const {
    auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string KvConfig::get(const std::string& section, const std::string& key, const std::string& fallback) const {
    auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    auto jt = it->second.find(key);
    return jt == it->second.end() ? fallback : jt->second;
}

std::string KvConfig::require(const std::string& section, const std::string& key) const {
    if (!has(section, key)) {
        throw std::invalid_argument(origin_ + ": missing required key [" + section + "] " + key);
    }
    return sections_.at(section).at(key);
}

double KvConfig::get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double(sections_.at(section).at(key), "[" + section + "] " + key);
}

long long KvConfig::get_int(const std::string& section, const std::string& key, long long fallback) const {
    if (!has(section, key)) return fallback;
    return parse_int(sections_.at(section).at(key), "[" + section + "] " + key);
}

void KvConfig::set_override(const std::string& dotted) {
    auto eq = dotted.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + dotted + "'");
    std::string path = trim(dotted.substr(0, eq));
    std::string value = trim(dotted.substr(eq + 1));
    auto dot = path.find('.');
    if (dot == std::string::npos) throw std::invalid_argument("--set expects section.key=value, got '" + dotted + "'");
    std::string section = path.substr(0, dot);
    std::string key = path.substr(dot + 1);
    if (section.empty() || key.empty()) {
        throw std::invalid_argument("--set expects section.key=value, got '" + dotted + "'");
    }
    if (!sections_.count(section)) order_.push_back(section);
    sections_[section][key] = value;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size()) throw std::invalid_argument("csv row width does not match header: " + path);
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
    write_text_file(path, out.str());
}

CsvTable read_csv(const std::string& path) {
    CsvTable t;
    std::istringstream in(read_text_file(path));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (first) {
            t.header = cells;
            first = false;
        } else {
            if (cells.size() != t.header.size()) {
                throw std::invalid_argument(path + ": csv row width does not match header");
            }
            t.rows.push_back(cells);
        }
    }
    if (first) throw std::invalid_argument(path + ": empty csv");
    return t;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

std::string format_double_exact(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_svg_chart(const std::string& path, const std::string& title, const std::vector<SvgSeries>& series) {
    const int width = 900, height = 360;
    const int ml = 60, mr = 20, mt = 40, mb = 40;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!any) {
                xmin = xmax = s.x[i];
                ymin = ymax = s.y[i];
                any = true;
            } else {
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        }
    }
    if (!any) {
        xmin = ymin = 0;
        xmax = ymax = 1;
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "  <text x=\"" << ml << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << (height - mb) << "\" x2=\"" << (width - mr) << "\" y2=\""
        << (height - mb) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << (height - mb)
        << "\" stroke=\"black\"/>\n";
    out << "  <text x=\"" << ml << "\" y=\"" << (height - 12) << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(xmin) << "</text>\n";
    out << "  <text x=\"" << (width - mr - 40) << "\" y=\"" << (height - 12)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << format_double(xmax) << "</text>\n";
    out << "  <text x=\"6\" y=\"" << (height - mb) << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(ymin) << "</text>\n";
    out << "  <text x=\"6\" y=\"" << (mt + 10) << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(ymax) << "</text>\n";
    int legend_y = 24;
    for (const auto& s : series) {
        out << "  <polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out << (i ? " " : "") << px(s.x[i]) << "," << py(s.y[i]);
        }
        out << "\"/>\n";
        out << "  <text x=\"" << (width - mr - 220) << "\" y=\"" << legend_y
            << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << s.color << "\">" << s.label
            << "</text>\n";
        legend_y += 16;
    }
    out << "</svg>\n";
    write_text_file(path, out.str());
}

}  // namespace elastinet::util
