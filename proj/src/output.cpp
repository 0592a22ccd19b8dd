#include "flowsim/output.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "flowsim/error.hpp"

namespace flowsim {

std::string binding_path(const OutputBinding& b) {
    if (const auto* n = std::get_if<NetRef>(&b)) return n->net;
    const auto& p = std::get<OutParamRef>(b);
    return p.instance + "." + p.param;
}

WaveformTable::WaveformTable(std::vector<std::string> aliases) : columns_{"time"} {
    columns_.insert(columns_.end(), aliases.begin(), aliases.end());
}

int WaveformTable::column_index(const std::string& name) const {
    auto it = std::find(columns_.begin(), columns_.end(), name);
    return it == columns_.end() ? -1 : static_cast<int>(it - columns_.begin());
}

std::vector<double> WaveformTable::column(const std::string& name) const {
    const int c = column_index(name);
    if (c < 0) throw std::out_of_range("no column '" + name + "'");
    std::vector<double> v;
    v.reserve(rows_.size());
    for (const auto& r : rows_) v.push_back(r[static_cast<std::size_t>(c)]);
    return v;
}

void WaveformTable::append(double t, std::span<const double> values) {
    if (values.size() + 1 != columns_.size()) throw std::logic_error("waveform row has the wrong width");
    if (!rows_.empty() && !(t > rows_.back()[0])) {
        throw std::logic_error("waveform time must increase (got " + std::to_string(t) + " after " +
                               std::to_string(rows_.back()[0]) + ")");
    }
    std::vector<double> row;
    row.reserve(columns_.size());
    row.push_back(t);
    row.insert(row.end(), values.begin(), values.end());
    rows_.push_back(std::move(row));
}

Recorder::Recorder(std::vector<std::string> aliases, std::optional<double> interval, double t_start)
    : table_(std::move(aliases)), interval_(interval), t_start_(t_start) {
    if (interval_ && !(*interval_ > 0.0)) throw std::invalid_argument("sampling interval must be positive");
}

void Recorder::record(double t, std::span<const double> values) {
    if (!interval_) {
        table_.append(t, values);
        return;
    }
    // Grid slots are computed from the integer index; a tiny relative slack
    // keeps a point that lands on a grid time from missing it by an ulp.
    auto slot_time = [&](long long k) { return t_start_ + static_cast<double>(k) * *interval_; };
    auto reached = [&](long long k) {
        const double g = slot_time(k);
        return t >= g - 1e-12 * std::max(1.0, std::abs(g));
    };
    if (!reached(next_slot_)) return;
    while (reached(next_slot_ + 1)) ++next_slot_;
    ++next_slot_;
    table_.append(t, values);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Splits one record; handles quoted fields spanning lines.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool quoted = false, any = false, was_quoted = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"' && field.empty() && !was_quoted) {
            quoted = was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (c == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw IoError("CSV: unterminated quoted field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

double parse_double(const std::string& s, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) {
        throw IoError("CSV line " + std::to_string(line) + ": '" + s + "' is not a number");
    }
    return v;
}

}  // namespace

void write_csv(const WaveformTable& table, std::ostream& out) {
    const auto& cols = table.columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_field(cols[i]);
    out << '\n';
    for (const auto& row : table.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt17(row[i]);
        out << '\n';
    }
}

void write_csv_file(const WaveformTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(table, out);
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

WaveformTable read_csv(std::istream& in) {
    std::vector<std::string> fields;
    if (!read_record(in, fields)) throw IoError("CSV: empty input");
    if (fields.empty() || fields[0] != "time") throw IoError("CSV: first column must be 'time'");
    WaveformTable table(std::vector<std::string>(fields.begin() + 1, fields.end()));
    const std::size_t width = fields.size();
    std::size_t line = 1;
    std::vector<double> values;
    while (read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != width) throw IoError("CSV line " + std::to_string(line) + ": wrong number of fields");
        values.clear();
        for (std::size_t i = 1; i < width; ++i) values.push_back(parse_double(fields[i], line));
        try {
            table.append(parse_double(fields[0], line), values);
        } catch (const std::logic_error& e) {
            throw IoError("CSV line " + std::to_string(line) + ": " + e.what());
        }
    }
    return table;
}

WaveformTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return read_csv(in);
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct Range {
    double lo, hi;
};

Range extent(const std::vector<double>& v) {
    double lo = INFINITY, hi = -INFINITY;
    for (double x : v) {
        if (!std::isfinite(x)) continue;
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(lo <= hi)) return {-1.0, 1.0};
    if (lo == hi) return {lo - 1.0, hi + 1.0};
    const double m = 0.05 * (hi - lo);
    return {lo - m, hi + m};
}

// Roughly five "nice" ticks (1, 2, 5 times a power of ten).
std::vector<double> ticks(Range r) {
    const double raw = (r.hi - r.lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    std::vector<double> out;
    for (long long k = static_cast<long long>(std::ceil(r.lo / step)); k * step <= r.hi; ++k) {
        out.push_back(static_cast<double>(k) * step);
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-300 ? 0.0 : v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::string emit_svg(const WaveformTable& table, const PlotSpec& spec) {
    if (table.empty()) throw IoError("cannot plot an empty table");
    std::vector<std::string> ys = spec.y;
    if (ys.empty()) {
        for (const auto& c : table.columns()) {
            if (c != spec.x) ys.push_back(c);
        }
    }
    auto require = [&](const std::string& c) {
        if (table.column_index(c) >= 0) return;
        std::string avail;
        for (const auto& a : table.columns()) avail += (avail.empty() ? "" : ", ") + a;
        throw IoError("no column '" + c + "' (available: " + avail + ")");
    };
    require(spec.x);
    for (const auto& y : ys) require(y);
    if (ys.empty()) throw IoError("nothing to plot");

    const auto xs = table.column(spec.x);
    std::vector<std::vector<double>> series;
    std::vector<double> all;
    for (const auto& y : ys) {
        series.push_back(table.column(y));
        all.insert(all.end(), series.back().begin(), series.back().end());
    }
    const Range xr = extent(xs), yr = extent(all);

    const double W = spec.width, H = spec.height;
    const double left = 70, right = 130, top = spec.title.empty() ? 20 : 40, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return top + (yr.hi - y) / (yr.hi - yr.lo) * ph; };

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << spec.width << "\" height=\""
       << spec.height << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << spec.width << "\" height=\"" << spec.height << "\" fill=\"white\"/>\n";
    if (!spec.title.empty()) {
        os << "<text x=\"" << num(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           << "font-size=\"15\">" << xml_escape(spec.title) << "</text>\n";
    }
    os << "<g font-family=\"sans-serif\" font-size=\"11\" stroke=\"#ccc\" stroke-width=\"0.5\">\n";
    for (double t : ticks(xr)) {
        os << "<line x1=\"" << num(px(t)) << "\" y1=\"" << num(top) << "\" x2=\"" << num(px(t)) << "\" y2=\""
           << num(top + ph) << "\"/>";
        os << "<text x=\"" << num(px(t)) << "\" y=\"" << num(top + ph + 16)
           << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"black\">" << label(t) << "</text>\n";
    }
    for (double t : ticks(yr)) {
        os << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(left + pw) << "\" y2=\""
           << num(py(t)) << "\"/>";
        os << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(t) + 4)
           << "\" text-anchor=\"end\" stroke=\"none\" fill=\"black\">" << label(t) << "</text>\n";
    }
    os << "</g>\n";
    os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 12)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(spec.x)
       << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kColors[s % std::size(kColors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!std::isfinite(xs[i]) || !std::isfinite(series[s][i])) continue;
            os << (first ? "" : " ") << num(px(xs[i])) << ',' << num(py(series[s][i]));
            first = false;
        }
        os << "\"/>\n";
        const double ly = top + 14 + 18 * static_cast<double>(s);
        os << "<line x1=\"" << num(left + pw + 10) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(left + pw + 30)
           << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
        os << "<text x=\"" << num(left + pw + 35) << "\" y=\"" << num(ly + 4)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(ys[s]) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void write_svg_file(const WaveformTable& table, const PlotSpec& spec, const std::string& path) {
    const std::string doc = emit_svg(table, spec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << doc;
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace flowsim
