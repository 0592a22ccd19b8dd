#pragma once

// Output capture: bindings, the waveform table, CSV and SVG emission.

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace flowsim {

struct NetRef {
    std::string net;
    bool operator==(const NetRef&) const = default;
};

struct OutParamRef {
    std::string instance;
    std::string param;
    bool operator==(const OutParamRef&) const = default;
};

using OutputBinding = std::variant<NetRef, OutParamRef>;

// "net" or "instance.param".
std::string binding_path(const OutputBinding& b);

/// One output file: which aliases go in it and how they are sampled.
struct OutputGroup {
    std::string file;
    std::vector<std::string> aliases;
    std::optional<double> interval;  // none: every accepted point
    std::optional<std::string> svg;
};

struct ResolvedOutput {
    std::string alias;
    OutputBinding binding;
};

class WaveformTable {
public:
    WaveformTable() : columns_{"time"} {}
    explicit WaveformTable(std::vector<std::string> aliases);

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<double>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

    // Index of a column, or -1.
    int column_index(const std::string& name) const;
    std::vector<double> column(const std::string& name) const;

    /// Appends (t, values...). Throws std::logic_error if t does not
    /// increase or the width is wrong.
    void append(double t, std::span<const double> values);

    bool operator==(const WaveformTable&) const = default;

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
};

/// Feeds accepted points into a table, every point or on a fixed grid.
/// Grid mode: each grid time t_start + k*interval takes the first accepted
/// point at or after it; the row carries that point's actual time, and a
/// point serving several grid slots is written once.
class Recorder {
public:
    Recorder(std::vector<std::string> aliases, std::optional<double> interval, double t_start);

    void record(double t, std::span<const double> values);
    const WaveformTable& table() const { return table_; }

private:
    WaveformTable table_;
    std::optional<double> interval_;
    double t_start_;
    long long next_slot_ = 0;
};

void write_csv(const WaveformTable& table, std::ostream& out);
void write_csv_file(const WaveformTable& table, const std::string& path);
WaveformTable read_csv(std::istream& in);
WaveformTable read_csv_file(const std::string& path);

struct PlotSpec {
    std::string x = "time";
    std::vector<std::string> y;  // empty: every column except x
    int width = 800;
    int height = 480;
    std::string title;
};

std::string emit_svg(const WaveformTable& table, const PlotSpec& spec);
void write_svg_file(const WaveformTable& table, const PlotSpec& spec, const std::string& path);

}  // namespace flowsim
