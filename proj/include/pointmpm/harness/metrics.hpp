#pragma once

// Append-only per-epoch log: one line of space-separated key=value pairs,
// flushed as soon as it is written.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pointmpm/error.hpp"

namespace pointmpm::harness {

class MetricsRecord {
public:
    explicit MetricsRecord(std::size_t epoch) : epoch_(epoch) {}

    MetricsRecord& add(const std::string& key, double value) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
        return add(key, std::string(buf, ptr));
    }
    MetricsRecord& add(const std::string& key, const std::string& value) {
        if (key.empty() || key == "epoch" || key.find_first_of(" =\n") != std::string::npos ||
            value.find_first_of(" \n") != std::string::npos) {
            throw ArgumentError("metrics: invalid field '" + key + "=" + value + "'");
        }
        fields_.emplace_back(key, value);
        return *this;
    }

    std::size_t epoch() const { return epoch_; }

    std::string line() const {
        std::string out = "epoch=" + std::to_string(epoch_);
        for (const auto& [k, v] : fields_) out += " " + k + "=" + v;
        return out;
    }

private:
    std::size_t epoch_;
    std::vector<std::pair<std::string, std::string>> fields_;
};

class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw FormatError("cannot open metrics log '" + path.string() + "'");
    }

    /// Epoch numbers must increase strictly across records.
    void write(const MetricsRecord& rec) {
        if (last_ && rec.epoch() <= *last_) {
            throw ArgumentError("metrics: epoch " + std::to_string(rec.epoch()) + " does not follow " +
                                std::to_string(*last_));
        }
        last_ = rec.epoch();
        lines_.push_back(rec.line());
        if (out_.is_open()) {
            out_ << lines_.back() << '\n';
            out_.flush();
        }
    }

    const std::vector<std::string>& lines() const { return lines_; }

private:
    std::ofstream out_;
    std::optional<std::size_t> last_;
    std::vector<std::string> lines_;
};

using ParsedRecord = std::map<std::string, std::string>;

inline ParsedRecord parse_metrics_line(const std::string& line) {
    ParsedRecord rec;
    std::istringstream in(line);
    for (std::string tok; in >> tok;) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) throw FormatError("metrics: malformed field '" + tok + "'");
        rec[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    if (!rec.count("epoch")) throw FormatError("metrics: record without epoch");
    return rec;
}

inline std::vector<ParsedRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open metrics log '" + path.string() + "'");
    std::vector<ParsedRecord> out;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(parse_metrics_line(line));
    return out;
}

} // namespace pointmpm::harness
