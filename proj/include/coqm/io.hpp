#pragma once

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coqm/calibration.hpp"
#include "coqm/qubit.hpp"

namespace coqm {

// Shortest decimal form that round-trips a double; byte-stable across runs.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// Minimal CSV writer: versioned schema comment, header row, deterministic
// number formatting.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& schema,
              const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open for writing: " + path);
        out_ << "# schema=" << schema << "\n";
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << header[i] << (i + 1 < header.size() ? "," : "");
        out_ << "\n";
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out_ << cells[i] << (i + 1 < cells.size() ? "," : "");
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

// Angle literals: raw radians ("1.5707"), multiples of pi ("0.5pi"), or
// degrees with an explicit suffix ("90deg").
inline double parse_angle(std::string s) {
    auto strip = [](std::string& t) {
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.front()))) t.erase(0, 1);
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back()))) t.pop_back();
    };
    strip(s);
    if (s.empty()) throw std::invalid_argument("empty angle");
    double scale = 1.0;
    if (s.size() >= 2 && (s.substr(s.size() - 2) == "pi" || s.substr(s.size() - 2) == "PI")) {
        scale = kPi;
        s.erase(s.size() - 2);
    } else if (s.size() >= 3 && s.substr(s.size() - 3) == "deg") {
        scale = kPi / 180.0;
        s.erase(s.size() - 3);
    }
    strip(s);
    if (s.empty()) {
        if (scale == 1.0) throw std::invalid_argument("empty angle");
        return scale; // bare "pi"
    }
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad angle literal: " + s);
    return v * scale;
}

// Frequency-dataset CSV: columns theta_s, phi_s, meas (A|B), outcome, count.
// Rows for the two outcomes of one (cell, measurement) pair are combined.
inline FrequencyDataset read_frequency_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    FrequencyDataset ds;
    struct Key {
        double th, ph;
        MeasSel m;
    };
    std::vector<Key> keys;
    std::vector<std::array<std::int64_t, 2>> counts;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true; // first non-comment line is the header
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> f;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 5 columns (theta_s,phi_s,meas,outcome,count)");
        try {
            const double th = parse_angle(f[0]);
            const double ph = parse_angle(f[1]);
            if (f[2] != "A" && f[2] != "B")
                throw std::invalid_argument("meas must be A or B");
            const MeasSel m = f[2] == "A" ? MeasSel::A : MeasSel::B;
            const int outcome = std::stoi(f[3]);
            if (outcome != 0 && outcome != 1)
                throw std::invalid_argument("outcome must be 0 or 1");
            const std::int64_t n = std::stoll(f[4]);
            if (n < 0) throw std::invalid_argument("negative count");
            std::size_t idx = keys.size();
            for (std::size_t i = 0; i < keys.size(); ++i)
                if (keys[i].m == m && std::abs(keys[i].th - th) < 1e-12 &&
                    std::abs(keys[i].ph - ph) < 1e-12) {
                    idx = i;
                    break;
                }
            if (idx == keys.size()) {
                keys.push_back({th, ph, m});
                counts.push_back({0, 0});
            }
            counts[idx][static_cast<std::size_t>(outcome)] += n;
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const std::int64_t tot = counts[i][0] + counts[i][1];
        if (tot < 1)
            throw std::runtime_error(path + ": empty cell in frequency dataset");
        ds.cells.push_back({keys[i].th, keys[i].ph, keys[i].m,
                            static_cast<double>(counts[i][0]) / static_cast<double>(tot), tot});
    }
    return ds;
}

inline void write_frequency_csv(const std::string& path, const FrequencyDataset& ds) {
    CsvWriter w(path, "coqm-frequency-v1", {"theta_s", "phi_s", "meas", "outcome", "count"});
    for (const auto& c : ds.cells) {
        const auto n0 = static_cast<std::int64_t>(std::llround(c.f0 * c.count));
        w.row({format_double(c.theta_s), format_double(c.phi_s),
               c.meas == MeasSel::A ? "A" : "B", "0", std::to_string(n0)});
        w.row({format_double(c.theta_s), format_double(c.phi_s),
               c.meas == MeasSel::A ? "A" : "B", "1", std::to_string(c.count - n0)});
    }
}

} // namespace coqm
