#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "heliocast/error.hpp"
#include "heliocast/time.hpp"

namespace heliocast {

/// Regularly stamped ground irradiance measurements, optionally paired with a
/// modeled clear-sky value.  Rows are kept in ascending time order.
struct IrradianceSeries {
    std::vector<std::int64_t> ts;
    std::vector<double> ghi;
    std::vector<double> ghi_clear; // empty when the clear-sky column is absent
    std::unordered_map<std::int64_t, std::size_t> index;

    bool has_clear() const { return !ghi_clear.empty(); }
    std::size_t size() const { return ts.size(); }

    void push(std::int64_t t, double g, double gc) {
        if (!ts.empty() && t <= ts.back())
            throw DataError("irradiance rows must be strictly increasing in time");
        index.emplace(t, ts.size());
        ts.push_back(t);
        ghi.push_back(g);
        ghi_clear.push_back(gc);
    }

    const std::size_t* find(std::int64_t t) const {
        const auto it = index.find(t);
        return it == index.end() ? nullptr : &it->second;
    }
};

inline void write_irradiance_csv(const std::string& path, const IrradianceSeries& s) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << (s.has_clear() ? "timestamp_utc,ghi_wm2,ghi_clear_wm2" : "timestamp_utc,ghi_wm2") << "\n";
    char buf[128];
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s.has_clear())
            std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f", format_iso8601(s.ts[i]).c_str(),
                          s.ghi[i], s.ghi_clear[i]);
        else
            std::snprintf(buf, sizeof(buf), "%s,%.4f", format_iso8601(s.ts[i]).c_str(), s.ghi[i]);
        os << buf << "\n";
    }
    if (!os) throw DataError("short write: " + path);
}

inline IrradianceSeries read_irradiance_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open irradiance file: " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty irradiance file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool with_clear;
    if (line == "timestamp_utc,ghi_wm2,ghi_clear_wm2")
        with_clear = true;
    else if (line == "timestamp_utc,ghi_wm2")
        with_clear = false;
    else
        throw DataError("unexpected irradiance header: " + line);

    IrradianceSeries s;
    long lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tstr, gstr, cstr;
        if (!std::getline(ss, tstr, ',') || !std::getline(ss, gstr, ','))
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed row");
        if (with_clear && !std::getline(ss, cstr, ','))
            throw DataError(path + ":" + std::to_string(lineno) + ": missing clear-sky column");
        std::size_t pos = 0;
        double g = 0.0, gc = 0.0;
        try {
            g = std::stod(gstr, &pos);
            if (pos != gstr.size()) throw std::invalid_argument(gstr);
            if (with_clear) {
                gc = std::stod(cstr, &pos);
                if (pos != cstr.size()) throw std::invalid_argument(cstr);
            }
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric value");
        }
        s.push(parse_iso8601(tstr), g, gc);
    }
    if (!with_clear) s.ghi_clear.clear();
    return s;
}

} // namespace heliocast
