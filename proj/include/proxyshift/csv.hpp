#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "proxyshift/core.hpp"
#include "proxyshift/errors.hpp"

namespace proxyshift {

// Dataset CSV schema: header `m,y,x0,...,x{D-1}` with an optional trailing
// `y_oracle` column; m in {0,1}; y in {0,1} or empty exactly when m = 1;
// covariates in {0,1}.  Comma-delimited, no quoting.

struct LoadedCsv {
    Dataset dataset;
    // Full outcomes including the missing rows, present only when the file
    // carried the oracle column.
    std::optional<std::vector<std::uint8_t>> oracle_y;
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::uint8_t parse_bit(const std::string& s, const char* what,
                              std::size_t line) {
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw ParseError(std::string(what) + " must be 0 or 1, got '" + s + "'", line);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline LoadedCsv load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty file", 0);
    ++lineno;

    const auto header = detail::split_line(line);
    if (header.size() < 3 || header[0] != "m" || header[1] != "y")
        throw ParseError("header must start with m,y,x0,...", lineno);
    bool has_oracle = header.back() == "y_oracle";
    const std::size_t dim = header.size() - 2 - (has_oracle ? 1 : 0);
    if (dim == 0) throw ParseError("no covariate columns", lineno);
    for (std::size_t j = 0; j < dim; ++j)
        if (header[2 + j] != "x" + std::to_string(j))
            throw ParseError("covariate columns must be named x0..x" +
                                 std::to_string(dim - 1),
                             lineno);

    std::vector<Unit> units;
    std::vector<std::uint8_t> oracle;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = detail::split_line(line);
        if (fields.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) +
                                 " fields, got " + std::to_string(fields.size()),
                             lineno);
        Unit u;
        u.m = detail::parse_bit(fields[0], "m", lineno);
        if (u.m == 0) {
            if (fields[1].empty())
                throw ValidationError("row " + std::to_string(lineno) +
                                      ": observed unit is missing its outcome");
            u.y = detail::parse_bit(fields[1], "y", lineno);
        } else if (!fields[1].empty()) {
            throw ValidationError("row " + std::to_string(lineno) +
                                  ": outcome present although m = 1");
        }
        u.x.resize(dim);
        for (std::size_t j = 0; j < dim; ++j)
            u.x[j] = detail::parse_bit(fields[2 + j], "x", lineno);
        if (has_oracle) {
            const auto v = detail::parse_bit(fields.back(), "y_oracle", lineno);
            if (u.y && *u.y != v)
                throw ValidationError("row " + std::to_string(lineno) +
                                      ": y_oracle contradicts the observed outcome");
            oracle.push_back(v);
        }
        units.push_back(std::move(u));
    }
    if (units.empty()) throw ParseError("no data rows", lineno);

    LoadedCsv out{Dataset(std::move(units), dim), std::nullopt};
    if (has_oracle) out.oracle_y = std::move(oracle);
    return out;
}

// `oracle_y` must cover every unit when provided; emitting it is gated
// behind this explicit argument so ground truth never leaks by default.
inline void write_dataset_csv(const Dataset& dataset, const std::string& path,
                              const std::vector<std::uint8_t>* oracle_y = nullptr) {
    if (oracle_y && oracle_y->size() != dataset.size())
        throw ArgumentError("oracle outcomes misaligned with dataset");
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "m,y";
    for (std::size_t j = 0; j < dataset.dim(); ++j) out << ",x" << j;
    if (oracle_y) out << ",y_oracle";
    out << "\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Unit& u = dataset[i];
        out << int(u.m) << ",";
        if (u.y) out << int(*u.y);
        for (auto v : u.x) out << "," << int(v);
        if (oracle_y) out << "," << int((*oracle_y)[i]);
        out << "\n";
    }
}

}  // namespace proxyshift
