// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cmrec/common/errors.hpp"

namespace cmrec::exp {

/// One table cell: test nDCG@10 plus the significance flags that render as
/// the caption symbols (vs single-market †, unaware ‡, MAML *, FOREC +).
struct Cell {
    double value = 0.0;
    bool present = false;
    bool best = false;
    bool sig_single = false;
    bool sig_unaware = false;
    bool sig_maml = false;
    bool sig_forec = false;
    std::string provenance; // run-artifact directory of the backing cell
};

/// Methods × target markets grid in the shape of the published tables.
struct ResultsTable {
    std::string title;
    std::vector<std::string> methods;
    std::vector<std::string> markets;
    std::vector<std::vector<Cell>> cells; // [method][market]
    int sig_m = 9;

    Cell& at(std::size_t row, std::size_t col) { return cells.at(row).at(col); }
    const Cell& at(std::size_t row, std::size_t col) const { return cells.at(row).at(col); }

    static ResultsTable make(std::string title, std::vector<std::string> methods,
                             std::vector<std::string> markets, int sig_m) {
        ResultsTable t;
        t.title = std::move(title);
        t.methods = std::move(methods);
        t.markets = std::move(markets);
        t.sig_m = sig_m;
        t.cells.assign(t.methods.size(), std::vector<Cell>(t.markets.size()));
        return t;
    }

    /// Flags each column's maximum present value, exactly once (ties go to
    /// the topmost row).
    void mark_best() {
        for (std::size_t c = 0; c < markets.size(); ++c) {
            std::size_t arg = 0;
            bool any = false;
            for (std::size_t r = 0; r < methods.size(); ++r) {
                cells[r][c].best = false;
                if (cells[r][c].present && (!any || cells[r][c].value > cells[arg][c].value)) {
                    arg = r;
                    any = true;
                }
            }
            if (any) cells[arg][c].best = true;
        }
    }
};

namespace detail {
inline std::string cell_markers(const Cell& cell) {
    std::string s;
    if (cell.sig_single) s += "†";  // dagger
    if (cell.sig_unaware) s += "‡"; // double dagger
    if (cell.sig_maml) s += "*";
    if (cell.sig_forec) s += "+";
    return s;
}
} // namespace detail

/// Long-format CSV: one row per present cell with explicit flag columns.
inline std::string table_to_csv(const ResultsTable& t) {
    std::ostringstream out;
    out << "method,market,ndcg10,best,sig_single,sig_unaware,sig_maml,sig_forec,provenance\n";
    out.precision(17);
    for (std::size_t r = 0; r < t.methods.size(); ++r)
        for (std::size_t c = 0; c < t.markets.size(); ++c) {
            const Cell& cell = t.cells[r][c];
            if (!cell.present) continue;
            out << t.methods[r] << ',' << t.markets[c] << ',' << cell.value << ','
                << (cell.best ? 1 : 0) << ',' << (cell.sig_single ? 1 : 0) << ','
                << (cell.sig_unaware ? 1 : 0) << ',' << (cell.sig_maml ? 1 : 0) << ','
                << (cell.sig_forec ? 1 : 0) << ',' << cell.provenance << '\n';
        }
    return out.str();
}

inline nlohmann::json table_to_json(const ResultsTable& t) {
    nlohmann::json j;
    j["title"] = t.title;
    j["methods"] = t.methods;
    j["markets"] = t.markets;
    j["sig_m"] = t.sig_m;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.cells) {
        nlohmann::json jr = nlohmann::json::array();
        for (const Cell& c : row)
            jr.push_back({{"value", c.value},
                          {"present", c.present},
                          {"best", c.best},
                          {"sig_single", c.sig_single},
                          {"sig_unaware", c.sig_unaware},
                          {"sig_maml", c.sig_maml},
                          {"sig_forec", c.sig_forec},
                          {"provenance", c.provenance}});
        rows.push_back(std::move(jr));
    }
    j["cells"] = std::move(rows);
    return j;
}

inline ResultsTable table_from_json(const nlohmann::json& j) {
    ResultsTable t = ResultsTable::make(j.at("title").get<std::string>(),
                                        j.at("methods").get<std::vector<std::string>>(),
                                        j.at("markets").get<std::vector<std::string>>(),
                                        j.at("sig_m").get<int>());
    const auto& rows = j.at("cells");
    for (std::size_t r = 0; r < t.methods.size(); ++r)
        for (std::size_t c = 0; c < t.markets.size(); ++c) {
            const auto& jc = rows.at(r).at(c);
            Cell& cell = t.cells[r][c];
            cell.value = jc.at("value").get<double>();
            cell.present = jc.at("present").get<bool>();
            cell.best = jc.at("best").get<bool>();
            cell.sig_single = jc.at("sig_single").get<bool>();
            cell.sig_unaware = jc.at("sig_unaware").get<bool>();
            cell.sig_maml = jc.at("sig_maml").get<bool>();
            cell.sig_forec = jc.at("sig_forec").get<bool>();
            cell.provenance = jc.at("provenance").get<std::string>();
        }
    return t;
}

/// Wide human-readable table. A leading '*' on a value marks the column
/// maximum (the paper's bold); trailing symbols are the significance scheme.
inline std::string table_to_text(const ResultsTable& t) {
    std::ostringstream out;
    out << t.title << " (significance threshold p < 0.05/" << t.sig_m << ")\n";
    std::size_t name_w = 8;
    for (const auto& m : t.methods) name_w = std::max(name_w, m.size());
    out << std::string(name_w, ' ');
    for (const auto& mk : t.markets) out << "  " << mk << std::string(mk.size() < 12 ? 12 - mk.size() : 1, ' ');
    out << '\n';
    for (std::size_t r = 0; r < t.methods.size(); ++r) {
        out << t.methods[r] << std::string(name_w - t.methods[r].size(), ' ');
        for (std::size_t c = 0; c < t.markets.size(); ++c) {
            const Cell& cell = t.cells[r][c];
            char buf[32];
            std::string s;
            if (cell.present) {
                std::snprintf(buf, sizeof buf, "%s%.4f", cell.best ? "*" : "", cell.value);
                s = buf + detail::cell_markers(cell);
            } else {
                s = "-";
            }
            // markers are multi-byte; pad on display width
            std::size_t width = 0;
            for (char ch : s)
                if ((ch & 0xc0) != 0x80) ++width;
            out << "  " << s << std::string(width < 12 ? 12 - width : 1, ' ');
        }
        out << '\n';
    }
    return out.str();
}

/// Writes the table in the requested format; files land under `stem` with
/// the format's extension.
inline void emit_results(const ResultsTable& t, const std::string& format,
                         const std::string& stem) {
    std::string path, body;
    if (format == "csv") {
        path = stem + ".csv";
        body = table_to_csv(t);
    } else if (format == "json") {
        path = stem + ".json";
        body = table_to_json(t).dump(1, '\t') + "\n";
    } else if (format == "text") {
        path = stem + ".txt";
        body = table_to_text(t);
    } else {
        throw ConfigError("unknown results format: " + format);
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << body;
    if (!out) throw DataError("failed writing: " + path);
}

} // namespace cmrec::exp
