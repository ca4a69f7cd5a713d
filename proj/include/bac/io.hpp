// Copyright 2026 The BAC Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bac/bua.hpp"
#include "bac/cache_engine.hpp"
#include "bac/error.hpp"
#include "bac/profiler.hpp"
#include "bac/scheduler.hpp"

namespace bac {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed for " + path);
}

// printf-style %.<digits>g.
inline std::string format_real(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline double round_significant(double v, int digits) { return std::strtod(format_real(v, digits).c_str(), nullptr); }

namespace detail {

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string where(int lineno) { return "line " + std::to_string(lineno) + ": "; }

inline double parse_real(const std::string& tok, int lineno) {
    const std::string t = trim(tok);
    if (t.empty()) throw ParseError(where(lineno) + "empty number");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || errno == ERANGE) throw ParseError(where(lineno) + "bad number '" + t + "'");
    return v;
}

inline long long parse_integer(const std::string& tok, int lineno) {
    const std::string t = trim(tok);
    if (t.empty()) throw ParseError(where(lineno) + "empty integer");
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (end != t.c_str() + t.size() || errno == ERANGE) throw ParseError(where(lineno) + "bad integer '" + t + "'");
    return v;
}

inline std::vector<double> parse_reals(const std::string& list, int lineno) {
    std::vector<double> out;
    for (const auto& tok : split(list, ',')) out.push_back(parse_real(tok, lineno));
    return out;
}

inline std::string join_reals(const std::vector<double>& xs, int digits) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += format_real(xs[i], digits);
    }
    return out;
}

inline long long header_value(const std::vector<std::string>& lines, std::size_t idx, std::string_view key) {
    const int lineno = static_cast<int>(idx) + 1;
    if (idx >= lines.size()) throw ParseError(where(lineno) + "missing " + std::string(key));
    const std::string& l = lines[idx];
    if (l.rfind(std::string(key) + "=", 0) != 0) throw ParseError(where(lineno) + "expected " + std::string(key) + "=<int>");
    return parse_integer(l.substr(key.size() + 1), lineno);
}

} // namespace detail

// ---------------------------------------------------------------------------
// .bacprof
//
//   BAC-PROFILE v1
//   K=<int>
//   BLOCKS=<int>
//   EPISODES=<int>                 (optional)
//   BLOCK layers.<l>.<SA|CA|FFN>
//   S: <K-1 comma-separated reals, 9 significant digits>
//   L1: <real, 17 significant digits>
//   A<i>: <K reals>                (optional, i = 0..K-1, anchored similarities)
//   ... one BLOCK group per block
// ---------------------------------------------------------------------------

inline constexpr int kProfileDigits = 9;

// Rounds similarities to the precision stored on disk, so that a written
// profile reads back bit-identical.
inline SimilarityProfile quantize_profile(SimilarityProfile p) {
    for (auto& bp : p.blocks) {
        for (double& v : bp.s) v = round_significant(v, kProfileDigits);
        bp.prefix = prefix_sums(bp.s);
        for (auto& row : bp.anchor)
            for (double& v : row) v = round_significant(v, kProfileDigits);
    }
    return p;
}

inline std::string write_profile(const SimilarityProfile& p) {
    std::ostringstream out;
    out << "BAC-PROFILE v1\n";
    out << "K=" << p.K << "\n";
    out << "BLOCKS=" << p.blocks.size() << "\n";
    out << "EPISODES=" << p.episode_count << "\n";
    for (std::size_t o = 0; o < p.blocks.size(); ++o) {
        const auto& bp = p.blocks[o];
        out << "BLOCK " << BlockId::from_ordinal(static_cast<int>(o)).name() << "\n";
        out << "S: " << detail::join_reals(bp.s, kProfileDigits) << "\n";
        out << "L1: " << format_real(bp.ell, 17) << "\n";
        for (std::size_t i = 0; i < bp.anchor.size(); ++i) {
            out << "A" << i << ": " << detail::join_reals(bp.anchor[i], kProfileDigits) << "\n";
        }
    }
    return out.str();
}

inline SimilarityProfile parse_profile(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || lines[0] != "BAC-PROFILE v1") throw ParseError("line 1: expected 'BAC-PROFILE v1'");
    SimilarityProfile p;
    const long long K = detail::header_value(lines, 1, "K");
    const long long nblocks = detail::header_value(lines, 2, "BLOCKS");
    if (K < 2 || K > 1'000'000) throw ParseError("line 2: K out of range");
    if (nblocks < 3 || nblocks % 3 != 0 || nblocks > 3'000'000) throw ParseError("line 3: BLOCKS must be a positive multiple of 3");
    p.K = static_cast<int>(K);
    p.episode_count = 1;
    std::size_t i = 3;
    if (i < lines.size() && lines[i].rfind("EPISODES=", 0) == 0) {
        p.episode_count = static_cast<int>(detail::header_value(lines, i, "EPISODES"));
        ++i;
    }
    std::vector<std::optional<BlockProfile>> slots(static_cast<std::size_t>(nblocks));
    while (i < lines.size()) {
        const int lineno = static_cast<int>(i) + 1;
        if (lines[i].empty()) {
            ++i;
            continue;
        }
        if (lines[i].rfind("BLOCK ", 0) != 0) throw ParseError(detail::where(lineno) + "expected BLOCK header");
        BlockId id;
        try {
            id = parse_block_name(detail::trim(lines[i].substr(6)));
        } catch (const ParseError& e) {
            throw ParseError(detail::where(lineno) + e.what());
        }
        if (id.ordinal() >= nblocks) throw ParseError(detail::where(lineno) + id.name() + " beyond BLOCKS");
        auto& slot = slots[static_cast<std::size_t>(id.ordinal())];
        if (slot) throw ParseError(detail::where(lineno) + "duplicate " + id.name());
        ++i;
        if (i >= lines.size() || lines[i].rfind("S: ", 0) != 0) throw ParseError(detail::where(lineno + 1) + "expected 'S: ' line");
        auto s = detail::parse_reals(lines[i].substr(3), lineno + 1);
        if (static_cast<long long>(s.size()) != K - 1) {
            throw ParseError(detail::where(lineno + 1) + "expected " + std::to_string(K - 1) + " similarities, got " +
                             std::to_string(s.size()));
        }
        ++i;
        if (i >= lines.size() || lines[i].rfind("L1: ", 0) != 0) throw ParseError(detail::where(lineno + 2) + "expected 'L1: ' line");
        const double ell = detail::parse_real(lines[i].substr(4), lineno + 2);
        if (!(ell >= 0.0)) throw ParseError(detail::where(lineno + 2) + "L1 must be nonnegative");
        ++i;
        BlockProfile bp = make_block_profile(std::move(s), ell);
        while (i < lines.size() && !lines[i].empty() && lines[i][0] == 'A') {
            const int ln = static_cast<int>(i) + 1;
            const auto colon = lines[i].find(": ");
            if (colon == std::string::npos) throw ParseError(detail::where(ln) + "expected 'A<i>: ' line");
            if (detail::parse_integer(lines[i].substr(1, colon - 1), ln) != static_cast<long long>(bp.anchor.size())) {
                throw ParseError(detail::where(ln) + "anchored rows out of order");
            }
            auto row = detail::parse_reals(lines[i].substr(colon + 2), ln);
            if (static_cast<long long>(row.size()) != K) throw ParseError(detail::where(ln) + "anchored row has wrong length");
            bp.anchor.push_back(std::move(row));
            ++i;
        }
        if (!bp.anchor.empty() && static_cast<long long>(bp.anchor.size()) != K) {
            throw ParseError(detail::where(static_cast<int>(i)) + "incomplete anchored matrix for " + id.name());
        }
        slot = std::move(bp);
    }
    for (std::size_t o = 0; o < slots.size(); ++o) {
        if (!slots[o]) throw ParseError("missing block " + BlockId::from_ordinal(static_cast<int>(o)).name());
        p.blocks.push_back(std::move(*slots[o]));
    }
    return p;
}

// ---------------------------------------------------------------------------
// .bacsched: one line per block in canonical order,
//   layers.<l>.<SA|CA|FFN>: c0,c1,...
// ---------------------------------------------------------------------------

inline std::string format_steps(const std::vector<int>& steps, std::string_view sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(steps[i]);
    }
    return out;
}

inline std::string write_schedule(const SchedulePlan& plan) {
    std::string out;
    for (std::size_t o = 0; o < plan.schedules.size(); ++o) {
        out += BlockId::from_ordinal(static_cast<int>(o)).name() + ": " + format_steps(plan.schedules[o].steps) + "\n";
    }
    return out;
}

namespace detail {

inline std::pair<BlockId, std::vector<int>> parse_block_line(const std::string& line, int lineno) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError(where(lineno) + "expected '<block>: <steps>'");
    BlockId id;
    try {
        id = parse_block_name(trim(line.substr(0, colon)));
    } catch (const ParseError& e) {
        throw ParseError(where(lineno) + e.what());
    }
    std::vector<int> steps;
    const std::string rest = trim(line.substr(colon + 1));
    if (!rest.empty()) {
        for (const auto& tok : split(rest, ',')) {
            const long long v = parse_integer(tok, lineno);
            if (v < 0 || v > 1'000'000'000) throw ParseError(where(lineno) + "step out of range");
            steps.push_back(static_cast<int>(v));
        }
    }
    return {id, std::move(steps)};
}

} // namespace detail

// Parses a schedule file against horizon K. Every block of a contiguous
// range of layers must appear exactly once.
inline SchedulePlan parse_schedule(std::string_view text, int K) {
    const auto lines = detail::split_lines(text);
    std::map<int, Schedule> by_ordinal;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int lineno = static_cast<int>(i) + 1;
        if (detail::trim(lines[i]).empty()) continue;
        auto [id, steps] = detail::parse_block_line(lines[i], lineno);
        if (by_ordinal.count(id.ordinal())) throw ParseError(detail::where(lineno) + "duplicate " + id.name());
        Schedule c{std::move(steps), K};
        try {
            validate(c);
        } catch (const ScheduleError& e) {
            throw ParseError(detail::where(lineno) + id.name() + ": " + e.what());
        }
        by_ordinal.emplace(id.ordinal(), std::move(c));
    }
    if (by_ordinal.empty()) throw ParseError("schedule file lists no blocks");
    const int n = by_ordinal.rbegin()->first + 1;
    if (n % 3 != 0) throw ParseError("schedule file ends mid-layer");
    SchedulePlan plan{n / 3, K, {}};
    for (int o = 0; o < n; ++o) {
        auto it = by_ordinal.find(o);
        if (it == by_ordinal.end()) throw ParseError("missing block " + BlockId::from_ordinal(o).name());
        plan.schedules.push_back(std::move(it->second));
    }
    return plan;
}

// Added-steps diff, one line per block that gained steps:
//   layers.<l>.<KIND>: a, b, c
inline std::string write_added_steps(const std::map<BlockId, std::vector<int>>& added) {
    std::string out;
    for (const auto& [id, steps] : added) out += id.name() + ": " + format_steps(steps, ", ") + "\n";
    return out;
}

inline std::map<BlockId, std::vector<int>> parse_added_steps(std::string_view text) {
    std::map<BlockId, std::vector<int>> out;
    const auto lines = detail::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) continue;
        auto [id, steps] = detail::parse_block_line(lines[i], static_cast<int>(i) + 1);
        out[id] = std::move(steps);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports: ordered key=value lines.
// ---------------------------------------------------------------------------

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline const std::vector<std::string>& mandatory_report_keys() {
    static const std::vector<std::string> keys{"flops_full", "flops_cached", "speedup", "final_action_l2"};
    return keys;
}

inline KeyValues report_entries(const RunReport& r, const DenoiserConfig& config, const SchedulePlan& plan,
                                std::string_view prefix = "") {
    const FlopsEstimate est = flops_estimate(config, plan);
    const std::string p(prefix);
    KeyValues kv{
        {p + "flops_full", std::to_string(r.flops_full)},
        {p + "flops_cached", std::to_string(r.flops_cached)},
        {p + "speedup", format_real(r.speedup, 17)},
        {p + "block_flops_full", std::to_string(est.block_full)},
        {p + "block_flops_cached", std::to_string(est.block_cached)},
        {p + "block_speedup", format_real(r.block_speedup, 17)},
        {p + "reuse_adds", std::to_string(r.reuse_adds)},
        {p + "final_action_l2", format_real(r.final_action_l2, 17)},
    };
    for (int o = 0; o < r.layers * 3; ++o) {
        const BlockId id = BlockId::from_ordinal(o);
        kv.emplace_back(p + "mean_error." + id.name(), format_real(r.mean_error(id), 17));
    }
    return kv;
}

inline std::string write_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

inline KeyValues parse_key_values(std::string_view text) {
    KeyValues kv;
    std::set<std::string> seen;
    const auto lines = detail::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int lineno = static_cast<int>(i) + 1;
        if (lines[i].empty()) continue;
        const auto eq = lines[i].find('=');
        if (eq == std::string::npos || eq == 0) throw ParseError(detail::where(lineno) + "expected key=value");
        std::string key = lines[i].substr(0, eq);
        if (!seen.insert(key).second) throw ParseError(detail::where(lineno) + "duplicate key " + key);
        kv.emplace_back(std::move(key), lines[i].substr(eq + 1));
    }
    return kv;
}

// Parses a run report, checking the mandatory keys.
inline KeyValues parse_report(std::string_view text) {
    KeyValues kv = parse_key_values(text);
    for (const auto& key : mandatory_report_keys()) {
        bool found = false;
        for (const auto& [k, v] : kv) found = found || k == key;
        if (!found) throw ParseError("report is missing mandatory key " + key);
    }
    return kv;
}

inline const std::string* find_value(const KeyValues& kv, std::string_view key) {
    for (const auto& [k, v] : kv)
        if (k == key) return &v;
    return nullptr;
}

// ---------------------------------------------------------------------------
// CSV dumps.
// ---------------------------------------------------------------------------

// Rows are blocks in canonical order, columns are steps.
inline std::string write_surface_csv(const Matrix& values, int digits = 17) {
    std::string out = "block";
    for (std::size_t t = 0; t < values.cols(); ++t) out += "," + std::to_string(t);
    out += "\n";
    for (std::size_t o = 0; o < values.rows(); ++o) {
        out += BlockId::from_ordinal(static_cast<int>(o)).name();
        for (std::size_t t = 0; t < values.cols(); ++t) out += "," + format_real(values(o, t), digits);
        out += "\n";
    }
    return out;
}

inline std::string write_surface_csv(const ErrorSurface& s) { return write_surface_csv(s.errors); }

inline std::string write_mask_csv(const ErrorSurface& s) {
    Matrix m(static_cast<std::size_t>(s.layers) * 3, static_cast<std::size_t>(s.K));
    for (std::size_t i = 0; i < s.update_mask.size(); ++i) m.flat()[i] = s.update_mask[i];
    return write_surface_csv(m);
}

inline Matrix parse_surface_csv(std::string_view text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || lines[0].rfind("block", 0) != 0) throw ParseError("line 1: expected CSV header");
    const std::size_t cols = detail::split(lines[0], ',').size() - 1;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cells = detail::split(lines[i], ',');
        if (cells.size() != cols + 1) throw ParseError(detail::where(static_cast<int>(i) + 1) + "wrong column count");
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(detail::parse_real(cells[c], static_cast<int>(i) + 1));
        rows.push_back(std::move(row));
    }
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
    return m;
}

// Two-column numeric curve with a header row.
inline std::string write_curve_csv(std::string_view x_name, std::string_view y_name, const std::vector<double>& x,
                                   const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("curve columns differ in length");
    std::string out = std::string(x_name) + "," + std::string(y_name) + "\n";
    for (std::size_t i = 0; i < x.size(); ++i) out += format_real(x[i], 17) + "," + format_real(y[i], 17) + "\n";
    return out;
}

// Plain K×K numeric matrix.
inline std::string write_matrix_csv(const Matrix& m) {
    std::string out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out += ",";
            out += format_real(m(r, c), 17);
        }
        out += "\n";
    }
    return out;
}

} // namespace bac
