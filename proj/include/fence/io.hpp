#pragma once

// Dataset CSV ingestion and emission, JSON reports, and p* curve CSV.

#include "fence/adaptive.hpp"
#include "fence/error.hpp"
#include "fence/fence.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/simlab.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace fence {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string cell_location(std::size_t row, const std::string& column) {
    return "row " + std::to_string(row) + ", column '" + column + "'";
}

template <class T>
T parse_cell(std::string_view cell, std::size_t row, const std::string& column) {
    T value{};
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
    if (cell.empty() || ec != std::errc{} || ptr != end)
        throw Error(ErrorCode::NonNumericCell,
                    "cannot parse '" + std::string(cell) + "' at " + cell_location(row, column));
    return value;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parses CSV text with a header naming y, x1..xK, and optionally d, cluster,
/// or community and family. Rows are numbered from 1 after the header.
inline Dataset parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedHeader, "missing header row");
    const auto header_cells = detail::split_commas(line);
    std::vector<std::string> header(header_cells.begin(), header_cells.end());

    int y_col = -1, d_col = -1, cluster_col = -1, community_col = -1, family_col = -1;
    std::map<int, int> x_cols;  // covariate index -> column
    for (int j = 0; j < static_cast<int>(header.size()); ++j) {
        const auto& h = header[static_cast<std::size_t>(j)];
        auto claim = [&](int& slot) {
            if (slot >= 0) throw Error(ErrorCode::MalformedHeader, "duplicate column '" + h + "'");
            slot = j;
        };
        if (h == "y") claim(y_col);
        else if (h == "d") claim(d_col);
        else if (h == "cluster") claim(cluster_col);
        else if (h == "community") claim(community_col);
        else if (h == "family") claim(family_col);
        else if (h.size() > 1 && h[0] == 'x' && h.find_first_not_of("0123456789", 1) == std::string::npos) {
            const int k = std::stoi(h.substr(1));
            if (k < 1 || !x_cols.emplace(k, j).second)
                throw Error(ErrorCode::MalformedHeader, "bad or duplicate covariate column '" + h + "'");
        } else {
            throw Error(ErrorCode::MalformedHeader, "unrecognized column '" + h + "'");
        }
    }
    if (y_col < 0) throw Error(ErrorCode::MalformedHeader, "no response column 'y'");
    if (x_cols.empty()) throw Error(ErrorCode::MalformedHeader, "no covariate columns x1..xK");
    if (x_cols.rbegin()->first != static_cast<int>(x_cols.size()))
        throw Error(ErrorCode::MalformedHeader, "covariate columns must be x1..xK without gaps");
    if (cluster_col >= 0 && (community_col >= 0 || family_col >= 0))
        throw Error(ErrorCode::MalformedHeader, "use either 'cluster' or 'community'/'family', not both");
    if (family_col >= 0 && community_col < 0)
        throw Error(ErrorCode::MalformedHeader, "'family' needs a 'community' column");

    std::vector<double> ys, ds;
    std::vector<std::vector<double>> xs;
    std::vector<long> clusters, families;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size())
            throw Error(ErrorCode::MalformedHeader, "row " + std::to_string(row) + " has " +
                                                        std::to_string(cells.size()) + " cells, header has " +
                                                        std::to_string(header.size()));
        auto num = [&](int col) {
            return detail::parse_cell<double>(cells[static_cast<std::size_t>(col)], row, header[static_cast<std::size_t>(col)]);
        };
        auto id = [&](int col) {
            return detail::parse_cell<long>(cells[static_cast<std::size_t>(col)], row, header[static_cast<std::size_t>(col)]);
        };
        ys.push_back(num(y_col));
        std::vector<double> x;
        for (const auto& [k, col] : x_cols) x.push_back(num(col));
        xs.push_back(std::move(x));
        if (d_col >= 0) ds.push_back(num(d_col));
        if (cluster_col >= 0) clusters.push_back(id(cluster_col));
        if (community_col >= 0) clusters.push_back(id(community_col));
        if (family_col >= 0) families.push_back(id(family_col));
    }

    Dataset d;
    const auto n = static_cast<Eigen::Index>(ys.size());
    d.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
    for (const auto& [k, col] : x_cols) d.names.push_back("x" + std::to_string(k));
    d.covariates.resize(n, static_cast<Eigen::Index>(x_cols.size()));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d.covariates.cols(); ++j)
            d.covariates(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (d_col >= 0) d.sampling_variances = Eigen::Map<const Eigen::VectorXd>(ds.data(), n);
    if (!clusters.empty() || cluster_col >= 0 || community_col >= 0) d.grouping = Grouping{clusters, families};
    d.validate();
    return d;
}

inline Dataset ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "'");
    return parse_csv(in);
}

/// Writes a dataset in the format read by parse_csv, at full precision.
inline std::string dataset_csv(const Dataset& d) {
    std::ostringstream out;
    out << "y";
    for (const auto& nm : d.names) out << ',' << nm;
    if (d.sampling_variances) out << ",d";
    if (d.grouping) out << (d.grouping->two_level() ? ",community,family" : ",cluster");
    out << '\n';
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out << detail::format_double(d.y(i));
        for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) out << ',' << detail::format_double(d.covariates(i, j));
        if (d.sampling_variances) out << ',' << detail::format_double((*d.sampling_variances)(i));
        if (d.grouping) {
            const auto k = static_cast<std::size_t>(i);
            out << ',' << d.grouping->cluster[k];
            if (d.grouping->two_level()) out << ',' << d.grouping->family[k];
        }
        out << '\n';
    }
    return out.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "write to '" + path + "' failed");
}

// -------------------------------------------------------------------------
// JSON
// -------------------------------------------------------------------------

using json = nlohmann::json;

inline json model_json(const CandidateModel& m) {
    return {{"id", m.id}, {"fixed", m.fixed_effects}, {"random", m.random_effects}, {"dimension", m.dimension}};
}

inline json fit_json(const FitResult& f, const CandidateModel& m) {
    json theta = json::object();
    for (const auto& v : f.theta(m)) theta[v.name] = v.value;
    return {{"model", f.model_id}, {"qhat", f.qhat}, {"theta", theta}};
}

inline json outcome_json(const FenceOutcome& o) {
    json models = json::array();
    for (const auto& [id, q] : o.qhat)
        models.push_back({{"id", id}, {"qhat", q}, {"sigma", o.sigma.at(id)}, {"in_fence", o.in_fence.at(id)}});
    json j = {{"selected", o.selected ? json(o.selected->id) : json(nullptr)},
              {"reference", o.reference.id},
              {"c", o.c},
              {"tier_examined", o.tier_examined ? json(*o.tier_examined) : json(nullptr)},
              {"sigma_clamped", o.sigma_clamped},
              {"models", models}};
    return j;
}

inline json curve_json(const PStarCurve& c) {
    return {{"c", c.c_values}, {"pstar", c.pstar}, {"modal_model", c.modal_model}};
}

inline json adaptive_json(const AdaptiveReport& r) {
    auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    return {{"selected", r.selected.id},
            {"reference", r.reference.id},
            {"c_star", r.c_star},
            {"c_star_rule", to_string(r.rule)},
            {"c_star_raised", r.c_star_raised},
            {"upper_bound", r.upper_bound},
            {"q_star", opt(r.q_star)},
            {"r_star", opt(r.r_star)},
            {"d_star", opt(r.d_star)},
            {"consider_right_tail", opt(r.consider_right_tail)},
            {"baseline_adjusted", r.baseline_adjusted},
            {"step_one_model", opt(r.step_one_model)},
            {"curve", curve_json(r.curve)}};
}

/// Wall-clock timings vary between runs, so they are only emitted on request.
inline json study_json(const StudyResult& s, bool include_timing = false) {
    json counts = json::array();
    for (const auto& c : s.counts)
        counts.push_back({{"strategy", c.label},
                          {"correct", c.correct},
                          {"underfit", c.underfit},
                          {"overfit", c.overfit},
                          {"failed", c.failed}});
    json traces = json::array();
    for (const auto& t : s.traces) {
        json cs = json::array();
        for (const auto& c : t.c_star) cs.push_back(c ? json(*c) : json(nullptr));
        json tj = {{"replicate", t.replicate}, {"selected", t.selected}, {"c_star", cs}};
        if (include_timing) tj["seconds"] = t.seconds;
        traces.push_back(tj);
    }
    return {{"scenario", s.scenario},
            {"truth", s.truth},
            {"replications", s.replications},
            {"counts", counts},
            {"traces", traces}};
}

inline std::string curve_csv(const PStarCurve& c) {
    std::string out = "c,pstar\n";
    for (std::size_t j = 0; j < c.c_values.size(); ++j)
        out += detail::format_double(c.c_values[j]) + "," + detail::format_double(c.pstar[j]) + "\n";
    return out;
}

}  // namespace fence
