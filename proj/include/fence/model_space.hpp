#pragma once

#include "fence/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fence {

// -------------------------------------------------------------------------
// Dataset
// -------------------------------------------------------------------------

/// Cluster structure. `cluster` holds one id per observation (the community
/// in the two-level case); `family` is empty for one-level grouping.
struct Grouping {
    std::vector<long> cluster;
    std::vector<long> family;

    bool two_level() const { return !family.empty(); }
};

/// Dense 0-based cluster index per observation, in order of first appearance.
struct ClusterIndex {
    std::vector<int> of;
    int count = 0;
};

inline ClusterIndex dense_index(const std::vector<long>& ids) {
    ClusterIndex out;
    out.of.reserve(ids.size());
    std::unordered_map<long, int> seen;
    for (long id : ids) {
        auto [it, inserted] = seen.emplace(id, out.count);
        if (inserted) ++out.count;
        out.of.push_back(it->second);
    }
    return out;
}

struct Dataset {
    Eigen::VectorXd y;
    std::vector<std::string> names;     // candidate covariate names, one per column
    Eigen::MatrixXd covariates;         // n x K
    std::optional<Grouping> grouping;
    std::optional<Eigen::VectorXd> sampling_variances;

    Eigen::Index n() const { return y.size(); }
    int K() const { return static_cast<int>(names.size()); }

    int column_of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error(ErrorCode::UnknownName, "no covariate named '" + name + "'");
        return static_cast<int>(it - names.begin());
    }

    /// Throws InvalidDataset / InconsistentNesting on violated invariants.
    void validate() const {
        const auto n = y.size();
        if (n < 1) throw Error(ErrorCode::InvalidDataset, "dataset has no observations");
        if (covariates.rows() != n || covariates.cols() != static_cast<Eigen::Index>(names.size())) {
            throw Error(ErrorCode::InvalidDataset, "covariate matrix shape does not match response/names");
        }
        std::set<std::string> uniq(names.begin(), names.end());
        if (uniq.size() != names.size()) throw Error(ErrorCode::InvalidDataset, "duplicate covariate names");
        if (sampling_variances) {
            if (sampling_variances->size() != n)
                throw Error(ErrorCode::InvalidDataset, "sampling variances length mismatch");
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!((*sampling_variances)(i) > 0.0))
                    throw Error(ErrorCode::InvalidDataset,
                                "sampling variance at row " + std::to_string(i + 1) + " is not strictly positive");
            }
        }
        if (grouping) {
            if (static_cast<Eigen::Index>(grouping->cluster.size()) != n)
                throw Error(ErrorCode::InvalidDataset, "cluster id length mismatch");
            if (grouping->two_level()) {
                if (static_cast<Eigen::Index>(grouping->family.size()) != n)
                    throw Error(ErrorCode::InvalidDataset, "family id length mismatch");
                std::map<long, long> parent;
                for (Eigen::Index i = 0; i < n; ++i) {
                    auto [it, inserted] = parent.emplace(grouping->family[i], grouping->cluster[i]);
                    if (!inserted && it->second != grouping->cluster[i]) {
                        throw Error(ErrorCode::InconsistentNesting,
                                    "family " + std::to_string(grouping->family[i]) +
                                        " appears under communities " + std::to_string(it->second) +
                                        " and " + std::to_string(grouping->cluster[i]));
                    }
                }
            }
        }
    }
};

// -------------------------------------------------------------------------
// Candidate models
// -------------------------------------------------------------------------

struct CandidateModel {
    std::string id;
    std::vector<std::string> fixed_effects;    // in dataset column order
    std::vector<std::string> random_effects;   // sorted
    int dimension = 0;

    friend bool operator==(const CandidateModel& a, const CandidateModel& b) { return a.id == b.id; }
};

namespace detail {

inline std::string join_sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += '+';
        out += v[i];
    }
    return out;
}

inline bool subset_of(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    return std::all_of(a.begin(), a.end(),
                       [&](const std::string& s) { return std::find(b.begin(), b.end(), s) != b.end(); });
}

}  // namespace detail

/// Stable report key: "x1+x3", or "community+family|x1+x3" with random effects.
inline std::string model_id(const std::vector<std::string>& fixed, const std::vector<std::string>& random) {
    std::string f = fixed.empty() ? std::string("<none>") : detail::join_sorted(fixed);
    if (random.empty()) return f;
    return detail::join_sorted(random) + "|" + f;
}

/// Builds a model over `dataset`'s columns; `extra_dimension` counts variance
/// parameters the measure estimates for every model.
inline CandidateModel make_model(const Dataset& dataset, std::vector<std::string> fixed,
                                 std::vector<std::string> random = {}, int extra_dimension = 0) {
    for (const auto& name : fixed) (void)dataset.column_of(name);
    std::sort(fixed.begin(), fixed.end(), [&](const std::string& a, const std::string& b) {
        return dataset.column_of(a) < dataset.column_of(b);
    });
    fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
    std::sort(random.begin(), random.end());
    random.erase(std::unique(random.begin(), random.end()), random.end());
    CandidateModel m;
    m.id = model_id(fixed, random);
    m.dimension = static_cast<int>(fixed.size() + random.size()) + extra_dimension;
    m.fixed_effects = std::move(fixed);
    m.random_effects = std::move(random);
    return m;
}

inline bool is_submodel(const CandidateModel& a, const CandidateModel& b) {
    return detail::subset_of(a.fixed_effects, b.fixed_effects) &&
           detail::subset_of(a.random_effects, b.random_effects);
}

enum class SelectionClass { correct, underfit, overfit };

inline const char* to_string(SelectionClass c) {
    switch (c) {
        case SelectionClass::correct: return "correct";
        case SelectionClass::underfit: return "underfit";
        case SelectionClass::overfit: return "overfit";
    }
    return "?";
}

inline SelectionClass classify_selection(const CandidateModel& selected, const CandidateModel& truth) {
    const bool covers = is_submodel(truth, selected);
    if (!covers) return SelectionClass::underfit;
    if (is_submodel(selected, truth)) return SelectionClass::correct;
    return SelectionClass::overfit;
}

// -------------------------------------------------------------------------
// ModelSpace
// -------------------------------------------------------------------------

class ModelSpace {
public:
    ModelSpace() = default;

    explicit ModelSpace(std::vector<CandidateModel> models) : models_(std::move(models)) {
        if (models_.empty()) throw Error(ErrorCode::EmptySpace, "model space is empty");
        std::set<std::string> ids;
        for (std::size_t i = 0; i < models_.size(); ++i) {
            if (!ids.insert(models_[i].id).second)
                throw Error(ErrorCode::InvalidConfig, "duplicate model id '" + models_[i].id + "'");
            index_[models_[i].id] = i;
        }
        std::size_t widest = 0;
        auto width = [](const CandidateModel& m) { return m.fixed_effects.size() + m.random_effects.size(); };
        for (std::size_t i = 1; i < models_.size(); ++i)
            if (width(models_[i]) > width(models_[widest])) widest = i;
        const bool contains_all = std::all_of(models_.begin(), models_.end(), [&](const CandidateModel& m) {
            return is_submodel(m, models_[widest]);
        });
        if (contains_all) full_ = widest;
        int dmin = models_.front().dimension;
        for (const auto& m : models_) dmin = std::min(dmin, m.dimension);
        for (std::size_t i = 0; i < models_.size(); ++i)
            if (models_[i].dimension == dmin) minimal_.push_back(i);
        order_.resize(models_.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            if (models_[a].dimension != models_[b].dimension) return models_[a].dimension < models_[b].dimension;
            return models_[a].id < models_[b].id;
        });
    }

    std::size_t size() const { return models_.size(); }
    const std::vector<CandidateModel>& models() const { return models_; }
    const CandidateModel& operator[](std::size_t i) const { return models_[i]; }

    bool has_full_model() const { return full_.has_value(); }
    std::size_t full_index() const {
        if (!full_) throw Error(ErrorCode::InvalidConfig, "model space has no full model");
        return *full_;
    }
    const CandidateModel& full_model() const { return models_[full_index()]; }
    const std::vector<std::size_t>& minimal_indices() const { return minimal_; }

    std::optional<std::size_t> find(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Indices sorted by (dimension, id): the order in which tiers are walked.
    const std::vector<std::size_t>& tier_order() const { return order_; }

    std::vector<int> tiers() const {
        std::vector<int> d;
        for (auto i : order_)
            if (d.empty() || d.back() != models_[i].dimension) d.push_back(models_[i].dimension);
        return d;
    }

    /// Every model other than the full one sits inside some model with one
    /// fewer parameter than the full model.
    bool satisfies_adaptive_structure() const {
        if (!full_) return false;
        const int df = full_model().dimension;
        for (std::size_t i = 0; i < models_.size(); ++i) {
            if (i == *full_) continue;
            bool ok = false;
            for (const auto& outer : models_) {
                if (outer.dimension == df - 1 && is_submodel(models_[i], outer)) {
                    ok = true;
                    break;
                }
            }
            if (!ok) return false;
        }
        return true;
    }

private:
    std::vector<CandidateModel> models_;
    std::map<std::string, std::size_t> index_;
    std::optional<std::size_t> full_;
    std::vector<std::size_t> minimal_;
    std::vector<std::size_t> order_;
};

struct SpaceOptions {
    std::vector<std::string> fixed_random;       // random effects present in every model
    std::vector<std::string> selectable_random;  // random effects subject to selection
    int extra_dimension = 0;                     // measure-implied variance parameters
};

inline constexpr int kMaxFreeCandidates = 24;

/// All models containing `forced`: every subset of the remaining covariates
/// crossed with every subset of the selectable random effects.
inline ModelSpace enumerate_all_subsets(const Dataset& dataset, std::span<const std::string> forced,
                                        const SpaceOptions& options = {}) {
    std::vector<std::string> free;
    for (const auto& f : forced) (void)dataset.column_of(f);
    for (const auto& name : dataset.names)
        if (std::find(forced.begin(), forced.end(), name) == forced.end()) free.push_back(name);
    const std::size_t nfree = free.size() + options.selectable_random.size();
    if (nfree > static_cast<std::size_t>(kMaxFreeCandidates)) {
        throw Error(ErrorCode::TooManyCandidates,
                    std::to_string(nfree) + " free candidates exceeds the limit of " +
                        std::to_string(kMaxFreeCandidates));
    }
    std::vector<CandidateModel> models;
    models.reserve(std::size_t{1} << nfree);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nfree); ++mask) {
        std::vector<std::string> fixed(forced.begin(), forced.end());
        std::vector<std::string> random = options.fixed_random;
        for (std::size_t j = 0; j < nfree; ++j) {
            if (!(mask & (std::uint64_t{1} << j))) continue;
            if (j < free.size()) fixed.push_back(free[j]);
            else random.push_back(options.selectable_random[j - free.size()]);
        }
        models.push_back(make_model(dataset, std::move(fixed), std::move(random), options.extra_dimension));
    }
    return ModelSpace(std::move(models));
}

inline ModelSpace enumerate_all_subsets(const Dataset& dataset, std::initializer_list<std::string> forced,
                                        const SpaceOptions& options = {}) {
    std::vector<std::string> f(forced);
    return enumerate_all_subsets(dataset, std::span<const std::string>(f), options);
}

}  // namespace fence
