#pragma once

// The fence inequality, the tier-by-tier selection walk, and the
// forward-backward fence.

#include "fence/error.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/sigma.hpp"

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fence {

/// Q_M <= Q_ref + c * sigma
inline bool in_fence(double qhat_model, double qhat_reference, double sigma, double c) {
    return qhat_model <= qhat_reference + c * sigma;
}

enum class ReferencePolicy { full_model, empirical_minimizer };

struct FenceConfig {
    double c = 1.0;
    SigmaKind sigma_kind = SigmaKind::chisq_approx;
    ReferencePolicy reference_policy = ReferencePolicy::full_model;
};

struct FenceOutcome {
    std::optional<CandidateModel> selected;  // empty only when an external reference admits no candidate
    CandidateModel reference;
    std::optional<int> tier_examined;
    double c = 0.0;
    std::map<std::string, bool> in_fence;
    std::map<std::string, double> qhat;
    std::map<std::string, double> sigma;
    bool sigma_clamped = false;
};

struct TierSelection {
    std::optional<std::size_t> index;
    std::optional<int> tier;
};

/// Walks tiers d_1 < d_2 < ... and stops at the first tier with a fence member;
/// returns that tier's Q-hat minimizer (ties to the smaller id). `qhat` and
/// `sigma` are indexed like `space`.
inline TierSelection select_in_fence(const ModelSpace& space, std::span<const double> qhat,
                                     std::span<const double> sigma, double qhat_reference, double c) {
    TierSelection out;
    const auto& order = space.tier_order();
    std::size_t pos = 0;
    while (pos < order.size()) {
        const int dim = space[order[pos]].dimension;
        std::optional<std::size_t> best;
        for (; pos < order.size() && space[order[pos]].dimension == dim; ++pos) {
            const auto i = order[pos];
            if (!in_fence(qhat[i], qhat_reference, sigma[i], c)) continue;
            // ids ascend within a tier, so strict < keeps the smallest id on ties
            if (!best || qhat[i] < qhat[*best]) best = i;
        }
        if (best) {
            out.index = best;
            out.tier = dim;
            return out;
        }
    }
    return out;
}

// -------------------------------------------------------------------------
// Selection tables: every model of a space fitted against one reference
// -------------------------------------------------------------------------

struct SelectionTable {
    std::vector<FitResult> fits;     // indexed like the space
    std::vector<double> qhat;
    std::vector<double> sigma;
    CandidateModel reference;
    FitResult reference_fit;
    bool sigma_clamped = false;
};

/// Fits every model and sizes the fence against `reference` (the space's full
/// model when absent). An external reference need not belong to the space.
inline SelectionTable evaluate_space(const ModelSpace& space, const Dataset& dataset, const MeasureKind& measure,
                                     SigmaKind sigma_kind, const std::optional<CandidateModel>& reference = {}) {
    SelectionTable t;
    t.fits.reserve(space.size());
    for (const auto& m : space.models()) t.fits.push_back(fit_model(dataset, m, measure));
    t.reference = reference ? *reference : space.full_model();
    if (auto idx = space.find(t.reference.id)) {
        t.reference_fit = t.fits[*idx];
    } else {
        t.reference_fit = fit_model(dataset, t.reference, measure);
    }
    const int m = static_cast<int>(dataset.n());
    t.qhat.resize(space.size());
    t.sigma.resize(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        t.qhat[i] = t.fits[i].qhat;
        const auto s = estimate_sigma(sigma_kind, space[i], t.reference, t.fits[i], t.reference_fit, m);
        t.sigma[i] = s.value;
        t.sigma_clamped = t.sigma_clamped || s.clamped;
    }
    return t;
}

inline FenceOutcome outcome_from_table(const ModelSpace& space, const SelectionTable& t, double c) {
    FenceOutcome out;
    out.reference = t.reference;
    out.c = c;
    out.sigma_clamped = t.sigma_clamped;
    const auto sel = select_in_fence(space, t.qhat, t.sigma, t.reference_fit.qhat, c);
    if (sel.index) out.selected = space[*sel.index];
    out.tier_examined = sel.tier;
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& id = space[i].id;
        out.qhat[id] = t.qhat[i];
        out.sigma[id] = t.sigma[i];
        out.in_fence[id] = in_fence(t.qhat[i], t.reference_fit.qhat, t.sigma[i], c);
    }
    return out;
}

// -------------------------------------------------------------------------
// fence_select on precomputed fits
// -------------------------------------------------------------------------

/// Fence selection from per-model fits and sigmas (keyed by model id). With
/// ReferencePolicy::full_model the space must contain M_f; otherwise the
/// reference is the Q-hat minimizer.
inline FenceOutcome fence_select(const ModelSpace& space, const std::map<std::string, FitResult>& fits,
                                 const std::map<std::string, double>& sigmas, const FenceConfig& config) {
    if (space.size() == 0) throw Error(ErrorCode::EmptySpace, "model space is empty");
    if (config.c < 0) throw Error(ErrorCode::InvalidConfig, "c must be >= 0");
    std::vector<double> q(space.size()), s(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const auto& id = space[i].id;
        auto f = fits.find(id);
        auto g = sigmas.find(id);
        if (f == fits.end() || g == sigmas.end()) throw Error(ErrorCode::MissingFit, "no fit or sigma for " + id);
        q[i] = f->second.qhat;
        s[i] = g->second;
    }
    std::size_t ref = 0;
    if (config.reference_policy == ReferencePolicy::full_model && space.has_full_model()) {
        ref = space.full_index();
    } else {
        for (std::size_t i = 1; i < space.size(); ++i)
            if (q[i] < q[ref] || (q[i] == q[ref] && space[i].id < space[ref].id)) ref = i;
    }
    FenceOutcome out;
    out.reference = space[ref];
    out.c = config.c;
    const auto sel = select_in_fence(space, q, s, q[ref], config.c);
    if (sel.index) out.selected = space[*sel.index];
    out.tier_examined = sel.tier;
    for (std::size_t i = 0; i < space.size(); ++i) {
        out.qhat[space[i].id] = q[i];
        out.sigma[space[i].id] = s[i];
        out.in_fence[space[i].id] = in_fence(q[i], q[ref], s[i], config.c);
    }
    return out;
}

/// Convenience: fit the whole space and select.
inline FenceOutcome fence_select(const ModelSpace& space, const Dataset& dataset, const MeasureKind& measure,
                                 const FenceConfig& config) {
    if (config.reference_policy == ReferencePolicy::full_model && space.has_full_model()) {
        return outcome_from_table(space, evaluate_space(space, dataset, measure, config.sigma_kind), config.c);
    }
    std::map<std::string, FitResult> fits;
    for (const auto& m : space.models()) fits.emplace(m.id, fit_model(dataset, m, measure));
    const auto ref_it = std::min_element(fits.begin(), fits.end(), [](const auto& a, const auto& b) {
        return a.second.qhat < b.second.qhat;  // map order breaks ties by id
    });
    const auto& ref_model = space[*space.find(ref_it->first)];
    std::map<std::string, double> sigmas;
    for (const auto& m : space.models()) {
        sigmas[m.id] = estimate_sigma(config.sigma_kind, m, ref_model, fits.at(m.id), ref_it->second,
                                      static_cast<int>(dataset.n()))
                           .value;
    }
    return fence_select(space, fits, sigmas, config);
}

// -------------------------------------------------------------------------
// Forward-backward fence
// -------------------------------------------------------------------------

using FitFunction = std::function<FitResult(const CandidateModel&)>;
using SigmaFunction =
    std::function<SigmaEstimate(const CandidateModel&, const CandidateModel&, const FitResult&, const FitResult&)>;

struct FbTrace {
    std::vector<std::string> forward;   // M_1, M_2, ... ids
    std::vector<std::string> backward;  // successive replacements
};

/// Forward: M_1 is the best minimal-dimension model; each step adds one
/// parameter greedily until a model enters the fence. Backward: while a
/// submodel with one parameter fewer is in the fence, move to the one with the
/// smallest Q-hat (ties by id). The reference is the full model.
inline FenceOutcome fb_fence(const ModelSpace& space, const FitFunction& fit, const SigmaFunction& sigma, double c,
                             FbTrace* trace = nullptr) {
    if (space.size() == 0) throw Error(ErrorCode::EmptySpace, "model space is empty");
    if (c < 0) throw Error(ErrorCode::InvalidConfig, "c must be >= 0");
    const auto& full = space.full_model();
    std::map<std::string, FitResult> cache;
    auto get = [&](const CandidateModel& m) -> const FitResult& {
        auto it = cache.find(m.id);
        if (it == cache.end()) it = cache.emplace(m.id, fit(m)).first;
        return it->second;
    };
    const FitResult full_fit = get(full);

    FenceOutcome out;
    out.reference = full;
    out.c = c;
    auto check = [&](const CandidateModel& m) {
        const auto& f = get(m);
        const auto s = sigma(m, full, f, full_fit);
        const bool inside = in_fence(f.qhat, full_fit.qhat, s.value, c);
        out.qhat[m.id] = f.qhat;
        out.sigma[m.id] = s.value;
        out.in_fence[m.id] = inside;
        out.sigma_clamped = out.sigma_clamped || s.clamped;
        return inside;
    };
    auto better = [&](const CandidateModel& a, const CandidateModel& b) {
        const double qa = get(a).qhat, qb = get(b).qhat;
        return qa < qb || (qa == qb && a.id < b.id);
    };

    // forward
    const CandidateModel* current = nullptr;
    for (auto i : space.minimal_indices())
        if (!current || better(space[i], *current)) current = &space[i];
    if (trace) trace->forward.push_back(current->id);
    while (!check(*current)) {
        const CandidateModel* next = nullptr;
        for (const auto& m : space.models()) {
            if (m.dimension != current->dimension + 1 || !is_submodel(*current, m)) continue;
            if (!next || better(m, *next)) next = &m;
        }
        if (!next) {
            // no one-step extension exists; the full model is always inside
            current = &full;
            if (trace) trace->forward.push_back(current->id);
            (void)check(*current);
            break;
        }
        current = next;
        if (trace) trace->forward.push_back(current->id);
    }

    // backward
    for (;;) {
        const CandidateModel* next = nullptr;
        for (const auto& m : space.models()) {
            if (m.dimension != current->dimension - 1 || !is_submodel(m, *current)) continue;
            if (!check(m)) continue;
            if (!next || better(m, *next)) next = &m;
        }
        if (!next) break;
        current = next;
        if (trace) trace->backward.push_back(current->id);
    }
    out.selected = *current;
    out.tier_examined = current->dimension;
    return out;
}

inline FenceOutcome fb_fence(const ModelSpace& space, const Dataset& dataset, const MeasureKind& measure,
                             SigmaKind sigma_kind, double c, FbTrace* trace = nullptr) {
    const int m = static_cast<int>(dataset.n());
    return fb_fence(
        space, [&](const CandidateModel& model) { return fit_model(dataset, model, measure); },
        [&, m](const CandidateModel& a, const CandidateModel& ref, const FitResult& fa, const FitResult& fr) {
            return estimate_sigma(sigma_kind, a, ref, fa, fr, m);
        },
        c, trace);
}

}  // namespace fence
