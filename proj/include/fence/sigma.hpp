#pragma once

// Estimators of the standard deviation of Q-hat_M - Q-hat_ref used to size
// the fence.

#include "fence/error.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/numerics.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <tuple>

namespace fence {

enum class SigmaKind { chisq_approx, exact_f_numeric, observed_variance };

inline const char* to_string(SigmaKind k) {
    switch (k) {
        case SigmaKind::chisq_approx: return "chisq_approx";
        case SigmaKind::exact_f_numeric: return "exact_f_numeric";
        case SigmaKind::observed_variance: return "observed_variance";
    }
    return "?";
}

struct SigmaEstimate {
    double value = 0.0;
    bool clamped = false;  // plug-in variance was negative and clamped to zero
};

/// sqrt((|ref| - |M|)/2), from the chi-square law of twice the ML deviance gap.
inline double sigma_chisq_approx(const CandidateModel& model, const CandidateModel& reference) {
    if (!is_submodel(model, reference) || reference.dimension < model.dimension) {
        throw Error(ErrorCode::NotFullModelReference,
                    "reference '" + reference.id + "' does not contain '" + model.id + "'");
    }
    return std::sqrt(0.5 * (reference.dimension - model.dimension));
}

/// Exact sd of the Fay-Herriot ML gap. The full design has K+1 columns and the
/// candidate p+1, so K and p come from the column counts of the two models.
inline double sigma_exact_f(const CandidateModel& model, const CandidateModel& reference, int m) {
    if (!is_submodel(model, reference)) {
        throw Error(ErrorCode::NotFullModelReference,
                    "reference '" + reference.id + "' does not contain '" + model.id + "'");
    }
    const int K = static_cast<int>(reference.fixed_effects.size()) - 1;
    const int p = static_cast<int>(model.fixed_effects.size()) - 1;
    // memoized: the value depends on (m, K, p) only
    static std::mutex mutex;
    static std::map<std::tuple<int, int, int>, double> cache;
    const auto key = std::make_tuple(m, K, p);
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    const double value = f_distribution_sd_of_gap(m, K, p);
    std::lock_guard lock(mutex);
    cache.emplace(key, value);
    return value;
}

/// sqrt(max(0, sum_i (Q_{M,i} - Q_{ref,i})^2 - sum_i (E_{M,i} - E_{ref,i})^2)).
inline SigmaEstimate sigma_observed_variance(std::span<const double> q_model, std::span<const double> q_reference,
                                             std::span<const double> e_model, std::span<const double> e_reference) {
    const std::size_t m = q_model.size();
    if (q_reference.size() != m || e_model.size() != m || e_reference.size() != m) {
        throw Error(ErrorCode::LengthMismatch, "per-cluster sequences must share one length");
    }
    if (m < 2) throw Error(ErrorCode::LengthMismatch, "need at least two clusters");
    double s2 = 0.0;
    double e2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double d = q_model[i] - q_reference[i];
        const double e = e_model[i] - e_reference[i];
        s2 += d * d;
        e2 += e * e;
    }
    const double v = s2 - e2;
    return {std::sqrt(std::max(0.0, v)), v < 0.0};
}

/// Plug-in observed variance from two fits: each cluster's expected difference
/// is estimated by the cross-cluster mean of the observed differences.
inline SigmaEstimate sigma_observed_variance(const FitResult& model_fit, const FitResult& reference_fit) {
    const auto& a = model_fit.per_cluster_q;
    const auto& b = reference_fit.per_cluster_q;
    if (a.size() == 0 || b.size() == 0)
        throw Error(ErrorCode::InvalidConfig, "observed-variance sigma needs per-cluster Q contributions");
    if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "per-cluster Q lengths differ");
    const double mean_diff = (a - b).mean();
    const Eigen::VectorXd e_model = Eigen::VectorXd::Constant(a.size(), mean_diff);
    const Eigen::VectorXd e_ref = Eigen::VectorXd::Zero(a.size());
    return sigma_observed_variance(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                   std::span<const double>(b.data(), static_cast<std::size_t>(b.size())),
                                   std::span<const double>(e_model.data(), static_cast<std::size_t>(a.size())),
                                   std::span<const double>(e_ref.data(), static_cast<std::size_t>(a.size())));
}

/// Dispatch on SigmaKind. `m` is the number of areas for exact_f_numeric.
inline SigmaEstimate estimate_sigma(SigmaKind kind, const CandidateModel& model, const CandidateModel& reference,
                                    const FitResult& model_fit, const FitResult& reference_fit, int m) {
    switch (kind) {
        case SigmaKind::chisq_approx: return {sigma_chisq_approx(model, reference), false};
        case SigmaKind::exact_f_numeric: return {sigma_exact_f(model, reference, m), false};
        case SigmaKind::observed_variance:
            if (model.id == reference.id) return {0.0, false};
            return sigma_observed_variance(model_fit, reference_fit);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown sigma kind");
}

}  // namespace fence
