#pragma once

// Information-criterion comparators: minimize Q-hat_M + lambda * |M|.

#include "fence/error.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>

namespace fence {

enum class PenaltyRule { fixed, cp, bic, hq };

inline const char* to_string(PenaltyRule r) {
    switch (r) {
        case PenaltyRule::fixed: return "fixed";
        case PenaltyRule::cp: return "cp";
        case PenaltyRule::bic: return "bic";
        case PenaltyRule::hq: return "hq";
    }
    return "?";
}

struct GicConfig {
    PenaltyRule rule = PenaltyRule::bic;
    double value = 0.0;   // lambda for fixed, the constant c for hq
    long sample_size = 0; // n in log n and log log n

    static GicConfig fixed(double lambda) { return {PenaltyRule::fixed, lambda, 0}; }
    static GicConfig cp() { return {PenaltyRule::cp, 0.0, 0}; }
    static GicConfig bic(long n) { return {PenaltyRule::bic, 0.0, n}; }
    static GicConfig hq(double c, long n) { return {PenaltyRule::hq, c, n}; }

    double lambda() const {
        switch (rule) {
            case PenaltyRule::fixed:
                if (!(value >= 0.0)) throw Error(ErrorCode::InvalidConfig, "GIC penalty must be >= 0");
                return value;
            case PenaltyRule::cp: return 2.0;
            case PenaltyRule::bic:
                if (sample_size < 2) throw Error(ErrorCode::InvalidConfig, "BIC needs a sample size >= 2");
                return std::log(static_cast<double>(sample_size));
            case PenaltyRule::hq:
                if (!(value > 2.0)) throw Error(ErrorCode::InvalidConfig, "HQ constant must exceed 2");
                if (sample_size < 3) throw Error(ErrorCode::InvalidConfig, "HQ needs a sample size >= 3");
                return value * std::log(std::log(static_cast<double>(sample_size)));
        }
        throw Error(ErrorCode::InvalidConfig, "unknown penalty rule");
    }
};

/// Minimizer of Q-hat + lambda * dimension; ties go to the smaller dimension,
/// then the smaller id.
inline CandidateModel gic_select(const ModelSpace& space, const std::map<std::string, FitResult>& fits,
                                 const GicConfig& config) {
    if (space.size() == 0) throw Error(ErrorCode::EmptySpace, "model space is empty");
    const double lambda = config.lambda();
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (auto i : space.tier_order()) {
        auto it = fits.find(space[i].id);
        if (it == fits.end()) throw Error(ErrorCode::MissingFit, "no fit for " + space[i].id);
        const double score = it->second.qhat + lambda * space[i].dimension;
        // tier_order is (dimension, id) ascending, so strict < implements the tie rule
        if (!best || score < best_score) {
            best = i;
            best_score = score;
        }
    }
    return space[*best];
}

}  // namespace fence
