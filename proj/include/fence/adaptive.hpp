#pragma once

// Bootstrap calibration of the fence width: the p*(c) curve, the peak rule,
// screen tests, baseline adjustment with threshold checking, and the
// two-step variant.

#include "fence/error.hpp"
#include "fence/fence.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/numerics.hpp"
#include "fence/sigma.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fence {

enum class AdaptiveStrategy { screen_tests, baseline_threshold, none };
enum class BaselineDistribution { standard_normal, uniform01 };

inline const char* to_string(AdaptiveStrategy s) {
    switch (s) {
        case AdaptiveStrategy::screen_tests: return "screen_tests";
        case AdaptiveStrategy::baseline_threshold: return "baseline_threshold";
        case AdaptiveStrategy::none: return "none";
    }
    return "?";
}

inline const char* to_string(BaselineDistribution b) {
    return b == BaselineDistribution::standard_normal ? "standard_normal" : "uniform01";
}

/// Normalizing rates of the screen tests. Unset a_n / g_n default to the
/// number of areas (clusters, or observations without grouping).
struct ScreenRates {
    std::optional<double> a_n;
    double b_n = 1.0;
    std::optional<double> g_n;
    double h_n = 1.0;
};

struct AdaptiveConfig {
    int bootstrap_B = 100;
    int grid_points = 101;
    AdaptiveStrategy strategy = AdaptiveStrategy::screen_tests;
    bool two_step = false;
    ScreenRates rates;
    BaselineDistribution baseline = BaselineDistribution::standard_normal;

    void validate() const {
        if (bootstrap_B < 2) throw Error(ErrorCode::InvalidConfig, "bootstrap_B must be >= 2");
        if (grid_points < 3) throw Error(ErrorCode::InvalidConfig, "grid_points must be >= 3");
        auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
        if ((rates.a_n && !positive(*rates.a_n)) || (rates.g_n && !positive(*rates.g_n)) || !positive(rates.b_n) ||
            !positive(rates.h_n))
            throw Error(ErrorCode::InvalidConfig, "screen-test rates must be positive");
    }
};

struct PStarCurve {
    std::vector<double> c_values;
    std::vector<double> pstar;
    std::vector<std::string> modal_model;  // empty string when no bootstrap fence admitted a model
};

enum class CStarRule { peak, full_model_test, minimum_model_test, fallback };

inline const char* to_string(CStarRule r) {
    switch (r) {
        case CStarRule::peak: return "peak";
        case CStarRule::full_model_test: return "full_model_test";
        case CStarRule::minimum_model_test: return "minimum_model_test";
        case CStarRule::fallback: return "fallback";
    }
    return "?";
}

struct AdaptiveReport {
    PStarCurve curve;
    double upper_bound = 0.0;       // B*
    double c_star = 0.0;            // width actually used for the final fence
    CStarRule rule = CStarRule::peak;
    bool c_star_raised = false;     // widened because the final fence was empty
    std::optional<double> q_star;
    std::optional<double> r_star;
    std::optional<double> d_star;
    std::optional<bool> consider_right_tail;
    CandidateModel selected;
    CandidateModel reference;
    bool baseline_adjusted = false;
    std::optional<std::string> step_one_model;  // two-step only
};

// -------------------------------------------------------------------------
// Parametric bootstrap
// -------------------------------------------------------------------------

namespace detail {

inline int area_count(const Dataset& d) {
    if (d.grouping) return dense_index(d.grouping->cluster).count;
    return static_cast<int>(d.n());
}

/// Observation indices of each cluster, clusters in order of first appearance.
inline std::vector<std::vector<Eigen::Index>> cluster_members(const std::vector<long>& ids) {
    const auto idx = dense_index(ids);
    std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(idx.count));
    for (std::size_t i = 0; i < idx.of.size(); ++i)
        out[static_cast<std::size_t>(idx.of[i])].push_back(static_cast<Eigen::Index>(i));
    return out;
}

/// Symmetric square root with negative eigenvalues clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Generator of parametric bootstrap responses under one fitted model. The
/// covariates and grouping of `dataset` are kept; only y is redrawn.
class BootstrapGenerator {
public:
    BootstrapGenerator(const Dataset& dataset, const CandidateModel& model, const FitResult& fit,
                       const MeasureKind& measure)
        : base_(dataset), tag_(measure.tag), link_(measure.glmm.link) {
        const Eigen::MatrixXd X = design_matrix(dataset, model);
        mean_ = fit.beta.size() > 0 ? Eigen::VectorXd(X * fit.beta) : Eigen::VectorXd::Zero(dataset.n());
        switch (tag_) {
            case MeasureTag::ml_fay_herriot:
                area_sd_ = std::sqrt(std::max(0.0, fit.variance_of("A")));
                sampling_sd_ = dataset.sampling_variances ? Eigen::VectorXd(dataset.sampling_variances->cwiseSqrt())
                                                          : Eigen::VectorXd::Ones(dataset.n());
                break;
            case MeasureTag::least_squares: setup_least_squares(); break;
            case MeasureTag::glmm_sse:
                if (link_ != Link::logit)
                    throw Error(ErrorCode::UnsupportedFamily, "bootstrap needs a fully specified family; identity-link SSE has none");
                setup_glmm(model, fit);
                break;
            case MeasureTag::mvc:
                throw Error(ErrorCode::UnsupportedFamily, "MVC fixes no distribution to bootstrap from");
        }
    }

    Dataset draw(Engine& eng) const {
        Dataset out = base_;
        std::normal_distribution<double> normal(0.0, 1.0);
        switch (tag_) {
            case MeasureTag::ml_fay_herriot:
                for (Eigen::Index i = 0; i < out.n(); ++i) {
                    const double v = area_sd_ * normal(eng);
                    const double e = sampling_sd_(i) * normal(eng);
                    out.y(i) = mean_(i) + v + e;
                }
                break;
            case MeasureTag::least_squares:
                if (clusters_.empty()) {
                    for (Eigen::Index i = 0; i < out.n(); ++i) out.y(i) = mean_(i) + iid_sd_ * normal(eng);
                } else {
                    const Eigen::Index k = root_.rows();
                    Eigen::VectorXd z(k);
                    for (const auto& members : clusters_) {
                        for (Eigen::Index j = 0; j < k; ++j) z(j) = normal(eng);
                        const Eigen::VectorXd e = root_ * z;
                        for (Eigen::Index j = 0; j < k; ++j) {
                            const auto i = members[static_cast<std::size_t>(j)];
                            out.y(i) = mean_(i) + e(j);
                        }
                    }
                }
                break;
            case MeasureTag::glmm_sse: {
                std::vector<double> u(static_cast<std::size_t>(cluster_idx_.count));
                std::vector<double> v(static_cast<std::size_t>(family_idx_.count));
                for (auto& x : u) x = cluster_sd_ * normal(eng);
                for (auto& x : v) x = family_sd_ * normal(eng);
                std::uniform_real_distribution<double> unif(0.0, 1.0);
                for (Eigen::Index i = 0; i < out.n(); ++i) {
                    double eta = mean_(i);
                    if (cluster_idx_.count > 0) eta += u[static_cast<std::size_t>(cluster_idx_.of[static_cast<std::size_t>(i)])];
                    if (family_idx_.count > 0) eta += v[static_cast<std::size_t>(family_idx_.of[static_cast<std::size_t>(i)])];
                    out.y(i) = unif(eng) < inverse_link(Link::logit, eta) ? 1.0 : 0.0;
                }
                break;
            }
            case MeasureTag::mvc: break;
        }
        return out;
    }

private:
    void setup_least_squares() {
        const Eigen::VectorXd r = base_.y - mean_;
        if (!base_.grouping) {
            iid_sd_ = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
            return;
        }
        clusters_ = detail::cluster_members(base_.grouping->cluster);
        const auto k = clusters_.front().size();
        for (const auto& c : clusters_)
            if (c.size() != k)
                throw Error(ErrorCode::UnsupportedFamily, "clustered LS bootstrap needs equal cluster sizes");
        const auto kk = static_cast<Eigen::Index>(k);
        Eigen::MatrixXd S = Eigen::MatrixXd::Zero(kk, kk);
        Eigen::VectorXd ri(kk);
        for (const auto& c : clusters_) {
            for (Eigen::Index j = 0; j < kk; ++j) ri(j) = r(c[static_cast<std::size_t>(j)]);
            S += ri * ri.transpose();
        }
        S /= static_cast<double>(clusters_.size());
        root_ = detail::psd_sqrt(S);
    }

    void setup_glmm(const CandidateModel& model, const FitResult& fit) {
        for (const auto& re : model.random_effects) {
            const double sd = std::sqrt(std::max(0.0, fit.variance_of(re)));
            if (re == "family") {
                family_sd_ = sd;
                family_idx_ = dense_index(base_.grouping->family);
            } else {
                cluster_sd_ = sd;
                cluster_idx_ = dense_index(base_.grouping->cluster);
            }
        }
    }

    Dataset base_;
    MeasureTag tag_;
    Link link_;
    Eigen::VectorXd mean_;
    double area_sd_ = 0.0;
    Eigen::VectorXd sampling_sd_;
    double iid_sd_ = 0.0;
    std::vector<std::vector<Eigen::Index>> clusters_;
    Eigen::MatrixXd root_;
    double cluster_sd_ = 0.0;
    double family_sd_ = 0.0;
    ClusterIndex cluster_idx_;
    ClusterIndex family_idx_;
};

/// B bootstrap datasets drawn under `model` at its fitted parameters. Draw b
/// uses its own substream, so the first B draws do not depend on B.
inline std::vector<Dataset> bootstrap_datasets(const Dataset& dataset, const CandidateModel& model,
                                               const FitResult& fit, const MeasureKind& measure, int B,
                                               const RngStream& rng) {
    const BootstrapGenerator gen(dataset, model, fit, measure);
    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(std::max(B, 0)));
    for (int b = 0; b < B; ++b) {
        Engine eng = rng.substream(static_cast<std::uint64_t>(b)).engine("bootstrap");
        out.push_back(gen.draw(eng));
    }
    return out;
}

/// One selection table per bootstrap dataset, fitted against `reference`.
inline std::vector<SelectionTable> bootstrap_tables(const ModelSpace& space, const Dataset& dataset,
                                                    const CandidateModel& generating_model,
                                                    const FitResult& generating_fit, const MeasureKind& measure,
                                                    SigmaKind sigma_kind, const CandidateModel& reference, int B,
                                                    const RngStream& rng) {
    const BootstrapGenerator gen(dataset, generating_model, generating_fit, measure);
    std::vector<SelectionTable> tables;
    tables.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        Engine eng = rng.substream(static_cast<std::uint64_t>(b)).engine("bootstrap");
        tables.push_back(evaluate_space(space, gen.draw(eng), measure, sigma_kind, reference));
    }
    return tables;
}

// -------------------------------------------------------------------------
// p* curve
// -------------------------------------------------------------------------

/// floor(B) + 1 for B = (Q_min - Q_full) / sigma.
inline double upper_bound_B(double qhat_min_model, double qhat_full, double sigma_min_full) {
    if (!(sigma_min_full > 0.0)) throw Error(ErrorCode::ZeroSigma, "sigma between minimal and full model is zero");
    return std::floor((qhat_min_model - qhat_full) / sigma_min_full) + 1.0;
}

namespace detail {

inline std::size_t unique_minimal(const ModelSpace& space) {
    if (space.minimal_indices().size() != 1)
        throw Error(ErrorCode::InvalidConfig, "adaptive fence needs a unique minimal model");
    return space.minimal_indices().front();
}

/// Largest standardized gap of the minimal model over the given tables.
inline double largest_gap_ratio(const ModelSpace& space, const SelectionTable& original,
                                const std::vector<SelectionTable>& boot) {
    const auto i = unique_minimal(space);
    auto ratio = [&](const SelectionTable& t) {
        return (t.qhat[i] - t.reference_fit.qhat) / t.sigma[i];
    };
    if (!(original.sigma[i] > 0.0))
        throw Error(ErrorCode::ZeroSigma, "sigma between minimal and reference model is zero");
    double r = ratio(original);
    for (const auto& t : boot)
        if (t.sigma[i] > 0.0) r = std::max(r, ratio(t));
    return r;
}

}  // namespace detail

/// Equally spaced grid on [0, upper].
inline std::vector<double> c_grid(double upper, int points) {
    std::vector<double> c(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j) c[static_cast<std::size_t>(j)] = upper * j / (points - 1);
    return c;
}

/// Modal bootstrap selection frequency at each grid value.
inline PStarCurve pstar_from_tables(const ModelSpace& space, const std::vector<SelectionTable>& tables,
                                    const std::vector<double>& c_values) {
    PStarCurve curve;
    curve.c_values = c_values;
    const double B = static_cast<double>(tables.size());
    std::vector<int> counts(space.size());
    for (double c : c_values) {
        std::fill(counts.begin(), counts.end(), 0);
        for (const auto& t : tables) {
            const auto sel = select_in_fence(space, t.qhat, t.sigma, t.reference_fit.qhat, c);
            if (sel.index) ++counts[*sel.index];
        }
        std::optional<std::size_t> mode;
        for (auto i : space.tier_order()) {
            if (counts[i] == 0) continue;
            if (!mode || counts[i] > counts[*mode] || (counts[i] == counts[*mode] && space[i].id < space[*mode].id))
                mode = i;
        }
        curve.pstar.push_back(mode ? counts[*mode] / B : 0.0);
        curve.modal_model.push_back(mode ? space[*mode].id : std::string{});
    }
    return curve;
}

/// Which boundary plateaus at p* = 1 are artifacts to be ignored.
struct PeakExclusions {
    bool left = true;
    bool right = true;
};

/// Highest local-maximum plateau of the curve, then the smallest plateau
/// median among plateaus at that height.
inline double pick_c_star(const PStarCurve& curve, PeakExclusions exclude = {}) {
    const auto& p = curve.pstar;
    const auto& c = curve.c_values;
    const std::size_t n = p.size();
    if (n == 0 || c.size() != n) throw Error(ErrorCode::InvalidConfig, "empty or malformed p* curve");
    std::optional<double> best_value;
    std::optional<double> best_c;
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo;
        while (hi + 1 < n && p[hi + 1] == p[lo]) ++hi;
        const bool left_ok = lo == 0 || p[lo - 1] < p[lo];
        const bool right_ok = hi + 1 == n || p[hi + 1] < p[lo];
        const bool degenerate = p[lo] == 1.0 && ((lo == 0 && exclude.left) || (hi + 1 == n && exclude.right));
        if (left_ok && right_ok && !degenerate && p[lo] > 0.0) {
            const std::size_t len = hi - lo + 1;
            const double median = len % 2 ? c[lo + len / 2] : 0.5 * (c[lo + len / 2 - 1] + c[lo + len / 2]);
            if (!best_value || p[lo] > *best_value || (p[lo] == *best_value && median < *best_c)) {
                best_value = p[lo];
                best_c = median;
            }
        }
        lo = hi + 1;
    }
    if (!best_c) throw Error(ErrorCode::NoInteriorPeak, "p* curve has no admissible peak");
    return *best_c;
}

// -------------------------------------------------------------------------
// Screen tests
// -------------------------------------------------------------------------

struct ScreenResult {
    double statistic = 0.0;
    bool passes = false;
};

/// q* = gap^2 / (a b); passes iff q* < 1.
inline ScreenResult full_model_test(double bootstrap_gap_minimum, double a_n, double b_n) {
    const double q = bootstrap_gap_minimum * bootstrap_gap_minimum / (a_n * b_n);
    return {q, q < 1.0};
}

/// r* = gap^2 / (g h); passes iff r* > 1.
inline ScreenResult minimum_model_test(double bootstrap_gap, double g_n, double h_n) {
    const double r = bootstrap_gap * bootstrap_gap / (g_n * h_n);
    return {r, r > 1.0};
}

/// Bootstrap mean of Q_M - Q_ref for every model.
inline std::vector<double> mean_gaps(const ModelSpace& space, const std::vector<SelectionTable>& tables) {
    std::vector<double> mean(space.size(), 0.0);
    for (const auto& t : tables)
        for (std::size_t i = 0; i < space.size(); ++i) mean[i] += t.qhat[i] - t.reference_fit.qhat;
    for (auto& v : mean) v /= static_cast<double>(tables.size());
    return mean;
}

/// Smallest bootstrap-mean gap among the submodels of the full model that
/// drop exactly one parameter.
inline double full_model_gap(const ModelSpace& space, const std::vector<double>& mean_gap) {
    const auto& full = space.full_model();
    std::optional<double> best;
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (space[i].dimension != full.dimension - 1 || !is_submodel(space[i], full)) continue;
        if (!best || mean_gap[i] < *best) best = mean_gap[i];
    }
    if (!best) throw Error(ErrorCode::InvalidConfig, "no one-parameter-reduced submodel of the full model");
    return *best;
}

// -------------------------------------------------------------------------
// Baseline adjustment and threshold checking
// -------------------------------------------------------------------------

struct BaselineAdjusted {
    Dataset dataset;
    std::string column;
};

/// Appends one synthetic covariate that no candidate uses.
inline BaselineAdjusted baseline_adjust(const Dataset& dataset, const RngStream& rng,
                                        BaselineDistribution dist = BaselineDistribution::standard_normal) {
    BaselineAdjusted out{dataset, "baseline"};
    while (std::find(dataset.names.begin(), dataset.names.end(), out.column) != dataset.names.end())
        out.column += "_";
    Engine eng = rng.engine("baseline_adjust");
    Eigen::VectorXd extra(dataset.n());
    if (dist == BaselineDistribution::standard_normal) {
        extra = standard_normal_vector(eng, dataset.n());
    } else {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (Eigen::Index i = 0; i < extra.size(); ++i) extra(i) = unif(eng);
    }
    out.dataset.names.push_back(out.column);
    out.dataset.covariates.conservativeResize(Eigen::NoChange, dataset.covariates.cols() + 1);
    out.dataset.covariates.col(dataset.covariates.cols()) = extra;
    return out;
}

/// The full model plus the synthetic covariate; used as the reference only.
inline CandidateModel adjusted_full_model(const Dataset& adjusted, const CandidateModel& full,
                                          const std::string& column) {
    auto fixed = full.fixed_effects;
    fixed.push_back(column);
    const int extra = full.dimension - static_cast<int>(full.fixed_effects.size() + full.random_effects.size());
    return make_model(adjusted, std::move(fixed), full.random_effects, extra);
}

struct ThresholdResult {
    double d_star = 0.0;
    bool consider_right_tail = true;
    std::vector<double> gaps;  // per bootstrap draw
};

/// Bootstraps under the minimal model M_*: d_* is the largest gap between M_*
/// and the adjusted full model; the right tail stays admissible unless the
/// observed gap Q_{M_*} - Q_{M_f} exceeds it.
inline ThresholdResult threshold_check(const Dataset& adjusted, const CandidateModel& minimal,
                                       const FitResult& minimal_fit, const CandidateModel& adjusted_full,
                                       double observed_gap, const MeasureKind& measure, int B, const RngStream& rng) {
    const BootstrapGenerator gen(adjusted, minimal, minimal_fit, measure);
    ThresholdResult out;
    out.d_star = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < B; ++b) {
        Engine eng = rng.substream(static_cast<std::uint64_t>(b)).engine("threshold");
        const Dataset d = gen.draw(eng);
        const double gap = fit_model(d, minimal, measure).qhat - fit_model(d, adjusted_full, measure).qhat;
        out.gaps.push_back(gap);
        out.d_star = std::max(out.d_star, gap);
    }
    out.consider_right_tail = !(observed_gap > out.d_star);
    return out;
}

// -------------------------------------------------------------------------
// adaptive_select
// -------------------------------------------------------------------------

namespace detail {

/// Smallest c at which the fence of `t` admits some model.
inline double smallest_nonempty_c(const SelectionTable& t) {
    double c = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.qhat.size(); ++i) {
        const double gap = t.qhat[i] - t.reference_fit.qhat;
        if (gap <= 0.0) return 0.0;
        if (t.sigma[i] > 0.0) c = std::min(c, gap / t.sigma[i]);
    }
    return c;
}

}  // namespace detail

inline AdaptiveReport adaptive_select(const ModelSpace& space, const Dataset& dataset, const MeasureKind& measure,
                                      SigmaKind sigma_kind, const AdaptiveConfig& config, const RngStream& rng) {
    config.validate();
    const auto& full = space.full_model();
    const auto min_idx = detail::unique_minimal(space);
    const auto& minimal = space[min_idx];
    const int m = detail::area_count(dataset);
    const double a_n = config.rates.a_n.value_or(m);
    const double g_n = config.rates.g_n.value_or(m);

    AdaptiveReport rep;
    const bool baseline = config.strategy == AdaptiveStrategy::baseline_threshold;
    rep.baseline_adjusted = baseline;

    Dataset work = dataset;
    CandidateModel reference = full;
    if (baseline) {
        auto adj = baseline_adjust(dataset, rng.tagged("baseline"), config.baseline);
        reference = adjusted_full_model(adj.dataset, full, adj.column);
        work = std::move(adj.dataset);
    }
    rep.reference = reference;

    const SelectionTable original = evaluate_space(space, work, measure, sigma_kind, reference);

    // generating model of the bootstrap
    CandidateModel generator = full;
    FitResult generator_fit = original.fits[space.full_index()];
    if (config.two_step) {
        const auto step1 = select_in_fence(space, original.qhat, original.sigma, original.reference_fit.qhat, 1.0);
        if (!step1.index) throw Error(ErrorCode::InvalidConfig, "two-step first stage admitted no model");
        generator = space[*step1.index];
        generator_fit = original.fits[*step1.index];
        rep.step_one_model = generator.id;
    }

    const auto tables = bootstrap_tables(space, work, generator, generator_fit, measure, sigma_kind, reference,
                                         config.bootstrap_B, rng.tagged("pstar"));
    rep.upper_bound = std::floor(detail::largest_gap_ratio(space, original, tables)) + 1.0;
    rep.curve = pstar_from_tables(space, tables, c_grid(rep.upper_bound, config.grid_points));

    PeakExclusions exclude{true, true};
    bool screened = false;
    if (baseline) {
        const double observed_gap = original.qhat[min_idx] - original.fits[space.full_index()].qhat;
        const auto th = threshold_check(work, minimal, original.fits[min_idx], reference, observed_gap, measure,
                                        config.bootstrap_B, rng.tagged("threshold"));
        rep.d_star = th.d_star;
        rep.consider_right_tail = th.consider_right_tail;
        exclude = {false, !th.consider_right_tail};
    } else if (config.strategy == AdaptiveStrategy::screen_tests || config.two_step) {
        const auto gaps = mean_gaps(space, tables);
        const auto q = full_model_test(full_model_gap(space, gaps), a_n, config.rates.b_n);
        rep.q_star = q.statistic;
        if (!q.passes) {
            rep.c_star = 0.0;
            rep.rule = CStarRule::full_model_test;
            screened = true;
        } else {
            const auto r = minimum_model_test(gaps[min_idx], g_n, config.rates.h_n);
            rep.r_star = r.statistic;
            if (!r.passes) {
                rep.c_star = rep.upper_bound;
                rep.rule = CStarRule::minimum_model_test;
                screened = true;
            }
        }
    }
    if (!screened) {
        try {
            rep.c_star = pick_c_star(rep.curve, exclude);
            rep.rule = CStarRule::peak;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoInteriorPeak) throw;
            rep.c_star = 1.0;
            rep.rule = CStarRule::fallback;
        }
    }

    auto sel = select_in_fence(space, original.qhat, original.sigma, original.reference_fit.qhat, rep.c_star);
    if (!sel.index) {
        rep.c_star = detail::smallest_nonempty_c(original);
        rep.c_star_raised = true;
        sel = select_in_fence(space, original.qhat, original.sigma, original.reference_fit.qhat, rep.c_star);
    }
    if (!sel.index) throw Error(ErrorCode::InvalidConfig, "no candidate model can enter the fence");
    rep.selected = space[*sel.index];
    return rep;
}

/// The p* curve alone (bootstrap under the full model, no baseline).
inline PStarCurve pstar_curve(const ModelSpace& space, const Dataset& dataset, const MeasureKind& measure,
                              SigmaKind sigma_kind, const AdaptiveConfig& config, const RngStream& rng) {
    config.validate();
    const auto& full = space.full_model();
    const SelectionTable original = evaluate_space(space, dataset, measure, sigma_kind, full);
    const auto tables = bootstrap_tables(space, dataset, full, original.fits[space.full_index()], measure,
                                         sigma_kind, full, config.bootstrap_B, rng.tagged("pstar"));
    const double upper = std::floor(detail::largest_gap_ratio(space, original, tables)) + 1.0;
    return pstar_from_tables(space, tables, c_grid(upper, config.grid_points));
}

}  // namespace fence
