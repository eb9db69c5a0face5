#pragma once

// Simulation designs (Fay-Herriot, clustered linear mixed model, two-level
// logistic), their data generators, and a study runner that applies several
// selection strategies to the same replicate datasets.

#include "fence/adaptive.hpp"
#include "fence/error.hpp"
#include "fence/fence.hpp"
#include "fence/gic.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/numerics.hpp"
#include "fence/sigma.hpp"

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fence {

enum class ScenarioFamily { fay_herriot, clustered_lmm, two_level_logistic };

inline const char* to_string(ScenarioFamily f) {
    switch (f) {
        case ScenarioFamily::fay_herriot: return "fay_herriot";
        case ScenarioFamily::clustered_lmm: return "clustered_lmm";
        case ScenarioFamily::two_level_logistic: return "two_level_logistic";
    }
    return "?";
}

struct Scenario {
    std::string name;
    ScenarioFamily family = ScenarioFamily::fay_herriot;
    std::uint64_t design_seed = 1;
    int replications = 100;

    // frozen design
    std::vector<std::string> names;      // x1 (intercept), x2, ...
    Eigen::MatrixXd design;
    std::optional<Grouping> grouping;

    // truth
    Eigen::VectorXd beta;                // one entry per column, zeros for inactive covariates
    double area_variance = 1.0;          // A (Fay-Herriot)
    double sigma = 1.0;                  // sd of the cluster / community effect
    double tau = 1.0;                    // sd scale of the errors / family effect
    double rho = 0.0;                    // within-cluster error correlation

    std::vector<std::string> forced = {"x1"};
    SpaceOptions space_options;

    Dataset template_dataset() const {
        Dataset d;
        d.y = Eigen::VectorXd::Zero(design.rows());
        d.names = names;
        d.covariates = design;
        d.grouping = grouping;
        if (family == ScenarioFamily::fay_herriot) d.sampling_variances = Eigen::VectorXd::Ones(design.rows());
        return d;
    }

    ModelSpace space() const { return enumerate_all_subsets(template_dataset(), std::span<const std::string>(forced), space_options); }

    CandidateModel truth() const {
        std::vector<std::string> fixed = forced;
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            const auto& nm = names[static_cast<std::size_t>(j)];
            if (beta(j) != 0.0 && std::find(fixed.begin(), fixed.end(), nm) == fixed.end()) fixed.push_back(nm);
        }
        std::vector<std::string> random = space_options.fixed_random;
        return make_model(template_dataset(), std::move(fixed), std::move(random), space_options.extra_dimension);
    }

    /// Number of observations used in log n style penalties.
    long sample_size() const { return static_cast<long>(design.rows()); }
};

namespace detail {

inline std::vector<std::string> column_names(int K) {
    std::vector<std::string> v;
    for (int j = 1; j <= K; ++j) v.push_back("x" + std::to_string(j));
    return v;
}

/// Intercept column followed by K-1 standard normal columns drawn from the
/// scenario's design stream.
inline Eigen::MatrixXd normal_design(Eigen::Index n, int K, std::uint64_t design_seed) {
    Engine eng = RngStream{design_seed, 0}.engine("design");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd X(n, K);
    X.col(0).setOnes();
    for (int j = 1; j < K; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = normal(eng);
    return X;
}

}  // namespace detail

/// Area-level design with m areas, unit sampling variances, and K columns of
/// which the first is the intercept.
inline Scenario fay_herriot_scenario(const Eigen::VectorXd& beta, int m = 30, double A = 1.0,
                                     std::uint64_t design_seed = 2009, int replications = 100) {
    Scenario s;
    s.family = ScenarioFamily::fay_herriot;
    s.design_seed = design_seed;
    s.replications = replications;
    const int K = static_cast<int>(beta.size());
    s.names = detail::column_names(K);
    s.design = detail::normal_design(m, K, design_seed);
    s.beta = beta;
    s.area_variance = A;
    s.name = "fay_herriot";
    return s;
}

/// Models 1-5 of the small-area study: the first k coefficients of
/// (1, 2, 3, 2, 3) are active.
inline Scenario fay_herriot_table_model(int model, std::uint64_t design_seed = 2009, int replications = 100) {
    if (model < 1 || model > 5) throw Error(ErrorCode::InvalidConfig, "model index must be 1..5");
    const double full[5] = {1, 2, 3, 2, 3};
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(5);
    for (int j = 0; j < model; ++j) beta(j) = full[j];
    auto s = fay_herriot_scenario(beta, 30, 1.0, design_seed, replications);
    s.name = "fay_herriot_model" + std::to_string(model);
    return s;
}

/// m clusters of size K; exchangeable within-cluster errors
/// tau^2 {(1-rho) I + rho J} plus a cluster effect with sd sigma.
inline Scenario clustered_scenario(const Eigen::VectorXd& beta, double rho, int m = 100, int K = 5,
                                   double sigma = 1.0, double tau = 1.0, std::uint64_t design_seed = 2009,
                                   int replications = 100) {
    if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::InvalidConfig, "rho must lie in [0, 1)");
    Scenario s;
    s.family = ScenarioFamily::clustered_lmm;
    s.design_seed = design_seed;
    s.replications = replications;
    const int p = static_cast<int>(beta.size());
    s.names = detail::column_names(p);
    s.design = detail::normal_design(static_cast<Eigen::Index>(m) * K, p, design_seed);
    Grouping g;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < K; ++j) g.cluster.push_back(i + 1);
    s.grouping = std::move(g);
    s.beta = beta;
    s.sigma = sigma;
    s.tau = tau;
    s.rho = rho;
    s.name = "clustered_lmm";
    return s;
}

/// The three coefficient blocks of the clustered study.
inline Eigen::VectorXd clustered_table_beta(int block) {
    switch (block) {
        case 1: return (Eigen::VectorXd(5) << 2, 0, 0, 4, 0).finished();
        case 2: return (Eigen::VectorXd(5) << 2, 9, 0, 4, 8).finished();
        case 3: return (Eigen::VectorXd(5) << 1, 2, 3, 2, 3).finished();
        default: throw Error(ErrorCode::InvalidConfig, "block must be 1..3");
    }
}

/// Communities, families nested in communities, and individuals nested in
/// families; logit P(y = 1) = x'beta + u_community + v_family. Both random
/// effects are present in every candidate model.
inline Scenario two_level_logistic_scenario(const Eigen::VectorXd& beta, int communities = 60,
                                            int families_per_community = 3, int per_family = 4,
                                            double sigma = 0.7, double tau = 0.5,
                                            std::uint64_t design_seed = 2009, int replications = 100) {
    Scenario s;
    s.family = ScenarioFamily::two_level_logistic;
    s.design_seed = design_seed;
    s.replications = replications;
    const int p = static_cast<int>(beta.size());
    s.names = detail::column_names(p);
    const Eigen::Index n = static_cast<Eigen::Index>(communities) * families_per_community * per_family;
    s.design = detail::normal_design(n, p, design_seed);
    Grouping g;
    long fam = 0;
    for (int i = 0; i < communities; ++i) {
        for (int j = 0; j < families_per_community; ++j, ++fam)
            for (int k = 0; k < per_family; ++k) {
                g.cluster.push_back(i + 1);
                g.family.push_back(fam + 1);
            }
    }
    s.grouping = std::move(g);
    s.beta = beta;
    s.sigma = sigma;
    s.tau = tau;
    s.space_options.fixed_random = {"community", "family"};
    s.name = "two_level_logistic";
    return s;
}

/// Intercept, three active covariates of moderate size, five inactive ones.
inline Eigen::VectorXd logistic_study_beta() {
    return (Eigen::VectorXd(9) << -0.3, 1.0, -0.8, 0.7, 0, 0, 0, 0, 0).finished();
}

// -------------------------------------------------------------------------
// Generators
// -------------------------------------------------------------------------

namespace detail {

inline Engine replicate_engine(const RngStream& rng, int replicate) {
    return rng.substream(static_cast<std::uint64_t>(replicate)).engine("replicate_data");
}

inline void require_family(const Scenario& s, ScenarioFamily f) {
    if (s.family != f)
        throw Error(ErrorCode::InvalidConfig,
                    std::string("scenario family is ") + to_string(s.family) + ", expected " + to_string(f));
}

}  // namespace detail

inline Dataset generate_fay_herriot(const Scenario& s, int replicate, const RngStream& rng) {
    detail::require_family(s, ScenarioFamily::fay_herriot);
    Dataset d = s.template_dataset();
    Engine eng = detail::replicate_engine(rng, replicate);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd mean = s.design * s.beta;
    const double a = std::sqrt(s.area_variance);
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        const double v = a * normal(eng);
        const double e = normal(eng);
        d.y(i) = mean(i) + v + e;
    }
    return d;
}

inline Dataset generate_clustered_lmm(const Scenario& s, int replicate, const RngStream& rng) {
    detail::require_family(s, ScenarioFamily::clustered_lmm);
    Dataset d = s.template_dataset();
    Engine eng = detail::replicate_engine(rng, replicate);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd mean = s.design * s.beta;
    const auto members = detail::cluster_members(s.grouping->cluster);
    const double shared = s.tau * std::sqrt(s.rho);
    const double own = s.tau * std::sqrt(1.0 - s.rho);
    for (const auto& c : members) {
        const double alpha = s.sigma * normal(eng);
        const double w = normal(eng);
        for (auto i : c) d.y(i) = mean(i) + alpha + shared * w + own * normal(eng);
    }
    return d;
}

inline Dataset generate_two_level_logistic(const Scenario& s, int replicate, const RngStream& rng) {
    detail::require_family(s, ScenarioFamily::two_level_logistic);
    Dataset d = s.template_dataset();
    Engine eng = detail::replicate_engine(rng, replicate);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto ci = dense_index(s.grouping->cluster);
    const auto fi = dense_index(s.grouping->family);
    std::vector<double> u(static_cast<std::size_t>(ci.count)), v(static_cast<std::size_t>(fi.count));
    for (auto& x : u) x = s.sigma * normal(eng);
    for (auto& x : v) x = s.tau * normal(eng);
    const Eigen::VectorXd eta = s.design * s.beta;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double lin = eta(i) + u[static_cast<std::size_t>(ci.of[k])] + v[static_cast<std::size_t>(fi.of[k])];
        d.y(i) = unif(eng) < inverse_link(Link::logit, lin) ? 1.0 : 0.0;
    }
    return d;
}

inline Dataset generate(const Scenario& s, int replicate, const RngStream& rng) {
    switch (s.family) {
        case ScenarioFamily::fay_herriot: return generate_fay_herriot(s, replicate, rng);
        case ScenarioFamily::clustered_lmm: return generate_clustered_lmm(s, replicate, rng);
        case ScenarioFamily::two_level_logistic: return generate_two_level_logistic(s, replicate, rng);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown scenario family");
}

// -------------------------------------------------------------------------
// Studies
// -------------------------------------------------------------------------

enum class StrategyKind { fence, fb_fence, adaptive, gic };

inline const char* to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::fence: return "fence";
        case StrategyKind::fb_fence: return "fb_fence";
        case StrategyKind::adaptive: return "adaptive";
        case StrategyKind::gic: return "gic";
    }
    return "?";
}

struct Strategy {
    std::string label;
    StrategyKind kind = StrategyKind::fence;
    double c = 1.0;
    AdaptiveConfig adaptive;
    GicConfig gic;

    static Strategy fixed_fence(std::string label, double c) { return {std::move(label), StrategyKind::fence, c, {}, {}}; }
    static Strategy forward_backward(std::string label, double c) {
        return {std::move(label), StrategyKind::fb_fence, c, {}, {}};
    }
    static Strategy adaptive_fence(std::string label, AdaptiveConfig cfg) {
        return {std::move(label), StrategyKind::adaptive, 0.0, cfg, {}};
    }
    static Strategy information(std::string label, GicConfig cfg) {
        return {std::move(label), StrategyKind::gic, 0.0, {}, cfg};
    }
};

struct StudySettings {
    MeasureKind measure;
    SigmaKind sigma_kind = SigmaKind::exact_f_numeric;
};

/// Measure and sigma estimator used for each design.
inline StudySettings default_settings(ScenarioFamily f) {
    StudySettings s;
    switch (f) {
        case ScenarioFamily::fay_herriot:
            s.measure.tag = MeasureTag::ml_fay_herriot;
            s.sigma_kind = SigmaKind::exact_f_numeric;
            break;
        case ScenarioFamily::clustered_lmm:
            s.measure.tag = MeasureTag::least_squares;
            s.sigma_kind = SigmaKind::observed_variance;
            break;
        case ScenarioFamily::two_level_logistic:
            s.measure.tag = MeasureTag::glmm_sse;
            s.measure.glmm.link = Link::logit;
            s.sigma_kind = SigmaKind::observed_variance;
            break;
    }
    return s;
}

struct StrategyCounts {
    std::string label;
    int correct = 0;
    int underfit = 0;
    int overfit = 0;
    int failed = 0;
};

struct ReplicateTrace {
    int replicate = 0;
    std::vector<std::string> selected;   // per strategy; "error:<Code>" on failure
    std::vector<double> seconds;         // per strategy wall clock
    std::vector<std::optional<double>> c_star;  // adaptive strategies only
};

struct StudyResult {
    std::string scenario;
    std::string truth;
    int replications = 0;
    std::vector<StrategyCounts> counts;
    std::vector<ReplicateTrace> traces;

    const StrategyCounts& of(const std::string& label) const {
        for (const auto& c : counts)
            if (c.label == label) return c;
        throw Error(ErrorCode::UnknownName, "no strategy labelled '" + label + "'");
    }
};

/// One selected model (or nullopt) plus the adaptive width when applicable.
struct StrategyOutcome {
    CandidateModel selected;
    std::optional<double> c_star;
};

inline StrategyOutcome run_strategy(const Strategy& st, const Scenario& scenario, const ModelSpace& space,
                                    const Dataset& data, const StudySettings& settings,
                                    const std::optional<SelectionTable>& table, const RngStream& rng) {
    switch (st.kind) {
        case StrategyKind::fence: {
            const auto out = outcome_from_table(space, *table, st.c);
            if (!out.selected) throw Error(ErrorCode::InvalidConfig, "fence admitted no model");
            return {*out.selected, std::nullopt};
        }
        case StrategyKind::fb_fence:
            return {*fb_fence(space, data, settings.measure, settings.sigma_kind, st.c).selected, std::nullopt};
        case StrategyKind::adaptive: {
            const auto rep = adaptive_select(space, data, settings.measure, settings.sigma_kind, st.adaptive, rng);
            return {rep.selected, rep.c_star};
        }
        case StrategyKind::gic: {
            std::map<std::string, FitResult> fits;
            for (std::size_t i = 0; i < space.size(); ++i) fits.emplace(space[i].id, table->fits[i]);
            GicConfig cfg = st.gic;
            if (cfg.sample_size == 0) cfg.sample_size = scenario.sample_size();
            return {gic_select(space, fits, cfg), std::nullopt};
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown strategy");
}

/// Runs every strategy on each replicate dataset and tallies the selections
/// against the scenario's truth. A failing strategy is counted as failed for
/// that replicate and the study continues.
inline StudyResult run_study(const Scenario& scenario, const std::vector<Strategy>& strategies, const RngStream& rng,
                             std::optional<StudySettings> settings_override = std::nullopt) {
    const StudySettings settings = settings_override.value_or(default_settings(scenario.family));
    const ModelSpace space = scenario.space();
    const CandidateModel truth = scenario.truth();
    StudyResult res;
    res.scenario = scenario.name;
    res.truth = truth.id;
    res.replications = scenario.replications;
    for (const auto& st : strategies) res.counts.push_back({st.label});
    const bool needs_table = std::any_of(strategies.begin(), strategies.end(), [](const Strategy& s) {
        return s.kind == StrategyKind::fence || s.kind == StrategyKind::gic;
    });

    const RngStream data_rng = rng.tagged("data");
    for (int r = 0; r < scenario.replications; ++r) {
        const Dataset data = generate(scenario, r, data_rng);
        ReplicateTrace trace;
        trace.replicate = r;
        std::optional<SelectionTable> table;
        std::optional<std::string> table_error;
        if (needs_table) {
            try {
                table = evaluate_space(space, data, settings.measure, settings.sigma_kind);
            } catch (const Error& e) {
                table_error = std::string("error:") + std::string(to_string(e.code()));
            }
        }
        for (std::size_t k = 0; k < strategies.size(); ++k) {
            const auto& st = strategies[k];
            const auto t0 = std::chrono::steady_clock::now();
            std::string label;
            std::optional<double> c_star;
            const bool uses_table = st.kind == StrategyKind::fence || st.kind == StrategyKind::gic;
            if (uses_table && table_error) {
                label = *table_error;
                ++res.counts[k].failed;
            } else {
                try {
                    const auto out = run_strategy(st, scenario, space, data, settings, table,
                                                  rng.substream(static_cast<std::uint64_t>(r)).tagged(st.label));
                    label = out.selected.id;
                    c_star = out.c_star;
                    switch (classify_selection(out.selected, truth)) {
                        case SelectionClass::correct: ++res.counts[k].correct; break;
                        case SelectionClass::underfit: ++res.counts[k].underfit; break;
                        case SelectionClass::overfit: ++res.counts[k].overfit; break;
                    }
                } catch (const Error& e) {
                    label = std::string("error:") + std::string(to_string(e.code()));
                    ++res.counts[k].failed;
                }
            }
            trace.selected.push_back(label);
            trace.c_star.push_back(c_star);
            trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        res.traces.push_back(std::move(trace));
    }
    return res;
}

}  // namespace fence
