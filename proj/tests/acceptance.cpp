// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include "fence/adaptive.hpp"
#include "fence/fence.hpp"
#include "fence/gic.hpp"
#include "fence/io.hpp"
#include "fence/measures.hpp"
#include "fence/simlab.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace fence;

namespace {

constexpr std::uint64_t kMasterSeed = 20090101;
constexpr std::uint64_t kDesignSeed = 2009;
constexpr int kReplications = 100;
constexpr int kBootstrap = 100;

const MeasureKind kFayHerriot{MeasureTag::ml_fay_herriot, {}, {}};

struct Verdict {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok) { pass = pass && ok; }
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v) {
    std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
}

AdaptiveConfig adaptive_config(AdaptiveStrategy strategy, BaselineDistribution baseline) {
    AdaptiveConfig cfg;
    cfg.bootstrap_B = kBootstrap;
    cfg.strategy = strategy;
    cfg.baseline = baseline;
    return cfg;
}

// -------------------------------------------------------------------------
// Fay-Herriot study (criteria 1-3)
// -------------------------------------------------------------------------

std::vector<StudyResult> fay_herriot_studies() {
    const double n = 30.0;
    const std::vector<Strategy> strategies = {
        Strategy::adaptive_fence("adaptive_st",
                                 adaptive_config(AdaptiveStrategy::screen_tests, BaselineDistribution::standard_normal)),
        Strategy::adaptive_fence("adaptive_bt", adaptive_config(AdaptiveStrategy::baseline_threshold,
                                                                BaselineDistribution::standard_normal)),
        Strategy::adaptive_fence("adaptive_bt_uniform",
                                 adaptive_config(AdaptiveStrategy::baseline_threshold, BaselineDistribution::uniform01)),
        Strategy::fixed_fence("loglog_n", std::log(std::log(n))),
        Strategy::fixed_fence("log_n", std::log(n)),
        Strategy::fixed_fence("sqrt_n", std::sqrt(n)),
        Strategy::fixed_fence("n_over_loglog_n", n / std::log(std::log(n))),
    };
    std::vector<std::future<StudyResult>> jobs;
    for (int model = 1; model <= 5; ++model) {
        jobs.push_back(std::async(std::launch::async, [model, strategies] {
            return run_study(fay_herriot_table_model(model, kDesignSeed, kReplications), strategies,
                             RngStream{kMasterSeed, 0});
        }));
    }
    std::vector<StudyResult> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

std::vector<int> correct_counts(const std::vector<StudyResult>& studies, const std::string& label) {
    std::vector<int> out;
    for (const auto& s : studies) out.push_back(s.of(label).correct);
    return out;
}

void criterion_adaptive_st(const std::vector<StudyResult>& t1) {
    Verdict v;
    const auto counts = correct_counts(t1, "adaptive_st");
    for (int c : counts) v.require(c >= 94);
    v.detail << "correct per Models 1-5 = (" << join(counts) << "), need >= 94 each";
    report(1, "Fay-Herriot adaptive fence, screen tests", v);
}

void criterion_adaptive_bt(const std::vector<StudyResult>& t1) {
    Verdict v;
    const auto normal = correct_counts(t1, "adaptive_bt");
    const auto uniform = correct_counts(t1, "adaptive_bt_uniform");
    for (std::size_t k = 0; k < normal.size(); ++k) {
        v.require(normal[k] >= 93);
        v.require(std::abs(normal[k] - uniform[k]) <= 5);
    }
    v.detail << "correct = (" << join(normal) << "), need >= 93 each; uniform baseline = (" << join(uniform)
             << "), need |difference| <= 5";
    report(2, "Fay-Herriot adaptive fence, baseline/threshold", v);
}

void criterion_fixed_rows(const std::vector<StudyResult>& t1) {
    Verdict v;
    struct Row {
        std::string label;
        std::vector<int> reference;
        int band;
    };
    const std::vector<Row> rows = {{"loglog_n", {52, 63, 70, 83, 100}, 15},
                                   {"log_n", {96, 98, 99, 96, 100}, 8},
                                   {"sqrt_n", {100, 100, 100, 100, 100}, 6}};
    for (const auto& row : rows) {
        const auto counts = correct_counts(t1, row.label);
        for (std::size_t k = 0; k < counts.size(); ++k) v.require(std::abs(counts[k] - row.reference[k]) <= row.band);
        v.detail << row.label << " = (" << join(counts) << ") vs (" << join(row.reference) << ") +-" << row.band << "; ";
    }
    const int large = t1[1].of("n_over_loglog_n").correct;
    v.require(large <= 10);
    v.detail << "n/loglog n Model 2 = " << large << ", need <= 10";
    report(3, "Fay-Herriot fixed-c rows", v);
}

// -------------------------------------------------------------------------
// Clustered study (criterion 4)
// -------------------------------------------------------------------------

void criterion_clustered() {
    const std::vector<double> rhos = {0.0, 0.2, 0.5, 0.8};
    const std::vector<Strategy> strategies = {
        Strategy::fixed_fence("fence_1.1", 1.1),
        Strategy::adaptive_fence("adaptive_bt", adaptive_config(AdaptiveStrategy::baseline_threshold,
                                                                BaselineDistribution::standard_normal)),
        Strategy::information("cp", GicConfig::cp()),
        Strategy::information("bic", GicConfig::bic(0)),
    };
    std::map<std::pair<int, double>, std::future<StudyResult>> jobs;
    for (int block = 1; block <= 3; ++block)
        for (double rho : rhos)
            jobs.emplace(std::make_pair(block, rho), std::async(std::launch::async, [block, rho, strategies] {
                             const auto s = clustered_scenario(clustered_table_beta(block), rho, 100, 5, 1.0, 1.0,
                                                               kDesignSeed, kReplications);
                             return run_study(s, strategies, RngStream{kMasterSeed, 0});
                         }));
    std::map<std::pair<int, double>, StudyResult> res;
    for (auto& [key, job] : jobs) res.emplace(key, job.get());

    Verdict v;
    const std::vector<int> reference_b3 = {100, 100, 97, 94};
    std::vector<int> fence_b3;
    for (std::size_t k = 0; k < rhos.size(); ++k) {
        const int c = res.at({3, rhos[k]}).of("fence_1.1").correct;
        fence_b3.push_back(c);
        v.require(std::abs(c - reference_b3[k]) <= 8);
    }
    const int fence_b1 = res.at({1, 0.0}).of("fence_1.1").correct;
    v.require(std::abs(fence_b1 - 94) <= 10);
    v.detail << "fence c=1.1 block 3 = (" << join(fence_b3) << ") vs (100,100,97,94) +-8; block 1 rho=0 = "
             << fence_b1 << " vs 94 +-10; ";

    std::vector<int> adaptive;
    for (const auto& [key, r] : res) {
        adaptive.push_back(r.of("adaptive_bt").correct);
        v.require(adaptive.back() >= 94);
    }
    v.detail << "adaptive = (" << join(adaptive) << ") need >= 94; ";

    bool ordering = true;
    std::vector<std::string> pairs;
    for (int block = 1; block <= 2; ++block)
        for (double rho : rhos) {
            const auto& r = res.at({block, rho});
            ordering = ordering && r.of("bic").correct >= r.of("cp").correct;
            pairs.push_back(std::to_string(r.of("bic").correct) + "/" + std::to_string(r.of("cp").correct));
        }
    v.require(ordering);
    v.detail << "BIC/Cp blocks 1-2 = (" << join(pairs) << ") need BIC >= Cp; ";

    const auto& hard = res.at({3, 0.8});
    const int cp = hard.of("cp").correct, bic = hard.of("bic").correct;
    v.require(cp <= 60 && bic <= 60);
    v.detail << "block 3 rho=0.8 Cp = " << cp << ", BIC = " << bic << ", need both <= 60";
    report(4, "clustered design", v);
}

// -------------------------------------------------------------------------
// Deviance-gap law (criterion 5)
// -------------------------------------------------------------------------

void criterion_gap_law() {
    const auto s = fay_herriot_table_model(3, kDesignSeed, 2000);
    const auto truth = s.truth();
    const auto full = s.space().full_model();
    const RngStream rng = RngStream{kMasterSeed, 0}.tagged("gap_law");
    std::vector<double> gaps;
    for (int r = 0; r < s.replications; ++r) {
        const auto d = generate_fay_herriot(s, r, rng);
        gaps.push_back(fit_ml_fay_herriot(d, truth).qhat - fit_ml_fay_herriot(d, full).qhat);
    }
    std::sort(gaps.begin(), gaps.end());
    // (m/2) log(1 + (2/24) F) <= t  iff  F <= 12 (exp(2t/m) - 1)
    const boost::math::fisher_f_distribution<double> F(2.0, 24.0);
    double ks = 0.0;
    const double n = static_cast<double>(gaps.size());
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        const double cdf = boost::math::cdf(F, 12.0 * std::expm1(2.0 * gaps[i] / 30.0));
        ks = std::max({ks, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
    }
    double mean = 0.0;
    for (double g : gaps) mean += g / n;
    double ss = 0.0;
    for (double g : gaps) ss += (g - mean) * (g - mean);
    const double sd = std::sqrt(ss / (n - 1));
    const double sigma = sigma_exact_f(truth, full, 30);

    Verdict v;
    v.require(ks <= 0.05);
    v.require(std::abs(sigma / sd - 1.0) <= 0.05);
    v.detail << "KS = " << ks << " (<= 0.05); sigma_exact_f = " << sigma << " vs empirical sd " << sd
             << " (within 5%)";
    report(5, "deviance-gap law", v);
}

// -------------------------------------------------------------------------
// Brute-force equivalence (criterion 6)
// -------------------------------------------------------------------------

void criterion_brute_force() {
    Dataset names;
    names.y = Eigen::VectorXd::Zero(1);
    names.covariates = Eigen::MatrixXd::Ones(1, 5);
    names.names = {"x1", "x2", "x3", "x4", "x5"};
    const auto space = enumerate_all_subsets(names, std::vector<std::string>{"x1"});
    Engine eng = RngStream{kMasterSeed, 0}.engine("brute_force");
    std::uniform_real_distribution<double> uq(0.0, 40.0), us(0.0, 5.0), uc(0.0, 6.0);
    std::uniform_int_distribution<int> tie(0, 3);
    int discrepancies = 0;
    const int tables = 1000;
    for (int t = 0; t < tables; ++t) {
        std::map<std::string, FitResult> fits;
        std::map<std::string, double> sigmas;
        for (std::size_t i = 0; i < space.size(); ++i) {
            FitResult f;
            f.model_id = space[i].id;
            // a quarter of the tables use integer Q-hat so that ties occur
            f.qhat = space[i].id == space.full_model().id ? 0.0 : (t % 4 == 0 ? std::round(uq(eng) / 4) : uq(eng));
            fits[f.model_id] = f;
            sigmas[f.model_id] = space[i].id == space.full_model().id ? 0.0 : us(eng);
        }
        FenceConfig cfg;
        cfg.c = uc(eng);
        const auto fast = fence_select(space, fits, sigmas, cfg);
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < space.size(); ++i) {
            const auto& m = space[i];
            if (!in_fence(fits[m.id].qhat, 0.0, sigmas[m.id], cfg.c)) continue;
            if (!best) {
                best = i;
                continue;
            }
            const auto& b = space[*best];
            if (std::make_tuple(m.dimension, fits[m.id].qhat, m.id) < std::make_tuple(b.dimension, fits[b.id].qhat, b.id))
                best = i;
        }
        discrepancies += !fast.selected || fast.selected->id != space[*best].id;
    }
    Verdict v;
    v.require(discrepancies == 0);
    v.detail << discrepancies << " discrepancies over " << tables << " random tables";
    report(6, "early stopping equals brute force", v);
}

// -------------------------------------------------------------------------
// Boundary behavior (criterion 7)
// -------------------------------------------------------------------------

void criterion_boundaries() {
    Verdict v;
    int checked = 0, bad = 0;
    const RngStream rng = RngStream{kMasterSeed, 0}.tagged("boundaries");
    for (int model = 1; model <= 5; ++model) {
        const auto s = fay_herriot_table_model(model, kDesignSeed, 10);
        const auto space = s.space();
        const auto& minimal = space[space.minimal_indices().front()];
        for (int r = 0; r < s.replications; ++r) {
            const auto d = generate_fay_herriot(s, r, rng);
            const auto t = evaluate_space(space, d, kFayHerriot, SigmaKind::exact_f_numeric);
            AdaptiveConfig cfg;
            cfg.bootstrap_B = kBootstrap;
            const auto curve = pstar_curve(space, d, kFayHerriot, SigmaKind::exact_f_numeric, cfg,
                                           rng.substream(static_cast<std::uint64_t>(100 * model + r)));
            const double b_star = curve.c_values.back();
            const bool ok = outcome_from_table(space, t, 0.0).selected->id == space.full_model().id &&
                            outcome_from_table(space, t, b_star).selected->id == minimal.id &&
                            curve.pstar.front() == 1.0 && curve.modal_model.front() == space.full_model().id &&
                            curve.pstar.back() == 1.0 && curve.modal_model.back() == minimal.id;
            ++checked;
            bad += !ok;
        }
    }
    v.require(bad == 0);
    v.detail << bad << " violations over " << checked << " datasets (c = 0 -> M_f, c = B* -> M_*, p* endpoints = 1)";
    report(7, "boundary behavior", v);
}

// -------------------------------------------------------------------------
// GLMM measure (criterion 8)
// -------------------------------------------------------------------------

void criterion_glmm() {
    Verdict v;
    const RngStream rng = RngStream{kMasterSeed, 0}.tagged("glmm");

    // (a) marginal mean against Monte Carlo at 10 parameter points
    const auto rule = gauss_hermite_rule(GlmmOptions{}.quadrature_order);
    const double points[10][3] = {{0.0, 0.5, 0.25}, {1.0, 0.49, 0.25}, {-0.3, 1.0, 0.0},  {2.0, 0.2, 0.3},
                                  {-1.5, 0.7, 0.7}, {0.5, 2.0, 1.0},   {-2.5, 0.1, 0.05}, {3.0, 1.5, 0.5},
                                  {0.8, 0.0, 0.6},  {-0.7, 3.0, 2.0}};
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const double eta = points[k][0], s2 = points[k][1], t2 = points[k][2];
        Engine eng = rng.substream(static_cast<std::uint64_t>(k)).engine("mc");
        std::normal_distribution<double> normal(0.0, 1.0);
        double acc = 0.0;
        const int draws = 1000000;
        for (int i = 0; i < draws; ++i) {
            const double lin = eta + std::sqrt(s2) * normal(eng) + std::sqrt(t2) * normal(eng);
            acc += inverse_link(Link::logit, lin);
        }
        const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, eta), x = Eigen::VectorXd::Ones(1);
        const double g = glmm_mean_g(Link::logit, beta, Eigen::Vector2d(s2, t2), x, Eigen::Vector2d(1, 1), rule);
        worst = std::max(worst, std::abs(g - acc / draws));
    }
    v.require(worst <= 1e-3);
    v.detail << "max |g - MC| = " << worst << " (<= 1e-3); ";

    // (b) beta recovery at n = 2000, every coordinate of every replicate
    const auto rec = two_level_logistic_scenario(logistic_study_beta(), 100, 4, 5, 0.7, 0.5, kDesignSeed, 20);
    const auto truth = rec.truth();
    const Eigen::VectorXd true_beta = logistic_study_beta().head(4);
    std::vector<std::future<double>> errs;
    for (int r = 0; r < rec.replications; ++r) {
        errs.push_back(std::async(std::launch::async, [&, r] {
            const auto d = generate_two_level_logistic(rec, r, rng.tagged("recovery"));
            const auto fit = fit_glmm_sse(d, truth, rule);
            return (fit.beta - true_beta).lpNorm<Eigen::Infinity>();
        }));
    }
    double max_err = 0.0, mean_err = 0.0;
    for (auto& e : errs) {
        const double x = e.get();
        max_err = std::max(max_err, x);
        mean_err += x / rec.replications;
    }
    v.require(max_err <= 0.15);
    v.detail << "beta recovery max error over 20 x 4 = " << max_err << " (<= 0.15, mean " << mean_err << "); ";

    // (c) F-B fence with c = 1 on 8 candidate covariates
    const auto sel = two_level_logistic_scenario(logistic_study_beta(), 60, 3, 4, 0.7, 0.5, kDesignSeed,
                                                 kReplications);
    const auto res = run_study(sel, {Strategy::forward_backward("fb_fence", 1.0)}, RngStream{kMasterSeed, 0});
    const auto& c = res.of("fb_fence");
    v.require(c.correct + c.overfit >= 80);
    v.require(c.correct >= 60);
    v.detail << "fb_fence superset = " << c.correct + c.overfit << " (>= 80), exact = " << c.correct << " (>= 60)";
    report(8, "GLMM measure properties", v);
}

// -------------------------------------------------------------------------
// Determinism (criterion 9)
// -------------------------------------------------------------------------

std::string replayed_reports() {
    std::string out;
    const auto s = fay_herriot_table_model(2, kDesignSeed, 5);
    const auto space = s.space();
    const auto d = generate_fay_herriot(s, 0, RngStream{kMasterSeed, 0}.tagged("data"));
    for (auto strategy : {AdaptiveStrategy::screen_tests, AdaptiveStrategy::baseline_threshold}) {
        const auto rep = adaptive_select(space, d, kFayHerriot, SigmaKind::exact_f_numeric,
                                         adaptive_config(strategy, BaselineDistribution::standard_normal),
                                         RngStream{kMasterSeed, 0});
        out += adaptive_json(rep).dump() + curve_csv(rep.curve);
    }
    FenceConfig cfg;
    cfg.sigma_kind = SigmaKind::exact_f_numeric;
    out += outcome_json(fence_select(space, d, kFayHerriot, cfg)).dump();
    AdaptiveConfig small;
    small.bootstrap_B = 20;
    out += study_json(run_study(s, {Strategy::fixed_fence("c1", 1.0), Strategy::adaptive_fence("af", small)},
                                RngStream{kMasterSeed, 0}))
               .dump();
    const auto lmm = clustered_scenario(clustered_table_beta(2), 0.5, 100, 5, 1.0, 1.0, kDesignSeed, 3);
    out += study_json(run_study(lmm, {Strategy::fixed_fence("c1.1", 1.1), Strategy::adaptive_fence("af", small)},
                                RngStream{kMasterSeed, 0}))
               .dump();
    return out;
}

void criterion_determinism() {
    const auto a = replayed_reports();
    const auto b = replayed_reports();
    Verdict v;
    v.require(a == b);
    v.detail << (a == b ? "identical" : "different") << " bytes across two in-process replays (" << a.size()
             << " bytes)";
    report(9, "determinism", v);
}

}  // namespace

int main() {
    try {
        const auto t1 = fay_herriot_studies();
        criterion_adaptive_st(t1);
        criterion_adaptive_bt(t1);
        criterion_fixed_rows(t1);
        criterion_clustered();
        criterion_gap_law();
        criterion_brute_force();
        criterion_boundaries();
        criterion_glmm();
        criterion_determinism();
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
