// Command-line front end: fit, fence, fb-fence, adaptive-fence, gic,
// simulate, pstar-curve.

#include "fence/adaptive.hpp"
#include "fence/error.hpp"
#include "fence/fence.hpp"
#include "fence/gic.hpp"
#include "fence/io.hpp"
#include "fence/measures.hpp"
#include "fence/model_space.hpp"
#include "fence/simlab.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace {

using fence::Error;
using fence::ErrorCode;
using fence::json;

struct RunConfig {
    std::string command;
    std::string input;
    std::string out;
    std::string format = "json";
    std::string measure = "least_squares";
    std::string sigma = "chisq_approx";
    double c = 1.0;
    std::vector<std::string> forced = {"x1"};
    std::string model;  // fit: a single model id instead of the whole space
    std::uint64_t seed = 20090101;
    // adaptive
    std::string strategy = "screen_tests";
    int bootstrap = 100;
    int grid_points = 101;
    bool two_step = false;
    std::string baseline = "standard_normal";
    // gic
    std::string criterion = "bic";
    double lambda = 0.0;
    long sample_size = 0;
    // simulate
    std::string scenario = "fh-model2";
    int replications = 100;
    std::vector<std::string> strategies;
    bool timing = false;
    int emit_replicate = -1;

    json to_json() const {
        json j = {{"command", command}, {"seed", seed}, {"format", format}};
        if (command == "simulate") {
            j["scenario"] = scenario;
            j["replications"] = replications;
            j["strategies"] = strategies;
            j["bootstrap"] = bootstrap;
            j["grid_points"] = grid_points;
            j["emit_replicate"] = emit_replicate;
            return j;
        }
        j["input"] = input;
        j["measure"] = measure;
        j["sigma"] = sigma;
        j["forced"] = forced;
        if (command == "fit") j["model"] = model;
        if (command == "fence" || command == "fb-fence") j["c"] = c;
        if (command == "adaptive-fence" || command == "pstar-curve") {
            j["strategy"] = strategy;
            j["bootstrap"] = bootstrap;
            j["grid_points"] = grid_points;
            j["two_step"] = two_step;
            j["baseline"] = baseline;
        }
        if (command == "gic") {
            j["criterion"] = criterion;
            j["lambda"] = lambda;
            j["sample_size"] = sample_size;
        }
        return j;
    }
};

fence::MeasureKind parse_measure(const std::string& s) {
    fence::MeasureKind m;
    if (s == "ml_fay_herriot") m.tag = fence::MeasureTag::ml_fay_herriot;
    else if (s == "least_squares") m.tag = fence::MeasureTag::least_squares;
    else if (s == "mvc") m.tag = fence::MeasureTag::mvc;
    else if (s == "glmm_sse") m.tag = fence::MeasureTag::glmm_sse;
    else throw Error(ErrorCode::InvalidConfig, "unknown measure '" + s + "'");
    return m;
}

fence::SigmaKind parse_sigma(const std::string& s) {
    if (s == "chisq_approx") return fence::SigmaKind::chisq_approx;
    if (s == "exact_f_numeric") return fence::SigmaKind::exact_f_numeric;
    if (s == "observed_variance") return fence::SigmaKind::observed_variance;
    throw Error(ErrorCode::InvalidConfig, "unknown sigma estimator '" + s + "'");
}

fence::AdaptiveStrategy parse_strategy(const std::string& s) {
    if (s == "screen_tests" || s == "st") return fence::AdaptiveStrategy::screen_tests;
    if (s == "baseline_threshold" || s == "bt") return fence::AdaptiveStrategy::baseline_threshold;
    if (s == "none") return fence::AdaptiveStrategy::none;
    throw Error(ErrorCode::InvalidConfig, "unknown adaptive strategy '" + s + "'");
}

fence::BaselineDistribution parse_baseline(const std::string& s) {
    if (s == "standard_normal") return fence::BaselineDistribution::standard_normal;
    if (s == "uniform01") return fence::BaselineDistribution::uniform01;
    throw Error(ErrorCode::InvalidConfig, "unknown baseline distribution '" + s + "'");
}

fence::GicConfig parse_gic(const std::string& criterion, double lambda, long n) {
    if (criterion == "cp") return fence::GicConfig::cp();
    if (criterion == "bic") return fence::GicConfig::bic(n);
    if (criterion == "hq") return fence::GicConfig::hq(lambda, n);
    if (criterion == "fixed") return fence::GicConfig::fixed(lambda);
    throw Error(ErrorCode::InvalidConfig, "unknown criterion '" + criterion + "'");
}

struct Problem {
    fence::Dataset data;
    fence::ModelSpace space;
    fence::MeasureKind measure;
    fence::SigmaKind sigma;
};

Problem load_problem(const RunConfig& cfg) {
    if (cfg.input.empty()) throw Error(ErrorCode::InvalidConfig, "an input CSV is required");
    Problem p{fence::ingest_csv(cfg.input), {}, parse_measure(cfg.measure), parse_sigma(cfg.sigma)};
    if (p.sigma == fence::SigmaKind::exact_f_numeric && p.measure.tag != fence::MeasureTag::ml_fay_herriot)
        throw Error(ErrorCode::InvalidConfig, "exact_f_numeric applies to ml_fay_herriot only");
    if (p.sigma == fence::SigmaKind::observed_variance && !p.data.grouping)
        throw Error(ErrorCode::InvalidConfig, "observed_variance needs a cluster or community column");
    if (p.measure.tag == fence::MeasureTag::ml_fay_herriot && !fence::detail::has_unit_variances(p.data))
        p.data = fence::transform_unit_variance(p.data, fence::RngStream{cfg.seed, 0}.tagged("unit_variance"));
    fence::SpaceOptions opts;
    if (p.measure.tag == fence::MeasureTag::glmm_sse && p.data.grouping) {
        opts.fixed_random = {"community"};
        if (p.data.grouping->two_level()) opts.fixed_random.push_back("family");
    }
    p.space = fence::enumerate_all_subsets(p.data, std::span<const std::string>(cfg.forced), opts);
    return p;
}

fence::AdaptiveConfig adaptive_config(const RunConfig& cfg) {
    fence::AdaptiveConfig a;
    a.bootstrap_B = cfg.bootstrap;
    a.grid_points = cfg.grid_points;
    a.strategy = parse_strategy(cfg.strategy);
    a.two_step = cfg.two_step;
    a.baseline = parse_baseline(cfg.baseline);
    return a;
}

/// fh-model<k>, lmm-b<k>-rho<r>, or logistic.
fence::Scenario parse_scenario(const std::string& name, int replications) {
    std::smatch mt;
    fence::Scenario s;
    if (std::regex_match(name, mt, std::regex("fh-model([1-5])"))) {
        s = fence::fay_herriot_table_model(std::stoi(mt[1]));
    } else if (std::regex_match(name, mt, std::regex("lmm-b([1-3])-rho([0-9.]+)"))) {
        s = fence::clustered_scenario(fence::clustered_table_beta(std::stoi(mt[1])), std::stod(mt[2]));
    } else if (name == "logistic") {
        s = fence::two_level_logistic_scenario(fence::logistic_study_beta());
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown scenario '" + name + "'");
    }
    s.name = name;
    s.replications = replications;
    return s;
}

/// fence:<c>, fb-fence:<c>, adaptive:<st|bt|bt-uniform|two-step>,
/// gic:<cp|bic>, gic:hq:<c>, gic:fixed:<lambda>.
fence::Strategy parse_study_strategy(const std::string& spec, const RunConfig& cfg) {
    std::smatch mt;
    if (std::regex_match(spec, mt, std::regex("fence:([0-9.eE+-]+)")))
        return fence::Strategy::fixed_fence(spec, std::stod(mt[1]));
    if (std::regex_match(spec, mt, std::regex("fb-fence:([0-9.eE+-]+)")))
        return fence::Strategy::forward_backward(spec, std::stod(mt[1]));
    if (std::regex_match(spec, mt, std::regex("adaptive:(st|bt|bt-uniform|two-step)"))) {
        fence::AdaptiveConfig a;
        a.bootstrap_B = cfg.bootstrap;
        a.grid_points = cfg.grid_points;
        const std::string v = mt[1];
        if (v == "bt" || v == "bt-uniform") a.strategy = fence::AdaptiveStrategy::baseline_threshold;
        if (v == "bt-uniform") a.baseline = fence::BaselineDistribution::uniform01;
        if (v == "two-step") a.two_step = true;
        return fence::Strategy::adaptive_fence(spec, a);
    }
    if (std::regex_match(spec, mt, std::regex("gic:(cp|bic)"))) return fence::Strategy::information(spec, parse_gic(mt[1], 0, 0));
    if (std::regex_match(spec, mt, std::regex("gic:(hq|fixed):([0-9.eE+-]+)")))
        return fence::Strategy::information(spec, parse_gic(mt[1], std::stod(mt[2]), 0));
    throw Error(ErrorCode::InvalidConfig, "unknown study strategy '" + spec + "'");
}

std::string run(const RunConfig& cfg) {
    const fence::RngStream rng{cfg.seed, 0};
    json report;
    if (cfg.command == "simulate") {
        auto scenario = parse_scenario(cfg.scenario, cfg.replications);
        if (cfg.emit_replicate >= 0) {
            // raw replicate data, e.g. for use with the other commands
            return fence::dataset_csv(fence::generate(scenario, cfg.emit_replicate, rng.tagged("data")));
        }
        std::vector<fence::Strategy> strategies;
        for (const auto& s : cfg.strategies) strategies.push_back(parse_study_strategy(s, cfg));
        if (strategies.empty()) throw Error(ErrorCode::InvalidConfig, "simulate needs at least one --strategy");
        report = fence::study_json(fence::run_study(scenario, strategies, rng), cfg.timing);
    } else {
        const auto p = load_problem(cfg);
        if (cfg.command == "fit") {
            json fits = json::array();
            for (const auto& m : p.space.models()) {
                if (!cfg.model.empty() && m.id != cfg.model) continue;
                fits.push_back(fence::fit_json(fence::fit_model(p.data, m, p.measure), m));
            }
            if (fits.empty()) throw Error(ErrorCode::UnknownName, "no model with id '" + cfg.model + "'");
            report = {{"fits", fits}};
        } else if (cfg.command == "fence") {
            fence::FenceConfig fc{cfg.c, p.sigma, fence::ReferencePolicy::full_model};
            report = fence::outcome_json(fence::fence_select(p.space, p.data, p.measure, fc));
        } else if (cfg.command == "fb-fence") {
            report = fence::outcome_json(fence::fb_fence(p.space, p.data, p.measure, p.sigma, cfg.c));
        } else if (cfg.command == "gic") {
            std::map<std::string, fence::FitResult> fits;
            for (const auto& m : p.space.models()) fits.emplace(m.id, fence::fit_model(p.data, m, p.measure));
            const long n = cfg.sample_size > 0 ? cfg.sample_size : static_cast<long>(p.data.n());
            const auto gc = parse_gic(cfg.criterion, cfg.lambda, n);
            report = {{"selected", fence::gic_select(p.space, fits, gc).id}, {"lambda", gc.lambda()}};
        } else if (cfg.command == "adaptive-fence") {
            const auto rep = fence::adaptive_select(p.space, p.data, p.measure, p.sigma, adaptive_config(cfg), rng);
            if (cfg.format == "csv") return fence::curve_csv(rep.curve);
            report = fence::adaptive_json(rep);
        } else if (cfg.command == "pstar-curve") {
            const auto curve = fence::pstar_curve(p.space, p.data, p.measure, p.sigma, adaptive_config(cfg), rng);
            if (cfg.format == "csv") return fence::curve_csv(curve);
            report = {{"curve", fence::curve_json(curve)}};
        }
    }
    report["config"] = cfg.to_json();
    return report.dump(2) + "\n";
}

void add_common(CLI::App* sub, RunConfig& cfg, bool data_input) {
    sub->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
    sub->add_option("--out", cfg.out, "Output path (stdout when omitted)");
    sub->add_option("--format", cfg.format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    if (!data_input) return;
    sub->add_option("input", cfg.input, "Dataset CSV")->required();
    sub->add_option("--measure", cfg.measure, "ml_fay_herriot | least_squares | mvc | glmm_sse")->capture_default_str();
    sub->add_option("--sigma", cfg.sigma, "chisq_approx | exact_f_numeric | observed_variance")->capture_default_str();
    sub->add_option("--forced", cfg.forced, "Covariates present in every model")->capture_default_str();
}

void add_adaptive(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--strategy", cfg.strategy, "screen_tests | baseline_threshold | none")->capture_default_str();
    sub->add_option("--bootstrap", cfg.bootstrap, "Bootstrap samples")->capture_default_str();
    sub->add_option("--grid-points", cfg.grid_points, "Points on [0, B*]")->capture_default_str();
    sub->add_flag("--two-step", cfg.two_step, "Bootstrap under the c = 1 selection");
    sub->add_option("--baseline", cfg.baseline, "standard_normal | uniform01")->capture_default_str();
}

void print_error(std::string_view code, const std::string& message) {
    std::cerr << json{{"error", std::string(code)}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fence model selection"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file with option values");
    RunConfig cfg;

    auto* fit = app.add_subcommand("fit", "Fit the candidate models");
    add_common(fit, cfg, true);
    fit->add_option("--model", cfg.model, "Fit only this model id");

    auto* fnc = app.add_subcommand("fence", "Fence selection at a fixed c");
    add_common(fnc, cfg, true);
    fnc->add_option("--c", cfg.c, "Fence width")->capture_default_str();

    auto* fb = app.add_subcommand("fb-fence", "Forward-backward fence at a fixed c");
    add_common(fb, cfg, true);
    fb->add_option("--c", cfg.c, "Fence width")->capture_default_str();

    auto* ad = app.add_subcommand("adaptive-fence", "Fence with bootstrap-calibrated c");
    add_common(ad, cfg, true);
    add_adaptive(ad, cfg);

    auto* pc = app.add_subcommand("pstar-curve", "p* curve under the full model");
    add_common(pc, cfg, true);
    add_adaptive(pc, cfg);

    auto* gic = app.add_subcommand("gic", "Information-criterion selection");
    add_common(gic, cfg, true);
    gic->add_option("--criterion", cfg.criterion, "cp | bic | hq | fixed")->capture_default_str();
    gic->add_option("--lambda", cfg.lambda, "Penalty (fixed) or constant (hq)");
    gic->add_option("--sample-size", cfg.sample_size, "n in log n (default: rows)");

    auto* sim = app.add_subcommand("simulate", "Run a simulation study");
    add_common(sim, cfg, false);
    sim->add_option("--scenario", cfg.scenario, "fh-model<1-5> | lmm-b<1-3>-rho<r> | logistic")->capture_default_str();
    sim->add_option("--replications", cfg.replications, "Simulated datasets")->capture_default_str();
    sim->add_option("--strategy", cfg.strategies,
                    "fence:<c> | fb-fence:<c> | adaptive:<st|bt|bt-uniform|two-step> | gic:<cp|bic> | gic:hq:<c> | gic:fixed:<l>");
    sim->add_option("--bootstrap", cfg.bootstrap, "Bootstrap samples for adaptive strategies")->capture_default_str();
    sim->add_option("--grid-points", cfg.grid_points, "Grid points for adaptive strategies")->capture_default_str();
    sim->add_flag("--timing", cfg.timing, "Include per-replicate wall-clock times");
    sim->add_option("--emit-replicate", cfg.emit_replicate, "Write this replicate's dataset as CSV instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("InvalidArguments", e.what());
        return 2;
    }
    cfg.command = app.get_subcommands().front()->get_name();

    try {
        const std::string text = run(cfg);
        if (cfg.out.empty()) std::cout << text;
        else fence::write_text(cfg.out, text);
    } catch (const Error& e) {
        print_error(fence::to_string(e.code()), e.what());
        return fence::is_numerical(e.code()) ? 3 : 2;
    } catch (const std::exception& e) {
        print_error("InvalidArguments", e.what());
        return 2;
    }
    return 0;
}
