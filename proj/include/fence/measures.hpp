#pragma once

// Lack-of-fit measures Q_M and their minimized values for each supported
// model family.

#include "fence/error.hpp"
#include "fence/model_space.hpp"
#include "fence/numerics.hpp"
#include "fence/simplex.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace fence {

enum class MeasureTag { ml_fay_herriot, least_squares, mvc, glmm_sse };

inline const char* to_string(MeasureTag t) {
    switch (t) {
        case MeasureTag::ml_fay_herriot: return "ml_fay_herriot";
        case MeasureTag::least_squares: return "least_squares";
        case MeasureTag::mvc: return "mvc";
        case MeasureTag::glmm_sse: return "glmm_sse";
    }
    return "?";
}

struct CovarianceFamily {
    enum class Kind {
        diagonal,     // V = diag(weights); identity when weights is empty
        exchangeable  // V_i proportional to I + kappa J within each cluster, kappa >= 0
    };
    Kind kind = Kind::diagonal;
    Eigen::VectorXd weights;
};

struct MvcOptions {
    std::optional<Eigen::MatrixXd> T;  // n x k, full column rank; identity when absent
    CovarianceFamily covariance;
    SimplexOptions simplex;
};

enum class Link { identity, logit };

struct GlmmOptions {
    Link link = Link::logit;
    int quadrature_order = 20;
    int restarts = 3;
    int max_evaluations = 200;
    double f_tolerance = 1e-12;
    double x_tolerance = 1e-10;
    std::uint64_t seed = 0x5eed;
};

struct MeasureKind {
    MeasureTag tag = MeasureTag::least_squares;
    MvcOptions mvc;
    GlmmOptions glmm;
};

struct NamedValue {
    std::string name;
    double value = 0.0;
};

struct FitResult {
    std::string model_id;
    double qhat = 0.0;
    Eigen::VectorXd beta;                 // ordered as the model's fixed effects
    std::vector<NamedValue> variance;     // variance components, all >= 0
    Eigen::VectorXd per_cluster_q;        // Q_{M,i} by cluster when the measure decomposes

    /// theta_hat as named values: beta:<covariate> followed by variance components.
    std::vector<NamedValue> theta(const CandidateModel& model) const {
        std::vector<NamedValue> out;
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            out.push_back({"beta:" + model.fixed_effects[static_cast<std::size_t>(j)], beta(j)});
        for (const auto& v : variance) out.push_back(v);
        return out;
    }

    double variance_of(const std::string& name) const {
        for (const auto& v : variance)
            if (v.name == name) return v.value;
        throw Error(ErrorCode::UnknownName, "fit has no variance component '" + name + "'");
    }
};

inline constexpr double kDegenerateRss = 1e-12;
inline constexpr double kVarianceFloor = 1e-8;

inline Eigen::MatrixXd design_matrix(const Dataset& dataset, const CandidateModel& model) {
    Eigen::MatrixXd X(dataset.n(), static_cast<Eigen::Index>(model.fixed_effects.size()));
    for (std::size_t j = 0; j < model.fixed_effects.size(); ++j)
        X.col(static_cast<Eigen::Index>(j)) = dataset.covariates.col(dataset.column_of(model.fixed_effects[j]));
    return X;
}

namespace detail {

inline Eigen::VectorXd sum_by_cluster(const Dataset& dataset, const Eigen::VectorXd& per_obs) {
    if (!dataset.grouping) return {};
    const auto idx = dense_index(dataset.grouping->cluster);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(idx.count);
    for (Eigen::Index i = 0; i < per_obs.size(); ++i) out(idx.of[static_cast<std::size_t>(i)]) += per_obs(i);
    return out;
}

inline bool has_unit_variances(const Dataset& d) {
    if (!d.sampling_variances) return true;
    return ((d.sampling_variances->array() - 1.0).abs() <= 1e-9).all();
}

}  // namespace detail

// -------------------------------------------------------------------------
// Fay-Herriot: reduction to unit sampling variances and profiled ML
// -------------------------------------------------------------------------

/// y~ = (y + u)/sqrt(D), x~ = x/sqrt(D), u_i ~ N(0, D - D_i), D = 1 + max D_i.
inline Dataset transform_unit_variance(const Dataset& dataset, const RngStream& rng) {
    if (!dataset.sampling_variances)
        throw Error(ErrorCode::MissingSamplingVariances, "dataset has no sampling variances");
    const auto& Dv = *dataset.sampling_variances;
    const double D = 1.0 + Dv.maxCoeff();
    const double root = std::sqrt(D);
    Engine eng = rng.engine("transform_unit_variance");
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset out = dataset;
    for (Eigen::Index i = 0; i < dataset.n(); ++i) {
        const double u = std::sqrt(D - Dv(i)) * normal(eng);
        out.y(i) = (dataset.y(i) + u) / root;
    }
    out.covariates = dataset.covariates / root;
    out.sampling_variances = Eigen::VectorXd::Ones(dataset.n());
    return out;
}

/// Closed form Q = (m/2){1 + log(2 pi) + log(|P_{X-perp} y|^2 / m)}. The area
/// variance A enters only through the profile, so A-hat = max(0, RSS/m - 1)
/// and beta-hat (GLS at V = (A+1) I) is the OLS solution.
inline FitResult fit_ml_fay_herriot(const Dataset& dataset, const CandidateModel& model) {
    if (!detail::has_unit_variances(dataset)) {
        throw Error(ErrorCode::InvalidDataset,
                    "ML Fay-Herriot measure needs unit sampling variances; apply transform_unit_variance first");
    }
    const auto ls = solve_least_squares(design_matrix(dataset, model), dataset.y);
    if (ls.residual_sum_of_squares <= kDegenerateRss)
        throw Error(ErrorCode::DegenerateResidual, "residual sum of squares is zero for model " + model.id);
    const double m = static_cast<double>(dataset.n());
    FitResult fit;
    fit.model_id = model.id;
    fit.qhat = 0.5 * m * (1.0 + std::log(2.0 * std::numbers::pi) + std::log(ls.residual_sum_of_squares / m));
    fit.beta = ls.coefficients;
    fit.variance = {{"A", std::max(0.0, ls.residual_sum_of_squares / m - 1.0)}};
    return fit;
}

// -------------------------------------------------------------------------
// Least squares
// -------------------------------------------------------------------------

inline FitResult fit_least_squares(const Dataset& dataset, const CandidateModel& model) {
    const Eigen::MatrixXd X = design_matrix(dataset, model);
    const auto ls = solve_least_squares(X, dataset.y);
    FitResult fit;
    fit.model_id = model.id;
    fit.qhat = ls.residual_sum_of_squares;
    fit.beta = ls.coefficients;
    if (dataset.grouping) {
        const Eigen::VectorXd r = dataset.y - X * ls.coefficients;
        fit.per_cluster_q = detail::sum_by_cluster(dataset, r.array().square().matrix());
    }
    return fit;
}

// -------------------------------------------------------------------------
// MVC
// -------------------------------------------------------------------------

namespace detail {

/// V^{-1} M for the configured family; `kappa` is ignored for diagonal V.
inline Eigen::MatrixXd apply_v_inverse(const Dataset& dataset, const CovarianceFamily& family, double kappa,
                                       const Eigen::MatrixXd& M) {
    Eigen::MatrixXd out = M;
    if (family.kind == CovarianceFamily::Kind::diagonal) {
        if (family.weights.size() == 0) return out;
        if (family.weights.size() != M.rows())
            throw Error(ErrorCode::DimensionMismatch, "diagonal covariance weights length mismatch");
        if (!(family.weights.array() > 0.0).all())
            throw Error(ErrorCode::NonPositiveDefinite, "diagonal covariance has a non-positive entry");
        for (Eigen::Index i = 0; i < M.rows(); ++i) out.row(i) /= family.weights(i);
        return out;
    }
    if (!dataset.grouping) throw Error(ErrorCode::InvalidConfig, "exchangeable covariance needs a cluster grouping");
    if (!(kappa >= 0.0)) throw Error(ErrorCode::NonPositiveDefinite, "exchangeable kappa must be >= 0");
    const auto idx = dense_index(dataset.grouping->cluster);
    std::vector<int> size(static_cast<std::size_t>(idx.count), 0);
    for (int c : idx.of) ++size[static_cast<std::size_t>(c)];
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(idx.count, M.cols());
    for (Eigen::Index i = 0; i < M.rows(); ++i) sums.row(idx.of[static_cast<std::size_t>(i)]) += M.row(i);
    // (I + kappa J)^{-1} = I - kappa / (1 + kappa s) J
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        const int c = idx.of[static_cast<std::size_t>(i)];
        const double f = kappa / (1.0 + kappa * size[static_cast<std::size_t>(c)]);
        out.row(i) -= f * sums.row(c);
    }
    return out;
}

/// A = (T' V^{-1} T)^{-1} T' V^{-1}, applied to the columns of M.
inline Eigen::MatrixXd mvc_map(const Dataset& dataset, const MvcOptions& opt, double kappa,
                               const Eigen::MatrixXd& M) {
    if (!opt.T) {
        // T = I: A = V V^{-1} = I
        return M;
    }
    const Eigen::MatrixXd& T = *opt.T;
    if (T.rows() != M.rows()) throw Error(ErrorCode::DimensionMismatch, "T must have n rows");
    const Eigen::MatrixXd VinvT = apply_v_inverse(dataset, opt.covariance, kappa, T);
    const Eigen::MatrixXd G = T.transpose() * VinvT;
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::NonPositiveDefinite, "T' V^{-1} T is not positive definite (T rank deficient?)");
    return llt.solve(VinvT.transpose() * M);
}

}  // namespace detail

/// Direct evaluation of |(T'V^{-1}T)^{-1} T'V^{-1} (y - X beta)|^2 with dense V.
inline double mvc_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                            const Eigen::MatrixXd& T, const Eigen::MatrixXd& V) {
    Eigen::LLT<Eigen::MatrixXd> vl(V);
    if (vl.info() != Eigen::Success) throw Error(ErrorCode::NonPositiveDefinite, "V is not positive definite");
    const Eigen::MatrixXd VinvT = vl.solve(T);
    const Eigen::MatrixXd G = T.transpose() * VinvT;
    const Eigen::VectorXd r = y - X * beta;
    const Eigen::VectorXd a = G.llt().solve(VinvT.transpose() * r);
    return a.squaredNorm();
}

/// For fixed V the measure is quadratic in beta, so beta is profiled by least
/// squares on (A X, A y); the covariance parameter is searched by simplex.
inline FitResult fit_mvc(const Dataset& dataset, const CandidateModel& model, const MvcOptions& opt = {}) {
    const Eigen::MatrixXd X = design_matrix(dataset, model);
    if (opt.T && opt.T->cols() < X.cols())
        throw Error(ErrorCode::RankDeficient, "T has fewer columns than the model has coefficients");

    auto profile = [&](double kappa, LeastSquaresResult& ls) {
        Eigen::MatrixXd XY(X.rows(), X.cols() + 1);
        XY << X, dataset.y;
        const Eigen::MatrixXd mapped = detail::mvc_map(dataset, opt, kappa, XY);
        ls = solve_least_squares(mapped.leftCols(X.cols()), mapped.col(X.cols()));
        return ls.residual_sum_of_squares;
    };

    FitResult fit;
    fit.model_id = model.id;
    LeastSquaresResult best_ls;
    double best_kappa = 0.0;
    const bool searched = opt.covariance.kind == CovarianceFamily::Kind::exchangeable && opt.T.has_value();
    if (!searched) {
        fit.qhat = profile(0.0, best_ls);
    } else {
        double best = std::numeric_limits<double>::infinity();
        for (double k0 : {0.1, 1.0, 10.0}) {
            Eigen::VectorXd start(1);
            start << std::log(k0 + kVarianceFloor);
            auto obj = [&](const Eigen::VectorXd& t) {
                LeastSquaresResult tmp;
                return profile(std::max(0.0, std::exp(t(0)) - kVarianceFloor), tmp);
            };
            const auto r = nelder_mead(obj, start, opt.simplex);
            if (r.value < best) {
                best = r.value;
                best_kappa = std::max(0.0, std::exp(r.x(0)) - kVarianceFloor);
            }
        }
        if (!std::isfinite(best)) throw Error(ErrorCode::OptimizerFailure, "no finite MVC value found");
        fit.qhat = profile(best_kappa, best_ls);
    }
    fit.beta = best_ls.coefficients;
    if (opt.covariance.kind == CovarianceFamily::Kind::exchangeable) fit.variance = {{"kappa", best_kappa}};
    return fit;
}

// -------------------------------------------------------------------------
// Extended GLMM: Q = sum_i {y_i - g_i(beta, psi)}^2
// -------------------------------------------------------------------------

inline double inverse_link(Link link, double x) {
    if (link == Link::identity) return x;
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// E h(eta + s Z), Z ~ N(0, 1).
inline double marginal_mean(Link link, double eta, double sd, const QuadratureRule& rule) {
    if (link == Link::identity || sd == 0.0) return inverse_link(link, eta);
    return rule.expectation([&](double z) { return inverse_link(link, eta + sd * z); });
}

/// g_{M,i} = E h(x_i' beta + z_i' Sigma^{1/2} xi). `psi` holds the variances of
/// the model's random effects and `z` their loadings for observation i. Nested
/// effects are independent, so the expectation collapses to one dimension.
inline double glmm_mean_g(Link link, const Eigen::VectorXd& beta, const Eigen::VectorXd& psi,
                          const Eigen::VectorXd& x, const Eigen::VectorXd& z, const QuadratureRule& rule) {
    if (psi.size() != z.size()) throw Error(ErrorCode::DimensionMismatch, "psi and z lengths differ");
    if (x.size() != beta.size()) throw Error(ErrorCode::DimensionMismatch, "x and beta lengths differ");
    int active = 0;
    double var = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        if (z(k) == 0.0) continue;
        ++active;
        if (psi(k) < 0.0) throw Error(ErrorCode::InvalidConfig, "variance components must be >= 0");
        var += z(k) * z(k) * psi(k);
    }
    if (active > 2) {
        throw Error(ErrorCode::UnsupportedRandomStructure,
                    "effective random-effect dimension " + std::to_string(active) + " exceeds 2");
    }
    return marginal_mean(link, x.dot(beta), std::sqrt(var), rule);
}

namespace detail {

inline void check_random_structure(const Dataset& dataset, const CandidateModel& model) {
    if (model.random_effects.size() > 2)
        throw Error(ErrorCode::UnsupportedRandomStructure, "more than two random effects in " + model.id);
    for (const auto& re : model.random_effects) {
        const bool ok = (re == "community" || re == "cluster") ? dataset.grouping.has_value()
                      : re == "family" ? (dataset.grouping && dataset.grouping->two_level())
                                       : false;
        if (!ok) throw Error(ErrorCode::UnsupportedRandomStructure, "random effect '" + re + "' is not available");
    }
}

/// Logistic (or linear) regression ignoring the random effects, by IRLS.
inline Eigen::VectorXd glm_start(Link link, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.cols() == 0) return {};
    if (link == Link::identity) return solve_least_squares(X, y).coefficients;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
    for (int it = 0; it < 25; ++it) {
        const Eigen::VectorXd eta = X * beta;
        Eigen::VectorXd w(eta.size()), z(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double mu = std::clamp(inverse_link(Link::logit, eta(i)), 1e-6, 1 - 1e-6);
            w(i) = mu * (1 - mu);
            z(i) = eta(i) + (y(i) - mu) / w(i);
        }
        const Eigen::VectorXd sw = w.array().sqrt();
        const Eigen::VectorXd next =
            solve_least_squares(sw.asDiagonal() * X, sw.asDiagonal() * z).coefficients;
        const double step = (next - beta).lpNorm<Eigen::Infinity>();
        beta = next;
        if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > 30) {
            beta = Eigen::VectorXd::Zero(X.cols());
            break;
        }
        if (step < 1e-8) break;
    }
    return beta;
}

/// Average within-group product of standardized residuals over pairs that
/// share `same` but (optionally) differ in `differ`.
inline double pair_correlation(const Eigen::VectorXd& r, const std::vector<long>& same,
                               const std::vector<long>* differ) {
    std::map<long, std::vector<Eigen::Index>> groups;
    for (std::size_t i = 0; i < same.size(); ++i) groups[same[i]].push_back(static_cast<Eigen::Index>(i));
    double acc = 0.0;
    double count = 0.0;
    for (const auto& [id, members] : groups) {
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                if (differ && (*differ)[static_cast<std::size_t>(members[a])] ==
                                  (*differ)[static_cast<std::size_t>(members[b])])
                    continue;
                acc += r(members[a]) * r(members[b]);
                count += 1.0;
            }
    }
    return count > 0 ? acc / count : 0.0;
}

}  // namespace detail

namespace detail {

/// Residuals y_i - g(x_i' beta, s) and their Jacobian for Levenberg-Marquardt.
/// The last parameter is the total random-effect sd when `with_sd` is set.
struct GlmmResiduals : Eigen::DenseFunctor<double> {
    const Eigen::MatrixXd& X;
    const Eigen::VectorXd& y;
    Link link;
    const QuadratureRule& rule;
    bool with_sd;
    double fixed_sd;

    GlmmResiduals(const Eigen::MatrixXd& X_, const Eigen::VectorXd& y_, Link link_, const QuadratureRule& rule_,
                  bool with_sd_, double fixed_sd_)
        : DenseFunctor(static_cast<int>(X_.cols()) + (with_sd_ ? 1 : 0), static_cast<int>(y_.size())),
          X(X_), y(y_), link(link_), rule(rule_), with_sd(with_sd_), fixed_sd(fixed_sd_) {}

    double sd(const Eigen::VectorXd& theta) const { return with_sd ? std::abs(theta(X.cols())) : fixed_sd; }

    Eigen::VectorXd eta(const Eigen::VectorXd& theta) const {
        return X.cols() > 0 ? Eigen::VectorXd(X * theta.head(X.cols())) : Eigen::VectorXd::Zero(y.size());
    }

    int operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& fvec) const {
        const Eigen::VectorXd e = eta(theta);
        const double s = sd(theta);
        for (Eigen::Index i = 0; i < y.size(); ++i) fvec(i) = y(i) - marginal_mean(link, e(i), s, rule);
        return 0;
    }

    int df(const Eigen::VectorXd& theta, Eigen::MatrixXd& fjac) const {
        const Eigen::VectorXd e = eta(theta);
        const double s = sd(theta);
        const double sign = with_sd && theta(X.cols()) < 0 ? -1.0 : 1.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            double d_eta = 1.0;
            double d_sd = 0.0;
            if (link == Link::logit) {
                d_eta = 0.0;
                for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
                    const double z = rule.nodes[k];
                    const double h = inverse_link(link, e(i) + s * z);
                    const double w = rule.weights[k] * h * (1.0 - h);
                    d_eta += w;
                    d_sd += w * z;
                }
            }
            fjac.row(i).head(X.cols()) = -d_eta * X.row(i);
            if (with_sd) fjac(i, X.cols()) = -sign * d_sd;
        }
        return 0;
    }
};

}  // namespace detail

/// Least-squares fit of the SSE over (beta, s) by Levenberg-Marquardt, where
/// s is the total random-effect sd. Only the sum of the variance components
/// enters the marginal mean, so the reported components split s^2 in the
/// proportions of the moment-based start. The first start is the GLM fit
/// rescaled for logistic-normal attenuation; the remaining restarts perturb it.
inline FitResult fit_glmm_sse(const Dataset& dataset, const CandidateModel& model, const QuadratureRule& rule,
                              const GlmmOptions& opt = {}) {
    detail::check_random_structure(dataset, model);
    const Eigen::MatrixXd X = design_matrix(dataset, model);
    const Eigen::VectorXd& y = dataset.y;
    const Eigen::Index n = y.size();
    const Eigen::Index q = X.cols();
    const auto nre = static_cast<Eigen::Index>(model.random_effects.size());

    // moment-based start
    Eigen::VectorXd beta0 = detail::glm_start(opt.link, X, y);
    Eigen::VectorXd psi0 = Eigen::VectorXd::Zero(nre);
    if (nre > 0) {
        const Eigen::VectorXd eta = q > 0 ? Eigen::VectorXd(X * beta0) : Eigen::VectorXd::Zero(n);
        Eigen::VectorXd r(n);
        double resid_var = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = inverse_link(opt.link, eta(i));
            r(i) = y(i) - mu;
            resid_var += r(i) * r(i);
        }
        resid_var = std::max(resid_var / static_cast<double>(n), 1e-8);
        if (opt.link == Link::logit) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const double mu = std::clamp(inverse_link(opt.link, eta(i)), 1e-6, 1 - 1e-6);
                r(i) /= std::sqrt(mu * (1 - mu));
            }
        } else {
            r /= std::sqrt(resid_var);
        }
        const double scale = opt.link == Link::logit ? std::numbers::pi * std::numbers::pi / 3.0 : resid_var;
        const auto& g = *dataset.grouping;
        const bool two = g.two_level();
        const double rho_c = detail::pair_correlation(r, g.cluster, two ? &g.family : nullptr);
        const double rho_f = two ? detail::pair_correlation(r, g.family, nullptr) : rho_c;
        for (Eigen::Index k = 0; k < nre; ++k) {
            const auto& name = model.random_effects[static_cast<std::size_t>(k)];
            const double rho = name == "family" ? std::max(rho_f - rho_c, 0.0) : std::max(rho_c, 0.0);
            psi0(k) = std::clamp(scale * rho / std::max(1.0 - rho, 0.05), 0.05, 5.0);
        }
        if (opt.link == Link::logit && q > 0) beta0 *= std::sqrt(1.0 + 0.346 * psi0.sum());
    }

    // the identity-link marginal mean does not involve the variances
    const bool with_sd = nre > 0 && opt.link == Link::logit;
    const double sd0 = std::sqrt(psi0.sum());
    detail::GlmmResiduals residuals(X, y, opt.link, rule, with_sd, sd0);
    Eigen::VectorXd start(residuals.inputs());
    start.head(q) = beta0;
    if (with_sd) start(q) = sd0;

    auto sse = [&](const Eigen::VectorXd& theta) {
        Eigen::VectorXd f(n);
        residuals(theta, f);
        return f.squaredNorm();
    };

    std::mt19937_64 eng(detail::splitmix64(opt.seed ^ detail::fnv1a(model.id)));
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd best_x = start;
    double best_value = start.size() > 0 ? std::numeric_limits<double>::infinity() : sse(start);
    for (int restart = 0; restart < std::max(1, opt.restarts) && start.size() > 0; ++restart) {
        Eigen::VectorXd s = start;
        if (restart > 0) {
            for (Eigen::Index j = 0; j < q; ++j) s(j) += 0.1 * std::max(std::abs(start(j)), 0.1) * normal(eng);
            if (with_sd) s(q) = sd0 * std::exp(0.5 * normal(eng));
        }
        Eigen::LevenbergMarquardt<detail::GlmmResiduals> lm(residuals);
        lm.setMaxfev(opt.max_evaluations);
        lm.setXtol(opt.x_tolerance);
        lm.setFtol(opt.f_tolerance);
        lm.minimize(s);
        const double value = sse(s);
        if (std::isfinite(value) && value < best_value) {
            best_value = value;
            best_x = s;
        }
    }
    if (!std::isfinite(best_value)) throw Error(ErrorCode::OptimizerFailure, "no finite SSE found for " + model.id);

    FitResult fit;
    fit.model_id = model.id;
    fit.qhat = best_value;
    fit.beta = best_x.head(q);
    const double total = with_sd ? best_x(q) * best_x(q) : psi0.sum();
    const double share_sum = psi0.sum();
    for (Eigen::Index k = 0; k < nre; ++k) {
        const double share = share_sum > 0 ? psi0(k) / share_sum : 1.0 / static_cast<double>(nre);
        fit.variance.push_back({model.random_effects[static_cast<std::size_t>(k)], total * share});
    }
    if (dataset.grouping) {
        Eigen::VectorXd f(n);
        residuals(best_x, f);
        fit.per_cluster_q = detail::sum_by_cluster(dataset, f.array().square().matrix());
    }
    return fit;
}

// -------------------------------------------------------------------------
// Dispatch
// -------------------------------------------------------------------------

inline FitResult fit_model(const Dataset& dataset, const CandidateModel& model, const MeasureKind& measure) {
    switch (measure.tag) {
        case MeasureTag::ml_fay_herriot: return fit_ml_fay_herriot(dataset, model);
        case MeasureTag::least_squares: return fit_least_squares(dataset, model);
        case MeasureTag::mvc: return fit_mvc(dataset, model, measure.mvc);
        case MeasureTag::glmm_sse: {
            const auto rule = gauss_hermite_rule(measure.glmm.quadrature_order);
            return fit_glmm_sse(dataset, model, rule, measure.glmm);
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown measure");
}

}  // namespace fence
