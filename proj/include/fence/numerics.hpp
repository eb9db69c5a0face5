#pragma once

// Deterministic numerical substrate: keyed RNG streams, full-rank least
// squares, the law of the ML deviance gap, and Gauss-Hermite rules for
// expectations against a standard normal.

#include "fence/error.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace fence {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

using Engine = std::mt19937_64;

// -------------------------------------------------------------------------
// RngStream
// -------------------------------------------------------------------------

/// Immutable descriptor of a random stream. Draws come from engines keyed by
/// (master_seed, stream_id, purpose); two descriptors with equal fields give
/// equal sequences, and substreams never share state with their parent.
struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    /// Child stream for replicate/bootstrap index `id`.
    RngStream substream(std::uint64_t id) const {
        return {detail::splitmix64(master_seed ^ detail::splitmix64(stream_id + 0x51ed2701ULL)), id};
    }

    /// Child stream keyed by a purpose tag (e.g. "bootstrap", "baseline").
    RngStream tagged(std::string_view purpose) const {
        return {detail::splitmix64(master_seed + detail::fnv1a(purpose)),
                detail::splitmix64(stream_id ^ detail::fnv1a(purpose))};
    }

    Engine engine(std::string_view purpose = "") const {
        const std::uint64_t a = detail::splitmix64(master_seed);
        const std::uint64_t b = detail::splitmix64(a ^ stream_id);
        const std::uint64_t c = detail::splitmix64(b ^ detail::fnv1a(purpose));
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                          static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
        return Engine(seq);
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;
};

inline VectorXd standard_normal_vector(Engine& engine, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = normal(engine);
    return out;
}

// -------------------------------------------------------------------------
// Least squares
// -------------------------------------------------------------------------

struct LeastSquaresResult {
    VectorXd coefficients;
    double residual_sum_of_squares = 0.0;
};

/// Rank threshold: smallest singular value must exceed this times the largest.
inline constexpr double kRankTolerance = 1e-10;

/// Minimizes |y - Xb|^2 through a Householder QR of X. The rank check runs an
/// SVD of the q x q triangular factor, whose singular values equal those of X.
inline LeastSquaresResult solve_least_squares(const MatrixXd& X, const VectorXd& y) {
    const Eigen::Index n = X.rows();
    const Eigen::Index q = X.cols();
    if (y.size() != n) {
        throw Error(ErrorCode::DimensionMismatch,
                    "design has " + std::to_string(n) + " rows but response has " +
                        std::to_string(y.size()));
    }
    if (q < 1 || n < q) {
        throw Error(ErrorCode::DimensionMismatch,
                    "need n >= q >= 1, got n=" + std::to_string(n) + " q=" + std::to_string(q));
    }
    Eigen::HouseholderQR<MatrixXd> qr(X);
    const MatrixXd R = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<MatrixXd> svd(R);
    const auto& sv = svd.singularValues();
    if (!(sv(q - 1) > kRankTolerance * sv(0))) {
        throw Error(ErrorCode::RankDeficient, "design matrix is not of full column rank");
    }
    LeastSquaresResult out;
    out.coefficients = qr.solve(y);
    out.residual_sum_of_squares = (y - X * out.coefficients).squaredNorm();
    return out;
}

// -------------------------------------------------------------------------
// Deviance-gap law
// -------------------------------------------------------------------------

/// Standard deviation of (m/2) log(1 + (K-p)/(m-K-1) F) with F ~ F(K-p, m-K-1).
///
/// Here K counts the non-intercept columns of the full design and p+1 the
/// columns of the candidate. With B = d1 F / (d1 F + d2) ~ Beta(d1/2, d2/2) the
/// transform is -(m/2) log(1 - B), so the integral runs over the unit interval;
/// tanh-sinh handles the integrable endpoint singularities of the Beta density.
inline double f_distribution_sd_of_gap(int m, int K, int p) {
    const int d1 = K - p;
    const int d2 = m - K - 1;
    if (d1 < 0 || d2 < 3) {
        throw Error(ErrorCode::DegreesOfFreedomTooSmall,
                    "need K-p >= 0 and m-K-1 >= 3 (m=" + std::to_string(m) +
                        ", K=" + std::to_string(K) + ", p=" + std::to_string(p) + ")");
    }
    if (d1 == 0) return 0.0;

    const double a = 0.5 * d1;
    const double b = 0.5 * d2;
    const double half_m = 0.5 * m;
    const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);

    // xc is the signed distance to the nearest endpoint (negative near 0).
    auto density_times = [&](auto&& g) {
        return [&, g](double x, double xc) {
            const double one_minus = xc > 0 ? xc : 1.0 - x;
            const double lo = xc > 0 ? x : -xc;
            if (lo <= 0.0 || one_minus <= 0.0) return 0.0;
            const double log_pdf =
                log_norm + (a - 1.0) * std::log(lo) + (b - 1.0) * std::log(one_minus);
            const double t = -half_m * std::log(one_minus);
            return g(t) * std::exp(log_pdf);
        };
    };

    boost::math::quadrature::tanh_sinh<double> integrator;
    const double tol = 1e-12;
    const double mean =
        integrator.integrate(density_times([](double t) { return t; }), 0.0, 1.0, tol);
    const double var = integrator.integrate(
        density_times([mean](double t) { return (t - mean) * (t - mean); }), 0.0, 1.0, tol);
    return std::sqrt(std::max(var, 0.0));
}

// -------------------------------------------------------------------------
// Gauss-Hermite quadrature
// -------------------------------------------------------------------------

/// Nodes and weights for E[f(Z)], Z ~ N(0, 1).
struct QuadratureRule {
    int order = 0;
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double expectation(F&& f) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
        return acc;
    }
};

/// Golub-Welsch eigenvalues of the probabilists' Hermite Jacobi matrix, then
/// Newton polishing on the orthonormal recurrence; weights are the Christoffel
/// numbers 1 / sum_k p_k(x)^2, which stay accurate in the tails.
inline QuadratureRule gauss_hermite_rule(int order) {
    if (order < 1 || order > 100) {
        throw Error(ErrorCode::OrderOutOfRange,
                    "order must be in [1, 100], got " + std::to_string(order));
    }
    QuadratureRule rule;
    rule.order = order;
    if (order == 1) {
        rule.nodes = {0.0};
        rule.weights = {1.0};
        return rule;
    }
    MatrixXd J = MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(J, Eigen::EigenvaluesOnly);

    // p_k orthonormal: p_{k+1} = (x p_k - sqrt(k) p_{k-1}) / sqrt(k+1)
    auto recurrence = [order](double x, double& pn, double& pn1, double& sumsq) {
        double prev = 0.0;
        double cur = 1.0;
        sumsq = 1.0;
        for (int k = 0; k < order; ++k) {
            const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                                std::sqrt(static_cast<double>(k + 1));
            prev = cur;
            cur = next;
            if (k + 1 < order) sumsq += cur * cur;
        }
        pn = cur;
        pn1 = prev;
    };

    rule.nodes.resize(order);
    rule.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        double x = eig.eigenvalues()(i);
        double pn = 0, pn1 = 0, sumsq = 0;
        for (int it = 0; it < 3; ++it) {
            recurrence(x, pn, pn1, sumsq);
            const double deriv = std::sqrt(static_cast<double>(order)) * pn1;
            if (deriv == 0.0) break;
            x -= pn / deriv;
        }
        recurrence(x, pn, pn1, sumsq);
        rule.nodes[i] = x;
        rule.weights[i] = 1.0 / sumsq;
    }
    // symmetric rule: pin the middle node and symmetrize
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = rule.weights[j] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    return rule;
}

}  // namespace fence
