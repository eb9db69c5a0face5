#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace fence {

struct SimplexOptions {
    int max_evaluations = 4000;
    double f_tolerance = 1e-10;   // absolute spread of simplex values
    double x_tolerance = 1e-8;    // max vertex distance from the best vertex
    double initial_step = 0.25;
};

struct SimplexResult {
    Eigen::VectorXd x;
    double value = std::numeric_limits<double>::infinity();
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead downhill simplex with the dimension-adaptive coefficients of
/// Gao & Han (2012). Non-finite objective values are treated as +inf.
template <class Objective>
SimplexResult nelder_mead(Objective&& f, const Eigen::VectorXd& start, const SimplexOptions& opt = {}) {
    const Eigen::Index n = start.size();
    const double dn = static_cast<double>(std::max<Eigen::Index>(n, 1));
    const double alpha = 1.0;
    const double beta = 1.0 + 2.0 / dn;
    const double gamma = 0.75 - 1.0 / (2.0 * dn);
    const double delta = 1.0 - 1.0 / dn;

    SimplexResult res;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    if (n == 0) {
        res.x = start;
        res.value = eval(start);
        res.converged = true;
        return res;
    }

    std::vector<Eigen::VectorXd> pts(n + 1, start);
    std::vector<double> vals(n + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = start(i) != 0.0 ? opt.initial_step * std::max(1.0, std::abs(start(i)))
                                         : opt.initial_step;
        pts[i + 1](i) += h;
    }
    for (Eigen::Index i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    std::vector<Eigen::Index> order(n + 1);
    while (res.evaluations < opt.max_evaluations) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] < vals[b]; });
        const auto best = order.front();
        const auto worst = order.back();
        const auto second = order[n - 1];

        double spread = std::abs(vals[worst] - vals[best]);
        double size = 0.0;
        for (Eigen::Index i = 0; i <= n; ++i) {
            size = std::max(size, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
        }
        if (std::isfinite(vals[worst]) && spread <= opt.f_tolerance && size <= opt.x_tolerance) {
            res.converged = true;
            break;
        }
        if (std::isfinite(vals[worst]) && spread <= opt.f_tolerance * 1e-2) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i <= n; ++i)
            if (i != worst) centroid += pts[i];
        centroid /= dn;

        const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = centroid + beta * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + gamma * (xr - centroid))
                                           : Eigen::VectorXd(centroid + gamma * (pts[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        // shrink toward the best vertex
        for (Eigen::Index i = 0; i <= n; ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + delta * (pts[i] - pts[best]);
            vals[i] = eval(pts[i]);
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    res.x = pts[static_cast<std::size_t>(it - vals.begin())];
    res.value = *it;
    return res;
}

}  // namespace fence
