#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <vector>

namespace tsopt {

/// Box-constrained Nelder-Mead minimization. Good enough for the low
/// dimensional hyperparameter searches in this library; not a general
/// purpose optimizer.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd start, const Eigen::VectorXd& lo,
                                   const Eigen::VectorXd& hi, int max_iters = 200,
                                   double ftol = 1e-7) {
    const int n = int(start.size());
    auto clamp = [&](Eigen::VectorXd v) {
        for (int i = 0; i < n; ++i) v[i] = std::min(std::max(v[i], lo[i]), hi[i]);
        return v;
    };

    struct Vertex {
        Eigen::VectorXd x;
        double fx;
    };
    std::vector<Vertex> simplex;
    simplex.reserve(n + 1);
    start = clamp(std::move(start));
    simplex.push_back({start, f(start)});
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd v = start;
        const double step = 0.25 * (hi[i] - lo[i]);
        v[i] += (v[i] + step <= hi[i]) ? step : -step;
        v = clamp(std::move(v));
        simplex.push_back({v, f(v)});
    }
    auto by_value = [](const Vertex& a, const Vertex& b) { return a.fx < b.fx; };
    std::sort(simplex.begin(), simplex.end(), by_value);

    for (int it = 0; it < max_iters; ++it) {
        if (std::abs(simplex.back().fx - simplex.front().fx) <=
            ftol * (1.0 + std::abs(simplex.front().fx)))
            break;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += simplex[i].x;
        centroid /= double(n);

        const Vertex& worst = simplex.back();
        Eigen::VectorXd xr = clamp(centroid + (centroid - worst.x));
        const double fr = f(xr);

        if (fr < simplex.front().fx) {
            Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - worst.x));
            const double fe = f(xe);
            simplex.back() = fe < fr ? Vertex{xe, fe} : Vertex{xr, fr};
        } else if (fr < simplex[n - 1].fx) {
            simplex.back() = {xr, fr};
        } else {
            Eigen::VectorXd xc = clamp(centroid + 0.5 * (worst.x - centroid));
            const double fc = f(xc);
            if (fc < worst.fx) {
                simplex.back() = {xc, fc};
            } else {
                for (int i = 1; i <= n; ++i) {
                    simplex[i].x = clamp(simplex[0].x + 0.5 * (simplex[i].x - simplex[0].x));
                    simplex[i].fx = f(simplex[i].x);
                }
            }
        }
        std::sort(simplex.begin(), simplex.end(), by_value);
    }
    return simplex.front().x;
}

} // namespace tsopt
