#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "tsopt/kriging.hpp"
#include "tsopt/rng.hpp"

using namespace tsopt;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

MatrixXd column(std::initializer_list<double> vals) {
    MatrixXd m(Eigen::Index(vals.size()), 1);
    Eigen::Index i = 0;
    for (double v : vals) m(i++, 0) = v;
    return m;
}

} // namespace

TEST_CASE("correlation matrix matches the closed form") {
    Correlation c1{VectorXd::Ones(1)};
    MatrixXd pts = column({0.0, 1.0});
    MatrixXd R = correlation_matrix(c1, pts);
    REQUIRE(R(0, 0) == 1.0);
    REQUIRE(R(1, 1) == 1.0);
    REQUIRE(R(0, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));

    Correlation c2{(VectorXd(2) << 0.5, 2.0).finished()};
    MatrixXd pts2(2, 2);
    pts2 << 0.0, 0.0, 1.0, 1.0;
    MatrixXd R2 = correlation_matrix(c2, pts2);
    REQUIRE(R2(0, 1) == Catch::Approx(std::exp(-2.5)).epsilon(1e-12));

    REQUIRE_THROWS_AS(correlation_matrix(c1, pts2), DimensionMismatch);
}

TEST_CASE("constant outputs collapse to the trend") {
    MatrixXd X = column({0.0, 0.3, 0.7, 1.0});
    VectorXd Q = VectorXd::Constant(4, 5.5);
    auto m = KrigingModel::fit(X, Q);
    REQUIRE(m.beta0() == Catch::Approx(5.5));
    auto pred = m.predict(column({0.11, 0.52, 0.93}));
    for (Eigen::Index i = 0; i < pred.mean.size(); ++i) {
        REQUIRE(pred.mean[i] == Catch::Approx(5.5).margin(1e-9));
        REQUIRE(pred.variance[i] <= 1e-12);
    }
}

TEST_CASE("symmetric two-point fit has zero trend") {
    MatrixXd X = column({-1.0, 1.0});
    VectorXd Q(2);
    Q << -1.0, 1.0;
    auto m = KrigingModel::fit(X, Q);
    REQUIRE(m.beta0() == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("leave-one-out error on a smooth quadratic is small") {
    RngStream rng(17, 0);
    const int n = 20;
    MatrixXd X(n, 1);
    VectorXd Q(n);
    for (int i = 0; i < n; ++i) {
        X(i, 0) = (i + rng.uniform01() * 0.5) / double(n);
        Q[i] = 3.0 * X(i, 0) * X(i, 0) - 2.0 * X(i, 0) + 0.5;
    }
    const double range = Q.maxCoeff() - Q.minCoeff();

    double sse = 0.0;
    for (int leave = 0; leave < n; ++leave) {
        MatrixXd Xs(n - 1, 1);
        VectorXd Qs(n - 1);
        int k = 0;
        for (int i = 0; i < n; ++i) {
            if (i == leave) continue;
            Xs(k, 0) = X(i, 0);
            Qs[k] = Q[i];
            ++k;
        }
        auto m = KrigingModel::fit(Xs, Qs);
        auto pred = m.predict(X.row(leave));
        sse += std::pow(pred.mean[0] - Q[leave], 2);
    }
    const double rmse = std::sqrt(sse / n);
    REQUIRE(rmse < 0.05 * range);
}

TEST_CASE("kriging interpolates the design points") {
    RngStream rng(23, 0);
    MatrixXd X(12, 2);
    VectorXd Q(12);
    for (int i = 0; i < 12; ++i) {
        X(i, 0) = rng.uniform01();
        X(i, 1) = rng.uniform01();
        Q[i] = std::sin(12.0 * X(i, 0)) * std::cos(9.0 * X(i, 1)) + 2.0;
    }
    auto m = KrigingModel::fit(X, Q);
    auto pred = m.predict(X);
    for (int i = 0; i < 12; ++i) {
        REQUIRE(pred.mean[i] == Catch::Approx(Q[i]).epsilon(1e-8));
        REQUIRE(pred.variance[i] <= 1e-8 * m.sigma2());
    }

    // smooth data drives the correlation toward singularity; interpolation
    // then holds at jitter tolerance rather than 1e-8
    MatrixXd Xs(10, 1);
    VectorXd Qs(10);
    for (int i = 0; i < 10; ++i) {
        Xs(i, 0) = i / 9.0;
        Qs[i] = 1.0 + 0.5 * Xs(i, 0);
    }
    auto ms = KrigingModel::fit(Xs, Qs);
    auto preds = ms.predict(Xs);
    for (int i = 0; i < 10; ++i) {
        REQUIRE(preds.mean[i] == Catch::Approx(Qs[i]).margin(1e-4));
        REQUIRE(preds.variance[i] <= 1e-4 * std::max(ms.sigma2(), 1.0));
    }
}

TEST_CASE("far prediction reverts to the trend with inflated variance") {
    MatrixXd X = column({0.0, 0.25, 0.5, 0.75, 1.0});
    VectorXd Q(5);
    Q << 1.0, 0.2, -0.4, 0.3, 0.9;
    auto m = KrigingModel::fit(X, Q);

    // far enough that every correlation underflows below 1e-12
    auto pred = m.predict(column({1e6}));
    REQUIRE(pred.mean[0] == Catch::Approx(m.beta0()).margin(1e-9));

    MatrixXd Xn = X; // normalized internally over [0,1]; reproduce by direct arithmetic
    Correlation corr{m.phi().phi};
    MatrixXd R = correlation_matrix(corr, Xn);
    R.diagonal().array() += 1e-10;
    const VectorXd ones = VectorXd::Ones(5);
    const double one_rinv_one = ones.dot(R.llt().solve(ones));
    const double expected_var = m.sigma2() * (1.0 + 1.0 / one_rinv_one);
    REQUIRE(pred.variance[0] == Catch::Approx(expected_var).epsilon(1e-6));
}

TEST_CASE("two-point prediction agrees with direct matrix arithmetic") {
    MatrixXd X = column({0.2, 0.8});
    VectorXd Q(2);
    Q << 1.0, 3.0;
    auto m = KrigingModel::fit(X, Q);

    // rebuild the predictor by hand in the model's normalized coordinates
    MatrixXd Xn = column({0.0, 1.0});
    Correlation corr{m.phi().phi};
    MatrixXd R = correlation_matrix(corr, Xn);
    R.diagonal().array() += 1e-10;
    Eigen::LLT<MatrixXd> llt(R);
    const VectorXd ones = VectorXd::Ones(2);
    const double beta0 = ones.dot(llt.solve(Q)) / ones.dot(llt.solve(ones));

    const double ztest = 0.37;
    const double zn = (ztest - 0.2) / 0.6;
    VectorXd r(2);
    r << std::exp(-m.phi().phi[0] * zn * zn),
        std::exp(-m.phi().phi[0] * (zn - 1.0) * (zn - 1.0));
    const double mean = beta0 + r.dot(llt.solve(Q - beta0 * ones));
    const double h = 1.0 - ones.dot(llt.solve(r));
    const double var =
        m.sigma2() * (1.0 - r.dot(llt.solve(r)) + h * h / ones.dot(llt.solve(ones)));

    auto pred = m.predict(column({ztest}));
    REQUIRE(pred.mean[0] == Catch::Approx(mean).margin(1e-10));
    REQUIRE(pred.variance[0] == Catch::Approx(var).margin(1e-10));
    REQUIRE(m.beta0() == Catch::Approx(beta0).margin(1e-10));
}

TEST_CASE("posterior sample paths are consistent with the predictor") {
    MatrixXd X = column({0.0, 0.3, 0.6, 1.0});
    VectorXd Q(4);
    Q << 0.0, 1.0, -0.5, 0.7;
    auto m = KrigingModel::fit(X, Q);
    RngStream rng(31, 0);

    // path through a design point sticks to the observed output
    auto paths_at_design = m.sample_paths(X.row(1), 50, rng);
    for (int b = 0; b < 50; ++b)
        REQUIRE(paths_at_design(b, 0) == Catch::Approx(Q[1]).margin(1e-6));

    // B = 1 is a valid degenerate draw
    auto single = m.sample_paths(column({0.45, 0.8}), 1, rng);
    REQUIRE(single.rows() == 1);
    REQUIRE(single.cols() == 2);

    // Monte Carlo mean matches the predictor within 4 standard errors
    MatrixXd Z = column({0.1, 0.2, 0.45, 0.8, 0.95});
    const int B = 2000;
    auto paths = m.sample_paths(Z, B, rng);
    auto pred = m.predict(Z);
    for (int p = 0; p < 5; ++p) {
        const double mc_mean = paths.col(p).mean();
        const double sd = std::sqrt(std::max(pred.variance[p], 1e-30));
        REQUIRE(std::abs(mc_mean - pred.mean[p]) <= 4.0 * sd / std::sqrt(double(B)) + 1e-9);
    }
}

TEST_CASE("appending observations keeps interpolation and refit consistency") {
    MatrixXd X = column({0.0, 0.5, 1.0});
    VectorXd Q(3);
    Q << 0.0, 0.25, 1.0;
    auto m = KrigingModel::fit(X, Q);
    REQUIRE(m.append(RowVectorXd::Constant(1, 0.75), 0.5625));
    REQUIRE(m.size() == 4);
    auto pred = m.predict(column({0.75}));
    REQUIRE(pred.mean[0] == Catch::Approx(0.5625).epsilon(1e-7));

    // exact duplicate is merged
    REQUIRE(m.append(RowVectorXd::Constant(1, 0.75), 0.5625));
    REQUIRE(m.size() == 4);

    m.refit();
    auto pred2 = m.predict(column({0.75}));
    REQUIRE(pred2.mean[0] == Catch::Approx(0.5625).epsilon(1e-7));
}

TEST_CASE("likelihood search beats the coarse fallback grid") {
    RngStream rng(41, 0);
    MatrixXd X(15, 1);
    VectorXd Q(15);
    for (int i = 0; i < 15; ++i) {
        X(i, 0) = i / 14.0;
        Q[i] = std::cos(5.0 * X(i, 0)) + 0.1 * X(i, 0);
    }
    auto m = KrigingModel::fit(X, Q);
    const double fitted = m.negloglik_at(m.phi().phi.array().log());
    for (double base : {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}) {
        const double grid = m.negloglik_at(VectorXd::Constant(1, std::log(base)));
        REQUIRE(fitted <= grid + 1e-9);
    }
}

TEST_CASE("duplicate design points are merged, degenerate data rejected") {
    MatrixXd X = column({0.4, 0.4, 0.9});
    VectorXd Q(3);
    Q << 1.0, 1.0, 2.0;
    auto m = KrigingModel::fit(X, Q);
    REQUIRE(m.size() == 2);

    MatrixXd Xdup = column({0.4, 0.4});
    REQUIRE_THROWS_AS(KrigingModel::fit(Xdup, Q.head(2)), DuplicatePoints);
}

TEST_CASE("near-singular designs either succeed via jitter or raise a typed error") {
    // tightly clustered collinear points stress the ladder
    MatrixXd X = column({0.5, 0.500001, 0.500002, 0.500003, 1.0});
    VectorXd Q(5);
    Q << 1.0, 1.0000001, 1.0000002, 1.0000003, 2.0;
    try {
        auto m = KrigingModel::fit(X, Q);
        auto pred = m.predict(column({0.7}));
        REQUIRE(std::isfinite(pred.mean[0]));
        REQUIRE(std::isfinite(pred.variance[0]));
        REQUIRE(pred.variance[0] >= 0.0);
    } catch (const SingularCorrelation&) {
        SUCCEED("typed error is an acceptable outcome");
    }
}

TEST_CASE("stochastic kriging with zero noise reduces to deterministic kriging") {
    MatrixXd X = column({0.0, 0.3, 0.7, 1.0});
    VectorXd G(4);
    G << 2.0, 1.0, 0.5, 1.5;
    auto det = KrigingModel::fit(X, G);
    auto sk = SkModel::fit(X, G, VectorXd::Zero(4));
    MatrixXd Z = column({0.1, 0.45, 0.9});
    auto p1 = det.predict(Z);
    auto p2 = sk.predict(Z);
    for (int i = 0; i < 3; ++i)
        REQUIRE(p2.mean[i] == Catch::Approx(p1.mean[i]).margin(1e-8));

    // interpolates both outputs exactly when V = 0
    auto at_design = sk.predict(X);
    for (int i = 0; i < 4; ++i)
        REQUIRE(at_design.mean[i] == Catch::Approx(G[i]).epsilon(1e-7));
}

TEST_CASE("huge noise flattens the prediction to the trend") {
    MatrixXd X = column({0.0, 0.25, 0.5, 0.75, 1.0});
    VectorXd G(5);
    G << 10.0, 12.0, 9.0, 11.0, 10.5;
    const double var_g = (G.array() - G.mean()).square().sum() / 4.0;
    VectorXd V = VectorXd::Constant(5, 1e6 * var_g);
    auto sk = SkModel::fit(X, G, V);
    auto pred = sk.predict(column({0.1, 0.4, 0.6, 0.9}));
    const double range = G.maxCoeff() - G.minCoeff();
    for (Eigen::Index i = 0; i < pred.mean.size(); ++i)
        REQUIRE(std::abs(pred.mean[i] - sk.mu0()) < 0.01 * range);
}

TEST_CASE("constant aggregate outputs give mu0 equal to the constant") {
    MatrixXd X = column({0.0, 0.5, 1.0});
    VectorXd G = VectorXd::Constant(3, 7.25);
    VectorXd V = VectorXd::Constant(3, 0.4);
    auto sk = SkModel::fit(X, G, V);
    REQUIRE(sk.mu0() == Catch::Approx(7.25).margin(1e-9));
}

TEST_CASE("sk predictor at a noise-free design point interpolates") {
    MatrixXd X = column({0.0, 0.4, 1.0});
    VectorXd G(3);
    G << 1.0, 2.0, 0.5;
    VectorXd V(3);
    V << 0.0, 0.3, 0.3;
    SkKernel kernel;
    kernel.type = SkKernel::Type::gaussian_product;
    kernel.phi = VectorXd::Constant(1, 1.0);
    auto sk = SkModel::with_fixed(X, G, V, kernel, 1.0);
    auto pred = sk.predict(X.row(0));
    REQUIRE(pred.mean[0] == Catch::Approx(G[0]).margin(1e-8));
    REQUIRE(pred.variance[0] <= 1e-8 * sk.tau2());
}

TEST_CASE("sk two-point system agrees with direct matrix arithmetic") {
    MatrixXd X = column({0.0, 1.0});
    VectorXd G(2);
    G << 4.0, 6.0;
    VectorXd V(2);
    V << 0.5, 0.2;
    SkKernel kernel;
    kernel.type = SkKernel::Type::gaussian_product;
    kernel.phi = VectorXd::Constant(1, 2.0);
    const double tau2 = 3.0;
    auto sk = SkModel::with_fixed(X, G, V, kernel, tau2);

    MatrixXd C = tau2 * kernel.matrix(X);
    C.diagonal() += V;
    C.diagonal().array() += 1e-10 * C.diagonal().mean();
    Eigen::LLT<MatrixXd> llt(C);
    const VectorXd ones = VectorXd::Ones(2);
    const double mu0 = ones.dot(llt.solve(G)) / ones.dot(llt.solve(ones));

    const double xq = 0.3;
    VectorXd s(2);
    s << tau2 * std::exp(-2.0 * xq * xq), tau2 * std::exp(-2.0 * (xq - 1.0) * (xq - 1.0));
    const double mean = mu0 + s.dot(llt.solve(G - mu0 * ones));
    const double eta = 1.0 - ones.dot(llt.solve(s));
    const double var = tau2 - s.dot(llt.solve(s)) + eta * eta / ones.dot(llt.solve(ones));

    auto pred = sk.predict(column({xq}));
    REQUIRE(pred.mean[0] == Catch::Approx(mean).margin(1e-10));
    REQUIRE(pred.variance[0] == Catch::Approx(var).margin(1e-10));
}

TEST_CASE("prediction variance respects the spatial lower bound") {
    RngStream rng(53, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 3 + int(rng.uniform_index(6));
        MatrixXd X(k, 1);
        VectorXd G(k), V(k);
        for (int i = 0; i < k; ++i) {
            X(i, 0) = rng.uniform01() * 10.0;
            G[i] = rng.normal(0.0, 2.0);
            V[i] = rng.uniform01() * 0.5;
        }
        SkModel sk = [&] {
            try {
                return SkModel::fit(X, G, V);
            } catch (const SingularSystem&) {
                SkKernel kernel;
                kernel.type = SkKernel::Type::gaussian_product;
                kernel.phi = VectorXd::Constant(1, 1.0);
                return SkModel::with_fixed(X, G, V, kernel, 1.0);
            }
        }();

        for (int q = 0; q < 10; ++q) {
            MatrixXd Z(1, 1);
            Z(0, 0) = rng.uniform01() * 12.0 - 1.0;
            auto pred = sk.predict(Z);
            // r(dmin) = max correlation against the design, in the fitted metric
            const MatrixXd Zn = detail::AxisScaling::from_rows(sk.design()).apply(Z);
            const MatrixXd Xn = detail::AxisScaling::from_rows(sk.design()).apply(sk.design());
            double rmax = 0.0;
            for (Eigen::Index i = 0; i < Xn.rows(); ++i)
                rmax = std::max(rmax, sk.kernel()(Xn.row(i), Zn.row(0)));
            const double bound = sk.tau2() * std::pow(1.0 - rmax, 2);
            REQUIRE(pred.variance[0] >= bound - 1e-9 * std::max(1.0, sk.tau2()));
        }
    }
}

TEST_CASE("shrinkage at a design point is monotone in its noise") {
    MatrixXd X = column({0.0, 0.5, 1.0});
    VectorXd G(3);
    G << 5.0, 1.0, 4.0;
    SkKernel kernel;
    kernel.type = SkKernel::Type::gaussian_product;
    kernel.phi = VectorXd::Constant(1, 1.0);

    double prev_dev = -1.0;
    for (double vii : {0.0, 0.5, 5.0}) {
        VectorXd V(3);
        V << 0.1, vii, 0.1;
        auto sk = SkModel::with_fixed(X, G, V, kernel, 2.0);
        auto pred = sk.predict(X.row(1));
        const double dev = std::abs(pred.mean[0] - G[1]);
        REQUIRE(dev > prev_dev - 1e-12);
        prev_dev = dev;
    }
}
