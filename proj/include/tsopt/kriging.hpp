#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "tsopt/errors.hpp"
#include "tsopt/optimize.hpp"
#include "tsopt/rng.hpp"

namespace tsopt {

/// Product-form Gaussian correlation parameters; one inverse squared
/// length-scale per input axis.
struct Correlation {
    Eigen::VectorXd phi;
};

/// exp(-sum_j phi_j (a_j - b_j)^2)
inline double correlation(const Correlation& corr, const Eigen::RowVectorXd& a,
                          const Eigen::RowVectorXd& b) {
    if (a.size() != corr.phi.size() || b.size() != corr.phi.size())
        throw DimensionMismatch("correlation: point dimension != len(phi)");
    double e = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        e += corr.phi[j] * d * d;
    }
    return std::exp(-e);
}

/// Symmetric correlation matrix across design points (rows of `points`).
inline Eigen::MatrixXd correlation_matrix(const Correlation& corr, const Eigen::MatrixXd& points) {
    if (points.cols() != corr.phi.size())
        throw DimensionMismatch("correlation_matrix: point dimension != len(phi)");
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd R(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        R(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double e = 0.0;
            for (Eigen::Index k = 0; k < points.cols(); ++k) {
                const double d = points(i, k) - points(j, k);
                e += corr.phi[k] * d * d;
            }
            R(i, j) = R(j, i) = std::exp(-e);
        }
    }
    return R;
}

/// Correlation between design rows A and prediction rows B; result is
/// rows(A) x rows(B).
inline Eigen::MatrixXd cross_correlation(const Correlation& corr, const Eigen::MatrixXd& A,
                                         const Eigen::MatrixXd& B) {
    if (A.cols() != corr.phi.size() || B.cols() != corr.phi.size())
        throw DimensionMismatch("cross_correlation: point dimension != len(phi)");
    Eigen::MatrixXd C(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < B.rows(); ++j) {
            double e = 0.0;
            for (Eigen::Index k = 0; k < A.cols(); ++k) {
                const double d = A(i, k) - B(j, k);
                e += corr.phi[k] * d * d;
            }
            C(i, j) = std::exp(-e);
        }
    return C;
}

namespace detail {

/// Per-axis affine map onto [0,1] fixed at fit time.
struct AxisScaling {
    Eigen::VectorXd lo;
    Eigen::VectorXd span;

    static AxisScaling from_rows(const Eigen::MatrixXd& raw) {
        AxisScaling s;
        s.lo = raw.colwise().minCoeff();
        Eigen::VectorXd hi = raw.colwise().maxCoeff();
        s.span = hi - s.lo;
        for (Eigen::Index j = 0; j < s.span.size(); ++j)
            if (s.span[j] < 1e-12) s.span[j] = 1.0;
        return s;
    }

    static AxisScaling from_bounds(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
        AxisScaling s;
        s.lo = lo;
        s.span = hi - lo;
        for (Eigen::Index j = 0; j < s.span.size(); ++j)
            if (s.span[j] < 1e-12) s.span[j] = 1.0;
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const {
        Eigen::MatrixXd out = raw;
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            out.col(j) = (out.col(j).array() - lo[j]) / span[j];
        return out;
    }
};

/// Cholesky of A + jitter * scale * I with the escalation ladder
/// 1e-10 -> 1e-8 -> 1e-6. Returns the lower factor and the jitter used.
/// `max_rungs` restricts how far the escalation may go.
inline std::pair<Eigen::MatrixXd, double> chol_with_jitter(const Eigen::MatrixXd& A, double scale,
                                                           int max_rungs = 3) {
    static const double ladder[] = {1e-10, 1e-8, 1e-6};
    if (!(scale > 0.0)) scale = 1.0;
    for (int r = 0; r < max_rungs; ++r) {
        Eigen::MatrixXd M = A;
        M.diagonal().array() += ladder[r] * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        if (llt.info() == Eigen::Success)
            return {Eigen::MatrixXd(llt.matrixL()), ladder[r] * scale};
    }
    throw SingularCorrelation("cholesky failed after maximum jitter escalation");
}

inline double log_det_from_chol(const Eigen::MatrixXd& L) {
    return 2.0 * L.diagonal().array().log().sum();
}

/// Deterministic quasi-random starts for the hyperparameter search; fitting
/// must be a pure function of the data.
inline std::vector<Eigen::VectorXd> hyper_starts(Eigen::Index dim, int count,
                                                 const Eigen::VectorXd& lo,
                                                 const Eigen::VectorXd& hi) {
    std::vector<Eigen::VectorXd> starts;
    std::uint64_t state = 0x9d1ce4e5b9ULL;
    for (int s = 0; s < count; ++s) {
        Eigen::VectorXd v(dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            const double u = (splitmix64(state) >> 11) * 0x1.0p-53;
            v[j] = lo[j] + u * (hi[j] - lo[j]);
        }
        starts.push_back(std::move(v));
    }
    return starts;
}

} // namespace detail

/// Knobs of the maximum-likelihood hyperparameter search.
struct FitOptions {
    double phi_lo = 1e-3;
    double phi_hi = 1e3;
    int multistarts = 8;  // quasi-random starts, on top of the coarse grid
    int refine_top = 3;   // starts refined with Nelder-Mead
    int nm_iters_per_dim = 15;
    int nm_iters_base = 40;
};

struct PredictResult {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

/// Interpolating Gaussian-process metamodel for a deterministic response,
/// with a constant trend and product Gaussian correlation on inputs scaled
/// to [0,1] per axis. Immutable after fit() except for append()/refit(),
/// which the owning search drives sequentially.
class KrigingModel {
public:
    /// Fit by profile maximum likelihood (beta0 and sigma^2 closed-form,
    /// search over log phi). Exact duplicate rows are merged, keeping the
    /// first observation. Inputs are scaled per axis to [0,1], by default
    /// over the design box, or over explicit bounds when given.
    static KrigingModel fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& outputs,
                            const FitOptions& opts = {},
                            std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bounds =
                                std::nullopt) {
        KrigingModel m;
        m.opts_ = opts;
        m.set_data_merged(design, outputs);
        if (m.design_.rows() < 2)
            throw DuplicatePoints("fit_kriging: fewer than 2 distinct design points");
        m.scaling_ = bounds ? detail::AxisScaling::from_bounds(bounds->first, bounds->second)
                            : detail::AxisScaling::from_rows(m.design_);
        m.run_mle(std::nullopt);
        return m;
    }

    std::size_t size() const { return std::size_t(design_.rows()); }
    double beta0() const { return beta0_; }
    double sigma2() const { return sigma2_; }
    const Correlation& phi() const { return corr_; }
    const Eigen::MatrixXd& design() const { return design_; }
    const Eigen::VectorXd& outputs() const { return outputs_; }
    std::uint64_t variance_clamps() const { return clamp_count_.load(std::memory_order_relaxed); }

    /// Add one observation without re-estimating hyperparameters (rank-one
    /// Cholesky extension). Returns false when the extension is numerically
    /// impossible, in which case the caller should refit(). An exact
    /// duplicate of an existing design point is merged and reported as
    /// success.
    bool append(const Eigen::RowVectorXd& z, double q) {
        for (Eigen::Index i = 0; i < design_.rows(); ++i)
            if ((design_.row(i) - z).cwiseAbs().maxCoeff() == 0.0) return true;

        const Eigen::MatrixXd zn = scaling_.apply(z);
        const Eigen::MatrixXd design_n = scaling_.apply(design_);
        Eigen::VectorXd r = cross_correlation(corr_, design_n, zn).col(0);
        Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>().solve(r);
        const double d2 = 1.0 + jitter_ - w.squaredNorm();
        if (d2 <= 1e-12) return false;

        const Eigen::Index k = design_.rows();
        design_.conservativeResize(k + 1, Eigen::NoChange);
        design_.row(k) = z;
        outputs_.conservativeResize(k + 1);
        outputs_[k] = q;

        Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(k + 1, k + 1);
        grown.topLeftCorner(k, k) = chol_;
        grown.block(k, 0, 1, k) = w.transpose();
        grown(k, k) = std::sqrt(d2);
        chol_ = std::move(grown);
        finalize_linear_state();
        return true;
    }

    /// Re-estimate hyperparameters on the current data, warm-starting at the
    /// previous optimum.
    void refit() {
        Eigen::VectorXd warm = corr_.phi.array().log();
        scaling_ = detail::AxisScaling::from_rows(design_);
        run_mle(warm);
    }

    /// Posterior mean and variance at prediction rows Z (raw coordinates).
    PredictResult predict(const Eigen::MatrixXd& Z) const {
        const Eigen::MatrixXd Rcross = cross_correlation(corr_, scaling_.apply(design_),
                                                         scaling_.apply(Z));
        PredictResult out;
        out.mean = Eigen::VectorXd::Constant(Z.rows(), beta0_) + Rcross.transpose() * alpha_;

        const Eigen::MatrixXd W = chol_.triangularView<Eigen::Lower>().solve(Rcross);
        out.variance.resize(Z.rows());
        for (Eigen::Index p = 0; p < Z.rows(); ++p) {
            const double h = 1.0 - rinv1_.dot(Rcross.col(p));
            double v = sigma2_ * (1.0 - W.col(p).squaredNorm() + h * h / one_rinv_one_);
            if (v < 0.0) {
                v = 0.0;
                clamp_count_.fetch_add(1, std::memory_order_relaxed);
            }
            out.variance[p] = v;
        }
        return out;
    }

    /// B joint posterior sample paths over rows of Z; result is B x rows(Z).
    /// Coordinates whose posterior variance is numerically degenerate
    /// (roughly the jitter floor) are pinned to the posterior mean.
    Eigen::MatrixXd sample_paths(const Eigen::MatrixXd& Z, int B, RngStream& rng) const {
        if (B < 1) throw Error("sample_paths: B must be >= 1");
        const Eigen::MatrixXd Zn = scaling_.apply(Z);
        const Eigen::MatrixXd design_n = scaling_.apply(design_);
        const Eigen::MatrixXd Rcross = cross_correlation(corr_, design_n, Zn);
        const Eigen::MatrixXd W = chol_.triangularView<Eigen::Lower>().solve(Rcross);
        const Eigen::VectorXd mean =
            Eigen::VectorXd::Constant(Z.rows(), beta0_) + Rcross.transpose() * alpha_;

        Eigen::RowVectorXd h = Eigen::RowVectorXd::Ones(Z.rows()) - rinv1_.transpose() * Rcross;
        Eigen::MatrixXd cov = correlation_matrix(corr_, Zn) - W.transpose() * W;
        cov.noalias() += h.transpose() * h / one_rinv_one_;
        cov *= sigma2_;

        const double snap = 1e-8 * std::max(sigma2_, 0.0);
        std::vector<Eigen::Index> active;
        for (Eigen::Index p = 0; p < Z.rows(); ++p) {
            if (cov(p, p) > snap)
                active.push_back(p);
            else
                clamp_count_.fetch_add(1, std::memory_order_relaxed);
        }

        Eigen::MatrixXd paths(B, Z.rows());
        paths.rowwise() = mean.transpose();
        if (active.empty()) return paths;

        Eigen::MatrixXd cov_a(active.size(), active.size());
        for (std::size_t i = 0; i < active.size(); ++i)
            for (std::size_t j = 0; j < active.size(); ++j)
                cov_a(Eigen::Index(i), Eigen::Index(j)) = cov(active[i], active[j]);

        Eigen::MatrixXd Lc;
        try {
            Lc = detail::chol_with_jitter(cov_a, cov_a.diagonal().mean()).first;
        } catch (const SingularCorrelation&) {
            throw SingularCovariance("sample_paths: covariance not positive definite");
        }

        Eigen::VectorXd noise(Eigen::Index(active.size()));
        for (int b = 0; b < B; ++b) {
            for (Eigen::Index p = 0; p < noise.size(); ++p) noise[p] = rng.normal();
            const Eigen::VectorXd bump = Lc * noise;
            for (std::size_t i = 0; i < active.size(); ++i)
                paths(b, active[i]) += bump[Eigen::Index(i)];
        }
        return paths;
    }

    /// Profile negative log-likelihood on the fitted data; used by tests to
    /// confirm the search beat the fallback grid.
    double negloglik_at(const Eigen::VectorXd& log_phi) const {
        const Eigen::MatrixXd design_n = scaling_.apply(design_);
        const auto fit = eval_profile(design_n, outputs_, log_phi, fit_rungs_);
        return fit ? fit->nll : std::numeric_limits<double>::infinity();
    }

private:
    struct ProfileFit {
        double nll;
        double beta0;
        double sigma2;
    };

    void set_data_merged(const Eigen::MatrixXd& design, const Eigen::VectorXd& outputs) {
        if (design.rows() != outputs.size())
            throw DimensionMismatch("fit_kriging: design rows != outputs length");
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < design.rows(); ++i) {
            bool dup = false;
            for (Eigen::Index k : keep)
                if ((design.row(i) - design.row(k)).cwiseAbs().maxCoeff() == 0.0) {
                    dup = true;
                    break;
                }
            if (!dup) keep.push_back(i);
        }
        design_.resize(Eigen::Index(keep.size()), design.cols());
        outputs_.resize(Eigen::Index(keep.size()));
        for (std::size_t i = 0; i < keep.size(); ++i) {
            design_.row(Eigen::Index(i)) = design.row(keep[i]);
            outputs_[Eigen::Index(i)] = outputs[keep[i]];
        }
    }

    static std::optional<ProfileFit> eval_profile(const Eigen::MatrixXd& design_n,
                                                  const Eigen::VectorXd& outputs,
                                                  const Eigen::VectorXd& log_phi,
                                                  int max_rungs = 3,
                                                  Eigen::MatrixXd* chol_out = nullptr,
                                                  double* jitter_out = nullptr) {
        Correlation corr{log_phi.array().exp()};
        Eigen::MatrixXd L;
        double jitter;
        try {
            std::tie(L, jitter) = detail::chol_with_jitter(correlation_matrix(corr, design_n), 1.0,
                                                           max_rungs);
        } catch (const SingularCorrelation&) {
            return std::nullopt;
        }
        const Eigen::Index k = design_n.rows();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
        const Eigen::VectorXd Li1 = L.triangularView<Eigen::Lower>().solve(ones);
        const Eigen::VectorXd Liq = L.triangularView<Eigen::Lower>().solve(outputs);
        const double beta0 = Li1.dot(Liq) / Li1.squaredNorm();
        const double rss = (Liq - beta0 * Li1).squaredNorm();
        const double sigma2 = std::max(rss / double(k), 1e-300);
        const double nll = 0.5 * (double(k) * std::log(sigma2) + detail::log_det_from_chol(L));
        if (chol_out) *chol_out = std::move(L);
        if (jitter_out) *jitter_out = jitter;
        return ProfileFit{nll, beta0, sigma2};
    }

    void run_mle(const std::optional<Eigen::VectorXd>& warm) {
        const Eigen::Index d = design_.cols();
        const Eigen::MatrixXd design_n = scaling_.apply(design_);

        // Constant outputs: the trend absorbs everything.
        if ((outputs_.array() - outputs_[0]).abs().maxCoeff() == 0.0) {
            corr_.phi = Eigen::VectorXd::Ones(d);
            beta0_ = outputs_[0];
            sigma2_ = 0.0;
            std::tie(chol_, jitter_) =
                detail::chol_with_jitter(correlation_matrix(corr_, design_n), 1.0);
            finalize_linear_state();
            return;
        }

        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, std::log(opts_.phi_lo));
        const Eigen::VectorXd hi = Eigen::VectorXd::Constant(d, std::log(opts_.phi_hi));

        // A parameter set that needs more than the base jitter rung degrades
        // interpolation, so the search only escalates when nothing passes at
        // the base rung.
        Eigen::VectorXd best;
        double best_nll = std::numeric_limits<double>::infinity();
        for (int rungs : {1, 3}) {
            auto objective = [&, rungs](const Eigen::VectorXd& lp) {
                auto fit = eval_profile(design_n, outputs_, lp, rungs);
                return fit ? fit->nll : std::numeric_limits<double>::infinity();
            };

            std::vector<Eigen::VectorXd> candidates;
            for (double base : {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3})
                candidates.push_back(Eigen::VectorXd::Constant(d, std::log(base)));
            const int nstarts = warm ? 2 : opts_.multistarts;
            for (auto& s : detail::hyper_starts(d, nstarts, lo, hi)) candidates.push_back(s);
            if (warm) candidates.push_back(*warm);

            std::vector<std::pair<double, Eigen::VectorXd>> scored;
            for (const auto& c : candidates) scored.emplace_back(objective(c), c);
            std::sort(scored.begin(), scored.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });

            best_nll = scored.front().first;
            best = scored.front().second;
            const int iters = opts_.nm_iters_base + opts_.nm_iters_per_dim * int(d);
            for (int s = 0; s < std::min<int>(opts_.refine_top, int(scored.size())); ++s) {
                if (!std::isfinite(scored[s].first)) continue;
                Eigen::VectorXd refined = nelder_mead(objective, scored[s].second, lo, hi, iters);
                const double nll = objective(refined);
                if (nll < best_nll) {
                    best_nll = nll;
                    best = refined;
                }
            }
            fit_rungs_ = rungs;
            if (std::isfinite(best_nll)) break;
        }
        if (!std::isfinite(best_nll))
            throw SingularCorrelation("fit_kriging: no admissible correlation parameters");

        auto fit = eval_profile(design_n, outputs_, best, 3, &chol_, &jitter_);
        corr_.phi = best.array().exp();
        beta0_ = fit->beta0;
        sigma2_ = fit->sigma2;
        finalize_linear_state();
    }

    void finalize_linear_state() {
        const Eigen::Index k = design_.rows();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
        auto Lt = chol_.triangularView<Eigen::Lower>();
        const Eigen::VectorXd Li1 = Lt.solve(ones);
        one_rinv_one_ = Li1.squaredNorm();
        rinv1_ = chol_.transpose().triangularView<Eigen::Upper>().solve(Li1);
        const Eigen::VectorXd resid = outputs_ - beta0_ * ones;
        alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(Lt.solve(resid));
    }

public:
    KrigingModel() = default;
    KrigingModel(const KrigingModel& other) { *this = other; }
    KrigingModel& operator=(const KrigingModel& other) {
        if (this == &other) return *this;
        design_ = other.design_;
        outputs_ = other.outputs_;
        scaling_ = other.scaling_;
        corr_ = other.corr_;
        beta0_ = other.beta0_;
        sigma2_ = other.sigma2_;
        chol_ = other.chol_;
        jitter_ = other.jitter_;
        alpha_ = other.alpha_;
        rinv1_ = other.rinv1_;
        one_rinv_one_ = other.one_rinv_one_;
        opts_ = other.opts_;
        fit_rungs_ = other.fit_rungs_;
        clamp_count_.store(other.clamp_count_.load(std::memory_order_relaxed),
                           std::memory_order_relaxed);
        return *this;
    }
    KrigingModel(KrigingModel&& other) noexcept { *this = other; }
    KrigingModel& operator=(KrigingModel&& other) noexcept {
        *this = static_cast<const KrigingModel&>(other);
        return *this;
    }

private:
    Eigen::MatrixXd design_;   // raw coordinates, one row per point
    Eigen::VectorXd outputs_;
    detail::AxisScaling scaling_;
    Correlation corr_;
    double beta0_ = 0.0;
    double sigma2_ = 0.0;
    Eigen::MatrixXd chol_;     // lower factor of R + jitter I (normalized coords)
    double jitter_ = 0.0;
    Eigen::VectorXd alpha_;    // R^{-1}(Q - beta0 1)
    Eigen::VectorXd rinv1_;    // R^{-1} 1
    double one_rinv_one_ = 1.0;
    FitOptions opts_;
    int fit_rungs_ = 3;
    mutable std::atomic<std::uint64_t> clamp_count_{0};
};

/// Kernel choice for the stochastic-kriging model. The product Gaussian is
/// the fitted default; the isotropic exponential supports the fixed-kernel
/// search baseline.
struct SkKernel {
    enum class Type { gaussian_product, exponential_iso };
    Type type = Type::gaussian_product;
    Eigen::VectorXd phi;  // gaussian_product
    double decay = 1.0;   // exponential_iso: exp(-decay * ||a-b||)

    double operator()(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
        if (type == Type::gaussian_product) return correlation(Correlation{phi}, a, b);
        return std::exp(-decay * (a - b).norm());
    }

    Eigen::MatrixXd matrix(const Eigen::MatrixXd& pts) const {
        if (type == Type::gaussian_product) return correlation_matrix(Correlation{phi}, pts);
        Eigen::MatrixXd R(pts.rows(), pts.rows());
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            R(i, i) = 1.0;
            for (Eigen::Index j = i + 1; j < pts.rows(); ++j)
                R(i, j) = R(j, i) = std::exp(-decay * (pts.row(i) - pts.row(j)).norm());
        }
        return R;
    }

    Eigen::MatrixXd cross(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) const {
        if (type == Type::gaussian_product)
            return cross_correlation(Correlation{phi}, A, B);
        Eigen::MatrixXd C(A.rows(), B.rows());
        for (Eigen::Index i = 0; i < A.rows(); ++i)
            for (Eigen::Index j = 0; j < B.rows(); ++j)
                C(i, j) = std::exp(-decay * (A.row(i) - B.row(j)).norm());
        return C;
    }
};

/// Stochastic kriging over noisy aggregate outputs: spatial covariance
/// tau^2 r(.,.) plus a fixed heteroscedastic noise diagonal V.
class SkModel {
public:
    /// Maximum-likelihood fit of (tau^2, phi) with V held fixed. When V is
    /// identically zero this reduces exactly to the deterministic fit.
    static SkModel fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& outputs,
                       const Eigen::VectorXd& noise, const FitOptions& opts = {},
                       std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bounds =
                           std::nullopt) {
        SkModel m;
        m.init_data(design, outputs, noise, bounds);
        if (m.design_.rows() < 2)
            throw SingularSystem("fit_sk: need at least 2 distinct design points");

        if (m.noise_.maxCoeff() <= 0.0) {
            KrigingModel det = KrigingModel::fit(
                design, outputs, opts,
                std::make_pair(Eigen::VectorXd(m.scaling_.lo),
                               Eigen::VectorXd(m.scaling_.lo + m.scaling_.span)));
            m.kernel_.type = SkKernel::Type::gaussian_product;
            m.kernel_.phi = det.phi().phi;
            m.tau2_ = std::max(det.sigma2(), 1e-300);
            m.finalize();
            return m;
        }

        const Eigen::Index d = m.design_.cols();
        const Eigen::MatrixXd design_n = m.scaling_.apply(m.design_);
        const double var_g = std::max(
            (outputs.array() - outputs.mean()).square().sum() / std::max<double>(1, outputs.size() - 1),
            1e-12);

        // theta = (log tau2, log phi_1..d)
        Eigen::VectorXd lo(d + 1), hi(d + 1);
        lo[0] = std::log(var_g * 1e-6);
        hi[0] = std::log(var_g * 1e6);
        lo.tail(d).setConstant(std::log(opts.phi_lo));
        hi.tail(d).setConstant(std::log(opts.phi_hi));

        auto objective = [&](const Eigen::VectorXd& theta) {
            return m.negloglik(design_n, theta).value_or(std::numeric_limits<double>::infinity());
        };

        std::vector<Eigen::VectorXd> candidates;
        for (double tf : {0.3, 1.0, 3.0})
            for (double base : {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}) {
                Eigen::VectorXd c(d + 1);
                c[0] = std::log(tf * var_g);
                c.tail(d).setConstant(std::log(base));
                candidates.push_back(c);
            }
        for (auto& s : detail::hyper_starts(d + 1, opts.multistarts, lo, hi))
            candidates.push_back(s);

        std::vector<std::pair<double, Eigen::VectorXd>> scored;
        for (const auto& c : candidates) scored.emplace_back(objective(c), c);
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        double best_nll = scored.front().first;
        Eigen::VectorXd best = scored.front().second;
        const int iters = opts.nm_iters_base + opts.nm_iters_per_dim * int(d + 1);
        for (int s = 0; s < std::min<int>(opts.refine_top, int(scored.size())); ++s) {
            if (!std::isfinite(scored[s].first)) continue;
            Eigen::VectorXd refined = nelder_mead(objective, scored[s].second, lo, hi, iters);
            const double nll = objective(refined);
            if (nll < best_nll) {
                best_nll = nll;
                best = refined;
            }
        }
        if (!std::isfinite(best_nll)) throw SingularSystem("fit_sk: likelihood search failed");

        m.tau2_ = std::exp(best[0]);
        m.kernel_.type = SkKernel::Type::gaussian_product;
        m.kernel_.phi = best.tail(d).array().exp();
        m.finalize();
        return m;
    }

    /// Construct with fixed kernel and spatial variance (no MLE); trend is
    /// still the GLS estimate.
    static SkModel with_fixed(const Eigen::MatrixXd& design, const Eigen::VectorXd& outputs,
                              const Eigen::VectorXd& noise, SkKernel kernel, double tau2,
                              std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> bounds =
                                  std::nullopt) {
        SkModel m;
        m.init_data(design, outputs, noise, bounds);
        m.kernel_ = std::move(kernel);
        m.tau2_ = tau2;
        m.finalize();
        return m;
    }

    double mu0() const { return mu0_; }
    double tau2() const { return tau2_; }
    const SkKernel& kernel() const { return kernel_; }
    const Eigen::MatrixXd& design() const { return design_; }
    const Eigen::VectorXd& outputs() const { return outputs_; }
    const Eigen::VectorXd& noise() const { return noise_; }
    std::size_t size() const { return std::size_t(design_.rows()); }

    /// Mean and variance of the aggregate response at rows of Z.
    PredictResult predict(const Eigen::MatrixXd& Z) const {
        const Eigen::MatrixXd Zn = scaling_.apply(Z);
        const Eigen::MatrixXd design_n = scaling_.apply(design_);
        const Eigen::MatrixXd Scross = tau2_ * kernel_.cross(design_n, Zn);

        PredictResult out;
        out.mean = Eigen::VectorXd::Constant(Z.rows(), mu0_) + Scross.transpose() * alpha_;
        const Eigen::MatrixXd W = chol_.triangularView<Eigen::Lower>().solve(Scross);
        out.variance.resize(Z.rows());
        for (Eigen::Index p = 0; p < Z.rows(); ++p) {
            const double eta = 1.0 - cinv1_.dot(Scross.col(p));
            double v = tau2_ - W.col(p).squaredNorm() + eta * eta / one_cinv_one_;
            out.variance[p] = std::max(v, 0.0);
        }
        return out;
    }

private:
    void init_data(const Eigen::MatrixXd& design, const Eigen::VectorXd& outputs,
                   const Eigen::VectorXd& noise,
                   const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& bounds) {
        if (design.rows() != outputs.size() || design.rows() != noise.size())
            throw DimensionMismatch("fit_sk: design/outputs/noise size mismatch");
        if (noise.minCoeff() < 0.0) throw Error("fit_sk: negative noise variance");
        design_ = design;
        outputs_ = outputs;
        noise_ = noise;
        scaling_ = bounds ? detail::AxisScaling::from_bounds(bounds->first, bounds->second)
                          : detail::AxisScaling::from_rows(design_);
    }

    std::optional<double> negloglik(const Eigen::MatrixXd& design_n,
                                    const Eigen::VectorXd& theta) const {
        const double tau2 = std::exp(theta[0]);
        SkKernel kernel;
        kernel.type = SkKernel::Type::gaussian_product;
        kernel.phi = theta.tail(theta.size() - 1).array().exp();

        Eigen::MatrixXd C = tau2 * kernel.matrix(design_n);
        C.diagonal() += noise_;
        Eigen::MatrixXd L;
        try {
            L = detail::chol_with_jitter(C, C.diagonal().mean()).first;
        } catch (const SingularCorrelation&) {
            return std::nullopt;
        }
        const Eigen::Index k = design_n.rows();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
        const Eigen::VectorXd Li1 = L.triangularView<Eigen::Lower>().solve(ones);
        const Eigen::VectorXd Lig = L.triangularView<Eigen::Lower>().solve(outputs_);
        const double mu0 = Li1.dot(Lig) / Li1.squaredNorm();
        const double rss = (Lig - mu0 * Li1).squaredNorm();
        return 0.5 * (rss + detail::log_det_from_chol(L));
    }

    void finalize() {
        const Eigen::MatrixXd design_n = scaling_.apply(design_);
        Eigen::MatrixXd C = tau2_ * kernel_.matrix(design_n);
        C.diagonal() += noise_;
        try {
            std::tie(chol_, jitter_) = detail::chol_with_jitter(C, C.diagonal().mean());
        } catch (const SingularCorrelation&) {
            throw SingularSystem("fit_sk: covariance not positive definite");
        }
        const Eigen::Index k = design_.rows();
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
        auto Lt = chol_.triangularView<Eigen::Lower>();
        const Eigen::VectorXd Li1 = Lt.solve(ones);
        const Eigen::VectorXd Lig = Lt.solve(outputs_);
        one_cinv_one_ = Li1.squaredNorm();
        mu0_ = Li1.dot(Lig) / one_cinv_one_;
        cinv1_ = chol_.transpose().triangularView<Eigen::Upper>().solve(Li1);
        alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(
            Lt.solve(Eigen::VectorXd(outputs_ - mu0_ * ones)));
    }

    Eigen::MatrixXd design_;
    Eigen::VectorXd outputs_;
    Eigen::VectorXd noise_;
    detail::AxisScaling scaling_;
    SkKernel kernel_;
    double tau2_ = 1.0;
    double mu0_ = 0.0;
    Eigen::MatrixXd chol_;  // lower factor of tau^2 R + V (+ jitter)
    double jitter_ = 0.0;
    Eigen::VectorXd alpha_;
    Eigen::VectorXd cinv1_;  // (tau^2 R + V)^{-1} 1
    double one_cinv_one_ = 1.0;
};

} // namespace tsopt
