#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tsopt/errors.hpp"

namespace tsopt {

namespace detail {

/// SplitMix64 step, used only to derive well-mixed seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    splitmix64(s);
    s ^= b + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    return splitmix64(s);
}

} // namespace detail

/// Standard normal CDF.
inline double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

/// Standard normal PDF.
inline double normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

/// Inverse of the standard normal CDF (Wichura's PPND16, accurate to ~1e-16).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw NonFiniteInput("normal_quantile: p outside (0,1)");
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                     6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                   1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                 1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
               (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                     3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                   5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                 4.2313330701600911252e+1) * r + 1.0);
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double v;
    if (r <= 5.0) {
        r -= 1.6;
        v = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
    } else {
        r -= 5.0;
        v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
    }
    return (q < 0.0) ? -v : v;
}

/// Seeded random stream. Identical (seed, stream_id) reproduces identical
/// draws; distinct stream_ids give independent streams, so macro-replications
/// can run in parallel. Distributions are generated through the inverse-CDF
/// so that output does not depend on the standard library implementation.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id),
          engine_(detail::mix(seed, detail::mix(0x7473736f70740001ULL, stream_id))) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Derive an independent child stream for a tagged sub-task.
    RngStream substream(std::uint64_t tag) const {
        return RngStream(detail::mix(seed_, detail::mix(stream_id_, tag)), tag);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on (0,1), never returning exactly 0 or 1.
    double uniform01() {
        const double u = (next_u64() >> 11) * 0x1.0p-53;
        return (u <= 0.0) ? 0x1.0p-53 : u;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        // rejection to remove modulo bias
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * normal_quantile(uniform01());
    }

    double lognormal(double mu = 0.0, double sigma = 1.0) {
        return std::exp(normal(mu, sigma));
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

/// `count` i.i.d. index draws from a discrete distribution given by `weights`.
inline std::vector<std::size_t> categorical_sample(const std::vector<double>& weights,
                                                   std::size_t count, RngStream& rng) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DegenerateWeights("categorical_sample: negative or NaN weight");
        total += w;
    }
    if (!(total > 0.0)) throw DegenerateWeights("categorical_sample: weights sum to zero");

    std::vector<double> cdf(weights.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i] / total;
        cdf[i] = acc;
    }
    cdf.back() = 1.0;

    std::vector<std::size_t> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double u = rng.uniform01();
        std::size_t lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cdf[mid] < u)
                lo = mid + 1;
            else
                hi = mid;
        }
        out[k] = lo;
    }
    return out;
}

} // namespace tsopt
