#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include "tsopt/errors.hpp"
#include "tsopt/rng.hpp"

namespace tsopt {

/// A Latin-hypercube design over a finite grid; points are index vectors,
/// one index per axis.
struct LhdDesign {
    std::vector<std::vector<std::size_t>> points;
    std::size_t size() const { return points.size(); }
};

namespace detail {

inline double lhd_min_pairwise_distance(const LhdDesign& d,
                                        const std::vector<std::size_t>& axis_sizes) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < d.points.size(); ++a) {
        for (std::size_t b = a + 1; b < d.points.size(); ++b) {
            double dist2 = 0.0;
            for (std::size_t j = 0; j < axis_sizes.size(); ++j) {
                const double den = axis_sizes[j] > 1 ? double(axis_sizes[j] - 1) : 1.0;
                const double diff = (double(d.points[a][j]) - double(d.points[b][j])) / den;
                dist2 += diff * diff;
            }
            best = std::min(best, std::sqrt(dist2));
        }
    }
    return best;
}

inline void lhd_check_size(const std::vector<std::size_t>& axis_sizes, std::size_t size) {
    if (size < 1) throw SizeTooLarge("lhd: size must be >= 1");
    if (axis_sizes.empty()) throw DimensionMismatch("lhd: no axes");
    double cardinality = 1.0;
    for (std::size_t m : axis_sizes) {
        if (m < 1) throw DimensionMismatch("lhd: empty axis");
        cardinality *= double(m);
        if (cardinality > 1e18) return; // plenty of room
    }
    if (double(size) > cardinality)
        throw SizeTooLarge("lhd: size exceeds grid cardinality");
}

} // namespace detail

/// One random Latin-hypercube design: each axis is cut into `size` equal
/// strata and every stratum is used exactly once (up to rounding when the
/// axis has fewer values than strata).
inline LhdDesign random_lhd(const std::vector<std::size_t>& axis_sizes, std::size_t size,
                            RngStream& rng) {
    detail::lhd_check_size(axis_sizes, size);
    const std::size_t d = axis_sizes.size();

    LhdDesign design;
    design.points.assign(size, std::vector<std::size_t>(d, 0));

    std::vector<std::size_t> strata(size);
    for (std::size_t j = 0; j < d; ++j) {
        const std::size_t m = axis_sizes[j];
        for (std::size_t s = 0; s < size; ++s) strata[s] = s;
        rng.shuffle(strata);
        for (std::size_t p = 0; p < size; ++p) {
            const std::size_t s = strata[p];
            std::size_t lo = (s * m) / size;
            std::size_t hi = ((s + 1) * m) / size; // exclusive
            if (hi <= lo) hi = lo + 1;
            if (lo >= m) lo = m - 1;
            if (hi > m) hi = m;
            design.points[p][j] = lo + rng.uniform_index(hi - lo);
        }
    }

    // repair exact duplicates (possible only when some axis is shorter than `size`)
    std::set<std::vector<std::size_t>> seen;
    for (auto& pt : design.points) {
        int tries = 0;
        while (!seen.insert(pt).second) {
            for (std::size_t j = 0; j < d; ++j) pt[j] = rng.uniform_index(axis_sizes[j]);
            if (++tries > 1000)
                throw SizeTooLarge("lhd: cannot place duplicate-free design");
        }
    }
    return design;
}

/// Space-filling design: the best of `restarts` random LHDs under the
/// maximin criterion (largest minimum pairwise distance, measured in
/// normalized [0,1]^d index coordinates).
inline LhdDesign maximin_lhd(const std::vector<std::size_t>& axis_sizes, std::size_t size,
                             RngStream& rng, int restarts = 100) {
    LhdDesign best;
    double best_dist = -1.0;
    for (int r = 0; r < restarts; ++r) {
        LhdDesign cand = random_lhd(axis_sizes, size, rng);
        const double dist = size > 1 ? detail::lhd_min_pairwise_distance(cand, axis_sizes)
                                     : std::numeric_limits<double>::infinity();
        if (dist > best_dist) {
            best_dist = dist;
            best = std::move(cand);
        }
    }
    return best;
}

} // namespace tsopt
