#pragma once

#include "alab/linalg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace alab {

struct KMedoidsOptions {
    int max_swap_passes = 50;
    // Pools above this size are clustered on random samples (CLARA) instead of
    // a full distance matrix.
    Eigen::Index exact_limit = 4000;
    int sample_draws = 2;
    std::uint64_t seed = 1;
};

template <typename Scalar>
struct KMedoidsResult {
    std::vector<Eigen::Index> medoids;     // row indices, ascending
    std::vector<Eigen::Index> assignment;  // position in `medoids` per point
    Scalar cost = 0;                       // sum of distances to the nearest medoid
    int swap_passes = 0;
    bool sampled = false;
};

// Sum over points of the distance to the nearest of `medoids`.
template <typename Scalar>
Scalar medoid_cost(const RowMatrix<Scalar>& dist, const std::vector<Eigen::Index>& medoids) {
    Scalar total = 0;
    for (Eigen::Index i = 0; i < dist.rows(); ++i) {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        for (auto m : medoids) best = std::min(best, dist(i, m));
        total += best;
    }
    return total;
}

namespace detail {

template <typename Scalar>
struct NearestTwo {
    std::vector<Eigen::Index> nearest;  // position in medoid list
    std::vector<Scalar> d_nearest;
    std::vector<Scalar> d_second;
};

template <typename Scalar>
NearestTwo<Scalar> nearest_two(const RowMatrix<Scalar>& dist, const std::vector<Eigen::Index>& medoids) {
    const Eigen::Index n = dist.rows();
    NearestTwo<Scalar> out;
    out.nearest.assign(std::size_t(n), 0);
    out.d_nearest.assign(std::size_t(n), std::numeric_limits<Scalar>::infinity());
    out.d_second.assign(std::size_t(n), std::numeric_limits<Scalar>::infinity());
    for (Eigen::Index o = 0; o < n; ++o) {
        for (std::size_t m = 0; m < medoids.size(); ++m) {
            const Scalar d = dist(o, medoids[m]);
            if (d < out.d_nearest[std::size_t(o)]) {
                out.d_second[std::size_t(o)] = out.d_nearest[std::size_t(o)];
                out.d_nearest[std::size_t(o)] = d;
                out.nearest[std::size_t(o)] = Eigen::Index(m);
            } else if (d < out.d_second[std::size_t(o)]) {
                out.d_second[std::size_t(o)] = d;
            }
        }
    }
    return out;
}

}  // namespace detail

// PAM on a precomputed distance matrix: greedy BUILD, then SWAP passes that apply
// the best improving (medoid, non-medoid) exchange until none improves.
// Swap deltas for all medoids of a candidate are evaluated together, O(n^2) per pass.
template <typename Scalar>
KMedoidsResult<Scalar> pam_from_distances(const RowMatrix<Scalar>& dist, Eigen::Index k,
                                          const KMedoidsOptions& options = {}) {
    const Eigen::Index n = dist.rows();
    if (k < 1 || k > n) throw std::invalid_argument("k-medoids: k must be in [1, n]");

    KMedoidsResult<Scalar> result;
    std::vector<bool> is_medoid(std::size_t(n), false);
    std::vector<Scalar> nearest(std::size_t(n), std::numeric_limits<Scalar>::infinity());

    // BUILD
    {
        Eigen::Index first = 0;
        Scalar best = std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            const Scalar total = dist.row(i).sum();
            if (total < best) {
                best = total;
                first = i;
            }
        }
        result.medoids.push_back(first);
        is_medoid[std::size_t(first)] = true;
        for (Eigen::Index o = 0; o < n; ++o) nearest[std::size_t(o)] = dist(o, first);
    }
    while (Eigen::Index(result.medoids.size()) < k) {
        Eigen::Index pick = -1;
        Scalar best_gain = -1;
        for (Eigen::Index c = 0; c < n; ++c) {
            if (is_medoid[std::size_t(c)]) continue;
            Scalar gain = 0;
            for (Eigen::Index o = 0; o < n; ++o) gain += std::max(Scalar(0), nearest[std::size_t(o)] - dist(o, c));
            if (gain > best_gain) {
                best_gain = gain;
                pick = c;
            }
        }
        result.medoids.push_back(pick);
        is_medoid[std::size_t(pick)] = true;
        for (Eigen::Index o = 0; o < n; ++o) nearest[std::size_t(o)] = std::min(nearest[std::size_t(o)], dist(o, pick));
    }

    // SWAP
    Scalar cost = medoid_cost(dist, result.medoids);
    const std::size_t km = result.medoids.size();
    for (int pass = 0; pass < options.max_swap_passes && Eigen::Index(km) < n; ++pass) {
        const auto near = detail::nearest_two(dist, result.medoids);
        std::vector<Scalar> removal(km, 0);
        for (Eigen::Index o = 0; o < n; ++o)
            removal[std::size_t(near.nearest[std::size_t(o)])] += near.d_second[std::size_t(o)] - near.d_nearest[std::size_t(o)];

        Scalar best_delta = 0;
        Eigen::Index best_x = -1;
        std::size_t best_m = 0;
        std::vector<Scalar> delta(km);
        for (Eigen::Index x = 0; x < n; ++x) {
            if (is_medoid[std::size_t(x)]) continue;
            std::copy(removal.begin(), removal.end(), delta.begin());
            Scalar shared = 0;
            for (Eigen::Index o = 0; o < n; ++o) {
                const std::size_t oi = std::size_t(o);
                const Scalar dox = dist(o, x);
                const auto m = std::size_t(near.nearest[oi]);
                if (dox < near.d_nearest[oi]) {
                    shared += dox - near.d_nearest[oi];
                    delta[m] += near.d_nearest[oi] - near.d_second[oi];
                } else if (dox < near.d_second[oi]) {
                    delta[m] += dox - near.d_second[oi];
                }
            }
            for (std::size_t m = 0; m < km; ++m) {
                const Scalar total = delta[m] + shared;
                if (total < best_delta) {
                    best_delta = total;
                    best_x = x;
                    best_m = m;
                }
            }
        }
        if (best_x < 0) break;

        auto trial = result.medoids;
        trial[best_m] = best_x;
        const Scalar trial_cost = medoid_cost(dist, trial);
        if (!(trial_cost < cost)) break;  // rounding-level delta, not a real improvement
        is_medoid[std::size_t(result.medoids[best_m])] = false;
        is_medoid[std::size_t(best_x)] = true;
        result.medoids = std::move(trial);
        cost = trial_cost;
        result.swap_passes = pass + 1;
    }

    std::sort(result.medoids.begin(), result.medoids.end());
    result.cost = cost;
    result.assignment.assign(std::size_t(n), 0);
    for (Eigen::Index o = 0; o < n; ++o) {
        Scalar best = std::numeric_limits<Scalar>::infinity();
        for (std::size_t m = 0; m < result.medoids.size(); ++m) {
            if (dist(o, result.medoids[m]) < best) {
                best = dist(o, result.medoids[m]);
                result.assignment[std::size_t(o)] = Eigen::Index(m);
            }
        }
    }
    return result;
}

// Euclidean k-medoids over the rows of `points`. Small pools run PAM on the full
// distance matrix; larger pools run PAM on seeded samples and keep the draw with
// the lowest cost over the whole pool.
template <typename Derived>
KMedoidsResult<typename Derived::Scalar> k_medoids(const Eigen::MatrixBase<Derived>& points, Eigen::Index k,
                                                   const KMedoidsOptions& options = {}) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = points.rows();
    if (k < 1 || k > n) throw std::invalid_argument("k-medoids: k must be in [1, n]");

    if (n <= options.exact_limit || k == n) {
        return pam_from_distances<Scalar>(distance_matrix(points), k, options);
    }

    const Eigen::Index sample_size = std::min(n, std::max<Eigen::Index>(40 + 2 * k, options.exact_limit / 4));
    std::mt19937_64 rng(options.seed);
    KMedoidsResult<Scalar> best;
    best.cost = std::numeric_limits<Scalar>::infinity();
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index(0));

    for (int draw = 0; draw < std::max(1, options.sample_draws); ++draw) {
        std::vector<Eigen::Index> sample;
        sample.reserve(std::size_t(sample_size));
        std::sample(all.begin(), all.end(), std::back_inserter(sample), sample_size, rng);
        RowMatrix<Scalar> sub(sample_size, points.cols());
        for (Eigen::Index i = 0; i < sample_size; ++i) sub.row(i) = points.row(sample[std::size_t(i)]);
        const auto local = pam_from_distances<Scalar>(distance_matrix(sub), k, options);

        RowMatrix<Scalar> centers(k, points.cols());
        std::vector<Eigen::Index> medoids;
        for (Eigen::Index m = 0; m < k; ++m) {
            medoids.push_back(sample[std::size_t(local.medoids[std::size_t(m)])]);
            centers.row(m) = points.row(medoids.back());
        }
        const auto near = nearest_rows(points, centers);
        Scalar cost = 0;
        for (double d : near.distance) cost += Scalar(d);
        if (cost < best.cost) {
            best.cost = cost;
            best.medoids = medoids;
            best.assignment = near.index;
            best.swap_passes = local.swap_passes;
        }
    }
    // keep medoids ascending, remapping assignments
    std::vector<std::size_t> order(best.medoids.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return best.medoids[a] < best.medoids[b]; });
    std::vector<Eigen::Index> rank(order.size());
    std::vector<Eigen::Index> sorted;
    for (std::size_t r = 0; r < order.size(); ++r) {
        rank[order[r]] = Eigen::Index(r);
        sorted.push_back(best.medoids[order[r]]);
    }
    for (auto& a : best.assignment) a = rank[std::size_t(a)];
    best.medoids = std::move(sorted);
    best.sampled = true;
    return best;
}

}  // namespace alab
