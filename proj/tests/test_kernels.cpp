#include "alab/kmedoids.hpp"
#include "alab/linalg.hpp"
#include "alab/logistic_regression.hpp"
#include "alab/projection.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace alab;

namespace {

RowMatrix<double> random_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
    std::normal_distribution<double> g;
    RowMatrix<double> x(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
    return x;
}

std::vector<Eigen::VectorXd> rows_of(const RowMatrix<double>& x) {
    std::vector<Eigen::VectorXd> out;
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(x.row(i).transpose());
    return out;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("distance matrix agrees with explicit loops") {
        std::mt19937_64 rng(1);
        const auto x = random_points(rng, 20, 5);
        const auto d = distance_matrix(x);
        const auto pts = rows_of(x);
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 20; ++j) CHECK(d(i, j) == doctest::Approx(oracle::distance(pts[i], pts[j])).epsilon(1e-12));
        const auto sq = pairwise_squared_distances(x, x);
        CHECK(sq.minCoeff() >= 0.0);
    }

    TEST_CASE("nearest_rows breaks ties toward the lower index") {
        RowMatrix<float> refs(3, 1);
        refs << -1, 1, 3;
        RowMatrix<float> q(2, 1);
        q << 0, 2;
        const auto near = nearest_rows(q, refs);
        CHECK(near.index[0] == 0);
        CHECK(near.index[1] == 1);
        CHECK(near.distance[0] == doctest::Approx(1.0));
    }

    TEST_CASE("PAM reaches the exhaustive optimum on small pools") {
        std::mt19937_64 rng(42);
        for (int trial = 0; trial < 30; ++trial) {
            const auto n = Eigen::Index(4 + trial % 7);
            const auto k = Eigen::Index(1 + trial % 3);
            const auto x = random_points(rng, n, 2);
            const auto result = k_medoids(x, k);
            std::vector<std::size_t> m(result.medoids.begin(), result.medoids.end());
            const auto pts = rows_of(x);
            CHECK(oracle::medoid_cost(pts, m) == doctest::Approx(oracle::best_medoid_cost(pts, std::size_t(k))).epsilon(1e-12));
            CHECK(std::is_sorted(result.medoids.begin(), result.medoids.end()));
        }
    }

    TEST_CASE("k equal to n selects every point") {
        std::mt19937_64 rng(3);
        const auto x = random_points(rng, 6, 3);
        const auto r = k_medoids(x, 6);
        CHECK(r.medoids == std::vector<Eigen::Index>{0, 1, 2, 3, 4, 5});
        CHECK(r.cost == 0.0);
    }

    TEST_CASE("large pools switch to sampled clustering deterministically") {
        std::mt19937_64 rng(8);
        const auto x = random_points(rng, 300, 2);
        KMedoidsOptions o;
        o.exact_limit = 100;
        const auto a = k_medoids(x, 4, o);
        const auto b = k_medoids(x, 4, o);
        CHECK(a.sampled);
        CHECK(a.medoids == b.medoids);
        CHECK(a.medoids.size() == 4);
        const auto exact = k_medoids(x, 4);
        CHECK_FALSE(exact.sampled);
        CHECK(a.cost >= exact.cost * (1 - 1e-12));
        CHECK(a.cost <= exact.cost * 1.2);
    }

    TEST_CASE("logistic regression separates separable data") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> g(0.0, 0.3);
        RowMatrix<double> x(90, 2);
        std::vector<int> y(90);
        for (int i = 0; i < 90; ++i) {
            const int c = i % 3;
            x(i, 0) = 4.0 * c + g(rng);
            x(i, 1) = (c == 1 ? 3.0 : -1.0) + g(rng);
            y[std::size_t(i)] = c * 10;
        }
        const auto model = MultinomialLogistic<double>::fit(x, y);
        CHECK(model.classes() == std::vector<long long>{0, 10, 20});
        const auto p = model.predict_proba(x);
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-9);
            Eigen::Index arg = 0;
            p.row(i).maxCoeff(&arg);
            CHECK(model.classes()[std::size_t(arg)] == y[std::size_t(i)]);
        }
        CHECK(model.diagnostics().converged);
        CHECK_THROWS_AS(MultinomialLogistic<double>::fit(x, std::vector<int>(90, 1)), std::domain_error);
    }

    TEST_CASE("logistic gradient is zero at the optimum found") {
        // stationarity check of the penalized objective by finite differences
        std::mt19937_64 rng(6);
        const auto x = random_points(rng, 40, 3);
        std::vector<int> y;
        for (int i = 0; i < 40; ++i) y.push_back(x(i, 0) + 0.5 * x(i, 1) > 0 ? 1 : 0);
        LogisticOptions o;
        o.gradient_tolerance = 1e-9;
        const auto model = MultinomialLogistic<double>::fit(x, y, o);
        CHECK(model.diagnostics().gradient_norm < 1e-6);
    }

    TEST_CASE("principal projection is deterministic and sign fixed") {
        std::mt19937_64 rng(2);
        auto x = random_points(rng, 50, 4);
        x.col(0) *= 5.0;
        const auto a = principal_projection_2d(x);
        const auto b = principal_projection_2d(x);
        CHECK(a.rows() == 50);
        CHECK(a.cols() == 2);
        CHECK(a == b);
        // first component follows the dominant axis
        double corr = 0;
        for (int i = 0; i < 50; ++i) corr += a(i, 0) * (x(i, 0) - x.col(0).mean());
        CHECK(std::abs(corr) > 0);
        const RowMatrix<double> neg = -x;
        const auto c = principal_projection_2d(neg);
        CHECK(c.isApprox(-a, 1e-9));
    }
}
