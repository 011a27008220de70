#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace alab {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using EmbeddingMatrix = RowMatrix<float>;

// ||a_i - b_j||^2 for every row pair, through one GEMM. Clamped at zero.
template <typename DerivedA, typename DerivedB>
RowMatrix<typename DerivedA::Scalar> pairwise_squared_distances(const Eigen::MatrixBase<DerivedA>& a,
                                                                const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    const auto a_norms = a.rowwise().squaredNorm().eval();
    const auto b_norms = b.rowwise().squaredNorm().eval();
    RowMatrix<Scalar> d = (Scalar(-2) * (a * b.transpose())).eval();
    d.colwise() += a_norms;
    d.rowwise() += b_norms.transpose();
    return d.cwiseMax(Scalar(0));
}

// Euclidean distance computed from explicit differences.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar euclidean(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    return (a - b).norm();
}

// Full symmetric distance matrix from explicit differences.
template <typename Derived>
RowMatrix<typename Derived::Scalar> distance_matrix(const Eigen::MatrixBase<Derived>& points) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = points.rows();
    RowMatrix<Scalar> d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = Scalar(0);
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
    }
    return d;
}

struct NearestResult {
    std::vector<Eigen::Index> index;
    std::vector<double> distance;
};

// Nearest row of `refs` for every row of `queries`, ties to the lowest ref index.
// Candidates are screened with GEMM distances, then confirmed with exact differences.
template <typename DerivedQ, typename DerivedR>
NearestResult nearest_rows(const Eigen::MatrixBase<DerivedQ>& queries, const Eigen::MatrixBase<DerivedR>& refs) {
    NearestResult out;
    const Eigen::Index nq = queries.rows();
    const Eigen::Index nr = refs.rows();
    out.index.assign(std::size_t(nq), -1);
    out.distance.assign(std::size_t(nq), std::numeric_limits<double>::infinity());
    if (nr == 0) return out;

    const RowMatrix<double> q = queries.template cast<double>();
    const RowMatrix<double> r = refs.template cast<double>();
    constexpr Eigen::Index kBlock = 1024;
    for (Eigen::Index start = 0; start < nq; start += kBlock) {
        const Eigen::Index rows = std::min(kBlock, nq - start);
        const RowMatrix<double> approx = pairwise_squared_distances(q.middleRows(start, rows), r);
        for (Eigen::Index i = 0; i < rows; ++i) {
            const double best_approx = approx.row(i).minCoeff();
            const double slack = 1e-9 * (1.0 + best_approx) + 1e-9 * q.row(start + i).squaredNorm();
            double best = std::numeric_limits<double>::infinity();
            Eigen::Index best_j = -1;
            for (Eigen::Index j = 0; j < nr; ++j) {
                if (approx(i, j) > best_approx + slack) continue;
                const double exact = (q.row(start + i) - r.row(j)).squaredNorm();
                if (exact < best) {
                    best = exact;
                    best_j = j;
                }
            }
            out.index[std::size_t(start + i)] = best_j;
            out.distance[std::size_t(start + i)] = std::sqrt(best);
        }
    }
    return out;
}

}  // namespace alab
