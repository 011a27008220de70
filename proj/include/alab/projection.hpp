#pragma once

#include "alab/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace alab {

// Two-component principal projection. Each component's sign is fixed so that its
// largest-magnitude loading is positive.
template <typename Derived>
RowMatrix<double> principal_projection_2d(const Eigen::MatrixBase<Derived>& points) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    RowMatrix<double> out = RowMatrix<double>::Zero(n, 2);
    if (n == 0) return out;

    const RowMatrix<double> x = points.template cast<double>();
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const RowMatrix<double> centered = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / double(std::max<Eigen::Index>(1, n - 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

    // eigenvalues ascend; take the last two
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, d); ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        basis.col(c) = v;
    }
    out = centered * basis;
    return out;
}

}  // namespace alab
