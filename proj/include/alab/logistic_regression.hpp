#pragma once

#include "alab/linalg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

namespace alab {

struct LogisticOptions {
    // Penalty is l2 / (2n) * ||W||^2 on top of the mean cross-entropy.
    double l2 = 1.0;
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;
    int history = 10;
};

struct LogisticDiagnostics {
    int iterations = 0;
    double objective = 0;
    double gradient_norm = 0;
    bool converged = false;
};

// Multinomial logistic regression on standardized features, fitted by L-BFGS.
// Labels are arbitrary integer class ids; column c of the probabilities matches classes()[c].
template <typename Scalar = double>
class MultinomialLogistic {
public:
    using Matrix = RowMatrix<Scalar>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    template <typename Derived, typename Label>
    static MultinomialLogistic fit(const Eigen::MatrixBase<Derived>& x, const std::vector<Label>& labels,
                                   const LogisticOptions& options = {}) {
        if (Eigen::Index(labels.size()) != x.rows()) throw std::invalid_argument("logistic: label count mismatch");
        MultinomialLogistic model;
        for (const auto& l : labels) model.classes_.push_back(static_cast<long long>(l));
        std::sort(model.classes_.begin(), model.classes_.end());
        model.classes_.erase(std::unique(model.classes_.begin(), model.classes_.end()), model.classes_.end());
        if (model.classes_.size() < 2) throw std::domain_error("logistic: need at least two classes");

        const Eigen::Index n = x.rows();
        const Eigen::Index d = x.cols();
        const auto c = Eigen::Index(model.classes_.size());
        const Matrix xs = x.template cast<Scalar>();
        model.mean_ = xs.colwise().mean().transpose();
        model.scale_ = ((xs.rowwise() - model.mean_.transpose()).array().square().colwise().mean().sqrt()).transpose();
        for (Eigen::Index j = 0; j < d; ++j)
            if (!(model.scale_[j] > Scalar(0))) model.scale_[j] = Scalar(1);

        // design matrix with a trailing bias column
        Matrix z(n, d + 1);
        z.leftCols(d) = (xs.rowwise() - model.mean_.transpose()).array().rowwise() / model.scale_.transpose().array();
        z.col(d).setOnes();
        Matrix y = Matrix::Zero(n, c);
        for (Eigen::Index i = 0; i < n; ++i) y(i, model.class_index(static_cast<long long>(labels[std::size_t(i)]))) = 1;

        const Scalar inv_n = Scalar(1) / Scalar(n);
        const Scalar reg = Scalar(options.l2) * inv_n;
        auto objective = [&](const Matrix& w, Matrix& grad) {
            Matrix logits = z * w;
            Vector lse(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Scalar mx = logits.row(i).maxCoeff();
                lse[i] = mx + std::log((logits.row(i).array() - mx).exp().sum());
            }
            Matrix p = (logits.colwise() - lse).array().exp();
            const Scalar loss = (lse.sum() - (logits.cwiseProduct(y)).sum()) * inv_n;
            grad = z.transpose() * (p - y) * inv_n;
            grad.topRows(d) += reg * w.topRows(d);
            return loss + Scalar(0.5) * reg * w.topRows(d).squaredNorm();
        };

        Matrix w = Matrix::Zero(d + 1, c);
        Matrix g(d + 1, c);
        Scalar f = objective(w, g);
        std::deque<std::pair<Matrix, Matrix>> memory;  // (s, y) pairs
        auto& diag = model.diagnostics_;
        for (int it = 0; it < options.max_iterations; ++it) {
            diag.gradient_norm = double(g.norm());
            if (diag.gradient_norm < options.gradient_tolerance) {
                diag.converged = true;
                break;
            }
            // two-loop recursion
            Matrix q = g;
            std::vector<Scalar> alpha(memory.size());
            for (std::size_t k = memory.size(); k-- > 0;) {
                const auto& [s, yk] = memory[k];
                alpha[k] = s.cwiseProduct(q).sum() / yk.cwiseProduct(s).sum();
                q -= alpha[k] * yk;
            }
            if (!memory.empty()) {
                const auto& [s, yk] = memory.back();
                q *= s.cwiseProduct(yk).sum() / yk.squaredNorm();
            }
            for (std::size_t k = 0; k < memory.size(); ++k) {
                const auto& [s, yk] = memory[k];
                const Scalar beta = yk.cwiseProduct(q).sum() / yk.cwiseProduct(s).sum();
                q += s * (alpha[k] - beta);
            }
            Matrix dir = -q;
            Scalar slope = g.cwiseProduct(dir).sum();
            if (!(slope < 0)) {
                dir = -g;
                slope = -g.squaredNorm();
                memory.clear();
            }
            Scalar step = 1;
            Matrix g_new(d + 1, c);
            Matrix w_new;
            Scalar f_new = f;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls) {
                w_new = w + step * dir;
                f_new = objective(w_new, g_new);
                if (f_new <= f + Scalar(1e-4) * step * slope) {
                    accepted = true;
                    break;
                }
                step *= Scalar(0.5);
            }
            diag.iterations = it + 1;
            if (!accepted) break;
            Matrix s = w_new - w;
            Matrix yk = g_new - g;
            if (yk.cwiseProduct(s).sum() > Scalar(1e-12)) {
                memory.emplace_back(std::move(s), std::move(yk));
                if (int(memory.size()) > options.history) memory.pop_front();
            }
            w = std::move(w_new);
            g = g_new;
            f = f_new;
        }
        diag.objective = double(f);
        diag.gradient_norm = double(g.norm());
        diag.converged = diag.converged || diag.gradient_norm < options.gradient_tolerance;
        model.weights_ = std::move(w);
        return model;
    }

    // Row i holds the class distribution for sample i.
    template <typename Derived>
    Matrix predict_proba(const Eigen::MatrixBase<Derived>& x) const {
        const Eigen::Index d = mean_.size();
        Matrix z = (x.template cast<Scalar>().rowwise() - mean_.transpose()).array().rowwise() / scale_.transpose().array();
        Matrix logits = z * weights_.topRows(d);
        logits.rowwise() += weights_.row(d);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const Scalar mx = logits.row(i).maxCoeff();
            logits.row(i) = (logits.row(i).array() - mx).exp();
            logits.row(i) /= logits.row(i).sum();
        }
        return logits;
    }

    const std::vector<long long>& classes() const noexcept { return classes_; }
    const LogisticDiagnostics& diagnostics() const noexcept { return diagnostics_; }

    Eigen::Index class_index(long long label) const {
        auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
        if (it == classes_.end() || *it != label) return -1;
        return Eigen::Index(it - classes_.begin());
    }

private:
    std::vector<long long> classes_;
    Vector mean_;
    Vector scale_;
    Matrix weights_;  // (d + 1) x C, bias in the last row
    LogisticDiagnostics diagnostics_;
};

}  // namespace alab
