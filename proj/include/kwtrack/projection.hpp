#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "embedding.hpp"

namespace kwtrack {

struct ProjectedPoint {
    std::string token;
    double x;
    double y;
};

enum class ProjectionMethod { tsne, pca };

struct TsneParams {
    int iterations = 500;
    double max_perplexity = 30.0;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
};

namespace detail {

// Top-two principal component scores of the rows of X (centered). Component
// signs are fixed so each axis' largest-magnitude loading is positive.
inline Eigen::MatrixXd pca_scores(const Eigen::MatrixXd& X) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, 2);
    if (X.cols() == 0 || n < 2) return out;
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::Index d = cov.rows();
    for (Eigen::Index c = 0; c < 2 && c < d; ++c) {
        Eigen::VectorXd axis = es.eigenvectors().col(d - 1 - c);
        Eigen::Index arg;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis[arg] < 0) axis = -axis;
        out.col(c) = centered * axis;
    }
    return out;
}

// Conditional affinities with per-row precision found by bisection so that
// each row's entropy matches log(perplexity); symmetrized and normalized.
inline Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& X, double perplexity) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd D(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) D(i, j) = (X.row(i) - X.row(j)).squaredNorm();

    const double target = std::log(perplexity);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) dmin = std::min(dmin, D(i, j));
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 100; ++it) {
            double sum = 0.0, weighted = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                double p = std::exp(-(D(i, j) - dmin) * beta);
                P(i, j) = p;
                sum += p;
                weighted += (D(i, j) - dmin) * p;
            }
            double entropy = std::log(sum) + beta * weighted / sum;
            for (Eigen::Index j = 0; j < n; ++j) P(i, j) /= sum;
            double gap = entropy - target;
            if (std::abs(gap) < 1e-5) break;
            if (gap > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
    }
    Eigen::MatrixXd sym = (P + P.transpose()) / (2.0 * static_cast<double>(n));
    return sym.cwiseMax(1e-12);
}

}  // namespace detail

// Exact t-SNE (perplexity min(30, (n-1)/3), PCA initialization) of the given
// rows. Deterministic for a fixed seed, which only drives a tiny jitter that
// separates coincident starting points.
inline Eigen::MatrixXd tsne(const Eigen::MatrixXd& X, std::uint64_t seed, const TsneParams& params = {}) {
    const Eigen::Index n = X.rows();
    if (n < 2) throw std::invalid_argument("projection needs at least two points");
    double perplexity = std::min(params.max_perplexity, static_cast<double>(n - 1) / 3.0);
    perplexity = std::max(perplexity, 1e-3);
    Eigen::MatrixXd P = detail::tsne_affinities(X, perplexity);

    Eigen::MatrixXd Y = detail::pca_scores(X);
    double sd = std::sqrt((Y.col(0).array() - Y.col(0).mean()).square().sum() / static_cast<double>(n));
    if (sd > 0) Y *= 1e-4 / sd;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 1e-6);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) Y(i, c) += jitter(rng);

    const double lr = std::max(static_cast<double>(n) / params.early_exaggeration / 4.0, 50.0);
    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    Eigen::MatrixXd num(n, n), grad(n, 2);

    for (int it = 0; it < params.iterations; ++it) {
        bool early = it < params.exaggeration_iterations;
        double exag = early ? params.early_exaggeration : 1.0;
        double momentum = early ? 0.5 : 0.8;

        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                double q = 1.0 / (1.0 + (Y.row(i) - Y.row(j)).squaredNorm());
                num(i, j) = num(j, i) = q;
                total += 2.0 * q;
            }
        }
        grad.setZero();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                double q = std::max(num(i, j) / total, 1e-12);
                double m = 4.0 * (exag * P(i, j) - q) * num(i, j);
                grad.row(i) += m * (Y.row(i) - Y.row(j));
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (int c = 0; c < 2; ++c) {
                bool same = (grad(i, c) > 0) == (update(i, c) > 0);
                gains(i, c) = same ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                update(i, c) = momentum * update(i, c) - lr * gains(i, c) * grad(i, c);
            }
        }
        Y += update;
        Y = Y.rowwise() - Y.colwise().mean();
    }
    return Y;
}

// 2D coordinates for vocabulary tokens, for the neighbor scatter plot.
inline std::vector<ProjectedPoint> project_2d(const EmbeddingModel& model, const std::vector<std::string>& tokens,
                                              std::uint64_t seed,
                                              ProjectionMethod method = ProjectionMethod::tsne) {
    if (tokens.size() < 2) throw std::invalid_argument("projection needs at least two tokens");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(tokens.size()), model.dimension());
    for (std::size_t i = 0; i < tokens.size(); ++i)
        X.row(static_cast<Eigen::Index>(i)) = model.vectors().row(model.vocabulary().index_of(tokens[i]));
    Eigen::MatrixXd Y = method == ProjectionMethod::tsne ? tsne(X, seed) : detail::pca_scores(X);
    std::vector<ProjectedPoint> out;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        out.push_back({tokens[i], Y(static_cast<Eigen::Index>(i), 0), Y(static_cast<Eigen::Index>(i), 1)});
    return out;
}

}  // namespace kwtrack
