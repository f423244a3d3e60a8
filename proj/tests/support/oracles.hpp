#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical routines.

#include "dagem/dag_model.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

using dagem::Matrix;
using dagem::Vector;

// Sigma = (I - B)^-1 D (I - B)^-T via a dense LU inverse.
inline Matrix dense_covariance(const dagem::SemParams& p) {
    const auto n = p.coefficients.rows();
    const Matrix s_inv = (Matrix::Identity(n, n) - p.coefficients).inverse();
    return s_inv * p.variances.asDiagonal() * s_inv.transpose();
}

inline Vector dense_mean(const dagem::SemParams& p) {
    const auto n = p.coefficients.rows();
    return (Matrix::Identity(n, n) - p.coefficients).inverse() * p.intercepts;
}

struct Conditional {
    double mean;
    double variance;
};

// Covariance-form (Schur complement) conditioning of coordinate t on the rest.
inline Conditional schur(const Matrix& sigma, const Vector& m, int t, const Vector& x_rest) {
    const auto p = sigma.rows();
    std::vector<int> rest;
    for (int j = 0; j < p; ++j) {
        if (j != t) rest.push_back(j);
    }
    const auto q = static_cast<Eigen::Index>(rest.size());
    Matrix s_oo(q, q);
    Vector s_to(q);
    Vector m_o(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        m_o(a) = m(rest[a]);
        s_to(a) = sigma(t, rest[a]);
        for (Eigen::Index b = 0; b < q; ++b) s_oo(a, b) = sigma(rest[a], rest[b]);
    }
    const Vector coef = s_oo.fullPivLu().solve(s_to);
    return {m(t) + coef.dot(x_rest - m_o), sigma(t, t) - coef.dot(s_to)};
}

// Random SEM with identity topological order and a random name order.
struct RandomSem {
    std::vector<std::string> names;
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<double> weights;
    std::vector<double> intercepts;
    std::vector<double> variances;
};

inline RandomSem random_sem(int p, std::mt19937_64& rng, double edge_prob = 0.4) {
    std::uniform_real_distribution<double> coef(-1.5, 1.5);
    std::uniform_real_distribution<double> var(0.2, 2.0);
    std::uniform_real_distribution<double> icpt(-3.0, 3.0);
    std::bernoulli_distribution edge(edge_prob);
    RandomSem sem;
    for (int k = 0; k < p; ++k) sem.names.push_back("N" + std::to_string(k));
    for (int k = 1; k < p; ++k) {
        for (int j = 0; j < k; ++j) {
            if (edge(rng)) {
                sem.edges.emplace_back(sem.names[j], sem.names[k]);
                sem.weights.push_back(coef(rng));
            }
        }
    }
    for (int k = 0; k < p; ++k) {
        sem.intercepts.push_back(icpt(rng));
        sem.variances.push_back(var(rng));
    }
    return sem;
}

// Ancestral sampler with its own generator (std::normal_distribution),
// assuming node k's parents all have smaller indices.
inline Matrix sample_lower(const dagem::SemParams& p, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto d = p.coefficients.rows();
    Matrix out(static_cast<Eigen::Index>(n), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index k = 0; k < d; ++k) {
            double v = p.intercepts(k) + std::sqrt(p.variances(k)) * z(rng);
            for (Eigen::Index j = 0; j < k; ++j) v += p.coefficients(k, j) * out(i, j);
            out(i, k) = v;
        }
    }
    return out;
}

inline Matrix sample_covariance(const Matrix& x) {
    const Matrix c = x.rowwise() - x.colwise().mean();
    return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

}  // namespace oracle
