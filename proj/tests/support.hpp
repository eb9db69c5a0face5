#pragma once

#include "fence/model_space.hpp"
#include "fence/numerics.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

namespace fence::fixtures {

template <class F>
void expect_error(F&& f, ErrorCode code) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(code);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

/// Intercept plus K-1 standard normal columns named x1..xK.
inline Dataset normal_dataset(Eigen::Index n, int K, std::uint64_t seed) {
    Engine eng = RngStream{seed, 0}.engine("test_design");
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.y(i) = normal(eng);
    d.covariates.resize(n, K);
    d.covariates.col(0).setOnes();
    for (int j = 1; j < K; ++j)
        for (Eigen::Index i = 0; i < n; ++i) d.covariates(i, j) = normal(eng);
    for (int j = 1; j <= K; ++j) d.names.push_back("x" + std::to_string(j));
    return d;
}

/// Equal-size clusters with ids 1..m.
inline Grouping equal_clusters(int m, int size) {
    Grouping g;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < size; ++j) g.cluster.push_back(i + 1);
    return g;
}

/// Models with the given fixed-effect lists over a dataset with columns x1..xK.
inline ModelSpace space_of(const Dataset& d, const std::vector<std::vector<std::string>>& sets) {
    std::vector<CandidateModel> models;
    for (const auto& s : sets) models.push_back(make_model(d, s));
    return ModelSpace(std::move(models));
}

inline Dataset names_only(int K) {
    Dataset d;
    d.y = Eigen::VectorXd::Zero(1);
    d.covariates = Eigen::MatrixXd::Ones(1, K);
    for (int j = 1; j <= K; ++j) d.names.push_back("x" + std::to_string(j));
    return d;
}

}  // namespace fence::fixtures
