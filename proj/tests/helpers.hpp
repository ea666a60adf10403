#pragma once

#include "harmony/data.hpp"
#include "harmony/error.hpp"
#include "harmony/glm.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing_support {

/// Runs f and returns the code of the harmony::Error it throws.
harmony::ErrorCode code_of(auto&& f) {
    try {
        f();
    } catch (const harmony::Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return harmony::ErrorCode::ConfigError;
}

inline harmony::SubjectRecord rec(double y, int t, std::size_t k, harmony::Study s,
                                  std::vector<double> x = {}) {
    harmony::SubjectRecord r;
    r.outcome = y;
    r.treatment = t;
    r.subgroup = k;
    r.study = s;
    r.covariates = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    return r;
}

inline harmony::CombinedDataset empty_dataset(std::size_t K, std::size_t d = 0) {
    harmony::CombinedDataset ds;
    ds.K = K;
    ds.d = d;
    for (std::size_t k = 0; k < K; ++k) ds.subgroup_labels.push_back(std::to_string(k + 1));
    return ds;
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("harmony_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path write(const std::string& name, const std::string& text) const {
        auto p = path / name;
        std::ofstream(p) << text;
        return p;
    }
};

/// Normal-outcome dataset with fixed cell sizes and optional EC shift gamma.
inline harmony::CombinedDataset normal_dataset(std::mt19937_64& rng, std::size_t K, int n_per_arm,
                                               int n_ec, const std::vector<double>& theta,
                                               double gamma = 0.0, double d_beta = 0.0) {
    std::normal_distribution<double> z(0.0, 1.0);
    auto ds = empty_dataset(K, d_beta != 0.0 ? 1 : 0);
    for (std::size_t k = 0; k < K; ++k) {
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < n_per_arm; ++i) {
                std::vector<double> x;
                double shift = 0.0;
                if (ds.d) {
                    x.push_back(z(rng));
                    shift = d_beta * x[0];
                }
                ds.rct.push_back(rec(0.3 * k + t * theta[k] + shift + z(rng), t, k, harmony::Study::Rct, x));
            }
        }
        for (int i = 0; i < n_ec; ++i) {
            std::vector<double> x;
            double shift = 0.0;
            if (ds.d) {
                x.push_back(2.0 + z(rng));
                shift = d_beta * x[0];
            }
            ds.ec.push_back(rec(0.3 * k + gamma + shift + z(rng), 0, k, harmony::Study::Ec, x));
        }
    }
    return ds;
}

/// Binary outcomes from a logistic model with one covariate; EC rows get a logit shift
/// and a covariate mean shift.
inline harmony::CombinedDataset binary_dataset(std::mt19937_64& rng, std::size_t K, int n_per_arm, int n_ec,
                                               double ec_shift, double x_shift) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    auto ds = empty_dataset(K, 1);
    ds.family = harmony::OutcomeFamily::Binary;
    for (std::size_t k = 0; k < K; ++k) {
        const double nu = -0.5 + 0.2 * static_cast<double>(k);
        for (int t = 0; t < 2; ++t) {
            for (int i = 0; i < n_per_arm; ++i) {
                const double x = z(rng);
                const double p = harmony::expit(nu + 0.7 * t + 0.4 * x);
                ds.rct.push_back(rec(u(rng) < p ? 1 : 0, t, k, harmony::Study::Rct, {x}));
            }
        }
        for (int i = 0; i < n_ec; ++i) {
            const double x = x_shift + z(rng);
            const double p = harmony::expit(nu + ec_shift + 0.4 * x);
            ds.ec.push_back(rec(u(rng) < p ? 1 : 0, 0, k, harmony::Study::Ec, {x}));
        }
    }
    return ds;
}

}  // namespace testing_support
