#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xrl/dataset.hpp"
#include "xrl/matrix.hpp"

namespace xrl {

// Column-concatenates the named dataset arrays (observations, actions,
// rewards, dones, steps, latents, dist_probs, critic_values) in the given order
// and z-scores every column. Constant columns become zeros.
RealMatrix build_feature_matrix(const XRLDataset& dataset, const std::vector<std::string>& feature_spec);

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    std::optional<double> learning_rate;  // default max(N / 12, 50)
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch_iteration = 250;
    double init_stddev = 1e-4;
    // KL is evaluated every `kl_stride` iterations during the last 100
    // iterations (and always at the final one). 1 records every iteration.
    int kl_stride = 10;
};

struct EmbeddingMap {
    RealMatrix coords;  // [N x 2]
    double perplexity = 0.0;
    int iterations = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
    double final_kl = 0.0;
    std::vector<std::string> feature_spec;
    // (iteration, KL) samples from the tail of the optimization.
    std::vector<std::pair<int, double>> kl_trace;
};

EmbeddingMap tsne_embed(const RealMatrix& features, const TsneOptions& options = {});

void save_embedding(const EmbeddingMap& embedding, const std::filesystem::path& path);
EmbeddingMap load_embedding(const std::filesystem::path& path);

namespace tsne {

// Joint affinities stored as the strict upper triangle, row-major:
// entry (i, j), i < j, lives at i * (2N - i - 1) / 2 + (j - i - 1).
class PairMatrix {
public:
    PairMatrix() = default;
    explicit PairMatrix(std::size_t n) : n_(n), data_(n < 2 ? 0 : n * (n - 1) / 2, 0.0) {}

    std::size_t points() const noexcept { return n_; }
    double& at(std::size_t i, std::size_t j) noexcept { return data_[index(i, j)]; }
    double at(std::size_t i, std::size_t j) const noexcept { return data_[index(i, j)]; }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

private:
    std::size_t index(std::size_t i, std::size_t j) const noexcept {
        if (i > j) std::swap(i, j);
        return i * (2 * n_ - i - 1) / 2 + (j - i - 1);
    }
    std::size_t n_ = 0;
    std::vector<double> data_;
};

struct BandwidthResult {
    double beta = 1.0;       // precision 1 / (2 sigma^2)
    double entropy_bits = 0.0;
    bool converged = false;
};

// Fills `conditional` (length N, self entry zero) with p_{j|i} for the given
// squared distances row and returns the precision found by binary search.
BandwidthResult conditional_row(std::span<const double> sq_distances, std::size_t self, double perplexity,
                                std::span<double> conditional);

struct Affinities {
    PairMatrix joint;
    std::vector<BandwidthResult> bandwidths;
};

// Symmetrised joint affinities with the 1e-12 floor folded in so that every
// off-diagonal entry is at least the floor and the total remains one.
Affinities joint_affinities(const RealMatrix& features, double perplexity);

inline constexpr double kAffinityFloor = 1e-12;

double kl_divergence(const PairMatrix& p, const RealMatrix& y);

// Gradient of KL(P || Q) w.r.t. the embedding, with P scaled by `exaggeration`.
RealMatrix kl_gradient(const PairMatrix& p, const RealMatrix& y, double exaggeration = 1.0);

}  // namespace tsne

}  // namespace xrl
