#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xrl/dataset.hpp"
#include "xrl/matrix.hpp"

namespace xrl::testing {

// Random but valid dataset: random episode lengths, observation width,
// optional arrays toggled by the seed, dist_probs rows normalised.
XRLDataset random_dataset(std::uint64_t seed);

// Minimal dataset from per-episode reward lists (1-D observation = step).
XRLDataset episodes_dataset(const std::vector<std::vector<float>>& rewards, double discount, int num_actions = 4);

// `per_blob` Gaussian points (sd 1) around each centre.
RealMatrix gaussian_blobs(const std::vector<std::vector<double>>& centres, int per_blob, std::uint64_t seed);

std::vector<char> read_bytes(const std::filesystem::path& path);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace xrl::testing
