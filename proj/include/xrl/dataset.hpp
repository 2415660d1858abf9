#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xrl/matrix.hpp"

namespace xrl {

struct DatasetMeta {
    std::string env_id;
    int num_actions = 0;
    std::vector<std::int64_t> obs_shape;  // original observation shape; rows are stored flattened
    double discount = 1.0;
    std::uint64_t seed = 0;
    std::string generator;
    // Set when some done flags mark time-limit truncations rather than true terminals.
    bool time_limit_truncations = false;
    // Episode ordinals (0-based) that ended on the time limit, when known.
    std::vector<std::int64_t> timeout_episodes;

    bool operator==(const DatasetMeta&) const = default;
};

// Columnar per-step record store.
struct XRLDataset {
    DatasetMeta meta;
    Matrix<float> observations;  // [N x D_obs]
    std::vector<std::int32_t> actions;
    std::vector<float> rewards;
    std::vector<std::uint8_t> dones;
    std::vector<std::int32_t> steps;
    std::optional<Matrix<float>> latents;     // [N x D_lat]
    std::optional<Matrix<float>> dist_probs;  // [N x |A|]
    std::optional<std::vector<float>> critic_values;

    std::size_t size() const noexcept { return actions.size(); }
    int num_actions() const noexcept { return meta.num_actions; }
    double discount() const noexcept { return meta.discount; }

    // Throws InputError if array lengths disagree.
    void check_shapes() const;

    bool operator==(const XRLDataset&) const = default;
};

XRLDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const XRLDataset& dataset, const std::filesystem::path& path);

enum class ViolationKind { shape, step_sequence, probability_row, action_range, truncated_tail, discount };

std::string to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::size_t index;  // first record involved
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    // Start of the trailing episode that never reached done, if any. Records at
    // and after this index are dropped by drop_truncated_tail().
    std::optional<std::size_t> truncated_tail_start;

    bool ok() const noexcept { return violations.empty(); }
    // True when the only problem is a trailing truncated episode.
    bool only_truncated_tail() const noexcept;
};

ValidationReport validate(const XRLDataset& dataset);

// Returns a copy with records from `report.truncated_tail_start` onward removed.
XRLDataset drop_truncated_tail(const XRLDataset& dataset, const ValidationReport& report);

struct DerivedFields {
    std::vector<std::size_t> start_indices;
    std::vector<std::size_t> done_indices;
    std::vector<double> returns_to_go;
    std::vector<std::int32_t> episode_ids;

    std::size_t num_episodes() const noexcept { return start_indices.size(); }
};

// Discounted return-to-go per episode via G_t = r_t + gamma * G_{t+1}.
// Throws PreconditionError if the final record is not done.
DerivedFields derive(const XRLDataset& dataset);

}  // namespace xrl
