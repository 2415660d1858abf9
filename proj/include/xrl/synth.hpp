#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "xrl/dataset.hpp"
#include "xrl/matrix.hpp"

namespace xrl::synth {

// Actions are indexed up, right, down, left.
inline constexpr int kNumActions = 4;
enum class Move { up = 0, right = 1, down = 2, left = 3 };

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

struct Outcome {
    double probability;
    int next_state;
    double reward;
};

// Finite gridworld M = (S, A, P, rho0, R, gamma, T). Entering a goal or cliff
// cell ends the episode; every move also pays `step_penalty`. With
// probability `slip_prob` the executed move is drawn uniformly from all four.
struct GridworldMDP {
    std::string name = "custom";
    int width = 0;
    int height = 0;
    std::vector<Cell> start_cells;
    std::vector<double> start_probs;
    std::vector<Cell> goal_cells;
    std::vector<double> goal_rewards;
    std::vector<Cell> cliff_cells;
    std::vector<double> cliff_penalties;
    double step_penalty = 0.0;
    double discount = 1.0;
    int max_episode_length = 100;
    double slip_prob = 0.0;

    int num_states() const noexcept { return width * height; }
    int state_of(Cell c) const noexcept { return c.y * width + c.x; }
    Cell cell_of(int state) const noexcept { return {state % width, state / width}; }
    bool is_terminal(int state) const noexcept;
    // Reward granted on entering `state` in addition to the step penalty.
    double entry_reward(int state) const noexcept;
    std::vector<Outcome> outcomes(int state, int action) const;

    // Throws InputError on broken invariants.
    void check() const;
};

// Presets: "corridor", "cliffwalk-4x4", "openfield-8x8".
GridworldMDP make_layout(const std::string& preset);
std::vector<std::string> layout_presets();

// Text layout: `key = value` lines (name, step_penalty, goal_reward,
// cliff_penalty, discount, max_episode_length, slip_prob), then a line
// `grid:` followed by rows over S (start), G (goal), C (cliff), '.' (empty).
// '#' starts a comment.
GridworldMDP parse_layout(std::string_view text);
GridworldMDP load_layout(const std::filesystem::path& path);

struct ValueResult {
    std::vector<double> values;  // [S]
    RealMatrix q;                // [S x 4]
    int sweeps = 0;
};

ValueResult value_iteration(const GridworldMDP& mdp, double tol = 1e-9);

// Epsilon-greedy over q_values; the greedy action is the lowest-index argmax.
struct SyntheticPolicy {
    RealMatrix q_values;
    double epsilon = 0.0;

    int greedy(int state) const;
    std::vector<double> probabilities(int state) const;
};

std::vector<double> policy_evaluation(const GridworldMDP& mdp, const SyntheticPolicy& policy, double tol = 1e-9);

inline constexpr int kLatentDims = 8;

// Seeded rollouts. One mt19937_64 stream, consumed in this order:
//   1. latent projection: 8x2 weights (row-major) then 8 biases, one normal each
//   2. per episode: one uniform for the start cell
//   3. per step: one uniform for the action, one for the slip test, and one
//      more for the slipped direction only when a slip happens
// Episodes that hit max_episode_length end with done = true and are listed in
// meta.timeout_episodes.
XRLDataset generate_dataset(const GridworldMDP& mdp, const SyntheticPolicy& policy, int episodes,
                            std::uint64_t seed);

}  // namespace xrl::synth
