#include "xrl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "xrl/errors.hpp"
#include "xrl/rng.hpp"

namespace xrl::synth {
namespace {

constexpr int kMaxSweeps = 100000;

template <typename Cells>
int find_cell(const Cells& cells, Cell c) {
    const auto it = std::find(cells.begin(), cells.end(), c);
    return it == cells.end() ? -1 : static_cast<int>(it - cells.begin());
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw InputError("layout key '" + key + "' needs a number, got '" + value + "'");
    }
}

// Bellman sweep helper shared by both solvers: expected one-step value of (s, a).
double backup(const GridworldMDP& mdp, const std::vector<double>& v, int s, int a) {
    double q = 0.0;
    for (const auto& o : mdp.outcomes(s, a)) {
        q += o.probability * (o.reward + mdp.discount * v[static_cast<std::size_t>(o.next_state)]);
    }
    return q;
}

}  // namespace

bool GridworldMDP::is_terminal(int state) const noexcept {
    const Cell c = cell_of(state);
    return find_cell(goal_cells, c) >= 0 || find_cell(cliff_cells, c) >= 0;
}

double GridworldMDP::entry_reward(int state) const noexcept {
    const Cell c = cell_of(state);
    if (const int g = find_cell(goal_cells, c); g >= 0) return goal_rewards[static_cast<std::size_t>(g)];
    if (const int k = find_cell(cliff_cells, c); k >= 0) return cliff_penalties[static_cast<std::size_t>(k)];
    return 0.0;
}

std::vector<Outcome> GridworldMDP::outcomes(int state, int action) const {
    static constexpr int kDx[kNumActions] = {0, 1, 0, -1};
    static constexpr int kDy[kNumActions] = {-1, 0, 1, 0};
    const Cell c = cell_of(state);
    std::vector<Outcome> out;
    for (int executed = 0; executed < kNumActions; ++executed) {
        double p = slip_prob / kNumActions;
        if (executed == action) p += 1.0 - slip_prob;
        if (p <= 0.0) continue;
        Cell n{c.x + kDx[executed], c.y + kDy[executed]};
        if (n.x < 0 || n.x >= width || n.y < 0 || n.y >= height) n = c;
        const int next = state_of(n);
        const double reward = step_penalty + (is_terminal(next) ? entry_reward(next) : 0.0);
        auto same = std::find_if(out.begin(), out.end(), [&](const Outcome& o) { return o.next_state == next; });
        if (same != out.end()) {
            same->probability += p;
        } else {
            out.push_back({p, next, reward});
        }
    }
    return out;
}

void GridworldMDP::check() const {
    if (width < 1 || height < 1) throw InputError("grid must have at least one cell");
    if (start_cells.empty()) throw InputError("grid needs at least one start cell");
    if (start_probs.size() != start_cells.size()) throw InputError("start probabilities do not match start cells");
    double total = 0.0;
    for (double p : start_probs) total += p;
    if (std::fabs(total - 1.0) > 1e-9) throw InputError("start probabilities must sum to 1");
    if (goal_rewards.size() != goal_cells.size() || cliff_penalties.size() != cliff_cells.size()) {
        throw InputError("terminal rewards do not match terminal cells");
    }
    auto inside = [&](Cell c) { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; };
    for (const auto& c : goal_cells) {
        if (!inside(c)) throw InputError("goal cell outside the grid");
        if (find_cell(cliff_cells, c) >= 0) throw InputError("goal and cliff cells overlap");
    }
    for (const auto& c : cliff_cells) {
        if (!inside(c)) throw InputError("cliff cell outside the grid");
    }
    for (const auto& c : start_cells) {
        if (!inside(c)) throw InputError("start cell outside the grid");
        if (is_terminal(state_of(c))) throw InputError("start cell is terminal");
    }
    if (!(discount > 0.0 && discount <= 1.0)) throw InputError("discount must lie in (0, 1]");
    if (!(slip_prob >= 0.0 && slip_prob < 1.0)) throw InputError("slip probability must lie in [0, 1)");
    if (max_episode_length < 1) throw InputError("max episode length must be positive");
}

std::vector<std::string> layout_presets() { return {"corridor", "cliffwalk-4x4", "openfield-8x8"}; }

GridworldMDP make_layout(const std::string& preset) {
    if (preset == "corridor") {
        return parse_layout(
            "name = corridor\nstep_penalty = -0.1\ngoal_reward = 1\ndiscount = 1\nmax_episode_length = 20\n"
            "grid:\nS.G\n");
    }
    if (preset == "cliffwalk-4x4") {
        return parse_layout(
            "name = cliffwalk-4x4\nstep_penalty = -1\ngoal_reward = 10\ncliff_penalty = -100\ndiscount = 1\n"
            "max_episode_length = 50\n"
            "grid:\n....\n....\n....\nSCCG\n");
    }
    if (preset == "openfield-8x8") {
        return parse_layout(
            "name = openfield-8x8\nstep_penalty = -0.1\ngoal_reward = 10\ncliff_penalty = -10\ndiscount = 0.99\n"
            "max_episode_length = 100\nslip_prob = 0.1\n"
            "grid:\n"
            "S.......\n"
            "........\n"
            "...CC...\n"
            "........\n"
            "........\n"
            "...CC...\n"
            "........\n"
            "S......G\n");
    }
    throw ConfigError("unknown layout preset '" + preset + "'");
}

GridworldMDP parse_layout(std::string_view text) {
    GridworldMDP mdp;
    double goal_reward = 1.0;
    double cliff_penalty = -1.0;
    std::vector<std::string> rows;
    bool in_grid = false;

    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(std::string_view(raw).substr(0, hash));
        if (line.empty()) continue;
        if (in_grid) {
            rows.push_back(line);
            continue;
        }
        if (line == "grid:") {
            in_grid = true;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InputError(fmt::format("layout line {}: expected key = value", line_no));
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key == "name") {
            mdp.name = value;
        } else if (key == "step_penalty") {
            mdp.step_penalty = parse_number(key, value);
        } else if (key == "goal_reward") {
            goal_reward = parse_number(key, value);
        } else if (key == "cliff_penalty") {
            cliff_penalty = parse_number(key, value);
        } else if (key == "discount") {
            mdp.discount = parse_number(key, value);
        } else if (key == "max_episode_length") {
            mdp.max_episode_length = static_cast<int>(parse_number(key, value));
        } else if (key == "slip_prob") {
            mdp.slip_prob = parse_number(key, value);
        } else {
            throw InputError(fmt::format("layout line {}: unknown key '{}'", line_no, key));
        }
    }
    if (rows.empty()) throw InputError("layout has no grid rows");

    mdp.height = static_cast<int>(rows.size());
    mdp.width = static_cast<int>(rows.front().size());
    for (int y = 0; y < mdp.height; ++y) {
        const auto& row = rows[static_cast<std::size_t>(y)];
        if (static_cast<int>(row.size()) != mdp.width) throw InputError("layout rows differ in width");
        for (int x = 0; x < mdp.width; ++x) {
            switch (row[static_cast<std::size_t>(x)]) {
                case 'S':
                    mdp.start_cells.push_back({x, y});
                    break;
                case 'G':
                    mdp.goal_cells.push_back({x, y});
                    mdp.goal_rewards.push_back(goal_reward);
                    break;
                case 'C':
                    mdp.cliff_cells.push_back({x, y});
                    mdp.cliff_penalties.push_back(cliff_penalty);
                    break;
                case '.':
                    break;
                default:
                    throw InputError(fmt::format("layout cell '{}' is not one of S, G, C, .", row[static_cast<std::size_t>(x)]));
            }
        }
    }
    mdp.start_probs.assign(mdp.start_cells.size(), mdp.start_cells.empty() ? 0.0 : 1.0 / static_cast<double>(mdp.start_cells.size()));
    mdp.check();
    return mdp;
}

GridworldMDP load_layout(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open layout " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_layout(text.str());
}

ValueResult value_iteration(const GridworldMDP& mdp, double tol) {
    mdp.check();
    const int n = mdp.num_states();
    ValueResult r;
    r.values.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> next(static_cast<std::size_t>(n), 0.0);
    for (r.sweeps = 1; r.sweeps <= kMaxSweeps; ++r.sweeps) {
        double change = 0.0;
        for (int s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) continue;
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < kNumActions; ++a) best = std::max(best, backup(mdp, r.values, s, a));
            next[static_cast<std::size_t>(s)] = best;
            change = std::max(change, std::fabs(best - r.values[static_cast<std::size_t>(s)]));
        }
        r.values.swap(next);
        if (change < tol) break;
    }
    if (r.sweeps > kMaxSweeps) throw NumericalError("value iteration did not converge");

    r.q = RealMatrix(static_cast<std::size_t>(n), kNumActions, 0.0);
    for (int s = 0; s < n; ++s) {
        if (mdp.is_terminal(s)) continue;
        for (int a = 0; a < kNumActions; ++a) r.q(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) = backup(mdp, r.values, s, a);
    }
    return r;
}

int SyntheticPolicy::greedy(int state) const {
    const auto row = q_values.row(static_cast<std::size_t>(state));
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<double> SyntheticPolicy::probabilities(int state) const {
    const auto actions = q_values.cols();
    std::vector<double> p(actions, epsilon / static_cast<double>(actions));
    p[static_cast<std::size_t>(greedy(state))] += 1.0 - epsilon;
    return p;
}

std::vector<double> policy_evaluation(const GridworldMDP& mdp, const SyntheticPolicy& policy, double tol) {
    mdp.check();
    if (policy.q_values.rows() != static_cast<std::size_t>(mdp.num_states()) || policy.q_values.cols() != kNumActions) {
        throw InputError("policy q-values do not match the MDP");
    }
    if (!(policy.epsilon >= 0.0 && policy.epsilon <= 1.0)) throw InputError("epsilon must lie in [0, 1]");
    const int n = mdp.num_states();
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    std::vector<double> next(static_cast<std::size_t>(n), 0.0);
    for (int sweep = 1; sweep <= kMaxSweeps; ++sweep) {
        double change = 0.0;
        for (int s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) continue;
            const auto pi = policy.probabilities(s);
            double value = 0.0;
            for (int a = 0; a < kNumActions; ++a) {
                if (pi[static_cast<std::size_t>(a)] > 0.0) value += pi[static_cast<std::size_t>(a)] * backup(mdp, v, s, a);
            }
            next[static_cast<std::size_t>(s)] = value;
            change = std::max(change, std::fabs(value - v[static_cast<std::size_t>(s)]));
        }
        v.swap(next);
        if (change < tol) return v;
    }
    throw NumericalError("policy evaluation did not converge");
}

XRLDataset generate_dataset(const GridworldMDP& mdp, const SyntheticPolicy& policy, int episodes, std::uint64_t seed) {
    if (episodes < 1) throw InputError("episodes must be at least 1");
    const auto v_pi = policy_evaluation(mdp, policy);
    Rng rng(seed);

    double w[kLatentDims][2];
    double bias[kLatentDims];
    for (auto& row : w) {
        row[0] = rng.normal();
        row[1] = rng.normal();
    }
    for (double& b : bias) b = rng.normal();

    // Pre-computed per-state rows so every record of a state is bit-identical.
    const int n_states = mdp.num_states();
    std::vector<std::array<float, 2>> obs(static_cast<std::size_t>(n_states));
    std::vector<std::array<float, kLatentDims>> lat(static_cast<std::size_t>(n_states));
    std::vector<std::array<float, kNumActions>> probs(static_cast<std::size_t>(n_states));
    for (int s = 0; s < n_states; ++s) {
        const Cell c = mdp.cell_of(s);
        const double ox = mdp.width > 1 ? static_cast<double>(c.x) / (mdp.width - 1) : 0.0;
        const double oy = mdp.height > 1 ? static_cast<double>(c.y) / (mdp.height - 1) : 0.0;
        obs[static_cast<std::size_t>(s)] = {static_cast<float>(ox), static_cast<float>(oy)};
        for (int k = 0; k < kLatentDims; ++k) {
            lat[static_cast<std::size_t>(s)][static_cast<std::size_t>(k)] =
                static_cast<float>(std::tanh(w[k][0] * ox + w[k][1] * oy + bias[k]));
        }
        if (mdp.is_terminal(s)) continue;
        // Non-greedy entries are snapped to multiples of 2^-24 so the greedy
        // entry 1 - sum(others) and every partial sum are exact in float.
        const int g = policy.greedy(s);
        const auto other = static_cast<float>(std::ldexp(std::round(std::ldexp(policy.epsilon / kNumActions, 24)), -24));
        auto& row = probs[static_cast<std::size_t>(s)];
        float rest = 0.0f;
        for (int a = 0; a < kNumActions; ++a) {
            if (a == g) continue;
            row[static_cast<std::size_t>(a)] = other;
            rest += other;
        }
        row[static_cast<std::size_t>(g)] = 1.0f - rest;
    }

    XRLDataset d;
    d.meta.env_id = "gridworld/" + mdp.name;
    d.meta.num_actions = kNumActions;
    d.meta.obs_shape = {2};
    d.meta.discount = mdp.discount;
    d.meta.seed = seed;
    d.meta.generator = fmt::format("xrl-synth epsilon={}", policy.epsilon);

    // The executed move is deterministic given the executed action.
    GridworldMDP exact = mdp;
    exact.slip_prob = 0.0;

    std::vector<float> observations, latents, dist;
    std::vector<float> critic;
    for (int ep = 0; ep < episodes; ++ep) {
        const double u_start = rng.uniform();
        std::size_t start = mdp.start_cells.size() - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < mdp.start_cells.size(); ++i) {
            acc += mdp.start_probs[i];
            if (u_start < acc) {
                start = i;
                break;
            }
        }
        int s = mdp.state_of(mdp.start_cells[start]);
        for (int t = 0;; ++t) {
            const auto pi = policy.probabilities(s);
            const double u_action = rng.uniform();
            int action = kNumActions - 1;
            double cum = 0.0;
            for (int a = 0; a < kNumActions; ++a) {
                cum += pi[static_cast<std::size_t>(a)];
                if (u_action < cum) {
                    action = a;
                    break;
                }
            }
            int executed = action;
            if (rng.uniform() < mdp.slip_prob) executed = static_cast<int>(rng.below(kNumActions));

            const Outcome o = exact.outcomes(s, executed).front();

            const auto si = static_cast<std::size_t>(s);
            observations.insert(observations.end(), obs[si].begin(), obs[si].end());
            latents.insert(latents.end(), lat[si].begin(), lat[si].end());
            dist.insert(dist.end(), probs[si].begin(), probs[si].end());
            critic.push_back(static_cast<float>(v_pi[si]));
            d.actions.push_back(action);
            d.rewards.push_back(static_cast<float>(o.reward));
            d.steps.push_back(t);

            const bool terminal = mdp.is_terminal(o.next_state);
            const bool timeout = !terminal && t + 1 >= mdp.max_episode_length;
            d.dones.push_back(terminal || timeout ? 1 : 0);
            if (timeout) {
                d.meta.timeout_episodes.push_back(ep);
                d.meta.time_limit_truncations = true;
            }
            if (terminal || timeout) break;
            s = o.next_state;
        }
    }

    const std::size_t n = d.actions.size();
    d.observations = Matrix<float>(n, 2, std::move(observations));
    d.latents = Matrix<float>(n, kLatentDims, std::move(latents));
    d.dist_probs = Matrix<float>(n, kNumActions, std::move(dist));
    d.critic_values = std::move(critic);
    return d;
}

}  // namespace xrl::synth
