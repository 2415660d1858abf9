#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace xrl::testing {

double reference_kl(const RealMatrix& p, const RealMatrix& y) {
    const std::size_t n = y.rows();
    RealMatrix w(n, n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            w(i, j) = 1.0 / (1.0 + dx * dx + dy * dy);
            z += w(i, j);
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            kl += p(i, j) * std::log(p(i, j) / (w(i, j) / z));
        }
    }
    return kl;
}

RealMatrix finite_difference_gradient(const RealMatrix& p, const RealMatrix& y, double h) {
    RealMatrix g(y.rows(), y.cols(), 0.0);
    RealMatrix probe = y;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t d = 0; d < y.cols(); ++d) {
            probe(i, d) = y(i, d) + h;
            const double up = reference_kl(p, probe);
            probe(i, d) = y(i, d) - h;
            const double down = reference_kl(p, probe);
            probe(i, d) = y(i, d);
            g(i, d) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

double brute_force_kmeans_optimum(const RealMatrix& x, int k) {
    const std::size_t n = x.rows();
    std::vector<int> assign(n, 0);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        std::vector<int> sizes(static_cast<std::size_t>(k), 0);
        for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
        if (std::all_of(sizes.begin(), sizes.end(), [](int s) { return s > 0; })) {
            double inertia = 0.0;
            for (int c = 0; c < k; ++c) {
                std::vector<double> mean(x.cols(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    if (assign[i] != c) continue;
                    for (std::size_t d = 0; d < x.cols(); ++d) mean[d] += x(i, d);
                }
                for (double& m : mean) m /= sizes[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < n; ++i) {
                    if (assign[i] != c) continue;
                    for (std::size_t d = 0; d < x.cols(); ++d) inertia += (x(i, d) - mean[d]) * (x(i, d) - mean[d]);
                }
            }
            best = std::min(best, inertia);
        }
        std::size_t pos = 0;
        while (pos < n && ++assign[pos] == k) assign[pos++] = 0;
        if (pos == n) break;
    }
    return best;
}

namespace {

void extend(int num_nodes, const std::function<bool(int, int)>& has_edge, int to, int max_hops,
            std::vector<int>& seq, std::vector<std::vector<int>>& out) {
    // Close the sequence at `to` if possible, then try every unused intermediate.
    const int last = seq.back();
    const int hops = static_cast<int>(seq.size()) - 1;
    if (hops + 1 <= max_hops && has_edge(last, to)) {
        auto path = seq;
        path.push_back(to);
        out.push_back(path);
    }
    if (hops + 2 > max_hops) return;
    for (int v = 0; v < num_nodes; ++v) {
        if (v == to || std::find(seq.begin(), seq.end(), v) != seq.end()) continue;
        if (!has_edge(last, v)) continue;
        seq.push_back(v);
        extend(num_nodes, has_edge, to, max_hops, seq, out);
        seq.pop_back();
    }
}

}  // namespace

std::vector<std::vector<int>> enumerate_simple_paths(int num_nodes, const std::function<bool(int, int)>& has_edge,
                                                     int from, int to, int max_hops) {
    std::vector<std::vector<int>> out;
    if (from == to) return {{from}};
    std::vector<int> seq{from};
    extend(num_nodes, has_edge, to, max_hops, seq, out);
    return out;
}

std::vector<double> finite_horizon_values(const synth::GridworldMDP& mdp, int horizon) {
    if (mdp.slip_prob != 0.0) throw std::invalid_argument("finite_horizon_values needs slip_prob == 0");
    auto terminal_reward = [&](int x, int y) -> std::pair<bool, double> {
        for (std::size_t i = 0; i < mdp.goal_cells.size(); ++i) {
            if (mdp.goal_cells[i].x == x && mdp.goal_cells[i].y == y) return {true, mdp.goal_rewards[i]};
        }
        for (std::size_t i = 0; i < mdp.cliff_cells.size(); ++i) {
            if (mdp.cliff_cells[i].x == x && mdp.cliff_cells[i].y == y) return {true, mdp.cliff_penalties[i]};
        }
        return {false, 0.0};
    };
    std::map<std::pair<int, int>, double> memo;
    std::function<double(int, int, int)> value = [&](int x, int y, int steps_left) -> double {
        if (terminal_reward(x, y).first || steps_left == 0) return 0.0;
        const auto key = std::make_pair(y * mdp.width + x, steps_left);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        // up, right, down, left
        const int dx[4] = {0, 1, 0, -1};
        const int dy[4] = {-1, 0, 1, 0};
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < 4; ++a) {
            int nx = x + dx[a];
            int ny = y + dy[a];
            if (nx < 0 || ny < 0 || nx >= mdp.width || ny >= mdp.height) {
                nx = x;
                ny = y;
            }
            const auto [term, bonus] = terminal_reward(nx, ny);
            const double r = mdp.step_penalty + (term ? bonus : 0.0);
            best = std::max(best, r + mdp.discount * value(nx, ny, steps_left - 1));
        }
        memo[key] = best;
        return best;
    };
    std::vector<double> v(static_cast<std::size_t>(mdp.width * mdp.height), 0.0);
    for (int y = 0; y < mdp.height; ++y) {
        for (int x = 0; x < mdp.width; ++x) v[static_cast<std::size_t>(y * mdp.width + x)] = value(x, y, horizon);
    }
    return v;
}

}  // namespace xrl::testing
