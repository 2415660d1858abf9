#include "support/fixtures.hpp"

#include <fstream>
#include <iterator>

#include "xrl/rng.hpp"

namespace xrl::testing {

XRLDataset random_dataset(std::uint64_t seed) {
    Rng rng(seed);
    XRLDataset d;
    const int actions = 2 + static_cast<int>(rng.below(5));
    const int obs_dim = 1 + static_cast<int>(rng.below(6));
    const bool with_latents = rng.uniform() < 0.7;
    const bool with_probs = rng.uniform() < 0.7;
    const bool with_critic = rng.uniform() < 0.5;
    const int latent_dim = 1 + static_cast<int>(rng.below(8));
    d.meta.env_id = "random/" + std::to_string(seed);
    d.meta.num_actions = actions;
    d.meta.obs_shape = {obs_dim};
    d.meta.discount = 0.9 + 0.1 * rng.uniform();
    d.meta.seed = seed;
    d.meta.generator = "fixture";

    std::vector<float> obs, lat, probs, critic;
    const int episodes = 1 + static_cast<int>(rng.below(6));
    for (int e = 0; e < episodes; ++e) {
        const int len = 1 + static_cast<int>(rng.below(40));
        for (int t = 0; t < len; ++t) {
            for (int k = 0; k < obs_dim; ++k) obs.push_back(static_cast<float>(rng.normal()));
            for (int k = 0; k < latent_dim; ++k) lat.push_back(static_cast<float>(rng.normal()));
            std::vector<double> row(static_cast<std::size_t>(actions));
            double total = 0.0;
            for (auto& p : row) total += (p = rng.uniform() + 1e-3);
            for (auto p : row) probs.push_back(static_cast<float>(p / total));
            critic.push_back(static_cast<float>(rng.normal()));
            d.actions.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(actions))));
            d.rewards.push_back(static_cast<float>(rng.normal()));
            d.dones.push_back(t + 1 == len ? 1 : 0);
            d.steps.push_back(t);
        }
    }
    const std::size_t n = d.actions.size();
    d.observations = Matrix<float>(n, static_cast<std::size_t>(obs_dim), std::move(obs));
    if (with_latents) d.latents = Matrix<float>(n, static_cast<std::size_t>(latent_dim), std::move(lat));
    if (with_probs) d.dist_probs = Matrix<float>(n, static_cast<std::size_t>(actions), std::move(probs));
    if (with_critic) d.critic_values = std::move(critic);
    return d;
}

XRLDataset episodes_dataset(const std::vector<std::vector<float>>& rewards, double discount, int num_actions) {
    XRLDataset d;
    d.meta.env_id = "fixture";
    d.meta.num_actions = num_actions;
    d.meta.obs_shape = {1};
    d.meta.discount = discount;
    std::vector<float> obs;
    for (const auto& ep : rewards) {
        for (std::size_t t = 0; t < ep.size(); ++t) {
            obs.push_back(static_cast<float>(t));
            d.actions.push_back(0);
            d.rewards.push_back(ep[t]);
            d.dones.push_back(t + 1 == ep.size() ? 1 : 0);
            d.steps.push_back(static_cast<std::int32_t>(t));
        }
    }
    d.observations = Matrix<float>(d.actions.size(), 1, std::move(obs));
    return d;
}

RealMatrix gaussian_blobs(const std::vector<std::vector<double>>& centres, int per_blob, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t dim = centres.front().size();
    RealMatrix x(centres.size() * static_cast<std::size_t>(per_blob), dim);
    std::size_t r = 0;
    for (const auto& c : centres) {
        for (int i = 0; i < per_blob; ++i, ++r) {
            for (std::size_t d = 0; d < dim; ++d) x(r, d) = c[d] + rng.normal();
        }
    }
    return x;
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("xrl_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace xrl::testing
