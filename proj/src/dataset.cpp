#include "xrl/dataset.hpp"

#include <cmath>

#include "xrl/errors.hpp"
#include "xrl/xrld.hpp"

namespace xrl {
namespace {

constexpr double kProbTolerance = 1e-5;

nlohmann::json meta_to_json(const DatasetMeta& m) {
    nlohmann::json j;
    j["env_id"] = m.env_id;
    j["num_actions"] = m.num_actions;
    j["obs_shape"] = m.obs_shape;
    j["discount"] = m.discount;
    j["seed"] = m.seed;
    j["generator"] = m.generator;
    if (m.time_limit_truncations) {
        j["time_limit_truncations"] = true;
    }
    if (!m.timeout_episodes.empty()) {
        j["timeout_episodes"] = m.timeout_episodes;
    }
    return j;
}

DatasetMeta meta_from_json(const nlohmann::json& j) {
    DatasetMeta m;
    try {
        m.env_id = j.at("env_id").get<std::string>();
        m.num_actions = j.at("num_actions").get<int>();
        m.obs_shape = j.at("obs_shape").get<std::vector<std::int64_t>>();
        m.discount = j.at("discount").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.generator = j.at("generator").get<std::string>();
        m.time_limit_truncations = j.value("time_limit_truncations", false);
        m.timeout_episodes = j.value("timeout_episodes", std::vector<std::int64_t>{});
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset meta is incomplete: ") + e.what());
    }
    return m;
}

void require_rows(const xrld::Array& a, std::uint64_t n) {
    if (a.shape.empty() || a.shape[0] != n) {
        throw CorruptionError("array '" + a.name + "' has " + (a.shape.empty() ? "no" : std::to_string(a.shape[0])) +
                              " rows, expected " + std::to_string(n));
    }
}

}  // namespace

void XRLDataset::check_shapes() const {
    const auto n = size();
    auto fail = [](const std::string& what) { throw InputError("dataset shape mismatch: " + what); };
    if (observations.rows() != n) fail("observations");
    if (rewards.size() != n) fail("rewards");
    if (dones.size() != n) fail("dones");
    if (steps.size() != n) fail("steps");
    if (latents && latents->rows() != n) fail("latents");
    if (dist_probs && (dist_probs->rows() != n || dist_probs->cols() != static_cast<std::size_t>(meta.num_actions))) {
        fail("dist_probs");
    }
    if (critic_values && critic_values->size() != n) fail("critic_values");
}

void save_dataset(const XRLDataset& d, const std::filesystem::path& path) {
    d.check_shapes();
    const std::uint64_t n = d.size();
    xrld::Container c;
    c.meta = meta_to_json(d.meta);
    c.arrays.push_back(xrld::make_matrix("observations", d.observations));
    c.arrays.push_back(xrld::make_array("actions", std::span<const std::int32_t>(d.actions), {n}));
    c.arrays.push_back(xrld::make_array("rewards", std::span<const float>(d.rewards), {n}));
    c.arrays.push_back(xrld::make_array("dones", std::span<const std::uint8_t>(d.dones), {n}));
    c.arrays.push_back(xrld::make_array("steps", std::span<const std::int32_t>(d.steps), {n}));
    if (d.latents) c.arrays.push_back(xrld::make_matrix("latents", *d.latents));
    if (d.dist_probs) c.arrays.push_back(xrld::make_matrix("dist_probs", *d.dist_probs));
    if (d.critic_values) {
        c.arrays.push_back(xrld::make_array("critic_values", std::span<const float>(*d.critic_values), {n}));
    }
    xrld::write_file(c, path);
}

XRLDataset load_dataset(const std::filesystem::path& path) {
    const auto c = xrld::read_file(path);
    XRLDataset d;
    d.meta = meta_from_json(c.meta);

    const auto& actions = c.at("actions");
    const std::uint64_t n = actions.shape.empty() ? 0 : actions.shape[0];
    d.actions = xrld::as_i32(actions);
    require_rows(c.at("observations"), n);
    d.observations = xrld::as_matrix(c.at("observations"));
    require_rows(c.at("rewards"), n);
    d.rewards = xrld::as_f32(c.at("rewards"));
    require_rows(c.at("dones"), n);
    d.dones = xrld::as_u8(c.at("dones"));
    require_rows(c.at("steps"), n);
    d.steps = xrld::as_i32(c.at("steps"));
    if (const auto* a = c.find("latents")) {
        require_rows(*a, n);
        d.latents = xrld::as_matrix(*a);
    }
    if (const auto* a = c.find("dist_probs")) {
        require_rows(*a, n);
        d.dist_probs = xrld::as_matrix(*a);
    }
    if (const auto* a = c.find("critic_values")) {
        require_rows(*a, n);
        d.critic_values = xrld::as_f32(*a);
    }
    return d;
}

std::string to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::shape:
            return "shape";
        case ViolationKind::step_sequence:
            return "step_sequence";
        case ViolationKind::probability_row:
            return "probability_row";
        case ViolationKind::action_range:
            return "action_range";
        case ViolationKind::truncated_tail:
            return "truncated_tail";
        case ViolationKind::discount:
            return "discount";
    }
    return "unknown";
}

bool ValidationReport::only_truncated_tail() const noexcept {
    return violations.size() == 1 && violations.front().kind == ViolationKind::truncated_tail;
}

ValidationReport validate(const XRLDataset& d) {
    ValidationReport report;
    auto add = [&](ViolationKind kind, std::size_t index, std::string message) {
        report.violations.push_back({kind, index, std::move(message)});
    };

    try {
        d.check_shapes();
    } catch (const InputError& e) {
        add(ViolationKind::shape, 0, e.what());
        return report;
    }
    if (d.meta.num_actions < 2) {
        add(ViolationKind::action_range, 0, "num_actions must be at least 2");
    }
    if (!(d.meta.discount > 0.0 && d.meta.discount <= 1.0)) {
        add(ViolationKind::discount, 0, "discount must lie in (0, 1]");
    }

    const std::size_t n = d.size();
    for (std::size_t i = 0; i < n; ++i) {
        const bool after_done = i == 0 || d.dones[i - 1] != 0;
        const std::int32_t expected = after_done ? 0 : d.steps[i - 1] + 1;
        if (d.steps[i] != expected) {
            add(ViolationKind::step_sequence, i,
                "step " + std::to_string(d.steps[i]) + " where " + std::to_string(expected) + " was expected");
        }
        if (d.actions[i] < 0 || d.actions[i] >= d.meta.num_actions) {
            add(ViolationKind::action_range, i, "action " + std::to_string(d.actions[i]) + " out of range");
        }
    }

    if (d.dist_probs) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            bool negative = false;
            for (float p : d.dist_probs->row(i)) {
                sum += p;
                negative = negative || !(p >= 0.0f);
            }
            if (negative || !(std::fabs(sum - 1.0) <= kProbTolerance)) {
                add(ViolationKind::probability_row, i, "action distribution row sums to " + std::to_string(sum));
            }
        }
    }

    if (n > 0 && d.dones[n - 1] == 0) {
        std::size_t start = n - 1;
        while (start > 0 && d.dones[start - 1] == 0 && d.steps[start] != 0) {
            --start;
        }
        report.truncated_tail_start = start;
        add(ViolationKind::truncated_tail, start,
            "trailing episode starting at " + std::to_string(start) + " has no done flag");
    }
    return report;
}

XRLDataset drop_truncated_tail(const XRLDataset& d, const ValidationReport& report) {
    if (!report.truncated_tail_start) {
        return d;
    }
    const std::size_t cut = *report.truncated_tail_start;
    auto head_rows = [cut](const Matrix<float>& m) {
        return Matrix<float>(cut, m.cols(),
                             std::vector<float>(m.values().begin(), m.values().begin() + static_cast<std::ptrdiff_t>(cut * m.cols())));
    };
    auto head = [cut](const auto& v) { return std::decay_t<decltype(v)>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(cut)); };

    XRLDataset out;
    out.meta = d.meta;
    out.observations = head_rows(d.observations);
    out.actions = head(d.actions);
    out.rewards = head(d.rewards);
    out.dones = head(d.dones);
    out.steps = head(d.steps);
    if (d.latents) out.latents = head_rows(*d.latents);
    if (d.dist_probs) out.dist_probs = head_rows(*d.dist_probs);
    if (d.critic_values) out.critic_values = head(*d.critic_values);
    return out;
}

DerivedFields derive(const XRLDataset& d) {
    const std::size_t n = d.size();
    if (n == 0) {
        throw PreconditionError("dataset is empty");
    }
    if (d.dones[n - 1] == 0) {
        throw PreconditionError("dataset ends with a truncated episode; validate and drop the tail first");
    }
    DerivedFields out;
    out.returns_to_go.assign(n, 0.0);
    out.episode_ids.assign(n, 0);

    std::int32_t episode = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (d.steps[i] == 0) {
            out.start_indices.push_back(i);
        }
        if (d.dones[i] != 0) {
            out.done_indices.push_back(i);
        }
        out.episode_ids[i] = episode;
        if (d.dones[i] != 0) {
            ++episode;
        }
    }

    const double gamma = d.meta.discount;
    double g = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        if (d.dones[i] != 0) {
            g = 0.0;
        }
        g = static_cast<double>(d.rewards[i]) + gamma * g;
        out.returns_to_go[i] = g;
    }
    return out;
}

}  // namespace xrl
