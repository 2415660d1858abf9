#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "support/fixtures.hpp"
#include "xrl/dataset.hpp"
#include "xrl/errors.hpp"
#include "xrl/synth.hpp"
#include "xrl/xrld.hpp"

namespace {

using namespace xrl;
using xrl::testing::episodes_dataset;
using xrl::testing::random_dataset;
using xrl::testing::read_bytes;
using xrl::testing::scratch_dir;

bool has(const ValidationReport& r, ViolationKind kind, std::size_t index) {
    for (const auto& v : r.violations) {
        if (v.kind == kind && v.index == index) return true;
    }
    return false;
}

}  // namespace

TEST(Dataset, SaveLoadRoundTrip) {
    const auto dir = scratch_dir("dataset_rt");
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = random_dataset(seed);
        save_dataset(d, dir / "a.xrld");
        const auto back = load_dataset(dir / "a.xrld");
        EXPECT_EQ(back, d) << "seed " << seed;
        save_dataset(back, dir / "b.xrld");
        EXPECT_EQ(read_bytes(dir / "a.xrld"), read_bytes(dir / "b.xrld"));
    }
}

TEST(Dataset, HeaderListsOnlyPresentArrays) {
    const auto dir = scratch_dir("dataset_hdr");
    auto d = episodes_dataset({{1, 1, 1}}, 1.0);
    save_dataset(d, dir / "d.xrld");
    const auto header = xrld::read_header(dir / "d.xrld");
    std::vector<std::string> names;
    for (const auto& a : header.at("arrays")) names.push_back(a.at("name"));
    EXPECT_EQ(names, (std::vector<std::string>{"observations", "actions", "rewards", "dones", "steps"}));
    for (const char* key : {"env_id", "num_actions", "obs_shape", "discount", "seed", "generator"}) {
        EXPECT_TRUE(header.at("meta").contains(key)) << key;
    }
}

TEST(Dataset, SynthShapes) {
    const auto mdp = synth::make_layout("openfield-8x8");
    const synth::SyntheticPolicy policy{synth::value_iteration(mdp).q, 0.2};
    auto d = synth::generate_dataset(mdp, policy, 200, 3);
    const auto dir = scratch_dir("dataset_shapes");
    save_dataset(d, dir / "s.xrld");
    const auto back = load_dataset(dir / "s.xrld");
    const auto n = back.size();
    EXPECT_EQ(back.observations.rows(), n);
    EXPECT_EQ(back.observations.cols(), 2u);
    ASSERT_TRUE(back.dist_probs);
    EXPECT_EQ(back.dist_probs->cols(), 4u);
    EXPECT_EQ(back.num_actions(), 4);
}

TEST(Dataset, LoadRejectsBadMagic) {
    const auto dir = scratch_dir("dataset_magic");
    save_dataset(episodes_dataset({{1}}, 1.0), dir / "m.xrld");
    auto bytes = read_bytes(dir / "m.xrld");
    bytes[3] = 'X';
    {
        std::ofstream f(dir / "m.xrld", std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_THROW(load_dataset(dir / "m.xrld"), FormatError);
}

TEST(Dataset, ValidSyntheticHasNoViolations) {
    const auto mdp = synth::make_layout("cliffwalk-4x4");
    const synth::SyntheticPolicy policy{synth::value_iteration(mdp).q, 0.3};
    EXPECT_TRUE(validate(synth::generate_dataset(mdp, policy, 50, 1)).ok());
}

TEST(Dataset, ProbabilityRowViolation) {
    auto d = episodes_dataset({{0, 0, 0}}, 1.0, 2);
    d.dist_probs = Matrix<float>(3, 2, std::vector<float>{0.5f, 0.5f, 0.4f, 0.4f, 1.0f, 0.0f});
    const auto r = validate(d);
    EXPECT_TRUE(has(r, ViolationKind::probability_row, 1));
    EXPECT_EQ(r.violations.size(), 1u);
}

TEST(Dataset, StepSequenceViolation) {
    auto d = episodes_dataset({{0, 0, 0}}, 1.0);
    d.steps = {0, 1, 3};
    EXPECT_TRUE(has(validate(d), ViolationKind::step_sequence, 2));
}

TEST(Dataset, ActionRangeViolation) {
    auto d = episodes_dataset({{0, 0}}, 1.0, 2);
    d.actions[1] = 2;
    EXPECT_TRUE(has(validate(d), ViolationKind::action_range, 1));
}

TEST(Dataset, TruncatedTailIsFlaggedAndDropped) {
    auto d = episodes_dataset({{1, 2}, {3, 4, 5}}, 1.0);
    d.dones.back() = 0;
    const auto r = validate(d);
    ASSERT_TRUE(r.truncated_tail_start);
    EXPECT_EQ(*r.truncated_tail_start, 2u);
    EXPECT_TRUE(r.only_truncated_tail());
    EXPECT_THROW(derive(d), PreconditionError);
    const auto cut = drop_truncated_tail(d, r);
    EXPECT_EQ(cut.size(), 2u);
    EXPECT_TRUE(validate(cut).ok());
}

TEST(Dataset, ReturnsToGoClosedForms) {
    const auto a = derive(episodes_dataset({{1, 1, 1}}, 1.0));
    EXPECT_EQ(a.returns_to_go, (std::vector<double>{3, 2, 1}));
    const auto b = derive(episodes_dataset({{0, 0, 10}}, 0.5));
    EXPECT_EQ(b.returns_to_go, (std::vector<double>{2.5, 5, 10}));
}

TEST(Dataset, DerivedIndicesAndRecursion) {
    const auto d = random_dataset(42);
    const auto f = derive(d);
    EXPECT_EQ(f.start_indices.size(), f.done_indices.size());
    const double g = d.discount();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.dones[i]) {
            EXPECT_DOUBLE_EQ(f.returns_to_go[i], d.rewards[i]);
        } else {
            EXPECT_NEAR(f.returns_to_go[i] - d.rewards[i], g * f.returns_to_go[i + 1], 1e-9);
            EXPECT_EQ(f.episode_ids[i], f.episode_ids[i + 1]);
        }
    }
}

TEST(Dataset, GreedyReturnMatchesValueIteration) {
    const auto mdp = synth::make_layout("cliffwalk-4x4");
    const auto vi = synth::value_iteration(mdp);
    const auto d = synth::generate_dataset(mdp, {vi.q, 0.0}, 3, 9);
    const auto f = derive(d);
    const int start = mdp.state_of(mdp.start_cells.front());
    for (auto s : f.start_indices) EXPECT_NEAR(f.returns_to_go[s], vi.values[static_cast<std::size_t>(start)], 1e-5);
}
