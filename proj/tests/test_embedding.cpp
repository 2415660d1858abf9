#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "xrl/embedding.hpp"
#include "xrl/errors.hpp"
#include "xrl/rng.hpp"

namespace {

using namespace xrl;
using xrl::testing::gaussian_blobs;

RealMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    RealMatrix m(n, d);
    for (auto& v : m.values()) v = scale * rng.normal();
    return m;
}

RealMatrix full(const tsne::PairMatrix& p) {
    const auto n = p.points();
    RealMatrix f(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) f(i, j) = f(j, i) = p.at(i, j);
    }
    return f;
}

// Separation test shared with the acceptance binary's criterion.
bool blobs_separate(const RealMatrix& y, std::size_t per_blob) {
    double max_intra = 0.0;
    double min_inter = INFINITY;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        for (std::size_t j = i + 1; j < y.rows(); ++j) {
            const double d = std::sqrt(squared_distance(y.row(i), y.row(j)));
            if ((i < per_blob) == (j < per_blob)) {
                max_intra = std::max(max_intra, d);
            } else {
                min_inter = std::min(min_inter, d);
            }
        }
    }
    return min_inter > max_intra;
}

}  // namespace

TEST(FeatureMatrix, ShapesAndZScore) {
    XRLDataset d = xrl::testing::random_dataset(3);
    while (!d.latents || !d.dist_probs || !d.critic_values) d = xrl::testing::random_dataset(d.meta.seed + 1);
    const auto lat = build_feature_matrix(d, {"latents"});
    EXPECT_EQ(lat.rows(), d.size());
    EXPECT_EQ(lat.cols(), d.latents->cols());
    const auto pc = build_feature_matrix(d, {"dist_probs", "critic_values"});
    EXPECT_EQ(pc.cols(), static_cast<std::size_t>(d.num_actions()) + 1);
    for (std::size_t c = 0; c < lat.cols(); ++c) {
        double mean = 0, var = 0;
        for (std::size_t r = 0; r < lat.rows(); ++r) mean += lat(r, c);
        mean /= static_cast<double>(lat.rows());
        for (std::size_t r = 0; r < lat.rows(); ++r) var += (lat(r, c) - mean) * (lat(r, c) - mean);
        var /= static_cast<double>(lat.rows());
        EXPECT_NEAR(mean, 0.0, 1e-9);
        EXPECT_NEAR(var, 1.0, 1e-9);
    }
}

TEST(FeatureMatrix, ConstantColumnIsZero) {
    auto d = xrl::testing::episodes_dataset({{1, 1, 1, 1}}, 1.0);
    const auto x = build_feature_matrix(d, {"rewards", "steps"});
    for (std::size_t r = 0; r < x.rows(); ++r) EXPECT_EQ(x(r, 0), 0.0);
    EXPECT_NE(x(0, 1), 0.0);
}

TEST(FeatureMatrix, UnknownOrAbsentArrayIsConfigError) {
    auto d = xrl::testing::episodes_dataset({{1, 1}}, 1.0);
    EXPECT_THROW(build_feature_matrix(d, {"pixels"}), ConfigError);
    EXPECT_THROW(build_feature_matrix(d, {"latents"}), ConfigError);
}

TEST(Tsne, GradientMatchesFiniteDifferences) {
    const auto x = random_matrix(10, 4, 11);
    const auto aff = tsne::joint_affinities(x, 3.0);
    const auto y = random_matrix(10, 2, 12, 1.0);
    const auto analytic = tsne::kl_gradient(aff.joint, y, 1.0);
    const auto numeric = xrl::testing::finite_difference_gradient(full(aff.joint), y, 1e-5);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        num += std::pow(analytic.values()[k] - numeric.values()[k], 2);
        den += std::pow(numeric.values()[k], 2);
    }
    EXPECT_LE(std::sqrt(num / den), 1e-4);
}

TEST(Tsne, KlMatchesReferenceDefinition) {
    const auto x = random_matrix(12, 3, 5);
    const auto aff = tsne::joint_affinities(x, 3.0);
    const auto y = random_matrix(12, 2, 6);
    EXPECT_NEAR(tsne::kl_divergence(aff.joint, y), xrl::testing::reference_kl(full(aff.joint), y), 1e-10);
}

TEST(Tsne, ConditionalEntropyHitsPerplexity) {
    const auto x = random_matrix(200, 5, 21);
    const double perplexity = 30.0;
    std::vector<double> sq(200), row(200);
    for (std::size_t i = 0; i < 200; ++i) {
        for (std::size_t j = 0; j < 200; ++j) sq[j] = squared_distance(x.row(i), x.row(j));
        tsne::conditional_row(sq, i, perplexity, row);
        double h = 0.0, total = 0.0;
        for (std::size_t j = 0; j < 200; ++j) {
            total += row[j];
            if (row[j] > 0) h -= row[j] * std::log2(row[j]);
        }
        EXPECT_EQ(row[i], 0.0);
        EXPECT_NEAR(total, 1.0, 1e-12);
        EXPECT_NEAR(h, std::log2(perplexity), 1e-3) << "point " << i;
    }
}

TEST(Tsne, JointAffinitiesInvariants) {
    const auto x = random_matrix(40, 3, 2);
    const auto aff = tsne::joint_affinities(x, 10.0);
    double total = 0.0;
    for (double p : aff.joint.values()) {
        EXPECT_GE(p, tsne::kAffinityFloor);
        total += 2.0 * p;  // upper triangle counts for (i, j) and (j, i)
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Tsne, SeparatesTwoBlobs) {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto x = gaussian_blobs({std::vector<double>(5, 0.0), std::vector<double>(5, 20.0 / std::sqrt(5.0))}, 50,
                                      100 + seed);
        TsneOptions opt;
        opt.seed = seed;
        opt.iterations = 500;
        ok += blobs_separate(tsne_embed(x, opt).coords, 50) ? 1 : 0;
    }
    EXPECT_EQ(ok, 3);
}

TEST(Tsne, DeterministicCenteredFinite) {
    const auto x = random_matrix(60, 4, 8);
    TsneOptions opt;
    opt.seed = 4;
    opt.iterations = 300;
    const auto a = tsne_embed(x, opt);
    const auto b = tsne_embed(x, opt);
    EXPECT_EQ(a.coords, b.coords);
    EXPECT_GT(a.final_kl, 0.0);
    for (std::size_t d = 0; d < 2; ++d) {
        double mean = 0.0;
        for (std::size_t r = 0; r < 60; ++r) {
            EXPECT_TRUE(std::isfinite(a.coords(r, d)));
            mean += a.coords(r, d);
        }
        EXPECT_NEAR(mean / 60.0, 0.0, 1e-6);
    }
    EXPECT_DOUBLE_EQ(a.learning_rate, 50.0);
}

TEST(Tsne, KlTailNonIncreasing) {
    const auto x = gaussian_blobs({{0, 0, 0}, {8, 8, 8}, {-8, 8, 0}}, 40, 3);
    TsneOptions opt;
    opt.seed = 1;
    opt.kl_stride = 1;
    const auto e = tsne_embed(x, opt);
    ASSERT_GE(e.kl_trace.size(), 100u);
    for (std::size_t i = 1; i < e.kl_trace.size(); ++i) {
        EXPECT_LE(e.kl_trace[i].second, e.kl_trace[i - 1].second + 1e-3) << "iteration " << e.kl_trace[i].first;
    }
}

TEST(Tsne, InputErrors) {
    EXPECT_THROW(tsne_embed(random_matrix(3, 2, 1)), InputError);
    auto x = random_matrix(10, 2, 1);
    x(4, 1) = NAN;
    EXPECT_THROW(tsne_embed(x), InputError);
}

TEST(Tsne, PerplexityClamped) {
    TsneOptions opt;
    opt.iterations = 50;
    const auto e = tsne_embed(random_matrix(10, 2, 1), opt);
    EXPECT_DOUBLE_EQ(e.perplexity, 3.0);
}

TEST(Tsne, SaveLoadEmbedding) {
    const auto dir = xrl::testing::scratch_dir("embed_io");
    TsneOptions opt;
    opt.iterations = 50;
    auto e = tsne_embed(random_matrix(20, 3, 1), opt);
    e.feature_spec = {"latents"};
    save_embedding(e, dir / "e.xrld");
    const auto back = load_embedding(dir / "e.xrld");
    EXPECT_EQ(back.feature_spec, e.feature_spec);
    EXPECT_EQ(back.coords.rows(), 20u);
    EXPECT_NEAR(back.coords(3, 1), e.coords(3, 1), 1e-6 * std::max(1.0, std::fabs(e.coords(3, 1))));
    EXPECT_EQ(back.iterations, 50);
}
