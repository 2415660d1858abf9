// Acceptance checks, one line per criterion: "PASS|FAIL <id> <name> : <detail>".
// Exit status is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "support/dot_grammar.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "xrl/analysis.hpp"
#include "xrl/clustering.hpp"
#include "xrl/dataset.hpp"
#include "xrl/embedding.hpp"
#include "xrl/render.hpp"
#include "xrl/rng.hpp"
#include "xrl/samdp.hpp"
#include "xrl/synth.hpp"

namespace {

using namespace xrl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// -- 1 ------------------------------------------------------------------------
Outcome format_round_trip() {
    const auto t0 = Clock::now();
    const auto dir = xrl::testing::scratch_dir("acc_roundtrip");
    int identical = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto d = xrl::testing::random_dataset(1000 + seed);
        save_dataset(d, dir / "a.xrld");
        const auto back = load_dataset(dir / "a.xrld");
        save_dataset(back, dir / "b.xrld");
        if (back == d && xrl::testing::read_bytes(dir / "a.xrld") == xrl::testing::read_bytes(dir / "b.xrld")) {
            ++identical;
        }
    }
    const double secs = seconds_since(t0);
    return {identical == 20 && secs < 10.0, fmt::format("{}/20 byte-identical, {:.2f} s (limit 10 s)", identical, secs)};
}

// -- 2 ------------------------------------------------------------------------
Outcome return_to_go_oracle() {
    const auto t0 = Clock::now();
    auto mdp = synth::make_layout("cliffwalk-4x4");
    mdp.slip_prob = 0.0;
    const auto vi = synth::value_iteration(mdp);
    const synth::SyntheticPolicy pi{vi.q, 0.0};
    const auto v_pi = synth::policy_evaluation(mdp, pi);
    const auto d = synth::generate_dataset(mdp, pi, 200, 5);
    const auto f = derive(d);
    std::set<std::int64_t> timeouts(d.meta.timeout_episodes.begin(), d.meta.timeout_episodes.end());
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (timeouts.count(f.episode_ids[i])) continue;
        const int x = static_cast<int>(std::lround(d.observations(i, 0) * (mdp.width - 1)));
        const int y = static_cast<int>(std::lround(d.observations(i, 1) * (mdp.height - 1)));
        worst = std::max(worst, std::fabs(f.returns_to_go[i] - v_pi[static_cast<std::size_t>(y * mdp.width + x)]));
        ++checked;
    }
    const double secs = seconds_since(t0);
    return {checked > 0 && worst <= 1e-5 && secs < 5.0,
            fmt::format("{} steps, max |G - V^pi| = {:.3g} (tol 1e-5), {:.2f} s (limit 5 s)", checked, worst, secs)};
}

// -- 3 ------------------------------------------------------------------------
RealMatrix full(const tsne::PairMatrix& p) {
    RealMatrix m(p.points(), p.points(), 0.0);
    for (std::size_t i = 0; i < p.points(); ++i) {
        for (std::size_t j = i + 1; j < p.points(); ++j) m(i, j) = m(j, i) = p.at(i, j);
    }
    return m;
}

Outcome tsne_correctness() {
    const auto t0 = Clock::now();
    Rng rng(3);
    // (a) gradient
    RealMatrix x(10, 5), y(10, 2);
    for (auto& v : x.values()) v = rng.normal();
    for (auto& v : y.values()) v = rng.normal();
    const auto aff = tsne::joint_affinities(x, 3.0);
    const auto g = tsne::kl_gradient(aff.joint, y, 1.0);
    const auto fd = xrl::testing::finite_difference_gradient(full(aff.joint), y, 1e-5);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        num += std::pow(g.values()[k] - fd.values()[k], 2);
        den += std::pow(fd.values()[k], 2);
    }
    const double rel = std::sqrt(num / den);

    // (b) entropy of every conditional row
    const std::size_t n = 500;
    RealMatrix pts(n, 6);
    for (auto& v : pts.values()) v = rng.normal();
    std::vector<double> sq(n), row(n);
    double worst_h = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) sq[j] = squared_distance(pts.row(i), pts.row(j));
        tsne::conditional_row(sq, i, 30.0, row);
        double h = 0.0;
        for (double p : row) {
            if (p > 0) h -= p * std::log2(p);
        }
        worst_h = std::max(worst_h, std::fabs(h - std::log2(30.0)));
    }

    // (c) blob separation at 20 sigma
    int separated = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::vector<double> far(10, 0.0);
        far[0] = 20.0;
        const auto blobs = xrl::testing::gaussian_blobs({std::vector<double>(10, 0.0), far}, 50, 500 + seed);
        TsneOptions opt;
        opt.seed = seed;
        const auto e = tsne_embed(blobs, opt);
        double max_intra = 0.0, min_inter = INFINITY;
        for (std::size_t i = 0; i < 100; ++i) {
            for (std::size_t j = i + 1; j < 100; ++j) {
                const double dd = std::sqrt(squared_distance(e.coords.row(i), e.coords.row(j)));
                if ((i < 50) == (j < 50)) {
                    max_intra = std::max(max_intra, dd);
                } else {
                    min_inter = std::min(min_inter, dd);
                }
            }
        }
        separated += min_inter > max_intra ? 1 : 0;
    }
    const double secs = seconds_since(t0);
    const bool ok = rel <= 1e-4 && worst_h <= 1e-3 && separated >= 9 && secs < 60.0;
    return {ok, fmt::format("grad rel err {:.2e} (<=1e-4), max |H - log2 perp| {:.2e} (<=1e-3), "
                            "blobs separated {}/10 (>=9), {:.2f} s (limit 60 s)",
                            rel, worst_h, separated, secs)};
}

// -- 4 ------------------------------------------------------------------------
Outcome kmeans_properties() {
    Rng rng(44);
    int monotone = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const auto n = 10 + rng.below(190);
        const auto dim = 1 + rng.below(5);
        RealMatrix x(n, dim);
        for (auto& v : x.values()) v = rng.normal() * (1.0 + 4.0 * rng.uniform());
        const int k = 1 + static_cast<int>(rng.below(std::min<std::uint64_t>(n, 12)));
        const auto r = kmeans(x, k, static_cast<std::uint64_t>(inst));
        bool ok = true;
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) ok &= r.inertia_history[i] <= r.inertia_history[i - 1];
        monotone += ok ? 1 : 0;
    }
    const RealMatrix line(6, 1, std::vector<double>{0, 1, 2, 10, 11, 12});
    const double optimum = xrl::testing::brute_force_kmeans_optimum(line, 2);
    const double got = kmeans(line, 2, 0).inertia;
    return {monotone == 100 && optimum == 4.0 && got == optimum,
            fmt::format("monotone on {}/100 instances, 6-point inertia {} vs brute force {}", monotone, got, optimum)};
}

// -- 5 ------------------------------------------------------------------------
struct SynthRun {
    XRLDataset d;
    DerivedFields f;
    ClusterAssignment c;
};

SynthRun synth_run(double epsilon, int k, int episodes, std::uint64_t seed) {
    SynthRun r;
    const auto mdp = synth::make_layout("openfield-8x8");
    r.d = synth::generate_dataset(mdp, {synth::value_iteration(mdp).q, epsilon}, episodes, seed);
    r.f = derive(r.d);
    r.c = generate_clusters(r.d, r.f, std::vector<std::string>{"latents"}, k, seed);
    return r;
}

Outcome staged_clustering() {
    const auto r = synth_run(0.2, 5, 150, 21);
    int bad_order = 0;
    for (int id = 0; id < r.c.num_clusters(); ++id) {
        const auto expect = id < r.c.k_intermediate                   ? Stage::intermediate
                            : id < r.c.k_intermediate + r.c.n_initial ? Stage::initial
                                                                      : Stage::terminal;
        bad_order += r.c.stage_of[static_cast<std::size_t>(id)] == expect ? 0 : 1;
    }
    std::size_t bad_start = 0, bad_done = 0;
    for (std::size_t i = 0; i < r.d.size(); ++i) {
        const auto st = r.c.stage_of[static_cast<std::size_t>(r.c.labels[i])];
        if (r.d.steps[i] == 0 && !r.d.dones[i] && st != Stage::initial) ++bad_start;
        if (r.d.dones[i] && st != Stage::terminal) ++bad_done;
    }
    const auto broken = check_assignment(r.d, r.c);
    return {r.c.k_intermediate == 5 && bad_order == 0 && bad_start == 0 && bad_done == 0 && broken.empty(),
            fmt::format("ids 0-4 intermediate, {}-{} initial, {}-{} terminal; misordered {}, start misses {}, "
                        "done misses {}, invariant breaks {}",
                        r.c.k_intermediate, r.c.k_intermediate + r.c.n_initial - 1,
                        r.c.k_intermediate + r.c.n_initial, r.c.num_clusters() - 1, bad_order, bad_start, bad_done,
                        broken.size())};
}

// -- 6 ------------------------------------------------------------------------
Outcome samdp_stochasticity() {
    const auto r = synth_run(0.3, 8, 200, 6);
    const auto m = build_samdp(r.d, r.f, r.c);
    double worst = 0.0;
    int rows = 0;
    for (int f = 0; f < m.num_clusters(); ++f) {
        for (int a = 0; a < m.num_actions(); ++a) {
            std::int64_t n = 0;
            double total = 0.0;
            for (int t = 0; t < m.num_clusters(); ++t) {
                n += m.count(f, a, t);
                total += m.prob(f, a, t);
            }
            if (n > 0) {
                worst = std::max(worst, std::fabs(total - 1.0));
                ++rows;
            }
        }
    }
    const auto expected = static_cast<std::int64_t>(r.d.size() - r.f.num_episodes());
    return {worst <= 1e-6 && m.total_transitions() == expected,
            fmt::format("{} rows, max |sum - 1| = {:.2e}; transitions {} vs N - episodes = {}", rows, worst,
                        m.total_transitions(), expected)};
}

// -- 7 ------------------------------------------------------------------------
double hop_prob(const SAMDPModel& m, int f, int t) {
    double best = 0.0;
    for (int a = 0; a < m.num_actions(); ++a) best = std::max(best, m.prob(f, a, t));
    return best;
}

// Returns number of mismatching (from, to) queries.
int compare_paths(const SAMDPModel& m, int& queries) {
    int bad = 0;
    const int c = m.num_clusters();
    for (int from = 0; from < c; ++from) {
        if (m.stage(from) == Stage::terminal) continue;
        for (int to = 0; to < c; ++to) {
            if (to == from) continue;
            ++queries;
            const auto oracle = xrl::testing::enumerate_simple_paths(
                c, [&](int a, int b) { return a != b && hop_prob(m, a, b) > 0.0; }, from, to, 6);
            double best = 0.0;
            std::set<std::vector<int>> expected;
            for (const auto& p : oracle) {
                double prob = 1.0;
                for (std::size_t k = 0; k + 1 < p.size(); ++k) prob *= hop_prob(m, p[k], p[k + 1]);
                best = std::max(best, prob);
                expected.insert(p);
            }
            const auto bp = best_path(m, from, to);
            std::set<std::vector<int>> got;
            for (const auto& p : all_paths(m, from, to, 6)) got.insert(p.nodes);
            if (bp.probability != best || bp.reachable != !oracle.empty() || got != expected) ++bad;
        }
    }
    return bad;
}

Outcome path_oracle() {
    // Pick k so that the staged clustering of synthetic data yields exactly 6 clusters.
    const auto mdp = synth::make_layout("cliffwalk-4x4");
    const auto d = synth::generate_dataset(mdp, {synth::value_iteration(mdp).q, 0.3}, 150, 77);
    const auto f = derive(d);
    const auto probe = generate_clusters(d, f, std::vector<std::string>{"latents"}, 1, 77);
    const int k = 6 - probe.n_initial - probe.n_terminal;
    if (k < 1) {
        return {false, fmt::format("boundary stages already use {} clusters; cannot build a 6-cluster SAMDP",
                                   probe.n_initial + probe.n_terminal)};
    }
    const auto c = generate_clusters(d, f, std::vector<std::string>{"latents"}, k, 77);
    const auto m = build_samdp(d, f, c);
    int queries = 0;
    int bad = compare_paths(m, queries);
    return {c.num_clusters() == 6 && bad == 0 && queries > 0,
            fmt::format("{} clusters, {} (from, to) queries, {} mismatches vs exhaustive enumeration (<= 6 hops)",
                        c.num_clusters(), queries, bad)};
}

// -- 8 ------------------------------------------------------------------------
Outcome confidence_bounds() {
    int outside = 0, not_one = 0, clusters = 0;
    for (double eps : {0.1, 0.5, 1.0}) {
        const auto r = synth_run(eps, 5, 120, 8);
        const auto m = cluster_metric(r.d, r.f, r.c, MetricKind::confidence);
        for (double v : m.mean) {
            ++clusters;
            outside += (v < 0.25 || v > 1.0) ? 1 : 0;
        }
    }
    const auto r0 = synth_run(0.0, 5, 120, 8);
    const auto m0 = cluster_metric(r0.d, r0.f, r0.c, MetricKind::confidence);
    for (double v : m0.mean) not_one += v == 1.0 ? 0 : 1;
    return {outside == 0 && not_one == 0,
            fmt::format("{} cluster means outside [1/|A|, 1] over {} (eps 0.1/0.5/1); eps=0: {}/{} not exactly 1.0",
                        outside, clusters, not_one, m0.mean.size())};
}

// -- 9 ------------------------------------------------------------------------
Outcome dot_validity() {
    const auto r = synth_run(0.3, 6, 150, 12);
    const auto m = build_samdp(r.d, r.f, r.c);
    std::vector<SAMDPView> views{make_view(m, ViewKind::complete), make_view(m, ViewKind::simplified),
                                 make_view(m, ViewKind::likely), terminal_paths_view(m, false),
                                 terminal_paths_view(m, true)};
    for (int to = 0; to < m.num_clusters(); ++to) {
        const auto p = best_path(m, r.c.k_intermediate, to);
        if (!p.hops.empty()) views.push_back(path_view(m, p));
    }
    int parsed = 0, label_only = 0;
    std::string first_error;
    for (const auto& v : views) {
        try {
            const auto a = xrl::testing::parse_dot(emit_dot(v, true));
            const auto b = xrl::testing::parse_dot(emit_dot(v, false));
            parsed += 2;
            bool same = a.nodes.size() == b.nodes.size() && a.edges.size() == b.edges.size() &&
                        a.edges.size() == v.edges.size() && a.graph_attrs == b.graph_attrs;
            for (std::size_t k = 0; same && k < a.nodes.size(); ++k) {
                same = a.nodes[k].id == b.nodes[k].id && a.nodes[k].attrs == b.nodes[k].attrs;
            }
            for (std::size_t k = 0; same && k < a.edges.size(); ++k) {
                auto attrs = a.edges[k].attrs;
                same = a.edges[k].from == b.edges[k].from && a.edges[k].to == b.edges[k].to &&
                       attrs.erase("label") == 1 && attrs == b.edges[k].attrs;
            }
            label_only += same ? 1 : 0;
        } catch (const std::exception& e) {
            if (first_error.empty()) first_error = e.what();
        }
    }
    const auto n = static_cast<int>(views.size());
    return {parsed == 2 * n && label_only == n,
            fmt::format("{}/{} DOT texts parse, {}/{} views differ only in edge labels{}", parsed, 2 * n, label_only,
                        n, first_error.empty() ? "" : "; " + first_error)};
}

// -- 10 -----------------------------------------------------------------------
int run_cli(const std::string& args, std::string& log) {
    const std::string cmd = std::string(XRLPROBE_PATH) + " " + args + " >> " + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end() {
    const auto dir = xrl::testing::scratch_dir("acc_e2e");
    std::string log = (dir / "log.txt").string();
    const std::string common = "--out-dir " + dir.string() + " --seed 1";
    const std::vector<std::string> stages = {
        "synth --layout openfield-8x8 --episodes 380 --epsilon 0.1",
        "embed",
        "cluster --features latents --k 20",
        "analyze",
        "samdp",
        "terminal-paths",
    };
    const auto t0 = Clock::now();
    for (const auto& s : stages) {
        const auto sub = s.substr(0, s.find(' '));
        const int code = run_cli(sub + " " + common + s.substr(sub.size()), log);
        if (code != 0) {
            return {false, fmt::format("stage '{}' exited {} after {:.1f} s (see {})", sub, code, seconds_since(t0), log)};
        }
    }
    const double secs = seconds_since(t0);
    const auto n = load_dataset(dir / "dataset.xrld").size();
    return {secs < 120.0 && n >= 4000 && n <= 6000,
            fmt::format("N = {}, all stages exit 0, {:.1f} s (limit 120 s)", n, secs)};
}

}  // namespace

int main() {
    const std::vector<std::tuple<std::string, std::string, std::function<Outcome()>>> criteria = {
        {"C1", "format round-trip", format_round_trip},
        {"C2", "return-to-go oracle", return_to_go_oracle},
        {"C3", "t-SNE correctness", tsne_correctness},
        {"C4", "k-means", kmeans_properties},
        {"C5", "staged clustering contract", staged_clustering},
        {"C6", "SAMDP stochasticity", samdp_stochasticity},
        {"C7", "path oracle", path_oracle},
        {"C8", "confidence bounds", confidence_bounds},
        {"C9", "DOT validity", dot_validity},
        {"C10", "end-to-end runtime", end_to_end},
    };
    int failed = 0;
    for (const auto& [id, name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << name << " : " << o.detail << std::endl;
    }
    std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failed),
                             criteria.size())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
