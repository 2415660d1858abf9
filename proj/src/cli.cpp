#include "xrl/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xrl/analysis.hpp"
#include "xrl/clustering.hpp"
#include "xrl/dataset.hpp"
#include "xrl/embedding.hpp"
#include "xrl/errors.hpp"
#include "xrl/render.hpp"
#include "xrl/samdp.hpp"
#include "xrl/synth.hpp"

namespace xrl {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr const char* kDatasetFile = "dataset.xrld";
constexpr const char* kEmbeddingFile = "embeddings.xrld";
constexpr const char* kClusterFile = "clusters.xrld";

struct RunConfig {
    std::string out_dir = "xrl_out";
    std::string dataset;  // empty: <out_dir>/dataset.xrld
    std::uint64_t seed = 0;

    std::string layout = "cliffwalk-4x4";
    int episodes = 200;
    double epsilon = 0.1;

    std::vector<std::string> features;
    double perplexity = 30.0;
    int iterations = 1000;

    int k = 20;
    double bandwidth_quantile = 0.3;

    std::vector<std::string> metrics;
    std::vector<std::string> overlays;
    int representatives = 3;

    std::vector<std::string> views = {"complete", "simplified", "likely"};
    double min_prob = 0.0;
    int from = -1;
    int to = -1;
    int max_hops = 10;
    bool per_action = false;
    bool labels = true;

    int width = 800;
    int height = 600;
    std::string palette = "tab10";
    double point_size = 3.0;
};

fs::path out_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.out_dir) / name; }

fs::path dataset_path(const RunConfig& cfg) {
    return cfg.dataset.empty() ? out_path(cfg, kDatasetFile) : fs::path(cfg.dataset);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void require_artifact(const fs::path& path, const std::string& stage) {
    if (!fs::exists(path)) {
        throw UsageError(fmt::format("missing {}; run the '{}' stage first", path.string(), stage));
    }
}

RenderConfig render_config(const RunConfig& cfg, const fs::path& path) {
    RenderConfig rc;
    rc.width = cfg.width;
    rc.height = cfg.height;
    rc.palette = cfg.palette;
    rc.point_size = cfg.point_size;
    rc.output_path = path;
    rc.check();
    return rc;
}

// Loads the dataset and applies the validation gate shared by all stages.
XRLDataset load_checked(const RunConfig& cfg, std::ostream& out) {
    const auto path = dataset_path(cfg);
    if (!fs::exists(path)) {
        throw UsageError(fmt::format("no dataset at {}; run the 'synth' stage or pass --dataset", path.string()));
    }
    auto d = load_dataset(path);
    const auto report = validate(d);
    if (report.ok()) return d;
    if (report.only_truncated_tail()) {
        out << fmt::format("note: dropping truncated trailing episode from record {}\n", *report.truncated_tail_start);
        return drop_truncated_tail(d, report);
    }
    throw ValidationFailure(fmt::format("dataset has {} validation violation(s); run 'validate' for details",
                                        report.violations.size()));
}

std::vector<std::string> default_features(const XRLDataset& d) {
    return {d.latents ? "latents" : "observations"};
}

void check_sizes(const XRLDataset& d, const EmbeddingMap* e, const ClusterAssignment* c) {
    if (e && e->coords.rows() != d.size()) {
        throw ValidationFailure("embeddings.xrld does not match the dataset size; rerun 'embed'");
    }
    if (c && c->labels.size() != d.size()) {
        throw ValidationFailure("clusters.xrld does not match the dataset size; rerun 'cluster'");
    }
}

int stage_synth(const RunConfig& cfg, std::ostream& out) {
    const auto presets = synth::layout_presets();
    synth::GridworldMDP mdp;
    if (std::find(presets.begin(), presets.end(), cfg.layout) != presets.end()) {
        mdp = synth::make_layout(cfg.layout);
    } else if (fs::exists(cfg.layout)) {
        mdp = synth::load_layout(cfg.layout);
    } else {
        throw ConfigError(fmt::format("--layout '{}' is neither a preset ({}) nor a file", cfg.layout,
                                      fmt::join(presets, ", ")));
    }
    if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0) throw ConfigError("--epsilon must lie in [0, 1]");
    const auto vi = synth::value_iteration(mdp);
    const synth::SyntheticPolicy policy{vi.q, cfg.epsilon};
    const auto d = synth::generate_dataset(mdp, policy, cfg.episodes, cfg.seed);
    const auto path = dataset_path(cfg);
    save_dataset(d, path);
    out << fmt::format("wrote {}: {} records, {} episodes ({} timed out)\n", path.string(), d.size(), cfg.episodes,
                       d.meta.timeout_episodes.size());
    return kExitOk;
}

int stage_info(const RunConfig& cfg, std::ostream& out) {
    const auto path = dataset_path(cfg);
    if (!fs::exists(path)) throw UsageError(fmt::format("no dataset at {}; run the 'synth' stage", path.string()));
    const auto d = load_dataset(path);
    std::size_t episodes = 0;
    for (auto v : d.dones) episodes += v ? 1 : 0;
    out << fmt::format("dataset     {}\n", path.string());
    out << fmt::format("env_id      {}\n", d.meta.env_id);
    out << fmt::format("generator   {}\n", d.meta.generator);
    out << fmt::format("records     {}\n", d.size());
    out << fmt::format("episodes    {}\n", episodes);
    out << fmt::format("actions     {}\n", d.meta.num_actions);
    out << fmt::format("discount    {}\n", d.meta.discount);
    out << fmt::format("obs         {} x {}\n", d.observations.rows(), d.observations.cols());
    if (d.latents) out << fmt::format("latents     {} x {}\n", d.latents->rows(), d.latents->cols());
    if (d.dist_probs) out << fmt::format("dist_probs  {} x {}\n", d.dist_probs->rows(), d.dist_probs->cols());
    if (d.critic_values) out << fmt::format("critic      {}\n", d.critic_values->size());
    if (d.meta.time_limit_truncations) {
        out << fmt::format("timeouts    {} episode(s)\n", d.meta.timeout_episodes.size());
    }
    for (const char* name : {kEmbeddingFile, kClusterFile}) {
        out << fmt::format("{:<11} {}\n", name, fs::exists(out_path(cfg, name)) ? "present" : "absent");
    }
    return kExitOk;
}

int stage_validate(const RunConfig& cfg, std::ostream& out) {
    const auto path = dataset_path(cfg);
    if (!fs::exists(path)) throw UsageError(fmt::format("no dataset at {}; run the 'synth' stage", path.string()));
    const auto report = validate(load_dataset(path));
    for (const auto& v : report.violations) {
        out << fmt::format("{} at {}: {}\n", to_string(v.kind), v.index, v.message);
    }
    if (report.ok()) {
        out << "ok\n";
        return kExitOk;
    }
    if (report.only_truncated_tail()) out << "only a truncated trailing episode; later stages drop it\n";
    return kExitFailure;
}

int stage_embed(const RunConfig& cfg, std::ostream& out) {
    const auto d = load_checked(cfg, out);
    const auto spec = cfg.features.empty() ? default_features(d) : cfg.features;
    TsneOptions opt;
    opt.perplexity = cfg.perplexity;
    opt.iterations = cfg.iterations;
    opt.seed = cfg.seed;
    auto e = tsne_embed(build_feature_matrix(d, spec), opt);
    e.feature_spec = spec;
    save_embedding(e, out_path(cfg, kEmbeddingFile));
    out << fmt::format("wrote {}: {} points from [{}], perplexity {}, final KL {:.4f}\n",
                       out_path(cfg, kEmbeddingFile).string(), e.coords.rows(), fmt::join(spec, ", "), e.perplexity,
                       e.final_kl);
    return kExitOk;
}

int stage_cluster(const RunConfig& cfg, std::ostream& out) {
    if (cfg.features.empty()) throw UsageError("cluster needs --features (e.g. --features latents)");
    const auto d = load_checked(cfg, out);
    const auto derived = derive(d);
    StagedClusterOptions opt;
    opt.bandwidth_quantile = cfg.bandwidth_quantile;
    const auto c = generate_clusters(d, derived, cfg.features, cfg.k, cfg.seed, opt);
    save_clusters(c, out_path(cfg, kClusterFile));
    out << fmt::format("wrote {}: {} intermediate, {} initial, {} terminal clusters\n",
                       out_path(cfg, kClusterFile).string(), c.k_intermediate, c.n_initial, c.n_terminal);
    return kExitOk;
}

ClusterAssignment load_cluster_stage(const RunConfig& cfg) {
    require_artifact(out_path(cfg, kClusterFile), "cluster");
    return load_clusters(out_path(cfg, kClusterFile));
}

int stage_analyze(const RunConfig& cfg, std::ostream& out) {
    const auto clusters = load_cluster_stage(cfg);
    require_artifact(out_path(cfg, kEmbeddingFile), "embed");
    const auto embedding = load_embedding(out_path(cfg, kEmbeddingFile));
    const auto d = load_checked(cfg, out);
    check_sizes(d, &embedding, &clusters);
    const auto derived = derive(d);

    std::vector<std::string> metric_names = cfg.metrics;
    if (metric_names.empty()) {
        if (d.dist_probs) metric_names.push_back("confidence");
        metric_names.push_back("reward");
        metric_names.push_back("expected_return");
        if (d.critic_values) metric_names.push_back("critic_value");
    }
    std::vector<ClusterMetric> metrics;
    for (const auto& name : metric_names) {
        metrics.push_back(cluster_metric(d, derived, clusters, metric_from_string(name)));
        const auto chart = metric_chart(metrics.back());
        const auto stem = "cluster_" + name;
        write_json(out_path(cfg, stem + ".json"), to_json(chart));
        render_chart(chart, render_config(cfg, out_path(cfg, stem + ".svg")));
    }
    const auto table = cluster_metric_report(metrics);
    write_text(out_path(cfg, "metrics.csv"), to_csv(table));
    write_json(out_path(cfg, "metrics.json"), to_json(table));

    std::vector<std::string> overlay_names = cfg.overlays;
    if (overlay_names.empty()) {
        overlay_names = {"episode_step", "action", "reward", "return_to_go", "done"};
        if (d.dist_probs) overlay_names.insert(overlay_names.begin() + 1, "confidence");
        if (d.critic_values) overlay_names.push_back("critic_value");
    }
    for (const auto& name : overlay_names) {
        const auto chart = embedding_overlay(d, derived, embedding, overlay_field_from_string(name));
        const auto stem = "embedding_" + name;
        write_json(out_path(cfg, stem + ".json"), to_json(chart));
        render_chart(chart, render_config(cfg, out_path(cfg, stem + ".svg")));
    }

    const auto reps = cluster_representatives(build_feature_matrix(d, clusters.feature_spec), clusters,
                                              cfg.representatives);
    nlohmann::json rj = nlohmann::json::array();
    for (const auto& [cluster, members] : reps) rj.push_back({{"cluster", cluster}, {"indices", members}});
    write_json(out_path(cfg, "representatives.json"), rj);

    out << fmt::format("wrote metrics.csv, {} metric chart(s), {} overlay chart(s) to {}\n", metrics.size(),
                       overlay_names.size(), cfg.out_dir);
    return kExitOk;
}

SAMDPModel load_model(const RunConfig& cfg, std::ostream& out) {
    const auto clusters = load_cluster_stage(cfg);
    const auto d = load_checked(cfg, out);
    check_sizes(d, nullptr, &clusters);
    return build_samdp(d, derive(d), clusters);
}

void write_view(const RunConfig& cfg, const SAMDPView& view, const std::string& stem) {
    write_text(out_path(cfg, stem + ".dot"), emit_dot(view, cfg.labels));
    write_json(out_path(cfg, stem + ".json"), to_json(view));
    render_graph(view, cfg.seed, render_config(cfg, out_path(cfg, stem + ".svg")), cfg.labels);
}

int stage_samdp(const RunConfig& cfg, std::ostream& out) {
    const auto model = load_model(cfg, out);
    ViewOptions opt;
    opt.min_prob = cfg.min_prob;
    for (const auto& name : cfg.views) {
        const auto kind = view_kind_from_string(name);
        if (kind == ViewKind::path || kind == ViewKind::terminal_paths) {
            throw UsageError("--views takes complete, simplified or likely; use the '" + name + "' subcommand");
        }
        const auto view = make_view(model, kind, opt);
        write_view(cfg, view, "samdp_" + name);
        out << fmt::format("wrote samdp_{}: {} nodes, {} edges\n", name, view.nodes.size(), view.edges.size());
    }
    return kExitOk;
}

int stage_paths(const RunConfig& cfg, std::ostream& out) {
    if (cfg.from < 0 || cfg.to < 0) throw UsageError("paths needs --from and --to cluster ids");
    const auto model = load_model(cfg, out);
    if (cfg.from >= model.num_clusters() || cfg.to >= model.num_clusters()) {
        throw UsageError(fmt::format("cluster ids must lie in [0, {})", model.num_clusters()));
    }
    if (model.stage(cfg.from) == Stage::terminal && cfg.from != cfg.to) {
        throw UsageError(fmt::format("cluster {} is terminal and has no outgoing transitions", cfg.from));
    }
    const auto best = best_path(model, cfg.from, cfg.to);
    auto j = to_json(best);
    nlohmann::json alternatives = nlohmann::json::array();
    for (const auto& p : all_paths(model, cfg.from, cfg.to, cfg.max_hops)) alternatives.push_back(to_json(p));
    j["all_paths"] = std::move(alternatives);
    const auto stem = fmt::format("paths_{}_{}", cfg.from, cfg.to);
    write_json(out_path(cfg, stem + ".json"), j);
    if (!best.hops.empty()) {
        const auto view = path_view(model, best);
        write_text(out_path(cfg, stem + ".dot"), emit_dot(view, cfg.labels));
        render_graph(view, cfg.seed, render_config(cfg, out_path(cfg, stem + ".svg")), cfg.labels);
    }
    if (best.reachable) {
        out << fmt::format("best path {} -> {}: {} hop(s), probability {:.6g}\n", cfg.from, cfg.to, best.hops.size(),
                           best.probability);
    } else {
        out << fmt::format("cluster {} is unreachable from {}\n", cfg.to, cfg.from);
    }
    return kExitOk;
}

int stage_terminal_paths(const RunConfig& cfg, std::ostream& out) {
    const auto model = load_model(cfg, out);
    const auto view = terminal_paths_view(model, cfg.per_action);
    write_view(cfg, view, "samdp_terminal-paths");
    out << fmt::format("wrote samdp_terminal-paths: {} nodes, {} edges\n", view.nodes.size(), view.edges.size());
    return kExitOk;
}

int stage_render_all(const RunConfig& cfg, std::ostream& out) {
    require_artifact(out_path(cfg, kClusterFile), "cluster");
    require_artifact(out_path(cfg, kEmbeddingFile), "embed");
    stage_analyze(cfg, out);
    stage_samdp(cfg, out);
    stage_terminal_paths(cfg, out);
    if (cfg.from >= 0 && cfg.to >= 0) stage_paths(cfg, out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Policy interrogation over recorded trajectory datasets", "xrlprobe"};
    app.set_config("--config", "", "TOML file with flag values; explicit flags take precedence");
    app.require_subcommand(1, 1);

    app.add_option("--out-dir", cfg.out_dir, "Artifact directory")->envname("XRL_OUT_DIR")->capture_default_str();
    app.add_option("--dataset", cfg.dataset, "Dataset file (default <out-dir>/dataset.xrld)");
    app.add_option("--seed", cfg.seed, "Seed for every stochastic stage")->capture_default_str();
    app.add_option("--layout", cfg.layout, "Gridworld preset or layout file")->capture_default_str();
    app.add_option("--episodes", cfg.episodes, "Episodes to synthesise")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--epsilon", cfg.epsilon, "Exploration rate of the synthetic policy")->capture_default_str();
    app.add_option("--features", cfg.features, "Dataset arrays to embed or cluster on")->delimiter(',');
    app.add_option("--perplexity", cfg.perplexity, "t-SNE perplexity")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--iterations", cfg.iterations, "t-SNE iterations")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--k", cfg.k, "Intermediate clusters")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--bandwidth-quantile", cfg.bandwidth_quantile, "Mean-shift bandwidth quantile")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--metrics", cfg.metrics, "confidence, reward, expected_return, critic_value")->delimiter(',');
    app.add_option("--overlays", cfg.overlays, "Embedding colour fields")->delimiter(',');
    app.add_option("--representatives", cfg.representatives, "Representatives per cluster")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--views", cfg.views, "SAMDP views: complete, simplified, likely")->delimiter(',')->capture_default_str();
    app.add_option("--min-prob", cfg.min_prob, "Drop view edges below this probability")->capture_default_str();
    app.add_option("--from", cfg.from, "Path source cluster");
    app.add_option("--to", cfg.to, "Path target cluster");
    app.add_option("--max-hops", cfg.max_hops, "Longest path to enumerate")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_flag("--per-action", cfg.per_action, "One terminal-paths edge per action");
    app.add_flag("--labels,!--no-labels", cfg.labels, "Label SAMDP edges with action and probability");
    app.add_option("--width", cfg.width, "Image width")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--height", cfg.height, "Image height")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--palette", cfg.palette, "tab10 or dark2")->check(CLI::IsMember({"tab10", "dark2"}))->capture_default_str();
    app.add_option("--point-size", cfg.point_size, "Scatter marker radius")->capture_default_str();

    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"synth", "Generate a gridworld dataset"},
        {"info", "Summarise the dataset and cached artifacts"},
        {"validate", "Check dataset invariants"},
        {"embed", "t-SNE embedding -> embeddings.xrld"},
        {"cluster", "Staged clustering -> clusters.xrld"},
        {"analyze", "Cluster metrics, overlays and charts"},
        {"samdp", "SAMDP views as DOT, JSON and SVG"},
        {"paths", "Path queries between clusters"},
        {"terminal-paths", "Routes into terminal clusters"},
        {"render-all", "Replay every reporting stage from cached artifacts"},
    };
    for (const auto& [name, help] : subcommands) app.add_subcommand(name, help)->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        fs::create_directories(cfg.out_dir);
        if (stage == "synth") return stage_synth(cfg, out);
        if (stage == "info") return stage_info(cfg, out);
        if (stage == "validate") return stage_validate(cfg, out);
        if (stage == "embed") return stage_embed(cfg, out);
        if (stage == "cluster") return stage_cluster(cfg, out);
        if (stage == "analyze") return stage_analyze(cfg, out);
        if (stage == "samdp") return stage_samdp(cfg, out);
        if (stage == "paths") return stage_paths(cfg, out);
        if (stage == "terminal-paths") return stage_terminal_paths(cfg, out);
        return stage_render_all(cfg, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

}  // namespace xrl
