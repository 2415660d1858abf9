#include "xrl/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xrl/errors.hpp"
#include "xrl/rng.hpp"
#include "xrl/xrld.hpp"

namespace xrl {
namespace {

constexpr int kBandwidthIterations = 50;
constexpr double kEntropyTolerance = 1e-5;  // nats
constexpr int kKlWindow = 100;

void append_columns(std::vector<std::vector<double>>& columns, const Matrix<float>& m) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
        std::vector<double> col(m.rows());
        for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
        columns.push_back(std::move(col));
    }
}

template <typename T>
void append_column(std::vector<std::vector<double>>& columns, const std::vector<T>& v) {
    columns.emplace_back(v.begin(), v.end());
}

void zscore(std::vector<double>& col) {
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    if (col.empty() || *lo == *hi) {
        std::fill(col.begin(), col.end(), 0.0);
        return;
    }
    const double n = static_cast<double>(col.size());
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    for (double& v : col) v = (v - mean) / sd;
}

}  // namespace

RealMatrix build_feature_matrix(const XRLDataset& d, const std::vector<std::string>& feature_spec) {
    if (feature_spec.empty()) {
        throw ConfigError("feature spec is empty");
    }
    std::vector<std::vector<double>> columns;
    for (const auto& name : feature_spec) {
        if (name == "observations") {
            append_columns(columns, d.observations);
        } else if (name == "latents") {
            if (!d.latents) throw ConfigError("dataset has no latents array");
            append_columns(columns, *d.latents);
        } else if (name == "dist_probs") {
            if (!d.dist_probs) throw ConfigError("dataset has no dist_probs array");
            append_columns(columns, *d.dist_probs);
        } else if (name == "critic_values") {
            if (!d.critic_values) throw ConfigError("dataset has no critic_values array");
            append_column(columns, *d.critic_values);
        } else if (name == "actions") {
            append_column(columns, d.actions);
        } else if (name == "rewards") {
            append_column(columns, d.rewards);
        } else if (name == "dones") {
            append_column(columns, d.dones);
        } else if (name == "steps") {
            append_column(columns, d.steps);
        } else {
            throw ConfigError("unknown array name '" + name + "' in feature spec");
        }
    }
    const std::size_t n = d.size();
    RealMatrix out(n, columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        zscore(columns[c]);
        for (std::size_t r = 0; r < n; ++r) out(r, c) = columns[c][r];
    }
    return out;
}

namespace tsne {

BandwidthResult conditional_row(std::span<const double> d, std::size_t self, double perplexity,
                                std::span<double> p) {
    const std::size_t n = d.size();
    const double target = std::log(perplexity);
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
        if (j != self) dmin = std::min(dmin, d[j]);
    }

    BandwidthResult result;
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    for (int iter = 0; iter < kBandwidthIterations; ++iter) {
        // Shifting by the nearest distance keeps at least one term at exp(0).
        double sum = 0.0;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == self) {
                p[j] = 0.0;
                continue;
            }
            const double shifted = d[j] - dmin;
            p[j] = std::exp(-beta * shifted);
            sum += p[j];
            weighted += shifted * p[j];
        }
        entropy = std::log(sum) + beta * weighted / sum;
        for (std::size_t j = 0; j < n; ++j) p[j] /= sum;
        result.beta = beta;

        const double diff = entropy - target;
        if (std::fabs(diff) < kEntropyTolerance) {
            result.converged = true;
            break;
        }
        if (iter + 1 == kBandwidthIterations) break;
        if (diff > 0.0) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
    }
    result.entropy_bits = entropy / std::log(2.0);
    return result;
}

Affinities joint_affinities(const RealMatrix& x, double perplexity) {
    const std::size_t n = x.rows();
    Affinities out{PairMatrix(n), std::vector<BandwidthResult>(n)};
    std::vector<double> dist(n);
    std::vector<double> cond(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dist[j] = j == i ? 0.0 : squared_distance(x.row(i), x.row(j));
        }
        out.bandwidths[i] = conditional_row(dist, i, perplexity, cond);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) out.joint.at(i, j) += cond[j];
        }
    }

    auto& p = out.joint.values();
    // Ordered-pair total: each triangle entry stands for (i, j) and (j, i).
    const double total = 2.0 * std::accumulate(p.begin(), p.end(), 0.0);
    const double ordered_pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    const double keep = 1.0 - ordered_pairs * kAffinityFloor;
    for (double& v : p) {
        v = kAffinityFloor + keep * (v / total);
    }
    return out;
}

double kl_divergence(const PairMatrix& p, const RealMatrix& y) {
    const std::size_t n = y.rows();
    double z = 0.0;
    double cross = 0.0;  // sum p * log(p / num)
    std::size_t idx = 0;
    const auto& pv = p.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++idx) {
            const double dx = y(i, 0) - y(j, 0);
            const double dy = y(i, 1) - y(j, 1);
            const double d2 = dx * dx + dy * dy;
            z += 1.0 / (1.0 + d2);
            cross += pv[idx] * (std::log(pv[idx]) + std::log1p(d2));
        }
    }
    // Both the P total and Z count ordered pairs.
    return 2.0 * cross + std::log(2.0 * z);
}

RealMatrix kl_gradient(const PairMatrix& p, const RealMatrix& y, double exaggeration) {
    const std::size_t n = y.rows();
    std::vector<double> px(n), py(n);
    for (std::size_t i = 0; i < n; ++i) {
        px[i] = y(i, 0);
        py[i] = y(i, 1);
    }
    // Split accumulators keep the inner loop contiguous in j.
    std::vector<double> ax(n, 0.0), ay(n, 0.0), rx(n, 0.0), ry(n, 0.0);
    const double* __restrict xs = px.data();
    const double* __restrict ys = py.data();
    double* __restrict axp = ax.data();
    double* __restrict ayp = ay.data();
    double* __restrict rxp = rx.data();
    double* __restrict ryp = ry.data();
    double z = 0.0;
    const double* pv = p.values().data();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double yi0 = xs[i];
        const double yi1 = ys[i];
        const double* __restrict prow = pv - (i + 1);
        double ai0 = 0.0, ai1 = 0.0, ri0 = 0.0, ri1 = 0.0, zi = 0.0;
#pragma omp simd reduction(+ : ai0, ai1, ri0, ri1, zi)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = yi0 - xs[j];
            const double dy = yi1 - ys[j];
            const double num = 1.0 / (1.0 + dx * dx + dy * dy);
            const double a = prow[j] * num;
            const double r = num * num;
            zi += num;
            ai0 += a * dx;
            ai1 += a * dy;
            ri0 += r * dx;
            ri1 += r * dy;
            axp[j] -= a * dx;
            ayp[j] -= a * dy;
            rxp[j] -= r * dx;
            ryp[j] -= r * dy;
        }
        pv += n - i - 1;
        axp[i] += ai0;
        ayp[i] += ai1;
        rxp[i] += ri0;
        ryp[i] += ri1;
        z += zi;
    }
    z *= 2.0;
    RealMatrix grad(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        grad(i, 0) = 4.0 * (exaggeration * ax[i] - rx[i] / z);
        grad(i, 1) = 4.0 * (exaggeration * ay[i] - ry[i] / z);
    }
    return grad;
}

}  // namespace tsne

EmbeddingMap tsne_embed(const RealMatrix& features, const TsneOptions& opt) {
    const std::size_t n = features.rows();
    if (n < 4) {
        throw InputError("t-SNE needs at least 4 points, got " + std::to_string(n));
    }
    for (double v : features.values()) {
        if (!std::isfinite(v)) throw InputError("feature matrix contains non-finite values");
    }
    if (!(opt.perplexity > 0.0) || opt.iterations < 1) {
        throw InputError("perplexity and iterations must be positive");
    }

    EmbeddingMap out;
    out.perplexity = std::min(opt.perplexity, static_cast<double>(n - 1) / 3.0);
    out.iterations = opt.iterations;
    out.seed = opt.seed;
    out.learning_rate = opt.learning_rate.value_or(std::max(static_cast<double>(n) / opt.early_exaggeration, 50.0));

    const auto affinities = tsne::joint_affinities(features, out.perplexity);
    const auto& p = affinities.joint;

    Rng rng(opt.seed);
    RealMatrix y(n, 2);
    for (double& v : y.values()) v = opt.init_stddev * rng.normal();

    RealMatrix velocity(n, 2, 0.0);
    RealMatrix gains(n, 2, 1.0);
    const int kl_from = std::max(0, opt.iterations - kKlWindow);
    const int stride = std::max(1, opt.kl_stride);

    for (int iter = 0; iter < opt.iterations; ++iter) {
        const double exaggeration = iter < opt.exaggeration_iterations ? opt.early_exaggeration : 1.0;
        const double momentum = iter < opt.momentum_switch_iteration ? opt.initial_momentum : opt.final_momentum;
        const RealMatrix grad = tsne::kl_gradient(p, y, exaggeration);

        auto& g = gains.values();
        auto& u = velocity.values();
        auto& yv = y.values();
        const auto& gv = grad.values();
        for (std::size_t k = 0; k < yv.size(); ++k) {
            g[k] = (gv[k] > 0.0) != (u[k] > 0.0) ? g[k] + 0.2 : g[k] * 0.8;
            g[k] = std::max(g[k], 0.01);
            u[k] = momentum * u[k] - out.learning_rate * g[k] * gv[k];
            yv[k] += u[k];
        }
        for (std::size_t c = 0; c < 2; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
        }

        const bool last = iter + 1 == opt.iterations;
        if (last || (iter >= kl_from && (iter - kl_from) % stride == 0)) {
            out.kl_trace.emplace_back(iter, tsne::kl_divergence(p, y));
        }
    }

    for (double v : y.values()) {
        if (!std::isfinite(v)) throw NumericalError("t-SNE diverged to non-finite coordinates");
    }
    out.final_kl = std::max(0.0, out.kl_trace.back().second);
    out.coords = std::move(y);
    return out;
}

void save_embedding(const EmbeddingMap& e, const std::filesystem::path& path) {
    Matrix<float> coords(e.coords.rows(), 2);
    for (std::size_t k = 0; k < coords.size(); ++k) coords.values()[k] = static_cast<float>(e.coords.values()[k]);
    xrld::Container c;
    c.meta = {{"kind", "embedding"},
              {"method", "tsne"},
              {"perplexity", e.perplexity},
              {"iterations", e.iterations},
              {"learning_rate", e.learning_rate},
              {"seed", e.seed},
              {"final_kl", e.final_kl},
              {"feature_spec", e.feature_spec}};
    c.arrays.push_back(xrld::make_matrix("coords", coords));
    xrld::write_file(c, path);
}

EmbeddingMap load_embedding(const std::filesystem::path& path) {
    const auto c = xrld::read_file(path);
    if (c.meta.value("kind", "") != "embedding") {
        throw FormatError(path.string() + " is not an embedding file");
    }
    EmbeddingMap e;
    try {
        e.perplexity = c.meta.at("perplexity").get<double>();
        e.iterations = c.meta.at("iterations").get<int>();
        e.learning_rate = c.meta.at("learning_rate").get<double>();
        e.seed = c.meta.at("seed").get<std::uint64_t>();
        e.final_kl = c.meta.at("final_kl").get<double>();
        e.feature_spec = c.meta.at("feature_spec").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("embedding header is incomplete: ") + ex.what());
    }
    const auto coords = xrld::as_matrix(c.at("coords"));
    if (coords.cols() != 2) throw FormatError("embedding coords must have two columns");
    e.coords = RealMatrix(coords.rows(), 2);
    for (std::size_t k = 0; k < coords.size(); ++k) e.coords.values()[k] = coords.values()[k];
    return e;
}

}  // namespace xrl
