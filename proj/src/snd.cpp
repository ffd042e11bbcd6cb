#include "nbrselect/snd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>

#include "nbrselect/errors.hpp"
#include "nbrselect/util.hpp"

namespace nbrselect {

namespace {

FeatureMatrix normalize_rows(std::size_t n, std::size_t dim, const std::vector<double>& in,
                             const char* what) {
    FeatureMatrix f;
    f.n_samples = n;
    f.dim = dim;
    f.values.resize(in.size());
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double v = in[i * dim + d];
            sq += v * v;
        }
        if (!(sq > 0.0))
            throw ValidationError(std::string(what) + ": row " + std::to_string(i) +
                                  " has zero norm, cannot normalize");
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t d = 0; d < dim; ++d) f.values[i * dim + d] = in[i * dim + d] * inv;
    }
    f.normalized = true;
    return f;
}

std::size_t env_thread_cap() {
    if (const char* s = std::getenv("NBRSELECT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(s, &end, 10);
        if (end != s && v > 0) return std::size_t(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void check_snd_inputs(const FeatureMatrix& f, double temperature, std::size_t block_rows) {
    if (!(temperature > 0.0))
        throw ValidationError("snd: temperature must be positive, got " +
                              to_shortest_string(temperature));
    if (block_rows == 0) throw ValidationError("snd: block_rows must be >= 1");
    if (f.n_samples < 2) throw ValidationError("snd: need at least 2 samples");
    if (f.dim == 0) throw ValidationError("snd: feature dimension is zero");
    if (!f.normalized)
        throw ValidationError("snd: features must be L2-normalized (use prepare_features)");
    if (f.values.size() != f.n_samples * f.dim)
        throw ValidationError("snd: value count does not match shape");
}

// Entropy of one sample's neighborhood from its similarity row.
//
// With P_j = exp(S_j/tau) / Z over neighbors j != i, the entropy rearranges to
//   H_i = ln Z - (1/tau) * sum_j P_j S_j,
// which avoids materializing P. Exponentials are shifted by the row maximum;
// for unit rows the maximum is the self-similarity S_ii ~ 1, so the shifted
// self term is exp(0) and removing it after the sum is exact. When nearly all
// of the shifted mass was the self term (every neighbor far away at small
// tau), the subtraction cancels catastrophically; those rows are recomputed
// with the diagonal skipped outright.
double row_entropy(const double* sims, std::size_t n, std::size_t self, double tau) {
    double smax = sims[0];
    for (std::size_t j = 1; j < n; ++j) smax = std::max(smax, sims[j]);

    double z = 0.0, ws = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double t = std::exp((sims[j] - smax) / tau);
        z += t;
        ws += t * sims[j];
    }
    const double self_term = std::exp((sims[self] - smax) / tau);
    z -= self_term;
    ws -= self_term * sims[self];

    // Less than 1e-4 of the shifted mass left: at least four digits lost to
    // cancellation, redo this row with the self entry masked.
    if (!(z > 1e-4)) {
        smax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != self) smax = std::max(smax, sims[j]);
        z = 0.0;
        ws = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == self) continue;
            const double t = std::exp((sims[j] - smax) / tau);
            z += t;
            ws += t * sims[j];
        }
    }

    const double h = smax / tau + std::log(z) - ws / (z * tau);
    return h > 0.0 ? h : 0.0; // clamp fp noise; the entropy is nonnegative
}

struct BlockJob {
    std::size_t row_begin;
    std::size_t row_end;
};

void score_block(const FeatureMatrix& f, double tau, const BlockJob& job,
                 std::vector<double>& tile, std::vector<double>& entropy_out) {
    const std::size_t n = f.n_samples;
    const std::size_t dim = f.dim;
    const double* values = f.values.data();
    for (std::size_t i = job.row_begin; i < job.row_end; ++i) {
        double* sims = tile.data() + (i - job.row_begin) * n;
        const double* fi = values + i * dim;
        for (std::size_t j = 0; j < n; ++j) {
            const double* fj = values + j * dim;
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d) dot += fi[d] * fj[d];
            sims[j] = dot;
        }
        entropy_out[i] = row_entropy(sims, n, i, tau);
    }
}

} // namespace

FeatureMatrix prepare_features(const ProbMatrix& probs) {
    if (probs.n_samples == 0 || probs.n_classes == 0)
        throw ValidationError("prepare_features: empty probability matrix");
    if (probs.values.size() != probs.n_samples * probs.n_classes)
        throw ValidationError("prepare_features: value count does not match shape");
    return normalize_rows(probs.n_samples, probs.n_classes, probs.values,
                          "prepare_features");
}

FeatureMatrix prepare_features_logits(const LogitMatrix& logits) {
    if (logits.n_samples == 0 || logits.n_classes == 0)
        throw ValidationError("prepare_features_logits: empty logit matrix");
    if (logits.values.size() != logits.n_samples * logits.n_classes)
        throw ValidationError("prepare_features_logits: value count does not match shape");
    return normalize_rows(logits.n_samples, logits.n_classes, logits.values,
                          "prepare_features_logits");
}

SndResult snd(const FeatureMatrix& features, const SndConfig& config) {
    check_snd_inputs(features, config.temperature, config.block_rows);
    const std::size_t n = features.n_samples;
    const std::size_t block = std::min(config.block_rows, n);

    std::vector<BlockJob> jobs;
    for (std::size_t r = 0; r < n; r += block)
        jobs.push_back({r, std::min(r + block, n)});

    SndResult result;
    result.n_used = n;
    result.per_sample_entropy.assign(n, 0.0);

    // Each job writes a disjoint slice of per-row entropies and each row's
    // arithmetic never depends on the tiling, so any thread count (and any
    // block_rows) produces identical bits.
    std::size_t n_threads = std::min(env_thread_cap(), jobs.size());
    if (n * n < 1u << 18) n_threads = 1; // not worth spawning for tiny inputs
    if (n_threads <= 1) {
        std::vector<double> tile(block * n);
        for (const auto& job : jobs)
            score_block(features, config.temperature, job, tile,
                        result.per_sample_entropy);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        workers.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) {
            workers.emplace_back([&]() {
                std::vector<double> tile(block * n);
                for (;;) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= jobs.size()) return;
                    score_block(features, config.temperature, jobs[k], tile,
                                result.per_sample_entropy);
                }
            });
        }
        for (auto& w : workers) w.join();
    }

    double sum = 0.0;
    for (double h : result.per_sample_entropy) sum += h;
    result.value = sum / double(n);
    return result;
}

std::vector<double> dense_neighborhood_matrix(const FeatureMatrix& features,
                                              double temperature) {
    check_snd_inputs(features, temperature, 1);
    const std::size_t n = features.n_samples;
    if (n > 5000)
        throw ValidationError("snd_dense_oracle: refusing n_samples > 5000 (got " +
                              std::to_string(n) + ")");
    const std::size_t dim = features.dim;

    std::vector<double> sim(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < dim; ++d)
                dot += features.values[i * dim + d] * features.values[j * dim + d];
            sim[i * n + j] = dot;
        }

    // Row-wise softmax over the off-diagonal entries; the diagonal is masked
    // out before normalization and pinned to zero.
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double smax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) smax = std::max(smax, sim[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double e = std::exp((sim[i * n + j] - smax) / temperature);
            p[i * n + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) p[i * n + j] /= z;
    }
    return p;
}

SndResult snd_dense_oracle(const FeatureMatrix& features, double temperature) {
    const auto p = dense_neighborhood_matrix(features, temperature);
    const std::size_t n = features.n_samples;
    SndResult result;
    result.n_used = n;
    result.per_sample_entropy.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = p[i * n + j];
            if (pij > 0.0) h -= pij * std::log(pij);
        }
        result.per_sample_entropy[i] = h;
    }
    double sum = 0.0;
    for (double h : result.per_sample_entropy) sum += h;
    result.value = sum / double(n);
    return result;
}

std::vector<std::uint32_t> segmentation_sample_indices(std::uint64_t rng_seed,
                                                       std::size_t image_index,
                                                       std::size_t n_pixels,
                                                       std::size_t subsample_pixels) {
    return sample_without_replacement(n_pixels, subsample_pixels, rng_seed, image_index);
}

SndResult snd_segmentation(const SegmentationDump& dump, const SndConfig& config) {
    if (dump.images.empty()) throw ValidationError("snd_segmentation: no images");
    if (config.subsample_pixels < 2)
        throw ValidationError("snd_segmentation: subsample_pixels must be >= 2");

    SndResult result;
    result.n_used = config.subsample_pixels;
    result.per_sample_entropy.reserve(dump.images.size());

    for (std::size_t k = 0; k < dump.images.size(); ++k) {
        const auto& img = dump.images[k];
        if (img.n_pixels() < config.subsample_pixels)
            throw ValidationError("snd_segmentation: image " + std::to_string(k) +
                                  " has " + std::to_string(img.n_pixels()) +
                                  " pixels, need at least " +
                                  std::to_string(config.subsample_pixels));
        const auto idx = segmentation_sample_indices(config.rng_seed, k, img.n_pixels(),
                                                     config.subsample_pixels);
        ProbMatrix sampled;
        sampled.n_samples = idx.size();
        sampled.n_classes = img.n_classes;
        sampled.values.reserve(idx.size() * img.n_classes);
        for (auto p : idx) {
            const auto row = img.pixel(p);
            sampled.values.insert(sampled.values.end(), row.begin(), row.end());
        }
        const auto image_score = snd(prepare_features(sampled), config);
        result.per_sample_entropy.push_back(image_score.value);
    }

    double sum = 0.0;
    for (double h : result.per_sample_entropy) sum += h;
    result.value = sum / double(dump.images.size());
    return result;
}

} // namespace nbrselect
