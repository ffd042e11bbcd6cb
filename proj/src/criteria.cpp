#include "nbrselect/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nbrselect/errors.hpp"
#include "nbrselect/util.hpp"

namespace nbrselect {

Direction criterion_direction(Criterion c) {
    switch (c) {
        case Criterion::snd:
        case Criterion::snd_no_softmax: return Direction::maximize;
        case Criterion::c_ent:
        case Criterion::source_risk:
        case Criterion::iwv:
        case Criterion::dev: return Direction::minimize;
    }
    return Direction::minimize;
}

const char* criterion_name(Criterion c) {
    switch (c) {
        case Criterion::snd: return "snd";
        case Criterion::snd_no_softmax: return "snd_no_softmax";
        case Criterion::c_ent: return "c_ent";
        case Criterion::source_risk: return "source_risk";
        case Criterion::iwv: return "iwv";
        case Criterion::dev: return "dev";
    }
    return "?";
}

const char* direction_name(Direction d) {
    return d == Direction::maximize ? "maximize" : "minimize";
}

std::optional<Criterion> criterion_from_name(std::string_view name) {
    for (Criterion c : {Criterion::snd, Criterion::snd_no_softmax, Criterion::c_ent,
                        Criterion::source_risk, Criterion::iwv, Criterion::dev})
        if (name == criterion_name(c)) return c;
    return std::nullopt;
}

CriterionScore class_entropy(const ProbMatrix& probs) {
    if (probs.n_samples == 0 || probs.n_classes == 0)
        throw ValidationError("class_entropy: empty probability matrix");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.n_samples; ++i) {
        double h = 0.0;
        for (std::size_t c = 0; c < probs.n_classes; ++c) {
            const double p = probs.at(i, c);
            if (p > 0.0) h -= p * std::log(p);
        }
        total += h;
    }
    return {Criterion::c_ent, total / double(probs.n_samples), Direction::minimize};
}

std::size_t argmax_class(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
        if (row[c] > row[best]) best = c; // strict: ties keep the lowest index
    return best;
}

std::vector<double> zero_one_losses(const ProbMatrix& probs, const LabelVector& labels) {
    if (labels.size() != probs.n_samples)
        throw ValidationError("zero_one_losses: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(probs.n_samples) + " rows");
    std::vector<double> losses(probs.n_samples);
    for (std::size_t i = 0; i < probs.n_samples; ++i) {
        if (labels.labels[i] >= probs.n_classes)
            throw ValidationError("zero_one_losses: label " +
                                  std::to_string(labels.labels[i]) + " at row " +
                                  std::to_string(i) + " exceeds class count");
        losses[i] = argmax_class(probs.row(i)) == labels.labels[i] ? 0.0 : 1.0;
    }
    return losses;
}

CriterionScore source_risk(const ProbMatrix& probs, const LabelVector& labels) {
    const auto losses = zero_one_losses(probs, labels);
    double sum = 0.0;
    for (double l : losses) sum += l;
    return {Criterion::source_risk, sum / double(losses.size()), Direction::minimize};
}

ImportanceWeights fit_domain_discriminator(const FeatureMatrix& source_val,
                                           const FeatureMatrix& target,
                                           const DevConfig& config) {
    if (source_val.n_samples == 0 || target.n_samples == 0)
        throw ValidationError("fit_domain_discriminator: both domains need samples");
    if (source_val.dim != target.dim)
        throw ValidationError("fit_domain_discriminator: feature dims differ (" +
                              std::to_string(source_val.dim) + " vs " +
                              std::to_string(target.dim) + ")");
    if (!(config.discriminator_lr > 0.0))
        throw ValidationError("fit_domain_discriminator: learning rate must be positive");
    if (!(config.weight_clip > 1.0))
        throw ValidationError("fit_domain_discriminator: weight_clip must exceed 1");
    if (config.val_per_class == 0)
        throw ValidationError("fit_domain_discriminator: val_per_class must be >= 1");

    const std::size_t dim = source_val.dim;
    const std::size_t n_s = source_val.n_samples;
    const std::size_t n_t = target.n_samples;
    const std::size_t n = n_s + n_t;

    // Logistic regression, source = 1, target = 0. The problem is convex; the
    // seeded init only pins determinism.
    std::mt19937_64 rng(mix_seed(config.rng_seed, 0x51d0));
    std::normal_distribution<double> init(0.0, 0.01);
    std::vector<double> w(dim);
    for (auto& wi : w) wi = init(rng);
    double b = 0.0;

    std::vector<double> grad(dim);
    for (std::size_t epoch = 0; epoch < config.discriminator_epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool is_source = i < n_s;
            const auto row = is_source ? source_val.row(i) : target.row(i - n_s);
            double z = b;
            for (std::size_t d = 0; d < dim; ++d) z += w[d] * row[d];
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double delta = p - (is_source ? 1.0 : 0.0);
            for (std::size_t d = 0; d < dim; ++d) grad[d] += delta * row[d];
            grad_b += delta;
        }
        const double inv_n = 1.0 / double(n);
        for (std::size_t d = 0; d < dim; ++d) {
            grad[d] = grad[d] * inv_n + config.l2_penalty * w[d];
            w[d] -= config.discriminator_lr * grad[d];
        }
        b -= config.discriminator_lr * grad_b * inv_n;
    }

    ImportanceWeights iw;
    iw.weights.resize(n_s);
    iw.source_prob.resize(n_s);
    const double ratio = double(n_s) / double(n_t);
    for (std::size_t i = 0; i < n_s; ++i) {
        const auto row = source_val.row(i);
        double z = b;
        for (std::size_t d = 0; d < dim; ++d) z += w[d] * row[d];
        const double d_i = 1.0 / (1.0 + std::exp(-z)); // in (0,1) for finite z
        iw.source_prob[i] = d_i;
        iw.weights[i] = std::min(ratio * (1.0 - d_i) / d_i, config.weight_clip);
    }
    return iw;
}

namespace {

void check_weighted_inputs(std::span<const double> losses, const ImportanceWeights& iw,
                           const char* what) {
    if (losses.empty()) throw ValidationError(std::string(what) + ": no losses");
    if (losses.size() != iw.weights.size())
        throw ValidationError(std::string(what) + ": " + std::to_string(losses.size()) +
                              " losses for " + std::to_string(iw.weights.size()) +
                              " weights");
    for (double w : iw.weights)
        if (!std::isfinite(w) || w < 0.0)
            throw ValidationError(std::string(what) + ": weights must be finite and >= 0");
}

} // namespace

CriterionScore iwv_risk(std::span<const double> losses, const ImportanceWeights& iw) {
    check_weighted_inputs(losses, iw, "iwv_risk");
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) sum += iw.weights[i] * losses[i];
    return {Criterion::iwv, sum / double(losses.size()), Direction::minimize};
}

CriterionScore dev_risk(std::span<const double> losses, const ImportanceWeights& iw) {
    check_weighted_inputs(losses, iw, "dev_risk");
    if (losses.size() < 2)
        throw ValidationError("dev_risk: need at least 2 samples to estimate the "
                              "control coefficient");
    const std::size_t n = losses.size();
    double mean_wl = 0.0, mean_w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_wl += iw.weights[i] * losses[i];
        mean_w += iw.weights[i];
    }
    mean_wl /= double(n);
    mean_w /= double(n);

    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dw = iw.weights[i] - mean_w;
        cov += (iw.weights[i] * losses[i] - mean_wl) * dw;
        var += dw * dw;
    }
    cov /= double(n);
    var /= double(n);

    // The control variate mean(W) has true mean 1; eta is the variance-optimal
    // coefficient. Constant weights carry no signal, fall back to plain IWV.
    const double eta = var < 1e-12 ? 0.0 : -cov / var;
    const double value = mean_wl + eta * mean_w - eta;
    return {Criterion::dev, value, Direction::minimize};
}

double relative_within_class_variance(const FeatureMatrix& features,
                                      const LabelVector& labels) {
    const std::size_t n = features.n_samples;
    const std::size_t dim = features.dim;
    if (n == 0) throw ValidationError("relative_within_class_variance: no samples");
    if (labels.size() != n)
        throw ValidationError("relative_within_class_variance: label count mismatch");

    std::uint32_t max_label = 0;
    for (auto l : labels.labels) max_label = std::max(max_label, l);
    const std::size_t k = std::size_t(max_label) + 1;

    std::vector<double> class_mean(k * dim, 0.0);
    std::vector<std::size_t> class_count(k, 0);
    std::vector<double> global_mean(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = features.row(i);
        const std::size_t c = labels.labels[i];
        ++class_count[c];
        for (std::size_t d = 0; d < dim; ++d) {
            class_mean[c * dim + d] += row[d];
            global_mean[d] += row[d];
        }
    }
    for (std::size_t c = 0; c < k; ++c)
        if (class_count[c] > 0)
            for (std::size_t d = 0; d < dim; ++d)
                class_mean[c * dim + d] /= double(class_count[c]);
    for (std::size_t d = 0; d < dim; ++d) global_mean[d] /= double(n);

    double within = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = features.row(i);
        const std::size_t c = labels.labels[i];
        for (std::size_t d = 0; d < dim; ++d) {
            const double dw = row[d] - class_mean[c * dim + d];
            const double dt = row[d] - global_mean[d];
            within += dw * dw;
            total += dt * dt;
        }
    }
    if (!(total > 0.0))
        throw ValidationError("relative_within_class_variance: zero total variance");
    return within / total;
}

} // namespace nbrselect
