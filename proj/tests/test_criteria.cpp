#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "nbrselect/criteria.hpp"
#include "nbrselect/errors.hpp"
#include "test_helpers.hpp"

using namespace nbrselect;

namespace {

ProbMatrix matrix_from_rows(std::vector<std::vector<double>> rows) {
    ProbMatrix m;
    m.n_samples = rows.size();
    m.n_classes = rows[0].size();
    for (const auto& r : rows) m.values.insert(m.values.end(), r.begin(), r.end());
    return m;
}

FeatureMatrix features_2d(const std::vector<std::array<double, 2>>& points) {
    FeatureMatrix f;
    f.n_samples = points.size();
    f.dim = 2;
    for (const auto& p : points) {
        f.values.push_back(p[0]);
        f.values.push_back(p[1]);
    }
    return f;
}

FeatureMatrix gaussian_blob(std::size_t n, double cx, double cy, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::array<double, 2>> pts(n);
    for (auto& p : pts) p = {cx + gauss(rng), cy + gauss(rng)};
    return features_2d(pts);
}

} // namespace

TEST_SUITE("criteria") {

TEST_CASE("criterion metadata round-trips") {
    for (const Criterion c : {Criterion::snd, Criterion::snd_no_softmax, Criterion::c_ent,
                              Criterion::source_risk, Criterion::iwv, Criterion::dev})
        CHECK(criterion_from_name(criterion_name(c)) == c);
    CHECK(!criterion_from_name("accuracy").has_value());

    CHECK(criterion_direction(Criterion::snd) == Direction::maximize);
    CHECK(criterion_direction(Criterion::snd_no_softmax) == Direction::maximize);
    CHECK(criterion_direction(Criterion::c_ent) == Direction::minimize);
    CHECK(criterion_direction(Criterion::source_risk) == Direction::minimize);
    CHECK(criterion_direction(Criterion::iwv) == Direction::minimize);
    CHECK(criterion_direction(Criterion::dev) == Direction::minimize);
}

TEST_CASE("class_entropy analytic values") {
    ProbMatrix uniform;
    uniform.n_samples = 4;
    uniform.n_classes = 65;
    uniform.values.assign(4 * 65, 1.0 / 65.0);
    CHECK(std::abs(class_entropy(uniform).value - std::log(65.0)) <= 1e-9);

    const auto one_hot = matrix_from_rows({{1, 0, 0}, {0, 0, 1}});
    CHECK(class_entropy(one_hot).value == 0.0);

    const auto mixed = matrix_from_rows({{0.9, 0.1}, {0.5, 0.5}});
    const double row0 = -(0.9 * std::log(0.9) + 0.1 * std::log(0.1));
    CHECK(class_entropy(mixed).value ==
          doctest::Approx((row0 + std::log(2.0)) / 2.0).epsilon(1e-12));
    CHECK(class_entropy(mixed).value == doctest::Approx(0.509115077).epsilon(1e-8));
    CHECK(class_entropy(mixed).direction == Direction::minimize);
}

TEST_CASE("class_entropy is invariant to sample and class permutations") {
    auto m = testutil::random_prob_matrix(30, 5, 8);
    const double base = class_entropy(m).value;

    ProbMatrix swapped_rows = m;
    std::copy_n(m.values.begin(), 5, swapped_rows.values.begin() + 5 * 7);
    std::copy_n(m.values.begin() + 5 * 7, 5, swapped_rows.values.begin());
    CHECK(class_entropy(swapped_rows).value == doctest::Approx(base).epsilon(1e-12));

    ProbMatrix swapped_cols = m;
    for (std::size_t i = 0; i < m.n_samples; ++i)
        std::swap(swapped_cols.values[i * 5 + 1], swapped_cols.values[i * 5 + 4]);
    CHECK(class_entropy(swapped_cols).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("source_risk counts argmax mistakes") {
    const auto m = matrix_from_rows(
        {{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}, {0.25, 0.5, 0.25}});
    CHECK(source_risk(m, {{0, 1, 2, 1}}).value == 0.0);
    CHECK(source_risk(m, {{1, 0, 0, 2}}).value == 1.0);
    CHECK(source_risk(m, {{0, 1, 2, 0}}).value == 0.25);

    const auto losses = zero_one_losses(m, {{0, 1, 2, 0}});
    CHECK(losses == std::vector<double>{0, 0, 0, 1});

    CHECK_THROWS_AS(source_risk(m, {{0, 1}}), ValidationError);
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    const auto m = matrix_from_rows({{0.5, 0.5}});
    CHECK(argmax_class(m.row(0)) == 0);
    CHECK(source_risk(m, {{0}}).value == 0.0);
    CHECK(source_risk(m, {{1}}).value == 1.0);
}

TEST_CASE("indistinguishable domains give flat importance weights") {
    const auto blob = gaussian_blob(200, 0.0, 0.0, 3);
    DevConfig config;
    const auto iw = fit_domain_discriminator(blob, blob, config);
    REQUIRE(iw.weights.size() == 200);
    for (const double d : iw.source_prob) CHECK(std::abs(d - 0.5) <= 0.05);
    // n_s == n_t so the weight target is 1
    for (const double w : iw.weights) CHECK(std::abs(w - 1.0) <= 0.2);
}

TEST_CASE("separable domains drive source weights to zero") {
    const auto source = gaussian_blob(150, 20.0, 20.0, 4);
    const auto target = gaussian_blob(150, -20.0, -20.0, 5);
    DevConfig config;
    config.discriminator_epochs = 2000;
    const auto iw = fit_domain_discriminator(source, target, config);
    double mean = std::accumulate(iw.weights.begin(), iw.weights.end(), 0.0) / 150.0;
    CHECK(mean <= 0.1);
    for (const double w : iw.weights) CHECK(w <= config.weight_clip);
}

TEST_CASE("fitted weights track the analytic gaussian density ratio") {
    // equal-size isotropic gaussians at (+-delta/2, 0); the true importance
    // weight of a source point x is exp(-delta * x0)
    const double delta = 1.0;
    const auto source = gaussian_blob(1000, delta / 2.0, 0.0, 6);
    const auto target = gaussian_blob(1000, -delta / 2.0, 0.0, 7);
    DevConfig config;
    config.discriminator_epochs = 4000;
    config.discriminator_lr = 0.5;
    config.l2_penalty = 1e-5;
    config.weight_clip = 50.0;
    const auto iw = fit_domain_discriminator(source, target, config);

    double rel_err_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        const double truth = std::exp(-delta * source.values[i * 2]);
        if (truth < 0.2 || truth > 5.0) continue; // skip clip-dominated tails
        rel_err_sum += std::abs(iw.weights[i] - truth) / truth;
        ++used;
    }
    REQUIRE(used > 500);
    CHECK(rel_err_sum / double(used) <= 0.2);
}

TEST_CASE("discriminator is deterministic and validates shapes") {
    const auto source = gaussian_blob(50, 1.0, 0.0, 8);
    const auto target = gaussian_blob(60, 0.0, 1.0, 9);
    const auto a = fit_domain_discriminator(source, target, {});
    const auto b = fit_domain_discriminator(source, target, {});
    CHECK(a.weights == b.weights);
    CHECK(a.source_prob == b.source_prob);

    FeatureMatrix wrong_dim;
    wrong_dim.n_samples = 3;
    wrong_dim.dim = 3;
    wrong_dim.values.assign(9, 0.1);
    CHECK_THROWS_AS(fit_domain_discriminator(source, wrong_dim, {}), ValidationError);
    CHECK_THROWS_AS(fit_domain_discriminator(features_2d({}), target, {}),
                    ValidationError);
}

TEST_CASE("iwv_risk is the weighted mean loss") {
    ImportanceWeights flat{{1, 1, 1, 1}, {}};
    CHECK(iwv_risk(std::vector<double>{1, 0, 0, 0}, flat).value == 0.25);

    ImportanceWeights some{{2.0, 0.5}, {}};
    CHECK(iwv_risk(std::vector<double>{0, 0}, some).value == 0.0);
    CHECK(iwv_risk(std::vector<double>{1, 0}, some).value == 1.0);
    CHECK(iwv_risk(std::vector<double>{1, 1}, some).value == doctest::Approx(1.25));

    CHECK_THROWS_AS(iwv_risk(std::vector<double>{1}, some), ValidationError);
}

TEST_CASE("dev_risk reduces to iwv_risk for constant weights") {
    ImportanceWeights flat{{1.7, 1.7, 1.7}, {}};
    const std::vector<double> losses = {1, 0, 1};
    CHECK(dev_risk(losses, flat).value == iwv_risk(losses, flat).value);
}

TEST_CASE("dev_risk collapses constant losses to the constant") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> uni(0.2, 3.0);
    ImportanceWeights iw;
    for (int i = 0; i < 50; ++i) iw.weights.push_back(uni(rng));
    const std::vector<double> ones(50, 1.0);
    CHECK(std::abs(dev_risk(ones, iw).value - 1.0) <= 1e-12);
    const std::vector<double> zeros(50, 0.0);
    CHECK(std::abs(dev_risk(zeros, iw).value) <= 1e-12);

    CHECK_THROWS_AS(dev_risk(std::vector<double>{1.0}, ImportanceWeights{{1.0}, {}}),
                    ValidationError);
}

TEST_CASE("control variate cuts the bootstrap variance") {
    std::mt19937_64 rng(123);
    std::normal_distribution<double> gauss(0.0, 0.7);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const std::size_t n = 1000;
    std::vector<double> weights(n), losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        weights[i] = std::min(std::exp(gauss(rng)), 20.0);
        losses[i] = uni(rng) < 1.0 / (1.0 + std::exp(1.0 - weights[i])) ? 1.0 : 0.0;
    }

    std::vector<double> iwv_estimates, dev_estimates;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int resample = 0; resample < 100; ++resample) {
        ImportanceWeights iw;
        std::vector<double> l(n);
        iw.weights.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = pick(rng);
            iw.weights[i] = weights[j];
            l[i] = losses[j];
        }
        iwv_estimates.push_back(iwv_risk(l, iw).value);
        dev_estimates.push_back(dev_risk(l, iw).value);
    }

    const auto variance = [](const std::vector<double>& v) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double acc = 0.0;
        for (const double x : v) acc += (x - mean) * (x - mean);
        return acc / double(v.size() - 1);
    };
    CHECK(variance(dev_estimates) <= variance(iwv_estimates));
}

TEST_CASE("relative within-class variance extremes") {
    // every sample sits on its class mean
    const auto tight = features_2d({{0, 0}, {0, 0}, {5, 5}, {5, 5}});
    CHECK(relative_within_class_variance(tight, {{0, 0, 1, 1}}) == 0.0);

    // two classes built so within-class spread is exactly half the total
    const auto half = features_2d({{1 - 1, 0}, {1 + 1, 0}, {-1 - 1, 0}, {-1 + 1, 0}});
    CHECK(relative_within_class_variance(half, {{0, 0, 1, 1}}) == doctest::Approx(0.5));

    // random labels on one blob: within ~ total
    const auto blob = gaussian_blob(2000, 0.0, 0.0, 11);
    std::vector<std::uint32_t> random_labels(2000);
    std::mt19937_64 rng(12);
    for (auto& l : random_labels) l = rng() % 2;
    CHECK(std::abs(relative_within_class_variance(blob, {random_labels}) - 1.0) <= 0.05);

    const auto constant = features_2d({{1, 1}, {1, 1}});
    CHECK_THROWS_AS(relative_within_class_variance(constant, {{0, 1}}), ValidationError);
    CHECK_THROWS_AS(relative_within_class_variance(blob, {{0, 1}}), ValidationError);
}

TEST_CASE("softmax features cluster tighter than raw logits") {
    // well-separated clusters with saturating logits: softmax squashes the
    // within-class noise, raw logits keep it
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = 300, c = 3;
    LogitMatrix logits;
    logits.n_samples = n;
    logits.n_classes = c;
    logits.values.resize(n * c);
    ProbMatrix probs;
    probs.n_samples = n;
    probs.n_classes = c;
    probs.values.resize(n * c);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = std::uint32_t(i % c);
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            logits.values[i * c + k] = (k == labels[i] ? 8.0 : 0.0) + gauss(rng);
            z += std::exp(logits.values[i * c + k]);
        }
        for (std::size_t k = 0; k < c; ++k)
            probs.values[i * c + k] = std::exp(logits.values[i * c + k]) / z;
    }

    FeatureMatrix logit_features;
    logit_features.n_samples = n;
    logit_features.dim = c;
    logit_features.values = logits.values;
    FeatureMatrix softmax_features;
    softmax_features.n_samples = n;
    softmax_features.dim = c;
    softmax_features.values = probs.values;

    CHECK(relative_within_class_variance(softmax_features, {labels}) <
          relative_within_class_variance(logit_features, {labels}));
}

} // TEST_SUITE("criteria")
