#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "nbrselect/errors.hpp"
#include "nbrselect/toy_lab.hpp"
#include "nbrselect/util.hpp"
#include "test_helpers.hpp"

using namespace nbrselect;
using testutil::TempDir;

namespace {

ToyConfig small_config() {
    ToyConfig cfg;
    cfg.n_per_class = 40;
    cfg.hidden_units = 8;
    cfg.epochs = 60;
    return cfg;
}

std::array<double, 2> mean_of_class(std::span<const double> xs,
                                    std::span<const std::uint32_t> ys, std::uint32_t cls) {
    std::array<double, 2> m = {0.0, 0.0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < ys.size(); ++i)
        if (ys[i] == cls) {
            m[0] += xs[2 * i];
            m[1] += xs[2 * i + 1];
            ++n;
        }
    REQUIRE(n > 0);
    m[0] /= double(n);
    m[1] /= double(n);
    return m;
}

double point_variance(std::span<const double> xs) {
    const std::size_t n = xs.size() / 2;
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cx += xs[2 * i];
        cy += xs[2 * i + 1];
    }
    cx /= double(n);
    cy /= double(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[2 * i] - cx;
        const double dy = xs[2 * i + 1] - cy;
        v += dx * dx + dy * dy;
    }
    return v / double(n);
}

// The adversarial update is not the gradient of one scalar (the trunk climbs
// the domain loss the head descends), so the difference oracle splits it into
// three real objectives: the source classification loss, the domain loss with
// the trunk pinned at the base point, and minus lambda times the domain loss
// with the head pinned at the base point.
double update_objective(const MlpModel& frozen, const MlpModel& varied,
                        const ToyData& data, double lambda_adv, AdaptMode mode) {
    const double ce = classifier_ce_loss(varied, data.source_x, data.source_y);
    if (mode == AdaptMode::collapse) {
        const std::vector<std::uint32_t> zeros(data.n_target(), 0u);
        return ce + lambda_adv * classifier_ce_loss(varied, data.target_x, zeros);
    }
    MlpModel head_moves = frozen;
    head_moves.wd = varied.wd;
    head_moves.bd = varied.bd;
    MlpModel trunk_moves = varied;
    trunk_moves.wd = frozen.wd;
    trunk_moves.bd = frozen.bd;

    std::vector<double> all_points = data.source_x;
    all_points.insert(all_points.end(), data.target_x.begin(), data.target_x.end());
    std::vector<double> domain_labels(data.n_source(), 1.0);
    domain_labels.resize(data.n_source() + data.n_target(), 0.0);

    return ce + domain_bce_loss(head_moves, all_points, domain_labels) -
           lambda_adv * domain_bce_loss(trunk_moves, all_points, domain_labels);
}

} // namespace

TEST_SUITE("toy_lab") {

TEST_CASE("generate_toy_data draws the configured counts around the means") {
    ToyConfig cfg = small_config();
    cfg.n_per_class = 400;
    const auto data = generate_toy_data(cfg);

    CHECK(data.n_source() == 800);
    CHECK(data.n_target() == 800);
    CHECK(data.source_x.size() == 1600);

    const double tol = 4.0 * cfg.source_std / std::sqrt(400.0);
    const auto m0 = mean_of_class(data.source_x, data.source_y, 0);
    CHECK(std::abs(m0[0] - 0.0) < tol);
    CHECK(std::abs(m0[1] - 0.0) < tol);
    const auto m1 = mean_of_class(data.source_x, data.source_y, 1);
    CHECK(std::abs(m1[0] - 5.0) < tol);
    CHECK(std::abs(m1[1] - 5.0) < tol);

    // class 1 is shifted in the target, class 0 is not
    const auto t0 = mean_of_class(data.target_x, data.target_y, 0);
    CHECK(std::abs(t0[0] - 0.0) < tol);
    const auto t1 = mean_of_class(data.target_x, data.target_y, 1);
    CHECK(std::abs(t1[0] - 8.0) < tol);
    CHECK(std::abs(t1[1] - 8.0) < tol);
}

TEST_CASE("an empty shift list reproduces the source marginal") {
    ToyConfig cfg = small_config();
    cfg.n_per_class = 500;
    cfg.shifted_classes = {};
    const auto data = generate_toy_data(cfg);
    for (std::uint32_t cls : {0u, 1u}) {
        const auto ms = mean_of_class(data.source_x, data.source_y, cls);
        const auto mt = mean_of_class(data.target_x, data.target_y, cls);
        CHECK(std::abs(ms[0] - mt[0]) < 0.2);
        CHECK(std::abs(ms[1] - mt[1]) < 0.2);
    }
}

TEST_CASE("more target modes spread the target set wider") {
    ToyConfig cfg = small_config();
    cfg.n_per_class = 300;
    cfg.target_modes = 1;
    cfg.shifted_classes = {};
    cfg.target_classes = {0};
    const auto one = generate_toy_data(cfg);
    cfg.target_modes = 6;
    const auto six = generate_toy_data(cfg);

    CHECK(six.n_target() == one.n_target());
    CHECK(point_variance(six.target_x) > 1.5 * point_variance(one.target_x));

    // ring labels come from the nearest source mean
    for (std::size_t i = 0; i < six.n_target(); ++i) {
        const double d0 = std::hypot(six.target_x[2 * i], six.target_x[2 * i + 1]);
        const double d1 =
            std::hypot(six.target_x[2 * i] - 5.0, six.target_x[2 * i + 1] - 5.0);
        CHECK(six.target_y[i] == (d0 <= d1 ? 0u : 1u));
    }
}

TEST_CASE("data generation is deterministic and seed-sensitive") {
    const ToyConfig cfg = small_config();
    const auto a = generate_toy_data(cfg);
    const auto b = generate_toy_data(cfg);
    CHECK(a.source_x == b.source_x);
    CHECK(a.target_x == b.target_x);
    CHECK(a.source_y == b.source_y);

    ToyConfig other = cfg;
    other.rng_seed = 1;
    CHECK(generate_toy_data(other).source_x != a.source_x);
}

TEST_CASE("config validation rejects degenerate settings") {
    const auto expect_reject = [](auto mutate) {
        ToyConfig cfg = small_config();
        mutate(cfg);
        CHECK_THROWS_AS(generate_toy_data(cfg), ValidationError);
    };
    expect_reject([](ToyConfig& c) { c.n_per_class = 9; });
    expect_reject([](ToyConfig& c) { c.hidden_units = 1; });
    expect_reject([](ToyConfig& c) { c.learning_rate = 0.0; });
    expect_reject([](ToyConfig& c) { c.learning_rate = -0.1; });
    expect_reject([](ToyConfig& c) { c.source_std = 0.0; });
    expect_reject([](ToyConfig& c) { c.lambda_adv = -1.0; });
    expect_reject([](ToyConfig& c) { c.target_modes = 0; });
    expect_reject([](ToyConfig& c) { c.target_classes = {}; });
    expect_reject([](ToyConfig& c) { c.target_classes = {7}; });
    expect_reject([](ToyConfig& c) { c.shifted_classes = {7}; });
    expect_reject([](ToyConfig& c) { c.source_means = {{{0.0, 0.0}}}; });
}

TEST_CASE("grl_backward flips and scales the upstream gradient") {
    const std::vector<double> up = {1.0, -2.0, 3.0};
    CHECK(grl_backward(up, 0.0) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(grl_backward(up, 1.0) == std::vector<double>{-1.0, 2.0, -3.0});
    CHECK(grl_backward(up, 2.5) == std::vector<double>{-2.5, 5.0, -7.5});
}

TEST_CASE("init_toy_model shapes, zero biases, determinism") {
    const auto m = init_toy_model(15, 42);
    CHECK(m.hidden_units == 15);
    CHECK(m.w1.size() == 30);
    CHECK(m.b1.size() == 15);
    CHECK(m.wc.size() == 30);
    CHECK(m.bc.size() == 2);
    CHECK(m.wd.size() == 15);
    CHECK(m.bd.size() == 1);
    CHECK(m.parameter_count() == 93);
    for (double b : m.b1) CHECK(b == 0.0);
    CHECK(m.bc[0] == 0.0);
    CHECK(m.bd[0] == 0.0);

    const auto again = init_toy_model(15, 42);
    CHECK(m.w1 == again.w1);
    CHECK(m.wc == again.wc);
    CHECK(m.wd == again.wd);
    CHECK(init_toy_model(15, 43).w1 != m.w1);
    CHECK_THROWS_AS(init_toy_model(1, 0), ValidationError);
}

TEST_CASE("parameter() walks the flattened blocks in declared order") {
    auto m = init_toy_model(3, 7);
    CHECK(&m.parameter(0) == &m.w1[0]);
    CHECK(&m.parameter(6) == &m.b1[0]);
    CHECK(&m.parameter(9) == &m.wc[0]);
    CHECK(&m.parameter(15) == &m.bc[0]);
    CHECK(&m.parameter(17) == &m.wd[0]);
    CHECK(&m.parameter(20) == &m.bd[0]);
    CHECK_THROWS_AS(m.parameter(21), ValidationError);
}

TEST_CASE("predict_probs rows are normalized probabilities") {
    const auto m = init_toy_model(8, 3);
    std::vector<double> pts;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int i = 0; i < 40; ++i) pts.push_back(g(rng));
    const auto probs = predict_probs(m, pts);
    CHECK(probs.n_samples == 20);
    CHECK(probs.n_classes == 2);
    for (std::size_t i = 0; i < probs.n_samples; ++i) {
        const auto row = probs.row(i);
        CHECK(row[0] >= 0.0);
        CHECK(row[1] >= 0.0);
        CHECK(std::abs(row[0] + row[1] - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(predict_probs(m, std::vector<double>{}), ValidationError);
}

TEST_CASE("losses match a hand-rolled forward pass") {
    MlpModel m;
    m.hidden_units = 2;
    m.w1 = {0.5, 0.3, -0.25, 0.8}; // x0 -> (h0,h1), x1 -> (h0,h1)
    m.b1 = {0.1, -0.2};
    m.wc = {1.0, -1.0, 0.5, 0.25}; // unit j -> class k at wc[2j+k]
    m.bc = {0.05, -0.05};
    m.wd = {0.7, -0.4};
    m.bd = {0.2};

    const std::vector<double> pts = {1.0, -0.5};
    const double a0 = std::tanh(1.0 * 0.5 + (-0.5) * (-0.25) + 0.1);
    const double a1 = std::tanh(1.0 * 0.3 + (-0.5) * 0.8 + (-0.2));
    const double l0 = 0.05 + a0 * 1.0 + a1 * 0.5;
    const double l1 = -0.05 + a0 * (-1.0) + a1 * 0.25;
    const double p0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));

    const std::vector<std::uint32_t> label0 = {0};
    CHECK(classifier_ce_loss(m, pts, label0) == doctest::Approx(-std::log(p0)).epsilon(1e-12));
    const std::vector<std::uint32_t> label1 = {1};
    CHECK(classifier_ce_loss(m, pts, label1) ==
          doctest::Approx(-std::log(1.0 - p0)).epsilon(1e-12));

    const double z = 0.2 + a0 * 0.7 + a1 * (-0.4);
    const double pd = 1.0 / (1.0 + std::exp(-z));
    const std::vector<double> source_label = {1.0};
    CHECK(domain_bce_loss(m, pts, source_label) ==
          doctest::Approx(-std::log(pd)).epsilon(1e-12));
    const std::vector<double> target_label = {0.0};
    CHECK(domain_bce_loss(m, pts, target_label) ==
          doctest::Approx(-std::log(1.0 - pd)).epsilon(1e-12));

    // a zeroed trunk pins every activation at tanh(0), so both heads sit at
    // their biases: uniform class probabilities and a 0.5 domain probability
    MlpModel flat = m;
    flat.w1 = {0.0, 0.0, 0.0, 0.0};
    flat.b1 = {0.0, 0.0};
    flat.bc = {0.0, 0.0};
    flat.bd = {0.0};
    CHECK(classifier_ce_loss(flat, pts, label0) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(domain_bce_loss(flat, pts, source_label) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // standardization is applied before the first layer
    MlpModel shifted = m;
    shifted.input_mean = {2.0, 1.0};
    shifted.input_scale = {4.0, 2.0};
    const std::vector<double> raw = {2.0 + 4.0 * 1.0, 1.0 + 2.0 * (-0.5)};
    CHECK(classifier_ce_loss(shifted, raw, label0) ==
          doctest::Approx(classifier_ce_loss(m, pts, label0)).epsilon(1e-12));

    const std::vector<std::uint32_t> two = {0, 1};
    CHECK_THROWS_AS(classifier_ce_loss(m, pts, two), ValidationError);
    CHECK_THROWS_AS(domain_bce_loss(m, pts, std::vector<double>{1.0, 0.0}),
                    ValidationError);
}

TEST_CASE("composite_gradient matches central differences in both modes") {
    constexpr double h_step = 1e-5;
    constexpr double rel_tol = 1e-4;

    for (const AdaptMode mode : {AdaptMode::adversarial, AdaptMode::collapse}) {
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            ToyConfig cfg = small_config();
            cfg.rng_seed = seed;
            cfg.epochs = 0; // standardized model + matching data, no updates
            cfg.mode = mode;
            const auto run = train_toy(cfg);
            const double lambda = 0.8;
            const auto grad = composite_gradient(run.model, run.data, lambda, mode);
            REQUIRE(grad.size() == run.model.parameter_count());

            std::mt19937_64 pick(seed * 31 + (mode == AdaptMode::collapse ? 1 : 0));
            std::size_t tested = 0;
            std::size_t guard = 0;
            while (tested < 10 && guard++ < 200) {
                const std::size_t i = pick() % grad.size();
                // differences are only informative where the slope is live
                if (std::abs(grad[i]) < 1e-5) continue;
                MlpModel plus = run.model;
                plus.parameter(i) += h_step;
                MlpModel minus = run.model;
                minus.parameter(i) -= h_step;
                const double fd = (update_objective(run.model, plus, run.data, lambda, mode) -
                                   update_objective(run.model, minus, run.data, lambda, mode)) /
                                  (2.0 * h_step);
                CHECK(std::abs(fd - grad[i]) / std::abs(grad[i]) <= rel_tol);
                ++tested;
            }
            REQUIRE(tested == 10);
        }
    }
}

TEST_CASE("composite_gradient leaves the domain head alone in collapse mode") {
    ToyConfig cfg = small_config();
    cfg.epochs = 0;
    const auto run = train_toy(cfg);
    const auto grad = composite_gradient(run.model, run.data, 1.0, AdaptMode::collapse);
    const std::size_t head_start = grad.size() - run.model.hidden_units - 1;
    for (std::size_t i = head_start; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("composite_gradient needs samples on both sides") {
    ToyConfig cfg = small_config();
    cfg.epochs = 0;
    const auto run = train_toy(cfg);
    ToyData empty_target = run.data;
    empty_target.target_x.clear();
    empty_target.target_y.clear();
    CHECK_THROWS_AS(composite_gradient(run.model, empty_target, 1.0, AdaptMode::adversarial),
                    ValidationError);
}

TEST_CASE("source-only training separates the default clusters") {
    ToyConfig cfg = small_config();
    cfg.n_per_class = 50;
    cfg.epochs = 200;
    cfg.lambda_adv = 0.0;
    const auto run = train_toy(cfg);
    const auto losses =
        zero_one_losses(predict_probs(run.model, run.data.source_x), {run.data.source_y});
    const double err =
        std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size());
    CHECK(err <= 0.02);
    CHECK(run.target_probs.n_samples == run.data.n_target());
}

TEST_CASE("training logs one entry per epoch plus the starting point") {
    ToyConfig cfg = small_config();
    cfg.epochs = 25;
    const auto run = train_toy(cfg);
    CHECK(run.log.source_loss.size() == 26);
    CHECK(run.log.adapt_loss.size() == 26);

    for (std::uint64_t seed : {0u, 1u, 2u}) {
        ToyConfig c = small_config();
        c.rng_seed = seed;
        c.epochs = 60;
        c.lambda_adv = 0.0;
        const auto r = train_toy(c);
        CHECK(r.log.source_loss[10] < r.log.source_loss[0]);
    }
}

TEST_CASE("zero epochs keep the initial weights and still standardize") {
    ToyConfig cfg = small_config();
    cfg.epochs = 0;
    const auto run = train_toy(cfg);
    CHECK(run.log.source_loss.size() == 1);

    const auto fresh = init_toy_model(cfg.hidden_units, mix_seed(cfg.rng_seed, 22));
    CHECK(run.model.w1 == fresh.w1);
    CHECK(run.model.wc == fresh.wc);
    CHECK(run.model.wd == fresh.wd);
    CHECK(run.model.input_scale[0] > 1.0); // learned from the spread-out data
}

TEST_CASE("training is bit-for-bit deterministic") {
    const ToyConfig cfg = small_config();
    const auto a = train_toy(cfg);
    const auto b = train_toy(cfg);
    CHECK(a.model.w1 == b.model.w1);
    CHECK(a.model.b1 == b.model.b1);
    CHECK(a.model.wc == b.model.wc);
    CHECK(a.model.bc == b.model.bc);
    CHECK(a.model.wd == b.model.wd);
    CHECK(a.model.bd == b.model.bd);
    CHECK(a.target_probs.values == b.target_probs.values);
    CHECK(a.log.source_loss == b.log.source_loss);
}

TEST_CASE("an absurd learning rate is reported as divergence") {
    ToyConfig cfg = small_config();
    // large enough that a single update overflows a weight; the losses
    // themselves are evaluated stably and stay finite below that point
    cfg.learning_rate = 1e307;
    cfg.epochs = 5;
    CHECK_THROWS_WITH_AS(train_toy(cfg), doctest::Contains("diverged"), ValidationError);
}

TEST_CASE("experiment names round-trip") {
    for (const char* name : experiment_names()) {
        const auto e = experiment_from_name(name);
        REQUIRE(e.has_value());
        CHECK(experiment_name(*e) == std::string(name));
    }
    CHECK(!experiment_from_name("nonsense").has_value());
    CHECK(experiment_names().size() == 6);
}

TEST_CASE("a small false-alignment run produces scoreable artifacts") {
    TempDir tmp("toy_smoke");
    ToyConfig cfg = small_config();
    cfg.epochs = 30;
    cfg.n_per_class = 20;
    const auto rec =
        run_experiment(ToyExperiment::false_alignment, cfg, SndConfig{}, tmp.path);

    REQUIRE(rec.rows.size() == 6); // {lambda=0, lambda=1} x 3 seeds
    CHECK(rec.rows[0].sweep_variable == "lambda=0");
    CHECK(rec.rows[1].sweep_variable == "lambda=1");
    CHECK(rec.rows[0].seed == 0);
    CHECK(rec.rows[2].seed == 1);
    CHECK(!rec.detail.empty());
    for (const auto& row : rec.rows) {
        CHECK(std::isfinite(row.snd));
        CHECK(row.c_ent >= 0.0);
        CHECK(row.target_accuracy_oracle >= 0.0);
        CHECK(row.target_accuracy_oracle <= 1.0);
    }

    const auto csv = experiment_csv(rec);
    CHECK(csv.rfind("sweep_variable,seed,snd,c_ent,target_accuracy_oracle\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(std::filesystem::exists(tmp.file("false_alignment.csv")));

    // the dumps it wrote are a manifest the scoring pipeline accepts
    const auto manifest = load_manifest(tmp.file("manifest_seed0.json"));
    REQUIRE(manifest.checkpoints.size() == 2);
    const auto report = score_manifest(manifest, {Criterion::snd, Criterion::c_ent});
    CHECK(report.checkpoints.size() == 2);
    REQUIRE(report.oracle_winner.has_value());
    for (const auto& cp : report.checkpoints) {
        CHECK(cp.scores.size() == 2);
        REQUIRE(cp.oracle_accuracy.has_value());
    }

    // the record's own numbers match an independent rescore of the dumps, up
    // to the float32 quantization the binary format applies
    const auto probs = load_prob_matrix(tmp.file("preds_lambda0_seed0.prb"));
    CHECK(snd(prepare_features(probs), SndConfig{}).value ==
          doctest::Approx(rec.rows[0].snd).epsilon(1e-5));
    CHECK(class_entropy(probs).value == doctest::Approx(rec.rows[0].c_ent).epsilon(1e-5));
}

TEST_CASE("experiment runs are deterministic") {
    ToyConfig cfg = small_config();
    cfg.epochs = 20;
    cfg.n_per_class = 15;
    const auto a = run_experiment(ToyExperiment::degenerate_collapse, cfg, SndConfig{}, {});
    const auto b = run_experiment(ToyExperiment::degenerate_collapse, cfg, SndConfig{}, {});
    CHECK(experiment_csv(a) == experiment_csv(b));
}

} // TEST_SUITE("toy_lab")
