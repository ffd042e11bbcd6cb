#pragma once

#include <array>

#include "nbrselect/selection.hpp"

namespace nbrselect {

// How the unlabeled-target term of the training objective is built:
//   adversarial - domain-confusion loss through a gradient reversal layer
//   collapse    - cross-entropy pushing every target sample to class 0
// lambda_adv = 0 reduces either mode to plain source training.
enum class AdaptMode { adversarial, collapse };

struct ToyConfig {
    std::vector<std::array<double, 2>> source_means = {{{0.0, 0.0}}, {{5.0, 5.0}}};
    double source_std = 1.0;
    std::array<double, 2> target_shift = {3.0, 3.0};
    std::vector<std::size_t> target_classes = {0, 1};  // classes present in target
    std::vector<std::size_t> shifted_classes = {1};    // which of those get shifted
    std::size_t n_per_class = 150;
    double lambda_adv = 1.0;
    std::size_t hidden_units = 15;
    std::size_t epochs = 500;
    double learning_rate = 0.05;
    std::uint64_t rng_seed = 0;
    std::size_t target_modes = 1; // >1: target drawn from that many clusters instead
    AdaptMode mode = AdaptMode::adversarial;
};

// 2-d points, row-major. Target labels exist for evaluation bookkeeping only;
// training never reads them.
struct ToyData {
    std::vector<double> source_x;
    std::vector<std::uint32_t> source_y;
    std::vector<double> target_x;
    std::vector<std::uint32_t> target_y;

    std::size_t n_source() const { return source_y.size(); }
    std::size_t n_target() const { return target_y.size(); }
};

// 2 -> hidden (tanh) -> {2-way class head, 1-way domain head}.
// Inputs pass through a fixed standardization (set once from the training
// inputs, never trained) so raw coordinates of any magnitude reach the tanh
// units in a trainable range. Parameter flattening order: w1, b1, wc, bc,
// wd, bd; the standardization constants are not parameters.
struct MlpModel {
    std::size_t hidden_units = 0;
    std::array<double, 2> input_mean = {0.0, 0.0};
    std::array<double, 2> input_scale = {1.0, 1.0};
    std::vector<double> w1, b1; // [2*h], [h]
    std::vector<double> wc, bc; // [h*2], [2]
    std::vector<double> wd, bd; // [h], [1]

    std::size_t parameter_count() const;
    double& parameter(std::size_t flat_index);
    double parameter(std::size_t flat_index) const;
};

struct TrainingLog {
    std::vector<double> source_loss; // epochs+1 entries; [0] is pre-update
    std::vector<double> adapt_loss;
};

struct ToyRun {
    MlpModel model;
    ProbMatrix target_probs; // class probabilities on the target set
    ToyData data;
    TrainingLog log;
};

ToyData generate_toy_data(const ToyConfig& config);

// Backward pass of the gradient reversal layer: forward is identity, backward
// scales the incoming gradient by -lambda_adv.
std::vector<double> grl_backward(std::span<const double> upstream, double lambda_adv);

MlpModel init_toy_model(std::size_t hidden_units, std::uint64_t seed);

ProbMatrix predict_probs(const MlpModel& model, std::span<const double> points);

// Mean cross-entropy of the class head on (points, labels).
double classifier_ce_loss(const MlpModel& model, std::span<const double> points,
                          std::span<const std::uint32_t> labels);

// Mean binary cross-entropy of the domain head; domain_labels are 1 for
// source rows and 0 for target rows.
double domain_bce_loss(const MlpModel& model, std::span<const double> points,
                       std::span<const double> domain_labels);

// Full parameter gradient of one training step, flattened in MlpModel order.
// In adversarial mode the domain-loss gradient reaches the trunk through
// grl_backward; in collapse mode the target term is lambda_adv * CE(target
// rows -> class 0).
std::vector<double> composite_gradient(const MlpModel& model, const ToyData& data,
                                       double lambda_adv, AdaptMode mode);

// Per-sample stochastic gradient descent, reshuffled each epoch from a seeded
// stream. Deterministic: the same config yields bit-identical parameters.
// Throws ValidationError if the loss leaves the finite range.
ToyRun train_toy(const ToyConfig& config);

enum class ToyExperiment {
    false_alignment,
    variance_sweep,
    mode_count,
    degenerate_collapse,
    temperature_sweep,
    subsample_sweep,
};

std::optional<ToyExperiment> experiment_from_name(std::string_view name);
const char* experiment_name(ToyExperiment e);
std::vector<const char*> experiment_names();

struct ExperimentRow {
    std::string sweep_variable;
    std::uint64_t seed;
    double snd;
    double c_ent;
    double target_accuracy_oracle;
};

struct ExperimentRecord {
    ToyExperiment experiment;
    std::vector<ExperimentRow> rows;
    bool passed = false;
    std::string detail; // one-line account of the checked condition
};

// Runs one named experiment over seeds {rng_seed, rng_seed+1, rng_seed+2}.
// When out_dir is nonempty, writes <name>.csv, the prediction dumps, and a
// per-seed manifest so the dumps can be scored by the main CLI.
ExperimentRecord run_experiment(ToyExperiment experiment, const ToyConfig& base,
                                const SndConfig& snd_config,
                                const std::filesystem::path& out_dir);

std::string experiment_csv(const ExperimentRecord& record);

} // namespace nbrselect
