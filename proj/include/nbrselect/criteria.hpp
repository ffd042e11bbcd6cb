#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "nbrselect/snd.hpp"

namespace nbrselect {

// Validation criteria this tool can score a checkpoint with. `snd` and
// `snd_no_softmax` are maximized, everything else is a risk and minimized.
enum class Criterion { snd, snd_no_softmax, c_ent, source_risk, iwv, dev };

enum class Direction { maximize, minimize };

Direction criterion_direction(Criterion c);
const char* criterion_name(Criterion c);
const char* direction_name(Direction d);
std::optional<Criterion> criterion_from_name(std::string_view name);

struct CriterionScore {
    Criterion criterion;
    double value;
    Direction direction;
};

// Domain-discriminator settings shared by the importance-weighted criteria.
struct DevConfig {
    std::size_t val_per_class = 3;       // held-out source rows expected per class
    std::size_t discriminator_epochs = 200;
    double discriminator_lr = 0.1;
    double l2_penalty = 1e-3;
    std::uint64_t rng_seed = 0;
    double weight_clip = 20.0;
};

struct ImportanceWeights {
    std::vector<double> weights;     // one per source-validation sample
    std::vector<double> source_prob; // discriminator P(source | x), same order
};

// Mean prediction entropy in nats (0*log 0 counted as 0). Low entropy means
// confident predictions; confidence is not accuracy, which is the point of
// comparing this criterion against density-based ones.
CriterionScore class_entropy(const ProbMatrix& probs);

// Mean argmax 0/1 error on held-out source rows. Argmax ties resolve to the
// lowest class index.
CriterionScore source_risk(const ProbMatrix& probs, const LabelVector& labels);

// The per-sample 0/1 losses behind source_risk, for reuse by the weighted
// criteria.
std::vector<double> zero_one_losses(const ProbMatrix& probs, const LabelVector& labels);

std::size_t argmax_class(std::span<const double> row);

// Logistic regression separating source-validation rows (label 1) from target
// rows (label 0), trained full-batch with L2 penalty. Returns importance
// weights w_i = (n_s/n_t) * (1 - d_i)/d_i clipped at weight_clip, where d_i
// is the fitted source probability of source-validation row i. Deterministic
// for a fixed config.
ImportanceWeights fit_domain_discriminator(const FeatureMatrix& source_val,
                                           const FeatureMatrix& target,
                                           const DevConfig& config);

// Importance-weighted validation risk: mean_i w_i * loss_i.
CriterionScore iwv_risk(std::span<const double> losses, const ImportanceWeights& iw);

// Control-variate refinement of iwv_risk: mean(WL) + eta * mean(W) - eta with
// eta = -Cov(WL, W)/Var(W). Falls back to iwv_risk when Var(W) < 1e-12.
CriterionScore dev_risk(std::span<const double> losses, const ImportanceWeights& iw);

// Sum of squared distances to class means over sum of squared distances to
// the global mean. Lies in [0, 1]; smaller means tighter class clusters.
double relative_within_class_variance(const FeatureMatrix& features,
                                      const LabelVector& labels);

} // namespace nbrselect
