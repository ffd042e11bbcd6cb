#include "nbrselect/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nbrselect/errors.hpp"
#include "nbrselect/util.hpp"

namespace nbrselect {

namespace {

using nlohmann::json;

std::string checkpoint_label(const CheckpointRecord& cp) {
    return "checkpoint run_id '" + cp.run_id + "' iteration " +
           std::to_string(cp.iteration);
}

bool needs_source_val(Criterion c) {
    return c == Criterion::source_risk || c == Criterion::iwv || c == Criterion::dev;
}

// Criteria a segmentation manifest can be scored with. The weighted-risk pair
// needs a domain discriminator over target features, which the per-pixel dump
// format does not feed, and logit dumps are classification-shaped.
bool segmentation_supports(Criterion c) {
    return c == Criterion::snd || c == Criterion::c_ent || c == Criterion::source_risk;
}

void check_requested_criteria(const Manifest& manifest, const std::set<Criterion>& criteria) {
    if (criteria.empty()) return;
    for (Criterion c : criteria) {
        if (manifest.task == Task::segmentation && !segmentation_supports(c))
            throw ValidationError(std::string("criterion ") + criterion_name(c) +
                                  " is not supported for segmentation manifests");
    }
    for (const auto& cp : manifest.checkpoints) {
        for (Criterion c : criteria) {
            if (needs_source_val(c) && !cp.source_val_probs)
                throw ValidationError(std::string("criterion ") + criterion_name(c) +
                                      " needs source validation dumps, but " +
                                      checkpoint_label(cp) + " has none");
            if (c == Criterion::snd_no_softmax && !cp.target_logits)
                throw ValidationError(std::string("criterion snd_no_softmax needs a "
                                                  "target logit dump, but ") +
                                      checkpoint_label(cp) + " has none");
        }
    }
}

double oracle_accuracy(const ProbMatrix& probs, const LabelVector& labels) {
    const std::size_t n = probs.n_samples;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (argmax_class(probs.row(i)) == labels.labels[i]) ++correct;
    return double(correct) / double(n);
}

} // namespace

std::map<Criterion, CheckpointKey> determine_winners(
    const std::vector<ScoredCheckpoint>& checkpoints) {
    std::map<Criterion, CheckpointKey> winners;
    std::map<Criterion, double> best_value;
    for (const auto& cp : checkpoints) {
        for (const auto& score : cp.scores) {
            const auto it = best_value.find(score.criterion);
            bool take = false;
            if (it == best_value.end()) {
                take = true;
            } else if (score.value != it->second) {
                take = score.direction == Direction::maximize ? score.value > it->second
                                                              : score.value < it->second;
            } else {
                // Exact tie: earlier iteration wins, then smaller run_id.
                const auto& cur = winners[score.criterion];
                take = cp.key.iteration < cur.iteration ||
                       (cp.key.iteration == cur.iteration && cp.key.run_id < cur.run_id);
            }
            if (take) {
                best_value[score.criterion] = score.value;
                winners[score.criterion] = cp.key;
            }
        }
    }
    return winners;
}

SelectionReport score_manifest(const Manifest& manifest,
                               const std::set<Criterion>& criteria,
                               const SndConfig& snd_config, const DevConfig& dev_config) {
    check_requested_criteria(manifest, criteria);

    std::optional<LabelVector> target_labels;
    if (manifest.target_labels) target_labels = load_labels(*manifest.target_labels);

    SelectionReport report;
    for (const auto& cp : manifest.checkpoints) {
        ScoredCheckpoint scored;
        scored.key = {cp.run_id, cp.iteration};

        // Loaded lazily: a segmentation dump and a classification dump never
        // both exist for one checkpoint.
        std::optional<ProbMatrix> target_probs;
        std::optional<SegmentationDump> seg_dump;
        if (manifest.task == Task::segmentation)
            seg_dump = load_segmentation(cp.target_probs);
        else
            target_probs = load_prob_matrix(cp.target_probs);

        std::optional<ProbMatrix> source_probs;
        std::optional<LabelVector> source_labels;
        std::optional<ImportanceWeights> weights; // shared by iwv and dev
        auto ensure_source = [&]() {
            if (!source_probs) {
                source_probs = load_prob_matrix(*cp.source_val_probs);
                source_labels = load_labels(*cp.source_val_labels);
            }
        };
        auto ensure_weights = [&]() {
            ensure_source();
            if (!weights)
                weights = fit_domain_discriminator(prepare_features(*source_probs),
                                                   prepare_features(*target_probs),
                                                   dev_config);
        };

        for (Criterion c : criteria) {
            switch (c) {
                case Criterion::snd:
                    if (seg_dump)
                        scored.scores.push_back({Criterion::snd,
                                                 snd_segmentation(*seg_dump, snd_config).value,
                                                 Direction::maximize});
                    else
                        scored.scores.push_back(
                            {Criterion::snd,
                             snd(prepare_features(*target_probs), snd_config).value,
                             Direction::maximize});
                    break;
                case Criterion::snd_no_softmax: {
                    const auto logits = load_logit_matrix(*cp.target_logits);
                    scored.scores.push_back(
                        {Criterion::snd_no_softmax,
                         snd(prepare_features_logits(logits), snd_config).value,
                         Direction::maximize});
                    break;
                }
                case Criterion::c_ent:
                    scored.scores.push_back(class_entropy(
                        seg_dump ? flatten_segmentation(*seg_dump) : *target_probs));
                    break;
                case Criterion::source_risk:
                    ensure_source();
                    scored.scores.push_back(source_risk(*source_probs, *source_labels));
                    break;
                case Criterion::iwv: {
                    ensure_weights();
                    const auto losses = zero_one_losses(*source_probs, *source_labels);
                    scored.scores.push_back(iwv_risk(losses, *weights));
                    break;
                }
                case Criterion::dev: {
                    ensure_weights();
                    const auto losses = zero_one_losses(*source_probs, *source_labels);
                    scored.scores.push_back(dev_risk(losses, *weights));
                    break;
                }
            }
        }

        if (target_labels && target_probs)
            scored.oracle_accuracy = oracle_accuracy(*target_probs, *target_labels);
        report.checkpoints.push_back(std::move(scored));
    }

    std::sort(report.checkpoints.begin(), report.checkpoints.end(),
              [](const ScoredCheckpoint& a, const ScoredCheckpoint& b) {
                  return a.key < b.key;
              });
    report.winners = determine_winners(report.checkpoints);

    if (target_labels) {
        // Highest accuracy, same tie-breaking as the criteria. Reported next
        // to the unsupervised winners, never merged into them.
        const ScoredCheckpoint* best = nullptr;
        for (const auto& cp : report.checkpoints) {
            if (!cp.oracle_accuracy) continue;
            if (!best || *cp.oracle_accuracy > *best->oracle_accuracy)
                best = &cp;
            else if (*cp.oracle_accuracy == *best->oracle_accuracy &&
                     (cp.key.iteration < best->key.iteration ||
                      (cp.key.iteration == best->key.iteration &&
                       cp.key.run_id < best->key.run_id)))
                best = &cp;
        }
        if (best) report.oracle_winner = best->key;
    }
    return report;
}

std::string select_source_domain(const std::map<std::string, ProbMatrix>& candidates,
                                 const SndConfig& config) {
    if (candidates.size() < 2)
        throw ValidationError("select_source_domain: need at least 2 candidates, got " +
                              std::to_string(candidates.size()));
    const auto& first = *candidates.begin();
    for (const auto& [name, probs] : candidates)
        if (probs.n_samples != first.second.n_samples ||
            probs.n_classes != first.second.n_classes)
            throw ValidationError("select_source_domain: candidate '" + name +
                                  "' shape differs from '" + first.first + "'");

    // std::map iterates names ascending, and only a strictly larger value
    // displaces the incumbent, so exact ties keep the smaller name.
    std::string best_name;
    double best_value = -std::numeric_limits<double>::infinity();
    for (const auto& [name, probs] : candidates) {
        const double v = snd(prepare_features(probs), config).value;
        if (v > best_value) {
            best_value = v;
            best_name = name;
        }
    }
    return best_name;
}

// ----------------------------------------------------------------------------
// Rendering
// ----------------------------------------------------------------------------

std::string report_to_json(const SelectionReport& report) {
    json scores = json::array();
    for (const auto& cp : report.checkpoints)
        for (const auto& s : cp.scores)
            scores.push_back({{"run_id", cp.key.run_id},
                              {"iteration", cp.key.iteration},
                              {"criterion", criterion_name(s.criterion)},
                              {"value", s.value},
                              {"direction", direction_name(s.direction)}});

    json winners = json::object();
    for (const auto& [criterion, key] : report.winners)
        winners[criterion_name(criterion)] = {{"run_id", key.run_id},
                                              {"iteration", key.iteration}};

    json oracle;
    if (report.oracle_winner) {
        json accuracy = json::array();
        for (const auto& cp : report.checkpoints)
            if (cp.oracle_accuracy)
                accuracy.push_back({{"run_id", cp.key.run_id},
                                    {"iteration", cp.key.iteration},
                                    {"value", *cp.oracle_accuracy}});
        oracle = {{"accuracy", accuracy},
                  {"winner",
                   {{"run_id", report.oracle_winner->run_id},
                    {"iteration", report.oracle_winner->iteration}}}};
    } else {
        oracle = nullptr;
    }

    const json doc = {{"scores", scores}, {"winners", winners}, {"oracle", oracle}};
    return doc.dump(2) + "\n";
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

} // namespace

std::string report_to_csv(const SelectionReport& report) {
    std::string out = "run_id,iteration,criterion,value,direction\n";
    for (const auto& cp : report.checkpoints)
        for (const auto& s : cp.scores) {
            out += csv_escape(cp.key.run_id);
            out += ',';
            out += std::to_string(cp.key.iteration);
            out += ',';
            out += criterion_name(s.criterion);
            out += ',';
            out += to_shortest_string(s.value);
            out += ',';
            out += direction_name(s.direction);
            out += '\n';
        }
    return out;
}

SelectionReport report_from_json(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    SelectionReport report;
    try {
        std::map<CheckpointKey, ScoredCheckpoint> by_key;
        for (const auto& entry : doc.at("scores")) {
            CheckpointKey key{entry.at("run_id").get<std::string>(),
                              entry.at("iteration").get<std::uint64_t>()};
            const auto criterion =
                criterion_from_name(entry.at("criterion").get<std::string>());
            if (!criterion)
                throw FormatError("report: unknown criterion '" +
                                  entry.at("criterion").get<std::string>() + "'");
            auto& cp = by_key[key];
            cp.key = key;
            cp.scores.push_back({*criterion, entry.at("value").get<double>(),
                                 criterion_direction(*criterion)});
        }
        for (auto& [key, cp] : by_key) report.checkpoints.push_back(std::move(cp));
        for (const auto& [name, value] : doc.at("winners").items()) {
            const auto criterion = criterion_from_name(name);
            if (!criterion) throw FormatError("report: unknown criterion '" + name + "'");
            report.winners[*criterion] = {value.at("run_id").get<std::string>(),
                                          value.at("iteration").get<std::uint64_t>()};
        }
        if (!doc.at("oracle").is_null()) {
            const auto& oracle = doc.at("oracle");
            report.oracle_winner =
                CheckpointKey{oracle.at("winner").at("run_id").get<std::string>(),
                              oracle.at("winner").at("iteration").get<std::uint64_t>()};
            for (const auto& entry : oracle.at("accuracy")) {
                CheckpointKey key{entry.at("run_id").get<std::string>(),
                                  entry.at("iteration").get<std::uint64_t>()};
                for (auto& cp : report.checkpoints)
                    if (cp.key == key) cp.oracle_accuracy = entry.at("value").get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    return report;
}

void emit_report(const SelectionReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path) {
    const auto write = [](const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
        out << text;
        out.flush();
        if (!out) throw IoError("failed writing '" + path.string() + "'");
    };
    write(json_path, report_to_json(report));
    write(csv_path, report_to_csv(report));
}

} // namespace nbrselect
