#pragma once

#include <compare>
#include <map>
#include <set>

#include "nbrselect/criteria.hpp"

namespace nbrselect {

struct CheckpointKey {
    std::string run_id;
    std::uint64_t iteration = 0;

    auto operator<=>(const CheckpointKey&) const = default;
};

struct ScoredCheckpoint {
    CheckpointKey key;
    std::vector<CriterionScore> scores;    // requested criteria, enum order
    std::optional<double> oracle_accuracy; // present only when labels were given
};

struct SelectionReport {
    std::vector<ScoredCheckpoint> checkpoints; // sorted by (run_id, iteration)
    std::map<Criterion, CheckpointKey> winners;
    std::optional<CheckpointKey> oracle_winner; // reported, never selects
};

// Scores every checkpoint in the manifest with every requested criterion.
// Before scoring, verifies that each checkpoint carries the dumps its
// requested criteria need and names the first one that does not.
// Segmentation manifests support snd, c_ent and source_risk.
SelectionReport score_manifest(const Manifest& manifest,
                               const std::set<Criterion>& criteria,
                               const SndConfig& snd_config = {},
                               const DevConfig& dev_config = {});

// Per-criterion extremum with deterministic tie-breaking: equal values go to
// the earlier iteration, then the lexicographically smaller run_id.
std::map<Criterion, CheckpointKey> determine_winners(
    const std::vector<ScoredCheckpoint>& checkpoints);

// Picks the candidate source domain whose predictions on the shared target
// set have the highest soft neighborhood density. Ties go to the
// lexicographically smallest name. Requires >= 2 candidates with identical
// shapes.
std::string select_source_domain(const std::map<std::string, ProbMatrix>& candidates,
                                 const SndConfig& config = {});

std::string report_to_json(const SelectionReport& report);
std::string report_to_csv(const SelectionReport& report);
SelectionReport report_from_json(const std::string& json_text);

// Writes both renderings. Emission is deterministic: scoring the same inputs
// twice produces byte-identical files.
void emit_report(const SelectionReport& report, const std::filesystem::path& json_path,
                 const std::filesystem::path& csv_path);

} // namespace nbrselect
