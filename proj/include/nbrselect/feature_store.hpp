#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nbrselect {

// ============================================================================
// Exported prediction dumps
//
// All dumps are little-endian. Payload values are float32 on disk and are
// promoted to double in memory. Loading never re-normalizes: what the model
// exported is what gets scored.
// ============================================================================

// Per-sample class probabilities, row-major.
// File layout: magic "PRB1", u32 n_samples, u32 n_classes, then
// n_samples*n_classes float32.
struct ProbMatrix {
    std::size_t n_samples = 0;
    std::size_t n_classes = 0;
    std::vector<double> values; // n_samples * n_classes

    double at(std::size_t i, std::size_t c) const { return values[i * n_classes + c]; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * n_classes, n_classes};
    }
};

// Pre-softmax outputs, same layout with magic "LGT1".
struct LogitMatrix {
    std::size_t n_samples = 0;
    std::size_t n_classes = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t c) const { return values[i * n_classes + c]; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * n_classes, n_classes};
    }
};

// Ground-truth class ids. File layout: magic "LBL1", u32 n, then n u32.
struct LabelVector {
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
};

// Per-pixel probabilities for one image, pixel-major: pixel (y,x) occupies
// n_classes consecutive values, pixels ordered row by row.
struct SegmentationImage {
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::uint32_t n_classes = 0;
    std::vector<double> probs; // height*width*n_classes

    std::size_t n_pixels() const { return std::size_t(height) * std::size_t(width); }
    std::span<const double> pixel(std::size_t p) const {
        return {probs.data() + p * n_classes, n_classes};
    }
};

// File layout: magic "SEG1", u32 n_images, then per image u32 h, u32 w,
// u32 c followed by h*w*c float32.
struct SegmentationDump {
    std::vector<SegmentationImage> images;
};

enum class Task { classification, segmentation, source_selection };

const char* task_name(Task t);
std::optional<Task> task_from_name(std::string_view name);

// One exported checkpoint. Paths are resolved relative to the manifest file.
struct CheckpointRecord {
    std::string run_id;
    std::map<std::string, double> hyperparams;
    std::uint64_t iteration = 0;
    std::filesystem::path target_probs;
    std::optional<std::filesystem::path> source_val_probs;
    std::optional<std::filesystem::path> source_val_labels;
    std::optional<std::filesystem::path> target_logits;
};

// A scoring job: a set of checkpoints over one shared target set.
// target_labels, when present, is used for reporting oracle accuracy only and
// never participates in selection.
struct Manifest {
    Task task = Task::classification;
    std::size_t n_classes = 0;
    std::vector<CheckpointRecord> checkpoints;
    std::optional<std::filesystem::path> target_labels;
};

inline constexpr double kProbRowTolerance = 1e-4;
inline constexpr double kSegmentationRowTolerance = 1e-3;

// Throws ValidationError naming the worst row when rows do not sum to 1
// within tolerance, or when any entry is outside [0, 1] or non-finite.
// `context` prefixes messages (usually the file path).
void validate_prob_matrix(const ProbMatrix& m, double row_tolerance = kProbRowTolerance,
                          const std::string& context = {});
void validate_logit_matrix(const LogitMatrix& m, const std::string& context = {});

// Binary loaders/savers. load_prob_matrix also accepts the CSV form (header
// c0..c{C-1}); saving always writes the binary form. A loaded file saved back
// reproduces the payload bytes exactly.
ProbMatrix load_prob_matrix(const std::filesystem::path& path);
ProbMatrix load_prob_matrix_csv(const std::filesystem::path& path);
void save_prob_matrix(const std::filesystem::path& path, const ProbMatrix& m);

LogitMatrix load_logit_matrix(const std::filesystem::path& path);
LogitMatrix load_logit_matrix_csv(const std::filesystem::path& path);
void save_logit_matrix(const std::filesystem::path& path, const LogitMatrix& m);

LabelVector load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const LabelVector& v);

SegmentationDump load_segmentation(const std::filesystem::path& path);
void save_segmentation(const std::filesystem::path& path, const SegmentationDump& d);

// All pixels of all images stacked into one matrix (rows keep image order,
// then pixel order).
ProbMatrix flatten_segmentation(const SegmentationDump& d);

// Parses the manifest JSON and eagerly loads every referenced dump once to
// validate it. Rejects duplicate (run_id, iteration) pairs, class-count
// mismatches, and label/probability length mismatches.
Manifest load_manifest(const std::filesystem::path& path);

} // namespace nbrselect
