#pragma once

#include <cstdint>

#include "nbrselect/feature_store.hpp"

namespace nbrselect {

// Row-per-sample feature set. `normalized` records that every row has unit
// L2 norm; the density kernel requires it.
struct FeatureMatrix {
    std::size_t n_samples = 0;
    std::size_t dim = 0;
    std::vector<double> values; // n_samples * dim, row-major
    bool normalized = false;

    std::span<const double> row(std::size_t i) const {
        return {values.data() + i * dim, dim};
    }
};

struct SndConfig {
    double temperature = 0.05;        // similarity softmax temperature
    std::size_t block_rows = 256;     // row-tile height of the blocked kernel
    std::size_t subsample_pixels = 100; // pixels scored per segmentation image
    std::uint64_t rng_seed = 0;       // drives pixel subsampling only
};

struct SndResult {
    double value = 0.0;   // mean neighborhood entropy, nats; higher = denser
    std::size_t n_used = 0; // samples per entropy evaluation
    // One entry per sample; for the segmentation variant, one per image.
    std::vector<double> per_sample_entropy;
};

// L2-normalizes probability rows (softmax outputs). Rejects rows that cannot
// be normalized.
FeatureMatrix prepare_features(const ProbMatrix& probs);

// Same, for raw logits: skips the softmax and L2-normalizes the logit rows.
FeatureMatrix prepare_features_logits(const LogitMatrix& logits);

// Soft neighborhood density. Each sample's similarities to all other samples
// (inner products of unit rows, self excluded) are pushed through a softmax
// at `temperature`; the score is the mean Shannon entropy of those
// distributions. Evaluated in row tiles so peak memory is
// O(block_rows * n_samples); the result does not depend on block_rows.
// Honors the NBRSELECT_THREADS environment variable as an upper bound on
// worker threads.
SndResult snd(const FeatureMatrix& features, const SndConfig& config);

// Reference implementation: materializes the full n*n neighborhood
// distribution and sums -p*log(p) directly. Refuses n_samples > 5000.
// Kept deliberately independent of the blocked kernel.
SndResult snd_dense_oracle(const FeatureMatrix& features, double temperature);

// The materialized neighborhood matrix the oracle integrates over
// (row-major n*n, diagonal exactly zero, rows sum to 1).
std::vector<double> dense_neighborhood_matrix(const FeatureMatrix& features,
                                              double temperature);

// Per-image variant: draws `subsample_pixels` pixels per image without
// replacement from a stream derived from (rng_seed, image index), scores each
// image with `snd`, and returns the mean over images.
SndResult snd_segmentation(const SegmentationDump& dump, const SndConfig& config);

// The exact pixel indices snd_segmentation scores for one image, exposed so
// results can be replayed against the dense oracle.
std::vector<std::uint32_t> segmentation_sample_indices(std::uint64_t rng_seed,
                                                       std::size_t image_index,
                                                       std::size_t n_pixels,
                                                       std::size_t subsample_pixels);

} // namespace nbrselect
