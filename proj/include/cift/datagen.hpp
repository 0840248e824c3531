#pragma once

// Synthetic two-modality embeddings standing in for backbone features, plus
// the batch and scenario composers used for training and evaluation.

#include "cift/rng.hpp"
#include "cift/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cift::datagen {

struct Sample {
  RowVector feature;
  int identity = 0;
  Modality modality = Modality::kVisible;
};

struct Dataset {
  std::vector<Sample> samples;
  int num_identities = 0;
  int dim = 0;

  // Throws FormatError when an identity lacks a sample in either modality or
  // a feature is non-finite or of the wrong length.
  void validate() const;
};

struct GenParams {
  int num_identities = 8;
  int per_id_per_modality = 4;
  int dim = 16;
  double center_scale = 1.0;
  double modality_offset_scale = 0.5;
  double noise_scale = 0.3;
  std::uint64_t seed = 0;
};

/// Samples are c_id + o_modality + eps with c_id ~ N(0, center_scale^2 I),
/// one offset per modality shared by all identities and
/// eps ~ N(0, noise_scale^2 I). Ordered identity-major, visible first.
Dataset gen_synthetic_dataset(const GenParams& p);

struct TrainingBatch {
  // First n visible samples, then n infrared; both halves identity-major
  // with `k` consecutive samples per identity in the same identity order.
  std::vector<Sample> samples;
  int identities = 0;  // P
  int per_modality = 0;  // K

  int half() const { return identities * per_modality; }
};

TrainingBatch sample_training_batch(const Dataset& ds, int identities, int per_modality,
                                    std::uint64_t seed);

struct InferenceScenario {
  std::vector<Sample> queries;
  std::vector<Sample> gallery;
  int shots = 0;
  Modality query_modality = Modality::kVisible;
};

/// Gallery: `shots` random samples per identity from the modality opposite
/// to `query_modality`. Queries: every sample of `query_modality`.
InferenceScenario make_inference_scenario(const Dataset& ds, Modality query_modality, int shots,
                                          std::uint64_t seed);

/// Identities [0, train_identities) form the first dataset; the rest, relabeled
/// from 0, form the second.
std::pair<Dataset, Dataset> split_identities(const Dataset& ds, int train_identities);

Matrix features(const std::vector<Sample>& samples);
Labels labels(const std::vector<Sample>& samples);

void save_json(const Dataset& ds, const std::string& path);
Dataset load_json(const std::string& path);
std::string to_json(const Dataset& ds);
Dataset from_json(const std::string& text);

}  // namespace cift::datagen
