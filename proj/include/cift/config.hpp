#pragma once

// Experiment configuration files: a JSON document with the training
// configuration, the synthetic dataset parameters (or a dataset file) and an
// output directory. Unknown keys and wrong types are rejected up front.

#include "cift/datagen.hpp"
#include "cift/trainer.hpp"

#include <cstdint>
#include <string>

namespace cift::config {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Synthetic benchmark used when a config leaves "dataset" out: 32
// identities, half for training, 8 samples per identity and modality.
datagen::GenParams default_dataset();

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "cift_out";
  datagen::GenParams dataset = default_dataset();
  std::string dataset_file;  // when set, replaces the generated dataset
  trainer::TrainConfig train;

  // Propagates `seed` into the dataset and training seeds.
  void apply_seed(std::uint64_t s);
};

/// Parses and validates. Every failure is a ConfigError.
ExperimentConfig parse(const std::string& json_text);
ExperimentConfig load(const std::string& path);

/// Resolved configuration with every field spelled out; parse(dump(c)) == c.
std::string dump(const ExperimentConfig& c);

datagen::Dataset make_dataset(const ExperimentConfig& c);

}  // namespace cift::config
