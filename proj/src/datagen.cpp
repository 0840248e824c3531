#include "cift/datagen.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace cift::datagen {

using nlohmann::json;

namespace {

RowVector gaussian(Rng& rng, int dim, double scale) {
  RowVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = scale * rng.normal();
  return v;
}

// Indices of ds.samples grouped by [identity][modality].
std::vector<std::array<std::vector<int>, 2>> index_by_identity(const Dataset& ds) {
  std::vector<std::array<std::vector<int>, 2>> idx(static_cast<std::size_t>(ds.num_identities));
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    idx[static_cast<std::size_t>(s.identity)][s.modality == Modality::kVisible ? 0 : 1].push_back(
        static_cast<int>(i));
  }
  return idx;
}

std::vector<int> choose(std::vector<int> pool, int n, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng.engine());
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

}  // namespace

void Dataset::validate() const {
  if (dim < 2) throw FormatError("dataset dim must be >= 2");
  if (num_identities < 1) throw FormatError("dataset needs at least one identity");
  std::vector<std::array<int, 2>> seen(static_cast<std::size_t>(num_identities), {0, 0});
  for (const Sample& s : samples) {
    if (s.identity < 0 || s.identity >= num_identities) {
      throw FormatError("sample identity " + std::to_string(s.identity) + " out of range");
    }
    if (s.feature.size() != dim) throw FormatError("sample feature length differs from dim");
    if (!s.feature.allFinite()) throw FormatError("sample feature has non-finite entries");
    ++seen[static_cast<std::size_t>(s.identity)][s.modality == Modality::kVisible ? 0 : 1];
  }
  for (int id = 0; id < num_identities; ++id) {
    if (seen[static_cast<std::size_t>(id)][0] == 0 || seen[static_cast<std::size_t>(id)][1] == 0) {
      throw FormatError("identity " + std::to_string(id) + " lacks a sample in some modality");
    }
  }
}

Dataset gen_synthetic_dataset(const GenParams& p) {
  if (p.num_identities < 1 || p.per_id_per_modality < 1) {
    throw ParameterError("gen_synthetic_dataset: counts must be >= 1");
  }
  if (p.dim < 2) throw ParameterError("gen_synthetic_dataset: dim must be >= 2");
  if (!(p.center_scale >= 0) || !(p.modality_offset_scale >= 0) || !(p.noise_scale >= 0)) {
    throw ParameterError("gen_synthetic_dataset: scales must be non-negative");
  }
  Rng root(p.seed);
  Rng offset_rng = root.split(1);
  Rng center_rng = root.split(2);
  Rng noise_rng = root.split(3);

  const RowVector off_vis = gaussian(offset_rng, p.dim, p.modality_offset_scale);
  const RowVector off_ir = gaussian(offset_rng, p.dim, p.modality_offset_scale);

  Dataset ds;
  ds.num_identities = p.num_identities;
  ds.dim = p.dim;
  ds.samples.reserve(static_cast<std::size_t>(p.num_identities) * p.per_id_per_modality * 2);
  for (int id = 0; id < p.num_identities; ++id) {
    const RowVector center = gaussian(center_rng, p.dim, p.center_scale);
    for (Modality m : {Modality::kVisible, Modality::kInfrared}) {
      const RowVector& off = m == Modality::kVisible ? off_vis : off_ir;
      for (int j = 0; j < p.per_id_per_modality; ++j) {
        ds.samples.push_back(Sample{center + off + gaussian(noise_rng, p.dim, p.noise_scale), id, m});
      }
    }
  }
  return ds;
}

TrainingBatch sample_training_batch(const Dataset& ds, int identities, int per_modality,
                                    std::uint64_t seed) {
  if (identities < 1 || per_modality < 1) throw ParameterError("batch P and K must be >= 1");
  const auto idx = index_by_identity(ds);
  std::vector<int> eligible;
  for (int id = 0; id < ds.num_identities; ++id) {
    if (static_cast<int>(idx[static_cast<std::size_t>(id)][0].size()) >= per_modality &&
        static_cast<int>(idx[static_cast<std::size_t>(id)][1].size()) >= per_modality) {
      eligible.push_back(id);
    }
  }
  if (static_cast<int>(eligible.size()) < identities) {
    throw CapacityError("only " + std::to_string(eligible.size()) + " identities have " +
                        std::to_string(per_modality) + " samples per modality; need " +
                        std::to_string(identities));
  }
  Rng rng(seed);
  const std::vector<int> ids = choose(eligible, identities, rng);

  TrainingBatch batch;
  batch.identities = identities;
  batch.per_modality = per_modality;
  batch.samples.resize(static_cast<std::size_t>(2 * identities * per_modality));
  const int half = identities * per_modality;
  for (int p = 0; p < identities; ++p) {
    const auto& by_mod = idx[static_cast<std::size_t>(ids[static_cast<std::size_t>(p)])];
    for (int m = 0; m < 2; ++m) {
      const std::vector<int> picked = choose(by_mod[static_cast<std::size_t>(m)], per_modality, rng);
      for (int j = 0; j < per_modality; ++j) {
        batch.samples[static_cast<std::size_t>(m * half + p * per_modality + j)] =
            ds.samples[static_cast<std::size_t>(picked[static_cast<std::size_t>(j)])];
      }
    }
  }
  return batch;
}

InferenceScenario make_inference_scenario(const Dataset& ds, Modality query_modality, int shots,
                                          std::uint64_t seed) {
  if (shots < 1) throw ParameterError("shots must be >= 1");
  const auto idx = index_by_identity(ds);
  const int gm = query_modality == Modality::kVisible ? 1 : 0;
  Rng rng(seed);
  InferenceScenario sc;
  sc.shots = shots;
  sc.query_modality = query_modality;
  for (int id = 0; id < ds.num_identities; ++id) {
    const auto& pool = idx[static_cast<std::size_t>(id)][static_cast<std::size_t>(gm)];
    if (static_cast<int>(pool.size()) < shots) {
      throw CapacityError("identity " + std::to_string(id) + " has " + std::to_string(pool.size()) +
                          " gallery-modality samples, fewer than shots=" + std::to_string(shots));
    }
    std::vector<int> picked = choose(pool, shots, rng);
    std::sort(picked.begin(), picked.end());
    for (int i : picked) sc.gallery.push_back(ds.samples[static_cast<std::size_t>(i)]);
  }
  for (const Sample& s : ds.samples) {
    if (s.modality == query_modality) sc.queries.push_back(s);
  }
  return sc;
}

std::pair<Dataset, Dataset> split_identities(const Dataset& ds, int train_identities) {
  if (train_identities < 1 || train_identities >= ds.num_identities) {
    throw ParameterError("train_identities must lie in [1, num_identities)");
  }
  Dataset train, test;
  train.dim = test.dim = ds.dim;
  train.num_identities = train_identities;
  test.num_identities = ds.num_identities - train_identities;
  for (const Sample& s : ds.samples) {
    if (s.identity < train_identities) {
      train.samples.push_back(s);
    } else {
      Sample t = s;
      t.identity -= train_identities;
      test.samples.push_back(std::move(t));
    }
  }
  return {std::move(train), std::move(test)};
}

Matrix features(const std::vector<Sample>& samples) {
  if (samples.empty()) return Matrix();
  Matrix m(static_cast<Eigen::Index>(samples.size()), samples.front().feature.size());
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].feature;
  return m;
}

Labels labels(const std::vector<Sample>& samples) {
  Labels l;
  l.reserve(samples.size());
  for (const Sample& s : samples) l.push_back(s.identity);
  return l;
}

std::string to_json(const Dataset& ds) {
  json j;
  j["dim"] = ds.dim;
  j["identities"] = ds.num_identities;
  json arr = json::array();
  for (const Sample& s : ds.samples) {
    std::vector<double> f(s.feature.data(), s.feature.data() + s.feature.size());
    arr.push_back({{"id", s.identity}, {"modality", to_string(s.modality)}, {"feature", f}});
  }
  j["samples"] = std::move(arr);
  return j.dump();
}

Dataset from_json(const std::string& text) {
  Dataset ds;
  try {
    const json j = json::parse(text);
    ds.dim = j.at("dim").get<int>();
    ds.num_identities = j.at("identities").get<int>();
    for (const json& s : j.at("samples")) {
      const auto f = s.at("feature").get<std::vector<double>>();
      Sample smp;
      smp.identity = s.at("id").get<int>();
      smp.modality = modality_from_string(s.at("modality").get<std::string>());
      smp.feature = Eigen::Map<const RowVector>(f.data(), static_cast<Eigen::Index>(f.size()));
      ds.samples.push_back(std::move(smp));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset JSON: ") + e.what());
  }
  ds.validate();
  return ds;
}

void save_json(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << to_json(ds) << '\n';
}

Dataset load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

}  // namespace cift::datagen
