// cift: command-line driver for training runs, the toy surface and metric
// utilities. Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include "cift/affinity.hpp"
#include "cift/config.hpp"
#include "cift/io.hpp"
#include "cift/metrics.hpp"
#include "cift/toyexp.hpp"
#include "cift/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool g_verbose = false;

void log(const std::string& msg) {
  if (g_verbose) std::cerr << "[cift] " << msg << '\n';
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(cift::io::parse_double(item));
    } catch (const cift::Error&) {
      throw UsageError("bad number '" + item + "' in grid");
    }
  }
  if (out.empty()) throw UsageError("empty grid list");
  return out;
}

json retrieval_json(const cift::metrics::RetrievalResult& r) { return json::parse(cift::metrics::to_json(r)); }

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  cift::config::ExperimentConfig cfg = cift::config::load(config_path);
  if (seed) cfg.apply_seed(*seed);
  if (out) cfg.output_dir = *out;
  const cift::datagen::Dataset ds = cift::config::make_dataset(cfg);
  log("dataset: " + std::to_string(ds.samples.size()) + " samples, " + std::to_string(ds.num_identities) +
      " identities; mode " + cift::trainer::to_string(cift::trainer::graph_mode(cfg.train.ablation)));
  std::filesystem::create_directories(cfg.output_dir);
  cift::io::write_text((std::filesystem::path(cfg.output_dir) / "config.json").string(),
                       cift::config::dump(cfg) + "\n");
  const cift::trainer::Artifacts art = cift::trainer::run_experiment(cfg.train, ds, cfg.output_dir);
  log("final loss " + cift::io::format_double(art.losses.back().total));
  json summary{{"output_dir", cfg.output_dir},
               {"steps", art.losses.size()},
               {"final_loss", art.losses.back().total},
               {"map_vis2ir", art.evaluation.vis2ir.map},
               {"map_ir2vis", art.evaluation.ir2vis.map},
               {"affinity_error_ratio", art.evaluation.quality.affinity_error_ratio}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_gen_data(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  cift::config::ExperimentConfig cfg = cift::config::load(config_path);
  if (seed) cfg.apply_seed(*seed);
  const cift::datagen::Dataset ds = cift::datagen::gen_synthetic_dataset(cfg.dataset);
  std::filesystem::create_directories(out);
  const auto path = (std::filesystem::path(out) / "dataset.json").string();
  cift::datagen::save_json(ds, path);
  std::cout << json{{"dataset", path}, {"samples", ds.samples.size()}}.dump(2) << '\n';
  return 0;
}

int cmd_toy_surface(int repeats, const std::string& grid, std::uint64_t seed, const std::string& out) {
  std::vector<double> qx = cift::toyexp::default_qx_grid(), qa = cift::toyexp::default_qa_grid();
  if (!grid.empty()) {
    const auto colon = grid.find(':');
    if (colon == std::string::npos) throw UsageError("--grid expects QX_LIST:QA_LIST, e.g. 0,1,2:0,0.5,1");
    qx = parse_list(grid.substr(0, colon));
    qa = parse_list(grid.substr(colon + 1));
  }
  for (double v : qa) {
    if (!(v >= 0.0 && v <= 1.0)) throw UsageError("qa grid values must lie in [0, 1]");
  }
  for (double v : qx) {
    if (!(v >= 0.0)) throw UsageError("qx grid values must be >= 0");
  }
  if (repeats < 1) throw UsageError("--repeats must be >= 1");
  log("surface " + std::to_string(qx.size()) + " x " + std::to_string(qa.size()) + ", " +
      std::to_string(repeats) + " repeats");
  const auto cells = cift::toyexp::qy_surface(qx, qa, repeats, seed);
  std::filesystem::create_directories(out);
  const auto path = (std::filesystem::path(out) / "surface.csv").string();
  cift::io::write_text(path, cift::toyexp::surface_csv(cells));
  std::cout << json{{"surface", path}, {"cells", cells.size()}}.dump(2) << '\n';
  return 0;
}

int cmd_affinity_quality(const std::string& aff_path, const std::string& labels_path, int top) {
  cift::Matrix a;
  cift::Labels labels;
  try {
    a = cift::affinity::read_csv(aff_path);
    labels = cift::io::read_labels_csv(labels_path);
  } catch (const cift::Error& e) {
    throw UsageError(e.what());
  }
  if (a.rows() != a.cols()) throw UsageError("affinity matrix is not square");
  if (static_cast<cift::Matrix::Index>(labels.size()) != a.rows()) {
    throw UsageError("affinity has " + std::to_string(a.rows()) + " rows but " + std::to_string(labels.size()) +
                     " labels");
  }
  if (top < 1 || top > a.cols()) throw UsageError("--top must lie in [1, columns]");
  json j{{"q_a", cift::metrics::affinity_quality(a, labels)},
         {"error_ratio", cift::metrics::affinity_error_ratio(a, labels, top)}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& dataset_path, const std::string& config_path,
             std::uint64_t seed) {
  cift::trainer::TrainConfig tc;
  if (!config_path.empty()) tc = cift::config::load(config_path).train;
  cift::trainer::Model model;
  cift::datagen::Dataset ds;
  try {
    model = cift::trainer::load_model(model_path);
    ds = cift::datagen::load_json(dataset_path);
  } catch (const cift::FormatError& e) {
    throw UsageError(e.what());
  }
  const auto ev = cift::trainer::evaluate(model, ds, tc, seed);
  json j{{"vis2ir", retrieval_json(ev.vis2ir)},
         {"ir2vis", retrieval_json(ev.ir2vis)},
         {"quality", json::parse(cift::metrics::to_json(ev.quality))}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cift: graph feature transfer with counterfactual intervention, desk-scale lab"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "Log progress to stderr");

  std::string config_path, out, grid, aff_path, labels_path, model_path, dataset_path;
  std::uint64_t seed_value = 0;
  int repeats = 100, top = 4;

  auto* train = app.add_subcommand("train", "Train and evaluate from a JSON config");
  train->add_option("config", config_path, "Config JSON")->required();
  auto* train_seed = train->add_option("--seed", seed_value, "Override the config seed");
  auto* train_out = train->add_option("--out", out, "Override the output directory");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset of a config as JSON");
  gen->add_option("config", config_path, "Config JSON")->required();
  auto* gen_seed = gen->add_option("--seed", seed_value, "Override the config seed");
  gen->add_option("--out", out, "Output directory")->required();

  auto* toy = app.add_subcommand("toy-surface", "Compute the Q_Y surface over (Q_X, Q_A)");
  toy->add_option("--repeats", repeats, "Repeats per cell")->capture_default_str();
  toy->add_option("--grid", grid, "QX_LIST:QA_LIST, e.g. 0,1,2:0,0.5,1 (default grid otherwise)");
  toy->add_option("--seed", seed_value, "Seed")->capture_default_str();
  toy->add_option("--out", out, "Output directory")->required();

  auto* aq = app.add_subcommand("affinity-quality", "Q_A and top-k error ratio of an affinity CSV");
  aq->add_option("affinity_csv", aff_path, "Square affinity matrix, no header")->required();
  aq->add_option("labels_csv", labels_path, "One label per row")->required();
  aq->add_option("--top", top, "Entries per row counted as predicted positives")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Evaluate a saved model on a dataset JSON");
  ev->add_option("model", model_path, "model.bin")->required();
  ev->add_option("dataset", dataset_path, "Dataset JSON")->required();
  ev->add_option("--config", config_path, "Config JSON for graph settings (defaults otherwise)");
  ev->add_option("--seed", seed_value, "Gallery sampling seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      return cmd_train(config_path, *train_seed ? std::optional<std::uint64_t>(seed_value) : std::nullopt,
                       *train_out ? std::optional<std::string>(out) : std::nullopt);
    }
    if (*gen) {
      return cmd_gen_data(config_path, *gen_seed ? std::optional<std::uint64_t>(seed_value) : std::nullopt, out);
    }
    if (*toy) return cmd_toy_surface(repeats, grid, seed_value, out);
    if (*aq) return cmd_affinity_quality(aff_path, labels_path, top);
    if (*ev) return cmd_eval(model_path, dataset_path, config_path, seed_value);
  } catch (const cift::config::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
