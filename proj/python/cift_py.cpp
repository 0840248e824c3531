// Python bindings for the core library.

#include "cift/affinity.hpp"
#include "cift/config.hpp"
#include "cift/cri.hpp"
#include "cift/losses.hpp"
#include "cift/metrics.hpp"
#include "cift/toyexp.hpp"
#include "cift/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace cift;

namespace {

Matrix affinity_of(const Matrix& u, const Matrix& w, double tau, int k) {
  ad::Tape t;
  return affinity::affinity(t.constant(u), t.constant(w), tau, k).value();
}

py::dict dataset_dict(const datagen::Dataset& ds) {
  Labels modality;
  for (const auto& s : ds.samples) modality.push_back(s.modality == Modality::kVisible ? 0 : 1);
  py::dict d;
  d["features"] = datagen::features(ds.samples);
  d["identities"] = datagen::labels(ds.samples);
  d["modalities"] = modality;
  d["num_identities"] = ds.num_identities;
  return d;
}

py::dict retrieval_dict(const metrics::RetrievalResult& r) {
  py::dict d;
  d["cmc"] = r.cmc;
  d["map"] = r.map;
  return d;
}

py::dict quality_dict(const metrics::QualityReport& q) {
  py::dict d;
  d["q_x"] = q.q_x;
  d["q_y"] = q.q_y;
  d["q_a"] = q.q_a;
  d["affinity_error_ratio"] = q.affinity_error_ratio;
  return d;
}

py::dict breakdown_dict(const losses::LossBreakdown& b) {
  py::dict d;
  d["ce_backbone"] = b.ce_backbone;
  d["me_backbone"] = b.me_backbone;
  d["ce_graph"] = b.ce_graph;
  d["me_graph"] = b.me_graph;
  d["tie"] = b.tie;
  d["total"] = b.total;
  return d;
}

Distance distance_of(const std::string& name) {
  if (name == "euclidean") return Distance::kEuclidean;
  if (name == "kl") return Distance::kKL;
  throw ParameterError("distance must be 'euclidean' or 'kl', got '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_cift, m) {
  m.doc() = "Graph feature transfer with counterfactual intervention";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
  py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<config::ConfigError>(m, "ConfigError", base.ptr());

  m.def("affinity", &affinity_of, py::arg("u"), py::arg("w"), py::arg("tau"), py::arg("k"),
        "Row-stochastic top-k affinity from u to w.");
  m.def("cosine_similarity", py::overload_cast<const Matrix&, const Matrix&>(&affinity::cosine_similarity));

  m.def("gen_dataset", [](int ids, int per, int dim, double noise, std::uint64_t seed) {
    datagen::GenParams g;
    g.num_identities = ids;
    g.per_id_per_modality = per;
    g.dim = dim;
    g.noise_scale = noise;
    g.seed = seed;
    return dataset_dict(datagen::gen_synthetic_dataset(g));
  }, py::arg("num_identities") = 8, py::arg("per_id_per_modality") = 4, py::arg("dim") = 16,
        py::arg("noise_scale") = 0.3, py::arg("seed") = 0);

  m.def("sample_intervened", [](const RowVector& mu, const RowVector& sigma, int n, std::uint64_t seed) {
    Rng rng(seed);
    return cri::sample_intervened(cri::InterventionParams::from_sigma(mu, sigma), n,
                                  static_cast<int>(mu.size()), rng);
  }, py::arg("mu"), py::arg("sigma"), py::arg("n"), py::arg("seed") = 0);
  m.def("tie", py::overload_cast<const Matrix&, const Matrix&>(&cri::tie));

  m.def("cross_entropy", py::overload_cast<const Matrix&, const Labels&>(&losses::cross_entropy));
  m.def("hcc_loss", [](const Matrix& x, const Labels& l, const std::string& dist, double rho, bool anchor) {
    return losses::hcc_loss(x, l, distance_of(dist), rho, anchor);
  }, py::arg("input"), py::arg("labels"), py::arg("distance") = "euclidean", py::arg("rho") = 0.6,
        py::arg("include_anchor") = true);

  m.def("margin_quality", [](const Matrix& x, const Labels& l, const std::string& dist) {
    return metrics::margin_quality(x, l, distance_of(dist));
  }, py::arg("x"), py::arg("labels"), py::arg("distance") = "euclidean");
  m.def("affinity_quality", &metrics::affinity_quality);
  m.def("affinity_error_ratio", py::overload_cast<const Matrix&, const Labels&, int>(&metrics::affinity_error_ratio),
        py::arg("a"), py::arg("labels"), py::arg("top") = 4);
  m.def("cmc_map", [](const Matrix& d, const Labels& q, const Labels& g) {
    return retrieval_dict(metrics::cmc_map(d, q, g));
  });

  m.def("qy_surface", [](const std::vector<double>& qx, const std::vector<double>& qa, int repeats,
                         std::uint64_t seed) {
    py::list out;
    for (const auto& c : toyexp::qy_surface(qx, qa, repeats, seed)) {
      py::dict d;
      d["qx_target"] = c.qx_target;
      d["qa_target"] = c.qa_target;
      d["qx_achieved"] = c.qx_achieved;
      d["qa_achieved"] = c.qa_achieved;
      d["qy_mean"] = c.qy_mean;
      d["qy_std"] = c.qy_std;
      out.append(d);
    }
    return out;
  }, py::arg("qx_grid"), py::arg("qa_grid"), py::arg("repeats") = 100, py::arg("seed") = 0);
  m.def("spearman", &toyexp::spearman);

  m.def("run_experiment", [](const std::string& config_json, const std::string& out_dir) {
    const auto ec = config::parse(config_json);
    trainer::Artifacts art;
    {
      py::gil_scoped_release release;
      art = trainer::run_experiment(ec.train, config::make_dataset(ec), out_dir);
    }
    py::list losses;
    for (const auto& b : art.losses) losses.append(breakdown_dict(b));
    py::dict d;
    d["losses"] = losses;
    d["vis2ir"] = retrieval_dict(art.evaluation.vis2ir);
    d["ir2vis"] = retrieval_dict(art.evaluation.ir2vis);
    d["quality"] = quality_dict(art.evaluation.quality);
    d["model"] = py::bytes(trainer::serialize_model(art.model));
    return d;
  }, py::arg("config_json") = "{}", py::arg("out_dir") = "",
        "Train and evaluate from a JSON config string.");
}
