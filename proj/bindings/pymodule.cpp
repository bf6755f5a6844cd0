#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stcar/io.hpp"
#include "stcar/synth.hpp"

namespace py = pybind11;
using namespace stcar;

namespace {

Eigen::MatrixXd pooled_matrix(const PosteriorDraws& d) {
  Eigen::MatrixXd out(d.total_draws(), d.dim());
  Eigen::Index r = 0;
  for (const auto& c : d.chains) {
    out.middleRows(r, c.draws.rows()) = c.draws;
    r += c.draws.rows();
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_stcar, m) {
  m.doc() = "Hierarchical Bayesian CAR models for areal count data";

  py::register_exception<DataError>(m, "DataError");

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("K", &Dataset::K)
      .def_readonly("T", &Dataset::T)
      .def_readonly("cov_names", &Dataset::cov_names)
      .def_readonly("section_labels", &Dataset::section_labels)
      .def_readonly("year_labels", &Dataset::year_labels)
      .def("n_observed", &Dataset::n_observed);

  py::class_<PosteriorDraws>(m, "PosteriorDraws")
      .def_readonly("names", &PosteriorDraws::names)
      .def_property_readonly("n_chains", &PosteriorDraws::n_chains)
      .def("pooled", &pooled_matrix,
           "all chains stacked, draws x parameters")
      .def("max_rhat", &max_rhat)
      .def("rhat",
           [](const PosteriorDraws& d, const std::string& name) {
             return split_rhat(d, name).value;
           })
      .def("divergences", [](const PosteriorDraws& d) {
        int n = 0;
        for (const auto& c : d.chains) n += c.divergences;
        return n;
      });

  m.def("ingest", &ingest, py::arg("records"), py::arg("adjacency"),
        py::arg("sections"));

  m.def(
      "simulate",
      [](const std::string& model, const std::vector<int>& groups, int years,
         std::uint64_t seed, const std::string& out_dir) {
        SimConfig cfg;
        cfg.spec.variant = variant_from_string(model);
        cfg.truth = default_truth(cfg.spec.variant);
        cfg.group_sizes = groups;
        cfg.T = years;
        cfg.seed = seed;
        auto [data, truth] = simulate_dataset(cfg);
        write_dataset(data, out_dir + "/records.csv",
                      out_dir + "/adjacency.csv", out_dir + "/sections.csv");
        return data;
      },
      py::arg("model"), py::arg("groups"), py::arg("years"), py::arg("seed"),
      py::arg("out_dir"));

  m.def(
      "fit",
      [](const Dataset& data, const std::string& model, int chains, int warmup,
         int samples, std::uint64_t seed) {
        ModelSpec spec;
        spec.variant = variant_from_string(model);
        SamplerConfig sc;
        sc.n_chains = chains;
        sc.warmup_iters = warmup;
        sc.sampling_iters = samples;
        sc.seed = seed;
        py::gil_scoped_release release;
        return run_inference(spec, data, sc);
      },
      py::arg("data"), py::arg("model") = "4", py::arg("chains") = 4,
      py::arg("warmup") = 1500, py::arg("samples") = 1500, py::arg("seed") = 0);

  m.def(
      "summarize",
      [](const PosteriorDraws& draws) {
        py::list rows;
        for (const auto& r : summarize(draws).rows)
          rows.append(py::dict(
              py::arg("name") = r.name, py::arg("q10") = r.q10,
              py::arg("q50") = r.q50, py::arg("q90") = r.q90,
              py::arg("hpdi_low") = r.hpdi_low,
              py::arg("hpdi_high") = r.hpdi_high,
              py::arg("excludes_zero") = r.excludes_zero));
        return rows;
      },
      py::arg("draws"));

  m.def(
      "hpdi",
      [](const Eigen::VectorXd& draws, double level) {
        Interval iv = hpdi(draws, level);
        return std::make_pair(iv.low, iv.high);
      },
      py::arg("draws"), py::arg("level") = 0.80);

  m.def("prob_greater", &prob_greater, py::arg("a"), py::arg("b"));
}
