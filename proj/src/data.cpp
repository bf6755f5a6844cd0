#include "stcar/data.hpp"

#include <cmath>
#include <stdexcept>

namespace stcar {

std::vector<std::string> standard_cov_names() {
  return {"turbidity",    "seagrass",   "marsh",         "marsh_x_turbidity",
          "log_predator", "management", "rappahannock",  "york"};
}

int Dataset::cov_index(const std::string& name) const {
  for (int j = 0; j < n_cov; ++j)
    if (cov_names[j] == name) return j;
  return -1;
}

void Dataset::validate() const {
  const int Kn = graph.n_sections;
  if (T <= 0) throw std::invalid_argument("dataset needs T >= 1");
  if ((int)cov_names.size() != n_cov)
    throw std::invalid_argument("cov_names size mismatch");
  if (X.rows() != (Eigen::Index)Kn * T || X.cols() != n_cov + 1)
    throw std::invalid_argument("design matrix shape mismatch");
  if (offset.rows() != Kn || offset.cols() != T ||
      counts.rows() != Kn || counts.cols() != T ||
      observed.rows() != Kn || observed.cols() != T)
    throw std::invalid_argument("lattice shape mismatch");
  for (int k = 0; k < Kn; ++k)
    for (int t = 0; t < T; ++t) {
      if (!observed(k, t)) continue;
      if (!std::isfinite(offset(k, t)))
        throw std::invalid_argument("non-finite offset at observed cell");
      double y = counts(k, t);
      if (y < 0 || y != std::floor(y))
        throw std::invalid_argument("counts must be non-negative integers");
    }
  if ((X.col(0).array() != 1.0).any())
    throw std::invalid_argument("intercept column must be all ones");
}

Dataset Dataset::truncate_years(int keep_T) const {
  if (keep_T <= 0 || keep_T > T)
    throw std::invalid_argument("truncate_years out of range");
  Dataset d;
  d.graph = graph;
  d.T = keep_T;
  d.n_cov = n_cov;
  d.cov_names = cov_names;
  d.section_labels = section_labels;
  d.year_labels.assign(year_labels.begin(), year_labels.begin() + keep_T);
  const int Kn = graph.n_sections;
  d.X.resize((Eigen::Index)Kn * keep_T, n_cov + 1);
  d.offset.resize(Kn, keep_T);
  d.counts.resize(Kn, keep_T);
  d.observed.resize(Kn, keep_T);
  for (int k = 0; k < Kn; ++k)
    for (int t = 0; t < keep_T; ++t) {
      d.X.row((Eigen::Index)k * keep_T + t) = X.row(row(k, t));
      d.offset(k, t) = offset(k, t);
      d.counts(k, t) = counts(k, t);
      d.observed(k, t) = observed(k, t);
    }
  return d;
}

}  // namespace stcar
