#pragma once

#include <stdexcept>
#include <string>

#include "stcar/forecast.hpp"
#include "stcar/posterior.hpp"
#include "stcar/sampler.hpp"

namespace stcar {

/// Input-file validation failure (carries line numbers where relevant).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Records CSV columns:
///   section_id,year,count,tow_distance_m,secchi_m,rsa,rma,log_predator,
///   management,tributary
/// Ingest computes turbidity = -secchi_m, the marsh x turbidity product,
/// log offset = ln(tow_distance_m) and tributary dummies (first/James
/// baseline). Adjacency file: one "id_a,id_b" per line. Sections file:
/// "section_id,tributary" per line. Missing (section,year) rows become
/// masked cells; rows with tow <= 0 and count 0 are treated as unsampled.
Dataset ingest(const std::string& records_path,
               const std::string& adjacency_path,
               const std::string& sections_path);

/// Inverse of ingest for simulator output (round-trip tested).
void write_dataset(const Dataset& d, const std::string& records_path,
                   const std::string& adjacency_path,
                   const std::string& sections_path);

void write_draws(const PosteriorDraws& draws, const std::string& out_dir);
PosteriorDraws read_draws(const std::string& out_dir);

/// JSON run manifest: config, seeds, per-scalar R-hat, config hash.
/// Deterministic content (no timestamps).
void write_manifest(const PosteriorDraws& draws, const ModelSpec& spec,
                    const std::string& records_path,
                    const std::string& adjacency_path,
                    const std::string& sections_path,
                    const std::string& out_dir);

void write_summary_csv(const SummaryTable& tab, const std::string& path);
void write_effects_csv(const EffectsTable& tab, const std::string& path);
void write_aggregate_csv(const AggregateTable& tab, const std::string& path);
void write_cv_report(const LfoResult& lfo, const Dataset& data,
                     const std::string& path);
void write_cv_summary(const LfoResult& lfo, double level,
                      const std::string& path);

std::string format_double(double x);  // %.17g, stable round-trip

}  // namespace stcar
