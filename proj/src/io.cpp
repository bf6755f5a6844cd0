#include "stcar/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stcar {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    s = (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
  }
  return out;
}

double parse_num(const std::string& s, const std::string& what, int line) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line) + ": bad " + what + " '" +
                    s + "'");
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Dataset ingest(const std::string& records_path,
               const std::string& adjacency_path,
               const std::string& sections_path) {
  // sections: id -> tributary label
  std::ifstream sf(sections_path);
  if (!sf) throw DataError("cannot open sections file: " + sections_path);
  std::vector<std::string> section_ids;
  std::map<std::string, int> section_index;
  std::vector<std::string> trib_of_section;
  std::string line;
  int lineno = 0;
  while (std::getline(sf, line)) {
    lineno++;
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (lineno == 1 && lower(f[0]) == "section_id") continue;  // header
    if (f.size() != 2)
      throw DataError("sections line " + std::to_string(lineno) +
                      ": expected 'section_id,tributary'");
    if (section_index.count(f[0]))
      throw DataError("sections line " + std::to_string(lineno) +
                      ": duplicate section id " + f[0]);
    section_index[f[0]] = (int)section_ids.size();
    section_ids.push_back(f[0]);
    trib_of_section.push_back(lower(f[1]));
  }
  if (section_ids.empty()) throw DataError("sections file is empty");

  // group ordering: james baseline when present, then rappahannock, york,
  // then anything else in order of first appearance
  std::vector<std::string> group_labels;
  auto add_group = [&](const std::string& lbl) {
    if (std::find(group_labels.begin(), group_labels.end(), lbl) ==
        group_labels.end())
      group_labels.push_back(lbl);
  };
  for (const std::string& pref : {"james", "rappahannock", "york"})
    if (std::find(trib_of_section.begin(), trib_of_section.end(), pref) !=
        trib_of_section.end())
      add_group(pref);
  for (const auto& t : trib_of_section) add_group(t);
  std::vector<int> group_of(section_ids.size());
  for (size_t i = 0; i < section_ids.size(); ++i)
    group_of[i] =
        (int)(std::find(group_labels.begin(), group_labels.end(),
                        trib_of_section[i]) -
              group_labels.begin());

  // adjacency
  std::ifstream af(adjacency_path);
  if (!af) throw DataError("cannot open adjacency file: " + adjacency_path);
  std::vector<std::pair<int, int>> edges;
  lineno = 0;
  while (std::getline(af, line)) {
    lineno++;
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (lineno == 1 && (lower(f[0]) == "id_a" || lower(f[0]) == "section_a"))
      continue;
    if (f.size() != 2)
      throw DataError("adjacency line " + std::to_string(lineno) +
                      ": expected 'id_a,id_b'");
    for (const auto& id : {f[0], f[1]})
      if (!section_index.count(id))
        throw DataError("adjacency line " + std::to_string(lineno) +
                        ": unknown section id " + id);
    edges.push_back({section_index[f[0]], section_index[f[1]]});
  }
  ArealGraph graph;
  try {
    graph = build_graph((int)section_ids.size(), edges, group_of);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("adjacency: ") + e.what());
  }

  // records
  std::ifstream rf(records_path);
  if (!rf) throw DataError("cannot open records file: " + records_path);
  const std::vector<std::string> want = {
      "section_id", "year",          "count",  "tow_distance_m", "secchi_m",
      "rsa",        "rma",           "log_predator", "management", "tributary"};
  lineno = 0;
  if (!std::getline(rf, line)) throw DataError("records file is empty");
  lineno++;
  {
    auto hdr = split_csv(line);
    if (hdr.size() != want.size())
      throw DataError("records header: expected " +
                      std::to_string(want.size()) + " columns");
    for (size_t i = 0; i < want.size(); ++i)
      if (lower(hdr[i]) != want[i])
        throw DataError("records header column " + std::to_string(i + 1) +
                        ": expected '" + want[i] + "', got '" + hdr[i] + "'");
  }

  struct Rec {
    int k, year, line;
    double count, tow, secchi, rsa, rma, logpred, mgmt;
  };
  std::vector<Rec> recs;
  std::set<std::pair<int, int>> seen;
  int ymin = 1 << 30, ymax = -(1 << 30);
  while (std::getline(rf, line)) {
    lineno++;
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != want.size())
      throw DataError("line " + std::to_string(lineno) + ": expected " +
                      std::to_string(want.size()) + " fields");
    if (!section_index.count(f[0]))
      throw DataError("line " + std::to_string(lineno) +
                      ": unknown section id " + f[0]);
    Rec r;
    r.k = section_index[f[0]];
    r.line = lineno;
    r.year = (int)parse_num(f[1], "year", lineno);
    r.count = parse_num(f[2], "count", lineno);
    if (r.count < 0 || r.count != std::floor(r.count))
      throw DataError("line " + std::to_string(lineno) +
                      ": count must be a non-negative integer");
    r.tow = parse_num(f[3], "tow_distance_m", lineno);
    r.secchi = parse_num(f[4], "secchi_m", lineno);
    r.rsa = parse_num(f[5], "rsa", lineno);
    r.rma = parse_num(f[6], "rma", lineno);
    r.logpred = parse_num(f[7], "log_predator", lineno);
    r.mgmt = parse_num(f[8], "management", lineno);
    if (r.tow <= 0 && r.count > 0)
      throw DataError("line " + std::to_string(lineno) +
                      ": positive count with non-positive tow distance");
    if (r.rsa < 0 || r.rsa > 1 || r.rma < 0 || r.rma > 1)
      throw DataError("line " + std::to_string(lineno) +
                      ": relative areas must lie in [0,1]");
    if (!seen.insert({r.k, r.year}).second)
      throw DataError("line " + std::to_string(lineno) +
                      ": duplicate record for section " + f[0] + ", year " +
                      f[1]);
    ymin = std::min(ymin, r.year);
    ymax = std::max(ymax, r.year);
    recs.push_back(r);
  }
  if (recs.empty()) throw DataError("records file has no data rows");

  const int K = (int)section_ids.size();
  const int T = ymax - ymin + 1;
  const int G = (int)group_labels.size();

  Dataset d;
  d.graph = graph;
  d.T = T;
  d.section_labels = section_ids;
  for (int t = 0; t < T; ++t) d.year_labels.push_back(ymin + t);
  d.cov_names = {"turbidity", "seagrass", "marsh", "marsh_x_turbidity",
                 "log_predator", "management"};
  // fixed dummy schema: rappahannock and york columns always exist (all
  // zero when that tributary is absent); extra non-baseline tributaries
  // are appended in group order
  std::vector<std::string> dummy_labels = {"rappahannock", "york"};
  for (int g = 1; g < G; ++g)
    if (std::find(dummy_labels.begin(), dummy_labels.end(), group_labels[g]) ==
        dummy_labels.end())
      dummy_labels.push_back(group_labels[g]);
  for (const auto& lbl : dummy_labels) d.cov_names.push_back(lbl);
  d.n_cov = (int)d.cov_names.size();
  d.X.setZero((Eigen::Index)K * T, d.n_cov + 1);
  d.X.col(0).setOnes();
  d.offset.setZero(K, T);
  d.counts.setZero(K, T);
  d.observed.setConstant(K, T, false);

  for (const auto& r : recs) {
    int t = r.year - ymin;
    if (r.tow <= 0) continue;  // no sampling effort: masked cell
    int row = d.row(r.k, t);
    double turb = -r.secchi;
    d.X(row, 1) = turb;
    d.X(row, 2) = r.rsa;
    d.X(row, 3) = r.rma;
    d.X(row, 4) = r.rma * turb;
    d.X(row, 5) = r.logpred;
    d.X(row, 6) = r.mgmt;
    int g = group_of[r.k];
    if (g > 0) {
      auto it = std::find(dummy_labels.begin(), dummy_labels.end(),
                          group_labels[g]);
      if (it != dummy_labels.end())
        d.X(row, 7 + (it - dummy_labels.begin())) = 1.0;
    }
    d.offset(r.k, t) = std::log(r.tow);
    d.counts(r.k, t) = r.count;
    d.observed(r.k, t) = true;
  }
  d.validate();
  return d;
}

void write_dataset(const Dataset& d, const std::string& records_path,
                   const std::string& adjacency_path,
                   const std::string& sections_path) {
  const std::vector<std::string> trib_names = {"james", "rappahannock", "york"};
  auto group_label = [&](int g) {
    return g < (int)trib_names.size() ? trib_names[g]
                                      : "group" + std::to_string(g);
  };

  std::ofstream sf(sections_path);
  sf << "section_id,tributary\n";
  for (int k = 0; k < d.K(); ++k)
    sf << d.section_labels[k] << "," << group_label(d.graph.group_of[k]) << "\n";

  std::ofstream af(adjacency_path);
  af << "id_a,id_b\n";
  for (auto [a, b] : d.graph.edges)
    af << d.section_labels[a] << "," << d.section_labels[b] << "\n";

  int j_turb = d.cov_index("turbidity"), j_rsa = d.cov_index("seagrass"),
      j_rma = d.cov_index("marsh"), j_pred = d.cov_index("log_predator"),
      j_mgmt = d.cov_index("management");
  std::ofstream rf(records_path);
  rf << "section_id,year,count,tow_distance_m,secchi_m,rsa,rma,log_predator,"
        "management,tributary\n";
  for (int k = 0; k < d.K(); ++k)
    for (int t = 0; t < d.T; ++t) {
      if (!d.observed(k, t)) continue;
      int row = d.row(k, t);
      rf << d.section_labels[k] << "," << d.year_labels[t] << ","
         << (long long)d.counts(k, t) << ","
         << format_double(std::exp(d.offset(k, t))) << ","
         << format_double(-d.X(row, j_turb + 1)) << ","
         << format_double(d.X(row, j_rsa + 1)) << ","
         << format_double(d.X(row, j_rma + 1)) << ","
         << format_double(d.X(row, j_pred + 1)) << ","
         << format_double(d.X(row, j_mgmt + 1)) << ","
         << group_label(d.graph.group_of[k]) << "\n";
    }
}

void write_draws(const PosteriorDraws& draws, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (int c = 0; c < draws.n_chains(); ++c) {
    std::ofstream f(out_dir + "/chain_" + std::to_string(c) + ".csv");
    for (size_t j = 0; j < draws.names.size(); ++j)
      f << (j ? "," : "") << draws.names[j];
    f << "\n";
    const Eigen::MatrixXd& m = draws.chains[c].draws;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        f << (j ? "," : "") << format_double(m(i, j));
      f << "\n";
    }
  }
}

PosteriorDraws read_draws(const std::string& out_dir) {
  PosteriorDraws out;
  for (int c = 0;; ++c) {
    std::string path = out_dir + "/chain_" + std::to_string(c) + ".csv";
    std::ifstream f(path);
    if (!f) break;
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty chain file: " + path);
    auto hdr = split_csv(line);
    if (c == 0)
      out.names = hdr;
    else if (hdr != out.names)
      throw DataError("chain headers disagree in " + path);
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(f, line)) {
      lineno++;
      if (line.empty()) continue;
      auto fields = split_csv(line);
      if (fields.size() != hdr.size())
        throw DataError(path + " line " + std::to_string(lineno) +
                        ": wrong field count");
      std::vector<double> r(fields.size());
      for (size_t j = 0; j < fields.size(); ++j)
        r[j] = parse_num(fields[j], "draw", lineno);
      rows.push_back(std::move(r));
    }
    ChainResult cr;
    cr.draws.resize((Eigen::Index)rows.size(), (Eigen::Index)hdr.size());
    for (size_t i = 0; i < rows.size(); ++i)
      for (size_t j = 0; j < hdr.size(); ++j) cr.draws(i, j) = rows[i][j];
    out.chains.push_back(std::move(cr));
  }
  if (out.chains.empty())
    throw DataError("no chain_<i>.csv files found in " + out_dir);
  return out;
}

void write_manifest(const PosteriorDraws& draws, const ModelSpec& spec,
                    const std::string& records_path,
                    const std::string& adjacency_path,
                    const std::string& sections_path,
                    const std::string& out_dir) {
  nlohmann::ordered_json j;
  j["tool"] = "stcar";
  j["version"] = "0.1.0";
  j["model"] = to_string(spec.variant);
  j["data"] = {{"records", records_path},
               {"adjacency", adjacency_path},
               {"sections", sections_path}};
  j["sampler"] = {{"n_chains", draws.config.n_chains},
                  {"warmup_iters", draws.config.warmup_iters},
                  {"sampling_iters", draws.config.sampling_iters},
                  {"seed", draws.config.seed},
                  {"target_accept", draws.config.target_accept},
                  {"max_tree_depth", draws.config.max_tree_depth}};
  nlohmann::ordered_json chains = nlohmann::ordered_json::array();
  for (int c = 0; c < draws.n_chains(); ++c) {
    chains.push_back({{"accept_rate", draws.chains[c].accept_rate},
                      {"divergences", draws.chains[c].divergences},
                      {"step_size", draws.chains[c].step_size}});
  }
  j["chains"] = chains;
  if (draws.n_chains() >= 2) {
    nlohmann::ordered_json rh;
    double mx = 0.0;
    for (int p = 0; p < draws.dim(); ++p) {
      RhatEntry e = split_rhat(draws, p);
      mx = std::max(mx, e.value);
      // keep the manifest small: record only the scalar block
      const std::string& n = draws.names[p];
      if (n.rfind("theta.", 0) == 0 || n.rfind("phi.", 0) == 0 ||
          n.rfind("eta.", 0) == 0)
        continue;
      rh[n] = e.degenerate ? -1.0 : e.value;
    }
    j["split_rhat"] = rh;
    j["max_split_rhat"] = std::isfinite(mx) ? mx : -1.0;
  } else {
    j["split_rhat"] = nullptr;  // undefined for a single chain
  }
  std::string cfg_str = j.dump();
  j["config_hash"] = fnv1a(cfg_str);
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir + "/manifest.json");
  f << j.dump(2) << "\n";
}

void write_summary_csv(const SummaryTable& tab, const std::string& path) {
  std::ofstream f(path);
  f << "parameter,q10,q50,q90,hpdi80_low,hpdi80_high,excludes_zero\n";
  for (const auto& r : tab.rows)
    f << r.name << "," << format_double(r.q10) << "," << format_double(r.q50)
      << "," << format_double(r.q90) << "," << format_double(r.hpdi_low) << ","
      << format_double(r.hpdi_high) << "," << (r.excludes_zero ? 1 : 0) << "\n";
}

void write_effects_csv(const EffectsTable& tab, const std::string& path) {
  std::ofstream f(path);
  f << "vary,conditioning_percentile,conditioning_value,x,median,low,high\n";
  for (const auto& c : tab.curves)
    for (size_t i = 0; i < c.grid.size(); ++i)
      f << tab.vary << "," << format_double(c.conditioning_percentile) << ","
        << format_double(c.conditioning_value) << "," << format_double(c.grid[i])
        << "," << format_double(c.median[i]) << "," << format_double(c.low[i])
        << "," << format_double(c.high[i]) << "\n";
}

void write_aggregate_csv(const AggregateTable& tab, const std::string& path) {
  std::ofstream f(path);
  f << "section,group,years_used,median,hpdi80_low,hpdi80_high,"
       "standardized_median\n";
  for (const auto& r : tab.rows)
    f << r.label << "," << r.group << "," << r.years_used << ","
      << format_double(r.median) << "," << format_double(r.hpdi_low) << ","
      << format_double(r.hpdi_high) << ","
      << format_double(r.standardized_median) << "\n";
}

void write_cv_report(const LfoResult& lfo, const Dataset& data,
                     const std::string& path) {
  std::ofstream f(path);
  f << "model,section,observed,low,high,inside\n";
  for (const auto& rep : lfo.reports) {
    if (rep.failed) continue;
    for (const auto& s : rep.sections) {
      if (!s.evaluated) continue;
      f << rep.model << "," << data.section_labels[s.section] << ","
        << (long long)s.observed << "," << s.interval.low << ","
        << s.interval.high << "," << (s.inside ? 1 : 0) << "\n";
    }
  }
}

void write_cv_summary(const LfoResult& lfo, double level,
                      const std::string& path) {
  nlohmann::ordered_json j;
  j["level"] = level;
  nlohmann::ordered_json models = nlohmann::ordered_json::array();
  for (const auto& rep : lfo.reports) {
    nlohmann::ordered_json m;
    m["model"] = rep.model;
    if (rep.failed) {
      m["failed"] = rep.failure;
    } else {
      m["coverage"] = rep.coverage;
      m["n_evaluated"] = rep.n_evaluated;
      m["mean_interval_width"] = rep.mean_width;
    }
    models.push_back(m);
  }
  j["models"] = models;
  nlohmann::ordered_json rank = nlohmann::ordered_json::array();
  for (int i : lfo.ranking) rank.push_back(lfo.reports[i].model);
  j["ranking"] = rank;
  std::ofstream f(path);
  f << j.dump(2) << "\n";
}

}  // namespace stcar
