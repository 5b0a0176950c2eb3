#pragma once

#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gapmrf/io.hpp"
#include "gapmrf/metrics.hpp"
#include "gapmrf/solvers.hpp"

namespace gapmrf {

// Everything a seeded end-to-end run needs. Parsed from a flat key = value
// file; unknown keys are rejected.
struct ExperimentConfig {
  int rows = 64;
  int cols = 64;
  std::uint64_t phantom_seed = 0;
  int sequence_length = 300;
  std::uint64_t acq_seed = 1;
  int undersampling = 16;
  double isnr_db = 50.0;
  std::string method = "gapmrf";  // gapmrf | blip | both
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "out";
  bool auto_tune = false;
  int phase_iterations = 0;
  int max_outer_iterations = 120;
  double stop_rel = 1e-4;
  GapConfig gap;
  std::string sweep = "none";  // none | isnr | length
  std::vector<double> sweep_values;
  int grid_t1 = 20;
  int grid_t2 = 20;
  int blip_grid_t1 = 127;
  int blip_grid_t2 = 127;
  std::string dict_cache;
  std::string trace_dir;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  if (value == "inf") return std::numeric_limits<double>::infinity();
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": " + value);
  }
}

inline long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": " + value);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean value for " + key + ": " + value);
}

template <class T, class Fn>
std::vector<T> parse_list(const std::string& key, const std::string& value,
                          Fn&& one) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(one(key, item));
  }
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(std::istream& in) {
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "rows") cfg.rows = static_cast<int>(detail::parse_int(key, value));
    else if (key == "cols") cfg.cols = static_cast<int>(detail::parse_int(key, value));
    else if (key == "phantom_seed") cfg.phantom_seed = detail::parse_int(key, value);
    else if (key == "sequence_length") cfg.sequence_length = static_cast<int>(detail::parse_int(key, value));
    else if (key == "acq_seed") cfg.acq_seed = detail::parse_int(key, value);
    else if (key == "undersampling") cfg.undersampling = static_cast<int>(detail::parse_int(key, value));
    else if (key == "isnr_db") cfg.isnr_db = detail::parse_double(key, value);
    else if (key == "method") cfg.method = value;
    else if (key == "seeds") cfg.seeds = detail::parse_list<std::uint64_t>(key, value, [](const std::string& k, const std::string& v) { return static_cast<std::uint64_t>(detail::parse_int(k, v)); });
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "auto_tune") cfg.auto_tune = detail::parse_bool(key, value);
    else if (key == "phase_iterations") cfg.phase_iterations = static_cast<int>(detail::parse_int(key, value));
    else if (key == "max_outer_iterations") cfg.max_outer_iterations = static_cast<int>(detail::parse_int(key, value));
    else if (key == "stop_rel") cfg.stop_rel = detail::parse_double(key, value);
    else if (key == "max_atoms") cfg.gap.max_atoms = static_cast<int>(detail::parse_int(key, value));
    else if (key == "merge_radius") cfg.gap.merge_radius = detail::parse_double(key, value);
    else if (key == "min_pure_voxels") cfg.gap.min_pure_voxels = static_cast<int>(detail::parse_int(key, value));
    else if (key == "purity_fraction") cfg.gap.purity_fraction = detail::parse_double(key, value);
    else if (key == "min_density") cfg.gap.min_density = detail::parse_double(key, value);
    else if (key == "residual_tol") cfg.gap.residual_tol = detail::parse_double(key, value);
    else if (key == "covariance_decay") cfg.gap.covariance_decay = detail::parse_double(key, value);
    else if (key == "samples_per_atom") cfg.gap.samples_per_atom = static_cast<int>(detail::parse_int(key, value));
    else if (key == "sample_var_t1") cfg.gap.sample_var_t1 = detail::parse_double(key, value);
    else if (key == "sample_var_t2") cfg.gap.sample_var_t2 = detail::parse_double(key, value);
    else if (key == "backtrack_factor") cfg.gap.backtrack_factor = detail::parse_double(key, value);
    else if (key == "sweep") cfg.sweep = value;
    else if (key == "sweep_values") cfg.sweep_values = detail::parse_list<double>(key, value, detail::parse_double);
    else if (key == "grid_t1") cfg.grid_t1 = static_cast<int>(detail::parse_int(key, value));
    else if (key == "grid_t2") cfg.grid_t2 = static_cast<int>(detail::parse_int(key, value));
    else if (key == "blip_grid_t1") cfg.blip_grid_t1 = static_cast<int>(detail::parse_int(key, value));
    else if (key == "blip_grid_t2") cfg.blip_grid_t2 = static_cast<int>(detail::parse_int(key, value));
    else if (key == "dict_cache") cfg.dict_cache = value;
    else if (key == "trace_dir") cfg.trace_dir = value;
    else throw ConfigError("unknown config key: " + key);
  }
  if (cfg.method != "gapmrf" && cfg.method != "blip" && cfg.method != "both")
    throw ConfigError("method must be gapmrf, blip or both");
  if (cfg.sweep != "none" && cfg.sweep != "isnr" && cfg.sweep != "length")
    throw ConfigError("sweep must be none, isnr or length");
  if (cfg.sweep != "none" && cfg.sweep_values.empty())
    throw ConfigError("sweep_values required when sweep is set");
  return cfg;
}

inline ExperimentConfig parse_experiment_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_experiment_config(in);
}

// Uniform sparse reconstruction view: per voxel, the recovered atoms as
// (t1, t2, density). Both solvers convert into this for evaluation and
// for the atoms.csv interchange file.
struct AtomList {
  std::vector<std::vector<std::array<double, 3>>> per_voxel;
};

inline AtomList atoms_from_mixing(const Mat& mixing, const Mat& params) {
  AtomList atoms;
  atoms.per_voxel.resize(mixing.rows());
  for (int v = 0; v < mixing.rows(); ++v)
    for (int j = 0; j < mixing.cols(); ++j)
      if (mixing(v, j) > 0.0)
        atoms.per_voxel[v].push_back({params(j, 0), params(j, 1), mixing(v, j)});
  return atoms;
}

inline AtomList atoms_from_single(const IVec& atom_index, const Vec& density,
                                  const Mat& dict_params) {
  AtomList atoms;
  atoms.per_voxel.resize(atom_index.size());
  for (int v = 0; v < atom_index.size(); ++v)
    if (density[v] > 0.0)
      atoms.per_voxel[v].push_back({dict_params(atom_index[v], 0),
                                    dict_params(atom_index[v], 1), density[v]});
  return atoms;
}

// Full quantitative evaluation of a sparse reconstruction: consolidated
// per-tissue SNR, success rates, dominant-tissue maps, plus the
// magnetization SNR when both sequences are supplied.
inline EvalReport evaluate_atoms(const GroundTruth& gt, const AtomList& atoms,
                                 const CMat* m_true = nullptr,
                                 const CMat* m_hat = nullptr,
                                 double density_floor = 30.0,
                                 double tol = 0.15) {
  const int n = gt.num_voxels();
  if (static_cast<int>(atoms.per_voxel.size()) != n)
    throw ConfigError("reconstruction voxel count mismatch");
  const int num_tissues = static_cast<int>(gt.tissues.size());
  EvalReport report;

  Mat consolidated = Mat::Zero(n, num_tissues + 1);
  for (int v = 0; v < n; ++v)
    for (const auto& atom : atoms.per_voxel[v]) {
      bool matched = false;
      for (int t = 0; t < num_tissues; ++t) {
        const auto& p = gt.tissues[t].params;
        if (std::abs(atom[0] - p.t1) <= tol * p.t1 &&
            std::abs(atom[1] - p.t2) <= tol * p.t2) {
          consolidated(v, t) += atom[2];
          matched = true;
        }
      }
      if (!matched) consolidated(v, num_tissues) += atom[2];
    }
  for (int t = 0; t < num_tissues; ++t)
    report.per_tissue_snr_db.push_back(
        tissue_snr(gt.mixing.col(t), consolidated.col(t)));
  report.residual_map_mass = consolidated.col(num_tissues).sum();

  auto rates = detail::success_rate_impl(
      gt,
      [&](int v) {
        std::vector<std::pair<double, double>> est;
        for (const auto& atom : atoms.per_voxel[v])
          if (atom[2] >= density_floor) est.emplace_back(atom[0], atom[1]);
        return est;
      },
      tol);
  report.sr_pure = rates.first;
  report.sr_pv = rates.second;

  report.dominant = Mat::Zero(n, 3);
  for (int v = 0; v < n; ++v) {
    const std::array<double, 3>* best = nullptr;
    for (const auto& atom : atoms.per_voxel[v])
      if (!best || atom[2] > (*best)[2]) best = &atom;
    if (best) report.dominant.row(v) << (*best)[2], (*best)[0], (*best)[1];
  }

  if (m_true && m_hat)
    report.magnetization_snr_db = magnetization_snr(*m_true, *m_hat);
  else
    report.magnetization_snr_db = std::numeric_limits<double>::quiet_NaN();
  return report;
}

// dB sentinel for CSV output: infinities cap at +/-300.
inline double snr_for_csv(double db) {
  if (std::isnan(db)) return db;
  return std::clamp(db, -300.0, 300.0);
}

inline void write_atoms_csv(const std::string& path, const AtomList& atoms) {
  auto out = detail::open_out(path);
  out << "voxel,t1,t2,density\n";
  for (size_t v = 0; v < atoms.per_voxel.size(); ++v)
    for (const auto& atom : atoms.per_voxel[v])
      out << v << "," << format_number(atom[0]) << "," << format_number(atom[1])
          << "," << format_number(atom[2]) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline AtomList read_atoms_csv(const std::string& path, int num_voxels) {
  auto in = detail::open_in(path);
  AtomList atoms;
  atoms.per_voxel.resize(num_voxels);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::array<double, 4> values{};
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, field, ','))
        throw IoError("bad atoms row in " + path);
      values[i] = std::stod(field);
    }
    const int v = static_cast<int>(values[0]);
    if (v < 0 || v >= num_voxels) throw IoError("bad voxel index in " + path);
    atoms.per_voxel[v].push_back({values[1], values[2], values[3]});
  }
  return atoms;
}

// Map emission: dominant-tissue maps plus consolidated per-tissue density
// maps, scaled to fixed documented ranges (density 400, t1 5100, t2 600).
inline void emit_maps(const std::string& dir, const GroundTruth& gt,
                      const EvalReport& report, const AtomList& atoms) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_pgm(dir + "/dominant_density.pgm", report.dominant.col(0), gt.rows,
            gt.cols, 400.0);
  write_pgm(dir + "/dominant_t1.pgm", report.dominant.col(1), gt.rows, gt.cols,
            5100.0);
  write_pgm(dir + "/dominant_t2.pgm", report.dominant.col(2), gt.rows, gt.cols,
            600.0);
  const int num_tissues = static_cast<int>(gt.tissues.size());
  Mat consolidated = Mat::Zero(gt.num_voxels(), num_tissues + 1);
  for (int v = 0; v < gt.num_voxels(); ++v)
    for (const auto& atom : atoms.per_voxel[v]) {
      bool matched = false;
      for (int t = 0; t < num_tissues; ++t) {
        const auto& p = gt.tissues[t].params;
        if (std::abs(atom[0] - p.t1) <= 0.15 * p.t1 &&
            std::abs(atom[1] - p.t2) <= 0.15 * p.t2) {
          consolidated(v, t) += atom[2];
          matched = true;
        }
      }
      if (!matched) consolidated(v, num_tissues) += atom[2];
    }
  for (int t = 0; t < num_tissues; ++t)
    write_pgm(dir + "/tissue_" + gt.tissues[t].name + ".pgm",
              consolidated.col(t), gt.rows, gt.cols, 400.0);
  write_pgm(dir + "/tissue_residual.pgm", consolidated.col(num_tissues),
            gt.rows, gt.cols, 400.0);
}

// Ground-truth directory layout: manifest.json + truth.csv.
inline void write_ground_truth(const std::string& dir, const GroundTruth& gt,
                               std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["rows"] = gt.rows;
  manifest["cols"] = gt.cols;
  manifest["seed"] = seed;
  for (const auto& tissue : gt.tissues)
    manifest["tissues"].push_back({{"name", tissue.name},
                                   {"t1", tissue.params.t1},
                                   {"t2", tissue.params.t2},
                                   {"density_min", tissue.density_min},
                                   {"density_max", tissue.density_max}});
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << "\n";
  std::vector<std::string> header;
  for (const auto& tissue : gt.tissues) header.push_back(tissue.name);
  write_csv(dir + "/truth.csv", header, gt.mixing);
  Vec pure(gt.num_voxels()), pv(gt.num_voxels());
  for (int v = 0; v < gt.num_voxels(); ++v) {
    pure[v] = gt.pure_mask[v] ? 1.0 : 0.0;
    pv[v] = gt.pv_mask[v] ? 1.0 : 0.0;
  }
  write_pgm(dir + "/pure_mask.pgm", pure, gt.rows, gt.cols, 1.0);
  write_pgm(dir + "/pv_mask.pgm", pv, gt.rows, gt.cols, 1.0);
}

inline GroundTruth read_ground_truth(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("cannot open " + dir + "/manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  GroundTruth gt;
  gt.rows = manifest.at("rows").get<int>();
  gt.cols = manifest.at("cols").get<int>();
  for (const auto& t : manifest.at("tissues"))
    gt.tissues.push_back(TissueSpec::make(
        t.at("name").get<std::string>(),
        TissueParams::make(t.at("t1").get<double>(), t.at("t2").get<double>()),
        t.at("density_min").get<double>(), t.at("density_max").get<double>()));
  auto in = detail::open_in(dir + "/truth.csv");
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
    if (row.size() != gt.tissues.size())
      throw IoError("bad truth.csv row width");
    rows.push_back(std::move(row));
  }
  if (static_cast<int>(rows.size()) != gt.num_voxels())
    throw IoError("truth.csv voxel count mismatch");
  gt.mixing.resize(rows.size(), gt.tissues.size());
  for (size_t v = 0; v < rows.size(); ++v)
    for (size_t t = 0; t < rows[v].size(); ++t) gt.mixing(v, t) = rows[v][t];
  gt.pure_mask.assign(gt.num_voxels(), false);
  gt.pv_mask.assign(gt.num_voxels(), false);
  for (int v = 0; v < gt.num_voxels(); ++v) {
    const int nonzeros =
        static_cast<int>((gt.mixing.row(v).array() != 0.0).count());
    gt.pure_mask[v] = nonzeros == 1;
    gt.pv_mask[v] = nonzeros >= 2;
  }
  return gt;
}

// One row of the sweep results table.
struct RunMetrics {
  std::string method;
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  EvalReport report;
  int iterations = 0;
  double final_residual = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

inline std::string run_label(const std::string& method, double sweep_value,
                             std::uint64_t seed) {
  std::ostringstream label;
  label << method << "_v" << format_number(sweep_value) << "_s" << seed;
  return label.str();
}

}  // namespace detail

// Full pipeline for every (sweep value, seed, method): phantom -> render ->
// forward -> noise -> reconstruct -> evaluate. Writes per-run outputs, the
// combined results table, aggregates and a manifest; also returns the rows.
inline std::vector<RunMetrics> run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  fs::create_directories(cfg.out_dir);

  const auto tissues = default_tissues();
  const GroundTruth gt =
      make_pv_phantom(cfg.rows, cfg.cols, tissues, cfg.phantom_seed);
  write_ground_truth(cfg.out_dir + "/truth", gt, cfg.phantom_seed);
  const ParameterBox box;

  std::vector<double> sweep_values = cfg.sweep == "none"
                                         ? std::vector<double>{cfg.isnr_db}
                                         : cfg.sweep_values;
  std::vector<RunMetrics> rows;
  nlohmann::json manifest_runs = nlohmann::json::array();

  for (const double value : sweep_values) {
    const double isnr = cfg.sweep == "isnr" ? value : cfg.isnr_db;
    const int length = cfg.sweep == "length" ? static_cast<int>(value)
                                             : cfg.sequence_length;
    const AcquisitionParams acq =
        random_flip_angle_schedule(length, cfg.acq_seed);
    const CMat m_true = render_magnetization(gt, acq);
    Dictionary blip_dict;  // built lazily per sweep point
    const Mat base_grid = parameter_grid(cfg.grid_t1, cfg.grid_t2, box);

    for (const std::uint64_t seed : cfg.seeds) {
      const SamplingScheme scheme =
          make_epi_scheme(cfg.rows, cfg.cols, cfg.undersampling, length,
                          Rng::mix(seed, 3));
      const Measurements clean = forward(m_true, scheme);
      auto [y, sigma] = add_noise(clean, isnr, Rng::mix(seed, 1));

      std::vector<std::string> methods;
      if (cfg.method == "both")
        methods = {"gapmrf", "blip"};
      else
        methods = {cfg.method};
      for (const std::string& method : methods) {
        RunMetrics row;
        row.method = method;
        row.sweep_value = value;
        row.seed = seed;
        const auto start = clock::now();
        AtomList atoms;
        CMat m_hat;
        if (method == "blip") {
          if (blip_dict.size() == 0)
            blip_dict = build_dictionary(
                dense_parameter_grid(cfg.blip_grid_t1, cfg.blip_grid_t2, box),
                acq);
          BlipResult result =
              blip_solve(y, scheme, blip_dict, cfg.gap.backtrack_factor,
                         cfg.max_outer_iterations, cfg.stop_rel);
          atoms = atoms_from_single(result.atom_index, result.density,
                                    blip_dict.params);
          m_hat = std::move(result.m);
          row.iterations = result.iterations;
          row.final_residual = std::sqrt(result.energy.back());
        } else {
          const Dictionary dict0 = build_dictionary(base_grid, acq);
          if (cfg.auto_tune) {
            TuneTolerances tolerances;
            tolerances.residual_tol = cfg.gap.residual_tol;
            TuneResult tuned =
                auto_tune(y, scheme, dict0, cfg.gap, acq, box, tolerances,
                          Rng::mix(seed, 2), cfg.max_outer_iterations);
            atoms = atoms_from_mixing(tuned.mixing, tuned.final.reduced_params);
            m_hat = std::move(tuned.final.m);
            row.iterations = tuned.final.iterations;
            row.final_residual = std::sqrt(tuned.final.energy.back());
          } else {
            SolveControls controls;
            controls.seed = Rng::mix(seed, 2);
            controls.max_outer_iterations = cfg.max_outer_iterations;
            controls.stop_rel = cfg.stop_rel;
            controls.phase_iterations = cfg.phase_iterations;
            GapResult result = gap_mrf_solve(y, scheme, dict0, cfg.gap, acq,
                                             box, controls);
            atoms = atoms_from_mixing(result.mixing, result.reduced_params);
            m_hat = std::move(result.m);
            row.iterations = result.iterations;
            row.final_residual = std::sqrt(result.energy.back());
          }
        }
        row.report = evaluate_atoms(gt, atoms, &m_true, &m_hat);
        row.wall_seconds =
            std::chrono::duration<double>(clock::now() - start).count();

        const std::string run_dir =
            cfg.out_dir + "/" + detail::run_label(method, value, seed);
        fs::create_directories(run_dir);
        write_atoms_csv(run_dir + "/atoms.csv", atoms);
        emit_maps(run_dir, gt, row.report, atoms);
        manifest_runs.push_back({{"method", method},
                                 {"sweep_value", value},
                                 {"seed", seed},
                                 {"iterations", row.iterations},
                                 {"final_residual", row.final_residual},
                                 {"noise_sigma", sigma},
                                 {"wall_seconds", row.wall_seconds}});
        rows.push_back(std::move(row));
      }
    }
  }

  // results.csv: one row per run.
  {
    auto out = detail::open_out(cfg.out_dir + "/results.csv");
    out << "method,sweep_value,seed,sr_pure,sr_pv";
    for (const auto& tissue : tissues) out << ",snr_" << tissue.name;
    out << ",residual_mass,magnetization_snr_db,iterations,final_residual\n";
    for (const auto& row : rows) {
      out << row.method << "," << format_number(row.sweep_value) << ","
          << row.seed << "," << format_number(row.report.sr_pure) << ","
          << format_number(row.report.sr_pv);
      for (const double snr : row.report.per_tissue_snr_db)
        out << "," << format_number(snr_for_csv(snr));
      out << "," << format_number(row.report.residual_map_mass) << ","
          << format_number(snr_for_csv(row.report.magnetization_snr_db)) << ","
          << row.iterations << "," << format_number(row.final_residual)
          << "\n";
    }
  }

  // aggregate.csv: mean and standard deviation over seeds.
  {
    auto out = detail::open_out(cfg.out_dir + "/aggregate.csv");
    out << "method,sweep_value,sr_pure_mean,sr_pure_std,sr_pv_mean,sr_pv_std,"
           "magnetization_snr_mean,magnetization_snr_std\n";
    std::vector<std::pair<std::string, double>> keys;
    for (const auto& row : rows) {
      const auto key = std::make_pair(row.method, row.sweep_value);
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        keys.push_back(key);
    }
    for (const auto& key : keys) {
      std::vector<double> pure, pv, mag;
      for (const auto& row : rows)
        if (row.method == key.first && row.sweep_value == key.second) {
          pure.push_back(row.report.sr_pure);
          pv.push_back(row.report.sr_pv);
          mag.push_back(snr_for_csv(row.report.magnetization_snr_db));
        }
      auto stats = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (const double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (const double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        return std::make_pair(mean, std::sqrt(var));
      };
      const auto [pure_mean, pure_std] = stats(pure);
      const auto [pv_mean, pv_std] = stats(pv);
      const auto [mag_mean, mag_std] = stats(mag);
      out << key.first << "," << format_number(key.second) << ","
          << format_number(pure_mean) << "," << format_number(pure_std) << ","
          << format_number(pv_mean) << "," << format_number(pv_std) << ","
          << format_number(mag_mean) << "," << format_number(mag_std) << "\n";
    }
  }

  nlohmann::json manifest;
  manifest["config"] = {
      {"rows", cfg.rows}, {"cols", cfg.cols},
      {"phantom_seed", cfg.phantom_seed},
      {"sequence_length", cfg.sequence_length}, {"acq_seed", cfg.acq_seed},
      {"undersampling", cfg.undersampling}, {"isnr_db", snr_for_csv(cfg.isnr_db)},
      {"method", cfg.method}, {"seeds", cfg.seeds},
      {"auto_tune", cfg.auto_tune}, {"sweep", cfg.sweep},
      {"sweep_values", sweep_values},
      {"max_atoms", cfg.gap.max_atoms},
      {"merge_radius", cfg.gap.merge_radius},
      {"min_pure_voxels", cfg.gap.min_pure_voxels},
      {"purity_fraction", cfg.gap.purity_fraction},
      {"min_density", cfg.gap.min_density},
      {"covariance_decay", cfg.gap.covariance_decay},
      {"samples_per_atom", cfg.gap.samples_per_atom},
      {"sample_var_t1", cfg.gap.sample_var_t1},
      {"sample_var_t2", cfg.gap.sample_var_t2},
      {"backtrack_factor", cfg.gap.backtrack_factor}};
  manifest["runs"] = manifest_runs;
  std::ofstream(cfg.out_dir + "/manifest.json") << manifest.dump(2) << "\n";
  return rows;
}

}  // namespace gapmrf
