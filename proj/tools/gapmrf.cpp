// Command-line front end: phantom generation, measurement simulation,
// reconstruction, evaluation and seeded experiment sweeps.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "gapmrf/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalError = 3;

struct SimMeta {
  int rows = 0, cols = 0, undersampling = 0, sequence_length = 0;
  std::uint64_t acq_seed = 0, scheme_seed = 0;
  double isnr_db = 0.0, sigma = 0.0;
  std::string truth_dir;
};

SimMeta read_sim_meta(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw gapmrf::IoError("cannot open " + dir + "/manifest.json");
  json meta = json::parse(in);
  SimMeta sim;
  sim.rows = meta.at("rows").get<int>();
  sim.cols = meta.at("cols").get<int>();
  sim.undersampling = meta.at("undersampling").get<int>();
  sim.sequence_length = meta.at("sequence_length").get<int>();
  sim.acq_seed = meta.at("acq_seed").get<std::uint64_t>();
  sim.scheme_seed = meta.at("scheme_seed").get<std::uint64_t>();
  sim.isnr_db = meta.at("isnr_db").get<double>();
  sim.sigma = meta.at("sigma").get<double>();
  sim.truth_dir = meta.at("truth_dir").get<std::string>();
  return sim;
}

void write_energy_csv(const std::string& path,
                      const std::vector<double>& energy) {
  gapmrf::Mat table(energy.size(), 2);
  for (size_t i = 0; i < energy.size(); ++i)
    table.row(i) << static_cast<double>(i), energy[i];
  gapmrf::write_csv(path, {"iteration", "energy"}, table);
}

int cmd_phantom(int dims, int cols, std::uint64_t seed,
                const std::string& out_dir) {
  if (cols <= 0) cols = dims;
  const auto gt =
      gapmrf::make_pv_phantom(dims, cols, gapmrf::default_tissues(), seed);
  gapmrf::write_ground_truth(out_dir, gt, seed);
  std::cout << "phantom " << dims << "x" << cols << " -> " << out_dir << "\n";
  return 0;
}

int cmd_simulate(const std::string& truth_dir, int length,
                 std::uint64_t acq_seed, const std::string& scheme,
                 int undersampling, double isnr_db, std::uint64_t seed,
                 const std::string& out_dir) {
  if (scheme != "epi")
    throw gapmrf::ConfigError("only the epi sampling scheme is available");
  const auto gt = gapmrf::read_ground_truth(truth_dir);
  const auto acq = gapmrf::random_flip_angle_schedule(length, acq_seed);
  const auto m_true = gapmrf::render_magnetization(gt, acq);
  const std::uint64_t scheme_seed = gapmrf::Rng::mix(seed, 3);
  const auto sampling = gapmrf::make_epi_scheme(gt.rows, gt.cols, undersampling,
                                                length, scheme_seed);
  const auto clean = gapmrf::forward(m_true, sampling);
  auto [noisy, sigma] =
      gapmrf::add_noise(clean, isnr_db, gapmrf::Rng::mix(seed, 1));
  fs::create_directories(out_dir);
  gapmrf::write_measurements(out_dir + "/measurements.bin", noisy);
  json meta;
  meta["rows"] = gt.rows;
  meta["cols"] = gt.cols;
  meta["undersampling"] = undersampling;
  meta["sequence_length"] = length;
  meta["acq_seed"] = acq_seed;
  meta["scheme_seed"] = scheme_seed;
  meta["isnr_db"] = gapmrf::snr_for_csv(isnr_db);
  meta["sigma"] = sigma;
  meta["truth_dir"] = truth_dir;
  std::ofstream(out_dir + "/manifest.json") << meta.dump(2) << "\n";
  std::cout << "simulated Q=" << noisy.points << " L=" << noisy.frames
            << " sigma=" << sigma << " -> " << out_dir << "\n";
  return 0;
}

int cmd_reconstruct(const std::string& sim_dir, const std::string& method,
                    const std::string& config_path, bool auto_tune,
                    const std::string& trace_dir,
                    const std::string& dict_cache, int phase_iterations,
                    std::uint64_t seed, const std::string& out_dir) {
  using clock = std::chrono::steady_clock;
  const SimMeta sim = read_sim_meta(sim_dir);
  const auto y = gapmrf::read_measurements(sim_dir + "/measurements.bin");
  const auto acq =
      gapmrf::random_flip_angle_schedule(sim.sequence_length, sim.acq_seed);
  const auto scheme = gapmrf::make_epi_scheme(
      sim.rows, sim.cols, sim.undersampling, sim.sequence_length,
      sim.scheme_seed);
  gapmrf::ExperimentConfig cfg;
  if (!config_path.empty())
    cfg = gapmrf::parse_experiment_config_file(config_path);
  cfg.gap.validate();
  const gapmrf::ParameterBox box;
  fs::create_directories(out_dir);

  const auto start = clock::now();
  gapmrf::AtomList atoms;
  gapmrf::CMat m_hat;
  std::vector<double> energy;
  int iterations = 0;
  json tuned_json;
  if (method == "blip") {
    gapmrf::Dictionary dict;
    if (!dict_cache.empty() && fs::exists(dict_cache)) {
      dict = gapmrf::read_dictionary(dict_cache);
      if (dict.length() != sim.sequence_length)
        throw gapmrf::ConfigError("dictionary cache length mismatch");
    } else {
      dict = gapmrf::build_dictionary(
          gapmrf::dense_parameter_grid(cfg.blip_grid_t1, cfg.blip_grid_t2, box),
          acq);
      if (!dict_cache.empty()) gapmrf::write_dictionary(dict_cache, dict);
    }
    auto result = gapmrf::blip_solve(y, scheme, dict, cfg.gap.backtrack_factor,
                                     cfg.max_outer_iterations, cfg.stop_rel);
    atoms = gapmrf::atoms_from_single(result.atom_index, result.density,
                                      dict.params);
    m_hat = std::move(result.m);
    energy = std::move(result.energy);
    iterations = result.iterations;
  } else if (method == "gapmrf") {
    const auto dict0 = gapmrf::build_dictionary(
        gapmrf::parameter_grid(cfg.grid_t1, cfg.grid_t2, box), acq);
    if (auto_tune) {
      gapmrf::TuneTolerances tolerances;
      tolerances.residual_tol = cfg.gap.residual_tol;
      auto tuned = gapmrf::auto_tune(y, scheme, dict0, cfg.gap, acq, box,
                                     tolerances, seed,
                                     cfg.max_outer_iterations);
      atoms = gapmrf::atoms_from_mixing(tuned.mixing,
                                        tuned.final.reduced_params);
      m_hat = std::move(tuned.final.m);
      energy = std::move(tuned.final.energy);
      iterations = tuned.final.iterations;
      tuned_json = {{"max_atoms", tuned.max_atoms_star},
                    {"merge_radius", tuned.merge_radius_star},
                    {"min_pure_voxels", tuned.min_pure_star},
                    {"residual_tol", tuned.residual_tol}};
    } else {
      gapmrf::SolveControls controls;
      controls.seed = seed;
      controls.max_outer_iterations = cfg.max_outer_iterations;
      controls.stop_rel = cfg.stop_rel;
      controls.phase_iterations =
          phase_iterations > 0 ? phase_iterations : cfg.phase_iterations;
      gapmrf::TraceFn trace;
      if (!trace_dir.empty()) {
        fs::create_directories(trace_dir);
        trace = [&](int iteration, const gapmrf::Mat& params,
                    const gapmrf::Mat& mixing, double residual) {
          std::ostringstream name;
          name << trace_dir << "/atoms_" << iteration << ".csv";
          gapmrf::Mat table(params.rows(), 4);
          for (int a = 0; a < params.rows(); ++a)
            table.row(a) << static_cast<double>(iteration), params(a, 0),
                params(a, 1), residual;
          gapmrf::write_csv(name.str(), {"iteration", "t1", "t2", "residual"},
                            table);
          std::ostringstream mixing_name;
          mixing_name << trace_dir << "/mixing_" << iteration << ".csv";
          std::vector<std::string> header;
          for (int a = 0; a < mixing.cols(); ++a)
            header.push_back("atom" + std::to_string(a));
          gapmrf::write_csv(mixing_name.str(), header, mixing);
        };
      }
      auto result = gapmrf::gap_mrf_solve(y, scheme, dict0, cfg.gap, acq, box,
                                          controls, nullptr, trace);
      atoms = gapmrf::atoms_from_mixing(result.mixing, result.reduced_params);
      m_hat = std::move(result.m);
      energy = std::move(result.energy);
      iterations = result.iterations;
    }
  } else {
    throw gapmrf::ConfigError("method must be blip or gapmrf");
  }
  const double wall =
      std::chrono::duration<double>(clock::now() - start).count();

  gapmrf::write_atoms_csv(out_dir + "/atoms.csv", atoms);
  gapmrf::write_cmatrix(out_dir + "/m_hat.bin", m_hat);
  write_energy_csv(out_dir + "/energy.csv", energy);
  json meta;
  meta["method"] = method;
  meta["seed"] = seed;
  meta["iterations"] = iterations;
  meta["wall_seconds"] = wall;
  meta["sequence_length"] = sim.sequence_length;
  meta["acq_seed"] = sim.acq_seed;
  meta["truth_dir"] = sim.truth_dir;
  meta["sim_dir"] = sim_dir;
  if (!tuned_json.is_null()) meta["tuned"] = tuned_json;
  std::ofstream(out_dir + "/manifest.json") << meta.dump(2) << "\n";
  std::cout << method << " finished after " << iterations
            << " iterations, residual "
            << gapmrf::format_number(std::sqrt(energy.back())) << " -> "
            << out_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& truth_dir, const std::string& run_dir,
                 std::string out_dir) {
  if (out_dir.empty()) out_dir = run_dir;
  const auto gt = gapmrf::read_ground_truth(truth_dir);
  std::ifstream in(run_dir + "/manifest.json");
  if (!in) throw gapmrf::IoError("cannot open " + run_dir + "/manifest.json");
  json meta = json::parse(in);
  const auto acq = gapmrf::random_flip_angle_schedule(
      meta.at("sequence_length").get<int>(),
      meta.at("acq_seed").get<std::uint64_t>());
  const auto m_true = gapmrf::render_magnetization(gt, acq);
  const auto m_hat = gapmrf::read_cmatrix(run_dir + "/m_hat.bin");
  const auto atoms =
      gapmrf::read_atoms_csv(run_dir + "/atoms.csv", gt.num_voxels());
  const auto report = gapmrf::evaluate_atoms(gt, atoms, &m_true, &m_hat);

  fs::create_directories(out_dir);
  std::vector<std::string> header = {"sr_pure", "sr_pv"};
  for (const auto& tissue : gt.tissues) header.push_back("snr_" + tissue.name);
  header.push_back("residual_mass");
  header.push_back("magnetization_snr_db");
  gapmrf::Mat table(1, header.size());
  table(0, 0) = report.sr_pure;
  table(0, 1) = report.sr_pv;
  for (size_t t = 0; t < report.per_tissue_snr_db.size(); ++t)
    table(0, 2 + t) = gapmrf::snr_for_csv(report.per_tissue_snr_db[t]);
  table(0, 2 + gt.tissues.size()) = report.residual_map_mass;
  table(0, 3 + gt.tissues.size()) =
      gapmrf::snr_for_csv(report.magnetization_snr_db);
  gapmrf::write_csv(out_dir + "/eval.csv", header, table);
  gapmrf::emit_maps(out_dir, gt, report, atoms);
  std::cout << "sr_pure=" << report.sr_pure << " sr_pv=" << report.sr_pv
            << " -> " << out_dir << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
  auto cfg = gapmrf::parse_experiment_config_file(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  const auto rows = gapmrf::run_experiment(cfg);
  std::cout << rows.size() << " runs -> " << cfg.out_dir << "\n";
  return 0;
}

// Groups results.csv rows by (method, sweep_value) and emits mean/std of
// every numeric column.
int cmd_report(const std::string& results_path, const std::string& out_path) {
  std::ifstream in(results_path);
  if (!in) throw gapmrf::IoError("cannot open " + results_path);
  std::string line;
  if (!std::getline(in, line)) throw gapmrf::IoError("empty results file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) header.push_back(field);
  }
  std::map<std::string, std::vector<std::vector<double>>> groups;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != header.size())
      throw gapmrf::IoError("ragged results row");
    const std::string key = fields[0] + "," + fields[1];
    if (!groups.count(key)) order.push_back(key);
    std::vector<double> numeric;
    for (size_t i = 3; i < fields.size(); ++i)  // skip method, value, seed
      numeric.push_back(std::stod(fields[i]));
    groups[key].push_back(std::move(numeric));
  }
  std::ofstream out(out_path);
  if (!out) throw gapmrf::IoError("cannot open " + out_path);
  out << header[0] << "," << header[1];
  for (size_t i = 3; i < header.size(); ++i)
    out << "," << header[i] << "_mean," << header[i] << "_std";
  out << "\n";
  for (const auto& key : order) {
    const auto& rows = groups[key];
    out << key;
    for (size_t col = 0; col + 3 < header.size(); ++col) {
      double mean = 0.0;
      for (const auto& row : rows) mean += row[col];
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const auto& row : rows) var += (row[col] - mean) * (row[col] - mean);
      var = rows.size() > 1 ? var / static_cast<double>(rows.size() - 1) : 0.0;
      out << "," << gapmrf::format_number(mean) << ","
          << gapmrf::format_number(std::sqrt(var));
    }
    out << "\n";
  }
  std::cout << order.size() << " groups -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial-volume MRF reconstruction toolkit"};
  app.require_subcommand(1);

  auto* phantom = app.add_subcommand("phantom", "generate a ground-truth phantom");
  int ph_dims = 256, ph_cols = 0;
  std::uint64_t ph_seed = 0;
  std::string ph_out = "phantom_out";
  phantom->add_option("--dims", ph_dims, "image rows (and cols unless --cols)");
  phantom->add_option("--cols", ph_cols, "image cols");
  phantom->add_option("--seed", ph_seed, "phantom seed");
  phantom->add_option("--out", ph_out, "output directory")->required();

  auto* simulate = app.add_subcommand("simulate", "simulate measurements");
  std::string sim_truth, sim_scheme = "epi", sim_out = "sim_out";
  int sim_length = 300, sim_under = 16;
  std::uint64_t sim_acq_seed = 1, sim_seed = 7;
  double sim_isnr = 30.0;
  simulate->add_option("--truth", sim_truth, "phantom directory")->required();
  simulate->add_option("--length", sim_length, "sequence length L");
  simulate->add_option("--acq-seed", sim_acq_seed, "flip-angle schedule seed");
  simulate->add_option("--scheme", sim_scheme, "sampling scheme (epi)");
  simulate->add_option("--undersampling", sim_under, "undersampling ratio N/Q");
  simulate->add_option("--isnr", sim_isnr, "input SNR in dB (inf for none)");
  simulate->add_option("--seed", sim_seed, "noise/scheme seed");
  simulate->add_option("--out", sim_out, "output directory")->required();

  auto* reconstruct = app.add_subcommand("reconstruct", "run a reconstruction");
  std::string rec_sim, rec_method = "gapmrf", rec_config, rec_trace,
              rec_cache, rec_out = "recon_out";
  bool rec_tune = false;
  int rec_phase = 0;
  std::uint64_t rec_seed = 0;
  reconstruct->add_option("--sim", rec_sim, "simulation directory")->required();
  reconstruct->add_option("--method", rec_method, "blip or gapmrf");
  reconstruct->add_option("--config", rec_config, "key=value config file");
  reconstruct->add_flag("--auto-tune", rec_tune, "tune K, merge radius, pure count");
  reconstruct->add_option("--trace", rec_trace, "per-iteration trace directory");
  reconstruct->add_option("--dict-cache", rec_cache, "dense dictionary cache file");
  reconstruct->add_option("--phase-comp", rec_phase,
                          "phase-compensation alternations (0 = off)");
  reconstruct->add_option("--seed", rec_seed, "solver seed");
  reconstruct->add_option("--out", rec_out, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a reconstruction");
  std::string ev_truth, ev_run, ev_out;
  evaluate->add_option("--truth", ev_truth, "phantom directory")->required();
  evaluate->add_option("--run", ev_run, "reconstruction directory")->required();
  evaluate->add_option("--out", ev_out, "output directory (default: run dir)");

  auto* sweep = app.add_subcommand("sweep", "run a seeded experiment sweep");
  std::string sw_config, sw_out;
  sweep->add_option("--config", sw_config, "key=value config file")->required();
  sweep->add_option("--out", sw_out, "output directory override");

  auto* report = app.add_subcommand("report", "aggregate a results table");
  std::string rp_results, rp_out = "aggregate.csv";
  report->add_option("--results", rp_results, "results.csv path")->required();
  report->add_option("--out", rp_out, "aggregate output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (phantom->parsed())
      return cmd_phantom(ph_dims, ph_cols, ph_seed, ph_out);
    if (simulate->parsed())
      return cmd_simulate(sim_truth, sim_length, sim_acq_seed, sim_scheme,
                          sim_under, sim_isnr, sim_seed, sim_out);
    if (reconstruct->parsed())
      return cmd_reconstruct(rec_sim, rec_method, rec_config, rec_tune,
                             rec_trace, rec_cache, rec_phase, rec_seed,
                             rec_out);
    if (evaluate->parsed()) return cmd_evaluate(ev_truth, ev_run, ev_out);
    if (sweep->parsed()) return cmd_sweep(sw_config, sw_out);
    if (report->parsed()) return cmd_report(rp_results, rp_out);
  } catch (const gapmrf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericalError;
  }
  return 0;
}
