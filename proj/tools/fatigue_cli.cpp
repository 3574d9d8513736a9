#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fatigue/errors.hpp"
#include "fatigue/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fatigue;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidConfig: return 2;
    case ErrorKind::DataError: return 3;
    case ErrorKind::NumericalFailure: return 4;
  }
  return 3;
}

std::vector<double> parse_list(const std::string& s, char sep) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "cannot parse '" + item + "' as a number");
    }
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.precision(17);
  return out;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::vector<std::size_t> pick_split(const HybridModel& m, const Dataset& d, const std::string& which) {
  if (which == "test") return m.split.test;
  if (which == "cv") return m.split.cv;
  if (which == "train") return m.split.train;
  if (which == "all") {
    std::vector<std::size_t> ids(d.samples.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown split '" + which + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming fatigue failure-time prediction"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a labelled synthetic dataset");
  std::size_t gen_n = 300;
  std::uint64_t gen_seed = 1;
  std::string gen_config, gen_out = "data";
  bool gen_signals = false;
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--config", gen_config, "Generation config JSON (partial configs allowed)");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_flag("--write-signals", gen_signals, "Also write every stress history as CSV");

  // train
  auto* train = app.add_subcommand("train", "Fit the ANN and GP stages");
  std::string tr_data = "data", tr_split = "0.6,0.2,0.2", tr_out = "model.json";
  std::uint64_t tr_seed = 1;
  HybridConfig hc;
  train->add_option("--data", tr_data, "Dataset directory");
  train->add_option("--split", tr_split, "train,cv,test ratios");
  train->add_option("--seed", tr_seed, "Seed for the split, ANN and GP restarts");
  train->add_option("--out", tr_out, "Model JSON path");
  train->add_option("--epochs", hc.ann.max_epochs, "Maximum ANN epochs");
  train->add_option("--lr", hc.ann.learning_rate, "Initial Adam learning rate");
  train->add_option("--lambda", hc.ann.lambda, "L2 regularization");
  train->add_option("--batch", hc.ann.batch_size, "Mini-batch size");
  train->add_option("--instants", hc.instants_per_sample, "ANN rows per training sample");
  train->add_option("--restarts", hc.gpr.restarts, "GP optimizer restarts");

  // stream
  auto* stream = app.add_subcommand("stream", "Replay one signal and emit predictions");
  std::string st_model = "model.json", st_signal, st_data, st_out = "pred.csv";
  long long st_sample = -1;
  double st_alpha = 0.95, st_fs = 1.0, st_A = 0, st_b = 0, st_uts = 0, st_stop = -1;
  stream->add_option("--model", st_model, "Model JSON");
  stream->add_option("--signal", st_signal, "Signal CSV (t,x)");
  stream->add_option("--data", st_data, "Dataset directory, with --sample");
  stream->add_option("--sample", st_sample, "Sample id inside --data");
  stream->add_option("--A", st_A, "Fatigue strength coefficient, MPa (with --signal)");
  stream->add_option("--b", st_b, "Fatigue strength exponent (with --signal)");
  stream->add_option("--uts", st_uts, "Ultimate tensile strength, MPa (with --signal)");
  stream->add_option("--alpha", st_alpha, "Confidence level");
  stream->add_option("--fs", st_fs, "Prediction rate, Hz");
  stream->add_option("--stop", st_stop, "Stop after this time, s");
  stream->add_option("--out", st_out, "Prediction CSV");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Score a model on a dataset split");
  std::string ev_model = "model.json", ev_data = "data", ev_out = "report.json", ev_split = "test";
  EvalConfig ec;
  eval->add_option("--model", ev_model, "Model JSON");
  eval->add_option("--data", ev_data, "Dataset directory");
  eval->add_option("--alpha", ec.alpha, "Confidence level");
  eval->add_option("--beta", ec.beta, "Early-prediction fraction");
  eval->add_option("--r", ec.r, "Stability fraction");
  eval->add_option("--fs", ec.f_s, "Prediction rate, Hz");
  eval->add_option("--split", ev_split, "test, cv, train or all");
  eval->add_option("--out", ev_out, "Report JSON");

  // import-pv
  auto* imp = app.add_subcommand("import-pv", "Resample a peak/valley list into a signal");
  std::string ip_file, ip_out = "sig.csv";
  double ip_fmax = 35.0, ip_kt = 3.12, ip_scale = 1.0, ip_oversample = 20.0;
  imp->add_option("--file", ip_file, "Peak/valley list, one value per line")->required();
  imp->add_option("--fmax", ip_fmax, "Maximum load frequency, Hz");
  imp->add_option("--kt", ip_kt, "Stress concentration factor");
  imp->add_option("--scale", ip_scale, "Multiplier applied to the raw values");
  imp->add_option("--oversample", ip_oversample, "Output rate as a multiple of fmax");
  imp->add_option("--out", ip_out, "Signal CSV");

  // tune-rho
  auto* tune = app.add_subcommand("tune-rho", "Score percentile levels on a dataset");
  std::string tu_data = "data", tu_grid = "0.5:0.99:0.05", tu_out = "rho.csv";
  std::size_t tu_folds = 5, tu_limit = 0;
  tune->add_option("--data", tu_data, "Dataset directory");
  tune->add_option("--grid", tu_grid, "lo:hi:step");
  tune->add_option("--folds", tu_folds, "Cross-validation folds");
  tune->add_option("--limit", tu_limit, "Use only the first N samples (0 = all)");
  tune->add_option("--out", tu_out, "Score table CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      GenerationConfig cfg;
      if (!gen_config.empty()) cfg = generation_config_from_json(read_json_file(gen_config));
      const auto t0 = std::chrono::steady_clock::now();
      const Dataset d = generate_dataset(gen_n, cfg, gen_seed);
      write_dataset(d, gen_out, gen_signals);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::cout << "wrote " << d.samples.size() << " samples to " << gen_out << " in " << secs
                << " s\n";
    } else if (*train) {
      const auto ratios = parse_list(tr_split, ',');
      if (ratios.size() != 3) throw Error(ErrorCode::InvalidArgument, "--split needs three ratios");
      const Dataset d = read_dataset(tr_data);
      const Split split = split_dataset(d.samples.size(), {ratios[0], ratios[1], ratios[2]}, tr_seed);
      hc.ann.rng_seed = derive_seed(tr_seed, 1);
      hc.gpr.rng_seed = derive_seed(tr_seed, 2);
      const HybridModel m = train_hybrid(d, split, hc);
      write_json_file(tr_out, hybrid_to_json(m));

      auto loss = open_out(sibling(tr_out, "_loss.csv"));
      loss << "epoch,train_loss,val_loss\n";
      for (std::size_t e = 0; e < m.ann_train_loss.size(); ++e) {
        loss << e + 1 << ',' << m.ann_train_loss[e] << ',' << m.ann_val_loss[e] << '\n';
      }
      // CV scatter: ANN embedding against ground truth, and the GP band.
      auto cv = open_out(sibling(tr_out, "_cv.csv"));
      cv << "id,tau_gt,eta,mu,sigma\n";
      for (std::size_t id : split.cv) {
        const auto& s = d.samples[id];
        const auto& fv = s.trajectory.back().values;
        const auto [mu, sigma] = m.prior(fv);
        cv << id << ',' << s.tau_gt << ',' << m.eta(fv) << ',' << mu << ',' << sigma << '\n';
      }
      std::cout << "trained on " << split.train.size() << " samples, GP conditioned on "
                << split.cv.size() << "; model written to " << tr_out << '\n';
    } else if (*stream) {
      const HybridModel m = hybrid_from_json(read_json_file(st_model));
      Signal sig;
      MaterialParams mat{st_A, st_b, st_uts};
      double stop = st_stop > 0 ? st_stop : std::numeric_limits<double>::infinity();
      if (!st_data.empty()) {
        const Dataset d = read_dataset(st_data);
        if (st_sample < 0 || static_cast<std::size_t>(st_sample) >= d.samples.size()) {
          throw Error(ErrorCode::InvalidArgument, "--sample is outside the dataset");
        }
        const auto& s = d.samples[static_cast<std::size_t>(st_sample)];
        sig = sample_signal(s);
        mat = s.material;
        if (st_stop <= 0) stop = s.tau_gt;
      } else if (!st_signal.empty()) {
        sig = read_signal_csv(st_signal);
        mat.validate();
      } else {
        throw Error(ErrorCode::InvalidArgument, "give --signal with --A/--b/--uts, or --data with --sample");
      }
      StreamConfig sc;
      sc.alpha = st_alpha;
      sc.f_s = st_fs;
      sc.stop_time = stop;
      const auto preds = stream_predict(m, sig, mat, sc);
      auto out = open_out(st_out);
      write_predictions_csv(out, preds);
      std::cout << preds.size() << " predictions written to " << st_out << '\n';
    } else if (*eval) {
      const HybridModel m = hybrid_from_json(read_json_file(ev_model));
      const Dataset d = read_dataset(ev_data);
      const auto ids = pick_split(m, d, ev_split);
      const DatasetEvaluation ev = evaluate_dataset(m, d, ids, ec);
      write_json_file(ev_out, report_to_json(ev, ec));
      const auto& r = ev.report;
      std::cout << "accuracy " << r.accurate << "/" << r.total << " (" << 100.0 * r.accuracy()
                << "%), conservative " << r.conservative << ", nonconservative "
                << r.nonconservative << ", contained at 0.95 tau: " << 100.0 * ev.calibration
                << "%\n";
    } else if (*imp) {
      const auto pv = read_peak_valley(ip_file, ip_scale);
      const Signal sig = import_peak_valley(pv, ip_fmax, ip_oversample, ip_kt);
      write_signal_csv(ip_out, sig);
      std::cout << sig.size() << " samples at " << sig.sample_rate << " Hz written to " << ip_out
                << '\n';
    } else if (*tune) {
      const auto g = parse_list(tu_grid, ':');
      if (g.size() != 3 || !(g[2] > 0.0) || g[1] < g[0]) {
        throw Error(ErrorCode::InvalidArgument, "--grid must be lo:hi:step with step > 0");
      }
      std::vector<double> grid;
      for (std::size_t k = 0;; ++k) {
        const double v = g[0] + static_cast<double>(k) * g[2];
        if (v > g[1] + 1e-9 * g[2]) break;
        grid.push_back(std::round(v * 1e12) / 1e12);
      }
      const Dataset d = read_dataset(tu_data);
      std::vector<std::size_t> ids;
      const std::size_t n = tu_limit ? std::min(tu_limit, d.samples.size()) : d.samples.size();
      for (std::size_t i = 0; i < n; ++i) ids.push_back(i);
      const auto cases = rho_cases(d, ids);
      const RhoTuning t = tune_rho(cases, grid, tu_folds);
      auto out = open_out(tu_out);
      out << "rho,cv_rmse_log_tau\n";
      for (const auto& s : t.table) out << s.rho << ',' << s.score << '\n';
      std::cout << "best rho " << t.best_rho << " over " << cases.size() << " samples\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
