#include "lsinet/eval/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lsinet/errors.hpp"
#include "lsinet/eval/gradcheck.hpp"

namespace lsinet::eval {
namespace fs = std::filesystem;
namespace {

std::string exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void append_row(const fs::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !fs::exists(path);
  std::ofstream out = open_out(path, std::ios::app);
  if (fresh) out << header << '\n';
  out << row << '\n';
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace

Metrics compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(targets.size()) + " targets");
  }
  if (predictions.empty()) throw ShapeError("compute_metrics: no values");
  double sq = 0.0;
  double abs = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    sq += e * e;
    abs += std::abs(e);
  }
  const double n = static_cast<double>(predictions.size());
  return {sq / n, abs / n};
}

Metrics compute_metrics(std::span<const double> predictions, const ad::Shape& prediction_shape,
                        std::span<const double> targets, const ad::Shape& target_shape) {
  if (prediction_shape != target_shape) {
    throw ShapeError("compute_metrics: prediction shape " + shape_to_string(prediction_shape) +
                     " differs from target shape " + shape_to_string(target_shape));
  }
  if (ad::shape_numel(prediction_shape) != predictions.size() ||
      ad::shape_numel(target_shape) != targets.size()) {
    throw ShapeError("compute_metrics: data length does not match shape");
  }
  return compute_metrics(predictions, targets);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

std::string format_mean_std(double mean, double stddev) {
  std::string dev = "0";
  if (stddev > 0.0) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0e", stddev);
    std::string s(buf);
    const auto e = s.find('e');
    std::string mantissa = s.substr(0, e);
    std::string exponent = s.substr(e + 1);
    const bool negative = !exponent.empty() && exponent[0] == '-';
    if (!exponent.empty() && (exponent[0] == '-' || exponent[0] == '+')) exponent.erase(0, 1);
    exponent.erase(0, std::min(exponent.find_first_not_of('0'), exponent.size() - 1));
    dev = mantissa + "e" + (negative ? "-" : "") + exponent;
  }
  return fixed(mean, 3) + "±" + dev;
}

std::string run_stem(const RunConfig& resolved) {
  return resolved.dataset + "_" + std::to_string(resolved.pred_len) + "_" +
         resolved.variant_label();
}

RunConfig apply_variant(const RunConfig& base, const std::string& spec) {
  RunConfig c = base;
  c.no_msim = c.dense_gates = c.no_asrl = false;
  std::stringstream parts(spec);
  std::string token;
  while (std::getline(parts, token, '+')) {
    if (token == "full") continue;
    if (token == "no_msim") {
      c.no_msim = true;
    } else if (token == "dense_gates") {
      c.dense_gates = true;
    } else if (token == "no_asrl") {
      c.no_asrl = true;
    } else if (token == "degree_normalize") {
      c.degree_normalize = true;
    } else {
      throw ConfigError("unknown ablation variant '" + token +
                        "' (use full, no_msim, no_asrl, dense_gates, degree_normalize, joined "
                        "with '+')");
    }
  }
  return c;
}

VariantResult train_variant(const RunConfig& r, std::ostream& log) {
  const fs::path out_dir = r.out_dir;
  fs::create_directories(out_dir / "checkpoints");
  fs::create_directories(out_dir / "reports");
  const std::string stem = run_stem(r);
  {
    std::ofstream cfg = open_out(out_dir / (stem + ".config"));
    write_config(r, cfg);
  }

  const data::DatasetSplits splits = load_splits(r);
  for (const auto& w : splits.table->warnings) log << "warning: " << w << '\n';
  log << r.dataset << ": " << splits.table->length() << " rows, "
      << splits.table->num_variables() << " variables; samples train " << splits.train.size()
      << ", val " << splits.val.size() << ", test " << splits.test.size() << '\n';

  const model::ModelConfig mc = r.model_config();
  const train::TrainConfig tc = r.train_config();
  VariantResult result;
  result.dataset = r.dataset;
  result.pred_len = r.pred_len;
  result.label = r.variant_label();

  const std::string tsv_header = "dataset\tpred_len\tvariant\tseed\tmse\tmae";
  std::vector<double> mses;
  std::vector<double> maes;
  for (std::uint64_t seed : r.seed_list()) {
    SeedRun run;
    run.seed = seed;
    const std::string seed_stem = stem + "_seed" + std::to_string(seed);
    run.report_file = out_dir / "reports" / (seed_stem + ".jsonl");
    run.checkpoint = out_dir / "checkpoints" / (seed_stem + ".ckpt");
    std::ofstream report = open_out(run.report_file);

    model::LsiNet<float> net(mc, seed);
    log << "[" << result.label << " seed " << seed << "] n=" << mc.patch.history_length
        << " L=" << mc.patch.patch_length << " K=" << mc.patch.stride
        << " N=" << mc.patch.num_patches << '\n';
    run.report = train::fit<float>(tc, splits, net, seed, [&](const train::EpochRecord& rec) {
      report << rec.to_json().dump() << '\n';
      report.flush();
      double max_ones = 0.0;
      for (double f : rec.ones_fraction) max_ones = std::max(max_ones, f);
      log << "  epoch " << rec.epoch << (rec.regularized ? " (reg)" : "      ")
          << " loss " << fixed(rec.train_loss, 5) << " mse " << fixed(rec.train_mse, 5)
          << " asrl " << fixed(rec.train_asrl, 2) << " | val mse " << fixed(rec.val.mse, 5)
          << " mae " << fixed(rec.val.mae, 5) << " | max ones " << fixed(max_ones, 3) << " | "
          << fixed(rec.seconds, 1) << "s\n";
    });
    report << nlohmann::json{{"summary", run.report.summary_json()}}.dump() << '\n';

    nlohmann::json meta;
    meta["run"] = to_map(r);
    meta["seed"] = seed;
    meta["best_epoch"] = run.report.best_epoch;
    meta["test"] = {{"mse", run.report.test.mse}, {"mae", run.report.test.mae}};
    model::save_checkpoint(run.checkpoint, net, meta);

    append_row(out_dir / "metrics.tsv", tsv_header,
               r.dataset + "\t" + std::to_string(r.pred_len) + "\t" + result.label + "\t" +
                   std::to_string(seed) + "\t" + exact(run.report.test.mse) + "\t" +
                   exact(run.report.test.mae));
    log << "  test mse " << exact(run.report.test.mse) << " mae " << exact(run.report.test.mae)
        << " (best epoch " << run.report.best_epoch << ")\n";
    mses.push_back(run.report.test.mse);
    maes.push_back(run.report.test.mae);
    result.runs.push_back(std::move(run));
  }
  result.mse = mean_std(mses);
  result.mae = mean_std(maes);
  append_row(out_dir / "summary.tsv",
             "dataset\tpred_len\tvariant\tseeds\tmse_mean\tmse_std\tmae_mean\tmae_std\tmse\tmae",
             r.dataset + "\t" + std::to_string(r.pred_len) + "\t" + result.label + "\t" +
                 std::to_string(mses.size()) + "\t" + exact(result.mse.mean) + "\t" +
                 exact(result.mse.stddev) + "\t" + exact(result.mae.mean) + "\t" +
                 exact(result.mae.stddev) + "\t" +
                 format_mean_std(result.mse.mean, result.mse.stddev) + "\t" +
                 format_mean_std(result.mae.mean, result.mae.stddev));
  return result;
}

CheckpointEval evaluate_checkpoint(const fs::path& checkpoint,
                                   const std::optional<std::string>& data_path) {
  const model::Checkpoint ck = model::read_checkpoint(checkpoint);
  if (!ck.metadata.contains("run") || !ck.metadata.at("run").is_object()) {
    throw LoadError(checkpoint.string() + " carries no run configuration");
  }
  RunConfig r = from_map(ck.metadata.at("run").get<std::map<std::string, std::string>>());
  if (data_path) r.data_path = *data_path;
  r = r.resolved();
  const data::DatasetSplits splits = load_splits(r);
  const model::LsiNet<float> net = model::load_model<float>(ck);

  CheckpointEval result;
  result.metrics = train::evaluate(net, splits.test, r.train.eval_batch_size);
  if (ck.metadata.contains("test")) {
    const auto& t = ck.metadata.at("test");
    result.recorded = Metrics{t.at("mse").get<double>(), t.at("mae").get<double>()};
    result.matches_recorded =
        result.recorded->mse == result.metrics.mse && result.recorded->mae == result.metrics.mae;
  }
  return result;
}

HeatmapKind parse_heatmap_kind(const std::string& text) {
  if (text == "probs") return HeatmapKind::probs;
  if (text == "hard") return HeatmapKind::hard;
  if (text == "both") return HeatmapKind::both;
  throw ConfigError("unknown heatmap kind '" + text + "' (use probs, hard or both)");
}

HeatmapExport export_heatmap(const fs::path& checkpoint, std::size_t head, HeatmapKind kind,
                             const fs::path& out_dir) {
  const model::Checkpoint ck = model::read_checkpoint(checkpoint);
  const model::LsiNet<float> net = model::load_model<float>(ck);
  const auto matrices = net.connection_matrices();
  if (head >= matrices.size()) {
    throw ConfigError("head " + std::to_string(head) + " is out of range: the checkpoint has " +
                      std::to_string(matrices.size()) + " heads (0.." +
                      std::to_string(matrices.size() - 1) + ")");
  }
  const sscl::ConnectionMatrix& m = matrices[head];
  const bool want_probs = kind != HeatmapKind::hard;
  if (want_probs && m.probs.empty()) {
    throw ConfigError("checkpoint has no learned connection probabilities (gates are fixed)");
  }
  fs::create_directories(out_dir);
  const std::size_t n = m.num_patches;
  const std::string stem = checkpoint.stem().string() + "_head" + std::to_string(head);

  HeatmapExport result;
  result.num_patches = n;
  result.head = head;
  result.ones_fraction = m.ones_fraction();
  auto write = [&](const std::string& suffix, const std::vector<double>& values, bool binary) {
    const fs::path path = out_dir / (stem + "_" + suffix + ".txt");
    std::ofstream out = open_out(path);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) out << ' ';
        const double v = values[i * n + j];
        out << (binary ? (v > 0.5 ? "1" : "0") : exact(v));
      }
      out << '\n';
    }
    result.files.push_back(path);
  };
  if (want_probs) write("probs", m.probs, false);
  if (kind != HeatmapKind::probs) write("hard", m.z_hard, true);

  const std::size_t heads_per_block = ck.metadata.at("model").at("heads").get<std::size_t>();
  const fs::path sidecar = out_dir / (stem + ".meta");
  std::ofstream meta = open_out(sidecar);
  meta << "num_patches = " << n << '\n'
       << "head = " << head << '\n'
       << "block = " << head / heads_per_block << '\n'
       << "block_head = " << head % heads_per_block << '\n'
       << "ones_fraction = " << exact(result.ones_fraction) << '\n'
       << "checkpoint = " << checkpoint.string() << '\n';
  result.files.push_back(sidecar);
  return result;
}

std::vector<double> read_matrix(const fs::path& path, std::size_t& rows, std::size_t& cols) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<double> values;
  rows = 0;
  cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::size_t count = 0;
    double v = 0.0;
    while (row >> v) {
      values.push_back(v);
      ++count;
    }
    if (!row.eof()) throw LoadError(path.string() + ": non-numeric entry in row " +
                                    std::to_string(rows + 1));
    if (rows == 0) cols = count;
    if (count != cols) throw LoadError(path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  return values;
}

HeatmapPattern analyze_pattern(std::span<const double> hard, std::size_t n) {
  if (hard.size() != n * n) throw ShapeError("analyze_pattern: expected an N x N matrix");
  auto on = [&](std::size_t i, std::size_t j) { return hard[i * n + j] > 0.5; };
  HeatmapPattern p;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!on(i, j)) continue;
      if (i + 1 < n && j + 1 < n && on(i, j + 1) && on(i + 1, j) && on(i + 1, j + 1)) {
        p.has_block = true;
      }
      const bool up = i > 0 && on(i - 1, j);
      const bool down = i + 1 < n && on(i + 1, j);
      const bool left = j > 0 && on(i, j - 1);
      const bool right = j + 1 < n && on(i, j + 1);
      if (!up && !down && !left && !right) p.has_isolated = true;
    }
  }
  return p;
}

int run_train(const RunConfig& config, std::ostream& out) {
  const RunConfig r = config.resolved();
  const VariantResult v = train_variant(r, out);
  out << r.dataset << " P=" << r.pred_len << " " << v.label << " over " << v.runs.size()
      << " seed(s): mse " << format_mean_std(v.mse.mean, v.mse.stddev) << "  mae "
      << format_mean_std(v.mae.mean, v.mae.stddev) << '\n'
      << "outputs in " << r.out_dir << '\n';
  return 0;
}

int run_ablate(const RunConfig& config, const std::vector<std::string>& variants,
               std::ostream& out) {
  std::vector<RunConfig> configs;
  for (const auto& spec : variants) configs.push_back(apply_variant(config, spec).resolved());
  std::vector<VariantResult> results;
  for (const auto& c : configs) results.push_back(train_variant(c, out));
  out << "variant\tmse\tmae\n";
  for (const auto& v : results) {
    out << v.label << '\t' << format_mean_std(v.mse.mean, v.mse.stddev) << '\t'
        << format_mean_std(v.mae.mean, v.mae.stddev) << '\n';
  }
  return 0;
}

int run_eval(const fs::path& checkpoint, const std::optional<std::string>& data_path,
             std::ostream& out) {
  const CheckpointEval e = evaluate_checkpoint(checkpoint, data_path);
  out << "test mse " << exact(e.metrics.mse) << " mae " << exact(e.metrics.mae) << " ("
      << e.metrics.count << " values)\n";
  if (!e.recorded) {
    out << "no recorded metrics in checkpoint\n";
    return 0;
  }
  out << "recorded mse " << exact(e.recorded->mse) << " mae " << exact(e.recorded->mae) << '\n'
      << (e.matches_recorded ? "reproduces recorded metrics exactly\n"
                             : "does NOT reproduce the recorded metrics\n");
  return e.matches_recorded ? 0 : 3;
}

int run_export_heatmap(const fs::path& checkpoint, std::size_t head, const std::string& kind,
                       const fs::path& out_dir, std::ostream& out) {
  const HeatmapExport e = export_heatmap(checkpoint, head, parse_heatmap_kind(kind), out_dir);
  for (const auto& f : e.files) out << f.string() << '\n';
  out << "N = " << e.num_patches << ", head " << e.head << ", ones fraction "
      << exact(e.ones_fraction) << '\n';
  return 0;
}

int run_gradcheck(std::uint64_t seed, std::ostream& out) {
  const auto results = run_gradcheck_suite(seed);
  double worst = 0.0;
  for (const auto& r : results) {
    out << std::left << std::setw(24) << r.name << " max rel error " << std::scientific
        << std::setprecision(3) << r.max_rel_error << std::defaultfloat << "  (" << r.entries
        << " entries)\n";
    worst = std::max(worst, r.max_rel_error);
  }
  const bool ok = worst < kGradcheckTolerance;
  out << "max rel error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat
      << (ok ? " < " : " >= ") << kGradcheckTolerance << (ok ? ": PASS" : ": FAIL") << '\n';
  return ok ? 0 : 1;
}

}  // namespace lsinet::eval
