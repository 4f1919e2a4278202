#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lsinet/errors.hpp"
#include "lsinet/eval/commands.hpp"
#include "lsinet/eval/run_config.hpp"
#include "lsinet/model/checkpoint.hpp"
#include "synthetic.hpp"

using namespace lsinet;
using namespace lsinet::eval;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, '\t');) cells.push_back(cell);
  return cells;
}

RunConfig synthetic_run(const fs::path& dir) {
  const fs::path csv = dir / "syn.csv";
  if (!fs::exists(csv)) synthetic::write_csv(synthetic::sinusoids(500, 2), csv);
  RunConfig c;
  c.dataset = "syn";
  c.data_path = csv.string();
  c.history_length = 32;
  c.pred_len = 8;
  c.target_patches = 8;
  c.heads = 2;
  c.embed_dim = 16;
  c.mlp_hidden = 16;
  c.memory_dim = 8;
  c.train.epochs = 2;
  c.train.learning_rate = 1e-3;
  c.train.max_batches_per_epoch = 3;
  c.batch_size = 16;
  c.seeds = 2;
  c.out_dir = (dir / "out").string();
  return c;
}

// The trained synthetic run is shared by several cases.
const VariantResult& trained_run() {
  static const VariantResult result = [] {
    const auto dir = synthetic::scratch_dir("cli_run");
    std::ostringstream log;
    return train_variant(synthetic_run(dir).resolved(), log);
  }();
  return result;
}

}  // namespace

TEST_CASE("metric examples") {
  const std::vector<double> same{1, 2, 3};
  const auto zero = compute_metrics(same, same);
  CHECK(zero.mse == 0.0);
  CHECK(zero.mae == 0.0);
  const auto m = compute_metrics(std::vector<double>{0, 0}, std::vector<double>{1, 2});
  CHECK(m.mse == 2.5);
  CHECK(m.mae == 1.5);
  CHECK_THROWS_AS(compute_metrics(std::vector<double>{0}, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("batched metrics equal the flattened computation") {
  Rng rng(1);
  std::vector<double> p(2 * 3 * 4), t(p.size());
  for (auto& v : p) v = rng.normal();
  for (auto& v : t) v = rng.normal();
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    se += (p[i] - t[i]) * (p[i] - t[i]);
    ae += std::abs(p[i] - t[i]);
  }
  const auto m = compute_metrics(p, {2, 3, 4}, t, {2, 3, 4});
  CHECK(m.mse == doctest::Approx(se / 24.0).epsilon(1e-14));
  CHECK(m.mae == doctest::Approx(ae / 24.0).epsilon(1e-14));
  const auto flat = compute_metrics(p, t);
  CHECK(m.mse == flat.mse);
  CHECK(m.mae == flat.mae);
  CHECK_THROWS_AS(compute_metrics(p, {2, 3, 4}, t, {4, 3, 2}), ShapeError);
}

TEST_CASE("mean and deviation formatting") {
  CHECK(format_mean_std(0.366, 2e-4) == "0.366±2e-4");
  CHECK(format_mean_std(0.267, 7e-5) == "0.267±7e-5");
  CHECK(format_mean_std(0.257, 0.001) == "0.257±1e-3");
  CHECK(format_mean_std(0.5, 0.0) == "0.500±0");
  CHECK(format_mean_std(1.23456, 0.04) == "1.235±4e-2");
  const auto ms = mean_std(std::vector<double>{1.0, 3.0});
  CHECK(ms.mean == 2.0);
  CHECK(ms.stddev == 1.0);
  CHECK(mean_std(std::vector<double>{4.0}).stddev == 0.0);
}

TEST_CASE("dataset profiles") {
  CHECK(dataset_profile("etth1").name == "ETTh1");
  CHECK(dataset_profile("ETTh2").split == SplitRule::ett_hourly);
  CHECK(dataset_profile("ettm1").split == SplitRule::ett_minute);
  CHECK(dataset_profile("weather").batch_size == 64);
  CHECK(dataset_profile("electricity").batch_size == 32);
  CHECK(dataset_profile("ETTm2").batch_size == 128);
  const auto other = dataset_profile("traffic");
  CHECK(other.split == SplitRule::ratio);
  CHECK(other.ratios.train == 0.7);

  RunConfig c;
  c.dataset = "weather";
  const RunConfig r = c.resolved();
  CHECK(r.batch_size == 64);
  CHECK(r.history_length == 512);
  CHECK(r.train.eval_batch_size == 64);
  CHECK(r.model_config().patch.num_patches == 64);
  CHECK(r.seed_list() == std::vector<std::uint64_t>{2021, 2022, 2023, 2024, 2025});
}

TEST_CASE("config file with flag overrides") {
  RunConfig c;
  std::istringstream file(
      "# sweep\n"
      "dataset = ETTh2\n"
      "pred_len = 192   # horizon\n"
      "\n"
      "lr = 0.0005\n"
      "no_msim = true\n"
      "seeds = 3\n");
  apply_config_stream(c, file, "sweep.cfg");
  apply_setting(c, "pred_len", "336");
  CHECK(c.dataset == "ETTh2");
  CHECK(c.pred_len == 336);
  CHECK(c.train.learning_rate == 0.0005);
  CHECK(c.no_msim);
  CHECK(c.seeds == 3);

  CHECK_THROWS_AS(apply_setting(c, "bogus", "1"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "pred_len", "abc"), ConfigError);
  CHECK_THROWS_AS(apply_setting(c, "pred_len", "-3"), ConfigError);
  std::istringstream broken("dataset ETTh1\n");
  CHECK_THROWS_AS(apply_config_stream(c, broken, "broken.cfg"), ConfigError);
}

TEST_CASE("resolved config round-trips through its text form") {
  RunConfig c;
  c.dataset = "ETTm1";
  c.degree_normalize = true;
  c.train.delta = 0.2;
  c.temperature = 0.7;
  const RunConfig r = c.resolved();
  std::ostringstream text;
  write_config(r, text);
  RunConfig back;
  std::istringstream in(text.str());
  apply_config_stream(back, in, "echo");
  CHECK(to_map(back) == to_map(r));
  CHECK(to_map(from_map(to_map(r))) == to_map(r));
  for (const auto& key : config_keys()) {
    CHECK(text.str().find(key.key + " = ") != std::string::npos);
  }
}

TEST_CASE("invalid settings are rejected before any work") {
  RunConfig c;
  c.heads = 3;
  CHECK_THROWS_AS(c.resolved(), ConfigError);
  c = RunConfig{};
  c.history_length = 100;
  CHECK_THROWS_AS(c.resolved(), ConfigError);
  c = RunConfig{};
  c.no_msim = c.dense_gates = true;
  CHECK_THROWS_AS(c.resolved(), ConfigError);
  c = RunConfig{};
  c.seeds = 0;
  CHECK_THROWS_AS(c.resolved(), ConfigError);

  c = RunConfig{};
  c.dataset = "ETTh1";
  c.data_path = "/nonexistent/ETTh1.csv";
  try {
    load_splits(c.resolved());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not found") != std::string::npos);
  }
}

TEST_CASE("variant labels compose") {
  RunConfig c;
  CHECK(c.variant_label() == "full");
  CHECK(apply_variant(c, "no_msim").variant_label() == "no_msim");
  CHECK(apply_variant(c, "no_asrl+degree_normalize").variant_label() ==
        "no_asrl+degree_normalize");
  const RunConfig dense = apply_variant(c, "dense_gates+no_asrl");
  CHECK(dense.dense_gates);
  CHECK(dense.train_config().lambda == 0.0);
  CHECK(apply_variant(dense, "full").variant_label() == "full");
  CHECK_THROWS_AS(apply_variant(c, "no_such_switch"), ConfigError);
  c.dataset = "ETTh2";
  c.pred_len = 96;
  CHECK(run_stem(apply_variant(c, "no_msim")) == "ETTh2_96_no_msim");
}

TEST_CASE("train writes metrics, reports, checkpoints and the resolved config") {
  const VariantResult& v = trained_run();
  REQUIRE(v.runs.size() == 2);
  const fs::path out = fs::path(trained_run().runs[0].checkpoint).parent_path().parent_path();

  const auto rows = read_lines(out / "metrics.tsv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "dataset\tpred_len\tvariant\tseed\tmse\tmae");
  for (std::size_t i = 0; i < 2; ++i) {
    const auto cells = split_tabs(rows[i + 1]);
    REQUIRE(cells.size() == 6);
    CHECK(cells[0] == "syn");
    CHECK(cells[1] == "8");
    CHECK(cells[2] == "full");
    CHECK(cells[3] == std::to_string(2021 + i));
    CHECK(std::stod(cells[4]) == v.runs[i].report.test.mse);
    CHECK(std::stod(cells[5]) == v.runs[i].report.test.mae);
    CHECK(std::stod(cells[4]) >= 0.0);
  }
  CHECK(fs::exists(out / "summary.tsv"));

  const auto config_lines = read_lines(out / "syn_8_full.config");
  CHECK(std::find(config_lines.begin(), config_lines.end(), "history_len = 32") !=
        config_lines.end());
  CHECK(std::find(config_lines.begin(), config_lines.end(), "batch_size = 16") !=
        config_lines.end());

  const auto report = read_lines(v.runs[0].report_file);
  REQUIRE(report.size() == 3);
  for (std::size_t e = 0; e < 2; ++e) {
    const auto j = nlohmann::json::parse(report[e]);
    CHECK(j["epoch"] == e);
    CHECK(j["val"].contains("mse"));
  }
  CHECK(nlohmann::json::parse(report[2]).contains("summary"));
}

TEST_CASE("eval reproduces the recorded test metrics bit for bit") {
  const VariantResult& v = trained_run();
  for (const auto& run : v.runs) {
    const auto e = evaluate_checkpoint(run.checkpoint, std::nullopt);
    REQUIRE(e.recorded.has_value());
    CHECK(e.matches_recorded);
    CHECK(e.metrics.mse == run.report.test.mse);
    CHECK(e.metrics.mae == run.report.test.mae);
  }
  std::ostringstream out;
  CHECK(run_eval(v.runs[0].checkpoint, std::nullopt, out) == 0);
}

TEST_CASE("heatmap export") {
  const VariantResult& v = trained_run();
  const auto dir = synthetic::scratch_dir("heatmaps");
  const auto exp = export_heatmap(v.runs[0].checkpoint, 1, HeatmapKind::both, dir);
  REQUIRE(exp.files.size() == 3);
  CHECK(exp.num_patches == 8);

  std::size_t rows = 0, cols = 0;
  const auto hard = read_matrix(exp.files[1], rows, cols);
  CHECK(rows == 8);
  CHECK(cols == 8);
  double ones = 0.0;
  for (double x : hard) {
    CHECK((x == 0.0 || x == 1.0));
    ones += x;
  }
  const auto probs = read_matrix(exp.files[0], rows, cols);
  for (double x : probs) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }

  std::map<std::string, std::string> meta;
  for (const auto& line : read_lines(exp.files[2])) {
    const auto eq = line.find(" = ");
    meta[line.substr(0, eq)] = line.substr(eq + 3);
  }
  CHECK(meta["num_patches"] == "8");
  CHECK(meta["head"] == "1");
  CHECK(std::stod(meta["ones_fraction"]) == ones / 64.0);

  CHECK_THROWS_AS(export_heatmap(v.runs[0].checkpoint, 2, HeatmapKind::hard, dir), ConfigError);
  CHECK_THROWS_AS(parse_heatmap_kind("png"), ConfigError);
  CHECK(parse_heatmap_kind("hard") == HeatmapKind::hard);
}

TEST_CASE("heatmap pattern detection") {
  // 4 x 4: a block in the top-left, an isolated one at (3, 3).
  const std::vector<double> m{1, 1, 0, 0,
                              1, 1, 0, 0,
                              0, 0, 0, 0,
                              0, 0, 0, 1};
  const auto p = analyze_pattern(m, 4);
  CHECK(p.has_block);
  CHECK(p.has_isolated);
  const std::vector<double> line{1, 1, 1, 0, 0, 0, 0, 0, 0};
  const auto q = analyze_pattern(line, 3);
  CHECK_FALSE(q.has_block);
  CHECK_FALSE(q.has_isolated);
}
