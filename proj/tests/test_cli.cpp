// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mtl/cli.hpp"
#include "mtl/io.hpp"

using namespace mtl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run mtl_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("mtl-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

// A small, fast configuration for command tests.
std::string small_config(const TempDir& dir, double lambda = 0.1, std::size_t filler = 40) {
  nlohmann::json doc{{"seed", 5},
                     {"data", {{"n_examples", 40}, {"n_filler", filler}}},
                     {"train", {{"epochs", 2}, {"batch_size", 16}}},
                     {"regularizer", {{"lambda", lambda}}},
                     {"model", {{"d", 8}, {"d_hidden", 8}}},
                     {"paths", {{"data_dir", dir / "data"}, {"out_dir", dir / "out"}}}};
  const std::string path = dir / ("config-" + std::to_string(lambda) + "-" + std::to_string(filler) + ".json");
  write_file_atomic(path, doc.dump(2));
  return path;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("gen-data writes every split deterministically") {
  TempDir dir;
  const std::string cfg = small_config(dir);
  Run r = mtl_run({"--config", cfg, "gen-data"});
  REQUIRE(r.code == 0);
  std::size_t datasets = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path / "data")) datasets += e.path().extension() == ".jsonl";
  CHECK(datasets == 6);
  CHECK(fs::exists(dir.path / "data" / "vocab.json"));
  CHECK(r.out.find("train 32") != std::string::npos);

  const std::string first = read_file(dir.path / "data" / "gen" / "train.jsonl");
  REQUIRE(mtl_run({"--config", cfg, "gen-data", "--out-dir", dir / "again"}).code == 0);
  CHECK(read_file(dir.path / "again" / "gen" / "train.jsonl") == first);
  CHECK(read_file(dir.path / "again" / "vocab.json") == read_file(dir.path / "data" / "vocab.json"));

  const Corpus back = cli::load_dataset(dir.path / "data");
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_examples = 40;
  const Corpus fresh = generate_synthetic(spec);
  CHECK(back.vocab == fresh.vocab);
  CHECK(back.tasks[1].test == fresh.tasks[1].test);
}

TEST_CASE("gen-data errors") {
  TempDir dir;
  write_file_atomic(dir / "bad.json", R"({"data": {"rho": 1.5}})");
  Run r = mtl_run({"--config", dir / "bad.json", "gen-data"});
  CHECK(r.code == 2);
  CHECK(r.err.find("data.rho") != std::string::npos);

  write_file_atomic(dir / "blocker", "x");
  r = mtl_run({"gen-data", "--out-dir", dir / "blocker/sub"});
  CHECK(r.code == 2);
  CHECK(!fs::exists(dir.path / "blocker.tmp"));

  CHECK(mtl_run({}).code == 2);
  CHECK(mtl_run({"frobnicate"}).code == 2);
  CHECK(mtl_run({"--help"}).code == 0);
}

TEST_CASE("train, eval and curves round trip") {
  TempDir dir;
  const std::string cfg = small_config(dir);
  REQUIRE(mtl_run({"--config", cfg, "gen-data"}).code == 0);

  Run r = mtl_run({"--config", cfg, "--log", "quiet", "train", "--epochs", "1"});
  REQUIRE(r.code == 0);
  const std::string curves = read_file(dir.path / "out" / "curves.csv");
  CHECK(lines_of(curves).size() == 1 + 2 * 2);

  r = mtl_run({"--config", cfg, "--log", "quiet", "train"});
  REQUIRE(r.code == 0);
  const std::string curves2 = read_file(dir.path / "out" / "curves.csv");
  const std::string ckpt = read_file(dir.path / "out" / "checkpoint.bin");
  REQUIRE(mtl_run({"--config", cfg, "--log", "quiet", "train"}).code == 0);
  CHECK(read_file(dir.path / "out" / "curves.csv") == curves2);
  CHECK(read_file(dir.path / "out" / "checkpoint.bin") == ckpt);

  // eval reproduces the final test records exactly
  r = mtl_run({"--config", cfg, "eval"});
  REQUIRE(r.code == 0);
  const auto records = parse_curves_csv(curves2);
  const auto eval_lines = lines_of(read_file(dir.path / "out" / "eval.csv"));
  REQUIRE(eval_lines.size() == 3);
  const EpochRecord& cls = records[records.size() - 2];
  const EpochRecord& gen = records.back();
  CHECK(eval_lines[1] == "cls,test," + format_float(cls.loss) + ",acc," + format_float(cls.metric_value));
  CHECK(eval_lines[2] == "gen,test," + format_float(gen.loss) + ",rouge1_f," + format_float(gen.metric_value));

  r = mtl_run({"--config", cfg, "eval", "--task", "gen"});
  REQUIRE(r.code == 0);
  CHECK(lines_of(read_file(dir.path / "out" / "eval.csv")).size() == 2);
  CHECK(mtl_run({"--config", cfg, "eval", "--task", "nope"}).code == 2);
  CHECK(mtl_run({"--config", cfg, "eval", "--checkpoint", dir / "missing.bin"}).code == 2);

  // curves chart
  REQUIRE(mtl_run({"curves", dir / "out/curves.csv", dir / "a.svg"}).code == 0);
  REQUIRE(mtl_run({"curves", dir / "out/curves.csv", dir / "b.svg"}).code == 0);
  const std::string svg = read_file(dir.path / "a.svg");
  CHECK(svg == read_file(dir.path / "b.svg"));
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find(">epoch<") != std::string::npos);
  CHECK(svg.find(">loss<") != std::string::npos);
}

TEST_CASE("eval rejects a checkpoint with another vocabulary") {
  TempDir dir;
  const std::string cfg = small_config(dir);
  REQUIRE(mtl_run({"--config", cfg, "gen-data"}).code == 0);
  REQUIRE(mtl_run({"--config", cfg, "--log", "quiet", "train", "--epochs", "1"}).code == 0);
  const std::string other = small_config(dir, 0.1, 30);
  REQUIRE(mtl_run({"--config", other, "gen-data", "--out-dir", dir / "other"}).code == 0);
  Run r = mtl_run({"--config", cfg, "eval", "--data-dir", dir / "other"});
  CHECK(r.code == 2);
  CHECK(r.err.find("[64 x 8]") != std::string::npos);
  CHECK(r.err.find("[54 x 8]") != std::string::npos);
}

TEST_CASE("flag overrides beat the config file") {
  TempDir dir;
  REQUIRE(mtl_run({"--config", small_config(dir), "gen-data"}).code == 0);
  REQUIRE(mtl_run({"--config", small_config(dir, 0.0), "--log", "quiet", "train", "--out-dir", dir / "zero"}).code == 0);
  REQUIRE(mtl_run({"--config", small_config(dir, 0.5), "--log", "quiet", "train", "--lambda", "0", "--out-dir",
                   dir / "flag"})
              .code == 0);
  REQUIRE(mtl_run({"--config", small_config(dir, 0.5), "--log", "quiet", "train", "--out-dir", dir / "half"}).code == 0);
  const std::string zero = read_file(dir.path / "zero" / "curves.csv");
  CHECK(read_file(dir.path / "flag" / "curves.csv") == zero);
  CHECK(read_file(dir.path / "half" / "curves.csv") != zero);

  // single-task mode from flags
  REQUIRE(mtl_run({"--config", small_config(dir), "--log", "quiet", "train", "--mode", "single", "--task", "gen",
                   "--out-dir", dir / "single"})
              .code == 0);
  const auto recs = parse_curves_csv(read_file(dir.path / "single" / "curves.csv"));
  for (const EpochRecord& r : recs) CHECK(r.task == "gen");
  CHECK(mtl_run({"--config", small_config(dir), "train", "--mode", "single"}).code == 2);
  CHECK(mtl_run({"--config", small_config(dir), "train", "--mode", "sideways"}).code == 2);
  CHECK(mtl_run({"--config", small_config(dir), "train", "--mode", "single", "--task", "nope"}).code == 2);
}

TEST_CASE("config parsing is strict") {
  using nlohmann::json;
  const cli::RunConfig d = cli::default_run_config();
  CHECK(d.seed == 17);
  CHECK(d.train.epochs == 100);
  CHECK(d.train.reg.lambda == 0.1);
  CHECK(d.train.dims.d == 64);
  CHECK(d.data.rho == 0.9);

  // defaults < file, key by key
  cli::RunConfig c = cli::parse_run_config(json{{"train", {{"epochs", 7}}}, {"regularizer", {{"variant", "abs"}}}});
  CHECK(c.train.epochs == 7);
  CHECK(c.train.batch_size == d.train.batch_size);
  CHECK(c.train.reg.variant == CosineVariant::Abs);
  CHECK(c.train.reg.lambda == d.train.reg.lambda);

  CHECK(cli::parse_run_config(cli::to_json(c)).train.epochs == 7);
  CHECK(cli::to_json(cli::parse_run_config(cli::to_json(d))) == cli::to_json(d));

  auto rejects = [](const json& doc, const std::string& field) {
    try {
      cli::parse_run_config(doc);
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(field) != std::string::npos;
    }
    return false;
  };
  CHECK(rejects(json{{"bogus", 1}}, "bogus"));
  CHECK(rejects(json{{"train", {{"epoch", 3}}}}, "train.epoch"));
  CHECK(rejects(json{{"train", {{"epochs", 0}}}}, "train.epochs"));
  CHECK(rejects(json{{"train", {{"epochs", -1}}}}, "train.epochs"));
  CHECK(rejects(json{{"train", {{"epochs", "ten"}}}}, "train.epochs"));
  CHECK(rejects(json{{"train", {{"base_lr", 0}}}}, "train.base_lr"));
  CHECK(rejects(json{{"regularizer", {{"lambda", -0.1}}}}, "regularizer.lambda"));
  CHECK(rejects(json{{"regularizer", {{"variant", "cubic"}}}}, "regularizer.variant"));
  CHECK(rejects(json{{"data", {{"rho", 1.5}}}}, "data.rho"));
  CHECK(rejects(json{{"tasks", {{"cls", {{"lr", -1}}}}}}, "tasks.cls.lr"));
  CHECK(rejects(json{{"tasks", {{"cls", {{"speed", 1}}}}}}, "tasks.cls.speed"));
  CHECK(rejects(json{{"model", {{"lora", {{"rank", 0}}}}}}, "model.lora.rank"));
  CHECK(rejects(json{{"train", {{"mode", "single"}}}}, "train.task"));
  CHECK(rejects(json::array(), "expected an object"));
}

TEST_CASE("train exit codes") {
  TempDir dir;
  const std::string cfg = small_config(dir);
  CHECK(mtl_run({"--config", cfg, "train"}).code == 2);  // no data yet
  REQUIRE(mtl_run({"--config", cfg, "gen-data"}).code == 0);

  nlohmann::json doc = nlohmann::json::parse(read_file(cfg));
  doc["train"]["base_lr"] = 1e300;
  write_file_atomic(dir / "explode.json", doc.dump());
  Run r = mtl_run({"--config", dir / "explode.json", "--log", "quiet", "train"});
  CHECK(r.code == 3);
  CHECK(r.err.find("round") != std::string::npos);
  CHECK(!fs::exists(dir.path / "out" / "curves.csv"));
}

TEST_CASE("compare writes the four-run table") {
  TempDir dir;
  const std::string cfg = small_config(dir);
  REQUIRE(mtl_run({"--config", cfg, "gen-data"}).code == 0);
  Run r = mtl_run({"--config", cfg, "--log", "quiet", "compare", "--epochs", "1"});
  REQUIRE(r.code == 0);
  const std::string csv = read_file(dir.path / "out" / "comparison.csv");
  const auto lines = lines_of(csv);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "run,task,acc,rouge1_f");
  CHECK(lines[1].rfind("mtl_lambda,all,", 0) == 0);
  CHECK(lines[2].rfind("mtl_plain,all,", 0) == 0);
  CHECK(lines[3].rfind("single_cls,cls,", 0) == 0);
  CHECK(lines[4].rfind("single_gen,gen,,", 0) == 0);
  REQUIRE(mtl_run({"--config", cfg, "--log", "quiet", "compare", "--epochs", "1"}).code == 0);
  CHECK(read_file(dir.path / "out" / "comparison.csv") == csv);
}

TEST_CASE("curves chart shapes") {
  std::vector<EpochRecord> recs;
  for (std::size_t e = 1; e <= 10; ++e) {
    for (const char* split : {"train", "test"}) {
      recs.push_back({e, split, 1, "cls", 1.0 / static_cast<double>(e), "acc", 0.5, 0});
      recs.push_back({e, split, 2, "gen", 2.0 / static_cast<double>(e), "rouge1_f", 0.5, 0});
    }
  }
  auto count = [](const std::string& s, const std::string& what) {
    std::size_t n = 0;
    for (std::size_t p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
    return n;
  };
  const std::string svg = cli::render_curves_svg(recs);
  CHECK(count(svg, "<polyline") == 4);
  CHECK(svg == cli::render_curves_svg(recs));
  CHECK(svg.find("test / gen") != std::string::npos);

  const std::vector<EpochRecord> one{{1, "train", 1, "cls", 0.7, "acc", 0.5, 0}};
  const std::string tiny = cli::render_curves_svg(one);
  CHECK(count(tiny, "<polyline") == 1);
  CHECK(count(tiny, "<circle") == 1);
  CHECK(tiny.find("nan") == std::string::npos);
  CHECK(tiny.find("inf") == std::string::npos);
  CHECK(tiny.find("</svg>") != std::string::npos);

  TempDir dir;
  write_file_atomic(dir / "bad.csv", "epoch,split,task,loss,metric_name,metric_value,wall_s\n1,train,cls,oops,acc,1,0\n");
  Run r = mtl_run({"curves", dir / "bad.csv", dir / "bad.svg"});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(!fs::exists(dir.path / "bad.svg"));
}
