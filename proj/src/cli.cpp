// Copyright (c) 2026, The mtlearn Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtl/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "mtl/error.hpp"
#include "mtl/io.hpp"
#include "mtl/log.hpp"

namespace mtl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.data.n_examples = 4000;
  cfg.train.epochs = 100;
  cfg.train.batch_size = 32;
  cfg.train.base_lr = 0.05;
  cfg.train.reg.lambda = 0.1;
  cfg.train.dims.d = 64;
  cfg.train.dims.d_hidden = 128;
  cfg.tasks["cls"] = TaskOverride{1.0, 0.1};
  cfg.tasks["gen"] = TaskOverride{1.0, 0.2};
  return cfg;
}

// ---------------------------------------------------------------- config

namespace {

// Reads the members of one JSON object, remembering which were consumed so
// leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  const json* find(const std::string& key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const std::string& key, double& dst) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      dst = v->get<double>();
      if (!std::isfinite(dst)) throw ConfigError(field(key) + ": must be finite");
    }
  }
  void count(const std::string& key, std::size_t& dst) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) {
        throw ConfigError(field(key) + ": expected a non-negative integer");
      }
      dst = v->get<std::size_t>();
    }
  }
  void seed(const std::string& key, std::uint64_t& dst) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw ConfigError(field(key) + ": expected a non-negative integer");
      }
      dst = v->get<std::uint64_t>();
    }
  }
  void flag(const std::string& key, bool& dst) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      dst = v->get<bool>();
    }
  }
  void text(const std::string& key, std::string& dst) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      dst = v->get<std::string>();
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field + ": " + what);
}

template <typename Fn>
void parse_section(Fields& parent, const std::string& key, Fn fn) {
  if (const json* v = parent.find(key)) {
    Fields f(*v, parent.field(key));
    fn(f);
    f.finish();
  }
}

template <typename Enum, typename Parse>
void parse_enum(Fields& f, const std::string& key, Enum& dst, Parse parse) {
  std::string s;
  f.text(key, s);
  if (s.empty()) return;
  try {
    dst = parse(s);
  } catch (const Error& e) {
    throw ConfigError(f.field(key) + ": " + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& doc, RunConfig cfg) {
  Fields root(doc, "");
  root.seed("seed", cfg.seed);

  parse_section(root, "data", [&](Fields& f) {
    SyntheticSpec& d = cfg.data;
    f.count("n_examples", d.n_examples);
    f.count("n_polar", d.n_polar);
    f.count("n_keywords", d.n_keywords);
    f.count("n_filler", d.n_filler);
    f.count("min_length", d.min_length);
    f.count("max_length", d.max_length);
    f.count("min_polar", d.min_polar);
    f.count("max_polar", d.max_polar);
    f.number("rho", d.rho);
    f.count("max_summary", d.max_summary);
  });

  parse_section(root, "train", [&](Fields& f) {
    TrainConfig& t = cfg.train;
    f.count("epochs", t.epochs);
    f.count("batch_size", t.batch_size);
    f.number("base_lr", t.base_lr);
    f.count("pretrain_epochs", t.pretrain_epochs);
    f.number("pretrain_lr", t.pretrain_lr);
    f.count("max_decode_len", t.max_decode_len);
    f.count("eval_chunk", t.eval_chunk);
    f.flag("record_wall_time", t.record_wall_time);
    std::string mode;
    f.text("mode", mode);
    std::string task;
    f.text("task", task);
    if (!mode.empty()) {
      require(mode == "multi" || mode == "single", f.field("mode"), "expected \"multi\" or \"single\", got \"" + mode + "\"");
      if (mode == "multi") cfg.single_task.reset();
    }
    if (mode == "single") {
      require(!task.empty(), f.field("task"), "single mode needs a task name");
      cfg.single_task = task;
    } else if (!task.empty()) {
      require(mode.empty() && cfg.single_task.has_value(), f.field("task"), "only valid with mode \"single\"");
      cfg.single_task = task;
    }
  });

  parse_section(root, "regularizer", [&](Fields& f) {
    RegularizerConfig& r = cfg.train.reg;
    f.number("lambda", r.lambda);
    f.number("eps", r.eps);
    parse_enum(f, "variant", r.variant, parse_cosine_variant);
    parse_enum(f, "grad_mode", r.grad_mode, parse_grad_mode);
  });

  parse_section(root, "dynamic_weights", [&](Fields& f) {
    DynamicWeightConfig& w = cfg.train.dynamic;
    f.flag("enabled", w.enabled);
    f.number("alpha_min", w.alpha_min);
    f.number("alpha_max", w.alpha_max);
  });

  parse_section(root, "model", [&](Fields& f) {
    f.count("d", cfg.train.dims.d);
    f.count("d_hidden", cfg.train.dims.d_hidden);
    parse_section(f, "lora", [&](Fields& l) {
      l.flag("enabled", cfg.train.lora.enabled);
      l.count("rank", cfg.train.lora.rank);
      l.number("scale", cfg.train.lora.scale);
    });
  });

  if (const json* tasks = root.find("tasks")) {
    require(tasks->is_object(), "tasks", "expected an object keyed by task name");
    for (auto it = tasks->begin(); it != tasks->end(); ++it) {
      Fields f(it.value(), "tasks." + it.key());
      TaskOverride& o = cfg.tasks[it.key()];
      double v = 0.0;
      if (f.find("alpha")) {
        f.number("alpha", v);
        o.alpha = v;
      }
      if (f.find("lr")) {
        f.number("lr", v);
        o.lr = v;
      }
      f.finish();
    }
  }

  parse_section(root, "paths", [&](Fields& f) {
    std::string s;
    f.text("data_dir", s);
    if (!s.empty()) cfg.data_dir = s;
    s.clear();
    f.text("checkpoint", s);
    if (!s.empty()) cfg.checkpoint = s;
    s.clear();
    f.text("out_dir", s);
    if (!s.empty()) cfg.out_dir = s;
  });
  root.finish();

  // ranges
  require(cfg.data.rho >= 0.0 && cfg.data.rho <= 1.0, "data.rho", "must be in [0, 1], got " + format_float(cfg.data.rho));
  require(cfg.data.n_examples >= 10, "data.n_examples", "must be >= 10");
  try {
    validate(cfg.data);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  const TrainConfig& t = cfg.train;
  require(t.epochs >= 1, "train.epochs", "must be >= 1");
  require(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  require(t.base_lr > 0.0, "train.base_lr", "must be > 0");
  require(t.pretrain_lr > 0.0, "train.pretrain_lr", "must be > 0");
  require(t.max_decode_len >= 1, "train.max_decode_len", "must be >= 1");
  require(t.eval_chunk >= 1, "train.eval_chunk", "must be >= 1");
  require(t.reg.lambda >= 0.0, "regularizer.lambda", "must be >= 0");
  require(t.reg.eps > 0.0, "regularizer.eps", "must be > 0");
  require(t.dynamic.alpha_min > 0.0 && t.dynamic.alpha_min <= 1.0, "dynamic_weights.alpha_min", "must be in (0, 1]");
  require(t.dynamic.alpha_max >= 1.0, "dynamic_weights.alpha_max", "must be >= 1");
  require(t.dims.d >= 1, "model.d", "must be >= 1");
  require(t.dims.d_hidden >= 1, "model.d_hidden", "must be >= 1");
  require(t.lora.rank >= 1, "model.lora.rank", "must be >= 1");
  require(t.lora.scale >= 0.0, "model.lora.scale", "must be >= 0");
  for (const auto& [name, o] : cfg.tasks) {
    if (o.alpha) require(*o.alpha >= 0.0, "tasks." + name + ".alpha", "must be >= 0");
    if (o.lr) require(*o.lr >= 0.0, "tasks." + name + ".lr", "must be >= 0");
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const SyntheticSpec& d = cfg.data;
  json tasks = json::object();
  for (const auto& [name, o] : cfg.tasks) {
    json j = json::object();
    if (o.alpha) j["alpha"] = *o.alpha;
    if (o.lr) j["lr"] = *o.lr;
    tasks[name] = j;
  }
  json train{{"epochs", t.epochs},
             {"batch_size", t.batch_size},
             {"base_lr", t.base_lr},
             {"pretrain_epochs", t.pretrain_epochs},
             {"pretrain_lr", t.pretrain_lr},
             {"max_decode_len", t.max_decode_len},
             {"eval_chunk", t.eval_chunk},
             {"record_wall_time", t.record_wall_time},
             {"mode", cfg.single_task ? "single" : "multi"}};
  if (cfg.single_task) train["task"] = *cfg.single_task;
  json paths{{"data_dir", cfg.data_dir.string()}, {"out_dir", cfg.out_dir.string()}};
  if (cfg.checkpoint) paths["checkpoint"] = cfg.checkpoint->string();
  return json{
      {"seed", cfg.seed},
      {"data",
       {{"n_examples", d.n_examples},
        {"n_polar", d.n_polar},
        {"n_keywords", d.n_keywords},
        {"n_filler", d.n_filler},
        {"min_length", d.min_length},
        {"max_length", d.max_length},
        {"min_polar", d.min_polar},
        {"max_polar", d.max_polar},
        {"rho", d.rho},
        {"max_summary", d.max_summary}}},
      {"train", train},
      {"regularizer",
       {{"lambda", t.reg.lambda},
        {"eps", t.reg.eps},
        {"variant", std::string(to_string(t.reg.variant))},
        {"grad_mode", std::string(to_string(t.reg.grad_mode))}}},
      {"dynamic_weights",
       {{"enabled", t.dynamic.enabled}, {"alpha_min", t.dynamic.alpha_min}, {"alpha_max", t.dynamic.alpha_max}}},
      {"model",
       {{"d", t.dims.d},
        {"d_hidden", t.dims.d_hidden},
        {"lora", {{"enabled", t.lora.enabled}, {"rank", t.lora.rank}, {"scale", t.lora.scale}}}}},
      {"tasks", tasks},
      {"paths", paths}};
}

TrainConfig resolve_train_config(const RunConfig& cfg, std::span<const TaskSpec> tasks, std::size_t vocab_size) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  t.dims.vocab = vocab_size;
  t.tasks.assign(tasks.begin(), tasks.end());
  for (const auto& [name, o] : cfg.tasks) {
    auto it = std::find_if(t.tasks.begin(), t.tasks.end(), [&](const TaskSpec& s) { return s.name == name; });
    if (it == t.tasks.end()) {
      // overrides for tasks absent from this dataset are harmless
      log_debug("config names task \"" + name + "\" which the dataset does not contain");
      continue;
    }
    if (o.alpha) it->alpha = *o.alpha;
    if (o.lr) it->lr = *o.lr;
  }
  t.single_task.reset();
  if (cfg.single_task) {
    auto it = std::find_if(t.tasks.begin(), t.tasks.end(), [&](const TaskSpec& s) { return s.name == *cfg.single_task; });
    if (it == t.tasks.end()) throw ConfigError("train.task: unknown task \"" + *cfg.single_task + "\"");
    t.single_task = it->id;
  }
  validate(t);
  return t;
}

// ---------------------------------------------------------------- datasets

namespace {

constexpr const char* kSplits[] = {"train", "valid", "test"};

template <typename T>
auto& split_of(T& t, int i) {
  return i == 0 ? t.train : i == 1 ? t.valid : t.test;
}

}  // namespace

void save_dataset(const Corpus& corpus, const fs::path& dir) {
  std::vector<TaskSpec> specs;
  json tasks = json::array();
  for (const TaskData& t : corpus.tasks) {
    specs.push_back(t.spec);
    tasks.push_back(json{{"id", t.spec.id},
                         {"name", t.spec.name},
                         {"kind", std::string(to_string(t.spec.kind))},
                         {"loss", std::string(to_string(t.spec.loss))},
                         {"num_classes", t.spec.num_classes}});
  }
  corpus.vocab.save(dir / "vocab.json");
  write_file_atomic(dir / "tasks.json", tasks.dump(1) + "\n");
  for (const TaskData& t : corpus.tasks) {
    for (int i = 0; i < 3; ++i) {
      write_jsonl(dir / t.spec.name / (std::string(kSplits[i]) + ".jsonl"), split_of(t, i), corpus.vocab, specs);
    }
  }
}

Corpus load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist (run `mtl gen-data`)");
  Corpus corpus;
  corpus.vocab = Vocabulary::load(dir / "vocab.json");
  json tasks;
  try {
    tasks = json::parse(read_file(dir / "tasks.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "tasks.json").string() + ": " + e.what());
  }
  std::vector<TaskSpec> specs;
  try {
    for (const json& j : tasks) {
      TaskSpec s;
      s.id = j.at("id").get<int>();
      s.name = j.at("name").get<std::string>();
      s.kind = parse_task_kind(j.at("kind").get<std::string>());
      s.loss = parse_loss_kind(j.at("loss").get<std::string>());
      s.num_classes = j.at("num_classes").get<std::size_t>();
      specs.push_back(s);
    }
  } catch (const json::exception& e) {
    throw FormatError((dir / "tasks.json").string() + ": " + e.what());
  }
  validate_tasks(specs);
  for (const TaskSpec& s : specs) {
    TaskData t{s, {}, {}, {}};
    for (int i = 0; i < 3; ++i) {
      split_of(t, i) = load_jsonl(dir / s.name / (std::string(kSplits[i]) + ".jsonl"), corpus.vocab, specs);
      for (const Example& e : split_of(t, i)) {
        if (e.task_id != s.id) {
          throw FormatError((dir / s.name).string() + ": example " + e.uid + " belongs to another task");
        }
      }
    }
    corpus.tasks.push_back(std::move(t));
  }
  return corpus;
}

// ---------------------------------------------------------------- SVG

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_curves_svg(std::span<const EpochRecord> records) {
  constexpr double W = 720, H = 440, left = 70, right = 170, top = 30, bottom = 60;
  constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  // series in order of first appearance
  std::vector<std::pair<std::string, std::string>> keys;
  std::vector<std::vector<std::pair<double, double>>> pts;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const EpochRecord& r : records) {
    const std::pair<std::string, std::string> key{r.split, r.task};
    auto it = std::find(keys.begin(), keys.end(), key);
    std::size_t k = static_cast<std::size_t>(it - keys.begin());
    if (it == keys.end()) {
      keys.push_back(key);
      pts.emplace_back();
    }
    const double x = static_cast<double>(r.epoch);
    pts[k].emplace_back(x, r.loss);
    if (first) {
      x0 = x1 = x;
      y0 = y1 = r.loss;
      first = false;
    }
    x0 = std::min(x0, x);
    x1 = std::max(x1, x);
    y0 = std::min(y0, r.loss);
    y1 = std::max(y1, r.loss);
  }
  y0 = std::min(y0, 0.0);
  if (x1 == x0) {
    x0 -= 1;
    x1 += 1;
  }
  if (y1 == y0) y1 = y0 + 1;

  const double pw = W - left - right, ph = H - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
    << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0, fx = x0 + (x1 - x0) * i / 4.0;
    s << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(sy(fy) + 4) << "\" text-anchor=\"end\">" << fixed(fy, 3)
      << "</text>\n";
    s << "<text x=\"" << fixed(sx(fx)) << "\" y=\"" << fixed(top + ph + 18) << "\" text-anchor=\"middle\">" << fixed(fx, 1)
      << "</text>\n";
  }
  s << "<text x=\"" << fixed(left + pw / 2) << "\" y=\"" << fixed(H - 15) << "\" text-anchor=\"middle\">epoch</text>\n";
  s << "<text x=\"18\" y=\"" << fixed(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fixed(top + ph / 2) << ")\">loss</text>\n";

  for (std::size_t k = 0; k < keys.size(); ++k) {
    const char* color = palette[k % std::size(palette)];
    const bool dashed = keys[k].first != "train";
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"" << (dashed ? " stroke-dasharray=\"6 3\"" : "")
      << " points=\"";
    for (std::size_t i = 0; i < pts[k].size(); ++i) {
      s << (i ? " " : "") << fixed(sx(pts[k][i].first)) << ',' << fixed(sy(pts[k][i].second));
    }
    s << "\"/>\n";
    if (pts[k].size() == 1) {
      s << "<circle cx=\"" << fixed(sx(pts[k][0].first)) << "\" cy=\"" << fixed(sy(pts[k][0].second)) << "\" r=\"3\" fill=\""
        << color << "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << fixed(W - right + 15) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(W - right + 40)
      << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\""
      << (dashed ? " stroke-dasharray=\"6 3\"" : "") << "/>\n";
    s << "<text x=\"" << fixed(W - right + 46) << "\" y=\"" << fixed(ly + 4) << "\">"
      << escape_xml(keys[k].first + " / " + keys[k].second) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------- commands

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

struct Overrides {
  double lambda = 0.0;
  std::size_t epochs = 0;
  std::string mode, task, data_dir;
  CLI::Option* lambda_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* task_opt = nullptr;
  CLI::Option* data_opt = nullptr;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool training) {
  o.data_opt = cmd->add_option("--data-dir", o.data_dir, "dataset directory (overrides paths.data_dir)");
  o.task_opt = cmd->add_option("--task", o.task, training ? "task for single-task mode" : "restrict to one task");
  if (!training) return;
  o.lambda_opt = cmd->add_option("--lambda", o.lambda, "cosine penalty weight (overrides regularizer.lambda)");
  o.epochs_opt = cmd->add_option("--epochs", o.epochs, "training epochs (overrides train.epochs)");
  o.mode_opt = cmd->add_option("--mode", o.mode, "multi | single")->check(CLI::IsMember({"multi", "single"}));
}

RunConfig build_config(const Globals& g, const Overrides* o) {
  RunConfig cfg = g.config.empty() ? default_run_config() : load_run_config(g.config);
  if (g.seed_opt->count()) cfg.seed = g.seed;
  if (g.out_opt->count()) cfg.out_dir = g.out_dir;
  cfg.data.seed = cfg.seed;
  if (!o) return cfg;
  if (o->data_opt->count()) cfg.data_dir = o->data_dir;
  if (o->lambda_opt && o->lambda_opt->count()) {
    require(o->lambda >= 0.0 && std::isfinite(o->lambda), "--lambda", "must be >= 0");
    cfg.train.reg.lambda = o->lambda;
  }
  if (o->epochs_opt && o->epochs_opt->count()) {
    require(o->epochs >= 1, "--epochs", "must be >= 1");
    cfg.train.epochs = o->epochs;
  }
  if (o->mode_opt && o->mode_opt->count()) {
    if (o->mode == "multi") {
      cfg.single_task.reset();
    } else if (!o->task_opt->count() && !cfg.single_task) {
      throw ConfigError("--mode single needs --task");
    }
  }
  if (o->task_opt->count() && o->mode_opt) {
    if (o->mode_opt->count() && o->mode == "multi") throw ConfigError("--task is only valid with --mode single");
    cfg.single_task = o->task;
  }
  return cfg;
}

fs::path checkpoint_path(const RunConfig& cfg) { return cfg.checkpoint ? *cfg.checkpoint : cfg.out_dir / "checkpoint.bin"; }

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

int cmd_gen_data(const Globals& g, std::ostream& out) {
  RunConfig cfg = build_config(g, nullptr);
  const fs::path dir = g.out_opt->count() ? fs::path(g.out_dir) : cfg.data_dir;
  const Corpus corpus = generate_synthetic(cfg.data);
  save_dataset(corpus, dir);
  out << "wrote " << dir.string() << " (vocabulary " << corpus.vocab.size() << ")\n";
  for (const TaskData& t : corpus.tasks) {
    out << "  " << pad(t.spec.name, 8) << " train " << t.train.size() << "  valid " << t.valid.size() << "  test "
        << t.test.size() << "\n";
  }
  return kExitOk;
}

void print_final(std::ostream& out, std::span<const EpochRecord> records, std::size_t epoch) {
  out << pad("task", 8) << pad("loss", 14) << "metric\n";
  for (const EpochRecord& r : records) {
    if (r.epoch != epoch || r.split != "test") continue;
    out << pad(r.task, 8) << pad(format_float(r.loss), 14)
        << (r.metric_name.empty() ? std::string("-") : r.metric_name + " " + format_float(r.metric_value)) << "\n";
  }
}

int cmd_train(const Globals& g, const Overrides& o, std::ostream& out) {
  const RunConfig cfg = build_config(g, &o);
  const Corpus corpus = load_dataset(cfg.data_dir);
  const TrainConfig tc = resolve_train_config(cfg, [&] {
    std::vector<TaskSpec> s;
    for (const TaskData& t : corpus.tasks) s.push_back(t.spec);
    return s;
  }(), corpus.vocab.size());
  const TrainResult result = train(tc, corpus.tasks);
  save_checkpoint(result.params, checkpoint_path(cfg));
  write_file_atomic(cfg.out_dir / "curves.csv", curves_csv(result.records));
  out << "trained " << tc.epochs << " epochs (" << result.steps << " steps); checkpoint " << checkpoint_path(cfg).string()
      << "\nfinal test metrics:\n";
  print_final(out, result.records, tc.epochs);
  return kExitOk;
}

int cmd_eval(const Globals& g, const Overrides& o, const std::string& checkpoint, const std::string& split,
             std::ostream& out) {
  const RunConfig cfg = build_config(g, &o);
  const fs::path ckpt = checkpoint.empty() ? checkpoint_path(cfg) : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw IoError("checkpoint " + ckpt.string() + " not found");
  const Corpus corpus = load_dataset(cfg.data_dir);
  const ModelParams params = load_checkpoint(ckpt);
  if (params.dims.vocab != corpus.vocab.size()) {
    throw DimensionError("checkpoint embedding is [" + std::to_string(params.dims.vocab) + " x " +
                         std::to_string(params.dims.d) + "] but the data vocabulary has " +
                         std::to_string(corpus.vocab.size()) + " entries (expected [" +
                         std::to_string(corpus.vocab.size()) + " x " + std::to_string(params.dims.d) + "])");
  }
  TrainConfig tc = cfg.train;
  tc.tasks = params.tasks;
  tc.dims = params.dims;

  std::vector<int> ids;
  std::vector<std::vector<Example>> sets;
  for (const TaskData& t : corpus.tasks) {
    if (o.task_opt->count() && t.spec.name != o.task) continue;
    const TaskSpec& ck = params.task(t.spec.id);
    if (ck.name != t.spec.name || ck.kind != t.spec.kind) {
      throw ConfigError("checkpoint task " + std::to_string(ck.id) + " is \"" + ck.name + "\" but the data has \"" +
                        t.spec.name + "\"");
    }
    ids.push_back(t.spec.id);
    sets.push_back(split == "train" ? t.train : split == "valid" ? t.valid : t.test);
  }
  if (ids.empty()) throw ConfigError("--task: no task named \"" + o.task + "\" in the dataset");
  const auto evals = evaluate(params, ids, sets, tc);

  std::string csv = "task,split,loss,metric_name,metric_value\n";
  out << pad("task", 8) << pad("split", 7) << pad("n", 7) << pad("loss", 14) << "metric\n";
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const TaskEval& e = evals[i];
    const std::string name = params.task(e.task_id).name;
    const std::string metric = e.metric ? e.metric->name : "";
    const std::string value = e.metric ? format_float(e.metric->value) : "";
    csv += name + ',' + split + ',' + format_float(e.loss) + ',' + metric + ',' + value + '\n';
    out << pad(name, 8) << pad(split, 7) << pad(std::to_string(sets[i].size()), 7) << pad(format_float(e.loss), 14)
        << (e.metric ? metric + " " + value : std::string("-")) << "\n";
  }
  write_file_atomic(cfg.out_dir / "eval.csv", csv);
  return kExitOk;
}

int cmd_compare(const Globals& g, const Overrides& o, std::ostream& out) {
  const RunConfig cfg = build_config(g, &o);
  const Corpus corpus = load_dataset(cfg.data_dir);
  std::vector<TaskSpec> specs;
  for (const TaskData& t : corpus.tasks) specs.push_back(t.spec);
  RunConfig multi = cfg;
  multi.single_task.reset();
  const TrainConfig tc = resolve_train_config(multi, specs, corpus.vocab.size());
  const auto rows = run_baseline_comparison(tc, corpus.tasks);
  write_file_atomic(cfg.out_dir / "comparison.csv", comparison_csv(rows));

  bool dominates = true;
  for (const ComparisonRow& r : rows) {
    if (r.run.rfind("single_", 0) != 0) continue;
    if (r.acc && rows[0].acc && *rows[0].acc < *r.acc) dominates = false;
    if (r.rouge1_f && rows[0].rouge1_f && *rows[0].rouge1_f < *r.rouge1_f) dominates = false;
  }
  auto cell = [](const std::optional<double>& v) { return v ? format_float(v.value()) : std::string("-"); };
  out << pad("run", 14) << pad("task", 7) << pad("acc", 14) << "rouge1_f\n";
  for (const ComparisonRow& r : rows) {
    out << pad(r.run, 14) << pad(r.task, 7) << pad(cell(r.acc), 14) << cell(r.rouge1_f)
        << (r.run == "mtl_lambda" && dominates ? "  *" : "") << "\n";
  }
  if (dominates) out << "* multi-task run matches or beats every single-task baseline\n";
  return kExitOk;
}

int cmd_curves(const std::string& in, const std::string& svg, std::ostream& out) {
  const auto records = parse_curves_csv(read_file(in));
  write_file_atomic(svg, render_curves_svg(records));
  out << "wrote " << svg << " (" << records.size() << " rows)\n";
  return kExitOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task learning with a gradient-cosine regularizer", "mtl"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON run configuration");
  g.seed_opt = app.add_option("--seed", g.seed, "seed for data and training");
  g.out_opt = app.add_option("--out-dir", g.out_dir, "output directory");
  std::string log;
  app.add_option("--log", log, "quiet | info | debug (default: $MTL_LOG or info)")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic dataset");
  CLI::App* tr = app.add_subcommand("train", "train and write checkpoint + curves.csv");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint and write eval.csv");
  CLI::App* cmp = app.add_subcommand("compare", "multi-task vs single-task comparison");
  CLI::App* cur = app.add_subcommand("curves", "render curves.csv as an SVG chart");

  Overrides tr_o, ev_o, cmp_o;
  add_overrides(tr, tr_o, true);
  add_overrides(cmp, cmp_o, true);
  add_overrides(ev, ev_o, false);
  std::string checkpoint, split = "test";
  ev->add_option("--checkpoint", checkpoint, "checkpoint file (default: <out-dir>/checkpoint.bin)");
  ev->add_option("--split", split, "train | valid | test")->check(CLI::IsMember({"train", "valid", "test"}));
  std::string csv_in, svg_out;
  cur->add_option("csv", csv_in, "curves.csv")->required();
  cur->add_option("svg", svg_out, "output SVG")->required();

  std::vector<const char*> argv{"mtl"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (!log.empty()) set_log_level(parse_log_level(log));
    if (gen->parsed()) return cmd_gen_data(g, out);
    if (tr->parsed()) return cmd_train(g, tr_o, out);
    if (ev->parsed()) return cmd_eval(g, ev_o, checkpoint, split, out);
    if (cmp->parsed()) return cmd_compare(g, cmp_o, out);
    if (cur->parsed()) return cmd_curves(csv_in, svg_out, out);
  } catch (const NumericError& e) {
    err << "mtl: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "mtl: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "mtl: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mtl::cli
