#include "mmlg/cli.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mmlg/checkpoint.hpp"
#include "mmlg/corpus.hpp"
#include "mmlg/metrics.hpp"
#include "mmlg/trainer.hpp"

namespace fs = std::filesystem;

namespace mmlg::cli {

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_file(const fs::path& path) {
  RunConfig cfg;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // trim
    const auto begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    const auto end = line.find_last_not_of(" \t");
    line = line.substr(begin, end - begin + 1);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError(path.string() + ":" + std::to_string(i + 1) + ": expected key=value");
    }
    cfg.kv_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return cfg;
}

std::string RunConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + it->second + "'");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
  if (it->second == "0" || it->second == "false" || it->second == "no") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + it->second + "'");
}

std::map<std::string, std::map<std::string, std::string>> RunConfig::task_defs() const {
  std::map<std::string, std::map<std::string, std::string>> defs;
  for (const auto& [key, value] : kv_) {
    if (key.rfind("task.", 0) != 0) continue;
    const auto second_dot = key.find('.', 5);
    if (second_dot == std::string::npos || second_dot == 5) {
      throw ConfigError("malformed task key '" + key + "' (expected task.<name>.<field>)");
    }
    defs[key.substr(5, second_dot - 5)][key.substr(second_dot + 1)] = value;
  }
  return defs;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  for (const auto& [key, value] : kv_) out << key << "=" << value << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Shared layout and helpers
// ---------------------------------------------------------------------------

namespace {

struct OutPaths {
  fs::path root;
  explicit OutPaths(const fs::path& r) : root(r) {}
  fs::path vocab() const { return root / "vocab.txt"; }
  fs::path ingest() const { return root / "ingest_report.txt"; }
  fs::path tasks_dir() const { return root / "tasks"; }
  fs::path ids(const std::string& task, const char* split) const {
    return tasks_dir() / (task + "." + split + ".ids");
  }
  fs::path meta(const std::string& task) const { return tasks_dir() / (task + ".meta"); }
};

const char* split_name(Split s) {
  return s == Split::train ? "train" : s == Split::valid ? "valid" : "test";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (valid: train, valid, test)");
}

std::string ids_to_line(const TokenIds& ids) {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += std::to_string(id);
  }
  return out;
}

TokenIds line_to_ids(const std::string& s) {
  TokenIds out;
  std::istringstream in(s);
  long long v;
  while (in >> v) out.push_back(TokenId(v));
  return out;
}

std::string dataset_to_text(const EncodedDataset& d) {
  std::string out;
  for (const auto& s : d.samples) {
    out += ids_to_line(s.src);
    out += '\t';
    out += ids_to_line(s.tgt);
    out += '\n';
  }
  return out;
}

EncodedDataset dataset_from_text(const std::string& text, const std::string& name, TaskKind kind,
                                 std::vector<int> inventory) {
  EncodedDataset d;
  d.name = name;
  d.kind = kind;
  d.class_inventory = std::move(inventory);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("dataset '" + name + "': missing tab separator");
    EncodedSample s;
    s.src = line_to_ids(line.substr(0, tab));
    s.tgt = line_to_ids(line.substr(tab + 1));
    d.samples.push_back(std::move(s));
  }
  return d;
}

// Text-level task: definition plus loaded/generated samples.
struct TaskText {
  std::string name;
  TaskKind kind = TaskKind::translation;
  TextDataset full;
  std::string ingest_lines;  // report fragment
};

std::vector<TaskText> load_task_texts(const RunConfig& cfg) {
  auto defs = cfg.task_defs();
  if (defs.empty()) throw ConfigError("no tasks defined (need task.<name>.* keys)");
  std::vector<TaskText> out;
  for (const auto& [name, fields] : defs) {
    auto field = [&, &name = name, &fields = fields](const std::string& f) -> std::string {
      auto it = fields.find(f);
      if (it == fields.end()) throw ConfigError("task '" + name + "' is missing field '" + f + "'");
      return it->second;
    };
    TaskText t;
    t.name = name;
    t.kind = task_kind_from_name(field("kind"));
    std::ostringstream report;

    if (fields.count("synthetic")) {
      SyntheticSpec spec;
      spec.kind = synthetic_kind_from_name(fields.at("synthetic"));
      spec.n_samples = std::size_t(cfg.get_int("task." + name + ".samples", 32));
      spec.vocab_slice = std::size_t(cfg.get_int("task." + name + ".slice", 16));
      spec.n_classes = std::size_t(cfg.get_int("task." + name + ".classes", 8));
      spec.min_len = std::size_t(cfg.get_int("task." + name + ".min_len", 3));
      spec.max_len = std::size_t(cfg.get_int("task." + name + ".max_len", 8));
      spec.seed = std::uint64_t(cfg.get_int("task." + name + ".gen_seed", 1));
      t.full = gen_synthetic_task(spec, name);
      if (t.full.kind != t.kind) {
        throw ConfigError("task '" + name + "': synthetic generator produces " +
                          task_kind_name(t.full.kind) + ", config says " + task_kind_name(t.kind));
      }
      report << name << ": synthetic " << fields.at("synthetic") << " samples="
             << t.full.samples.size() << "\n";
    } else if (t.kind == TaskKind::translation) {
      auto c = read_moses_pair(field("src"), field("tgt"), name);
      t.full = dataset_from_parallel(c, name);
      report << c.report.summary(name) << "\n";
    } else if (t.kind == TaskKind::summarization) {
      auto c = read_summarization_tsv(field("tsv"));
      t.full = dataset_from_summaries(c, name);
      report << c.report.summary(name) << "\n";
    } else {
      auto c = read_labeled(field("docs"), field("labels"));
      t.full = dataset_from_labeled(c, name);
      report << c.report.summary(name) << "\n";
    }
    t.ingest_lines = report.str();
    out.push_back(std::move(t));
  }
  return out;
}

std::string meta_to_text(const EncodedDataset& d) {
  std::ostringstream out;
  out << "kind=" << task_kind_name(d.kind) << "\n";
  out << "classes=";
  for (std::size_t i = 0; i < d.class_inventory.size(); ++i) {
    if (i) out << ' ';
    out << d.class_inventory[i];
  }
  out << "\n";
  return out.str();
}

struct TaskMeta {
  TaskKind kind;
  std::vector<int> classes;
};

TaskMeta meta_from_text(const std::string& text, const std::string& name) {
  TaskMeta meta{TaskKind::translation, {}};
  std::istringstream in(text);
  std::string line;
  bool have_kind = false;
  while (std::getline(in, line)) {
    if (line.rfind("kind=", 0) == 0) {
      meta.kind = task_kind_from_name(line.substr(5));
      have_kind = true;
    } else if (line.rfind("classes=", 0) == 0) {
      std::istringstream cs(line.substr(8));
      int v;
      while (cs >> v) meta.classes.push_back(v);
    }
  }
  if (!have_kind) throw ParseError("task meta for '" + name + "' lacks a kind");
  return meta;
}

// Rebuilds the registry from the preprocess outputs; task order (and with it
// token assignment) is the sorted task-name order.
TaskRegistry load_registry(const OutPaths& paths) {
  if (!fs::exists(paths.tasks_dir())) {
    throw IoError("no preprocessed tasks under " + paths.tasks_dir().string() +
                  " (run preprocess first)");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(paths.tasks_dir())) {
    const std::string fname = entry.path().filename().string();
    if (fname.size() > 5 && fname.compare(fname.size() - 5, 5, ".meta") == 0) {
      names.push_back(fname.substr(0, fname.size() - 5));
    }
  }
  std::sort(names.begin(), names.end());
  TaskRegistry registry;
  for (const auto& name : names) {
    TaskMeta meta = meta_from_text(read_file(paths.meta(name)), name);
    TaskSpec spec;
    spec.name = name;
    spec.kind = meta.kind;
    spec.train = dataset_from_text(read_file(paths.ids(name, "train")), name, meta.kind, meta.classes);
    spec.valid = dataset_from_text(read_file(paths.ids(name, "valid")), name, meta.kind, meta.classes);
    spec.test = dataset_from_text(read_file(paths.ids(name, "test")), name, meta.kind, meta.classes);
    registry.add(std::move(spec));
  }
  return registry;
}

ModelConfig model_config_from(const RunConfig& cfg, const Vocabulary& vocab) {
  ModelConfig mc = ModelConfig::preset(cfg.get("preset", "MM-desk"));
  mc.vocab = vocab.size();
  mc.moe.balance_coef = float(cfg.get_double("moe_balance_coef", mc.moe.balance_coef));
  mc.moe.noise_scale = float(cfg.get_double("moe_noise_scale", mc.moe.noise_scale));
  mc.moe.experts = std::size_t(cfg.get_int("moe_experts", static_cast<long long>(mc.moe.experts)));
  mc.moe.top_k = std::size_t(cfg.get_int("moe_top_k", static_cast<long long>(mc.moe.top_k)));
  mc.tie_embeddings = cfg.get_bool("tie_embeddings", mc.tie_embeddings);
  mc.validate();
  return mc;
}

TrainOptions train_options_from(const RunConfig& cfg) {
  TrainOptions opts;
  opts.seed = std::uint64_t(cfg.get_int("seed", 1));
  opts.max_len = std::size_t(cfg.get_int("max_len", 64));
  opts.lr = float(cfg.get_double("lr", 3e-4));
  opts.warmup_steps = std::uint64_t(cfg.get_int("warmup", 100));
  opts.eval_max_samples = std::size_t(cfg.get_int("eval_max_samples", 32));
  opts.eval_max_len = std::size_t(cfg.get_int("eval_max_len", 32));
  return opts;
}

int guard(const char* what, const std::function<void()>& body) noexcept {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << what << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

void run_preprocess(const RunConfig& cfg) {
  OutPaths paths(cfg.get("out"));
  const std::size_t vocab_size = std::size_t(cfg.get_int("vocab_size", 512));

  auto tasks = load_task_texts(cfg);

  // vocabulary over the training-split text of every task
  std::vector<std::string> vocab_lines;
  std::vector<std::array<TextDataset, 3>> splits;
  for (const auto& t : tasks) {
    std::array<TextDataset, 3> s = {filter_split(t.full, Split::train),
                                    filter_split(t.full, Split::valid),
                                    filter_split(t.full, Split::test)};
    for (const auto& sample : s[0].samples) {
      vocab_lines.push_back(sample.source);
      if (!sample.target.empty()) vocab_lines.push_back(sample.target);
    }
    splits.push_back(std::move(s));
  }
  Vocabulary vocab = Vocabulary::build(vocab_lines, vocab_size);

  // buffer all outputs, then write (no partial outputs on failure)
  std::vector<std::pair<fs::path, std::string>> outputs;
  std::ostringstream ingest;
  ingest << "# seed=" << cfg.get_int("seed", 1) << "\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    ingest << t.ingest_lines;
    std::size_t unknown = 0;
    const char* names[3] = {"train", "valid", "test"};
    for (int s = 0; s < 3; ++s) {
      EncodedDataset enc = encode_dataset(splits[i][std::size_t(s)], vocab);
      unknown += enc.unknown_tokens;
      outputs.emplace_back(paths.ids(t.name, names[s]), dataset_to_text(enc));
      if (s == 0) outputs.emplace_back(paths.meta(t.name), meta_to_text(enc));
      ingest << t.name << "." << names[s] << ": samples=" << enc.samples.size() << "\n";
    }
    ingest << t.name << ": unknown_tokens=" << unknown << "\n";
  }
  outputs.emplace_back(paths.vocab(), vocab.serialize());
  outputs.emplace_back(paths.ingest(), ingest.str());
  outputs.emplace_back(paths.root / "preprocess.config", cfg.resolved_text());
  for (const auto& [path, content] : outputs) atomic_write(path, content);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void run_train(const RunConfig& cfg) {
  OutPaths paths(cfg.get("out"));
  Vocabulary vocab = Vocabulary::load(paths.vocab());
  TaskRegistry registry = load_registry(paths);

  ModelConfig mc = model_config_from(cfg, vocab);
  TrainOptions opts = train_options_from(cfg);
  Model<float> model(mc, opts.seed);

  JointConfig joint =
      build_joint_config(cfg.get("joint"), registry, cfg.get_bool("both_directions", false));
  joint.batch_size = std::size_t(cfg.get_int("batch_size", 16));
  joint.patience = std::size_t(cfg.get_int("patience", 5));

  const std::size_t steps = std::size_t(cfg.get_int("steps", 200));
  const std::size_t eval_interval = std::size_t(cfg.get_int("eval_interval", 50));

  MultiTaskTrainer trainer(model, vocab, registry, joint, opts);
  if (cfg.has("resume")) {
    Checkpoint ckpt = load_checkpoint(cfg.get("resume"), vocab.hash());
    trainer.restore(ckpt.params, ckpt.optimizer, ckpt.step_counter);
  }

  std::ostringstream loss_csv;
  loss_csv << "# seed=" << opts.seed << "\n";
  loss_csv << "step,task,loss\n";
  std::ostringstream history;
  history << "step,task,dataset,metric,value,n_samples\n";
  std::vector<double> val_scores;
  bool stopped_early = false;

  auto write_checkpoint = [&](const std::string& stem) {
    Checkpoint ckpt = make_checkpoint(model, trainer.optimizer(), trainer.global_step(),
                                      cfg.resolved_text(), vocab.hash(), history.str());
    save_checkpoint(paths.root / (stem + ".mmlg"), ckpt);
  };

  if (steps <= trainer.steps_done()) {
    write_checkpoint("ckpt-final");
    atomic_write(paths.root / "loss.csv", loss_csv.str());
    atomic_write(paths.root / "train.config", cfg.resolved_text());
    return;
  }

  while (trainer.steps_done() < steps) {
    std::vector<float> losses = trainer.step();
    const std::uint64_t step = trainer.steps_done();
    for (std::size_t i = 0; i < losses.size(); ++i) {
      loss_csv << step << "," << joint.members[i] << "," << losses[i] << "\n";
    }
    if (eval_interval > 0 && step % eval_interval == 0) {
      auto reports = trainer.evaluate(Split::valid);
      for (const auto& rep : reports) {
        for (const auto& [metric, value] : rep.values) {
          history << step << "," << rep.task << "," << rep.dataset << "," << metric << "," << value
                  << "," << rep.n_samples << "\n";
        }
      }
      val_scores.push_back(trainer.validation_score());
      write_checkpoint("ckpt-step" + std::to_string(step));
      auto decision = early_stop_check(val_scores, joint.patience);
      if (decision.stop) {
        stopped_early = true;
        break;
      }
    }
  }

  write_checkpoint("ckpt-final");

  std::ostringstream summary;
  summary << "# seed=" << opts.seed << "\n";
  summary << "joint=" << joint.name << " steps_run=" << trainer.steps_done()
          << " early_stopped=" << (stopped_early ? 1 : 0) << "\n";
  for (const auto& member : joint.members) {
    summary << member << ".token_accuracy="
            << trainer.token_accuracy(member, Split::train, opts.eval_max_samples) << "\n";
  }
  atomic_write(paths.root / "loss.csv", loss_csv.str());
  atomic_write(paths.root / "metrics_history.csv", history.str());
  atomic_write(paths.root / "train_summary.txt", summary.str());
  atomic_write(paths.root / "train.config", cfg.resolved_text());
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

void run_evaluate(const RunConfig& cfg) {
  OutPaths paths(cfg.get("out"));

  if (cfg.has("bypass_hyp")) {
    // score a hypothesis file directly against references; no model involved
    auto hyps = read_lines(cfg.get("bypass_hyp"));
    auto refs = read_lines(cfg.get("bypass_ref"));
    TaskKind kind = task_kind_from_name(cfg.get("bypass_kind", "translation"));
    auto rep = evaluate_text_task(kind, cfg.get("bypass_task", "bypass"), "bypass", hyps, refs);
    const std::uint64_t seed = std::uint64_t(cfg.get_int("seed", 1));
    atomic_write(paths.root / "eval.bypass.csv", reports_to_csv({rep}, seed));
    atomic_write(paths.root / "eval.bypass.txt", reports_to_table({rep}));
    atomic_write(paths.root / "eval.bypass.config", cfg.resolved_text());
    return;
  }

  Vocabulary vocab = Vocabulary::load(paths.vocab());
  const fs::path ckpt_path = cfg.get("checkpoint");
  Checkpoint ckpt = load_checkpoint(ckpt_path, vocab.hash());  // refuses on hash mismatch

  // model architecture comes from the archived run config inside the checkpoint
  RunConfig archived;
  {
    std::istringstream in(ckpt.config_text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos && eq > 0) archived.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  ModelConfig mc = model_config_from(archived, vocab);
  Model<float> model(mc, std::uint64_t(archived.get_int("seed", 1)));
  apply_checkpoint(model, ckpt);

  TaskRegistry registry = load_registry(paths);
  JointConfig joint = build_joint_config(cfg.get("joint", archived.get("joint")), registry,
                                         archived.get_bool("both_directions", false));

  const Split split = split_from_name(cfg.get("split", "test"));
  const std::size_t max_samples = std::size_t(cfg.get_int("eval_max_samples", 0));
  const std::size_t max_len = std::size_t(cfg.get_int("eval_max_len", 32));

  std::vector<MetricReport> reports;
  for (const auto& member : joint.members) {
    const TaskSpec& spec = registry.get(member);
    const EncodedDataset& data = split == Split::train  ? spec.train
                                 : split == Split::valid ? spec.valid
                                                         : spec.test;
    if (data.samples.empty()) continue;
    DecodedEval d = decode_for_eval(model, vocab, spec, data, max_samples, max_len);
    reports.push_back(evaluate_decoded(spec, split_name(split), d));
  }
  if (reports.empty()) throw DataError("no samples to evaluate on split " + cfg.get("split", "test"));

  const std::uint64_t seed = std::uint64_t(cfg.get_int("seed", archived.get_int("seed", 1)));
  const std::string stem = std::string("eval.") + split_name(split);
  atomic_write(paths.root / (stem + ".csv"), reports_to_csv(reports, seed));
  atomic_write(paths.root / (stem + ".txt"), reports_to_table(reports));
  atomic_write(paths.root / (stem + ".config"), cfg.resolved_text());
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

void run_decode(const RunConfig& cfg) {
  OutPaths paths(cfg.get("out"));
  Vocabulary vocab = Vocabulary::load(paths.vocab());
  Checkpoint ckpt = load_checkpoint(cfg.get("checkpoint"), vocab.hash());

  RunConfig archived;
  {
    std::istringstream in(ckpt.config_text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos && eq > 0) archived.set(line.substr(0, eq), line.substr(eq + 1));
    }
  }
  ModelConfig mc = model_config_from(archived, vocab);
  Model<float> model(mc, std::uint64_t(archived.get_int("seed", 1)));
  apply_checkpoint(model, ckpt);

  TaskRegistry registry = load_registry(paths);
  const TaskSpec& spec = registry.get(cfg.get("task"));
  const std::size_t max_len = std::size_t(cfg.get_int("decode_max_len", 32));

  auto inputs = read_lines(cfg.get("input"));
  std::string out_text;
  for (const auto& raw : inputs) {
    bool modified = false;
    const std::string line = clean_line(raw, modified);
    if (line.empty()) {
      out_text += "\n";
      continue;
    }
    TokenIds src = vocab.encode(line);
    if (spec.kind == TaskKind::classification) {
      LabelDecode d = model.decode_labels(src, spec.token);
      std::string row;
      for (int cls : d.labels) {
        if (!row.empty()) row += ' ';
        const std::size_t idx = std::size_t(cls);
        row += std::to_string(idx < spec.train.class_inventory.size()
                                  ? spec.train.class_inventory[idx]
                                  : cls);
      }
      out_text += row + "\n";
    } else {
      out_text += vocab.decode(model.greedy_decode(src, spec.token, max_len)) + "\n";
    }
  }
  atomic_write(cfg.get("output"), out_text);
  atomic_write(cfg.get("output") + ".config", cfg.resolved_text());
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

namespace {

struct BaselineEntry {
  const char* task;
  const char* dataset;
  const char* metric;
  const char* system;
  double value;
};

// Published reference numbers for side-by-side display; fixture constants,
// never recomputed.
constexpr BaselineEntry kPublishedBaselines[] = {
    {"de-en", "europarl", "BLEU", "TF-B single", 37.34},
    {"de-en", "europarl", "BLEU", "MM-B single", 37.15},
    {"de-en", "dcep", "BLEU", "TF-B single", 53.3},
    {"de-en", "dcep", "BLEU", "MM-B single", 54.98},
    {"de-en", "dcep", "BLEU", "MM-B ja-3", 55.11},
    {"de-en", "jrc-acquis", "BLEU", "TF-B single", 64.22},
    {"de-en", "jrc-acquis", "BLEU", "MM-B single", 67.24},
    {"de-en", "jrc-acquis", "BLEU", "MM-B ja-3", 66.6},
    {"sum-de", "jrc-acquis", "ROUGE-1", "MM-B ja-3", 0.82},
    {"sum-de", "jrc-acquis", "ROUGE-2", "MM-B ja-3", 0.75},
    {"sum-de", "jrc-acquis", "ROUGE-L", "MM-B ja-3", 0.82},
    {"cls-de", "jrc-acquis", "P", "MM-B ja-3", 0.67},
    {"cls-de", "jrc-acquis", "R", "MM-B ja-3", 0.63},
    {"cls-de", "jrc-acquis", "F1", "MM-B ja-3", 0.65},
    {"cls-de", "jrc-acquis", "P", "JEX", 0.47},
    {"cls-de", "jrc-acquis", "R", "JEX", 0.55},
    {"cls-de", "jrc-acquis", "F1", "JEX", 0.51},
};

}  // namespace

void run_report(const std::vector<fs::path>& csv_paths, const fs::path& out_path) {
  if (csv_paths.empty()) throw ConfigError("report needs at least one metrics CSV");

  using Key = std::array<std::string, 3>;  // task, dataset, metric
  std::vector<Key> row_order;
  std::map<Key, std::map<std::string, double>> cells;
  std::vector<std::string> columns;

  auto add_cell = [&](const Key& key, const std::string& source, double value,
                      const std::string& origin) {
    auto& row = cells[key];
    auto it = row.find(source);
    if (it != row.end() && it->second != value) {
      throw DataError("conflicting duplicate key (" + key[0] + "," + key[1] + "," + key[2] +
                      ") from " + origin + ": " + std::to_string(it->second) + " vs " +
                      std::to_string(value));
    }
    if (std::find(row_order.begin(), row_order.end(), key) == row_order.end())
      row_order.push_back(key);
    row[source] = value;
  };

  for (const auto& path : csv_paths) {
    const std::string source = path.stem().string();
    if (std::find(columns.begin(), columns.end(), source) != columns.end()) {
      throw DataError("two inputs share the run name '" + source + "'");
    }
    columns.push_back(source);
    for (const auto& rep : reports_from_csv(read_file(path))) {
      for (const auto& [metric, value] : rep.values) {
        add_cell({rep.task, rep.dataset, metric}, source, value, path.string());
      }
    }
  }
  for (const auto& b : kPublishedBaselines) {
    const std::string source = std::string("published:") + b.system;
    if (std::find(columns.begin(), columns.end(), source) == columns.end()) columns.push_back(source);
    add_cell({b.task, b.dataset, b.metric}, source, b.value, "published baselines");
  }

  std::size_t w0 = 4, w1 = 7, w2 = 6;
  for (const auto& key : row_order) {
    w0 = std::max(w0, key[0].size());
    w1 = std::max(w1, key[1].size());
    w2 = std::max(w2, key[2].size());
  }
  std::ostringstream out;
  out << std::left << std::setw(int(w0 + 2)) << "task" << std::setw(int(w1 + 2)) << "dataset"
      << std::setw(int(w2 + 2)) << "metric";
  for (const auto& c : columns) out << std::right << std::setw(int(std::max<std::size_t>(c.size(), 8) + 2)) << c;
  out << "\n";
  for (const auto& key : row_order) {
    out << std::left << std::setw(int(w0 + 2)) << key[0] << std::setw(int(w1 + 2)) << key[1]
        << std::setw(int(w2 + 2)) << key[2];
    for (const auto& c : columns) {
      const int width = int(std::max<std::size_t>(c.size(), 8) + 2);
      auto it = cells[key].find(c);
      if (it == cells[key].end()) {
        out << std::right << std::setw(width) << "-";
      } else {
        std::ostringstream num;
        num << std::setprecision(6) << it->second;
        out << std::right << std::setw(width) << num.str();
      }
    }
    out << "\n";
  }

  std::string merged_csv = "task,dataset,metric,source,value\n";
  for (const auto& key : row_order) {
    for (const auto& c : columns) {
      auto it = cells[key].find(c);
      if (it == cells[key].end()) continue;
      std::ostringstream num;
      num << std::setprecision(10) << it->second;
      merged_csv += key[0] + "," + key[1] + "," + key[2] + "," + c + "," + num.str() + "\n";
    }
  }

  atomic_write(out_path, out.str());
  fs::path csv_out = out_path;
  csv_out += ".csv";
  atomic_write(csv_out, merged_csv);
}

// ---------------------------------------------------------------------------
// exit-code wrappers
// ---------------------------------------------------------------------------

int cmd_preprocess(const RunConfig& cfg) noexcept {
  return guard("preprocess", [&] { run_preprocess(cfg); });
}
int cmd_train(const RunConfig& cfg) noexcept {
  return guard("train", [&] { run_train(cfg); });
}
int cmd_evaluate(const RunConfig& cfg) noexcept {
  return guard("evaluate", [&] { run_evaluate(cfg); });
}
int cmd_decode(const RunConfig& cfg) noexcept {
  return guard("decode", [&] { run_decode(cfg); });
}
int cmd_report(const std::vector<fs::path>& csv_paths, const fs::path& out_path) noexcept {
  return guard("report", [&] { run_report(csv_paths, out_path); });
}

}  // namespace mmlg::cli
