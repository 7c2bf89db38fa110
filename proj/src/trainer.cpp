#include "mmlg/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace mmlg {

// ---------------------------------------------------------------------------
// TaskSpec / TaskRegistry
// ---------------------------------------------------------------------------

std::vector<std::string> TaskSpec::metric_names() const {
  switch (kind) {
    case TaskKind::translation: return {"BLEU"};
    case TaskKind::summarization: return {"ROUGE-1", "ROUGE-2", "ROUGE-L"};
    case TaskKind::classification: return {"P", "R", "F1"};
  }
  return {};
}

TaskSpec& TaskRegistry::add(TaskSpec spec) {
  if (index_.count(spec.name)) throw TaskRegistryError("duplicate task name '" + spec.name + "'");
  spec.token = tokens_.add(spec.name);
  index_[spec.name] = tasks_.size();
  tasks_.push_back(std::move(spec));
  return tasks_.back();
}

const TaskSpec& TaskRegistry::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw TaskRegistryError("unknown task '" + name + "'");
  return tasks_[it->second];
}

std::vector<std::string> TaskRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& t : tasks_) out.push_back(t.name);
  return out;
}

EncodedDataset reversed_dataset(const EncodedDataset& d) {
  EncodedDataset out;
  out.name = d.name + ":rev";
  out.kind = d.kind;
  out.class_inventory = d.class_inventory;
  out.unknown_tokens = d.unknown_tokens;
  for (const auto& s : d.samples) {
    EncodedSample r;
    r.src = s.tgt;
    if (!r.src.empty() && r.src.back() == kEosId) r.src.pop_back();
    r.tgt = s.src;
    r.tgt.push_back(kEosId);
    if (r.src.empty()) continue;
    out.samples.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Joint combinations
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& combination_members(const std::string& name) {
  static const std::map<std::string, std::vector<std::string>> combos = {
      {"jt-pool-5", {"de-en", "de-es", "de-fr", "de-it", "de-sv"}},
      {"jt-chain-7", {"cs-de", "de-en", "en-es", "es-fr", "fr-it", "it-sv"}},
      {"js-7", {"sum-en", "sum-de", "sum-fr", "sum-it", "sum-es", "sum-cs", "sum-sv"}},
      {"jl-7", {"cls-en", "cls-de", "cls-fr", "cls-it", "cls-es", "cls-cs", "cls-sv"}},
      {"ja-3", {"de-en", "sum-de", "cls-de"}},
  };
  auto it = combos.find(name);
  if (it == combos.end()) {
    throw ConfigError("unknown joint combination '" + name +
                      "' (valid: jt-pool-5, jt-chain-7, js-7, jl-7, ja-3, single:<task>, "
                      "multi:<task,...>)");
  }
  return it->second;
}

}  // namespace

JointConfig build_joint_config(const std::string& name, TaskRegistry& registry,
                               bool both_directions) {
  JointConfig joint;
  joint.name = name;

  if (name.rfind("single:", 0) == 0) {
    joint.members = {name.substr(7)};
  } else if (name.rfind("multi:", 0) == 0) {
    std::string rest = name.substr(6);
    std::size_t start = 0;
    while (start <= rest.size()) {
      auto comma = rest.find(',', start);
      if (comma == std::string::npos) comma = rest.size();
      std::string member = rest.substr(start, comma - start);
      if (!member.empty()) joint.members.push_back(member);
      start = comma + 1;
    }
    if (joint.members.empty()) throw ConfigError("multi: combination names no tasks");
  } else {
    joint.members = combination_members(name);
  }

  for (const auto& member : joint.members) {
    if (!registry.contains(member)) {
      throw ConfigError("combination '" + name + "' needs task '" + member +
                        "' which is not registered");
    }
  }

  if (both_directions) {
    std::vector<std::string> extra;
    for (const auto& member : joint.members) {
      const TaskSpec& spec = registry.get(member);
      if (spec.kind != TaskKind::translation) continue;
      const std::string rev_name = member + ":rev";
      if (!registry.contains(rev_name)) {
        TaskSpec rev;
        rev.name = rev_name;
        rev.kind = TaskKind::translation;
        rev.train = reversed_dataset(spec.train);
        rev.valid = reversed_dataset(spec.valid);
        rev.test = reversed_dataset(spec.test);
        registry.add(std::move(rev));
      }
      extra.push_back(rev_name);
    }
    joint.members.insert(joint.members.end(), extra.begin(), extra.end());
  }
  return joint;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

OptimizerState OptimizerState::init(
    const std::vector<std::pair<std::string, Tensor<float>>>& params, float lr,
    std::uint64_t warmup_steps) {
  OptimizerState opt;
  opt.lr = lr;
  opt.warmup_steps = warmup_steps;
  for (const auto& [name, t] : params) {
    opt.slots.push_back({name, Tensor<float>::zeros(t.shape()), Tensor<float>::zeros(t.shape())});
  }
  return opt;
}

void adam_update(OptimizerState& opt, std::vector<std::pair<std::string, Tensor<float>>>& params,
                 float lr) {
  if (params.size() != opt.slots.size()) {
    throw ShapeError("adam_update: " + std::to_string(params.size()) + " parameters vs " +
                     std::to_string(opt.slots.size()) + " optimizer slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].second.numel() != opt.slots[i].m.numel()) {
      throw ShapeError("adam_update: shape mismatch for '" + params[i].first + "'");
    }
    for (float g : params[i].second.grad()) {
      if (!std::isfinite(g)) {
        ++opt.nonfinite;
        for (auto& [name, t] : params) t.zero_grad();
        return;  // whole update rejected
      }
    }
  }

  opt.step += 1;
  const double t = double(opt.step);
  const double bc1 = 1.0 - std::pow(double(opt.beta1), t);
  const double bc2 = 1.0 - std::pow(double(opt.beta2), t);
  const float lr_t =
      opt.warmup_steps > 0 ? lr * float(std::min<double>(1.0, t / double(opt.warmup_steps))) : lr;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].second.values();
    auto& grad = params[i].second.grad();
    auto& m = opt.slots[i].m.values();
    auto& v = opt.slots[i].v.values();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const float g = grad[j];
      m[j] = opt.beta1 * m[j] + (1.0f - opt.beta1) * g;
      v[j] = opt.beta2 * v[j] + (1.0f - opt.beta2) * g * g;
      const float mhat = float(double(m[j]) / bc1);
      const float vhat = float(double(v[j]) / bc2);
      value[j] -= lr_t * mhat / (std::sqrt(vhat) + opt.eps);
    }
    params[i].second.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

EarlyStopDecision early_stop_check(const std::vector<double>& history, std::size_t patience,
                                   double min_delta) {
  if (patience < 1) throw ConfigError("early stopping patience must be >= 1");
  EarlyStopDecision d;
  if (history.empty()) return d;
  double best = history[0];
  d.best_index = 0;
  std::size_t stalled = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > best + min_delta) {
      best = history[i];
      d.best_index = i;
      stalled = 0;
    } else {
      ++stalled;
    }
  }
  d.stalled = stalled;
  d.stop = stalled >= patience;
  return d;
}

// ---------------------------------------------------------------------------
// MultiTaskTrainer
// ---------------------------------------------------------------------------

MultiTaskTrainer::MultiTaskTrainer(Model<float>& model, const Vocabulary& vocab,
                                   TaskRegistry& registry, JointConfig joint, TrainOptions opts)
    : model_(&model), vocab_(&vocab), registry_(&registry), joint_(std::move(joint)), opts_(opts) {
  if (joint_.members.empty()) throw ConfigError("joint config has no member tasks");
  if (model.config().vocab != vocab.size()) {
    throw ConfigError("model vocab size " + std::to_string(model.config().vocab) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  named_params_ = model.params().named();
  opt_ = OptimizerState::init(named_params_, opts_.lr, opts_.warmup_steps);
  for (const auto& member : joint_.members) {
    const TaskSpec& spec = registry_->get(member);
    if (spec.train.samples.empty()) {
      throw DataError("task '" + member + "' has an empty training split");
    }
    members_.push_back({&spec, Batcher(spec.train, joint_.batch_size, opts_.max_len,
                                       mix_seed(opts_.seed, fnv1a64(member)))});
  }
  update_counts_.assign(members_.size(), 0);
}

float MultiTaskTrainer::train_one_task(std::size_t member_index) {
  Member& member = members_[member_index];
  Batch batch = member.train_batches.batch_at(steps_done_);
  const float coef = model_->config().moe.balance_coef;
  const float inv_b = 1.0f / float(batch.src.size());

  Rng noise(mix_seed(opts_.seed, steps_done_, member_index, 0x9015eull));
  float loss_acc = 0.0f;
  auto strip_pads = [](const TokenIds& ids) {
    TokenIds out = ids;
    while (!out.empty() && out.back() == kPadId) out.pop_back();
    return out;
  };
  for (std::size_t s = 0; s < batch.src.size(); ++s) {
    // trailing padding carries no signal; training on the trimmed sample
    // keeps the step loss bit-identical to an unbatched evaluation
    TokenIds src = strip_pads(batch.src[s]);
    TokenIds tgt = strip_pads(batch.tgt[s]);
    Tape<float> tape;
    TapeScope<float> scope(tape);
    auto out = model_->forward_train_full(src, tgt, member.spec->token, &noise);
    Tensor<float> loss = cross_entropy(out.logits, tgt, kPadId);
    if (coef != 0.0f) loss = add(loss, scale(out.moe_penalty, coef));
    loss_acc += loss.item() * inv_b;
    tape.backward(loss, inv_b);
  }
  adam_update(opt_, named_params_, opts_.lr);
  ++update_counts_[member_index];
  return loss_acc;
}

std::vector<float> MultiTaskTrainer::step() {
  std::vector<float> losses;
  losses.reserve(members_.size());
  for (std::size_t i = 0; i < members_.size(); ++i) {
    try {
      losses.push_back(train_one_task(i));
    } catch (const Error& e) {
      throw DataError("task '" + members_[i].spec->name + "' failed at step " +
                      std::to_string(steps_done_) + ": " + e.what());
    }
  }
  ++steps_done_;
  return losses;
}

const EncodedDataset& MultiTaskTrainer::split_data(const TaskSpec& spec, Split split) const {
  switch (split) {
    case Split::train: return spec.train;
    case Split::valid: return spec.valid;
    case Split::test: return spec.test;
  }
  return spec.train;
}

DecodedEval decode_for_eval(const Model<float>& model, const Vocabulary& vocab,
                            const TaskSpec& spec, const EncodedDataset& data,
                            std::size_t max_samples, std::size_t max_len) {
  DecodedEval out;
  const std::size_t n =
      max_samples == 0 ? data.samples.size() : std::min(max_samples, data.samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& sample = data.samples[i];
    if (spec.kind == TaskKind::classification) {
      LabelDecode d = model.decode_labels(sample.src, spec.token);
      std::set<int> pred(d.labels.begin(), d.labels.end());
      out.skipped_label_tokens += d.skipped;
      std::set<int> gold;
      for (TokenId id : sample.tgt) {
        if (is_label_token(id)) gold.insert(int(class_for_label_token(id)));
      }
      out.label_predictions.push_back(std::move(pred));
      out.label_references.push_back(std::move(gold));
    } else {
      TokenIds decoded = model.greedy_decode(sample.src, spec.token, max_len);
      out.predictions.push_back(vocab.decode(decoded));
      TokenIds ref = sample.tgt;
      if (!ref.empty() && ref.back() == kEosId) ref.pop_back();
      out.references.push_back(vocab.decode(ref));
    }
  }
  return out;
}

MetricReport evaluate_decoded(const TaskSpec& spec, const std::string& dataset_tag,
                              const DecodedEval& d) {
  if (spec.kind == TaskKind::classification) {
    return evaluate_label_task(spec.name, dataset_tag, d.label_predictions, d.label_references);
  }
  return evaluate_text_task(spec.kind, spec.name, dataset_tag, d.predictions, d.references);
}

std::vector<MetricReport> MultiTaskTrainer::evaluate(Split split) const {
  std::vector<MetricReport> reports;
  const char* tag = split == Split::train ? "train" : split == Split::valid ? "valid" : "test";
  for (const auto& member : members_) {
    const EncodedDataset& data = split_data(*member.spec, split);
    if (data.samples.empty()) continue;
    DecodedEval d = decode_for_eval(*model_, *vocab_, *member.spec, data, opts_.eval_max_samples,
                                    opts_.eval_max_len);
    reports.push_back(evaluate_decoded(*member.spec, tag, d));
  }
  return reports;
}

double MultiTaskTrainer::validation_score() const {
  auto reports = evaluate(Split::valid);
  if (reports.empty()) return 0.0;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    // headline metric per task kind: BLEU / ROUGE-L / F1
    const TaskSpec& spec = *members_[i].spec;
    const char* headline = spec.kind == TaskKind::translation ? "BLEU"
                           : spec.kind == TaskKind::summarization ? "ROUGE-L"
                                                                  : "F1";
    if (auto v = reports[i].value(headline)) {
      sum += *v;
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : sum / double(counted);
}

double MultiTaskTrainer::token_accuracy(const std::string& task_name, Split split,
                                        std::size_t max_samples) const {
  const TaskSpec& spec = registry_->get(task_name);
  const EncodedDataset& data = split_data(spec, split);
  if (data.samples.empty()) throw DataError("token_accuracy: split is empty");
  const std::size_t n =
      max_samples == 0 ? data.samples.size() : std::min(max_samples, data.samples.size());
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.samples[i];
    Tensor<float> logits = model_->forward_train(s.src, s.tgt, spec.token);
    for (std::size_t t = 0; t < s.tgt.size(); ++t) {
      if (s.tgt[t] == kPadId) continue;
      ++total;
      if (TokenId(argmax_row(logits, t)) == s.tgt[t]) ++hits;
    }
  }
  return total == 0 ? 0.0 : double(hits) / double(total);
}

void MultiTaskTrainer::restore(
    const std::vector<std::pair<std::string, Tensor<float>>>& saved_params,
    const OptimizerState& opt, std::uint64_t steps_done) {
  if (saved_params.size() != named_params_.size()) {
    throw DataError("restore: checkpoint has " + std::to_string(saved_params.size()) +
                    " parameters, model has " + std::to_string(named_params_.size()));
  }
  for (std::size_t i = 0; i < saved_params.size(); ++i) {
    if (saved_params[i].first != named_params_[i].first ||
        saved_params[i].second.shape() != named_params_[i].second.shape()) {
      throw DataError("restore: parameter mismatch at '" + saved_params[i].first + "'");
    }
    named_params_[i].second.values() = saved_params[i].second.values();
    named_params_[i].second.zero_grad();
  }
  if (opt.slots.size() != opt_.slots.size()) throw DataError("restore: optimizer slot mismatch");
  opt_.step = opt.step;
  opt_.nonfinite = opt.nonfinite;
  opt_.lr = opt.lr;
  opt_.warmup_steps = opt.warmup_steps;
  for (std::size_t i = 0; i < opt.slots.size(); ++i) {
    opt_.slots[i].m.values() = opt.slots[i].m.values();
    opt_.slots[i].v.values() = opt.slots[i].v.values();
  }
  steps_done_ = steps_done;
}

}  // namespace mmlg
