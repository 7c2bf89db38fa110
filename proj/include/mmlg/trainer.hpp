#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmlg/corpus.hpp"
#include "mmlg/metrics.hpp"
#include "mmlg/model.hpp"

namespace mmlg {

// ---------------------------------------------------------------------------
// Task registry: one TaskSpec per trainable problem. The task kind fixes the
// evaluation metric set (BLEU / ROUGE / P-R-F1).
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::translation;
  TaskToken token;
  EncodedDataset train;
  EncodedDataset valid;
  EncodedDataset test;

  std::vector<std::string> metric_names() const;
};

class TaskRegistry {
 public:
  // Assigns the next reserved task token; rejects duplicate names.
  TaskSpec& add(TaskSpec spec);
  const TaskSpec& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::vector<std::string> names() const;  // registration order
  std::size_t size() const { return tasks_.size(); }

 private:
  std::vector<TaskSpec> tasks_;
  std::map<std::string, std::size_t> index_;
  TaskTokenRegistry tokens_;
};

// Swapped-direction view of a translation dataset (targets regain EOS).
EncodedDataset reversed_dataset(const EncodedDataset& d);

// ---------------------------------------------------------------------------
// Joint combinations.
// ---------------------------------------------------------------------------

struct JointConfig {
  std::string name;
  std::vector<std::string> members;  // task names, fixed order
  std::size_t batch_size = 16;
  std::size_t total_steps = 0;
  std::size_t patience = 5;
};

// Resolves a named combination (jt-pool-5, jt-chain-7, js-7, jl-7, ja-3,
// single:<task>) against the registry. With both_directions, every
// translation member gains a reversed twin task ("<pair>:rev"), registered
// on demand.
JointConfig build_joint_config(const std::string& name, TaskRegistry& registry,
                               bool both_directions = false);

// ---------------------------------------------------------------------------
// Optimizer: adaptive moments with bias correction and linear warmup.
// ---------------------------------------------------------------------------

struct OptimizerState {
  struct Slot {
    std::string name;
    Tensor<float> m;
    Tensor<float> v;
  };
  std::vector<Slot> slots;     // mirrors the parameter enumeration
  std::uint64_t step = 0;      // bias-correction counter
  std::uint64_t nonfinite = 0; // rejected updates
  float lr = 3e-4f;
  std::uint64_t warmup_steps = 100;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static OptimizerState init(const std::vector<std::pair<std::string, Tensor<float>>>& params,
                             float lr, std::uint64_t warmup_steps);
};

// Applies one update from the gradients accumulated in `params`, clearing
// them afterwards. A non-finite gradient anywhere rejects the whole update
// (parameters untouched, nonfinite counter incremented).
void adam_update(OptimizerState& opt, std::vector<std::pair<std::string, Tensor<float>>>& params,
                 float lr);
inline void adam_update(OptimizerState& opt,
                        std::vector<std::pair<std::string, Tensor<float>>>& params) {
  adam_update(opt, params, opt.lr);
}

// ---------------------------------------------------------------------------
// Early stopping: stop once the validation metric has failed to improve by
// min_delta for `patience` consecutive evaluations (higher is better).
// ---------------------------------------------------------------------------

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_index = 0;
  std::size_t stalled = 0;  // consecutive non-improvements at the tail
};

EarlyStopDecision early_stop_check(const std::vector<double>& history, std::size_t patience,
                                   double min_delta = 1e-4);

// ---------------------------------------------------------------------------
// Round-robin joint trainer: one step = one same-size batch per member task,
// in registration order, each followed by an optimizer update.
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::uint64_t seed = 1;
  std::size_t max_len = 64;
  float lr = 3e-4f;
  std::uint64_t warmup_steps = 100;
  std::size_t eval_max_samples = 32;  // per task, during validation
  std::size_t eval_max_len = 32;      // decode cap during validation
};

class MultiTaskTrainer {
 public:
  MultiTaskTrainer(Model<float>& model, const Vocabulary& vocab, TaskRegistry& registry,
                   JointConfig joint, TrainOptions opts);

  // One full round-robin step; returns the optimized loss per member task.
  std::vector<float> step();

  std::uint64_t steps_done() const { return steps_done_; }
  const JointConfig& joint() const { return joint_; }
  OptimizerState& optimizer() { return opt_; }
  const std::vector<std::uint64_t>& update_counts() const { return update_counts_; }

  // Greedy-decode evaluation of every member on a split.
  std::vector<MetricReport> evaluate(Split split) const;
  // Mean of each member's headline metric on the validation split.
  double validation_score() const;
  // Teacher-forced argmax accuracy over non-pad target positions.
  double token_accuracy(const std::string& task_name, Split split,
                        std::size_t max_samples = 0) const;

  // Checkpoint glue.
  std::uint64_t global_step() const { return steps_done_; }
  void restore(const std::vector<std::pair<std::string, Tensor<float>>>& saved_params,
               const OptimizerState& opt, std::uint64_t steps_done);

 private:
  struct Member {
    const TaskSpec* spec;
    Batcher train_batches;
  };
  const EncodedDataset& split_data(const TaskSpec& spec, Split split) const;
  float train_one_task(std::size_t member_index);

  Model<float>* model_;
  const Vocabulary* vocab_;
  TaskRegistry* registry_;
  JointConfig joint_;
  TrainOptions opts_;
  OptimizerState opt_;
  std::vector<std::pair<std::string, Tensor<float>>> named_params_;
  std::vector<Member> members_;
  std::vector<std::uint64_t> update_counts_;
  std::uint64_t steps_done_ = 0;
};

// Decoded predictions + references for one task on one split (shared by the
// trainer's evaluate and the CLI decode/evaluate commands).
struct DecodedEval {
  std::vector<std::string> predictions;  // text tasks
  std::vector<std::string> references;
  std::vector<std::set<int>> label_predictions;  // classification
  std::vector<std::set<int>> label_references;
  std::size_t skipped_label_tokens = 0;
};

DecodedEval decode_for_eval(const Model<float>& model, const Vocabulary& vocab,
                            const TaskSpec& spec, const EncodedDataset& data,
                            std::size_t max_samples, std::size_t max_len);

MetricReport evaluate_decoded(const TaskSpec& spec, const std::string& dataset_tag,
                              const DecodedEval& d);

}  // namespace mmlg
