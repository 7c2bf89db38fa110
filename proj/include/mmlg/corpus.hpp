#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmlg/vocab.hpp"

namespace mmlg {

// ---------------------------------------------------------------------------
// Ingestion. Every reader reports a partition of its input units:
// kept (untouched) + cleaned (modified but kept) + quarantined (excluded)
// equals the input count; nothing is dropped silently.
// ---------------------------------------------------------------------------

struct IngestReport {
  std::size_t kept = 0;
  std::size_t cleaned = 0;
  std::size_t quarantined = 0;
  std::size_t input_units() const { return kept + cleaned + quarantined; }
  std::string summary(const std::string& what) const;
};

// Strips control characters, collapses whitespace runs and trims; sets
// `modified` when the result differs from the input.
std::string clean_line(const std::string& raw, bool& modified);

struct ParallelCorpus {
  std::vector<std::string> source;
  std::vector<std::string> target;
  std::string pair_tag;
  IngestReport report;
};

// Moses format: two aligned plain-text files, one sentence per line.
ParallelCorpus read_moses_pair(const std::filesystem::path& src_path,
                               const std::filesystem::path& tgt_path, const std::string& pair_tag);

struct SummarizationCorpus {
  struct Item {
    std::string body;
    std::string title;
  };
  std::vector<Item> items;
  IngestReport report;
};

// TSV: body TAB title. Quarantines empty titles and titles not shorter than
// their body in whitespace tokens.
SummarizationCorpus read_summarization_tsv(const std::filesystem::path& path);

struct LabeledCorpus {
  struct Item {
    std::string doc_id;
    std::string text;
    std::set<int> labels;
  };
  std::vector<Item> items;
  std::vector<int> class_inventory;  // distinct external class ids, sorted
  IngestReport report;
};

// docs file: doc-id TAB text; labels file: doc-id TAB id id ... Documents
// with a label count outside [1,7] are quarantined (and counted), never
// silently dropped.
LabeledCorpus read_labeled(const std::filesystem::path& docs_path,
                           const std::filesystem::path& labels_path);

// ---------------------------------------------------------------------------
// Task datasets.
// ---------------------------------------------------------------------------

enum class TaskKind { translation, summarization, classification };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

struct TextSample {
  std::string source;
  std::string target;      // empty for classification
  std::set<int> labels;    // classification only (external class ids)
};

struct TextDataset {
  std::string name;
  TaskKind kind = TaskKind::translation;
  std::vector<TextSample> samples;
  std::vector<int> class_inventory;  // classification only
};

TextDataset dataset_from_parallel(const ParallelCorpus& c, const std::string& name);
TextDataset dataset_from_summaries(const SummarizationCorpus& c, const std::string& name);
TextDataset dataset_from_labeled(const LabeledCorpus& c, const std::string& name);

// Deterministic 90/5/5 split keyed by a line hash of the source text.
enum class Split { train, valid, test };
Split split_of(const std::string& source_text);
TextDataset filter_split(const TextDataset& d, Split split);

// ---------------------------------------------------------------------------
// Encoding. Targets carry a trailing EOS; classification targets are the
// document's label tokens in ascending token order.
// ---------------------------------------------------------------------------

struct EncodedSample {
  TokenIds src;
  TokenIds tgt;
};

struct EncodedDataset {
  std::string name;
  TaskKind kind = TaskKind::translation;
  std::vector<EncodedSample> samples;
  std::vector<int> class_inventory;
  std::size_t unknown_tokens = 0;  // unk substitutions during encoding
};

EncodedDataset encode_dataset(const TextDataset& d, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Batching: length-bucketed shuffled batches, padding to the per-batch max
// length, deterministic given (dataset, batch size, max_len, seed).
// ---------------------------------------------------------------------------

struct Batch {
  std::vector<TokenIds> src;                       // padded with kPadId
  std::vector<TokenIds> tgt;
  std::vector<std::vector<std::uint8_t>> src_mask;  // 1 = real token
  std::vector<std::vector<std::uint8_t>> tgt_mask;
  std::size_t epoch = 0;
  bool epoch_start = false;
};

class Batcher {
 public:
  Batcher(const EncodedDataset& data, std::size_t batch_size, std::size_t max_len,
          std::uint64_t seed);

  std::size_t batches_per_epoch() const { return batches_per_epoch_; }
  std::size_t sample_count() const { return data_->samples.size(); }
  std::size_t truncated_samples() const { return truncated_; }

  // Deterministic random access: global batch index -> batch. Epoch e uses
  // its own shuffled, length-bucketed order.
  Batch batch_at(std::size_t global_index) const;

  // Stream view over batch_at.
  Batch next() { return batch_at(cursor_++); }
  void seek(std::size_t global_index) { cursor_ = global_index; }

 private:
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;

  const EncodedDataset* data_;
  std::size_t batch_size_;
  std::size_t max_len_;
  std::uint64_t seed_;
  std::size_t batches_per_epoch_ = 0;
  std::size_t truncated_ = 0;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Synthetic tasks: deterministic desk-scale stand-ins for the file corpora.
// keyword-label plants class keywords in filler text, so the stored label
// set is recomputable by scanning the document.
// ---------------------------------------------------------------------------

enum class SyntheticKind { copy, reverse, token_sort, keyword_label };

SyntheticKind synthetic_kind_from_name(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::copy;
  std::size_t n_samples = 32;
  std::size_t vocab_slice = 16;  // distinct filler words
  std::size_t n_classes = 8;     // keyword-label only
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::uint64_t seed = 1;
};

TextDataset gen_synthetic_task(const SyntheticSpec& spec, const std::string& name);

// Scan oracle for keyword-label documents: the label set implied by the text.
std::set<int> scan_keyword_labels(const std::string& text);

}  // namespace mmlg
