#include "mmlg/corpus.hpp"

#include <algorithm>
#include <sstream>

namespace mmlg {

std::string IngestReport::summary(const std::string& what) const {
  std::ostringstream out;
  out << what << ": kept=" << kept << " cleaned=" << cleaned << " quarantined=" << quarantined
      << " total=" << input_units();
  return out.str();
}

std::string clean_line(const std::string& raw, bool& modified) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (c == '\t' || c == ' ' || c < 0x20 || c == 0x7f) {
      // control characters and tabs count as whitespace; runs collapse
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(char(c));
  }
  modified = out != raw;
  return out;
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

ParallelCorpus read_moses_pair(const std::filesystem::path& src_path,
                               const std::filesystem::path& tgt_path, const std::string& pair_tag) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw DataError("moses pair " + pair_tag + ": line count mismatch (" +
                    std::to_string(src_lines.size()) + ", " + std::to_string(tgt_lines.size()) + ")");
  }
  ParallelCorpus c;
  c.pair_tag = pair_tag;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    bool m1 = false, m2 = false;
    std::string s = clean_line(src_lines[i], m1);
    std::string t = clean_line(tgt_lines[i], m2);
    if (s.empty() || t.empty()) {
      ++c.report.quarantined;
      continue;
    }
    c.source.push_back(std::move(s));
    c.target.push_back(std::move(t));
    if (m1 || m2)
      ++c.report.cleaned;
    else
      ++c.report.kept;
  }
  return c;
}

namespace {

std::size_t ws_token_count(const std::string& s) {
  std::istringstream in(s);
  std::string tok;
  std::size_t n = 0;
  while (in >> tok) ++n;
  return n;
}

}  // namespace

SummarizationCorpus read_summarization_tsv(const std::filesystem::path& path) {
  SummarizationCorpus c;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(i + 1) + ": expected body TAB title");
    }
    bool m1 = false, m2 = false;
    std::string body = clean_line(lines[i].substr(0, tab), m1);
    std::string title = clean_line(lines[i].substr(tab + 1), m2);
    if (body.empty() || title.empty() || ws_token_count(title) >= ws_token_count(body)) {
      ++c.report.quarantined;
      continue;
    }
    c.items.push_back({std::move(body), std::move(title)});
    if (m1 || m2)
      ++c.report.cleaned;
    else
      ++c.report.kept;
  }
  return c;
}

LabeledCorpus read_labeled(const std::filesystem::path& docs_path,
                           const std::filesystem::path& labels_path) {
  std::map<std::string, std::pair<std::string, bool>> docs;  // id -> (text, cleaned?)
  std::vector<std::string> doc_order;
  {
    auto lines = read_lines(docs_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto tab = lines[i].find('\t');
      if (tab == std::string::npos || tab == 0) {
        throw ParseError(docs_path.string() + ":" + std::to_string(i + 1) +
                         ": expected doc-id TAB text");
      }
      std::string id = lines[i].substr(0, tab);
      bool modified = false;
      std::string text = clean_line(lines[i].substr(tab + 1), modified);
      if (text.empty()) {
        throw ParseError(docs_path.string() + ":" + std::to_string(i + 1) + ": doc '" + id +
                         "' has no text");
      }
      if (docs.count(id)) {
        throw ParseError(docs_path.string() + ":" + std::to_string(i + 1) + ": duplicate doc id '" +
                         id + "'");
      }
      docs[id] = {std::move(text), modified};
      doc_order.push_back(std::move(id));
    }
  }

  LabeledCorpus c;
  std::map<std::string, std::set<int>> label_map;
  {
    auto lines = read_lines(labels_path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto tab = lines[i].find('\t');
      if (tab == std::string::npos || tab == 0) {
        throw ParseError(labels_path.string() + ":" + std::to_string(i + 1) +
                         ": expected doc-id TAB class ids");
      }
      std::string id = lines[i].substr(0, tab);
      if (!docs.count(id)) {
        throw ParseError(labels_path.string() + ":" + std::to_string(i + 1) + ": doc id '" + id +
                         "' has no document text");
      }
      std::istringstream rest(lines[i].substr(tab + 1));
      std::set<int>& labels = label_map[id];
      std::string tok;
      while (rest >> tok) {
        try {
          std::size_t used = 0;
          int value = std::stoi(tok, &used);
          if (used != tok.size() || value < 0) throw std::invalid_argument(tok);
          labels.insert(value);  // duplicates collapse via set semantics
        } catch (const std::exception&) {
          throw ParseError(labels_path.string() + ":" + std::to_string(i + 1) +
                           ": malformed class id '" + tok + "'");
        }
      }
    }
  }

  std::set<int> inventory;
  for (const auto& id : doc_order) {
    const auto& [text, was_cleaned] = docs[id];
    auto it = label_map.find(id);
    const std::size_t n_labels = it == label_map.end() ? 0 : it->second.size();
    if (n_labels < 1 || n_labels > 7) {
      ++c.report.quarantined;  // label count outside 1..7
      continue;
    }
    c.items.push_back({id, text, it->second});
    inventory.insert(it->second.begin(), it->second.end());
    if (was_cleaned)
      ++c.report.cleaned;
    else
      ++c.report.kept;
  }
  c.class_inventory.assign(inventory.begin(), inventory.end());
  return c;
}

// ---------------------------------------------------------------------------
// Task datasets
// ---------------------------------------------------------------------------

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::translation: return "translation";
    case TaskKind::summarization: return "summarization";
    case TaskKind::classification: return "classification";
  }
  return "?";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "translation") return TaskKind::translation;
  if (name == "summarization") return TaskKind::summarization;
  if (name == "classification") return TaskKind::classification;
  throw ConfigError("unknown task kind '" + name +
                    "' (valid: translation, summarization, classification)");
}

TextDataset dataset_from_parallel(const ParallelCorpus& c, const std::string& name) {
  TextDataset d;
  d.name = name;
  d.kind = TaskKind::translation;
  for (std::size_t i = 0; i < c.source.size(); ++i) d.samples.push_back({c.source[i], c.target[i], {}});
  return d;
}

TextDataset dataset_from_summaries(const SummarizationCorpus& c, const std::string& name) {
  TextDataset d;
  d.name = name;
  d.kind = TaskKind::summarization;
  for (const auto& item : c.items) d.samples.push_back({item.body, item.title, {}});
  return d;
}

TextDataset dataset_from_labeled(const LabeledCorpus& c, const std::string& name) {
  TextDataset d;
  d.name = name;
  d.kind = TaskKind::classification;
  d.class_inventory = c.class_inventory;
  for (const auto& item : c.items) d.samples.push_back({item.text, "", item.labels});
  return d;
}

Split split_of(const std::string& source_text) {
  const std::uint64_t bucket = fnv1a64(source_text) % 100;
  if (bucket < 90) return Split::train;
  if (bucket < 95) return Split::valid;
  return Split::test;
}

TextDataset filter_split(const TextDataset& d, Split split) {
  TextDataset out;
  out.name = d.name;
  out.kind = d.kind;
  out.class_inventory = d.class_inventory;
  for (const auto& s : d.samples) {
    if (split_of(s.source) == split) out.samples.push_back(s);
  }
  return out;
}

EncodedDataset encode_dataset(const TextDataset& d, const Vocabulary& vocab) {
  if (d.kind == TaskKind::classification && d.class_inventory.size() > kMaxLabelTokens) {
    throw ConfigError("dataset '" + d.name + "' has " + std::to_string(d.class_inventory.size()) +
                      " classes; the label-token block holds " + std::to_string(kMaxLabelTokens));
  }
  EncodedDataset out;
  out.name = d.name;
  out.kind = d.kind;
  out.class_inventory = d.class_inventory;
  Vocabulary::EncodeStats stats;
  for (const auto& s : d.samples) {
    EncodedSample e;
    e.src = vocab.encode(s.source, &stats);
    if (d.kind == TaskKind::classification) {
      for (int ext : s.labels) {
        const auto it = std::lower_bound(d.class_inventory.begin(), d.class_inventory.end(), ext);
        if (it == d.class_inventory.end() || *it != ext) {
          throw DataError("dataset '" + d.name + "': label " + std::to_string(ext) +
                          " missing from class inventory");
        }
        e.tgt.push_back(label_token_for_class(std::size_t(it - d.class_inventory.begin())));
      }
    } else {
      e.tgt = vocab.encode(s.target, &stats);
    }
    e.tgt.push_back(kEosId);
    if (e.src.empty()) continue;  // nothing encodable (should not happen on cleaned text)
    out.samples.push_back(std::move(e));
  }
  out.unknown_tokens = stats.unknown;
  return out;
}

// ---------------------------------------------------------------------------
// Batcher
// ---------------------------------------------------------------------------

Batcher::Batcher(const EncodedDataset& data, std::size_t batch_size, std::size_t max_len,
                 std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), max_len_(max_len), seed_(seed) {
  if (batch_size_ == 0) throw ConfigError("batch size must be >= 1");
  if (max_len_ < 2) throw ConfigError("max_len must be >= 2");
  if (data_->samples.empty()) throw DataError("dataset '" + data_->name + "' is empty (degenerate)");
  batches_per_epoch_ = (data_->samples.size() + batch_size_ - 1) / batch_size_;
  for (const auto& s : data_->samples) {
    if (s.src.size() > max_len_ || s.tgt.size() > max_len_) ++truncated_;
  }
}

std::vector<std::size_t> Batcher::epoch_order(std::size_t epoch) const {
  const std::size_t n = data_->samples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed_, epoch, 0xba7c4e5ull));
  rng.shuffle(order);
  // bucket by length; the prior shuffle randomizes order within equal lengths
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    const auto& sa = data_->samples[a];
    const auto& sb = data_->samples[b];
    return sa.src.size() + sa.tgt.size() < sb.src.size() + sb.tgt.size();
  });
  return order;
}

Batch Batcher::batch_at(std::size_t global_index) const {
  const std::size_t epoch = global_index / batches_per_epoch_;
  const std::size_t pos = global_index % batches_per_epoch_;
  auto order = epoch_order(epoch);

  // full batches are shuffled; a trailing partial batch stays last
  const std::size_t n_full = data_->samples.size() / batch_size_;
  std::vector<std::size_t> chunk_order(n_full);
  for (std::size_t i = 0; i < n_full; ++i) chunk_order[i] = i;
  Rng rng(mix_seed(seed_, epoch, 0xc47cull));
  rng.shuffle(chunk_order);

  std::size_t first;
  std::size_t count;
  if (pos < n_full) {
    first = chunk_order[pos] * batch_size_;
    count = batch_size_;
  } else {
    first = n_full * batch_size_;
    count = data_->samples.size() - first;
  }

  Batch b;
  b.epoch = epoch;
  b.epoch_start = pos == 0;
  std::size_t max_src = 0, max_tgt = 0;
  std::vector<const EncodedSample*> members;
  for (std::size_t i = 0; i < count; ++i) members.push_back(&data_->samples[order[first + i]]);
  std::vector<TokenIds> srcs, tgts;
  for (const auto* s : members) {
    TokenIds src = s->src;
    if (src.size() > max_len_) src.resize(max_len_);
    TokenIds tgt = s->tgt;
    if (tgt.size() > max_len_) {
      tgt.resize(max_len_);
      tgt.back() = kEosId;  // keep the end marker after truncation
    }
    max_src = std::max(max_src, src.size());
    max_tgt = std::max(max_tgt, tgt.size());
    srcs.push_back(std::move(src));
    tgts.push_back(std::move(tgt));
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint8_t> sm(max_src, 0), tm(max_tgt, 0);
    for (std::size_t j = 0; j < srcs[i].size(); ++j) sm[j] = 1;
    for (std::size_t j = 0; j < tgts[i].size(); ++j) tm[j] = 1;
    srcs[i].resize(max_src, kPadId);
    tgts[i].resize(max_tgt, kPadId);
    b.src.push_back(std::move(srcs[i]));
    b.tgt.push_back(std::move(tgts[i]));
    b.src_mask.push_back(std::move(sm));
    b.tgt_mask.push_back(std::move(tm));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic tasks
// ---------------------------------------------------------------------------

SyntheticKind synthetic_kind_from_name(const std::string& name) {
  if (name == "copy") return SyntheticKind::copy;
  if (name == "reverse") return SyntheticKind::reverse;
  if (name == "token-sort") return SyntheticKind::token_sort;
  if (name == "keyword-label") return SyntheticKind::keyword_label;
  throw ConfigError("unknown synthetic task '" + name +
                    "' (valid: copy, reverse, token-sort, keyword-label)");
}

namespace {

std::string filler_word(std::size_t i) { return "tok" + std::to_string(i); }
std::string keyword_word(std::size_t c) { return "key" + std::to_string(c); }

}  // namespace

std::set<int> scan_keyword_labels(const std::string& text) {
  std::set<int> labels;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    if (w.rfind("key", 0) == 0) {
      try {
        labels.insert(std::stoi(w.substr(3)));
      } catch (const std::exception&) {
      }
    }
  }
  return labels;
}

TextDataset gen_synthetic_task(const SyntheticSpec& spec, const std::string& name) {
  if (spec.n_samples == 0) throw ConfigError("synthetic task needs n_samples >= 1");
  if (spec.vocab_slice == 0) throw ConfigError("synthetic task needs a non-empty vocab slice");
  if (spec.min_len == 0 || spec.max_len < spec.min_len) {
    throw ConfigError("synthetic task needs 1 <= min_len <= max_len");
  }
  Rng rng(mix_seed(spec.seed, std::uint64_t(spec.kind), 0x5e17ull));
  TextDataset d;
  d.name = name;

  if (spec.kind == SyntheticKind::keyword_label) {
    d.kind = TaskKind::classification;
    const std::size_t n_classes = std::min(spec.n_classes, kMaxLabelTokens);
    for (std::size_t c = 0; c < n_classes; ++c) d.class_inventory.push_back(int(c));
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
      const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
      std::vector<std::string> words;
      for (std::size_t j = 0; j < len; ++j) words.push_back(filler_word(rng.below(spec.vocab_slice)));
      const std::size_t n_planted = 1 + rng.below(std::min<std::size_t>(3, n_classes));
      std::set<int> labels;
      while (labels.size() < n_planted) labels.insert(int(rng.below(n_classes)));
      for (int c : labels) {
        words.insert(words.begin() + std::ptrdiff_t(rng.below(words.size() + 1)), keyword_word(std::size_t(c)));
      }
      std::string text;
      for (const auto& w : words) {
        if (!text.empty()) text += ' ';
        text += w;
      }
      d.samples.push_back({text, "", labels});
    }
    return d;
  }

  d.kind = TaskKind::translation;
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    std::vector<std::string> words;
    for (std::size_t j = 0; j < len; ++j) words.push_back(filler_word(rng.below(spec.vocab_slice)));
    std::vector<std::string> target = words;
    if (spec.kind == SyntheticKind::reverse) {
      std::reverse(target.begin(), target.end());
    } else if (spec.kind == SyntheticKind::token_sort) {
      std::sort(target.begin(), target.end());
    }
    auto join = [](const std::vector<std::string>& ws) {
      std::string s;
      for (const auto& w : ws) {
        if (!s.empty()) s += ' ';
        s += w;
      }
      return s;
    };
    d.samples.push_back({join(words), join(target), {}});
  }
  return d;
}

}  // namespace mmlg
