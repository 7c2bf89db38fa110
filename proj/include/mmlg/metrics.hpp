#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmlg/corpus.hpp"
#include "mmlg/util.hpp"

namespace mmlg {

using Tokens = std::vector<std::string>;

// Metrics operate on whitespace tokens of detokenized text, never subwords.
Tokens tokenize_ws(const std::string& text);

// ---------------------------------------------------------------------------
// BLEU: clipped n-gram precisions for n=1..4 under a geometric mean, scaled
// by the brevity factor min(1, |hyp|/|ref|). Orders longer than the
// hypothesis are excluded from the mean; zero-match higher orders get
// add-one smoothing. The standard exponential brevity penalty is available
// behind a flag for comparison runs.
// ---------------------------------------------------------------------------

struct BleuOptions {
  bool exp_brevity_penalty = false;
};

// Pooled n-gram statistics; corpus-level BLEU accumulates over samples.
struct NGramStats {
  std::array<std::size_t, 4> matches{};  // clipped matches per order
  std::array<std::size_t, 4> totals{};   // hypothesis n-gram counts per order
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  void accumulate(const Tokens& hyp, const Tokens& ref);
  double score(const BleuOptions& opt = {}) const;
};

double bleu(const Tokens& hyp, const Tokens& ref, const BleuOptions& opt = {});

// ---------------------------------------------------------------------------
// ROUGE_N: recall-oriented clipped n-gram overlap against one or more
// reference summaries. ROUGE-L: harmonic-mean F of the longest common
// subsequence.
// ---------------------------------------------------------------------------

double rouge_n(const Tokens& hyp, const std::vector<Tokens>& refs, std::size_t n);
double rouge_l(const Tokens& hyp, const Tokens& ref);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

// ---------------------------------------------------------------------------
// Micro-averaged precision / recall / F1 over label-instance counts.
// ---------------------------------------------------------------------------

struct LabelConfusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  void accumulate(const std::set<int>& predicted, const std::set<int>& gold);
};

struct PrfOptions {
  // The harmonic mean 2PR/(P+R) is the default; `literal_f1` selects the
  // unscaled PR/(P+R) variant for auditing.
  bool literal_f1 = false;
};

struct PrfResult {
  std::optional<double> precision;  // undefined when tp+fp == 0
  std::optional<double> recall;     // undefined when tp+fn == 0
  double f1 = 0.0;                  // 0 when either component is undefined or P+R == 0
};

PrfResult prf(const LabelConfusion& c, const PrfOptions& opt = {});

// ---------------------------------------------------------------------------
// Task-level evaluation and reporting.
// ---------------------------------------------------------------------------

struct MetricReport {
  std::string task;
  std::string dataset;
  std::vector<std::pair<std::string, double>> values;
  std::size_t n_samples = 0;

  std::optional<double> value(const std::string& metric) const;
};

// Corpus aggregation: BLEU pools n-gram statistics; ROUGE averages over
// samples; P/R/F1 micro-averages one pooled confusion.
MetricReport evaluate_text_task(TaskKind kind, const std::string& task_name,
                                const std::string& dataset_tag,
                                const std::vector<std::string>& predictions,
                                const std::vector<std::string>& references);

MetricReport evaluate_label_task(const std::string& task_name, const std::string& dataset_tag,
                                 const std::vector<std::set<int>>& predictions,
                                 const std::vector<std::set<int>>& references);

// CSV with columns task,dataset,metric,value,n_samples (stable order). The
// seeded overload stamps the run seed as a leading comment line.
std::string reports_to_csv(const std::vector<MetricReport>& reports);
std::string reports_to_csv(const std::vector<MetricReport>& reports, std::uint64_t seed);
std::vector<MetricReport> reports_from_csv(const std::string& csv);

// Plain-text summary table, one row per (task, dataset).
std::string reports_to_table(const std::vector<MetricReport>& reports);

}  // namespace mmlg
