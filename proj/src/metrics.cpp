#include "mmlg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace mmlg {

Tokens tokenize_ws(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<NGram, std::size_t> counts;
  if (t.size() < n) return counts;
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    ++counts[NGram(t.begin() + std::ptrdiff_t(i), t.begin() + std::ptrdiff_t(i + n))];
  }
  return counts;
}

std::size_t clipped_matches(const std::map<NGram, std::size_t>& hyp,
                            const std::map<NGram, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [gram, count] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(count, it->second);
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

void NGramStats::accumulate(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw MetricError("bleu: empty reference");
  hyp_len += hyp.size();
  ref_len += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    if (hyp.size() < n) continue;
    totals[n - 1] += hyp.size() - n + 1;
    matches[n - 1] += clipped_matches(ngram_counts(hyp, n), ngram_counts(ref, n));
  }
}

double NGramStats::score(const BleuOptions& opt) const {
  if (ref_len == 0) throw MetricError("bleu: empty reference");
  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  std::size_t included = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const std::size_t total = totals[n - 1];
    if (total == 0) continue;  // hypothesis shorter than this order
    ++included;
    std::size_t match = matches[n - 1];
    double precision;
    if (match == 0) {
      if (n == 1) return 0.0;  // no unigram overlap at all
      precision = 1.0 / double(total + 1);  // add-one smoothing on higher orders
    } else {
      precision = double(match) / double(total);
    }
    log_sum += std::log(precision);
  }
  if (included == 0) return 0.0;

  const double ratio = double(hyp_len) / double(ref_len);
  const double brevity =
      opt.exp_brevity_penalty ? (ratio >= 1.0 ? 1.0 : std::exp(1.0 - 1.0 / ratio))
                              : std::min(1.0, ratio);
  return brevity * std::exp(log_sum / double(included));
}

double bleu(const Tokens& hyp, const Tokens& ref, const BleuOptions& opt) {
  NGramStats stats;
  stats.accumulate(hyp, ref);
  return stats.score(opt);
}

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

double rouge_n(const Tokens& hyp, const std::vector<Tokens>& refs, std::size_t n) {
  if (n == 0) throw MetricError("rouge_n: order must be >= 1");
  const auto hyp_counts = ngram_counts(hyp, n);
  std::size_t match_sum = 0, count_sum = 0;
  for (const auto& ref : refs) {
    if (ref.size() < n) continue;
    const auto ref_counts = ngram_counts(ref, n);
    match_sum += clipped_matches(hyp_counts, ref_counts);
    count_sum += ref.size() - n + 1;
  }
  if (count_sum == 0) {
    throw MetricError("rouge_" + std::to_string(n) + ": every reference is shorter than " +
                      std::to_string(n) + " tokens");
  }
  return double(match_sum) / double(count_sum);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw MetricError("rouge_l: empty reference");
  if (hyp.empty()) return 0.0;
  const double l = double(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / double(hyp.size());
  const double r = l / double(ref.size());
  return 2.0 * p * r / (p + r);
}

// ---------------------------------------------------------------------------
// Precision / recall / F1
// ---------------------------------------------------------------------------

void LabelConfusion::accumulate(const std::set<int>& predicted, const std::set<int>& gold) {
  for (int p : predicted) {
    if (gold.count(p))
      ++tp;
    else
      ++fp;
  }
  for (int g : gold) {
    if (!predicted.count(g)) ++fn;
  }
}

PrfResult prf(const LabelConfusion& c, const PrfOptions& opt) {
  PrfResult r;
  if (c.tp + c.fp > 0) r.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = double(c.tp) / double(c.tp + c.fn);
  if (r.precision && r.recall) {
    const double p = *r.precision, rc = *r.recall;
    if (p + rc > 0) {
      r.f1 = opt.literal_f1 ? p * rc / (p + rc) : 2.0 * p * rc / (p + rc);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Task evaluation
// ---------------------------------------------------------------------------

std::optional<double> MetricReport::value(const std::string& metric) const {
  for (const auto& [name, v] : values) {
    if (name == metric) return v;
  }
  return std::nullopt;
}

MetricReport evaluate_text_task(TaskKind kind, const std::string& task_name,
                                const std::string& dataset_tag,
                                const std::vector<std::string>& predictions,
                                const std::vector<std::string>& references) {
  if (predictions.size() != references.size()) {
    throw DataError("evaluate '" + task_name + "': " + std::to_string(predictions.size()) +
                    " predictions vs " + std::to_string(references.size()) + " references");
  }
  if (predictions.empty()) throw DataError("evaluate '" + task_name + "': no samples");

  MetricReport rep;
  rep.task = task_name;
  rep.dataset = dataset_tag;
  rep.n_samples = predictions.size();

  if (kind == TaskKind::translation) {
    NGramStats stats;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      stats.accumulate(tokenize_ws(predictions[i]), tokenize_ws(references[i]));
    }
    rep.values.emplace_back("BLEU", stats.score());
    return rep;
  }
  if (kind == TaskKind::summarization) {
    for (std::size_t n : {std::size_t(1), std::size_t(2)}) {
      double sum = 0.0;
      std::size_t defined = 0;
      for (std::size_t i = 0; i < predictions.size(); ++i) {
        const std::vector<Tokens> refs = {tokenize_ws(references[i])};
        if (refs[0].size() < n) continue;  // undefined for this sample
        sum += rouge_n(tokenize_ws(predictions[i]), refs, n);
        ++defined;
      }
      if (defined > 0) rep.values.emplace_back("ROUGE-" + std::to_string(n), sum / double(defined));
    }
    double sum_l = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      sum_l += rouge_l(tokenize_ws(predictions[i]), tokenize_ws(references[i]));
    }
    rep.values.emplace_back("ROUGE-L", sum_l / double(predictions.size()));
    return rep;
  }
  throw ConfigError("evaluate_text_task: classification tasks use evaluate_label_task");
}

MetricReport evaluate_label_task(const std::string& task_name, const std::string& dataset_tag,
                                 const std::vector<std::set<int>>& predictions,
                                 const std::vector<std::set<int>>& references) {
  if (predictions.size() != references.size()) {
    throw DataError("evaluate '" + task_name + "': " + std::to_string(predictions.size()) +
                    " predictions vs " + std::to_string(references.size()) + " references");
  }
  if (predictions.empty()) throw DataError("evaluate '" + task_name + "': no samples");
  LabelConfusion conf;
  for (std::size_t i = 0; i < predictions.size(); ++i) conf.accumulate(predictions[i], references[i]);
  PrfResult r = prf(conf);

  MetricReport rep;
  rep.task = task_name;
  rep.dataset = dataset_tag;
  rep.n_samples = predictions.size();
  if (r.precision) rep.values.emplace_back("P", *r.precision);
  if (r.recall) rep.values.emplace_back("R", *r.recall);
  rep.values.emplace_back("F1", r.f1);
  return rep;
}

// ---------------------------------------------------------------------------
// CSV / table rendering
// ---------------------------------------------------------------------------

namespace {

std::string format_value(double v) {
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

}  // namespace

std::string reports_to_csv(const std::vector<MetricReport>& reports, std::uint64_t seed) {
  std::ostringstream out;
  out << "# seed=" << seed << "\n";
  out << "task,dataset,metric,value,n_samples\n";
  for (const auto& rep : reports) {
    for (const auto& [metric, v] : rep.values) {
      out << rep.task << "," << rep.dataset << "," << metric << "," << format_value(v) << ","
          << rep.n_samples << "\n";
    }
  }
  return out.str();
}

std::string reports_to_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out << "task,dataset,metric,value,n_samples\n";
  for (const auto& rep : reports) {
    for (const auto& [metric, v] : rep.values) {
      out << rep.task << "," << rep.dataset << "," << metric << "," << format_value(v) << ","
          << rep.n_samples << "\n";
    }
  }
  return out.str();
}

std::vector<MetricReport> reports_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  do {
    if (!std::getline(in, line)) throw ParseError("metric csv: empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  if (line != "task,dataset,metric,value,n_samples") {
    throw ParseError("metric csv: unexpected header '" + line + "'");
  }
  std::vector<MetricReport> reports;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cols.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cols.size() != 5) {
      throw ParseError("metric csv:" + std::to_string(line_no) + ": expected 5 columns");
    }
    MetricReport* rep = nullptr;
    for (auto& r : reports) {
      if (r.task == cols[0] && r.dataset == cols[1]) rep = &r;
    }
    if (!rep) {
      reports.push_back({cols[0], cols[1], {}, 0});
      rep = &reports.back();
    }
    try {
      rep->values.emplace_back(cols[2], std::stod(cols[3]));
      rep->n_samples = std::size_t(std::stoull(cols[4]));
    } catch (const std::exception&) {
      throw ParseError("metric csv:" + std::to_string(line_no) + ": bad number");
    }
  }
  return reports;
}

std::string reports_to_table(const std::vector<MetricReport>& reports) {
  // union of metric names, stable order of first appearance
  std::vector<std::string> metrics;
  for (const auto& rep : reports) {
    for (const auto& [name, v] : rep.values) {
      if (std::find(metrics.begin(), metrics.end(), name) == metrics.end()) metrics.push_back(name);
    }
  }
  std::size_t task_w = 4, data_w = 7;
  for (const auto& rep : reports) {
    task_w = std::max(task_w, rep.task.size());
    data_w = std::max(data_w, rep.dataset.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(int(task_w + 2)) << "task" << std::setw(int(data_w + 2)) << "dataset";
  for (const auto& m : metrics) out << std::right << std::setw(10) << m;
  out << std::right << std::setw(10) << "samples" << "\n";
  for (const auto& rep : reports) {
    out << std::left << std::setw(int(task_w + 2)) << rep.task << std::setw(int(data_w + 2))
        << rep.dataset;
    for (const auto& m : metrics) {
      auto v = rep.value(m);
      if (v) {
        std::ostringstream num;
        num << std::fixed << std::setprecision(4) << *v;
        out << std::right << std::setw(10) << num.str();
      } else {
        out << std::right << std::setw(10) << "-";
      }
    }
    out << std::right << std::setw(10) << rep.n_samples << "\n";
  }
  return out.str();
}

}  // namespace mmlg
