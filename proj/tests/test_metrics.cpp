#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmlg/metrics.hpp"
#include "mmlg/util.hpp"

using namespace mmlg;

namespace {

Tokens tok(const std::string& s) { return tokenize_ws(s); }

// Exponential-time LCS oracle: longest subsequence of `a` that is also a
// subsequence of `b`, by enumerating all subsequences of `a`.
std::size_t lcs_brute_force(const Tokens& a, const Tokens& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::size_t mask = 0; mask < (std::size_t(1) << n); ++mask) {
    Tokens sub;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t(1) << i)) sub.push_back(a[i]);
    }
    // subsequence check against b
    std::size_t j = 0;
    for (const auto& t : b) {
      if (j < sub.size() && t == sub[j]) ++j;
    }
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

}  // namespace

TEST_CASE("bleu exact hand values") {
  CHECK(bleu(tok("a b c d"), tok("a b c d")) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(bleu(tok("a b c d"), tok("a b c d e")) - 0.8) < 1e-9);
  CHECK(bleu({}, tok("a b")) == 0.0);
  CHECK_THROWS_AS(bleu(tok("a"), {}), MetricError);
}

TEST_CASE("bleu short hypotheses exclude missing orders") {
  // one-token hypothesis: only unigram precision counts
  CHECK(bleu(tok("a"), tok("a b c")) == doctest::Approx(std::min(1.0, 1.0 / 3.0)).epsilon(1e-12));
  // no unigram overlap at all -> 0
  CHECK(bleu(tok("x y"), tok("a b")) == 0.0);
}

TEST_CASE("bleu smoothing on zero-match higher orders") {
  // unigrams match but no bigram does; smoothing keeps the score positive
  const double s = bleu(tok("a c b"), tok("a b c"));
  CHECK(s > 0.0);
  CHECK(s < 1.0);
}

TEST_CASE("bleu permutation sensitivity") {
  Tokens ref = tok("w1 w2 w3 w4 w5");
  CHECK(bleu(ref, ref) == doctest::Approx(1.0));
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tokens hyp = ref;
    rng.shuffle(hyp);
    if (hyp == ref) continue;
    CHECK(bleu(hyp, ref) < 1.0);
  }
}

TEST_CASE("bleu literal vs exponential brevity") {
  Tokens hyp = tok("a b c d");
  Tokens ref = tok("a b c d e f g h");
  BleuOptions literal;
  BleuOptions expo;
  expo.exp_brevity_penalty = true;
  // literal factor: 4/8 = 0.5; exponential: exp(1 - 8/4) = e^-1
  CHECK(bleu(hyp, ref, literal) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(bleu(hyp, ref, expo) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("corpus bleu pools statistics") {
  NGramStats stats;
  stats.accumulate(tok("a b c d"), tok("a b c d"));
  stats.accumulate(tok("e f g h"), tok("e f g h"));
  CHECK(stats.score() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rouge_n hand values") {
  CHECK(rouge_n(tok("a b c"), {tok("a b d")}, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rouge_n(tok("a b c"), {tok("a b c")}, 1) == doctest::Approx(1.0));
  CHECK(rouge_n(tok("a b c"), {tok("a b c")}, 2) == doctest::Approx(1.0));
  CHECK(rouge_n(tok("a b c"), {tok("a b c")}, 3) == doctest::Approx(1.0));
  CHECK(rouge_n(tok("x y"), {tok("a b")}, 1) == 0.0);
  CHECK_THROWS_AS(rouge_n(tok("a b"), {tok("a")}, 2), MetricError);
}

TEST_CASE("rouge_n multi-reference pooling and monotonicity") {
  // two references pool both matches and totals
  const double two_refs = rouge_n(tok("a b"), {tok("a x"), tok("b y z")}, 1);
  CHECK(two_refs == doctest::Approx(2.0 / 5.0).epsilon(1e-12));

  // adding matching unigrams to the hypothesis never lowers the score
  Tokens ref = tok("t1 t2 t3 t4 t5");
  double prev = 0.0;
  Tokens hyp;
  for (const auto& t : ref) {
    hyp.push_back(t);
    double cur = rouge_n(hyp, {ref}, 1);
    CHECK(cur >= prev);
    prev = cur;
  }
  CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("rouge_l hand values") {
  CHECK(rouge_l(tok("a b c"), tok("a b c")) == doctest::Approx(1.0));
  CHECK(rouge_l(tok("a c"), tok("a b c")) == doctest::Approx(0.8).epsilon(1e-12));
  // reversed sequence of distinct tokens: LCS length 1
  Tokens fwd = tok("p q r s");
  Tokens rev(fwd.rbegin(), fwd.rend());
  CHECK(lcs_length(fwd, rev) == 1);
  CHECK(rouge_l(fwd, rev) == doctest::Approx(2.0 * 0.25 * 0.25 / 0.5).epsilon(1e-12));
  CHECK_THROWS_AS(rouge_l(tok("a"), {}), MetricError);
  CHECK(rouge_l({}, tok("a")) == 0.0);
}

TEST_CASE("lcs equals the exponential brute-force oracle on short pairs") {
  // exhaustive over the binary alphabet up to length 5 (acceptance covers 8)
  std::vector<Tokens> pool;
  for (std::size_t len = 0; len <= 5; ++len) {
    for (std::size_t bits = 0; bits < (std::size_t(1) << len); ++bits) {
      Tokens t;
      for (std::size_t i = 0; i < len; ++i) t.push_back((bits >> i) & 1 ? "b" : "a");
      pool.push_back(t);
    }
  }
  for (const auto& a : pool) {
    for (const auto& b : pool) {
      CHECK(lcs_length(a, b) == lcs_brute_force(a, b));
    }
  }
}

TEST_CASE("prf matches the published rounding") {
  // confusion engineered to give P = 0.67, R = 0.63
  LabelConfusion c;
  c.tp = 6300;
  c.fp = 3103;  // 6300 / 9403 = 0.6700...
  c.fn = 3700;
  auto r = prf(c);
  REQUIRE(r.precision.has_value());
  REQUIRE(r.recall.has_value());
  CHECK(*r.precision == doctest::Approx(0.67).epsilon(1e-4));
  CHECK(*r.recall == doctest::Approx(0.63).epsilon(1e-12));
  // harmonic mean lands on the reported 0.65 (the unscaled variant cannot)
  CHECK(std::abs(r.f1 - 0.65) < 5e-3);
  CHECK(r.f1 == doctest::Approx(0.6494).epsilon(1e-3));

  PrfOptions literal;
  literal.literal_f1 = true;
  CHECK(prf(c, literal).f1 == doctest::Approx(0.6494 / 2).epsilon(1e-3));
}

TEST_CASE("prf hand values and conventions") {
  LabelConfusion perfect{3, 0, 0};
  auto p = prf(perfect);
  CHECK(*p.precision == 1.0);
  CHECK(*p.recall == 1.0);
  CHECK(p.f1 == 1.0);

  LabelConfusion c{2, 1, 3};
  auto r = prf(c);
  CHECK(*r.precision == doctest::Approx(2.0 / 3.0));
  CHECK(*r.recall == doctest::Approx(0.4));
  CHECK(r.f1 == doctest::Approx(0.5).epsilon(1e-12));

  // empty prediction set: precision undefined, recall 0, F1 0 by convention
  LabelConfusion empty{0, 0, 4};
  auto e = prf(empty);
  CHECK(!e.precision.has_value());
  CHECK(*e.recall == 0.0);
  CHECK(e.f1 == 0.0);
}

TEST_CASE("f1 sits between min and max of precision and recall") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    LabelConfusion c;
    c.tp = 1 + rng.below(50);
    c.fp = rng.below(50);
    c.fn = rng.below(50);
    auto r = prf(c);
    const double lo = std::min(*r.precision, *r.recall);
    const double hi = std::max(*r.precision, *r.recall);
    CHECK(r.f1 >= lo - 1e-12);
    CHECK(r.f1 <= hi + 1e-12);
  }
}

TEST_CASE("evaluate_text_task on identical inputs scores 1.0 everywhere") {
  std::vector<std::string> texts = {"one two three four", "five six seven eight nine"};
  auto t = evaluate_text_task(TaskKind::translation, "mt", "fixture", texts, texts);
  CHECK(*t.value("BLEU") == doctest::Approx(1.0));
  auto s = evaluate_text_task(TaskKind::summarization, "sum", "fixture", texts, texts);
  CHECK(*s.value("ROUGE-1") == doctest::Approx(1.0));
  CHECK(*s.value("ROUGE-2") == doctest::Approx(1.0));
  CHECK(*s.value("ROUGE-L") == doctest::Approx(1.0));
}

TEST_CASE("evaluate_label_task micro-average equals per-sample brute force") {
  std::vector<std::set<int>> preds = {{1, 2}, {3}, {}, {2, 4, 5}};
  std::vector<std::set<int>> golds = {{1}, {3, 4}, {5}, {2, 4}};
  auto rep = evaluate_label_task("cls", "fixture", preds, golds);

  // independent pooled-confusion route
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int p : preds[i]) (golds[i].count(p) ? tp : fp) += 1;
    for (int g : golds[i])
      if (!preds[i].count(g)) ++fn;
  }
  const double p = double(tp) / double(tp + fp);
  const double r = double(tp) / double(tp + fn);
  CHECK(*rep.value("P") == doctest::Approx(p).epsilon(1e-12));
  CHECK(*rep.value("R") == doctest::Approx(r).epsilon(1e-12));
  CHECK(*rep.value("F1") == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));

  // all-empty predictions: P undefined (absent), R present and zero
  auto none = evaluate_label_task("cls", "fixture", {{}, {}}, {{1}, {2}});
  CHECK(!none.value("P").has_value());
  CHECK(*none.value("R") == 0.0);
}

TEST_CASE("evaluate alignment errors") {
  CHECK_THROWS_AS(
      evaluate_text_task(TaskKind::translation, "mt", "d", {"a"}, {"a", "b"}), DataError);
  CHECK_THROWS_AS(evaluate_label_task("cls", "d", {{1}}, {}), DataError);
}

TEST_CASE("metric csv round trip and table rendering") {
  std::vector<MetricReport> reps;
  reps.push_back({"de-en", "fixture", {{"BLEU", 0.75}}, 100});
  reps.push_back({"cls-de", "fixture", {{"P", 0.67}, {"R", 0.63}, {"F1", 0.6494}}, 50});
  auto csv = reports_to_csv(reps);
  auto parsed = reports_from_csv(csv);
  REQUIRE(parsed.size() == 2);
  CHECK(*parsed[0].value("BLEU") == doctest::Approx(0.75));
  CHECK(*parsed[1].value("F1") == doctest::Approx(0.6494));
  CHECK(parsed[1].n_samples == 50);

  auto table = reports_to_table(parsed);
  CHECK(table.find("de-en") != std::string::npos);
  CHECK(table.find("0.6494") != std::string::npos);

  CHECK_THROWS_AS(reports_from_csv("bad header\n"), ParseError);
}
