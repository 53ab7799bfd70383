#pragma once

// Correlation and rank tests, the exact binomial test, the PPP-PPL
// trade-off analysis, and surface statistics of text samples.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ppp/corpus.hpp"
#include "ppp/distributions.hpp"
#include "ppp/error.hpp"
#include "ppp/text.hpp"

namespace ppp::stats {

// Average ranks (1-based); ties share the mean of the ranks they span.
inline std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i + 1;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = avg;
    i = j;
  }
  return ranks;
}

namespace detail {

inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation is undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace detail

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

// Sample Pearson correlation; two-sided p from t = r sqrt((n-2)/(1-r^2)).
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: vectors differ in length");
  if (x.size() < 3) throw DomainError("pearson: need at least 3 pairs");
  Correlation c;
  c.r = detail::pearson_r(x, y);
  const double df = static_cast<double>(x.size() - 2);
  const double denom = 1.0 - c.r * c.r;
  c.p_value = denom <= 0.0 ? 0.0 : dist::t_two_sided(c.r * std::sqrt(df / denom), df);
  return c;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: vectors differ in length");
  if (x.size() < 2) throw DomainError("spearman: need at least 2 pairs");
  auto rx = midranks(x);
  auto ry = midranks(y);
  return detail::pearson_r(rx, ry);
}

// Number of a-subsets of {1..na+nb} with each rank-sum excess U (0..na*nb).
inline std::vector<double> mann_whitney_counts(std::size_t na, std::size_t nb) {
  // counts[m][u] for the current n, built by the recurrence
  // N(m, n, u) = N(m-1, n, u-n) + N(m, n-1, u).
  const std::size_t umax = na * nb;
  std::vector<std::vector<double>> prev(na + 1, std::vector<double>(umax + 1, 0.0));
  for (std::size_t m = 0; m <= na; ++m) prev[m][0] = 1.0;  // n = 0
  for (std::size_t n = 1; n <= nb; ++n) {
    std::vector<std::vector<double>> cur(na + 1, std::vector<double>(umax + 1, 0.0));
    cur[0][0] = 1.0;
    for (std::size_t m = 1; m <= na; ++m) {
      for (std::size_t u = 0; u <= m * n; ++u) {
        double v = prev[m][u];
        if (u >= n) v += cur[m - 1][u - n];
        cur[m][u] = v;
      }
    }
    prev = std::move(cur);
  }
  return prev[na];
}

// Exact two-sided p for a tie-free U: doubled smaller tail, capped at 1.
inline double mann_whitney_exact_p(double u, std::size_t na, std::size_t nb) {
  auto counts = mann_whitney_counts(na, nb);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (static_cast<double>(k) <= u) lower += counts[k];
    if (static_cast<double>(k) >= u) upper += counts[k];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / total);
}

// Normal approximation with continuity correction; `tie_term` is
// sum(t^3 - t) over tie groups of the pooled sample.
inline double mann_whitney_normal_p(double u, std::size_t na, std::size_t nb, double tie_term = 0.0) {
  const double n1 = static_cast<double>(na), n2 = static_cast<double>(nb), n = n1 + n2;
  const double mu = 0.5 * n1 * n2;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(u - mu) - 0.5) / std::sqrt(var);
  return std::min(1.0, dist::normal_two_sided(z));
}

struct MannWhitney {
  double u = 0.0;  // U statistic of sample a
  double p_value = 1.0;
  bool exact = false;
};

// Two-sided Mann-Whitney U. Exact distribution when na+nb <= 12 and there
// are no ties, otherwise the tie-corrected normal approximation.
inline MannWhitney mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw DomainError("mann_whitney_u: both samples must be nonempty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto ranks = midranks(pooled);
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum_a += ranks[i];
  const double na = static_cast<double>(a.size());

  MannWhitney res;
  res.u = rank_sum_a - na * (na + 1.0) / 2.0;

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  if (pooled.size() <= 12 && tie_term == 0.0) {
    res.exact = true;
    res.p_value = mann_whitney_exact_p(res.u, a.size(), b.size());
  } else {
    res.p_value = mann_whitney_normal_p(res.u, a.size(), b.size(), tie_term);
  }
  return res;
}

namespace detail {

inline double log_binom_pmf(std::size_t k, std::size_t n, double log_pi, double log_1mpi) {
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  return std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0) + kk * log_pi + (nn - kk) * log_1mpi;
}

inline double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace detail

// Two-sided exact binomial test: min(1, 2 * min(P(X <= k), P(X >= k))).
inline double binomial_test(std::size_t k, std::size_t n, double pi) {
  if (k > n) throw DomainError("binomial_test: k exceeds n");
  if (!(pi > 0.0 && pi < 1.0)) throw DomainError("binomial_test: pi must lie in (0, 1)");
  const double lp = std::log(pi), lq = std::log1p(-pi);
  std::vector<double> lower, upper;
  for (std::size_t i = 0; i <= k; ++i) lower.push_back(detail::log_binom_pmf(i, n, lp, lq));
  for (std::size_t i = k; i <= n; ++i) upper.push_back(detail::log_binom_pmf(i, n, lp, lq));
  const double tail = std::min(detail::log_sum_exp(lower), detail::log_sum_exp(upper));
  return std::min(1.0, 2.0 * std::exp(tail));
}

struct PppPplPoint {
  std::string model_id;
  std::string prompt_id = "none";
  std::string metric;
  double ppl = 1.0;
  double ppp = 0.0;
  bool is_instruction_tuned = false;
  bool is_prompt_conditioned = false;

  bool is_flagged() const { return is_instruction_tuned || is_prompt_conditioned; }
};

enum class PplAxis { log, raw };

inline std::string_view to_string(PplAxis a) { return a == PplAxis::log ? "log" : "raw"; }

inline PplAxis parse_ppl_axis(std::string_view s) {
  if (s == "log") return PplAxis::log;
  if (s == "raw") return PplAxis::raw;
  throw Error("unknown PPL axis '" + std::string(s) + "' (expected log|raw)");
}

struct TradeoffAnalysis {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = std::numeric_limits<double>::quiet_NaN();
  double pearson_p = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_base = 0;
  std::size_t below_line = 0;
  std::size_t n_flagged = 0;
  double binom_p = 1.0;
  PplAxis axis = PplAxis::log;
  std::vector<double> residuals;  // ppp - fitted, one per input point, input order
};

inline double ppl_coordinate(double ppl, PplAxis axis) {
  if (!(ppl > 0.0)) throw DomainError("PPL must be positive");
  return axis == PplAxis::log ? std::log(ppl) : ppl;
}

// Fits ppp ~ a + b * x(PPL) on base points (neither instruction-tuned nor
// prompt-conditioned) and counts flagged points strictly below that line.
// A point within 1e-12 (relative) of the line counts as on it.
inline TradeoffAnalysis tradeoff_analysis(std::span<const PppPplPoint> points, PplAxis axis = PplAxis::log) {
  TradeoffAnalysis t;
  t.axis = axis;
  std::vector<double> bx, by;
  for (const auto& p : points) {
    if (!p.is_flagged()) {
      bx.push_back(ppl_coordinate(p.ppl, axis));
      by.push_back(p.ppp);
    }
  }
  t.n_base = bx.size();
  if (t.n_base < 3) {
    throw InsufficientDataError("trade-off analysis needs at least 3 base points, got " + std::to_string(t.n_base));
  }
  const double n = static_cast<double>(t.n_base);
  const double mx = std::accumulate(bx.begin(), bx.end(), 0.0) / n;
  const double my = std::accumulate(by.begin(), by.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < bx.size(); ++i) {
    sxx += (bx[i] - mx) * (bx[i] - mx);
    sxy += (bx[i] - mx) * (by[i] - my);
    syy += (by[i] - my) * (by[i] - my);
  }
  if (sxx == 0.0) throw InsufficientDataError("trade-off analysis: base points share one PPL value");
  t.slope = sxy / sxx;
  t.intercept = my - t.slope * mx;
  if (syy > 0.0) {
    auto c = pearson(bx, by);
    t.pearson_r = c.r;
    t.pearson_p = c.p_value;
  }
  t.residuals.reserve(points.size());
  for (const auto& p : points) {
    const double fitted = t.intercept + t.slope * ppl_coordinate(p.ppl, axis);
    const double resid = p.ppp - fitted;
    t.residuals.push_back(resid);
    if (p.is_flagged()) {
      ++t.n_flagged;
      if (resid < -1e-12 * std::max(1.0, std::abs(fitted))) ++t.below_line;
    }
  }
  t.binom_p = binomial_test(t.below_line, t.n_flagged, 0.5);
  return t;
}

struct SurfaceStats {
  double mean_sentence_len = 0.0;  // words
  double mean_word_len = 0.0;      // characters, over all words
  double mean_log_freq = 0.0;      // over non-stopwords
};

inline SurfaceStats surface_stats(const std::vector<std::vector<std::string>>& sentences, const FreqTable& freq,
                                  const std::unordered_set<std::string>& stopwords,
                                  const WordLengthOptions& length = {}) {
  if (sentences.empty()) throw DomainError("surface_stats: no sentences");
  std::size_t words = 0, content = 0;
  double chars = 0.0, log_freq = 0.0;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      ++words;
      chars += static_cast<double>(word_length(w, length));
      if (!stopwords.contains(text::to_lower(w))) {
        ++content;
        log_freq += log_frequency(freq, w);
      }
    }
  }
  if (words == 0) throw DomainError("surface_stats: sentences contain no words");
  if (content == 0) throw DomainError("surface_stats: every word is a stopword; mean log frequency is undefined");
  SurfaceStats st;
  st.mean_sentence_len = static_cast<double>(words) / static_cast<double>(sentences.size());
  st.mean_word_len = chars / static_cast<double>(words);
  st.mean_log_freq = log_freq / static_cast<double>(content);
  return st;
}

}  // namespace ppp::stats
