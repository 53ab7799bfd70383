#pragma once

// Spillover design matrices, nested OLS fits, psychometric predictive power
// (per-token log-likelihood gain) and the accompanying F and t tests.
//
// Baseline model columns, in order:
//   intercept, spill1, spill2, len0, freq0, len1, freq1, len2, freq2
// The full model inserts the predictor of interest right after the
// intercept. With the interaction option, len_k*freq_k (k = 0, 1, 2) are
// appended to both models.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppp/corpus.hpp"
#include "ppp/distributions.hpp"
#include "ppp/error.hpp"
#include "ppp/metrics.hpp"

namespace ppp {

enum class ContextScope { within_sentence, within_document };

inline std::string_view to_string(ContextScope s) {
  return s == ContextScope::within_sentence ? "within_sentence" : "within_document";
}

inline ContextScope parse_context_scope(std::string_view s) {
  if (s == "within_sentence") return ContextScope::within_sentence;
  if (s == "within_document") return ContextScope::within_document;
  throw Error("unknown context scope '" + std::string(s) + "' (expected within_sentence|within_document)");
}

struct FeatureRow {
  TokenKey key;
  double rt_ms = 0.0;
  double interest = 0.0;  // metric at w_t
  double spill1 = 0.0;    // metric at w_{t-1}
  double spill2 = 0.0;    // metric at w_{t-2}
  double len0 = 0.0, len1 = 0.0, len2 = 0.0;
  double freq0 = 0.0, freq1 = 0.0, freq2 = 0.0;
  double surprisal_bits = 0.0;  // of w_t, for perplexity over the analysed rows
};

struct FeatureOptions {
  ContextScope scope = ContextScope::within_sentence;
  WordLengthOptions length;
};

struct FeatureSet {
  std::vector<FeatureRow> rows;
  std::size_t dropped_no_context = 0;      // fewer than two predecessors in scope
  std::size_t dropped_missing_metric = 0;  // metric absent at w_t, w_{t-1} or w_{t-2}
};

// `words` is the full aligned corpus in reading order, including rows the
// filter removed: those still serve as spillover predecessors. Only keys in
// `retained` become response rows.
inline FeatureSet build_features(std::span<const AlignedWord> words, const std::set<TokenKey>& retained,
                                 const Metric& metric, const FreqTable& freq, const FeatureOptions& opts = {}) {
  auto same_scope = [&](const TokenKey& a, const TokenKey& b) {
    if (a.doc_id != b.doc_id) return false;
    return opts.scope == ContextScope::within_document || a.sent_id == b.sent_id;
  };
  FeatureSet out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (!retained.contains(w.token.key)) continue;
    if (i < 2 || !same_scope(words[i - 1].token.key, w.token.key) || !same_scope(words[i - 2].token.key, w.token.key)) {
      ++out.dropped_no_context;
      continue;
    }
    const auto& p1 = words[i - 1];
    const auto& p2 = words[i - 2];
    auto v0 = metric.value(w.metrics);
    auto v1 = metric.value(p1.metrics);
    auto v2 = metric.value(p2.metrics);
    if (!v0 || !v1 || !v2) {
      ++out.dropped_missing_metric;
      continue;
    }
    FeatureRow r;
    r.key = w.token.key;
    r.rt_ms = w.token.rt_ms;
    r.interest = *v0;
    r.spill1 = *v1;
    r.spill2 = *v2;
    r.len0 = static_cast<double>(word_length(w.token.surface, opts.length));
    r.len1 = static_cast<double>(word_length(p1.token.surface, opts.length));
    r.len2 = static_cast<double>(word_length(p2.token.surface, opts.length));
    r.freq0 = log_frequency(freq, w.token.surface);
    r.freq1 = log_frequency(freq, p1.token.surface);
    r.freq2 = log_frequency(freq, p2.token.surface);
    r.surprisal_bits = w.metrics.surprisal_bits;
    out.rows.push_back(r);
  }
  return out;
}

// Regressor matrix with an explicit leading intercept column.
struct Design {
  Eigen::MatrixXd x;
  std::vector<std::string> columns;
};

// Prepends the intercept to caller-supplied predictor columns.
inline Design make_design(const Eigen::MatrixXd& predictors, std::vector<std::string> names) {
  if (static_cast<Eigen::Index>(names.size()) != predictors.cols()) {
    throw Error("make_design: " + std::to_string(names.size()) + " names for " + std::to_string(predictors.cols()) +
                " columns");
  }
  Design d;
  d.x.resize(predictors.rows(), predictors.cols() + 1);
  d.x.col(0).setOnes();
  d.x.rightCols(predictors.cols()) = predictors;
  d.columns.reserve(names.size() + 1);
  d.columns.emplace_back("intercept");
  for (auto& n : names) d.columns.push_back(std::move(n));
  return d;
}

struct DesignOptions {
  bool include_interest = true;
  bool interaction = false;
};

inline Design spillover_design(std::span<const FeatureRow> rows, const DesignOptions& opts) {
  std::vector<std::string> names;
  if (opts.include_interest) names.emplace_back("interest");
  for (const char* n : {"spill1", "spill2", "len0", "freq0", "len1", "freq1", "len2", "freq2"}) names.emplace_back(n);
  if (opts.interaction) {
    for (const char* n : {"len0:freq0", "len1:freq1", "len2:freq2"}) names.emplace_back(n);
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Eigen::Index c = 0;
    if (opts.include_interest) m(i, c++) = r.interest;
    for (double v : {r.spill1, r.spill2, r.len0, r.freq0, r.len1, r.freq1, r.len2, r.freq2}) m(i, c++) = v;
    if (opts.interaction) {
      m(i, c++) = r.len0 * r.freq0;
      m(i, c++) = r.len1 * r.freq1;
      m(i, c++) = r.len2 * r.freq2;
    }
  }
  return make_design(m, std::move(names));
}

inline Eigen::VectorXd response(std::span<const FeatureRow> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rows[static_cast<std::size_t>(i)].rt_ms;
  return y;
}

struct OlsFit {
  std::vector<double> coefficients;  // intercept first
  std::vector<std::string> columns;
  double rss = 0.0;
  std::size_t n = 0;
  std::size_t p = 0;
  // Gaussian log-likelihood at the ML variance rss/n; +inf for an exact fit.
  double loglik = 0.0;

  bool is_degenerate() const { return std::isinf(loglik); }
};

inline double gaussian_loglik(double rss, std::size_t n) {
  const double nn = static_cast<double>(n);
  return -0.5 * nn * (std::log(2.0 * std::numbers::pi * rss / nn) + 1.0);
}

namespace detail {

// Column-equilibrated, column-pivoted QR of a design matrix.
struct ScaledQr {
  Eigen::VectorXd scale;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

inline ScaledQr scaled_qr(const Design& d) {
  ScaledQr s;
  s.scale = d.x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
    if (s.scale(j) == 0.0) s.scale(j) = 1.0;
  }
  Eigen::MatrixXd xs = d.x * s.scale.cwiseInverse().asDiagonal();
  s.qr.setThreshold(1e-10);
  s.qr.compute(xs);
  if (s.qr.rank() < xs.cols()) {
    std::vector<std::string> collinear;
    const auto& perm = s.qr.colsPermutation().indices();
    for (Eigen::Index k = s.qr.rank(); k < perm.size(); ++k) collinear.push_back(d.columns[static_cast<std::size_t>(perm(k))]);
    std::sort(collinear.begin(), collinear.end());
    throw SingularDesignError(std::move(collinear));
  }
  return s;
}

}  // namespace detail

inline OlsFit fit_ols(const Design& d, const Eigen::VectorXd& y) {
  const auto n = static_cast<std::size_t>(d.x.rows());
  const auto p = static_cast<std::size_t>(d.x.cols());
  if (static_cast<std::size_t>(y.size()) != n) throw Error("fit_ols: response length differs from design rows");
  if (n <= p) {
    throw InsufficientDataError("fit_ols: need more rows than columns (n=" + std::to_string(n) +
                                ", p=" + std::to_string(p) + ")");
  }
  auto s = detail::scaled_qr(d);
  Eigen::VectorXd beta = s.qr.solve(y).cwiseQuotient(s.scale);
  Eigen::VectorXd resid = y - d.x * beta;

  OlsFit f;
  f.coefficients.assign(beta.data(), beta.data() + beta.size());
  f.columns = d.columns;
  f.rss = resid.squaredNorm();
  f.n = n;
  f.p = p;
  // Residuals at rounding level of the response count as an exact fit.
  const double exact_fit_floor = 1e-24 * std::max(1.0, y.squaredNorm());
  f.loglik = f.rss <= exact_fit_floor ? std::numeric_limits<double>::infinity() : gaussian_loglik(f.rss, n);
  return f;
}

inline OlsFit fit_ols(std::span<const FeatureRow> rows, bool include_interest, bool interaction = false) {
  return fit_ols(spillover_design(rows, {include_interest, interaction}), response(rows));
}

inline void check_nested(const OlsFit& base, const OlsFit& full) {
  if (base.n != full.n) throw Error("nested fits use different rows (" + std::to_string(base.n) + " vs " + std::to_string(full.n) + ")");
  if (full.p != base.p + 1) throw Error("full model must have exactly one more column than the baseline");
  if (base.is_degenerate() || full.is_degenerate()) throw DegenerateFitError("exact fit: log-likelihood is undefined");
}

// Per-token log-likelihood gain of the full model over the baseline, in nats.
inline double ppp(const OlsFit& base, const OlsFit& full) {
  check_nested(base, full);
  return (full.loglik - base.loglik) / static_cast<double>(full.n);
}

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline TestResult f_test_nested(const OlsFit& base, const OlsFit& full) {
  check_nested(base, full);
  const double df2 = static_cast<double>(full.n - full.p);
  const double gain = std::max(0.0, base.rss - full.rss);
  TestResult r;
  r.statistic = gain / (full.rss / df2);
  r.p_value = dist::f_upper_tail(r.statistic, 1.0, df2);
  return r;
}

// t = beta_j / se_j, se from (rss/(n-p)) (X'X)^-1, two-sided p on n-p df.
inline TestResult coeff_t_test(const OlsFit& fit, std::size_t column, const Design& design) {
  if (column >= fit.p) throw Error("coeff_t_test: column index out of range");
  if (static_cast<std::size_t>(design.x.cols()) != fit.p || static_cast<std::size_t>(design.x.rows()) != fit.n) {
    throw Error("coeff_t_test: design does not match the fit");
  }
  if (fit.is_degenerate()) throw DegenerateFitError("exact fit: coefficient standard errors are zero");
  auto s = detail::scaled_qr(design);
  const auto p = static_cast<Eigen::Index>(fit.p);
  // X D^-1 P = Q R  =>  (X'X)^-1 = D^-1 P R^-1 R^-T P' D^-1
  Eigen::MatrixXd r = s.qr.matrixR().topLeftCorner(p, p).template triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto& perm = s.qr.colsPermutation().indices();
  Eigen::Index k = 0;
  while (perm(k) != static_cast<Eigen::Index>(column)) ++k;
  const double unscaled = rinv.row(k).squaredNorm();
  const double xtx_inv = unscaled / (s.scale(static_cast<Eigen::Index>(column)) * s.scale(static_cast<Eigen::Index>(column)));
  const double sigma2 = fit.rss / static_cast<double>(fit.n - fit.p);
  const double se = std::sqrt(sigma2 * xtx_inv);
  const double beta = fit.coefficients[column];
  TestResult t;
  if (beta == 0.0) {
    t.statistic = 0.0;
    t.p_value = 1.0;
    return t;
  }
  t.statistic = beta / se;
  t.p_value = dist::t_two_sided(t.statistic, static_cast<double>(fit.n - fit.p));
  return t;
}

struct FitResult {
  OlsFit base;
  OlsFit full;
  double ppp_per_token = 0.0;  // nats/token
  double ppp_milli = 0.0;      // 1000 x ppp_per_token
  double f_statistic = 0.0;
  double f_p_value = 1.0;
  double coeff_t = 0.0;
  double coeff_t_p_value = 1.0;
  std::string metric_name;
  std::string model_id;
  std::string prompt_id;
};

// Fits the baseline and full spillover models on the same rows and runs
// every comparison between them.
inline FitResult fit_nested(std::span<const FeatureRow> rows, bool interaction = false) {
  FitResult r;
  auto base_design = spillover_design(rows, {false, interaction});
  auto full_design = spillover_design(rows, {true, interaction});
  auto y = response(rows);
  r.base = fit_ols(base_design, y);
  r.full = fit_ols(full_design, y);
  r.ppp_per_token = ppp(r.base, r.full);
  r.ppp_milli = 1000.0 * r.ppp_per_token;
  auto f = f_test_nested(r.base, r.full);
  r.f_statistic = f.statistic;
  r.f_p_value = f.p_value;
  auto t = coeff_t_test(r.full, 1, full_design);
  r.coeff_t = t.statistic;
  r.coeff_t_p_value = t.p_value;
  return r;
}

}  // namespace ppp
