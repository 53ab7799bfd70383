#pragma once

// Information-theoretic word measures in bits: surprisal, Shannon entropy,
// Rényi entropy; subword-to-word aggregation, corpus perplexity, and
// alignment of score dumps to corpus words.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppp/corpus.hpp"
#include "ppp/error.hpp"
#include "ppp/text.hpp"

namespace ppp {

inline constexpr double kLn2 = std::numbers::ln2;

// Nonempty, nonnegative, sums to 1 within `tolerance`.
class ProbabilityVector {
 public:
  static constexpr double tolerance = 1e-6;

  explicit ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw DomainError("probability vector is empty");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("probability vector has a negative or non-finite entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw DomainError("probability vector sums to " + text::format_real(sum) + ", not 1");
    }
  }

  std::span<const double> probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }

 private:
  std::vector<double> probs_;
};

inline double surprisal_bits(double logprob_nat) {
  if (!std::isfinite(logprob_nat) || logprob_nat > 0.0) {
    throw DomainError("surprisal_bits: log-probability must be finite and <= 0, got " + text::format_real(logprob_nat));
  }
  return -logprob_nat / kLn2;
}

// Entries are renormalised by their (tolerated) sum before use.
inline double shannon_entropy(const ProbabilityVector& p) {
  double mass = 0.0;
  for (double pi : p.probs()) mass += pi;
  double h = 0.0;
  for (double pi : p.probs()) {
    if (pi > 0.0) {
      const double q = pi / mass;
      h -= q * std::log2(q);
    }
  }
  return h < 0.0 ? 0.0 : h;
}

// H_a = log2(sum q^a) / (1 - a), with sum q^a = 1 + sum q*expm1((a-1) ln q)
// so the value stays accurate as a approaches 1. Within 1e-6 of 1 the
// Shannon limit is returned.
inline double renyi_entropy(const ProbabilityVector& p, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw DomainError("renyi_entropy: alpha must be positive and finite, got " + text::format_real(alpha));
  }
  const double d = alpha - 1.0;
  if (std::abs(d) < 1e-6) return shannon_entropy(p);
  double mass = 0.0;
  for (double pi : p.probs()) mass += pi;
  double excess = 0.0;
  for (double pi : p.probs()) {
    if (pi > 0.0) {
      const double q = pi / mass;
      excess += q * std::expm1(d * std::log(q));
    }
  }
  double log_sum;
  if (excess > -0.5) {
    log_sum = std::log1p(excess);
  } else {
    // sum q^alpha is small; log1p would cancel, so take logs directly
    double top = -INFINITY;
    for (double pi : p.probs()) {
      if (pi > 0.0) top = std::max(top, alpha * std::log(pi / mass));
    }
    double acc = 0.0;
    for (double pi : p.probs()) {
      if (pi > 0.0) acc += std::exp(alpha * std::log(pi / mass) - top);
    }
    log_sum = top + std::log(acc);
  }
  const double h = log_sum / (-d) / kLn2;
  return h < 0.0 ? 0.0 : h;
}

struct SubwordScore {
  std::string piece;
  double logprob_nat = 0.0;
  std::optional<double> shannon_nat;
  std::map<double, double> renyi_nat;  // alpha -> entropy; empty when not dumped
};

struct ScoreDumpRecord {
  TokenKey key;
  std::string surface;
  std::string model_id;
  std::string prompt_id = "none";
  std::vector<SubwordScore> subwords;
  std::optional<double> dep_len;
};

struct WordMetrics {
  TokenKey key;
  double surprisal_bits = 0.0;
  std::optional<double> shannon_bits;
  std::map<double, double> renyi_bits;
};

enum class EntropyPolicy { sum, first_subword };

inline std::string_view to_string(EntropyPolicy p) { return p == EntropyPolicy::sum ? "sum" : "first_subword"; }

inline EntropyPolicy parse_entropy_policy(std::string_view s) {
  if (s == "sum") return EntropyPolicy::sum;
  if (s == "first_subword") return EntropyPolicy::first_subword;
  throw Error("unknown entropy policy '" + std::string(s) + "' (expected sum|first_subword)");
}

// Word surprisal is the cumulative subword surprisal. Log-probabilities are
// summed in nats and converted once, so any two segmentations with equal
// word-level sums give identical bits.
inline WordMetrics aggregate_word(const ScoreDumpRecord& rec, EntropyPolicy policy = EntropyPolicy::sum) {
  if (rec.subwords.empty()) throw DomainError("record " + rec.key.str() + " has no subwords");
  WordMetrics w;
  w.key = rec.key;
  double lp = 0.0;
  for (const auto& s : rec.subwords) {
    if (!std::isfinite(s.logprob_nat) || s.logprob_nat > 0.0) {
      throw DomainError("record " + rec.key.str() + ": subword log-probability must be finite and <= 0");
    }
    lp += s.logprob_nat;
  }
  w.surprisal_bits = lp == 0.0 ? 0.0 : -lp / kLn2;

  std::span<const SubwordScore> used(rec.subwords);
  if (policy == EntropyPolicy::first_subword) used = used.first(1);

  bool all_shannon = true;
  double shannon = 0.0;
  for (const auto& s : used) {
    if (!s.shannon_nat) {
      all_shannon = false;
      break;
    }
    shannon += *s.shannon_nat;
  }
  if (all_shannon) w.shannon_bits = shannon / kLn2;

  for (const auto& [alpha, first_value] : used.front().renyi_nat) {
    double total = 0.0;
    bool complete = true;
    for (const auto& s : used) {
      auto it = s.renyi_nat.find(alpha);
      if (it == s.renyi_nat.end()) {
        complete = false;
        break;
      }
      total += it->second;
    }
    if (complete) w.renyi_bits[alpha] = total / kLn2;
  }
  return w;
}

// 2 ^ mean surprisal over the supplied words.
inline double corpus_ppl(std::span<const double> surprisals_bits) {
  if (surprisals_bits.empty()) throw DomainError("corpus_ppl: no words");
  double sum = 0.0;
  for (double s : surprisals_bits) sum += s;
  return std::exp2(sum / static_cast<double>(surprisals_bits.size()));
}

inline double corpus_ppl(std::span<const WordMetrics> words) {
  std::vector<double> s;
  s.reserve(words.size());
  for (const auto& w : words) s.push_back(w.surprisal_bits);
  return corpus_ppl(std::span<const double>(s));
}

// Predictor family used in a regression cell.
struct Metric {
  enum class Kind { surprisal, shannon, renyi };
  Kind kind = Kind::surprisal;
  double alpha = 0.5;

  static Metric surprisal() { return {Kind::surprisal, 0.0}; }
  static Metric shannon() { return {Kind::shannon, 1.0}; }
  static Metric renyi(double a) { return {Kind::renyi, a}; }

  std::string name() const {
    switch (kind) {
      case Kind::surprisal: return "surprisal";
      case Kind::shannon: return "shannon";
      case Kind::renyi: return "renyi_" + text::format_real(alpha);
    }
    return {};
  }

  std::optional<double> value(const WordMetrics& w) const {
    switch (kind) {
      case Kind::surprisal: return w.surprisal_bits;
      case Kind::shannon: return w.shannon_bits;
      case Kind::renyi: {
        auto it = w.renyi_bits.find(alpha);
        if (it == w.renyi_bits.end()) return std::nullopt;
        return it->second;
      }
    }
    return std::nullopt;
  }

  bool operator==(const Metric& o) const {
    return kind == o.kind && (kind != Kind::renyi || alpha == o.alpha);
  }
};

inline Metric parse_metric(std::string_view s) {
  if (s == "surprisal") return Metric::surprisal();
  if (s == "shannon") return Metric::shannon();
  if (s.starts_with("renyi_")) {
    auto a = text::parse_double(s.substr(6));
    if (a && *a > 0.0) return Metric::renyi(*a);
  }
  throw Error("unknown metric '" + std::string(s) + "' (expected surprisal|shannon|renyi_<alpha>)");
}

struct AlignedWord {
  TokenRecord token;
  WordMetrics metrics;
};

// Inner join of dump records onto corpus tokens, in token order. Every
// corpus token must be covered; extra dump records are ignored.
inline std::vector<AlignedWord> align_dump(std::span<const ScoreDumpRecord> dump, std::span<const TokenRecord> tokens,
                                           EntropyPolicy policy = EntropyPolicy::sum) {
  std::map<TokenKey, const ScoreDumpRecord*> by_key;
  for (const auto& r : dump) by_key.emplace(r.key, &r);

  std::vector<std::string> missing;
  for (const auto& t : tokens) {
    if (!by_key.contains(t.key)) missing.push_back(t.key.str());
  }
  if (!missing.empty()) throw CoverageError(std::move(missing));

  std::vector<AlignedWord> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto& rec = *by_key.at(t.key);
    if (text::normalize_space(rec.surface) != text::normalize_space(t.surface)) {
      throw AlignmentError("surface mismatch at " + t.key.str() + ": corpus '" + t.surface + "' vs dump '" +
                           rec.surface + "'");
    }
    out.push_back({t, aggregate_word(rec, policy)});
  }
  return out;
}

}  // namespace ppp
