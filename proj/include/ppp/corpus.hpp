#pragma once

// Reading-time corpora: loading, subject averaging, exclusion rules and
// lexical covariates (log frequency, word length).

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "ppp/error.hpp"
#include "ppp/text.hpp"

namespace ppp {

struct TokenKey {
  std::string doc_id;
  std::int64_t sent_id = 0;
  std::int64_t word_idx = 0;

  auto operator<=>(const TokenKey&) const = default;
  bool operator==(const TokenKey&) const = default;

  std::string str() const { return doc_id + ":" + std::to_string(sent_id) + ":" + std::to_string(word_idx); }
};

struct SentenceKey {
  std::string doc_id;
  std::int64_t sent_id = 0;

  auto operator<=>(const SentenceKey&) const = default;
  bool operator==(const SentenceKey&) const = default;

  std::string str() const { return doc_id + ":" + std::to_string(sent_id); }
};

inline SentenceKey sentence_of(const TokenKey& k) { return {k.doc_id, k.sent_id}; }

struct TokenRecord {
  TokenKey key;
  std::string surface;
  double rt_ms = 0.0;
  bool is_sent_initial = false;
  bool is_sent_final = false;
};

struct SubjectReading {
  std::string subject_id;
  TokenKey key;
  std::string surface;
  double rt_ms = 0.0;
};

enum class CorpusLayout { averaged, per_subject };

struct FilterPolicy {
  bool drop_zero = true;
  double sd_multiplier = 3.0;
  bool drop_sent_initial = true;
  bool drop_sent_final = true;
};

struct FilterSummary {
  std::size_t n_input = 0;
  std::size_t n_zero = 0;
  std::size_t n_sd = 0;
  std::size_t n_initial = 0;
  std::size_t n_final = 0;
  std::size_t n_output = 0;
  // Corpus-wide statistics of the post-zero-removal RTs used by the SD rule.
  double mean = 0.0;
  double sd = 0.0;
  bool all_filtered = false;

  std::string str() const {
    std::ostringstream os;
    os << "n_input=" << n_input << " n_zero=" << n_zero << " n_sd=" << n_sd << " n_initial=" << n_initial
       << " n_final=" << n_final << " n_output=" << n_output << " mean=" << text::format_real(mean)
       << " sd=" << text::format_real(sd) << " sd_scope=corpus";
    if (all_filtered) os << " warning=all_rows_filtered";
    return os.str();
  }
};

struct FilterResult {
  std::vector<TokenRecord> tokens;
  FilterSummary summary;
};

// Sets is_sent_initial / is_sent_final from word_idx and per-sentence maxima
// and sorts by key. Throws on duplicate keys.
inline void finalize_tokens(std::vector<TokenRecord>& tokens, const std::string& origin = "corpus") {
  std::stable_sort(tokens.begin(), tokens.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i].key == tokens[i - 1].key) throw Error(origin + ": duplicate token key " + tokens[i].key.str());
  }
  std::map<SentenceKey, std::int64_t> last;
  for (const auto& t : tokens) {
    auto& m = last.try_emplace(sentence_of(t.key), t.key.word_idx).first->second;
    m = std::max(m, t.key.word_idx);
  }
  for (auto& t : tokens) {
    t.is_sent_initial = t.key.word_idx == 0;
    t.is_sent_final = last.at(sentence_of(t.key)) == t.key.word_idx;
  }
}

namespace detail {

struct CorpusColumns {
  std::size_t doc, sent, word_idx, word, rt;
};

inline CorpusColumns corpus_columns(const text::TsvReader& r) {
  return {r.require_column("doc_id"), r.require_column("sent_id"), r.require_column("word_idx"),
          r.require_column("word"), r.require_column("rt_ms")};
}

inline TokenKey parse_key(const text::TsvReader& r, const std::vector<std::string>& f, const CorpusColumns& c) {
  auto sent = text::parse_int(f[c.sent]);
  auto widx = text::parse_int(f[c.word_idx]);
  if (!sent || *sent < 0) r.fail("sent_id is not a nonnegative integer: '" + f[c.sent] + "'");
  if (!widx || *widx < 0) r.fail("word_idx is not a nonnegative integer: '" + f[c.word_idx] + "'");
  auto doc = text::trim(f[c.doc]);
  if (doc.empty()) r.fail("empty doc_id");
  return {std::string(doc), *sent, *widx};
}

inline double parse_rt(const text::TsvReader& r, const std::string& field) {
  auto v = text::parse_double(field);
  if (!v || !std::isfinite(*v) || *v < 0.0) r.fail("rt_ms is not a finite nonnegative number: '" + field + "'");
  return *v;
}

}  // namespace detail

inline std::vector<TokenRecord> load_averaged_corpus(const std::string& path) {
  std::vector<TokenRecord> out;
  text::TsvReader r(path);
  if (!r.has_header()) return out;
  auto c = detail::corpus_columns(r);
  std::set<TokenKey> seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    TokenRecord t;
    t.key = detail::parse_key(r, f, c);
    t.surface = std::string(text::trim(f[c.word]));
    t.rt_ms = detail::parse_rt(r, f[c.rt]);
    if (!seen.insert(t.key).second) r.fail("duplicate token key " + t.key.str());
    out.push_back(std::move(t));
  }
  finalize_tokens(out, path);
  return out;
}

inline std::vector<SubjectReading> load_per_subject_corpus(const std::string& path) {
  std::vector<SubjectReading> out;
  text::TsvReader r(path);
  if (!r.has_header()) return out;
  auto c = detail::corpus_columns(r);
  auto subj = r.require_column("subject_id");
  std::set<std::pair<std::string, TokenKey>> seen;
  std::vector<std::string> f;
  while (r.next(f)) {
    SubjectReading s;
    s.subject_id = std::string(text::trim(f[subj]));
    if (s.subject_id.empty()) r.fail("empty subject_id");
    s.key = detail::parse_key(r, f, c);
    s.surface = std::string(text::trim(f[c.word]));
    s.rt_ms = detail::parse_rt(r, f[c.rt]);
    if (!seen.emplace(s.subject_id, s.key).second) {
      r.fail("subject " + s.subject_id + " has two readings for " + s.key.str());
    }
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.key, a.subject_id) < std::tie(b.key, b.subject_id);
  });
  return out;
}

using LoadedCorpus = std::variant<std::vector<TokenRecord>, std::vector<SubjectReading>>;

inline LoadedCorpus load_rt_corpus(const std::string& path, CorpusLayout layout) {
  if (layout == CorpusLayout::averaged) return load_averaged_corpus(path);
  return load_per_subject_corpus(path);
}

// Detects the layout from the presence of a subject_id column.
inline CorpusLayout detect_layout(const std::string& path) {
  text::TsvReader r(path);
  return r.column("subject_id") ? CorpusLayout::per_subject : CorpusLayout::averaged;
}

// Arithmetic mean RT per token key over the subjects that read it.
// Result does not depend on the order of `readings`.
inline std::vector<TokenRecord> average_subjects(const std::vector<SubjectReading>& readings) {
  if (readings.empty()) throw DomainError("average_subjects: no readings");
  struct Acc {
    std::vector<std::pair<std::string, double>> by_subject;
    std::string surface;
  };
  std::map<TokenKey, Acc> acc;
  for (const auto& r : readings) {
    auto& a = acc[r.key];
    if (a.by_subject.empty()) a.surface = r.surface;
    if (a.surface != r.surface) {
      throw Error("average_subjects: surface mismatch at " + r.key.str() + ": '" + a.surface + "' vs '" +
                  r.surface + "'");
    }
    a.by_subject.emplace_back(r.subject_id, r.rt_ms);
  }
  std::vector<TokenRecord> out;
  out.reserve(acc.size());
  for (auto& [key, a] : acc) {
    // Fixed summation order keeps the mean bit-identical under input permutation.
    std::sort(a.by_subject.begin(), a.by_subject.end());
    double sum = 0.0;
    for (const auto& [subject, rt] : a.by_subject) sum += rt;
    out.push_back({key, a.surface, sum / static_cast<double>(a.by_subject.size()), false, false});
  }
  finalize_tokens(out);
  return out;
}

// Zero removal, then one corpus-wide |rt - mean| > k*SD pass (sample SD over
// the zero-free rows), then sentence-boundary removal. Order is preserved.
inline FilterResult filter_tokens(const std::vector<TokenRecord>& tokens, const FilterPolicy& policy) {
  if (!(policy.sd_multiplier > 0.0)) throw DomainError("filter_tokens: sd_multiplier must be positive");
  FilterResult res;
  auto& s = res.summary;
  s.n_input = tokens.size();

  std::vector<const TokenRecord*> nonzero;
  nonzero.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (!std::isfinite(t.rt_ms)) throw DomainError("filter_tokens: non-finite rt at " + t.key.str());
    if (policy.drop_zero && t.rt_ms == 0.0) {
      ++s.n_zero;
      continue;
    }
    nonzero.push_back(&t);
  }

  if (!nonzero.empty()) {
    double sum = 0.0;
    for (const auto* t : nonzero) sum += t->rt_ms;
    s.mean = sum / static_cast<double>(nonzero.size());
    if (nonzero.size() > 1) {
      double ss = 0.0;
      for (const auto* t : nonzero) ss += (t->rt_ms - s.mean) * (t->rt_ms - s.mean);
      s.sd = std::sqrt(ss / static_cast<double>(nonzero.size() - 1));
    }
  }
  const double cutoff = policy.sd_multiplier * s.sd;

  for (const auto* t : nonzero) {
    if (std::abs(t->rt_ms - s.mean) > cutoff && s.sd > 0.0) {
      ++s.n_sd;
    } else if (policy.drop_sent_initial && t->is_sent_initial) {
      ++s.n_initial;
    } else if (policy.drop_sent_final && t->is_sent_final) {
      ++s.n_final;
    } else {
      res.tokens.push_back(*t);
    }
  }
  s.n_output = res.tokens.size();
  s.all_filtered = s.n_output == 0;
  return res;
}

struct FreqTable {
  std::unordered_map<std::string, std::uint64_t> counts;  // keys lowercased
  std::uint64_t total = 1;
  std::uint64_t smoothing_floor = 1;
};

inline FreqTable make_freq_table(const std::vector<std::pair<std::string, std::uint64_t>>& entries,
                                 std::uint64_t smoothing_floor = 1) {
  if (smoothing_floor == 0) throw DomainError("frequency smoothing floor must be positive");
  FreqTable t;
  t.smoothing_floor = smoothing_floor;
  std::uint64_t sum = 0;
  for (const auto& [w, c] : entries) {
    t.counts[text::to_lower(w)] += c;
    sum += c;
  }
  t.total = std::max<std::uint64_t>(sum, 1);
  return t;
}

// `word<TAB>count` per line; an optional header row is recognised by a
// non-numeric count field on the first line.
inline FreqTable load_freq_table(const std::string& path, std::uint64_t smoothing_floor = 1) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto f = text::split(line, '\t');
    if (f.size() != 2) throw ParseError(path, line_no, "expected 'word<TAB>count'");
    auto c = text::parse_int(f[1]);
    if (!c) {
      if (entries.empty() && line_no == 1) continue;
      throw ParseError(path, line_no, "count is not an integer: '" + std::string(f[1]) + "'");
    }
    if (*c < 0) throw ParseError(path, line_no, "negative count");
    entries.emplace_back(std::string(text::trim(f[0])), static_cast<std::uint64_t>(*c));
  }
  return make_freq_table(entries, smoothing_floor);
}

// ln(max(count(lowercase(surface)), floor)).
inline double log_frequency(const FreqTable& table, std::string_view surface) {
  auto it = table.counts.find(text::to_lower(surface));
  std::uint64_t c = it == table.counts.end() ? 0 : it->second;
  return std::log(static_cast<double>(std::max(c, table.smoothing_floor)));
}

struct WordLengthOptions {
  // Characters removed from the end of a word before counting; empty keeps
  // punctuation attached.
  std::string strip_trailing;
};

inline std::size_t word_length(std::string_view surface, const WordLengthOptions& opts = {}) {
  if (!opts.strip_trailing.empty()) {
    while (!surface.empty() && opts.strip_trailing.find(surface.back()) != std::string::npos) {
      surface.remove_suffix(1);
    }
  }
  return text::utf8_length(surface);
}

// One word per line, lowercased.
inline std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto w = text::trim(line);
    if (!w.empty() && w.front() != '#') out.insert(text::to_lower(w));
  }
  return out;
}

}  // namespace ppp
