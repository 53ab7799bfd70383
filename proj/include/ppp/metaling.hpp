#pragma once

// Scoring of metalinguistic prompting: a model is asked to list the words of
// a sentence (as `id: token` pairs) by processing cost or by probability, and
// the listed order is rank-correlated against reading times or surprisal.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ppp/corpus.hpp"
#include "ppp/error.hpp"
#include "ppp/stats.hpp"
#include "ppp/text.hpp"

namespace ppp::metaling {

namespace detail {

struct Marker {
  std::size_t begin;  // first digit
  std::size_t end;    // one past ':'
  std::size_t id;
};

// `<digits>:` at the start of the text or after whitespace or a comma.
inline std::vector<Marker> find_markers(std::string_view raw) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(raw[i]))) continue;
    if (i > 0 && !text::is_space(raw[i - 1]) && raw[i - 1] != ',') continue;
    std::size_t j = i;
    while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j]))) ++j;
    if (j >= raw.size() || raw[j] != ':' || j - i > 9) {
      i = j;
      continue;
    }
    out.push_back({i, j + 1, static_cast<std::size_t>(std::stoull(std::string(raw.substr(i, j - i))))});
    i = j;
  }
  return out;
}

}  // namespace detail

// Extracts `id: token` pairs in emission order. A pair survives when the id
// is inside the sentence and the token text equals the sentence word at that
// id; later repeats of an id are ignored. The ", " list separator is peeled
// off before comparison, so words that end in a comma ("sea,") still match.
inline std::vector<std::size_t> parse_ranking_response(std::string_view raw,
                                                       std::span<const std::string> sentence_tokens) {
  if (sentence_tokens.empty()) throw DomainError("parse_ranking_response: empty sentence");
  auto markers = detail::find_markers(raw);
  std::vector<std::size_t> out;
  std::vector<bool> used(sentence_tokens.size(), false);
  for (std::size_t m = 0; m < markers.size(); ++m) {
    const auto& mk = markers[m];
    const std::size_t stop = m + 1 < markers.size() ? markers[m + 1].begin : raw.size();
    auto emitted = text::trim(raw.substr(mk.end, stop - mk.end));
    if (mk.id >= sentence_tokens.size() || used[mk.id]) continue;
    const auto expected = text::trim(sentence_tokens[mk.id]);
    bool match = emitted == expected;
    if (!match && emitted.ends_with(',')) match = text::trim(emitted.substr(0, emitted.size() - 1)) == expected;
    if (!match) continue;
    used[mk.id] = true;
    out.push_back(mk.id);
  }
  return out;
}

struct SentenceRanking {
  SentenceKey sentence;
  int run_id = 0;
  std::vector<std::size_t> parsed;  // word indices, highest cost (or lowest probability) first
};

// Per-sentence gold values by word index; NaN marks a word without a value.
using GoldValues = std::map<SentenceKey, std::vector<double>>;

struct MetalingResult {
  double mean_rho = std::numeric_limits<double>::quiet_NaN();
  double sd_rho = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_sentences = 0;  // distinct sentences scored in at least one run
  std::size_t n_runs = 0;       // runs with at least one scored sentence
  std::optional<std::size_t> first_k;
  std::size_t n_skipped = 0;  // (sentence, run) pairs with fewer than 2 comparable words or all-tied values
};

namespace detail {

// Spearman between listed position (earlier = larger predicted value) and
// gold, over listed words that have a gold value. nullopt when undefined.
inline std::optional<double> ranking_rho(std::span<const std::size_t> parsed, const std::vector<double>& gold,
                                         std::optional<std::size_t> first_k) {
  std::size_t limit = parsed.size();
  if (first_k) limit = std::min(limit, *first_k);
  std::vector<double> predicted, observed;
  for (std::size_t pos = 0; pos < limit; ++pos) {
    const auto idx = parsed[pos];
    if (idx >= gold.size() || std::isnan(gold[idx])) continue;
    predicted.push_back(-static_cast<double>(pos));
    observed.push_back(gold[idx]);
  }
  if (predicted.size() < 2) return std::nullopt;
  try {
    return stats::spearman(predicted, observed);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

// Sentence-mean rho per run, then mean and population SD across runs.
inline MetalingResult score_rankings(std::span<const SentenceRanking> rankings, const GoldValues& gold,
                                     std::optional<std::size_t> first_k = std::nullopt) {
  std::map<int, std::map<SentenceKey, const SentenceRanking*>> by_run;
  for (const auto& r : rankings) {
    if (!by_run[r.run_id].emplace(r.sentence, &r).second) {
      throw Error("duplicate ranking for sentence " + r.sentence.str() + " in run " + std::to_string(r.run_id));
    }
  }
  MetalingResult res;
  res.first_k = first_k;
  std::set<SentenceKey> scored;
  std::vector<double> run_means;
  for (const auto& [run, sentences] : by_run) {
    std::vector<double> rhos;
    for (const auto& [key, r] : sentences) {
      auto g = gold.find(key);
      std::optional<double> rho;
      if (g != gold.end()) rho = detail::ranking_rho(r->parsed, g->second, first_k);
      if (!rho) {
        ++res.n_skipped;
        continue;
      }
      rhos.push_back(*rho);
      scored.insert(key);
    }
    if (!rhos.empty()) run_means.push_back(detail::mean(rhos));
  }
  res.n_sentences = scored.size();
  res.n_runs = run_means.size();
  if (run_means.empty()) return res;
  res.mean_rho = detail::mean(run_means);
  double ss = 0.0;
  for (double m : run_means) ss += (m - res.mean_rho) * (m - res.mean_rho);
  res.sd_rho = std::sqrt(ss / static_cast<double>(run_means.size()));
  return res;
}

// Cost rankings against reading times (higher cost listed first).
inline MetalingResult score_against_rt(std::span<const SentenceRanking> rankings, const GoldValues& rts,
                                       std::optional<std::size_t> first_k = std::nullopt) {
  return score_rankings(rankings, rts, first_k);
}

// Probability rankings (lowest probability listed first) against surprisal.
inline MetalingResult metacognition_eval(std::span<const SentenceRanking> rankings, const GoldValues& surprisal,
                                         std::optional<std::size_t> first_k = std::nullopt) {
  return score_rankings(rankings, surprisal, first_k);
}

struct BaselineResult {
  double mean_rho = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_sentences = 0;
  std::size_t n_skipped = 0;
};

// Mean per-sentence Spearman between surprisal and reading time.
inline BaselineResult surprisal_rank_baseline(const GoldValues& surprisal, const GoldValues& rts) {
  BaselineResult res;
  std::vector<double> rhos;
  for (const auto& [key, s] : surprisal) {
    auto rt = rts.find(key);
    if (rt == rts.end()) {
      ++res.n_skipped;
      continue;
    }
    std::vector<double> a, b;
    for (std::size_t i = 0; i < std::min(s.size(), rt->second.size()); ++i) {
      if (std::isnan(s[i]) || std::isnan(rt->second[i])) continue;
      a.push_back(s[i]);
      b.push_back(rt->second[i]);
    }
    std::optional<double> rho;
    if (a.size() >= 2) {
      try {
        rho = stats::spearman(a, b);
      } catch (const DomainError&) {
      }
    }
    if (!rho) {
      ++res.n_skipped;
      continue;
    }
    rhos.push_back(*rho);
  }
  res.n_sentences = rhos.size();
  if (!rhos.empty()) res.mean_rho = detail::mean(rhos);
  return res;
}

enum class PromptTemplate { cost, probability };

inline std::string_view to_string(PromptTemplate t) { return t == PromptTemplate::cost ? "cost" : "probability"; }

inline PromptTemplate parse_prompt_template(std::string_view s) {
  if (s == "cost") return PromptTemplate::cost;
  if (s == "probability") return PromptTemplate::probability;
  throw Error("unknown prompt template '" + std::string(s) + "' (expected cost|probability)");
}

struct Transcript {
  SentenceKey sentence;
  int run_id = 0;
  std::string raw_text;
  std::string model_id;
  std::string prompt_id;
  PromptTemplate template_kind = PromptTemplate::cost;
};

// JSON Lines of {"sent_key": {"doc_id":..,"sent_id":..} | [doc_id, sent_id],
// "run_id": int, "raw_text": str}. An optional first line without raw_text
// supplies defaults for model_id, prompt_id and template; records may
// override them.
inline std::vector<Transcript> load_transcripts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<Transcript> out;
  std::string model_id = "unknown", prompt_id = "none";
  PromptTemplate kind = PromptTemplate::cost;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  auto str_field = [&](const nlohmann::json& j, const char* name, std::string fallback) {
    auto it = j.find(name);
    if (it == j.end()) return fallback;
    if (!it->is_string()) throw ParseError(path, line_no, std::string("field '") + name + "' must be a string");
    return it->get<std::string>();
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(path, line_no, "expected a JSON object");
    if (first && !j.contains("raw_text")) {
      model_id = str_field(j, "model_id", model_id);
      prompt_id = str_field(j, "prompt_id", prompt_id);
      if (j.contains("template")) kind = parse_prompt_template(str_field(j, "template", "cost"));
      first = false;
      continue;
    }
    first = false;
    Transcript t;
    auto sk = j.find("sent_key");
    if (sk == j.end()) throw ParseError(path, line_no, "missing sent_key");
    try {
      if (sk->is_array() && sk->size() == 2) {
        t.sentence.doc_id = (*sk)[0].is_string() ? (*sk)[0].get<std::string>() : (*sk)[0].dump();
        t.sentence.sent_id = (*sk)[1].get<std::int64_t>();
      } else if (sk->is_object()) {
        const auto& d = sk->at("doc_id");
        t.sentence.doc_id = d.is_string() ? d.get<std::string>() : d.dump();
        t.sentence.sent_id = sk->at("sent_id").get<std::int64_t>();
      } else {
        throw ParseError(path, line_no, "sent_key must be [doc_id, sent_id] or {doc_id, sent_id}");
      }
      auto run = j.find("run_id");
      if (run == j.end()) throw ParseError(path, line_no, "missing run_id");
      t.run_id = run->get<int>();
      t.raw_text = j.at("raw_text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, line_no, std::string("malformed transcript: ") + e.what());
    }
    t.model_id = str_field(j, "model_id", model_id);
    t.prompt_id = str_field(j, "prompt_id", prompt_id);
    t.template_kind = j.contains("template") ? parse_prompt_template(str_field(j, "template", "cost")) : kind;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace ppp::metaling
