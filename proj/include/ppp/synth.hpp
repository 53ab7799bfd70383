#pragma once

// Seeded synthetic corpora for end-to-end checks. A stub language model
// draws a random next-piece distribution at every subword position; the
// realised piece's log-probability and the distribution's entropies go into
// the score dump, and reading times are generated as
//
//   rt = 150 + 10 h_t + 4 h_{t-1} + 2 h_{t-2} + 3 len_t - 2 freq_t + noise
//
// where h is word surprisal in bits. In null mode the h driving reading
// times comes from an independent second draw, so the dumped values carry no
// signal about reading times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ppp/corpus.hpp"
#include "ppp/metrics.hpp"
#include "ppp/score_dump.hpp"

namespace ppp::synth {

struct SynthOptions {
  std::size_t n_words = 2000;
  std::uint64_t seed = 1;
  bool null_signal = false;
  std::size_t vocabulary = 32;  // stub next-piece vocabulary size
  std::size_t lexicon = 300;    // distinct word types
  std::size_t min_sentence = 8;
  std::size_t max_sentence = 16;
  std::size_t sentences_per_doc = 10;
  double noise_sd = 25.0;
  // > 0 emits per-subject readings with extra subject-level noise.
  std::size_t subjects = 0;
  double subject_sd = 30.0;
  std::vector<double> renyi_alphas{0.5};
  std::string model_id = "stub-lm";
};

struct SynthCorpus {
  std::vector<TokenRecord> tokens;
  std::vector<SubjectReading> readings;  // empty unless subjects > 0
  ScoreDump dump;
  std::vector<std::pair<std::string, std::uint64_t>> frequencies;
  std::vector<double> true_surprisal;  // bits, per token, the h that drives rt
};

namespace detail {

struct StubDraw {
  double logprob_nat = 0.0;
  double shannon_nat = 0.0;
  std::map<double, double> renyi_nat;
};

inline StubDraw stub_position(std::mt19937_64& rng, const SynthOptions& o) {
  std::uniform_real_distribution<double> temp(0.3, 3.0);
  std::normal_distribution<double> logit(0.0, 1.0);
  const double t = temp(rng);
  std::vector<double> p(o.vocabulary);
  double z = 0.0;
  for (auto& v : p) {
    v = std::exp(t * logit(rng));
    z += v;
  }
  for (auto& v : p) v /= z;
  std::discrete_distribution<std::size_t> pick(p.begin(), p.end());
  const auto realised = pick(rng);
  ProbabilityVector pv(p);
  StubDraw d;
  d.logprob_nat = std::log(p[realised]);
  d.shannon_nat = shannon_entropy(pv) * kLn2;
  for (double a : o.renyi_alphas) d.renyi_nat[a] = renyi_entropy(pv, a) * kLn2;
  return d;
}

inline std::vector<std::string> make_lexicon(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> len(2, 10);
  std::uniform_int_distribution<int> letter(0, 25);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w(static_cast<std::size_t>(len(rng)), 'a');
    for (auto& c : w) c = static_cast<char>('a' + letter(rng));
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace detail

// Zero-padded so lexicographic key order equals generation order.
inline std::string doc_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "doc" + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

inline SynthCorpus generate(const SynthOptions& o) {
  if (o.n_words == 0) throw DomainError("synth: n_words must be positive");
  if (o.min_sentence < 3 || o.max_sentence < o.min_sentence) throw DomainError("synth: bad sentence length range");
  std::mt19937_64 rng(o.seed);
  SynthCorpus c;
  auto lexicon = detail::make_lexicon(rng, o.lexicon);

  // Zipfian type frequencies; the table is what the frequency covariate reads.
  std::vector<double> weights(lexicon.size());
  for (std::size_t r = 0; r < lexicon.size(); ++r) {
    weights[r] = 1.0 / static_cast<double>(r + 1);
    c.frequencies.emplace_back(lexicon[r], static_cast<std::uint64_t>(std::llround(1e6 * weights[r])));
  }
  std::discrete_distribution<std::size_t> pick_type(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> sent_len(o.min_sentence, o.max_sentence);
  std::normal_distribution<double> noise(0.0, o.noise_sd);
  std::uniform_int_distribution<int> n_pieces(1, 3);

  c.dump.header.model_id = o.model_id;
  c.dump.header.prompt_id = "none";
  c.dump.header.detokenization = Detokenization::concat;
  c.dump.header.entropy_alphas = o.renyi_alphas;
  c.dump.header.context = "intra_sentential";
  FreqTable freq = make_freq_table(c.frequencies);

  std::size_t doc = 0, sent = 0;
  while (c.tokens.size() < o.n_words) {
    // The last sentence absorbs any remainder, so exactly n_words are emitted.
    const std::size_t remaining = o.n_words - c.tokens.size();
    std::size_t len = sent_len(rng);
    if (len >= remaining || remaining - len < 3) len = remaining;
    double h1 = 0.0, h2 = 0.0;  // driving surprisal of the two previous words
    for (std::size_t w = 0; w < len; ++w) {
      const auto& surface = lexicon[pick_type(rng)];
      ScoreDumpRecord rec;
      rec.key = {doc_name(doc), static_cast<std::int64_t>(sent % o.sentences_per_doc), static_cast<std::int64_t>(w)};
      rec.surface = surface;
      rec.model_id = o.model_id;
      const int k = std::min<int>(n_pieces(rng), static_cast<int>(surface.size()));
      double lp = 0.0;
      for (int i = 0; i < k; ++i) {
        const std::size_t b = surface.size() * static_cast<std::size_t>(i) / static_cast<std::size_t>(k);
        const std::size_t e = surface.size() * static_cast<std::size_t>(i + 1) / static_cast<std::size_t>(k);
        auto d = detail::stub_position(rng, o);
        rec.subwords.push_back({surface.substr(b, e - b), d.logprob_nat, d.shannon_nat, d.renyi_nat});
        lp += d.logprob_nat;
      }
      double h = -lp / kLn2;
      if (o.null_signal) {
        // Own piece count too; sharing k would tie both sums to it.
        double hidden = 0.0;
        const int hidden_k = n_pieces(rng);
        for (int i = 0; i < hidden_k; ++i) hidden += detail::stub_position(rng, o).logprob_nat;
        h = -hidden / kLn2;
      }
      const double rt = 150.0 + 10.0 * h + 4.0 * h1 + 2.0 * h2 + 3.0 * static_cast<double>(surface.size()) -
                        2.0 * log_frequency(freq, surface) + noise(rng);
      c.tokens.push_back({rec.key, surface, std::max(1.0, rt), false, false});
      c.true_surprisal.push_back(h);
      c.dump.records.push_back(std::move(rec));
      h2 = h1;
      h1 = h;
    }
    ++sent;
    if (sent % o.sentences_per_doc == 0) ++doc;
  }
  finalize_tokens(c.tokens, "synth");

  if (o.subjects > 0) {
    std::normal_distribution<double> subject_noise(0.0, o.subject_sd);
    for (std::size_t s = 0; s < o.subjects; ++s) {
      for (const auto& t : c.tokens) {
        c.readings.push_back({"s" + std::to_string(s + 1), t.key, t.surface, std::max(1.0, t.rt_ms + subject_noise(rng))});
      }
    }
  }
  return c;
}

}  // namespace ppp::synth
