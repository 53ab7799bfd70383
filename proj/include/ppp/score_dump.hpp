#pragma once

// Score dump interchange: JSON Lines, one header object followed by one
// ScoreDumpRecord per line.
//
//   {"format":"ppp-score-dump","version":1,"model_id":"gpt2","prompt_id":"none",
//    "detokenization":"gpt2","entropy_alphas":[0.5],"context":"intra_sentential"}
//   {"doc_id":"d1","sent_id":0,"word_idx":0,"surface":"The",
//    "subwords":[{"piece":"The","logprob":-3.2,"shannon":5.1,"renyi":{"0.5":7.9}}]}
//
// Log-probabilities and entropies are in nats.

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ppp/error.hpp"
#include "ppp/metrics.hpp"
#include "ppp/text.hpp"

namespace ppp {

inline constexpr std::string_view kDumpFormat = "ppp-score-dump";
inline constexpr int kDumpVersion = 1;

enum class Detokenization { concat, sentencepiece, gpt2, none };

inline std::string_view to_string(Detokenization d) {
  switch (d) {
    case Detokenization::concat: return "concat";
    case Detokenization::sentencepiece: return "sentencepiece";
    case Detokenization::gpt2: return "gpt2";
    case Detokenization::none: return "none";
  }
  return {};
}

inline std::optional<Detokenization> parse_detokenization(std::string_view s) {
  if (s == "concat") return Detokenization::concat;
  if (s == "sentencepiece") return Detokenization::sentencepiece;
  if (s == "gpt2") return Detokenization::gpt2;
  if (s == "none") return Detokenization::none;
  return std::nullopt;
}

// Joins pieces into the word they spell. Word-boundary markers of the
// sentencepiece (U+2581) and byte-level BPE (U+0120) vocabularies are dropped.
inline std::string detokenize(const std::vector<SubwordScore>& pieces, Detokenization rule) {
  std::string out;
  for (const auto& p : pieces) out += p.piece;
  auto erase_all = [&out](std::string_view marker) {
    for (auto pos = out.find(marker); pos != std::string::npos; pos = out.find(marker, pos)) {
      out.erase(pos, marker.size());
    }
  };
  if (rule == Detokenization::sentencepiece) erase_all("\xE2\x96\x81");
  if (rule == Detokenization::gpt2) erase_all("\xC4\xA0");
  return out;
}

struct DumpHeader {
  std::string model_id;
  std::string prompt_id = "none";
  Detokenization detokenization = Detokenization::concat;
  std::vector<double> entropy_alphas;
  // Declared context regime; empty when the producer did not declare it.
  std::string context;
  int version = kDumpVersion;
};

struct ScoreDump {
  DumpHeader header;
  std::vector<ScoreDumpRecord> records;
  std::vector<std::string> warnings;
};

namespace detail {

inline nlohmann::json parse_json_line(const std::string& path, std::size_t line_no, const std::string& line) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ParseError(path, line_no, "expected a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, line_no, std::string("invalid JSON: ") + e.what());
  }
}

template <typename T>
T json_field(const nlohmann::json& j, const char* name, const std::string& path, std::size_t line_no) {
  auto it = j.find(name);
  if (it == j.end()) throw ParseError(path, line_no, std::string("missing field '") + name + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(path, line_no, std::string("field '") + name + "' has the wrong type");
  }
}

inline DumpHeader parse_dump_header(const nlohmann::json& j, const std::string& path, std::size_t line_no,
                                    std::vector<std::string>& warnings) {
  DumpHeader h;
  if (auto f = j.find("format"); f == j.end()) {
    warnings.push_back("header does not declare a format name");
  } else if (!f->is_string() || f->get<std::string>() != kDumpFormat) {
    throw ParseError(path, line_no, "unexpected format name");
  }
  if (auto v = j.find("version"); v == j.end()) {
    warnings.push_back("header does not declare a format version; assuming " + std::to_string(kDumpVersion));
  } else {
    h.version = json_field<int>(j, "version", path, line_no);
    if (h.version != kDumpVersion) {
      throw ParseError(path, line_no, "unsupported dump version " + std::to_string(h.version));
    }
  }
  h.model_id = json_field<std::string>(j, "model_id", path, line_no);
  if (h.model_id.empty()) throw ParseError(path, line_no, "empty model_id");
  if (j.contains("prompt_id")) h.prompt_id = json_field<std::string>(j, "prompt_id", path, line_no);
  if (j.contains("detokenization")) {
    auto name = json_field<std::string>(j, "detokenization", path, line_no);
    auto rule = parse_detokenization(name);
    if (!rule) throw ParseError(path, line_no, "unknown detokenization rule '" + name + "'");
    h.detokenization = *rule;
  } else {
    warnings.push_back("header does not declare a detokenization rule; assuming concat");
  }
  if (j.contains("entropy_alphas")) h.entropy_alphas = json_field<std::vector<double>>(j, "entropy_alphas", path, line_no);
  if (j.contains("context")) h.context = json_field<std::string>(j, "context", path, line_no);
  if (h.context.empty()) {
    warnings.push_back("header does not declare the context regime (expected \"context\":\"intra_sentential\")");
  } else if (h.context != "intra_sentential") {
    warnings.push_back("header declares context '" + h.context + "', not intra_sentential");
  }
  return h;
}

inline SubwordScore parse_subword(const nlohmann::json& j, const std::string& path, std::size_t line_no) {
  if (!j.is_object()) throw ParseError(path, line_no, "subword entry is not an object");
  SubwordScore s;
  s.piece = json_field<std::string>(j, "piece", path, line_no);
  s.logprob_nat = json_field<double>(j, "logprob", path, line_no);
  if (!std::isfinite(s.logprob_nat) || s.logprob_nat > 0.0) {
    throw ParseError(path, line_no, "logprob must be finite and <= 0");
  }
  if (auto it = j.find("shannon"); it != j.end() && !it->is_null()) {
    s.shannon_nat = json_field<double>(j, "shannon", path, line_no);
    if (!(*s.shannon_nat >= 0.0)) throw ParseError(path, line_no, "negative shannon entropy");
  }
  if (auto it = j.find("renyi"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError(path, line_no, "renyi must map alpha to entropy");
    for (const auto& [k, v] : it->items()) {
      auto alpha = text::parse_double(k);
      if (!alpha || !(*alpha > 0.0)) throw ParseError(path, line_no, "invalid renyi alpha '" + k + "'");
      if (!v.is_number() || !(v.get<double>() >= 0.0)) throw ParseError(path, line_no, "invalid renyi entropy");
      s.renyi_nat[*alpha] = v.get<double>();
    }
  }
  return s;
}

}  // namespace detail

inline ScoreDump read_score_dump(std::istream& in, const std::string& path = "<dump>") {
  ScoreDump dump;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto j = detail::parse_json_line(path, line_no, line);
    if (!have_header) {
      if (j.contains("subwords")) throw ParseError(path, line_no, "missing header line");
      dump.header = detail::parse_dump_header(j, path, line_no, dump.warnings);
      have_header = true;
      continue;
    }
    ScoreDumpRecord r;
    r.key.doc_id = detail::json_field<std::string>(j, "doc_id", path, line_no);
    r.key.sent_id = detail::json_field<std::int64_t>(j, "sent_id", path, line_no);
    r.key.word_idx = detail::json_field<std::int64_t>(j, "word_idx", path, line_no);
    if (r.key.sent_id < 0 || r.key.word_idx < 0) throw ParseError(path, line_no, "negative sent_id or word_idx");
    r.surface = detail::json_field<std::string>(j, "surface", path, line_no);
    r.model_id = j.contains("model_id") ? detail::json_field<std::string>(j, "model_id", path, line_no)
                                        : dump.header.model_id;
    r.prompt_id = j.contains("prompt_id") ? detail::json_field<std::string>(j, "prompt_id", path, line_no)
                                          : dump.header.prompt_id;
    if (r.model_id != dump.header.model_id || r.prompt_id != dump.header.prompt_id) {
      throw ParseError(path, line_no, "record model_id/prompt_id differ from the header");
    }
    auto sw = j.find("subwords");
    if (sw == j.end() || !sw->is_array() || sw->empty()) throw ParseError(path, line_no, "subwords must be a nonempty array");
    for (const auto& e : *sw) r.subwords.push_back(detail::parse_subword(e, path, line_no));
    if (auto d = j.find("dep_len"); d != j.end() && !d->is_null()) {
      r.dep_len = detail::json_field<double>(j, "dep_len", path, line_no);
    }
    if (dump.header.detokenization != Detokenization::none) {
      auto spelled = detokenize(r.subwords, dump.header.detokenization);
      if (text::normalize_space(spelled) != text::normalize_space(r.surface)) {
        throw ParseError(path, line_no,
                         "pieces spell '" + spelled + "' but surface is '" + r.surface + "' under rule " +
                             std::string(to_string(dump.header.detokenization)));
      }
    }
    dump.records.push_back(std::move(r));
  }
  if (!have_header) throw ParseError(path, line_no, "empty score dump (no header line)");
  return dump;
}

inline ScoreDump load_score_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_score_dump(in, path);
}

inline nlohmann::json header_to_json(const DumpHeader& h) {
  nlohmann::json j;
  j["format"] = kDumpFormat;
  j["version"] = h.version;
  j["model_id"] = h.model_id;
  j["prompt_id"] = h.prompt_id;
  j["detokenization"] = to_string(h.detokenization);
  j["entropy_alphas"] = h.entropy_alphas;
  if (!h.context.empty()) j["context"] = h.context;
  return j;
}

inline void write_score_dump(std::ostream& out, const ScoreDump& dump) {
  out << header_to_json(dump.header).dump() << '\n';
  for (const auto& r : dump.records) {
    nlohmann::ordered_json j;
    j["doc_id"] = r.key.doc_id;
    j["sent_id"] = r.key.sent_id;
    j["word_idx"] = r.key.word_idx;
    j["surface"] = r.surface;
    auto& sw = j["subwords"] = nlohmann::ordered_json::array();
    for (const auto& s : r.subwords) {
      nlohmann::ordered_json e;
      e["piece"] = s.piece;
      e["logprob"] = s.logprob_nat;
      if (s.shannon_nat) e["shannon"] = *s.shannon_nat;
      if (!s.renyi_nat.empty()) {
        nlohmann::ordered_json rj = nlohmann::ordered_json::object();
        for (const auto& [a, v] : s.renyi_nat) rj[text::format_real(a)] = v;
        e["renyi"] = rj;
      }
      sw.push_back(std::move(e));
    }
    if (r.dep_len) j["dep_len"] = *r.dep_len;
    out << j.dump() << '\n';
  }
}

}  // namespace ppp
