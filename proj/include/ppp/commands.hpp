#pragma once

// Subcommand implementations behind the pppkit CLI. Each command reads its
// inputs, writes its outputs under an output directory and returns a process
// exit code; diagnostics go to the supplied log stream. Outputs carry no
// timestamps and rows are sorted, so identical inputs and configuration give
// byte-identical files regardless of worker count.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "ppp/corpus.hpp"
#include "ppp/error.hpp"
#include "ppp/metaling.hpp"
#include "ppp/metrics.hpp"
#include "ppp/regression.hpp"
#include "ppp/score_dump.hpp"
#include "ppp/stats.hpp"
#include "ppp/synth.hpp"
#include "ppp/text.hpp"

namespace ppp::cli {

namespace fs = std::filesystem;

inline constexpr const char* kOutDirEnv = "PPPKIT_OUT_DIR";

struct RunConfig {
  std::string corpus_path;
  std::string corpus_name;  // defaults to the corpus file stem
  std::optional<CorpusLayout> layout;
  std::vector<std::string> dump_paths;
  std::string freq_path;
  std::optional<std::string> stopword_path;
  std::vector<std::string> metrics;  // empty: every metric the dump provides
  EntropyPolicy entropy_policy = EntropyPolicy::sum;
  ContextScope context_scope = ContextScope::within_sentence;
  FilterPolicy filter;
  bool interaction = false;
  std::string strip_trailing;
  std::uint64_t smoothing_floor = 1;
  stats::PplAxis ppl_axis = stats::PplAxis::log;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  unsigned workers = 1;

  std::string effective_corpus_name() const {
    return corpus_name.empty() ? fs::path(corpus_path).stem().string() : corpus_name;
  }

  // Everything that can change an output byte. Output location and worker
  // count are excluded.
  nlohmann::json canonical() const {
    nlohmann::json j;
    j["corpus"] = corpus_path;
    j["corpus_name"] = effective_corpus_name();
    j["layout"] = layout ? (*layout == CorpusLayout::averaged ? "averaged" : "per_subject") : "auto";
    j["dumps"] = dump_paths;
    j["freq"] = freq_path;
    j["stopwords"] = stopword_path ? *stopword_path : "";
    j["metrics"] = metrics;
    j["entropy_policy"] = to_string(entropy_policy);
    j["context_scope"] = to_string(context_scope);
    j["filter"] = {{"drop_zero", filter.drop_zero},
                   {"sd_multiplier", filter.sd_multiplier},
                   {"drop_sent_initial", filter.drop_sent_initial},
                   {"drop_sent_final", filter.drop_sent_final}};
    j["interaction"] = interaction;
    j["strip_trailing"] = strip_trailing;
    j["smoothing_floor"] = smoothing_floor;
    j["ppl_axis"] = stats::to_string(ppl_axis);
    j["seed"] = seed;
    return j;
  }

  std::string hash() const { return text::hex64(text::fnv1a(canonical().dump())); }
};

// Reads a JSON config; relative paths resolve against the config's directory.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
  };
  RunConfig c;
  try {
    if (j.contains("corpus")) c.corpus_path = resolve(j.at("corpus").get<std::string>());
    if (j.contains("corpus_name")) c.corpus_name = j.at("corpus_name").get<std::string>();
    if (j.contains("layout")) {
      auto l = j.at("layout").get<std::string>();
      if (l == "averaged") c.layout = CorpusLayout::averaged;
      else if (l == "per_subject") c.layout = CorpusLayout::per_subject;
      else if (l != "auto") throw Error("config: unknown layout '" + l + "'");
    }
    if (j.contains("dumps")) {
      for (const auto& d : j.at("dumps")) c.dump_paths.push_back(resolve(d.get<std::string>()));
    }
    if (j.contains("freq")) c.freq_path = resolve(j.at("freq").get<std::string>());
    if (j.contains("stopwords") && !j.at("stopwords").get<std::string>().empty()) {
      c.stopword_path = resolve(j.at("stopwords").get<std::string>());
    }
    if (j.contains("metrics")) c.metrics = j.at("metrics").get<std::vector<std::string>>();
    if (j.contains("entropy_policy")) c.entropy_policy = parse_entropy_policy(j.at("entropy_policy").get<std::string>());
    if (j.contains("context_scope")) c.context_scope = parse_context_scope(j.at("context_scope").get<std::string>());
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      c.filter.drop_zero = f.value("drop_zero", c.filter.drop_zero);
      c.filter.sd_multiplier = f.value("sd_multiplier", c.filter.sd_multiplier);
      c.filter.drop_sent_initial = f.value("drop_sent_initial", c.filter.drop_sent_initial);
      c.filter.drop_sent_final = f.value("drop_sent_final", c.filter.drop_sent_final);
    }
    c.interaction = j.value("interaction", c.interaction);
    c.strip_trailing = j.value("strip_trailing", c.strip_trailing);
    c.smoothing_floor = j.value("smoothing_floor", c.smoothing_floor);
    if (j.contains("ppl_axis")) c.ppl_axis = stats::parse_ppl_axis(j.at("ppl_axis").get<std::string>());
    if (j.contains("out_dir")) c.out_dir = resolve(j.at("out_dir").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path + ": " + e.what());
  }
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  auto j = c.canonical();
  j["out_dir"] = c.out_dir;
  j["workers"] = c.workers;
  return j;
}

// Output directory after the environment override, created if needed.
inline fs::path output_dir(const std::string& configured) {
  const char* env = std::getenv(kOutDirEnv);
  fs::path dir = env && *env ? fs::path(env) : fs::path(configured.empty() ? "." : configured);
  fs::create_directories(dir);
  return dir;
}

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("no ") + what + " given");
  if (!fs::is_regular_file(path)) throw Error(std::string(what) + " not found: " + path);
}

inline void validate_paths(const RunConfig& c, bool need_dumps = true, bool need_freq = true) {
  require_file(c.corpus_path, "corpus");
  if (need_dumps) {
    if (c.dump_paths.empty()) throw Error("no score dump given");
    for (const auto& d : c.dump_paths) require_file(d, "score dump");
  }
  if (need_freq) require_file(c.freq_path, "frequency table");
  if (c.stopword_path) require_file(*c.stopword_path, "stopword list");
}

// Averaged tokens, averaging per-subject input when needed.
inline std::vector<TokenRecord> load_tokens(const RunConfig& c) {
  const auto layout = c.layout ? *c.layout : detect_layout(c.corpus_path);
  if (layout == CorpusLayout::averaged) return load_averaged_corpus(c.corpus_path);
  auto readings = load_per_subject_corpus(c.corpus_path);
  if (readings.empty()) return {};
  return average_subjects(readings);
}

inline std::string header_comment(std::string_view command, const RunConfig& c) {
  std::ostringstream os;
  os << "# pppkit " << command << " config_hash=" << c.hash() << " entropy_policy=" << to_string(c.entropy_policy)
     << " context_scope=" << to_string(c.context_scope) << " interaction=" << (c.interaction ? 1 : 0)
     << " corpus=" << c.effective_corpus_name() << '\n';
  return os.str();
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

// ---------------------------------------------------------------- validate

inline int cmd_validate(const RunConfig& c, std::ostream& out) {
  validate_paths(c, true, false);
  out << "# pppkit validate config_hash=" << c.hash() << '\n';
  bool ok = true;
  std::vector<TokenRecord> tokens;
  try {
    tokens = load_tokens(c);
  } catch (const Error& e) {
    out << "corpus " << c.corpus_path << " error: " << e.what() << "\nresult: failed\n";
    return 1;
  }
  std::set<SentenceKey> sentences;
  for (const auto& t : tokens) sentences.insert(sentence_of(t.key));
  out << "corpus " << c.corpus_path << " tokens=" << tokens.size() << " sentences=" << sentences.size() << '\n';

  for (const auto& path : c.dump_paths) {
    ScoreDump dump;
    try {
      dump = load_score_dump(path);
    } catch (const Error& e) {
      out << "dump " << path << " error: " << e.what() << '\n';
      ok = false;
      continue;
    }
    out << "dump " << path << " model_id=" << dump.header.model_id << " prompt_id=" << dump.header.prompt_id
        << " version=" << dump.header.version << " records=" << dump.records.size()
        << " detokenization=" << to_string(dump.header.detokenization)
        << " context=" << (dump.header.context.empty() ? "undeclared" : dump.header.context) << '\n';
    for (const auto& w : dump.warnings) out << "  warning: " << w << '\n';
    try {
      align_dump(dump.records, tokens, c.entropy_policy);
      out << "  coverage: ok\n";
    } catch (const CoverageError& e) {
      ok = false;
      out << "  coverage: missing " << e.missing().size() << " key(s):";
      for (const auto& k : e.missing()) out << ' ' << k;
      out << '\n';
    } catch (const Error& e) {
      ok = false;
      out << "  alignment: " << e.what() << '\n';
    }
  }
  out << "result: " << (ok ? "ok" : "failed") << '\n';
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------- fit

struct FitRow {
  std::string model_id;
  std::string prompt_id;
  std::string metric;
  std::size_t n = 0;
  double ppp_nats = std::numeric_limits<double>::quiet_NaN();
  double ppp_milli = std::numeric_limits<double>::quiet_NaN();
  double ppl = std::numeric_limits<double>::quiet_NaN();
  double f_p = std::numeric_limits<double>::quiet_NaN();
  double t_p = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty on success

  auto sort_key() const { return std::tie(model_id, prompt_id, metric); }
};

struct FitTable {
  std::vector<FitRow> rows;
  FilterSummary filter;
  std::vector<std::string> notes;
};

inline std::vector<Metric> cell_metrics(const RunConfig& c, const ScoreDump& dump) {
  std::vector<Metric> out;
  if (!c.metrics.empty()) {
    for (const auto& m : c.metrics) out.push_back(parse_metric(m));
    return out;
  }
  out.push_back(Metric::surprisal());
  bool has_shannon = std::any_of(dump.records.begin(), dump.records.end(), [](const auto& r) {
    return !r.subwords.empty() && r.subwords.front().shannon_nat.has_value();
  });
  if (has_shannon) out.push_back(Metric::shannon());
  for (double a : dump.header.entropy_alphas) out.push_back(Metric::renyi(a));
  return out;
}

inline FitRow fit_cell(const std::vector<AlignedWord>& aligned, const std::set<TokenKey>& retained, const Metric& m,
                       const FreqTable& freq, const RunConfig& c) {
  FitRow row;
  row.metric = m.name();
  FeatureOptions opts;
  opts.scope = c.context_scope;
  opts.length.strip_trailing = c.strip_trailing;
  auto features = build_features(aligned, retained, m, freq, opts);
  row.n = features.rows.size();
  auto res = fit_nested(features.rows, c.interaction);
  std::vector<double> surprisals;
  surprisals.reserve(features.rows.size());
  for (const auto& r : features.rows) surprisals.push_back(r.surprisal_bits);
  row.ppp_nats = res.ppp_per_token;
  row.ppp_milli = res.ppp_milli;
  row.ppl = corpus_ppl(std::span<const double>(surprisals));
  row.f_p = res.f_p_value;
  row.t_p = res.coeff_t_p_value;
  return row;
}

// One row per (dump, metric) cell. Cell failures are recorded in the row.
inline FitTable run_fit(const RunConfig& c) {
  validate_paths(c);
  FitTable table;
  auto tokens = load_tokens(c);
  if (tokens.empty()) throw Error("corpus " + c.corpus_path + " has no tokens");
  auto filtered = filter_tokens(tokens, c.filter);
  table.filter = filtered.summary;
  std::set<TokenKey> retained;
  for (const auto& t : filtered.tokens) retained.insert(t.key);
  const auto freq = load_freq_table(c.freq_path, c.smoothing_floor);

  struct Job {
    std::size_t dump;
    Metric metric;
  };
  std::vector<ScoreDump> dumps;
  std::vector<std::vector<AlignedWord>> aligned;
  std::vector<std::string> align_errors;
  std::vector<Job> jobs;
  for (const auto& path : c.dump_paths) {
    dumps.push_back(load_score_dump(path));
    auto& d = dumps.back();
    std::string err;
    std::vector<AlignedWord> a;
    try {
      a = align_dump(d.records, tokens, c.entropy_policy);
    } catch (const Error& e) {
      err = e.what();
    }
    aligned.push_back(std::move(a));
    align_errors.push_back(err);
    for (const auto& m : cell_metrics(c, d)) jobs.push_back({dumps.size() - 1, m});
  }

  table.rows.resize(jobs.size());
  parallel_for(jobs.size(), c.workers, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& d = dumps[job.dump];
    FitRow row;
    if (!align_errors[job.dump].empty()) {
      row.metric = job.metric.name();
      row.error = align_errors[job.dump];
    } else {
      try {
        row = fit_cell(aligned[job.dump], retained, job.metric, freq, c);
      } catch (const Error& e) {
        row = FitRow{};
        row.metric = job.metric.name();
        row.error = e.what();
      }
    }
    row.model_id = d.header.model_id;
    row.prompt_id = d.header.prompt_id;
    table.rows[i] = std::move(row);
  });
  std::sort(table.rows.begin(), table.rows.end(), [](const auto& a, const auto& b) { return a.sort_key() < b.sort_key(); });
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    if (table.rows[i].sort_key() == table.rows[i - 1].sort_key()) {
      throw Error("two dumps produce the same cell (" + table.rows[i].model_id + ", " + table.rows[i].prompt_id + ", " +
                  table.rows[i].metric + ")");
    }
  }
  return table;
}

inline constexpr const char* kFitColumns = "model_id\tprompt_id\tmetric\tn\tppp_nats\tppp_milli\tppl\tf_p\tt_p";

inline void write_fit_tsv(std::ostream& out, const FitTable& t, const RunConfig& c) {
  out << header_comment("fit", c);
  out << "# filter " << t.filter.str() << '\n';
  for (const auto& r : t.rows) {
    if (!r.error.empty()) out << "# cell-error " << r.model_id << ' ' << r.prompt_id << ' ' << r.metric << ": " << r.error << '\n';
  }
  out << kFitColumns << '\n';
  for (const auto& r : t.rows) {
    out << r.model_id << '\t' << r.prompt_id << '\t' << r.metric << '\t' << r.n << '\t' << text::format_real(r.ppp_nats)
        << '\t' << text::format_real(r.ppp_milli) << '\t' << text::format_real(r.ppl) << '\t'
        << text::format_real(r.f_p) << '\t' << text::format_real(r.t_p) << '\n';
  }
}

inline int cmd_fit(const RunConfig& c, std::ostream& log) {
  auto table = run_fit(c);
  const auto dir = output_dir(c.out_dir);
  std::ofstream out(dir / "fit.tsv", std::ios::binary);
  write_fit_tsv(out, table, c);
  if (table.filter.all_filtered) log << "warning: every corpus row was filtered out\n";
  int failures = 0;
  for (const auto& r : table.rows) {
    if (!r.error.empty()) {
      ++failures;
      log << "cell " << r.model_id << '/' << r.prompt_id << '/' << r.metric << " failed: " << r.error << '\n';
    }
  }
  log << "wrote " << (dir / "fit.tsv").string() << " (" << table.rows.size() << " rows, " << failures << " failed)\n";
  return 0;
}

// ---------------------------------------------------------------- score

inline int cmd_score(const RunConfig& c, std::ostream& log) {
  validate_paths(c, true, false);
  auto tokens = load_tokens(c);
  std::vector<ScoreDump> dumps;
  std::set<double> alphas;
  for (const auto& p : c.dump_paths) {
    dumps.push_back(load_score_dump(p));
    for (double a : dumps.back().header.entropy_alphas) alphas.insert(a);
  }
  std::sort(dumps.begin(), dumps.end(), [](const auto& a, const auto& b) {
    return std::tie(a.header.model_id, a.header.prompt_id) < std::tie(b.header.model_id, b.header.prompt_id);
  });
  const auto dir = output_dir(c.out_dir);
  std::ofstream words(dir / "scores.tsv", std::ios::binary);
  std::ofstream ppl(dir / "ppl.tsv", std::ios::binary);
  words << header_comment("score", c) << "model_id\tprompt_id\tdoc_id\tsent_id\tword_idx\tword\tsurprisal_bits\tshannon_bits";
  for (double a : alphas) words << "\trenyi_" << text::format_real(a) << "_bits";
  words << '\n';
  ppl << header_comment("score", c) << "model_id\tprompt_id\tn_words\tppl\n";
  for (const auto& d : dumps) {
    auto aligned = align_dump(d.records, tokens, c.entropy_policy);
    std::vector<double> s;
    for (const auto& a : aligned) {
      const auto& m = a.metrics;
      s.push_back(m.surprisal_bits);
      words << d.header.model_id << '\t' << d.header.prompt_id << '\t' << a.token.key.doc_id << '\t' << a.token.key.sent_id
            << '\t' << a.token.key.word_idx << '\t' << a.token.surface << '\t' << text::format_real(m.surprisal_bits) << '\t'
            << (m.shannon_bits ? text::format_real(*m.shannon_bits) : "NA");
      for (double al : alphas) {
        auto it = m.renyi_bits.find(al);
        words << '\t' << (it == m.renyi_bits.end() ? "NA" : text::format_real(it->second));
      }
      words << '\n';
    }
    ppl << d.header.model_id << '\t' << d.header.prompt_id << '\t' << s.size() << '\t'
        << (s.empty() ? "NA" : text::format_real(corpus_ppl(std::span<const double>(s)))) << '\n';
  }
  log << "wrote " << (dir / "scores.tsv").string() << " and " << (dir / "ppl.tsv").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- compare

struct FitFile {
  std::string corpus;
  std::string entropy_policy;
  std::string context_scope;
  std::string config_hash;
  std::vector<FitRow> rows;
};

inline std::string comment_value(const std::vector<std::string>& comments, const std::string& key) {
  for (const auto& line : comments) {
    for (const auto& tok : text::split_whitespace(line)) {
      if (tok.starts_with(key + "=")) return tok.substr(key.size() + 1);
    }
  }
  return {};
}

inline FitFile read_fit_tsv(const std::string& path) {
  text::TsvReader r(path);
  FitFile f;
  if (!r.has_header()) throw ParseError(path, 1, "empty fit table");
  f.corpus = comment_value(r.comments(), "corpus");
  if (f.corpus.empty()) f.corpus = fs::path(path).stem().string();
  f.entropy_policy = comment_value(r.comments(), "entropy_policy");
  f.context_scope = comment_value(r.comments(), "context_scope");
  f.config_hash = comment_value(r.comments(), "config_hash");
  const auto cm = r.require_column("model_id"), cp = r.require_column("prompt_id"), cme = r.require_column("metric"),
             cn = r.require_column("n"), cppp = r.require_column("ppp_nats"), cmilli = r.require_column("ppp_milli"),
             cppl = r.require_column("ppl"), cf = r.require_column("f_p"), ct = r.require_column("t_p");
  std::vector<std::string> fields;
  auto num = [&](const std::string& s) {
    if (text::trim(s) == "NA") return std::numeric_limits<double>::quiet_NaN();
    auto v = text::parse_double(s);
    if (!v) r.fail("not a number: '" + s + "'");
    return *v;
  };
  while (r.next(fields)) {
    FitRow row;
    row.model_id = fields[cm];
    row.prompt_id = fields[cp];
    row.metric = fields[cme];
    auto n = text::parse_int(fields[cn]);
    if (!n || *n < 0) r.fail("n is not a nonnegative integer");
    row.n = static_cast<std::size_t>(*n);
    row.ppp_nats = num(fields[cppp]);
    row.ppp_milli = num(fields[cmilli]);
    row.ppl = num(fields[cppl]);
    row.f_p = num(fields[cf]);
    row.t_p = num(fields[ct]);
    f.rows.push_back(std::move(row));
  }
  return f;
}

struct ModelFlags {
  std::map<std::pair<std::string, std::string>, bool> by_model_prompt;
  std::map<std::string, bool> by_model;
};

inline bool parse_bool(const text::TsvReader& r, std::string s) {
  s = text::to_lower(text::trim(s));
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  r.fail("not a boolean: '" + s + "'");
}

// `model_id  instruction_tuned  prompt_id`
inline ModelFlags load_model_flags(const std::string& path) {
  text::TsvReader r(path);
  ModelFlags f;
  if (!r.has_header()) return f;
  const auto cm = r.require_column("model_id"), ci = r.require_column("instruction_tuned");
  const auto cp = r.column("prompt_id");
  std::vector<std::string> fields;
  while (r.next(fields)) {
    const bool it = parse_bool(r, fields[ci]);
    const std::string prompt = cp ? std::string(text::trim(fields[*cp])) : "*";
    if (!f.by_model_prompt.emplace(std::pair{fields[cm], prompt}, it).second) {
      r.fail("duplicate flags row for " + fields[cm] + " / " + prompt);
    }
    auto [pos, inserted] = f.by_model.emplace(fields[cm], it);
    if (!inserted && pos->second != it) r.fail("conflicting instruction_tuned values for " + fields[cm]);
  }
  return f;
}

inline bool instruction_tuned(const ModelFlags& f, const std::string& model, const std::string& prompt) {
  if (auto it = f.by_model_prompt.find({model, prompt}); it != f.by_model_prompt.end()) return it->second;
  if (auto it = f.by_model.find(model); it != f.by_model.end()) return it->second;
  throw Error("model flags have no entry for " + model);
}

struct CompareOptions {
  std::vector<std::string> fit_paths;
  std::string flags_path;
  stats::PplAxis axis = stats::PplAxis::log;
  std::string out_dir = ".";
};

inline int cmd_compare(const CompareOptions& o, std::ostream& log) {
  if (o.fit_paths.empty()) throw Error("compare: no fit table given");
  for (const auto& p : o.fit_paths) require_file(p, "fit table");
  require_file(o.flags_path, "model flags");
  const auto flags = load_model_flags(o.flags_path);

  std::string policy, scope, hash_input = std::string(stats::to_string(o.axis)) + "|" + o.flags_path;
  // (corpus, metric) -> points
  std::map<std::pair<std::string, std::string>, std::vector<stats::PppPplPoint>> cells;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (const auto& p : o.fit_paths) {
    auto f = read_fit_tsv(p);
    hash_input += "|" + f.config_hash;
    auto merge = [](std::string& acc, const std::string& v) {
      if (acc.empty()) acc = v;
      else if (acc != v) acc = "mixed";
    };
    merge(policy, f.entropy_policy.empty() ? "unknown" : f.entropy_policy);
    merge(scope, f.context_scope.empty() ? "unknown" : f.context_scope);
    for (const auto& r : f.rows) {
      if (!seen.emplace(f.corpus, r.model_id, r.prompt_id, r.metric).second) {
        throw Error("compare: duplicate row for corpus " + f.corpus + ", " + r.model_id + ", " + r.prompt_id + ", " + r.metric);
      }
      if (std::isnan(r.ppp_nats) || std::isnan(r.ppl)) continue;
      stats::PppPplPoint pt;
      pt.model_id = r.model_id;
      pt.prompt_id = r.prompt_id;
      pt.metric = r.metric;
      pt.ppl = r.ppl;
      pt.ppp = r.ppp_nats;
      pt.is_instruction_tuned = instruction_tuned(flags, r.model_id, r.prompt_id);
      pt.is_prompt_conditioned = r.prompt_id != "none";
      cells[{f.corpus, r.metric}].push_back(std::move(pt));
    }
  }

  const auto dir = output_dir(o.out_dir);
  std::ofstream tsv(dir / "tradeoff.tsv", std::ios::binary);
  std::ofstream csv(dir / "scatter.csv", std::ios::binary);
  const std::string header = "# pppkit compare config_hash=" + text::hex64(text::fnv1a(hash_input)) +
                             " entropy_policy=" + policy + " context_scope=" + scope +
                             " ppl_axis=" + std::string(stats::to_string(o.axis)) + "\n";
  tsv << header;
  csv << header;
  std::ostringstream rows;
  rows << "corpus\tmetric\tppl_axis\tslope\tintercept\tpearson_r\tpearson_p\tn_base\tbelow_line\tn_flagged\tbinom_p\n";
  csv << "corpus,metric,model_id,prompt_id,ppl,ppp,instruction_tuned,prompt_conditioned,fitted,residual\n";
  for (auto& [key, points] : cells) {
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
      return std::tie(a.model_id, a.prompt_id) < std::tie(b.model_id, b.prompt_id);
    });
    stats::TradeoffAnalysis t;
    try {
      t = stats::tradeoff_analysis(points, o.axis);
    } catch (const InsufficientDataError& e) {
      tsv << "# skipped " << key.first << ' ' << key.second << ": " << e.what() << '\n';
      log << "notice: skipped cell " << key.first << '/' << key.second << ": " << e.what() << '\n';
      continue;
    }
    rows << key.first << '\t' << key.second << '\t' << stats::to_string(o.axis) << '\t' << text::format_real(t.slope) << '\t'
         << text::format_real(t.intercept) << '\t' << text::format_real(t.pearson_r) << '\t'
         << text::format_real(t.pearson_p) << '\t' << t.n_base << '\t' << t.below_line << '\t' << t.n_flagged << '\t'
         << text::format_real(t.binom_p) << '\n';
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      csv << key.first << ',' << key.second << ',' << p.model_id << ',' << p.prompt_id << ',' << text::format_real(p.ppl)
          << ',' << text::format_real(p.ppp) << ',' << (p.is_instruction_tuned ? 1 : 0) << ','
          << (p.is_prompt_conditioned ? 1 : 0) << ',' << text::format_real(p.ppp - t.residuals[i]) << ','
          << text::format_real(t.residuals[i]) << '\n';
    }
  }
  tsv << rows.str();
  log << "wrote " << (dir / "tradeoff.tsv").string() << " and " << (dir / "scatter.csv").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- metaling

struct MetalingOptions {
  RunConfig config;  // corpus, dumps, entropy policy, filter.drop_zero
  std::vector<std::string> transcript_paths;
  std::optional<std::size_t> first_k;
};

inline int cmd_metaling(const MetalingOptions& o, std::ostream& log) {
  const auto& c = o.config;
  require_file(c.corpus_path, "corpus");
  if (o.transcript_paths.empty()) throw Error("metaling: no transcripts given");
  std::vector<metaling::Transcript> transcripts;
  for (const auto& p : o.transcript_paths) {
    require_file(p, "transcripts");
    auto t = metaling::load_transcripts(p);
    transcripts.insert(transcripts.end(), t.begin(), t.end());
  }
  if (transcripts.empty()) throw Error("metaling: transcripts are empty");

  const auto tokens = load_tokens(c);
  std::map<SentenceKey, std::vector<const TokenRecord*>> sentences;
  for (const auto& t : tokens) sentences[sentence_of(t.key)].push_back(&t);
  metaling::GoldValues rts;
  for (const auto& [key, words] : sentences) {
    auto& v = rts[key];
    for (const auto* w : words) v.push_back(c.filter.drop_zero && w->rt_ms == 0.0 ? std::nan("") : w->rt_ms);
  }

  // Surprisal per sentence position, per model (unprompted dumps preferred).
  std::map<std::string, metaling::GoldValues> surprisal;
  std::map<std::string, std::string> surprisal_prompt;
  for (const auto& p : c.dump_paths) {
    if (!fs::is_regular_file(p)) {
      log << "warning: dump " << p << " not found; its surprisal rows are omitted\n";
      continue;
    }
    auto d = load_score_dump(p);
    const auto& model = d.header.model_id;
    if (surprisal.contains(model) && (surprisal_prompt[model] == "none" || d.header.prompt_id != "none")) continue;
    auto aligned = align_dump(d.records, tokens, c.entropy_policy);
    metaling::GoldValues g;
    for (const auto& a : aligned) g[sentence_of(a.token.key)].push_back(a.metrics.surprisal_bits);
    surprisal[model] = std::move(g);
    surprisal_prompt[model] = d.header.prompt_id;
  }

  // (template, prompt_id, model_id) -> rankings
  std::map<std::tuple<metaling::PromptTemplate, std::string, std::string>, std::vector<metaling::SentenceRanking>> groups;
  std::size_t unknown = 0, unparsed = 0;
  for (const auto& t : transcripts) {
    auto s = sentences.find(t.sentence);
    if (s == sentences.end()) {
      ++unknown;
      continue;
    }
    std::vector<std::string> surfaces;
    for (const auto* w : s->second) surfaces.push_back(w->surface);
    metaling::SentenceRanking r{t.sentence, t.run_id, metaling::parse_ranking_response(t.raw_text, surfaces)};
    if (r.parsed.empty()) ++unparsed;
    groups[{t.template_kind, t.prompt_id, t.model_id}].push_back(std::move(r));
  }
  if (unknown) log << "warning: " << unknown << " transcript(s) refer to sentences missing from the corpus\n";

  const auto dir = output_dir(c.out_dir);
  std::ofstream rt_out(dir / "metaling_rt.tsv", std::ios::binary);
  std::ofstream sp_out(dir / "metaling_surprisal.tsv", std::ios::binary);
  const std::string k = o.first_k ? std::to_string(*o.first_k) : "all";
  for (auto* out : {&rt_out, &sp_out}) {
    *out << header_comment("metaling", c) << "# first_k=" << k << " unparsed_responses=" << unparsed
         << " unknown_sentences=" << unknown << '\n';
  }
  std::ostringstream rt_rows, sp_rows;
  const auto corpus = c.effective_corpus_name();
  for (const auto& [key, rankings] : groups) {
    const auto& [kind, prompt, model] = key;
    if (kind == metaling::PromptTemplate::cost) {
      auto r = metaling::score_against_rt(rankings, rts, o.first_k);
      rt_out << "# " << prompt << ' ' << model << " n_sentences=" << r.n_sentences << " n_runs=" << r.n_runs
             << " skipped=" << r.n_skipped << '\n';
      rt_rows << prompt << '\t' << model << '\t' << corpus << '\t' << text::format_real(r.mean_rho) << '\t'
              << text::format_real(r.sd_rho) << '\n';
    } else {
      auto g = surprisal.find(model);
      if (g == surprisal.end()) {
        log << "warning: no score dump for model " << model << "; probability-ranking rows omitted\n";
        continue;
      }
      auto r = metaling::metacognition_eval(rankings, g->second, o.first_k);
      sp_out << "# " << prompt << ' ' << model << " n_sentences=" << r.n_sentences << " n_runs=" << r.n_runs
             << " skipped=" << r.n_skipped << '\n';
      sp_rows << prompt << '\t' << model << '\t' << corpus << '\t' << text::format_real(r.mean_rho) << '\t'
              << text::format_real(r.sd_rho) << '\n';
    }
  }
  if (c.dump_paths.empty()) log << "warning: no score dumps given; surprisal baseline rows omitted\n";
  for (const auto& [model, g] : surprisal) {
    auto b = metaling::surprisal_rank_baseline(g, rts);
    rt_out << "# surprisal " << model << " n_sentences=" << b.n_sentences << " skipped=" << b.n_skipped << '\n';
    rt_rows << "surprisal\t" << model << '\t' << corpus << '\t' << text::format_real(b.mean_rho) << "\t0\n";
  }
  rt_out << "prompt_id\tmodel_id\tcorpus\tmean_rho\tsd_rho\n" << rt_rows.str();
  sp_out << "prompt_id\tmodel_id\tcorpus\tmean_rho\tsd_rho\n" << sp_rows.str();
  log << "wrote " << (dir / "metaling_rt.tsv").string() << " and " << (dir / "metaling_surprisal.tsv").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- textstats

struct TextStatsOptions {
  std::vector<std::string> sentence_paths;  // one sentence per line, whitespace-tokenised
  std::string corpus_path;                  // alternative source: RT corpus sentences
  std::string freq_path;
  std::optional<std::string> stopword_path;
  std::string strip_trailing;
  std::string out_dir = ".";
};

inline std::vector<std::vector<std::string>> load_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto words = text::split_whitespace(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

inline int cmd_textstats(const TextStatsOptions& o, std::ostream& log) {
  require_file(o.freq_path, "frequency table");
  const auto freq = load_freq_table(o.freq_path);
  std::unordered_set<std::string> stop;
  if (o.stopword_path) {
    require_file(*o.stopword_path, "stopword list");
    stop = load_stopwords(*o.stopword_path);
  }
  std::vector<std::pair<std::string, std::vector<std::vector<std::string>>>> sources;
  for (const auto& p : o.sentence_paths) {
    require_file(p, "sentence file");
    sources.emplace_back(fs::path(p).stem().string(), load_sentences(p));
  }
  if (!o.corpus_path.empty()) {
    RunConfig c;
    c.corpus_path = o.corpus_path;
    require_file(c.corpus_path, "corpus");
    std::map<SentenceKey, std::vector<std::string>> by_sentence;
    for (const auto& t : load_tokens(c)) by_sentence[sentence_of(t.key)].push_back(t.surface);
    std::vector<std::vector<std::string>> s;
    for (auto& [k, words] : by_sentence) s.push_back(std::move(words));
    sources.emplace_back(fs::path(o.corpus_path).stem().string(), std::move(s));
  }
  if (sources.empty()) throw Error("textstats: no sentences given");
  std::string hash_input = o.freq_path + "|" + (o.stopword_path ? *o.stopword_path : "") + "|" + o.strip_trailing;
  for (const auto& [name, s] : sources) hash_input += "|" + name;

  const auto dir = output_dir(o.out_dir);
  std::ofstream out(dir / "textstats.tsv", std::ios::binary);
  out << "# pppkit textstats config_hash=" << text::hex64(text::fnv1a(hash_input))
      << " entropy_policy=n/a context_scope=n/a\n";
  out << "source\tn_sentences\tmean_sentence_len\tmean_word_len\tmean_log_freq\n";
  WordLengthOptions len{o.strip_trailing};
  for (const auto& [name, s] : sources) {
    auto st = stats::surface_stats(s, freq, stop, len);
    out << name << '\t' << s.size() << '\t' << text::format_real(st.mean_sentence_len) << '\t'
        << text::format_real(st.mean_word_len) << '\t' << text::format_real(st.mean_log_freq) << '\n';
  }
  log << "wrote " << (dir / "textstats.tsv").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- synth

enum class TranscriptMode { none, random, perfect };

struct SynthCommandOptions {
  synth::SynthOptions synth;
  TranscriptMode transcripts = TranscriptMode::none;
  std::size_t runs = 3;
  std::string out_dir = ".";
};

inline std::string ranking_text(const std::vector<std::size_t>& order, const std::vector<const TokenRecord*>& words) {
  std::string s;
  for (auto i : order) s += std::to_string(i) + ": " + words[i]->surface + ", ";
  return s;
}

inline int cmd_synth(const SynthCommandOptions& o, std::ostream& log) {
  auto corpus = synth::generate(o.synth);
  const auto dir = output_dir(o.out_dir);

  {
    std::ofstream out(dir / "corpus.tsv", std::ios::binary);
    if (o.synth.subjects > 0) {
      out << "doc_id\tsent_id\tword_idx\tword\trt_ms\tsubject_id\n";
      for (const auto& r : corpus.readings) {
        out << r.key.doc_id << '\t' << r.key.sent_id << '\t' << r.key.word_idx << '\t' << r.surface << '\t'
            << text::format_real(r.rt_ms) << '\t' << r.subject_id << '\n';
      }
    } else {
      out << "doc_id\tsent_id\tword_idx\tword\trt_ms\n";
      for (const auto& t : corpus.tokens) {
        out << t.key.doc_id << '\t' << t.key.sent_id << '\t' << t.key.word_idx << '\t' << t.surface << '\t'
            << text::format_real(t.rt_ms) << '\n';
      }
    }
  }
  {
    std::ofstream out(dir / "dump.jsonl", std::ios::binary);
    write_score_dump(out, corpus.dump);
  }
  {
    std::ofstream out(dir / "freq.tsv", std::ios::binary);
    out << "word\tcount\n";
    auto f = corpus.frequencies;
    std::sort(f.begin(), f.end());
    for (const auto& [w, n] : f) out << w << '\t' << n << '\n';
  }
  {
    RunConfig c;
    c.corpus_path = "corpus.tsv";
    c.corpus_name = "synth";
    c.dump_paths = {"dump.jsonl"};
    c.freq_path = "freq.tsv";
    c.seed = o.synth.seed;
    c.out_dir = "out";
    std::ofstream out(dir / "config.json", std::ios::binary);
    out << config_to_json(c).dump(2) << '\n';
  }
  if (o.transcripts != TranscriptMode::none) {
    std::mt19937_64 rng(o.synth.seed ^ 0x9e3779b97f4a7c15ULL);
    std::map<SentenceKey, std::vector<const TokenRecord*>> sentences;
    for (const auto& t : corpus.tokens) sentences[sentence_of(t.key)].push_back(&t);
    std::ofstream out(dir / "transcripts.jsonl", std::ios::binary);
    nlohmann::json header{{"model_id", o.synth.model_id},
                          {"prompt_id", o.transcripts == TranscriptMode::perfect ? "oracle" : "random"},
                          {"template", "cost"}};
    out << header.dump() << '\n';
    for (std::size_t run = 0; run < o.runs; ++run) {
      for (const auto& [key, words] : sentences) {
        std::vector<std::size_t> order(words.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        if (o.transcripts == TranscriptMode::perfect) {
          std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return words[a]->rt_ms > words[b]->rt_ms; });
        } else {
          std::shuffle(order.begin(), order.end(), rng);
        }
        nlohmann::json j{{"sent_key", {key.doc_id, key.sent_id}}, {"run_id", run}, {"raw_text", ranking_text(order, words)}};
        out << j.dump() << '\n';
      }
    }
  }
  log << "wrote synthetic corpus (" << corpus.tokens.size() << " words) to " << dir.string() << '\n';
  return 0;
}

}  // namespace ppp::cli
