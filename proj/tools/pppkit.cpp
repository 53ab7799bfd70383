// pppkit: psychometric predictive power toolkit.
//
//   pppkit synth    --out-dir fx --seed 7
//   pppkit validate --config fx/config.json
//   pppkit fit      --config fx/config.json --workers 4
//   pppkit compare  --fit fx/out/fit.tsv --flags flags.tsv
//   pppkit metaling --corpus corpus.tsv --dump dump.jsonl --transcripts t.jsonl
//   pppkit textstats --sentences sents.txt --freq freq.tsv --stopwords stop.txt

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppp/commands.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string corpus;
  std::string corpus_name;
  std::string layout;
  std::vector<std::string> dumps;
  std::string freq;
  std::string stopwords;
  std::vector<std::string> metrics;
  std::string entropy_policy;
  std::string context_scope;
  std::string ppl_axis;
  std::string out_dir;
  std::string strip_trailing;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<double> sd_multiplier;
  bool interaction = false;
  bool keep_zero = false;
  bool keep_initial = false;
  bool keep_final = false;
};

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "JSON run configuration; flags override its fields");
  app->add_option("--corpus", o.corpus, "reading-time corpus TSV");
  app->add_option("--corpus-name", o.corpus_name, "corpus label used in outputs (default: file stem)");
  app->add_option("--layout", o.layout, "corpus layout")->check(CLI::IsMember({"auto", "averaged", "per_subject"}));
  app->add_option("--dump", o.dumps, "score dump JSONL (repeatable)");
  app->add_option("--freq", o.freq, "frequency table TSV (word, count)");
  app->add_option("--stopwords", o.stopwords, "stopword list, one per line");
  app->add_option("--metric", o.metrics, "metric to fit: surprisal, shannon, renyi_<alpha> (repeatable)");
  app->add_option("--entropy-policy", o.entropy_policy, "subword entropy aggregation")
      ->check(CLI::IsMember({"sum", "first_subword"}));
  app->add_option("--context-scope", o.context_scope, "spillover predecessor scope")
      ->check(CLI::IsMember({"within_sentence", "within_document"}));
  app->add_option("--ppl-axis", o.ppl_axis, "PPL axis of the trade-off regression")->check(CLI::IsMember({"log", "raw"}));
  app->add_option("--seed", o.seed, "seed recorded with the run");
  app->add_option("--workers", o.workers, "worker threads for independent cells");
  app->add_option("--out-dir", o.out_dir, "output directory (env PPPKIT_OUT_DIR overrides)");
  app->add_option("--sd-multiplier", o.sd_multiplier, "reading-time outlier cutoff in standard deviations");
  app->add_option("--strip-trailing", o.strip_trailing, "characters stripped from word ends before length counting");
  app->add_flag("--interaction", o.interaction, "add length x frequency interaction terms");
  app->add_flag("--keep-zero", o.keep_zero, "keep zero reading times");
  app->add_flag("--keep-sent-initial", o.keep_initial, "keep sentence-initial words");
  app->add_flag("--keep-sent-final", o.keep_final, "keep sentence-final words");
}

ppp::cli::RunConfig resolve(const Overrides& o) {
  ppp::cli::RunConfig c = o.config.empty() ? ppp::cli::RunConfig{} : ppp::cli::load_config(o.config);
  if (!o.corpus.empty()) c.corpus_path = o.corpus;
  if (!o.corpus_name.empty()) c.corpus_name = o.corpus_name;
  if (o.layout == "averaged") c.layout = ppp::CorpusLayout::averaged;
  if (o.layout == "per_subject") c.layout = ppp::CorpusLayout::per_subject;
  if (o.layout == "auto") c.layout.reset();
  if (!o.dumps.empty()) c.dump_paths = o.dumps;
  if (!o.freq.empty()) c.freq_path = o.freq;
  if (!o.stopwords.empty()) c.stopword_path = o.stopwords;
  if (!o.metrics.empty()) c.metrics = o.metrics;
  if (!o.entropy_policy.empty()) c.entropy_policy = ppp::parse_entropy_policy(o.entropy_policy);
  if (!o.context_scope.empty()) c.context_scope = ppp::parse_context_scope(o.context_scope);
  if (!o.ppl_axis.empty()) c.ppl_axis = ppp::stats::parse_ppl_axis(o.ppl_axis);
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (!o.strip_trailing.empty()) c.strip_trailing = o.strip_trailing;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.sd_multiplier) c.filter.sd_multiplier = *o.sd_multiplier;
  if (o.interaction) c.interaction = true;
  if (o.keep_zero) c.filter.drop_zero = false;
  if (o.keep_initial) c.filter.drop_sent_initial = false;
  if (o.keep_final) c.filter.drop_sent_final = false;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pppkit: psychometric predictive power of language-model surprisal and entropy"};
  app.require_subcommand(1);

  Overrides run;
  auto* validate = app.add_subcommand("validate", "check dump/corpus alignment and dump headers");
  auto* score = app.add_subcommand("score", "write word-level surprisal/entropy (bits) and per-model PPL");
  auto* fit = app.add_subcommand("fit", "fit nested spillover regressions; one row per model/prompt/metric");
  for (auto* sub : {validate, score, fit}) add_run_options(sub, run);

  ppp::cli::CompareOptions cmp;
  std::string cmp_axis = "log";
  auto* compare = app.add_subcommand("compare", "PPP-PPL trade-off against the base-model regression line");
  compare->add_option("--fit", cmp.fit_paths, "fit TSV (repeatable, one per corpus)")->required();
  compare->add_option("--flags", cmp.flags_path, "model flags TSV (model_id, instruction_tuned, prompt_id)")->required();
  compare->add_option("--ppl-axis", cmp_axis, "PPL axis")->check(CLI::IsMember({"log", "raw"}));
  compare->add_option("--out-dir", cmp.out_dir, "output directory (env PPPKIT_OUT_DIR overrides)");

  Overrides ml_run;
  std::vector<std::string> transcripts;
  std::optional<std::size_t> first_k;
  auto* metaling = app.add_subcommand("metaling", "score metalinguistic ranking transcripts");
  add_run_options(metaling, ml_run);
  metaling->add_option("--transcripts", transcripts, "transcript JSONL (repeatable)")->required();
  metaling->add_option("--first-k", first_k, "only the first k listed words enter the correlation");

  ppp::cli::TextStatsOptions ts;
  std::string ts_stop;
  auto* textstats = app.add_subcommand("textstats", "sentence length, word length and log frequency");
  textstats->add_option("--sentences", ts.sentence_paths, "one sentence per line (repeatable)");
  textstats->add_option("--corpus", ts.corpus_path, "reading-time corpus TSV");
  textstats->add_option("--freq", ts.freq_path, "frequency table TSV")->required();
  textstats->add_option("--stopwords", ts_stop, "stopword list");
  textstats->add_option("--strip-trailing", ts.strip_trailing, "characters stripped from word ends");
  textstats->add_option("--out-dir", ts.out_dir, "output directory (env PPPKIT_OUT_DIR overrides)");

  ppp::cli::SynthCommandOptions sy;
  std::string sy_transcripts = "none";
  bool sy_null = false;
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic corpus, stub-model dump and config");
  synth->add_option("--out-dir", sy.out_dir, "output directory (env PPPKIT_OUT_DIR overrides)");
  synth->add_option("--seed", sy.synth.seed, "random seed");
  synth->add_option("--n-words", sy.synth.n_words, "corpus size in words");
  synth->add_option("--noise-sd", sy.synth.noise_sd, "reading-time noise SD (ms)");
  synth->add_option("--subjects", sy.synth.subjects, "emit per-subject readings for this many subjects");
  synth->add_flag("--null", sy_null, "reading times independent of the dumped surprisal");
  synth->add_option("--transcripts", sy_transcripts, "also write ranking transcripts")
      ->check(CLI::IsMember({"none", "random", "perfect"}));
  synth->add_option("--runs", sy.runs, "transcript runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return ppp::cli::cmd_validate(resolve(run), std::cout);
    if (*score) return ppp::cli::cmd_score(resolve(run), std::cerr);
    if (*fit) return ppp::cli::cmd_fit(resolve(run), std::cerr);
    if (*compare) {
      cmp.axis = ppp::stats::parse_ppl_axis(cmp_axis);
      return ppp::cli::cmd_compare(cmp, std::cerr);
    }
    if (*metaling) {
      ppp::cli::MetalingOptions mo{resolve(ml_run), transcripts, first_k};
      return ppp::cli::cmd_metaling(mo, std::cerr);
    }
    if (*textstats) {
      if (!ts_stop.empty()) ts.stopword_path = ts_stop;
      return ppp::cli::cmd_textstats(ts, std::cerr);
    }
    if (*synth) {
      sy.synth.null_signal = sy_null;
      sy.transcripts = sy_transcripts == "random"    ? ppp::cli::TranscriptMode::random
                       : sy_transcripts == "perfect" ? ppp::cli::TranscriptMode::perfect
                                                     : ppp::cli::TranscriptMode::none;
      return ppp::cli::cmd_synth(sy, std::cerr);
    }
  } catch (const ppp::Error& e) {
    std::cerr << "pppkit: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "pppkit: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
