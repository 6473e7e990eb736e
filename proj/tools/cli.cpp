#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "threadsel/checkpoint.hpp"
#include "threadsel/config.hpp"
#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"
#include "threadsel/error.hpp"
#include "threadsel/eval.hpp"
#include "threadsel/extraction.hpp"
#include "threadsel/synthetic.hpp"
#include "threadsel/trainer.hpp"

namespace threadsel {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Writes to --out when given, standard output otherwise.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (!path.empty()) {
      if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
      file_.open(path, std::ios::binary);
      if (!file_) throw DataError("cannot write " + path);
    }
    stream_ = path.empty() ? &fallback : &file_;
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      const long long k = std::stoll(item);
      if (k < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw ConfigError("--ks expects comma-separated positive integers");
    }
  }
  if (ks.empty()) throw ConfigError("--ks expects at least one value");
  return ks;
}

ordered_json threads_json(const ThreadSet& set) {
  ordered_json threads = ordered_json::array();
  for (const auto& t : set.threads) threads.push_back(t);
  return threads;
}

ordered_json stats_json(const ThreadStats& stats) {
  ordered_json j;
  j["dialogues"] = stats.dialogues;
  j["avg_thd"] = stats.avg_thd;
  j["avg_turn"] = stats.avg_turn;
  j["std_turn"] = stats.std_turn;
  ordered_json dist;
  for (const auto& [k, pct] : stats.thd_distribution) dist[std::to_string(k)] = pct;
  j["thd_distribution"] = dist;
  return j;
}

ordered_json metrics_json(const MetricsReport& report) {
  ordered_json j;
  for (const auto& [k, v] : report.hits) j["hits@" + std::to_string(k)] = v;
  j["mrr"] = report.mrr;
  j["examples"] = report.examples;
  return j;
}

const CLI::IsMember kModes({"dep-extr", "dist-seg", "full-hty"});

struct ThreadInputs {
  std::string corpus;
  std::string edges;
  std::string mode = "dep-extr";
  double threshold = 0.2;
  std::size_t max_threads = 4;
  bool resolve = false;

  void add_to(CLI::App* cmd, bool corpus_required) {
    cmd->add_option("--corpus", corpus, "Dialogue JSONL")->required(corpus_required);
    cmd->add_option("--edges", edges, "Dependency edges JSONL (chain parser when absent)");
    cmd->add_option("--mode", mode, "dep-extr | dist-seg | full-hty")->check(kModes);
    cmd->add_option("--threshold", threshold, "Edge confidence threshold");
    cmd->add_option("--max-threads", max_threads, "Thread cap M");
    cmd->add_flag("--resolve-nearest-parent", resolve, "Keep only the nearest parent of multi-parent turns");
  }

  ExtractionConfig extraction() const {
    ExtractionConfig config{threshold, max_threads};
    config.validate();
    return config;
  }

  std::optional<ForestMap> forests() const {
    if (edges.empty()) return std::nullopt;
    return load_edges(edges, resolve);
  }
};

const DependencyForest* find_forest(const std::optional<ForestMap>& forests, const std::string& id) {
  if (!forests) return nullptr;
  auto it = forests->find(id);
  if (it == forests->end()) throw DataError("no dependency record for dialogue " + id);
  return &it->second;
}

std::vector<ThreadSet> build_corpus_threads(const std::vector<Dialogue>& dialogues, const ThreadInputs& in) {
  const auto forests = in.forests();
  const auto mode = parse_thread_mode(in.mode);
  const auto config = in.extraction();
  std::vector<ThreadSet> sets;
  for (const auto& d : dialogues) {
    const DependencyForest* forest = mode == ThreadMode::kDependency ? find_forest(forests, d.id) : nullptr;
    sets.push_back(build_threads(mode, d.num_turns(), forest, config));
  }
  return sets;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thread-based response selection: extraction, training and evaluation"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus, optionally filter and augment it");
  std::string ingest_corpus, ingest_out, vocab_out;
  bool filter = false, do_augment = false;
  std::size_t min_context = 1, vocab_size = 30000, min_freq = 1;
  ingest->add_option("--corpus", ingest_corpus, "Dialogue JSONL")->required();
  ingest->add_option("--out", ingest_out, "Canonical JSONL output (stdout when absent)");
  ingest->add_flag("--filter-unanswerable", filter, "Drop dialogues without a label");
  ingest->add_flag("--augment", do_augment, "Turn every later utterance into a sample");
  ingest->add_option("--min-context", min_context, "Minimum context turns for augmentation");
  ingest->add_option("--vocab-out", vocab_out, "Write the vocabulary, one token per line");
  ingest->add_option("--vocab-size", vocab_size, "Vocabulary size including specials");
  ingest->add_option("--min-freq", min_freq, "Minimum token frequency");

  // parse
  auto* parse = app.add_subcommand("parse", "Produce or normalise dependency edges");
  std::string parse_corpus_path, parse_edges, parse_out;
  bool parse_resolve = false;
  parse->add_option("--corpus", parse_corpus_path, "Corpus to chain-parse");
  parse->add_option("--edges", parse_edges, "Existing edges to validate and normalise");
  parse->add_flag("--resolve-nearest-parent", parse_resolve, "Keep only the nearest parent of multi-parent turns");
  parse->add_option("--out", parse_out, "Edges JSONL output (stdout when absent)");

  // extract
  auto* extract = app.add_subcommand("extract", "Extract thread sets");
  ThreadInputs extract_in;
  std::string extract_out;
  extract_in.add_to(extract, true);
  extract->add_option("--out", extract_out, "JSONL output (stdout when absent)");

  // stats
  auto* stats = app.add_subcommand("stats", "Thread statistics (avg#thd, avg#turn, std#turn, k-thd)");
  ThreadInputs stats_in;
  std::string stats_out;
  stats_in.add_to(stats, true);
  stats->add_option("--out", stats_out, "JSON output file");

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic interleaved-topic corpus with gold edges");
  SyntheticSpec spec;
  std::string distractors = "absent", gen_corpus, gen_edges;
  std::uint64_t gen_seed = 1;
  generate->add_option("--dialogues", spec.num_dialogues, "Number of dialogues");
  generate->add_option("--threads", spec.threads, "Threads per dialogue");
  generate->add_option("--head-turns-min", spec.head_turns_min);
  generate->add_option("--head-turns-max", spec.head_turns_max);
  generate->add_option("--tail-turns-min", spec.tail_turns_min);
  generate->add_option("--tail-turns-max", spec.tail_turns_max);
  generate->add_option("--tokens-min", spec.tokens_per_turn_min);
  generate->add_option("--tokens-max", spec.tokens_per_turn_max);
  generate->add_option("--topics", spec.num_topics, "Number of disjoint topic vocabularies");
  generate->add_option("--topic-vocab", spec.topic_vocab, "Words per topic");
  generate->add_option("--pool-size", spec.pool_size, "Candidates per dialogue");
  generate->add_option("--distractors", distractors, "absent | active")->check(CLI::IsMember({"absent", "active"}));
  generate->add_option("--id-prefix", spec.id_prefix);
  generate->add_option("--seed", gen_seed);
  generate->add_option("--corpus-out", gen_corpus, "Corpus JSONL")->required();
  generate->add_option("--edges-out", gen_edges, "Gold edges JSONL")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a Thread-Encoder model");
  std::string config_path, train_corpus, train_edges, valid_corpus, valid_edges, out_dir;
  std::optional<std::string> preset, mode, aggregator;
  std::optional<double> lr, lr_decay, threshold;
  std::optional<std::size_t> batch, max_epochs, max_threads, workers, train_vocab, train_min_freq;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  bool train_augment = false, train_resolve = false;
  std::size_t train_min_context = 1;
  train_cmd->add_option("--config", config_path, "Flat key = value config file");
  train_cmd->add_option("--corpus", train_corpus, "Training corpus")->required();
  train_cmd->add_option("--edges", train_edges, "Training edges (chain parser when absent)");
  train_cmd->add_option("--valid-corpus", valid_corpus, "Validation corpus with candidate pools")->required();
  train_cmd->add_option("--valid-edges", valid_edges, "Validation edges");
  train_cmd->add_option("--out-dir", out_dir, "Output directory")->required();
  train_cmd->add_option("--preset", preset, "desk | paper-scale");
  train_cmd->add_option("--mode", mode, "dep-extr | dist-seg | full-hty")->check(kModes);
  train_cmd->add_option("--aggregator", aggregator, "average | codes-K");
  train_cmd->add_option("--lr", lr);
  train_cmd->add_option("--lr-decay", lr_decay);
  train_cmd->add_option("--threshold", threshold);
  train_cmd->add_option("--batch", batch);
  train_cmd->add_option("--max-epochs", max_epochs);
  train_cmd->add_option("--max-threads", max_threads);
  train_cmd->add_option("--workers", workers, "Validation worker threads");
  train_cmd->add_option("--vocab-size", train_vocab);
  train_cmd->add_option("--min-freq", train_min_freq);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--seeds", seeds, "Number of runs (seed, seed+1, ...) to train and average");
  train_cmd->add_flag("--augment", train_augment, "Augment the training corpus");
  train_cmd->add_option("--min-context", train_min_context);
  train_cmd->add_flag("--resolve-nearest-parent", train_resolve);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Rank candidate pools and report hits@k / MRR");
  std::string eval_ckpt, eval_corpus, eval_edges, eval_ks = "1,5,10,50", eval_out;
  std::optional<std::string> eval_mode;
  std::size_t eval_workers = 1;
  bool eval_resolve = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--corpus", eval_corpus)->required();
  eval_cmd->add_option("--edges", eval_edges);
  eval_cmd->add_option("--mode", eval_mode, "Override the checkpoint's thread mode")->check(kModes);
  eval_cmd->add_option("--ks", eval_ks, "Comma-separated k values");
  eval_cmd->add_option("--workers", eval_workers);
  eval_cmd->add_option("--out", eval_out, "JSON report file");
  eval_cmd->add_flag("--resolve-nearest-parent", eval_resolve);

  // predict
  auto* predict = app.add_subcommand("predict", "Score candidates of (possibly unlabeled) dialogues");
  std::string pred_ckpt, pred_corpus, pred_edges, pred_out;
  std::optional<std::string> pred_mode;
  bool pred_resolve = false;
  predict->add_option("--checkpoint", pred_ckpt)->required();
  predict->add_option("--corpus", pred_corpus)->required();
  predict->add_option("--edges", pred_edges);
  predict->add_option("--mode", pred_mode)->check(kModes);
  predict->add_option("--out", pred_out);
  predict->add_flag("--resolve-nearest-parent", pred_resolve);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare backward gradients with finite differences");
  std::string gc_config = "desk";
  std::optional<std::size_t> gc_codes;
  GradCheckOptions gc_options;
  gc_options.samples = 1000;
  bool gc_exhaustive = false;
  std::uint64_t gc_seed = 1;
  double gc_tolerance = 1e-4;
  gradcheck->add_option("--config", gc_config, "Preset name or config file");
  gradcheck->add_option("--codes", gc_codes, "Number of codes K");
  gradcheck->add_option("--eps", gc_options.eps);
  gradcheck->add_option("--samples", gc_options.samples, "Parameter elements drawn at random");
  gradcheck->add_flag("--exhaustive", gc_exhaustive, "Check every parameter element");
  gradcheck->add_option("--tolerance", gc_tolerance);
  gradcheck->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*ingest) {
      auto dialogues = load_corpus(ingest_corpus);
      const std::size_t loaded = dialogues.size();
      if (filter) dialogues = filter_unanswerable(dialogues);
      if (do_augment) dialogues = augment(dialogues, min_context);
      Sink sink(ingest_out, out);
      for (const auto& d : dialogues) *sink << serialize_dialogue(d) << '\n';
      if (!vocab_out.empty()) {
        const auto tokenizer = build_vocab(dialogues, vocab_size, min_freq);
        std::ofstream vocab(vocab_out);
        for (std::size_t i = 0; i < tokenizer.size(); ++i) vocab << tokenizer.token(static_cast<TokenId>(i)) << '\n';
      }
      err << "ingest: " << loaded << " dialogues read, " << dialogues.size() << " written\n";
    } else if (*parse) {
      ForestMap forests;
      if (!parse_edges.empty()) {
        forests = load_edges(parse_edges, parse_resolve);
      } else if (!parse_corpus_path.empty()) {
        for (const auto& d : load_corpus(parse_corpus_path)) forests.emplace(d.id, chain_parser(d));
      } else {
        err << "error: parse needs --corpus or --edges\n";
        return 2;
      }
      Sink sink(parse_out, out);
      for (const auto& [id, forest] : forests) *sink << serialize_forest(id, forest) << '\n';
    } else if (*extract) {
      const auto dialogues = load_corpus(extract_in.corpus);
      const auto sets = build_corpus_threads(dialogues, extract_in);
      Sink sink(extract_out, out);
      for (std::size_t i = 0; i < dialogues.size(); ++i) {
        ordered_json j;
        j["dialogue_id"] = dialogues[i].id;
        j["mode"] = to_string(sets[i].source);
        j["threads"] = threads_json(sets[i]);
        *sink << j.dump() << '\n';
      }
    } else if (*stats) {
      const auto dialogues = load_corpus(stats_in.corpus);
      const auto sets = build_corpus_threads(dialogues, stats_in);
      const auto result = thread_stats(sets, stats_in.max_threads);
      const auto json = stats_json(result).dump(2);
      if (!stats_out.empty()) {
        Sink sink(stats_out, out);
        *sink << json << '\n';
      }
      out << json << '\n' << format_stats_table(result, fs::path(stats_in.corpus).stem().string());
    } else if (*generate) {
      spec.distractors = parse_distractor_policy(distractors);
      const auto corpus = generate_synthetic(spec, gen_seed);
      for (const auto& path : {gen_corpus, gen_edges}) {
        if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
      }
      save_corpus(corpus.dialogues, gen_corpus);
      std::ofstream edges(gen_edges, std::ios::binary);
      if (!edges) throw DataError("cannot write " + gen_edges);
      for (const auto& d : corpus.dialogues) edges << serialize_forest(d.id, corpus.forests.at(d.id)) << '\n';
      err << "generate: " << corpus.dialogues.size() << " dialogues\n";
    } else if (*train_cmd) {
      EncoderConfig encoder = EncoderConfig::desk();
      TrainConfig config;
      // Precedence: defaults < config file < command-line flags.
      if (!config_path.empty()) apply_config(load_config_file(config_path), encoder, config);
      ConfigValues overrides;
      if (preset) overrides["preset"] = *preset;
      if (mode) overrides["mode"] = *mode;
      if (aggregator) overrides["aggregator"] = *aggregator;
      apply_config(overrides, encoder, config);
      if (lr) config.lr = *lr;
      if (lr_decay) config.lr_decay = *lr_decay;
      if (threshold) config.extraction.threshold = *threshold;
      if (batch) config.batch = *batch;
      if (max_epochs) config.max_epochs = *max_epochs;
      if (max_threads) config.extraction.max_threads = *max_threads;
      if (workers) config.workers = *workers;
      if (train_vocab) config.vocab_size = *train_vocab;
      if (train_min_freq) config.min_freq = *train_min_freq;
      if (seed) config.seed = *seed;
      if (seeds < 1) throw ConfigError("--seeds must be at least 1");

      auto train_set = filter_unanswerable(load_corpus(train_corpus));
      ForestMap train_forests = train_edges.empty() ? ForestMap{} : load_edges(train_edges, train_resolve);
      if (train_augment) {
        std::vector<Dialogue> samples;
        ForestMap sample_forests;
        for (const auto& d : train_set) {
          for (auto& s : augment({d}, train_min_context)) {
            if (auto it = train_forests.find(d.id); it != train_forests.end()) {
              sample_forests.emplace(s.id, restrict_forest(it->second, s.num_turns()));
            }
            samples.push_back(std::move(s));
          }
        }
        train_set = std::move(samples);
        train_forests = std::move(sample_forests);
      }
      const auto valid_set = filter_unanswerable(load_corpus(valid_corpus));
      const ForestMap valid_forests = valid_edges.empty() ? ForestMap{} : load_edges(valid_edges, train_resolve);

      fs::create_directories(out_dir);
      double hits_sum = 0.0, mrr_sum = 0.0;
      ordered_json runs = ordered_json::array();
      for (std::size_t run = 0; run < seeds; ++run) {
        TrainConfig run_config = config;
        run_config.seed = config.seed + run;
        const fs::path dir = seeds == 1 ? fs::path(out_dir) : fs::path(out_dir) / ("seed-" + std::to_string(run_config.seed));
        fs::create_directories(dir);
        const auto result = train(train_set, train_forests, valid_set, valid_forests, run_config, encoder,
                                  [&err](const std::string& line) { err << line << '\n'; });
        save_checkpoint(result.checkpoint, dir / "model.ckpt");
        std::ofstream(dir / "report.json") << report_to_json(result.report) << '\n';
        std::ofstream(dir / "learning_curve.txt") << format_learning_curve(result.report);
        out << report_to_json(result.report) << '\n' << format_learning_curve(result.report);
        hits_sum += result.report.best().valid_hits1;
        mrr_sum += result.report.best().valid_mrr;
        ordered_json r;
        r["seed"] = run_config.seed;
        r["valid_hits1"] = result.report.best().valid_hits1;
        r["valid_mrr"] = result.report.best().valid_mrr;
        runs.push_back(r);
      }
      if (seeds > 1) {
        ordered_json summary;
        summary["runs"] = runs;
        summary["mean_valid_hits1"] = hits_sum / static_cast<double>(seeds);
        summary["mean_valid_mrr"] = mrr_sum / static_cast<double>(seeds);
        std::ofstream(fs::path(out_dir) / "summary.json") << summary.dump(2) << '\n';
        out << summary.dump(2) << '\n';
      }
    } else if (*eval_cmd) {
      const auto checkpoint = load_checkpoint(eval_ckpt);
      const auto dialogues = load_corpus(eval_corpus);
      const auto forests = eval_edges.empty() ? std::nullopt : std::optional<ForestMap>(load_edges(eval_edges, eval_resolve));
      const auto thread_mode = eval_mode ? parse_thread_mode(*eval_mode) : checkpoint.mode;
      const auto ks = parse_ks(eval_ks);
      const auto results = rank_corpus(checkpoint.model, checkpoint.tokenizer, dialogues,
                                       forests ? &*forests : nullptr, thread_mode, checkpoint.extraction, eval_workers);
      const auto report = compute_metrics(results, ks);
      auto json = metrics_json(report);
      json["mode"] = to_string(thread_mode);
      if (!eval_out.empty()) {
        Sink sink(eval_out, out);
        *sink << json.dump(2) << '\n';
      }
      out << json.dump(2) << '\n' << format_metrics_table(report, to_string(thread_mode));
    } else if (*predict) {
      const auto checkpoint = load_checkpoint(pred_ckpt);
      const auto dialogues = load_corpus(pred_corpus);
      const auto forests = pred_edges.empty() ? std::nullopt : std::optional<ForestMap>(load_edges(pred_edges, pred_resolve));
      const auto thread_mode = pred_mode ? parse_thread_mode(*pred_mode) : checkpoint.mode;
      Sink sink(pred_out, out);
      for (const auto& d : dialogues) {
        const DependencyForest* forest = thread_mode == ThreadMode::kDependency ? find_forest(forests, d.id) : nullptr;
        const auto threads = build_threads(thread_mode, d.num_turns(), forest, checkpoint.extraction);
        const auto scores = score_candidates(checkpoint.model, prepare_example(d, threads, checkpoint.tokenizer));
        Matrix row(1, static_cast<Eigen::Index>(scores.size()));
        for (std::size_t i = 0; i < scores.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = scores[i];
        const Matrix probs = softmax_rows(row);
        ordered_json j;
        j["dialogue_id"] = d.id;
        j["scores"] = scores;
        j["probabilities"] = std::vector<double>(probs.data(), probs.data() + probs.size());
        *sink << j.dump() << '\n';
      }
    } else if (*gradcheck) {
      EncoderConfig encoder = EncoderConfig::desk();
      TrainConfig unused;
      if (gc_config == "desk" || gc_config == "paper-scale") {
        encoder = encoder_preset(gc_config);
      } else {
        apply_config(load_config_file(gc_config), encoder, unused);
      }
      if (gc_codes) encoder.num_codes = *gc_codes;
      gc_options.exhaustive_limit = gc_exhaustive ? static_cast<std::size_t>(-1) : 0;
      gc_options.seed = gc_seed;
      const auto result = check_pipeline_gradients(encoder, gc_seed, gc_options);
      const bool pass = result.max_relative_error < gc_tolerance;
      out << "max relative error " << std::scientific << std::setprecision(3) << result.max_relative_error << " over "
          << result.checked << " elements: " << (pass ? "PASS" : "FAIL") << '\n';
      if (!pass) {
        out << "worst element " << result.worst_parameter << ": analytic " << result.worst_analytic << ", numeric "
            << result.worst_numeric << '\n';
      }
      return pass ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace threadsel
