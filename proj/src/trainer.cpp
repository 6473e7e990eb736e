#include "threadsel/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "threadsel/adamax.hpp"
#include "threadsel/error.hpp"
#include "threadsel/eval.hpp"
#include "threadsel/matching.hpp"
#include "threadsel/synthetic.hpp"

namespace threadsel {

namespace {

constexpr double kMinLearningRate = 1e-9;

std::vector<ExampleInputs> prepare_all(const std::vector<Dialogue>& dialogues, const ForestMap& forests,
                                       const TrainConfig& config, const Tokenizer& tokenizer, const char* role) {
  std::vector<ExampleInputs> out;
  out.reserve(dialogues.size());
  for (const auto& d : dialogues) {
    if (!d.label) throw DataError(std::string(role) + " dialogue " + d.id + " has no label");
    auto it = forests.find(d.id);
    const DependencyForest* forest = it == forests.end() ? nullptr : &it->second;
    const auto threads = build_threads(config.mode, d.num_turns(), forest, config.extraction);
    out.push_back(prepare_example(d, threads, tokenizer));
  }
  return out;
}

}  // namespace

std::size_t TrainConfig::patience_checkpoints() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(patience / eval_interval)));
}

void TrainConfig::validate() const {
  if (batch < 2) throw ConfigError("in-batch negatives require batch >= 2");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(lr_decay >= 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in [0, 1]");
  if (!(eval_interval > 0.0)) throw ConfigError("eval_interval must be positive");
  if (!(patience > 0.0)) throw ConfigError("patience must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  extraction.validate();
}

Var batch_objective(Graph& g, const ThreadEncoderModel& model, std::span<const ExampleInputs* const> examples) {
  std::vector<Var> contexts;
  std::vector<Var> responses;
  contexts.reserve(examples.size());
  responses.reserve(examples.size());
  for (const auto* example : examples) {
    contexts.push_back(model.context_embedding(g, example->threads));
    responses.push_back(model.candidate_embedding(g, example->candidates.at(example->label)));
  }
  const Var scores = batch_scores(g, contexts, ops::concat_rows(g, responses));
  return batch_loss(g, scores);
}

TrainResult train(const std::vector<Dialogue>& train_set, const ForestMap& train_forests,
                  const std::vector<Dialogue>& valid_set, const ForestMap& valid_forests, const TrainConfig& config,
                  EncoderConfig encoder, const TrainLog& log) {
  config.validate();
  if (train_set.empty()) throw DataError("empty training corpus");
  if (valid_set.empty()) throw DataError("empty validation corpus");

  TrainResult result;
  Checkpoint& checkpoint = result.checkpoint;
  checkpoint.tokenizer = build_vocab(train_set, config.vocab_size, config.min_freq);
  checkpoint.mode = config.mode;
  checkpoint.extraction = config.extraction;
  encoder.vocab_size = checkpoint.tokenizer.size();
  checkpoint.model = ThreadEncoderModel::create(encoder, config.seed);
  ThreadEncoderModel& model = checkpoint.model;

  const auto train_inputs = prepare_all(train_set, train_forests, config, checkpoint.tokenizer, "training");
  const auto valid_inputs = prepare_all(valid_set, valid_forests, config, checkpoint.tokenizer, "validation");

  auto params = model.parameters();
  AdamaxOptimizer optimizer(params, {.lr = config.lr});
  optimizer.zero_grad();

  TrainReport& report = result.report;
  const std::size_t n = train_inputs.size();
  report.steps_per_epoch = (n + config.batch - 1) / config.batch;
  const auto eval_every = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.eval_interval * static_cast<double>(report.steps_per_epoch))));
  const std::size_t patience = config.patience_checkpoints();

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<Matrix> best_values;
  double best_hits = -1.0;
  std::size_t bad_checkpoints = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;

  auto run_checkpoint = [&]() -> bool {
    const auto ranked = rank_prepared(model, valid_inputs, config.workers);
    CheckpointRecord record;
    record.index = report.checkpoints.size();
    record.step = report.steps;
    record.epoch = static_cast<double>(report.steps) / static_cast<double>(report.steps_per_epoch);
    record.lr = optimizer.learning_rate();
    record.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    record.valid_hits1 = hits_at_k(ranked, 1);
    record.valid_mrr = mrr(ranked);
    report.checkpoints.push_back(record);
    loss_sum = 0.0;
    loss_count = 0;

    bool stop = false;
    if (record.valid_hits1 > best_hits) {
      best_hits = record.valid_hits1;
      report.best_checkpoint = record.index;
      bad_checkpoints = 0;
      best_values.clear();
      for (const auto* p : params) best_values.push_back(p->value);
    } else {
      ++bad_checkpoints;
      optimizer.set_learning_rate(optimizer.learning_rate() * config.lr_decay);
      if (optimizer.learning_rate() < kMinLearningRate) {
        report.stop_reason = "learning rate reached zero";
        stop = true;
      } else if (bad_checkpoints >= patience) {
        report.stop_reason = "no hits@1 gain within patience";
        stop = true;
      }
    }
    if (log) {
      std::ostringstream line;
      line << std::fixed << std::setprecision(4) << "checkpoint " << record.index << " step " << record.step
           << " epoch " << record.epoch << " lr " << std::scientific << record.lr << std::fixed << " loss "
           << record.train_loss << " valid hits@1 " << record.valid_hits1 << " MRR " << record.valid_mrr;
      log(line.str());
    }
    return stop;
  };

  bool stopped = false;
  for (std::size_t epoch = 0; epoch < config.max_epochs && !stopped; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n && !stopped; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      std::vector<const ExampleInputs*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_inputs[order[i]]);

      Graph g;
      g.set_release_after_backward(true);
      const Var loss = batch_objective(g, model, batch);
      loss_sum += g.value(loss)(0, 0);
      ++loss_count;
      g.backward(loss);
      optimizer.step();
      optimizer.zero_grad();
      ++report.steps;

      if (report.steps % eval_every == 0) stopped = run_checkpoint();
    }
  }
  if (!stopped) {
    if (report.checkpoints.empty() || report.checkpoints.back().step != report.steps) run_checkpoint();
    report.stop_reason = "reached max_epochs";
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  return result;
}

GradCheckResult check_pipeline_gradients(EncoderConfig encoder, std::uint64_t seed, const GradCheckOptions& options) {
  SyntheticSpec spec;
  spec.num_dialogues = 2;
  spec.threads = 2;
  spec.head_turns_min = 2;
  spec.head_turns_max = 3;
  spec.tail_turns_min = 1;
  spec.tail_turns_max = 2;
  spec.tokens_per_turn_min = 2;
  spec.tokens_per_turn_max = 4;
  spec.num_topics = 4;
  spec.topic_vocab = 4;
  spec.pool_size = 2;
  const auto corpus = generate_synthetic(spec, seed);
  const auto tokenizer = build_vocab(corpus.dialogues, 1000);
  encoder.vocab_size = tokenizer.size();
  ThreadEncoderModel model = ThreadEncoderModel::create(encoder, seed);

  std::vector<ExampleInputs> examples;
  for (const auto& d : corpus.dialogues) {
    const auto threads = extract_threads(corpus.forests.at(d.id), ExtractionConfig{});
    examples.push_back(prepare_example(d, threads, tokenizer));
  }
  const std::vector<const ExampleInputs*> batch{&examples[0], &examples[1]};
  auto params = model.parameters();
  // Token and position tables go to unit scale. At the 0.02 training init
  // every layer norm sees nearly constant rows, its higher derivatives are
  // huge and central differences at eps 1e-4 carry truncation error above the
  // tolerance even though the backward pass is exact.
  for (auto* p : params) {
    if (p->name.ends_with("token_embedding") || p->name.ends_with("position_embedding")) p->value *= 50.0;
  }
  const LossClosure loss = [&](bool with_gradients) {
    Graph g;
    const Var objective = batch_objective(g, model, batch);
    const double value = g.value(objective)(0, 0);
    if (with_gradients) g.backward(objective);
    return value;
  };
  return grad_check(loss, params, options);
}

std::string report_to_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["steps"] = report.steps;
  j["steps_per_epoch"] = report.steps_per_epoch;
  j["best_checkpoint"] = report.best_checkpoint;
  j["stop_reason"] = report.stop_reason;
  j["checkpoints"] = nlohmann::ordered_json::array();
  for (const auto& c : report.checkpoints) {
    nlohmann::ordered_json r;
    r["index"] = c.index;
    r["step"] = c.step;
    r["epoch"] = c.epoch;
    r["lr"] = c.lr;
    r["train_loss"] = c.train_loss;
    r["valid_hits1"] = c.valid_hits1;
    r["valid_mrr"] = c.valid_mrr;
    j["checkpoints"].push_back(std::move(r));
  }
  return j.dump(2);
}

std::string format_learning_curve(const TrainReport& report) {
  std::ostringstream out;
  out << std::right << std::setw(5) << "ckpt" << std::setw(8) << "step" << std::setw(8) << "epoch" << std::setw(12)
      << "lr" << std::setw(12) << "loss" << std::setw(10) << "hits@1" << std::setw(10) << "MRR" << '\n';
  for (const auto& c : report.checkpoints) {
    out << std::setw(5) << c.index << std::setw(8) << c.step << std::setw(8) << std::fixed << std::setprecision(2)
        << c.epoch << std::setw(12) << std::scientific << std::setprecision(3) << c.lr << std::setw(12)
        << std::fixed << std::setprecision(4) << c.train_loss << std::setw(10) << c.valid_hits1 << std::setw(10)
        << c.valid_mrr << (c.index == report.best_checkpoint ? "  *" : "") << '\n';
  }
  return out.str();
}

}  // namespace threadsel
