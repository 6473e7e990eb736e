#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "threadsel/checkpoint.hpp"
#include "threadsel/corpus.hpp"
#include "threadsel/dependency.hpp"
#include "threadsel/encoder.hpp"
#include "threadsel/extraction.hpp"
#include "threadsel/grad_check.hpp"

namespace threadsel {

struct TrainConfig {
  double lr = 5e-5;
  double lr_decay = 0.4;
  std::size_t batch = 32;
  double eval_interval = 0.5;   // epochs between validations
  double patience = 1.5;        // epochs without a hits@1 gain before stopping
  std::size_t max_epochs = 100;
  ExtractionConfig extraction;
  ThreadMode mode = ThreadMode::kDependency;
  std::uint64_t seed = 1;
  std::size_t vocab_size = 30000;
  std::size_t min_freq = 1;
  std::size_t workers = 1;  // validation only; the optimizer path is single-threaded

  std::size_t patience_checkpoints() const;
  void validate() const;
};

struct CheckpointRecord {
  std::size_t index = 0;
  std::size_t step = 0;
  double epoch = 0.0;
  double lr = 0.0;  // learning rate used for the steps leading up to this checkpoint
  double train_loss = 0.0;
  double valid_hits1 = 0.0;
  double valid_mrr = 0.0;

  friend bool operator==(const CheckpointRecord&, const CheckpointRecord&) = default;
};

struct TrainReport {
  std::vector<CheckpointRecord> checkpoints;
  std::size_t best_checkpoint = 0;
  std::size_t steps = 0;
  std::size_t steps_per_epoch = 0;
  std::string stop_reason;

  const CheckpointRecord& best() const { return checkpoints.at(best_checkpoint); }
  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainReport report;
};

using TrainLog = std::function<void(const std::string&)>;

// Trains T1/T2 with in-batch negatives and Adamax. Validation ranks the
// provided candidate pools; a checkpoint without a hits@1 gain decays the
// learning rate. Returns the best checkpoint's parameters.
TrainResult train(const std::vector<Dialogue>& train_set, const ForestMap& train_forests,
                  const std::vector<Dialogue>& valid_set, const ForestMap& valid_forests, const TrainConfig& config,
                  EncoderConfig encoder, const TrainLog& log = {});

// One optimisation batch: mean in-batch cross entropy of the given examples
// (response = candidates[label]) built into `g`.
Var batch_objective(Graph& g, const ThreadEncoderModel& model, std::span<const ExampleInputs* const> examples);

// Finite-difference check of the full pipeline (thread preparation, both
// encoders, aggregation, matching and the in-batch loss) on a two-example
// batch of small synthetic dialogues. encoder.vocab_size is filled in.
// Embedding tables are rescaled to unit variance before checking; see the
// comment in the implementation.
GradCheckResult check_pipeline_gradients(EncoderConfig encoder, std::uint64_t seed,
                                         const GradCheckOptions& options = {});

std::string report_to_json(const TrainReport& report);
std::string format_learning_curve(const TrainReport& report);

}  // namespace threadsel
