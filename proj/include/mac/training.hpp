#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mac/data.hpp"
#include "mac/metrics.hpp"
#include "mac/model.hpp"

namespace mac {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
  /// false: g += weight_decay * theta before the moments (L2).
  /// true: theta -= lr * weight_decay * theta, moments see the raw gradient.
  bool decoupled = false;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamList& params);
};

/// One update from the gradients stored in each tensor's grad buffer.
/// Tensors that do not require gradients are skipped. PAD rows get no
/// update and are re-zeroed afterwards. Throws NumericalError (naming the
/// parameter) on a non-finite gradient before touching any value.
void adam_step(const ParamList& params, AdamState& state, const AdamConfig& cfg);

void zero_grads(const ParamList& params);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  std::size_t max_epochs = 300;
  std::size_t folds = 5;
  double validation_fraction = 0.1;
  std::size_t min_freq = 2;
  double threshold = 0.5;
  std::optional<std::string> glove_path;
  std::size_t workers = 1;  // parallel folds

  /// Applies one `key = value` setting; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  static bool has_key(const std::string& key);
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Mean loss over `instances` for one epoch. Each batch accumulates the
/// gradient of its mean loss and then takes one Adam step.
double train_epoch(MacParams& params, AdamState& state, std::span<const ClaimInstance> instances,
                   const MacConfig& cfg, const TrainConfig& train, std::uint64_t seed, std::size_t epoch);

/// Mean cross-entropy (clamped probability form) without touching gradients.
double mean_loss(const MacParams& params, const MacConfig& cfg, std::span<const ClaimInstance> instances);

std::vector<double> predict_scores(const MacParams& params, const MacConfig& cfg,
                                   std::span<const ClaimInstance> instances);
std::vector<int> labels_of(std::span<const ClaimInstance> instances);

struct EarlyStopState {
  double best_f1_macro = -std::numeric_limits<double>::infinity();
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;  // 1-based; 0 = nothing recorded yet
  std::size_t epochs_since_improvement = 0;
  std::size_t patience = 10;
  std::vector<double> best_checkpoint;
};

enum class EarlyStopDecision { keep_going, stop };

/// Improvement: f1 > best, or f1 equal to best within 1e-12 and auc > best.
/// Improvement copies `checkpoint` and resets the counter; otherwise the
/// counter grows and training stops once it reaches the patience.
EarlyStopDecision early_stop_update(EarlyStopState& state, std::size_t epoch, double val_f1_macro, double val_auc,
                                    std::span<const double> checkpoint);

struct EpochLog {
  std::size_t fold = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1_macro = 0.0;
  double val_auc = 0.0;
  bool stopped = false;
};

nlohmann::ordered_json to_json(const EpochLog& log);

struct FitResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
};

/// Trains until early stopping or max_epochs, then restores the best
/// parameters seen on the validation set.
FitResult fit(MacParams& params, const MacConfig& cfg, std::span<const ClaimInstance> train_set,
              std::span<const ClaimInstance> validation_set, const TrainConfig& train, std::uint64_t seed,
              std::size_t fold);

struct FoldOutcome {
  std::size_t fold = 0;
  MacConfig config;
  Encoder encoder;
  MacParams params;
  std::uint64_t init_seed = 0;
  EvalReport report;
  FitResult fit;
  std::vector<std::string> test_claim_ids;
};

struct CvResult {
  ValidationSplit split;
  std::vector<Fold> folds;  // indices into split.rest
  std::vector<FoldOutcome> outcomes;
  EvalReport mean;
};

/// Validation holdout, stratified folds on the remainder, one fresh model
/// per fold trained with early stopping on the shared validation set.
/// The speaker channel is disabled for the snopes schema.
CvResult run_cv(std::span<const ClaimRecord> records, Schema schema, MacConfig model_cfg, const TrainConfig& train,
                std::uint64_t seed, const GloveTable* glove = nullptr);

/// Model configuration adjusted for a schema (snopes has no speakers).
MacConfig config_for_schema(MacConfig cfg, Schema schema);

}  // namespace mac
