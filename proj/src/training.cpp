#include "mac/training.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <exception>
#include <thread>

#include "mac/errors.hpp"
#include "mac/random.hpp"

namespace mac {

namespace {

constexpr double kTieTolerance = 1e-12;

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "' expects a count, got '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError("config key '" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "' expects true/false, got '" + value + "'");
}

constexpr std::array kTrainKeys = {"lr",         "beta1",     "beta2",    "adam_eps",   "weight_decay",
                                   "decoupled_weight_decay", "batch_size", "patience", "max_epochs", "folds",
                                   "validation_fraction",    "min_freq",   "threshold", "glove",     "workers"};

template <typename T>
std::vector<T> pick(const std::vector<T>& items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

}  // namespace

AdamState AdamState::for_params(const ParamList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.size(), 0.0);
    s.v.emplace_back(p.tensor.size(), 0.0);
  }
  return s;
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

void adam_step(const ParamList& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adam_step: optimizer state does not match the parameter list");
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) continue;
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw NumericalError("non-finite gradient in parameter '" + p.name + "' at index " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor theta = params[k].tensor;
    if (!theta.requires_grad()) continue;
    auto values = theta.values();
    auto grad = theta.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != values.size()) throw ContractError("adam_step: moment shape mismatch for " + params[k].name);
    // The PAD row (row 0) never moves.
    const std::size_t first = params[k].pad_row ? theta.cols() : 0;
    for (std::size_t i = 0; i < first; ++i) grad[i] = 0.0;
    for (std::size_t i = first; i < values.size(); ++i) {
      double gi = grad[i];
      if (cfg.decoupled) values[i] -= cfg.lr * cfg.weight_decay * values[i];
      else gi += cfg.weight_decay * values[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    for (std::size_t i = 0; i < first; ++i) values[i] = 0.0;
  }
}

bool TrainConfig::has_key(const std::string& key) {
  return std::find(kTrainKeys.begin(), kTrainKeys.end(), key) != kTrainKeys.end();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "lr") adam.lr = parse_real(key, value);
  else if (key == "beta1") adam.beta1 = parse_real(key, value);
  else if (key == "beta2") adam.beta2 = parse_real(key, value);
  else if (key == "adam_eps") adam.eps = parse_real(key, value);
  else if (key == "weight_decay") adam.weight_decay = parse_real(key, value);
  else if (key == "decoupled_weight_decay") adam.decoupled = parse_flag(key, value);
  else if (key == "batch_size") batch_size = parse_count(key, value);
  else if (key == "patience") patience = parse_count(key, value);
  else if (key == "max_epochs") max_epochs = parse_count(key, value);
  else if (key == "folds") folds = parse_count(key, value);
  else if (key == "validation_fraction") validation_fraction = parse_real(key, value);
  else if (key == "min_freq") min_freq = parse_count(key, value);
  else if (key == "threshold") threshold = parse_real(key, value);
  else if (key == "glove") glove_path = value;
  else if (key == "workers") workers = std::max<std::size_t>(1, parse_count(key, value));
  else throw ConfigError("unknown training config key '" + key + "'");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie strictly between 0 and 1");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  // workers is deliberately absent: it cannot change any result.
  return {{"lr", cfg.adam.lr},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"adam_eps", cfg.adam.eps},
          {"weight_decay", cfg.adam.weight_decay},
          {"decoupled_weight_decay", cfg.adam.decoupled},
          {"batch_size", cfg.batch_size},
          {"patience", cfg.patience},
          {"max_epochs", cfg.max_epochs},
          {"folds", cfg.folds},
          {"validation_fraction", cfg.validation_fraction},
          {"min_freq", cfg.min_freq},
          {"threshold", cfg.threshold},
          {"glove", cfg.glove_path ? nlohmann::json(*cfg.glove_path) : nlohmann::json(nullptr)}};
}

double train_epoch(MacParams& params, AdamState& state, std::span<const ClaimInstance> instances,
                   const MacConfig& cfg, const TrainConfig& train, std::uint64_t seed, std::size_t epoch) {
  if (instances.empty()) return 0.0;
  const ParamList plist = params.parameters();
  double total = 0.0;
  for (const auto& batch : batches(instances.size(), train.batch_size, seed, epoch)) {
    zero_grads(plist);
    const double inv = 1.0 / static_cast<double>(batch.size());
    // One tape per instance: the batch-mean gradient is the sum of the
    // scaled per-instance gradients, accumulated in batch order.
    for (std::size_t idx : batch) {
      const ClaimInstance& inst = instances[idx];
      Tape tape;
      ForwardResult out = forward_graph(tape, params, cfg, inst);
      Tensor loss = binary_cross_entropy_with_logit(tape, out.logit, inst.label);
      total += loss.item();
      Tensor scaled = scale(tape, loss, inv);
      tape.backward(scaled);
    }
    adam_step(plist, state, train.adam);
  }
  zero_grads(plist);
  const double mean = total / static_cast<double>(instances.size());
  if (!std::isfinite(mean)) throw NumericalError("non-finite training loss in epoch " + std::to_string(epoch));
  return mean;
}

double mean_loss(const MacParams& params, const MacConfig& cfg, std::span<const ClaimInstance> instances) {
  if (instances.empty()) return 0.0;
  double total = 0.0;
  for (const auto& inst : instances) {
    Tape tape(false);
    ForwardResult out = forward_graph(tape, params, cfg, inst);
    total += binary_cross_entropy(tape, out.probability, inst.label).item();
  }
  return total / static_cast<double>(instances.size());
}

std::vector<double> predict_scores(const MacParams& params, const MacConfig& cfg,
                                   std::span<const ClaimInstance> instances) {
  std::vector<double> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(forward(params, cfg, inst).y_hat);
  return out;
}

std::vector<int> labels_of(std::span<const ClaimInstance> instances) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.label);
  return out;
}

EarlyStopDecision early_stop_update(EarlyStopState& state, std::size_t epoch, double val_f1_macro, double val_auc,
                                    std::span<const double> checkpoint) {
  const bool better_f1 = val_f1_macro > state.best_f1_macro + kTieTolerance;
  const bool tied_f1 = std::abs(val_f1_macro - state.best_f1_macro) <= kTieTolerance;
  if (state.best_epoch == 0 || better_f1 || (tied_f1 && val_auc > state.best_auc)) {
    state.best_f1_macro = val_f1_macro;
    state.best_auc = val_auc;
    state.best_epoch = epoch;
    state.epochs_since_improvement = 0;
    state.best_checkpoint.assign(checkpoint.begin(), checkpoint.end());
    return EarlyStopDecision::keep_going;
  }
  ++state.epochs_since_improvement;
  return state.epochs_since_improvement >= state.patience ? EarlyStopDecision::stop : EarlyStopDecision::keep_going;
}

nlohmann::ordered_json to_json(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["fold"] = log.fold;
  j["epoch"] = log.epoch;
  j["train_loss"] = log.train_loss;
  j["val_f1_macro"] = log.val_f1_macro;
  j["val_auc"] = log.val_auc;
  j["stopped"] = log.stopped;
  return j;
}

FitResult fit(MacParams& params, const MacConfig& cfg, std::span<const ClaimInstance> train_set,
              std::span<const ClaimInstance> validation_set, const TrainConfig& train, std::uint64_t seed,
              std::size_t fold) {
  FitResult result;
  AdamState state = AdamState::for_params(params.parameters());
  EarlyStopState stop;
  stop.patience = train.patience;
  const std::vector<int> val_labels = labels_of(validation_set);

  for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch) {
    EpochLog log;
    log.fold = fold;
    log.epoch = epoch;
    log.train_loss = train_epoch(params, state, train_set, cfg, train, seed, epoch);
    const auto scores = predict_scores(params, cfg, validation_set);
    const EvalReport val = evaluate_scores(scores, val_labels, train.threshold);
    log.val_f1_macro = val.f1_macro;
    log.val_auc = *val.auc;
    const auto decision = early_stop_update(stop, epoch, log.val_f1_macro, log.val_auc, snapshot_values(params));
    log.stopped = decision == EarlyStopDecision::stop;
    result.history.push_back(log);
    if (log.stopped) break;
  }
  if (stop.best_epoch != 0) restore_values(params, stop.best_checkpoint);
  result.best_epoch = stop.best_epoch;
  return result;
}

MacConfig config_for_schema(MacConfig cfg, Schema schema) {
  if (schema == Schema::snopes) cfg.use_speakers = false;
  return cfg;
}

CvResult run_cv(std::span<const ClaimRecord> records, Schema schema, MacConfig model_cfg, const TrainConfig& train,
                std::uint64_t seed, const GloveTable* glove) {
  model_cfg = config_for_schema(model_cfg, schema);
  if (glove && glove->dim != model_cfg.word_dim)
    throw ConfigError("GloVe dimension " + std::to_string(glove->dim) + " differs from word_dim " +
                      std::to_string(model_cfg.word_dim));

  const std::vector<ClaimRecord> all(records.begin(), records.end());
  std::vector<int> labels;
  labels.reserve(all.size());
  for (const auto& r : all) labels.push_back(r.label);

  CvResult cv;
  cv.split = split_validation(labels, train.validation_fraction, derive_seed(seed, 0x7661));
  const auto rest_labels = pick(labels, cv.split.rest);
  cv.folds = stratified_folds(rest_labels, train.folds, derive_seed(seed, 0x666f));
  const auto validation_records = pick(all, cv.split.validation);
  const auto rest_records = pick(all, cv.split.rest);

  cv.outcomes.resize(cv.folds.size());
  auto run_fold = [&](std::size_t f) {
    const Fold& fold = cv.folds[f];
    const auto train_records = pick(rest_records, fold.train);
    const auto test_records = pick(rest_records, fold.test);

    FoldOutcome& out = cv.outcomes[f];
    out.fold = f;
    out.encoder = Encoder::build(train_records, train.min_freq);
    out.config = model_cfg;
    out.encoder.configure(out.config);
    out.config.validate();
    out.init_seed = derive_seed(seed, 1000 + f);

    std::optional<PretrainedEmbeddings> pretrained;
    if (glove) pretrained = align_pretrained(*glove, out.encoder.vocab);
    out.params = init_params(out.config, out.init_seed, pretrained ? &*pretrained : nullptr);

    const auto train_set = encode_all(train_records, out.encoder, out.config);
    const auto val_set = encode_all(validation_records, out.encoder, out.config);
    const auto test_set = encode_all(test_records, out.encoder, out.config);
    out.fit = fit(out.params, out.config, train_set, val_set, train, derive_seed(seed, 2000 + f), f);

    const auto scores = predict_scores(out.params, out.config, test_set);
    out.report = evaluate_scores(scores, labels_of(test_set), train.threshold);
    for (const auto& r : test_records) out.test_claim_ids.push_back(r.claim_id);
  };

  const std::size_t workers = std::clamp<std::size_t>(train.workers, 1, cv.folds.size());
  if (workers == 1) {
    for (std::size_t f = 0; f < cv.folds.size(); ++f) run_fold(f);
  } else {
    // Static assignment: worker w trains folds w, w + workers, ...
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t f = w; f < cv.folds.size(); f += workers) run_fold(f);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  std::vector<EvalReport> reports;
  for (const auto& o : cv.outcomes) reports.push_back(o.report);
  cv.mean = mean_report(reports);
  return cv;
}

}  // namespace mac
