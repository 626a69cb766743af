#include <doctest.h>

#include <cmath>
#include <set>

#include "../support/synthetic.hpp"
#include "mac/errors.hpp"
#include "mac/training.hpp"

using namespace mac;

namespace {

ParamList single(const Tensor& t, bool pad_row = false) { return {NamedParam{"p", t, pad_row}}; }

// Closed-form Adam with coupled decay, written out per scalar.
double oracle_adam(double theta, const std::vector<double>& grads, const AdamConfig& c) {
  double m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1] + c.weight_decay * theta;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, static_cast<double>(t)));
    const double vh = v / (1 - std::pow(c.beta2, static_cast<double>(t)));
    theta -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
  return theta;
}

std::vector<ClaimRecord> synthetic_records(std::size_t claims, std::uint64_t seed) {
  testing::SyntheticSpec spec;
  spec.claims = claims;
  spec.seed = seed;
  return testing::records_of(testing::make_planted_corpus(spec));
}

MacConfig small_model() {
  MacConfig cfg = MacConfig::tiny();
  cfg.use_speakers = false;
  cfg.claim_len = 3;
  cfg.doc_len = 4;
  cfg.max_docs = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("adam first step moves by lr against the gradient sign") {
    auto t = Tensor::from(1, 3, {0.5, -0.2, 0.0}, true);
    auto params = single(t);
    auto state = AdamState::for_params(params);
    AdamConfig c;
    c.weight_decay = 0.0;
    c.lr = 0.01;
    t.grad()[0] = 3.0;
    t.grad()[1] = -0.001;
    t.grad()[2] = 0.0;
    adam_step(params, state, c);
    CHECK(t(0, 0) == doctest::Approx(0.49).epsilon(1e-9));
    CHECK(t(0, 1) == doctest::Approx(-0.19).epsilon(1e-6));
    CHECK(t(0, 2) == 0.0);
    CHECK(state.step == 1);
  }

  TEST_CASE("adam matches the closed form over several steps") {
    AdamConfig c;
    c.lr = 0.05;
    c.weight_decay = 0.01;
    const std::vector<double> grads = {0.3, -1.2, 0.7, 0.0, 2.5};
    auto t = Tensor::from(1, 1, {0.8}, true);
    auto params = single(t);
    auto state = AdamState::for_params(params);
    for (double g : grads) {
      t.grad()[0] = g;
      adam_step(params, state, c);
    }
    CHECK(t(0, 0) == doctest::Approx(oracle_adam(0.8, grads, c)).epsilon(1e-14));
  }

  TEST_CASE("decoupled decay shrinks before the adaptive step") {
    AdamConfig c;
    c.lr = 0.1;
    c.weight_decay = 0.5;
    c.decoupled = true;
    auto t = Tensor::from(1, 1, {2.0}, true);
    auto params = single(t);
    auto state = AdamState::for_params(params);
    t.grad()[0] = 0.0;
    adam_step(params, state, c);
    CHECK(t(0, 0) == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-14));
  }

  TEST_CASE("zero learning rate leaves values unchanged") {
    Rng rng(3);
    auto cfg = small_model();
    auto params = init_params(cfg, 5);
    auto before = snapshot_values(params);
    auto list = params.parameters();
    for (auto& p : list)
      for (auto& g : p.tensor.grad()) g = uniform(rng, -1.0, 1.0);
    auto state = AdamState::for_params(list);
    AdamConfig c;
    c.lr = 0.0;
    c.decoupled = true;
    adam_step(list, state, c);
    CHECK(snapshot_values(params) == before);
  }

  TEST_CASE("pad rows stay zero and bad gradients are rejected") {
    auto t = Tensor::from(2, 2, {0, 0, 1, 1}, true);
    auto params = single(t, true);
    auto state = AdamState::for_params(params);
    for (auto& g : t.grad()) g = 1.0;
    adam_step(params, state, AdamConfig{});
    CHECK(t(0, 0) == 0.0);
    CHECK(t(0, 1) == 0.0);
    CHECK(t(1, 0) < 1.0);

    const double kept = t(1, 1);
    t.grad()[3] = std::nan("");
    try {
      adam_step(params, state, AdamConfig{});
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("'p'") != std::string::npos);
    }
    CHECK(t(1, 1) == kept);
    CHECK(state.step == 1);

    zero_grads(params);
    for (double g : t.grad()) CHECK(g == 0.0);
  }

  TEST_CASE("train config keys") {
    TrainConfig c;
    c.set("lr", "0.01");
    c.set("batch_size", "8");
    c.set("decoupled_weight_decay", "true");
    CHECK(c.adam.lr == 0.01);
    CHECK(c.batch_size == 8);
    CHECK(c.adam.decoupled);
    CHECK_THROWS_AS(c.set("bogus", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("batch_size", "many"), ConfigError);
    CHECK(TrainConfig::has_key("patience"));
    CHECK_FALSE(to_json(c).contains("workers"));
  }

  TEST_CASE("early stopping scripts") {
    const std::vector<double> snap = {1.0};
    EarlyStopState s;
    s.patience = 2;
    CHECK(early_stop_update(s, 1, 0.5, 0.6, snap) == EarlyStopDecision::keep_going);
    CHECK(s.best_epoch == 1);
    // Equal f1, better auc: improvement.
    CHECK(early_stop_update(s, 2, 0.5, 0.7, std::vector<double>{2.0}) == EarlyStopDecision::keep_going);
    CHECK(s.best_epoch == 2);
    CHECK(s.best_checkpoint == std::vector<double>{2.0});
    // Equal f1, worse auc: no improvement.
    CHECK(early_stop_update(s, 3, 0.5, 0.65, snap) == EarlyStopDecision::keep_going);
    CHECK(s.epochs_since_improvement == 1);
    // Lower f1 with higher auc still counts against patience.
    CHECK(early_stop_update(s, 4, 0.4, 0.99, snap) == EarlyStopDecision::stop);
    CHECK(s.best_epoch == 2);
    CHECK(s.best_checkpoint == std::vector<double>{2.0});

    EarlyStopState r;
    r.patience = 3;
    early_stop_update(r, 1, 0.2, 0.5, snap);
    early_stop_update(r, 2, 0.1, 0.5, snap);
    early_stop_update(r, 3, 0.3, 0.4, std::vector<double>{3.0});
    CHECK(r.epochs_since_improvement == 0);
    CHECK(r.best_epoch == 3);
  }

  TEST_CASE("training lowers the loss on a planted corpus") {
    auto records = synthetic_records(40, 3);
    auto enc = Encoder::build(records, 1);
    auto cfg = small_model();
    enc.configure(cfg);
    auto instances = encode_all(records, enc, cfg);
    auto params = init_params(cfg, 9);
    TrainConfig train;
    train.batch_size = 8;
    train.adam.lr = 0.01;
    auto state = AdamState::for_params(params.parameters());
    const double start = mean_loss(params, cfg, instances);
    for (std::size_t e = 0; e < 15; ++e) train_epoch(params, state, instances, cfg, train, 4, e);
    CHECK(mean_loss(params, cfg, instances) < start);
    auto scores = predict_scores(params, cfg, instances);
    CHECK(scores.size() == instances.size());
    CHECK(labels_of(instances).size() == instances.size());
  }

  TEST_CASE("fit restores the best epoch and respects max epochs") {
    auto records = synthetic_records(40, 5);
    auto enc = Encoder::build(records, 1);
    auto cfg = small_model();
    enc.configure(cfg);
    auto instances = encode_all(records, enc, cfg);
    std::span<const ClaimInstance> all(instances);
    auto params = init_params(cfg, 2);
    TrainConfig train;
    train.batch_size = 10;
    train.max_epochs = 4;
    train.patience = 2;
    auto result = fit(params, cfg, all.subspan(0, 30), all.subspan(30), train, 1, 0);
    CHECK(result.history.size() <= 4);
    CHECK(result.best_epoch >= 1);
    CHECK(result.best_epoch <= result.history.size());
    if (result.history.size() < 4) CHECK(result.history.back().stopped);
    auto val = predict_scores(params, cfg, all.subspan(30));
    auto rep = classification_metrics(val, labels_of(all.subspan(30)), train.threshold);
    CHECK(rep.f1_macro == doctest::Approx(result.history[result.best_epoch - 1].val_f1_macro).epsilon(1e-12));
  }

  TEST_CASE("cross validation partitions and is deterministic") {
    auto records = synthetic_records(60, 11);
    TrainConfig train;
    train.folds = 3;
    train.max_epochs = 2;
    train.batch_size = 16;
    train.min_freq = 1;
    auto cfg = small_model();
    auto a = run_cv(records, Schema::snopes, cfg, train, 42);
    REQUIRE(a.outcomes.size() == 3);
    std::set<std::string> test_ids, val_ids;
    for (auto i : a.split.validation) val_ids.insert(records[i].claim_id);
    std::size_t total = 0;
    for (auto& o : a.outcomes) {
      total += o.test_claim_ids.size();
      for (auto& id : o.test_claim_ids) {
        CHECK(test_ids.insert(id).second);
        CHECK(val_ids.count(id) == 0);
      }
      CHECK_FALSE(o.config.use_speakers);
    }
    CHECK(total + val_ids.size() == records.size());

    train.workers = 3;
    auto b = run_cv(records, Schema::snopes, cfg, train, 42);
    for (std::size_t f = 0; f < 3; ++f) {
      CHECK(snapshot_values(a.outcomes[f].params) == snapshot_values(b.outcomes[f].params));
      CHECK(a.outcomes[f].report.f1_macro == b.outcomes[f].report.f1_macro);
    }
    auto c = run_cv(records, Schema::snopes, cfg, train, 43);
    CHECK(snapshot_values(c.outcomes[0].params) != snapshot_values(a.outcomes[0].params));
  }

  TEST_CASE("a single instance is memorised") {
    auto records = synthetic_records(2, 8);
    records.resize(1);
    auto enc = Encoder::build(records, 1);
    auto cfg = small_model();
    enc.configure(cfg);
    auto instances = encode_all(records, enc, cfg);
    auto params = init_params(cfg, 3);
    TrainConfig train;
    train.adam.lr = 0.01;  // 200 steps at 0.001 plateau near 0.06
    auto state = AdamState::for_params(params.parameters());
    double first = 0.0, last = 0.0;
    for (std::size_t e = 0; e < 200; ++e) {
      last = train_epoch(params, state, instances, cfg, train, 1, e);
      if (e == 0) first = last;
    }
    CHECK(last < first);
    CHECK(mean_loss(params, cfg, instances) < 0.05);
  }

  TEST_CASE("cross validation separates a planted corpus") {
    // 200 claims so the 10% validation set is large enough for early stopping.
    auto records = synthetic_records(200, 21);
    TrainConfig train;
    train.max_epochs = 100;
    train.min_freq = 1;
    train.adam.lr = 0.01;
    train.workers = 5;
    auto cv = run_cv(records, Schema::snopes, small_model(), train, 8);
    REQUIRE(cv.mean.auc.has_value());
    CHECK(*cv.mean.auc >= 0.95);
  }
}
