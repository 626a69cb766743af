#include "mac/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "mac/checkpoint.hpp"
#include "mac/data.hpp"
#include "mac/errors.hpp"
#include "mac/metrics.hpp"
#include "mac/training.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace mac {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

std::string read_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(std::string("cannot open ") + what + " '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write output '" + path.string() + "'");
  out << text;
  if (!out) throw ConfigError("failed writing output '" + path.string() + "'");
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + " expects a non-negative integer, got '" + value + "'");
  return out;
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// ---- run setup ------------------------------------------------------------

struct RunSetup {
  Schema schema = Schema::snopes;
  MacConfig model;
  TrainConfig train;
  std::uint64_t seed = 1;
};

void apply_setting(RunSetup& setup, const std::string& key, const std::string& value) {
  if (key == "seed") setup.seed = parse_u64(key, value);
  else if (MacConfig::has_key(key)) setup.model.set(key, value);
  else if (TrainConfig::has_key(key)) setup.train.set(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

/// Options shared by the commands that train models.
struct TrainingFlags {
  std::string corpus;
  std::string schema = "snopes";
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 1;
  std::size_t max_epochs = 0;
  std::size_t hidden = 0;
  std::size_t word_heads = 0;
  std::size_t doc_heads = 0;
  std::size_t workers = 0;
  std::string glove;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* max_epochs_opt = nullptr;
  CLI::Option* hidden_opt = nullptr;
  CLI::Option* word_heads_opt = nullptr;
  CLI::Option* doc_heads_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* glove_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--corpus", corpus, "Corpus JSONL file")->required();
    app->add_option("--schema", schema, "snopes or politifact")->capture_default_str();
    app->add_option("--config", config_path, "Flat key = value settings file");
    app->add_option("--set", overrides, "Override one setting, key=value (repeatable)");
    seed_opt = app->add_option("--seed", seed, "Base random seed");
    max_epochs_opt = app->add_option("--max-epochs", max_epochs, "Epoch cap");
    hidden_opt = app->add_option("--hidden", hidden, "LSTM hidden size H");
    word_heads_opt = app->add_option("--word-heads", word_heads, "Word attention heads h1");
    doc_heads_opt = app->add_option("--doc-heads", doc_heads, "Document attention heads h2");
    workers_opt = app->add_option("--workers", workers, "Folds trained in parallel (default: MAC_WORKERS or 1)");
    glove_opt = app->add_option("--glove", glove, "GloVe text file with word_dim columns");
    app->add_option("--out", out, "Output directory")->required();
  }

  RunSetup resolve() const {
    RunSetup s;
    s.schema = parse_schema(schema);
    s.model = s.schema == Schema::snopes ? MacConfig::snopes() : MacConfig::politifact();
    if (const char* env = std::getenv("MAC_WORKERS"); env && *env) s.train.set("workers", env);
    if (!config_path.empty())
      for (const auto& [k, v] : load_settings(config_path)) apply_setting(s, k, v);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      apply_setting(s, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (seed_opt->count()) s.seed = seed;
    if (max_epochs_opt->count()) s.train.max_epochs = max_epochs;
    if (hidden_opt->count()) s.model.hidden = hidden;
    if (word_heads_opt->count()) s.model.word_heads = word_heads;
    if (doc_heads_opt->count()) s.model.doc_heads = doc_heads;
    if (workers_opt->count()) s.train.workers = std::max<std::size_t>(1, workers);
    if (glove_opt->count()) s.train.glove_path = glove;
    return s;
  }
};

void check_schema_features(const RunSetup& s) {
  if (s.schema == Schema::snopes && s.model.use_speakers)
    throw ConfigError("the snopes schema has no speakers; use_speakers must be false");
}

std::optional<GloveTable> maybe_glove(const RunSetup& s) {
  if (!s.train.glove_path) return std::nullopt;
  return load_glove(*s.train.glove_path, s.model.word_dim);
}

// ---- reports --------------------------------------------------------------

std::vector<double> fold_aucs(const CvResult& cv) {
  std::vector<double> out;
  for (const auto& o : cv.outcomes) out.push_back(o.report.auc.value_or(0.0));
  return out;
}

ojson cv_report(const CvResult& cv, const RunSetup& s) {
  ojson j;
  j["schema"] = to_string(s.schema);
  j["seed"] = s.seed;
  j["validation_size"] = cv.split.validation.size();
  j["folds"] = ojson::array();
  for (const auto& o : cv.outcomes) {
    ojson f;
    f["fold"] = o.fold;
    f["test_size"] = o.test_claim_ids.size();
    f["epochs_run"] = o.fit.history.size();
    f["best_epoch"] = o.fit.best_epoch;
    f["metrics"] = to_json(o.report);
    j["folds"].push_back(std::move(f));
  }
  j["mean"] = to_json(cv.mean);
  const auto aucs = fold_aucs(cv);
  j["std_auc"] = sample_std(aucs);
  return j;
}

std::string train_log(const CvResult& cv) {
  std::string text;
  for (const auto& o : cv.outcomes)
    for (const auto& e : o.fit.history) text += to_json(e).dump() + "\n";
  return text;
}

ojson manifest_base(const std::string& command, const RunSetup& s, const fs::path& corpus, std::uint64_t corpus_hash) {
  ojson m;
  m["command"] = command;
  m["corpus"] = {{"path", corpus.string()}, {"fnv1a", hex64(corpus_hash)}};
  m["schema"] = to_string(s.schema);
  m["seed"] = s.seed;
  m["model_config"] = to_json(s.model);
  m["train_config"] = to_json(s.train);
  return m;
}

void print_summary(std::ostream& out, const std::string& label, const CvResult& cv) {
  out << label << ": mean AUC " << std::fixed << std::setprecision(4) << cv.mean.auc.value_or(0.0) << ", F1 macro "
      << cv.mean.f1_macro << ", F1 micro " << cv.mean.f1_micro << "\n";
  out.unsetf(std::ios::fixed);
  out << std::setprecision(6);
}

// ---- train ----------------------------------------------------------------

/// Replays the settings stored in a previous run's manifest.
RunSetup setup_from_manifest(const fs::path& path, std::string& corpus, std::string& expected_hash) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(path, "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed manifest: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  RunSetup s;
  try {
    s.schema = parse_schema(m.at("schema").get<std::string>());
    s.seed = m.at("seed").get<std::uint64_t>();
    s.model = mac_config_from_json(m.at("model_config"));
    for (const auto& [k, v] : m.at("train_config").items()) {
      if (v.is_null()) continue;
      s.train.set(k, v.is_string() ? v.get<std::string>() : v.dump());
    }
    corpus = m.at("corpus").at("path").get<std::string>();
    expected_hash = m.at("corpus").at("fnv1a").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest is missing a field: ") + e.what());
  }
  if (const char* env = std::getenv("MAC_WORKERS"); env && *env) s.train.set("workers", env);
  return s;
}

int cmd_train(const RunSetup& s, const fs::path& corpus_path, const fs::path& out_dir, std::ostream& out,
              const std::string& expected_hash = {}) {
  check_schema_features(s);
  const std::string started = utc_now();
  const std::uint64_t corpus_hash = fnv1a(read_file(corpus_path, "corpus"));
  if (!expected_hash.empty() && expected_hash != hex64(corpus_hash))
    throw DataError("corpus '" + corpus_path.string() + "' changed since the manifest was written");
  const Corpus corpus = load_corpus(corpus_path, s.schema);
  const auto glove = maybe_glove(s);
  make_output_dir(out_dir);

  const CvResult cv = run_cv(corpus.records, s.schema, s.model, s.train, s.seed, glove ? &*glove : nullptr);

  std::vector<std::string> outputs;
  for (const auto& o : cv.outcomes) {
    nlohmann::json extra;
    extra["fold"] = o.fold;
    extra["best_epoch"] = o.fit.best_epoch;
    extra["corpus_fnv1a"] = hex64(corpus_hash);
    extra["metric_history"] = nlohmann::json::array();
    for (const auto& e : o.fit.history) extra["metric_history"].push_back(nlohmann::json(to_json(e)));
    const std::string name = "fold_" + std::to_string(o.fold) + ".ckpt";
    save_checkpoint(out_dir / name, make_checkpoint(o.params, o.config, o.encoder, s.schema, o.init_seed, extra));
    outputs.push_back(name);
    out << "fold " << o.fold << ": " << o.fit.history.size() << " epochs (best " << o.fit.best_epoch << "), test AUC "
        << format_double(o.report.auc.value_or(0.0)) << "\n";
  }
  write_file(out_dir / "train_log.jsonl", train_log(cv));
  write_file(out_dir / "report.json", cv_report(cv, s).dump(2) + "\n");
  outputs.insert(outputs.end(), {"train_log.jsonl", "report.json"});

  ojson manifest = manifest_base("train", s, corpus_path, corpus_hash);
  manifest["corpus_stats"] = to_json(corpus.stats);
  manifest["outputs"] = outputs;
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_now();
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  print_summary(out, "cross-validation", cv);
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

Schema checkpoint_schema(const Checkpoint& ckpt, const std::string& requested) {
  if (!requested.empty() && parse_schema(requested) != ckpt.schema)
    throw ConfigError("checkpoint was trained on schema '" + to_string(ckpt.schema) + "', not '" + requested + "'");
  return ckpt.schema;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& corpus_path, const std::string& schema, const fs::path& out_path,
             double threshold, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Schema sch = checkpoint_schema(ckpt, schema);
  const std::uint64_t corpus_hash = fnv1a(read_file(corpus_path, "corpus"));
  const Corpus corpus = load_corpus(corpus_path, sch);
  const MacParams params = restore_params(ckpt);
  const auto instances = encode_all(corpus.records, ckpt.encoder, ckpt.config);
  const auto scores = predict_scores(params, ckpt.config, instances);
  const auto labels = labels_of(instances);
  EvalReport report;
  try {
    report = evaluate_scores(scores, labels, threshold);
  } catch (const UndefinedMetricError&) {
    report = classification_metrics(scores, labels, threshold);
  }

  ojson j;
  j["schema"] = to_string(sch);
  j["corpus_fnv1a"] = hex64(corpus_hash);
  j["vocab_hash"] = hex64(ckpt.encoder.vocab.hash());
  j["instances"] = instances.size();
  j["threshold"] = threshold;
  j["metrics"] = to_json(report);
  write_file(out_path, j.dump(2) + "\n");
  out << "evaluated " << instances.size() << " claims: AUC "
      << (report.auc ? format_double(*report.auc) : std::string("undefined")) << ", F1 macro "
      << format_double(report.f1_macro) << ", F1 micro " << format_double(report.f1_micro) << "\n";
  return kExitOk;
}

// ---- explain --------------------------------------------------------------

int cmd_explain(const fs::path& ckpt_path, const fs::path& corpus_path, const std::string& schema,
                const std::string& claim_id, const fs::path& out_path, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Schema sch = checkpoint_schema(ckpt, schema);
  const Corpus corpus = load_corpus(corpus_path, sch);
  const auto it = std::find_if(corpus.records.begin(), corpus.records.end(),
                               [&](const ClaimRecord& r) { return r.claim_id == claim_id; });
  if (it == corpus.records.end()) throw DataError("claim id '" + claim_id + "' not found in corpus");
  const ClaimRecord& record = *it;
  const MacConfig& cfg = ckpt.config;
  const MacParams params = restore_params(ckpt);
  const ClaimInstance inst = encode_instance(record, ckpt.encoder, cfg);
  const Prediction pred = forward(params, cfg, inst, true);
  const AttentionTrace& trace = *pred.trace;

  auto truncated = [](std::vector<std::string> tokens, std::size_t len) {
    if (tokens.size() > len) tokens.resize(len);
    return tokens;
  };

  ojson j;
  j["claim_id"] = record.claim_id;
  j["label"] = record.label;
  j["y_hat"] = pred.y_hat;
  j["word_attention"] = to_string(cfg.word_attention_mode);
  j["doc_attention"] = to_string(cfg.doc_attention_mode);
  j["claim_tokens"] = truncated(tokenize(record.claim_text), cfg.claim_len);
  j["documents"] = ojson::array();
  std::size_t slot = 0;
  for (const auto& e : record.evidence) {
    if (slot == cfg.max_docs) break;
    const auto tokens = truncated(tokenize(e.text), cfg.doc_len);
    if (tokens.empty()) continue;
    const Tensor& w = trace.word_weights[slot];
    ojson doc;
    doc["slot"] = slot;
    doc["publisher"] = e.publisher;
    doc["heads"] = ojson::array();
    for (std::size_t h = 0; h < w.cols(); ++h) {
      ojson head = ojson::array();
      for (std::size_t t = 0; t < tokens.size(); ++t) head.push_back({{"token", tokens[t]}, {"weight", w(t, h)}});
      doc["heads"].push_back(std::move(head));
    }
    j["documents"].push_back(std::move(doc));
    ++slot;
  }
  ojson rows = ojson::array();
  for (std::size_t r = 0; r < trace.doc_weights.rows(); ++r) {
    ojson row = ojson::array();
    for (std::size_t c = 0; c < trace.doc_weights.cols(); ++c) row.push_back(trace.doc_weights(r, c));
    rows.push_back(std::move(row));
  }
  j["document_attention"] = std::move(rows);
  j["document_mask"] = trace.doc_mask;
  write_file(out_path, j.dump(2) + "\n");
  out << "claim " << claim_id << ": y_hat " << format_double(pred.y_hat) << ", " << slot << " documents\n";
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------

struct Variant {
  std::string mode;
  std::string features;
  std::string name() const { return mode + "/" + features; }
};

void apply_variant(RunSetup& s, const Variant& v) {
  if (v.mode == "full") {
    s.model.word_attention_mode = PoolingMode::multi_head;
    s.model.doc_attention_mode = PoolingMode::multi_head;
  } else if (v.mode == "word_only") {
    s.model.word_attention_mode = PoolingMode::multi_head;
    s.model.doc_attention_mode = PoolingMode::mean_pool;
  } else if (v.mode == "evidence_only") {
    s.model.word_attention_mode = PoolingMode::mean_pool;
    s.model.doc_attention_mode = PoolingMode::multi_head;
  } else {
    throw ConfigError("unknown ablation mode '" + v.mode + "' (word_only, evidence_only, full)");
  }
  if (v.features == "text") {
    s.model.use_publishers = false;
    s.model.use_speakers = false;
  } else if (v.features == "text+pub") {
    s.model.use_publishers = true;
    s.model.use_speakers = false;
  } else if (v.features == "text+spk") {
    s.model.use_publishers = false;
    s.model.use_speakers = true;
  } else if (v.features == "text+pub+spk") {
    s.model.use_publishers = true;
    s.model.use_speakers = true;
  } else {
    throw ConfigError("unknown feature set '" + v.features + "' (text, text+pub, text+spk, text+pub+spk)");
  }
  check_schema_features(s);
}

std::vector<std::string> list_option(const std::string& text, const char* what) {
  std::vector<std::string> items;
  for (const auto& part : split(text, ',')) {
    const std::string item = trim(part);
    if (item.empty()) throw ConfigError(std::string("empty entry in ") + what);
    if (std::find(items.begin(), items.end(), item) == items.end()) items.push_back(item);
  }
  return items;
}

ojson paired_test(const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return wilcoxon_one_sided(a, b);
  } catch (const UndefinedMetricError&) {
    return nullptr;
  } catch (const ContractError&) {
    return nullptr;
  }
}

int cmd_ablate(const TrainingFlags& flags, const std::string& modes, const std::string& features, std::ostream& out) {
  const RunSetup base = flags.resolve();
  const std::string default_features = base.schema == Schema::snopes ? "text+pub" : "text+pub+spk";
  std::vector<Variant> variants;
  for (const auto& m : list_option(modes, "--mode"))
    for (const auto& f : list_option(features.empty() ? default_features : features, "--features"))
      variants.push_back({m, f});
  // Reject every invalid combination before any training starts.
  std::vector<RunSetup> setups;
  for (const auto& v : variants) {
    RunSetup s = base;
    apply_variant(s, v);
    setups.push_back(s);
  }

  const fs::path corpus_path = flags.corpus;
  const std::uint64_t corpus_hash = fnv1a(read_file(corpus_path, "corpus"));
  const Corpus corpus = load_corpus(corpus_path, base.schema);
  const auto glove = maybe_glove(base);
  const fs::path out_dir = flags.out;
  make_output_dir(out_dir);

  ojson results = ojson::array();
  std::vector<std::vector<double>> aucs;
  std::string csv = "variant,mode,features,mean_auc,std_auc,f1_macro,f1_micro\n";
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const CvResult cv =
        run_cv(corpus.records, base.schema, setups[i].model, setups[i].train, base.seed, glove ? &*glove : nullptr);
    aucs.push_back(fold_aucs(cv));
    ojson r;
    r["variant"] = variants[i].name();
    r["mode"] = variants[i].mode;
    r["features"] = variants[i].features;
    r["fold_auc"] = aucs.back();
    r["std_auc"] = sample_std(aucs.back());
    r["mean"] = to_json(cv.mean);
    results.push_back(std::move(r));
    csv += variants[i].name() + "," + variants[i].mode + "," + variants[i].features + "," +
           format_double(cv.mean.auc.value_or(0.0)) + "," + format_double(sample_std(aucs.back())) + "," +
           format_double(cv.mean.f1_macro) + "," + format_double(cv.mean.f1_micro) + "\n";
    print_summary(out, variants[i].name(), cv);
  }

  ojson comparisons = ojson::array();
  for (std::size_t a = 0; a < variants.size(); ++a) {
    for (std::size_t b = 0; b < variants.size(); ++b) {
      if (a == b) continue;
      ojson c;
      c["a"] = variants[a].name();
      c["b"] = variants[b].name();
      c["metric"] = "auc";
      c["p_value_a_greater"] = paired_test(aucs[a], aucs[b]);
      out << "wilcoxon " << variants[a].name() << " > " << variants[b].name() << ": p = "
          << (c["p_value_a_greater"].is_null() ? std::string("undefined")
                                                : format_double(c["p_value_a_greater"].get<double>()))
          << "\n";
      comparisons.push_back(std::move(c));
    }
  }

  ojson doc;
  doc["schema"] = to_string(base.schema);
  doc["seed"] = base.seed;
  doc["variants"] = std::move(results);
  doc["comparisons"] = std::move(comparisons);
  write_file(out_dir / "ablation.json", doc.dump(2) + "\n");
  write_file(out_dir / "ablation.csv", csv);

  ojson manifest = manifest_base("ablate", base, corpus_path, corpus_hash);
  manifest["modes"] = list_option(modes, "--mode");
  manifest["features"] = list_option(features.empty() ? default_features : features, "--features");
  manifest["outputs"] = {"ablation.json", "ablation.csv"};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

// ---- sweep ----------------------------------------------------------------

std::vector<std::size_t> parse_grid(const std::string& text, const char* what) {
  std::vector<std::size_t> grid;
  for (const auto& item : list_option(text, what)) {
    std::size_t v = 0;
    const auto* end = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc() || ptr != end || v < 1 || v > 5)
      throw ConfigError(std::string(what) + " entries must be integers in 1..5, got '" + item + "'");
    grid.push_back(v);
  }
  return grid;
}

int cmd_sweep(const TrainingFlags& flags, const std::string& h1_text, const std::string& h2_text, std::ostream& out) {
  const RunSetup base = flags.resolve();
  check_schema_features(base);
  const auto h1_grid = parse_grid(h1_text, "--h1-grid");
  const auto h2_grid = parse_grid(h2_text, "--h2-grid");

  const fs::path corpus_path = flags.corpus;
  const std::uint64_t corpus_hash = fnv1a(read_file(corpus_path, "corpus"));
  const Corpus corpus = load_corpus(corpus_path, base.schema);
  const auto glove = maybe_glove(base);
  const fs::path out_dir = flags.out;
  make_output_dir(out_dir);

  ojson cells = ojson::array();
  std::string csv = "h1,h2,mean_auc,std_auc\n";
  for (std::size_t h1 : h1_grid) {
    for (std::size_t h2 : h2_grid) {
      RunSetup s = base;
      s.model.word_heads = h1;
      s.model.doc_heads = h2;
      const CvResult cv = run_cv(corpus.records, s.schema, s.model, s.train, s.seed, glove ? &*glove : nullptr);
      const auto aucs = fold_aucs(cv);
      const double mean_auc = cv.mean.auc.value_or(0.0);
      const double std_auc = sample_std(aucs);
      ojson cell;
      cell["h1"] = h1;
      cell["h2"] = h2;
      cell["fold_auc"] = aucs;
      cell["mean_auc"] = mean_auc;
      cell["std_auc"] = std_auc;
      cell["mean_f1_macro"] = cv.mean.f1_macro;
      cells.push_back(std::move(cell));
      csv += std::to_string(h1) + "," + std::to_string(h2) + "," + format_double(mean_auc) + "," +
             format_double(std_auc) + "\n";
      out << "h1=" << h1 << " h2=" << h2 << ": mean AUC " << format_double(mean_auc) << "\n";
    }
  }
  ojson doc;
  doc["schema"] = to_string(base.schema);
  doc["seed"] = base.seed;
  doc["h1_grid"] = h1_grid;
  doc["h2_grid"] = h2_grid;
  doc["cells"] = std::move(cells);
  write_file(out_dir / "sweep.json", doc.dump(2) + "\n");
  write_file(out_dir / "sweep.csv", csv);

  ojson manifest = manifest_base("sweep", base, corpus_path, corpus_hash);
  manifest["h1_grid"] = h1_grid;
  manifest["h2_grid"] = h2_grid;
  manifest["outputs"] = {"sweep.json", "sweep.csv"};
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return kExitOk;
}

// ---- convert --------------------------------------------------------------

struct ConvertResult {
  Corpus corpus;
  std::size_t missing_publishers = 0;
  std::string input_format;
};

/// Released layout, one (claim, evidence) pair per row:
///   snopes:     label, claim_id, claim_text, evidence, source
///   politifact: label, claim_id, claim_text, speaker, evidence, source
ConvertResult convert_tsv(const std::string& text, Schema schema) {
  const std::size_t columns = schema == Schema::snopes ? 5 : 6;
  struct Group {
    nlohmann::ordered_json record;
    int label = 0;
    std::size_t line = 0;
  };
  std::vector<Group> groups;
  std::unordered_map<std::string, std::size_t> index;
  ConvertResult result;
  result.input_format = "tsv";

  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (line_no == 1 && (trim(fields[0]) == "cred_label" || trim(fields[0]) == "label")) continue;  // header
    if (fields.size() != columns)
      throw ParseError("expected " + std::to_string(columns) + " tab-separated columns, found " +
                       std::to_string(fields.size()),
                       line_no);
    const std::string raw_label = trim(fields[0]);
    int label = 0;
    try {
      label = merge_labels(raw_label, schema);
    } catch (const LabelError& e) {
      throw ParseError(e.what(), line_no);
    }
    const std::string claim_id = trim(fields[1]);
    if (claim_id.empty()) throw ParseError("empty claim_id", line_no);
    std::string publisher = trim(fields[columns - 1]);
    if (publisher.empty()) {
      publisher = "unknown";
      ++result.missing_publishers;
    }
    const std::string evidence = fields[columns - 2];

    auto [it, inserted] = index.emplace(claim_id, groups.size());
    if (inserted) {
      Group g;
      g.label = label;
      g.line = line_no;
      g.record["claim_id"] = claim_id;
      g.record["claim_text"] = fields[2];
      if (schema == Schema::politifact && !trim(fields[3]).empty()) g.record["speaker"] = trim(fields[3]);
      else g.record["speaker"] = nullptr;
      g.record["label"] = raw_label;
      g.record["evidence"] = nlohmann::ordered_json::array();
      groups.push_back(std::move(g));
    } else if (groups[it->second].label != label) {
      throw ParseError("claim '" + claim_id + "' has conflicting labels (first seen on line " +
                       std::to_string(groups[it->second].line) + ")",
                       line_no);
    }
    groups[it->second].record["evidence"].push_back({{"text", evidence}, {"publisher", publisher}});
  }

  std::string jsonl;
  for (const auto& g : groups) jsonl += g.record.dump() + "\n";
  std::istringstream stream(jsonl);
  result.corpus = parse_corpus(stream, schema);
  return result;
}

ConvertResult convert_input(const std::string& text, Schema schema) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    ConvertResult result;
    result.input_format = "jsonl";
    std::istringstream in(text);
    result.corpus = parse_corpus(in, schema);
    return result;
  }
  return convert_tsv(text, schema);
}

int cmd_convert(const fs::path& in_path, const std::string& schema_text, const fs::path& out_path, std::ostream& out) {
  const Schema schema = parse_schema(schema_text);
  const ConvertResult result = convert_input(read_file(in_path, "input"), schema);
  std::string text;
  for (const auto& r : result.corpus.records) text += to_jsonl(r, schema) + "\n";
  write_file(out_path, text);
  ojson stats;
  stats["input_format"] = result.input_format;
  stats["claims"] = result.corpus.records.size();
  const auto corpus_stats = to_json(result.corpus.stats);
  for (const auto& [k, v] : corpus_stats.items()) stats[k] = v;
  stats["missing_publishers"] = result.missing_publishers;
  out << stats.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

// ---- public ---------------------------------------------------------------

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->category()) {
      case ErrorCategory::contract:
      case ErrorCategory::config:
        return kExitConfig;
      case ErrorCategory::data:
        return kExitData;
      case ErrorCategory::numerical:
        return kExitNumerical;
    }
  }
  return kExitInternal;
}

std::map<std::string, std::string> parse_settings(std::istream& in) {
  std::map<std::string, std::string> settings;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!settings.emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
  }
  return settings;
}

std::map<std::string, std::string> load_settings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_settings(in);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Claim verification over retrieved evidence documents"};
  app.name("mac");
  app.require_subcommand(1);

  TrainingFlags train_flags;
  std::string manifest_path;
  auto* train = app.add_subcommand("train", "Cross-validated training; writes checkpoints, logs and a report");
  train_flags.attach(train);
  train->add_option("--manifest", manifest_path, "Replay the settings of an earlier run");
  // --corpus is optional when replaying a manifest.
  train->get_option("--corpus")->required(false);

  std::string ckpt_path, eval_corpus, eval_schema, eval_out;
  double threshold = 0.5;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--corpus", eval_corpus, "Corpus JSONL file")->required();
  eval->add_option("--schema", eval_schema, "Expected schema (defaults to the checkpoint's)");
  eval->add_option("--threshold", threshold, "Decision threshold")->capture_default_str();
  eval->add_option("--out", eval_out, "Report JSON path")->required();

  TrainingFlags ablate_flags;
  std::string modes = "full", features;
  auto* ablate = app.add_subcommand("ablate", "Compare attention and metadata variants");
  ablate_flags.attach(ablate);
  ablate->add_option("--mode", modes, "Comma list of word_only, evidence_only, full")->capture_default_str();
  ablate->add_option("--features", features, "Comma list of text, text+pub, text+spk, text+pub+spk");

  TrainingFlags sweep_flags;
  std::string h1_grid = "1,2,3,4,5", h2_grid = "1,2,3,4,5";
  auto* sweep = app.add_subcommand("sweep", "Grid over word and document head counts");
  sweep_flags.attach(sweep);
  sweep->add_option("--h1-grid", h1_grid, "Word head counts, comma separated")->capture_default_str();
  sweep->add_option("--h2-grid", h2_grid, "Document head counts, comma separated")->capture_default_str();

  std::string explain_ckpt, explain_corpus, explain_schema, claim_id, explain_out;
  auto* explain = app.add_subcommand("explain", "Export attention weights for one claim");
  explain->add_option("--checkpoint", explain_ckpt, "Checkpoint file")->required();
  explain->add_option("--corpus", explain_corpus, "Corpus JSONL file")->required();
  explain->add_option("--schema", explain_schema, "Expected schema (defaults to the checkpoint's)");
  explain->add_option("--claim-id", claim_id, "Claim to explain")->required();
  explain->add_option("--out", explain_out, "Output JSON path")->required();

  std::string tsv_in, convert_schema = "snopes", jsonl_out;
  auto* convert = app.add_subcommand("convert", "Convert the released TSV layout to corpus JSONL");
  convert->add_option("--tsv-in", tsv_in, "Input TSV (or JSONL to canonicalize)")->required();
  convert->add_option("--schema", convert_schema, "snopes or politifact")->capture_default_str();
  convert->add_option("--jsonl-out", jsonl_out, "Output JSONL path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) {
      if (!manifest_path.empty()) {
        std::string corpus, expected_hash;
        RunSetup s = setup_from_manifest(manifest_path, corpus, expected_hash);
        if (!train_flags.corpus.empty()) corpus = train_flags.corpus;
        return cmd_train(s, corpus, train_flags.out, out, train_flags.corpus.empty() ? expected_hash : "");
      }
      if (train_flags.corpus.empty()) throw ConfigError("train needs --corpus or --manifest");
      return cmd_train(train_flags.resolve(), train_flags.corpus, train_flags.out, out);
    }
    if (eval->parsed()) return cmd_eval(ckpt_path, eval_corpus, eval_schema, eval_out, threshold, out);
    if (ablate->parsed()) return cmd_ablate(ablate_flags, modes, features, out);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, h1_grid, h2_grid, out);
    if (explain->parsed()) return cmd_explain(explain_ckpt, explain_corpus, explain_schema, claim_id, explain_out, out);
    if (convert->parsed()) return cmd_convert(tsv_in, convert_schema, jsonl_out, out);
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    err << "mac: error: " << e.what() << "\n";
    return code;
  }
  return kExitConfig;
}

}  // namespace mac
