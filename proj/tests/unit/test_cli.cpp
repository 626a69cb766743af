#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "../support/helpers.hpp"
#include "../support/synthetic.hpp"
#include "mac/commands.hpp"
#include "mac/errors.hpp"

using namespace mac;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mac");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallConfig =
    "# tiny model for fast tests\n"
    "word_dim = 6\nspeaker_dim = 2\npublisher_dim = 2\nhidden = 4\n"
    "claim_len = 3\ndoc_len = 4\nmax_docs = 2\n"
    "folds = 2\nmax_epochs = 2\nmin_freq = 1\nbatch_size = 16\n";

struct Workspace {
  fs::path dir;
  fs::path corpus;
  fs::path config;
  std::vector<ClaimRecord> records;

  explicit Workspace(const std::string& name, Schema schema = Schema::snopes) {
    dir = testing::temp_dir("cli_" + name);
    testing::SyntheticSpec spec;
    spec.claims = 40;
    spec.with_speakers = schema == Schema::politifact;
    records = testing::records_of(testing::make_planted_corpus(spec));
    corpus = dir / "corpus.jsonl";
    testing::spit(corpus, testing::to_jsonl_text(records, schema));
    config = dir / "small.cfg";
    testing::spit(config, kSmallConfig);
  }

  std::vector<std::string> train_args(const std::string& out) const {
    return {"train", "--corpus", corpus.string(), "--config", config.string(), "--out", (dir / out).string()};
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("settings parser") {
    std::istringstream in("a = 1 # note\n\n  b=two words  \n");
    auto s = parse_settings(in);
    CHECK(s.at("a") == "1");
    CHECK(s.at("b") == "two words");
    std::istringstream dup("a = 1\na = 2\n");
    CHECK_THROWS_AS(parse_settings(dup), ConfigError);
    std::istringstream bad("just words\n");
    CHECK_THROWS_AS(parse_settings(bad), ConfigError);
  }

  TEST_CASE("argument and config errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"--help"}).code == 0);
    Workspace w("errors");
    auto args = w.train_args("out");
    args.insert(args.end(), {"--set", "no_such_key=1"});
    CHECK(run(args).code == 2);
    args = w.train_args("out");
    args.insert(args.end(), {"--set", "use_speakers=true"});
    CHECK(run(args).code == 2);  // snopes has no speakers
    args = w.train_args("out");
    args.insert(args.end(), {"--schema", "reddit"});
    CHECK(run(args).code == 2);
    CHECK(run({"sweep", "--corpus", w.corpus.string(), "--config", w.config.string(), "--h1-grid", "0,2", "--out",
               (w.dir / "s").string()})
              .code == 2);
  }

  TEST_CASE("data errors exit with 3") {
    Workspace w("data");
    auto args = w.train_args("out");
    args[2] = (w.dir / "missing.jsonl").string();
    CHECK(run(args).code == 3);
    testing::spit(w.dir / "broken.jsonl", "{not json\n");
    args[2] = (w.dir / "broken.jsonl").string();
    CHECK(run(args).code == 3);
  }

  TEST_CASE("train, eval and explain") {
    Workspace w("train");
    auto r = run(w.train_args("out"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* name : {"fold_0.ckpt", "fold_1.ckpt", "train_log.jsonl", "report.json", "manifest.json"})
      CHECK(fs::exists(w.dir / "out" / name));
    auto report = nlohmann::json::parse(testing::slurp(w.dir / "out" / "report.json"));
    CHECK(report["folds"].size() == 2);
    CHECK(report.contains("mean"));
    auto manifest = nlohmann::json::parse(testing::slurp(w.dir / "out" / "manifest.json"));
    CHECK(manifest["model_config"]["hidden"] == 4);

    const auto ckpt = (w.dir / "out" / "fold_0.ckpt").string();
    r = run({"eval", "--checkpoint", ckpt, "--corpus", w.corpus.string(), "--out", (w.dir / "eval.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto ev = nlohmann::json::parse(testing::slurp(w.dir / "eval.json"));
    CHECK(ev["instances"] == w.records.size());
    CHECK(ev["metrics"]["auc"].get<double>() >= 0.0);
    CHECK(run({"eval", "--checkpoint", ckpt, "--corpus", w.corpus.string(), "--schema", "politifact", "--out",
               (w.dir / "eval2.json").string()})
              .code == 2);
    testing::spit(w.dir / "junk.ckpt", "garbage");
    CHECK(run({"eval", "--checkpoint", (w.dir / "junk.ckpt").string(), "--corpus", w.corpus.string(), "--out",
               (w.dir / "eval3.json").string()})
              .code == 2);

    const std::string id = w.records[0].claim_id;
    r = run({"explain", "--checkpoint", ckpt, "--corpus", w.corpus.string(), "--claim-id", id, "--out",
             (w.dir / "explain.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto ex = nlohmann::json::parse(testing::slurp(w.dir / "explain.json"));
    CHECK(ex["claim_id"] == id);
    const double y = ex["y_hat"].get<double>();
    CHECK(y > 0.0);
    CHECK(y < 1.0);
    for (const auto& doc : ex["documents"]) {
      for (const auto& head : doc["heads"]) {
        double total = 0.0;
        for (const auto& tok : head) total += tok["weight"].get<double>();
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
    for (std::size_t h = 0; h < ex["document_attention"][0].size(); ++h) {
      double total = 0.0;
      for (const auto& row : ex["document_attention"]) total += row[h].get<double>();
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(run({"explain", "--checkpoint", ckpt, "--corpus", w.corpus.string(), "--claim-id", "nope", "--out",
               (w.dir / "explain2.json").string()})
              .code == 3);
  }

  TEST_CASE("identical runs give identical reports") {
    Workspace w("repeat");
    REQUIRE(run(w.train_args("a")).code == 0);
    auto args = w.train_args("b");
    args.insert(args.end(), {"--workers", "2"});
    REQUIRE(run(args).code == 0);
    CHECK(testing::slurp(w.dir / "a" / "report.json") == testing::slurp(w.dir / "b" / "report.json"));
    CHECK(testing::slurp(w.dir / "a" / "fold_1.ckpt") == testing::slurp(w.dir / "b" / "fold_1.ckpt"));

    // Replaying the manifest reproduces the report.
    auto replay = run({"train", "--manifest", (w.dir / "a" / "manifest.json").string(), "--out",
                       (w.dir / "c").string()});
    REQUIRE_MESSAGE(replay.code == 0, replay.err);
    CHECK(testing::slurp(w.dir / "a" / "report.json") == testing::slurp(w.dir / "c" / "report.json"));
  }

  TEST_CASE("sweep and ablate outputs") {
    Workspace w("grid");
    auto r = run({"sweep", "--corpus", w.corpus.string(), "--config", w.config.string(), "--set", "max_epochs=1",
                  "--h1-grid", "1,2", "--h2-grid", "1", "--out", (w.dir / "sweep").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto csv = testing::slurp(w.dir / "sweep" / "sweep.csv");
    CHECK(csv.rfind("h1,h2,mean_auc,std_auc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

    r = run({"ablate", "--corpus", w.corpus.string(), "--config", w.config.string(), "--set", "max_epochs=1",
             "--mode", "word_only,full", "--features", "text,text+pub", "--out", (w.dir / "ablate").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto doc = nlohmann::json::parse(testing::slurp(w.dir / "ablate" / "ablation.json"));
    CHECK(doc["variants"].size() == 4);
    CHECK(fs::exists(w.dir / "ablate" / "ablation.csv"));
  }

  TEST_CASE("convert tsv and idempotence") {
    auto dir = testing::temp_dir("cli_convert");
    testing::spit(dir / "in.tsv",
                  "cred_label\tclaim_id\tclaim_text\tevidence\tsource\n"
                  "true\tc1\tsky is blue\tthe sky looks blue\tnasa.gov\n"
                  "true\tc1\tsky is blue\tblue sky research\t\n"
                  "false\tc2\tmoon is cheese\tno cheese found\tnature.com\n");
    auto r = run({"convert", "--tsv-in", (dir / "in.tsv").string(), "--jsonl-out", (dir / "a.jsonl").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto stats = nlohmann::json::parse(r.out);
    CHECK(stats["claims"] == 2);
    CHECK(stats["missing_publishers"] == 1);
    CHECK(stats["input_format"] == "tsv");
    r = run({"convert", "--tsv-in", (dir / "a.jsonl").string(), "--jsonl-out", (dir / "b.jsonl").string()});
    REQUIRE(r.code == 0);
    CHECK(testing::slurp(dir / "a.jsonl") == testing::slurp(dir / "b.jsonl"));

    testing::spit(dir / "bad.tsv", "true\tc1\tx\n");
    CHECK(run({"convert", "--tsv-in", (dir / "bad.tsv").string(), "--jsonl-out", (dir / "c.jsonl").string()}).code ==
          3);
    testing::spit(dir / "conflict.tsv", "true\tc1\tx\ty\tp\nfalse\tc1\tx\tz\tp\n");
    CHECK(run({"convert", "--tsv-in", (dir / "conflict.tsv").string(), "--jsonl-out", (dir / "d.jsonl").string()})
              .code == 3);
  }
}
