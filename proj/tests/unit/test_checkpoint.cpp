#include <doctest.h>

#include <cstring>

#include "../support/helpers.hpp"
#include "../support/synthetic.hpp"
#include "mac/checkpoint.hpp"
#include "mac/errors.hpp"

using namespace mac;

namespace {

struct Fixture {
  std::vector<ClaimRecord> records;
  Encoder encoder;
  MacConfig cfg;
  MacParams params;

  Fixture() {
    testing::SyntheticSpec spec;
    spec.claims = 16;
    spec.with_speakers = true;
    records = testing::records_of(testing::make_planted_corpus(spec));
    encoder = Encoder::build(records, 1);
    cfg = MacConfig::tiny();
    encoder.configure(cfg);
    params = init_params(cfg, 77);
  }
};

}  // namespace

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bitwise") {
    Fixture f;
    auto ckpt = make_checkpoint(f.params, f.cfg, f.encoder, Schema::politifact, 77, {{"fold", 2}});
    auto bytes = serialize_checkpoint(ckpt);
    CHECK(bytes.compare(0, 8, "MACCKPT1") == 0);
    auto back = deserialize_checkpoint(bytes);
    CHECK(back.schema == Schema::politifact);
    CHECK(back.seed == 77);
    CHECK(back.extra["fold"] == 2);
    CHECK(to_json(back.config) == to_json(f.cfg));
    REQUIRE(back.values.size() == ckpt.values.size());
    CHECK(std::memcmp(back.values.data(), ckpt.values.data(), ckpt.values.size() * sizeof(double)) == 0);
    CHECK(serialize_checkpoint(back) == bytes);

    auto restored = restore_params(back);
    auto inst = encode_instance(f.records[0], f.encoder, f.cfg);
    CHECK(forward(restored, f.cfg, inst).y_hat == forward(f.params, f.cfg, inst).y_hat);

    auto dir = testing::temp_dir("ckpt");
    save_checkpoint(dir / "a.ckpt", ckpt);
    CHECK(testing::slurp(dir / "a.ckpt") == bytes);
    CHECK(load_checkpoint(dir / "a.ckpt").values == ckpt.values);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  }

  TEST_CASE("truncation and corruption are detected") {
    Fixture f;
    auto bytes = serialize_checkpoint(make_checkpoint(f.params, f.cfg, f.encoder, Schema::snopes, 1));
    for (std::size_t len : {std::size_t{0}, std::size_t{7}, std::size_t{12}, bytes.size() / 2, bytes.size() - 1})
      CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, len)), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CheckpointError);
    for (std::size_t pos = 0; pos < bytes.size(); pos += 97) {
      auto bad = bytes;
      bad[pos] = static_cast<char>(bad[pos] ^ 0x10);
      CHECK_THROWS_AS(deserialize_checkpoint(bad), CheckpointError);
    }
  }

  TEST_CASE("mismatched values are rejected") {
    Fixture f;
    auto ckpt = make_checkpoint(f.params, f.cfg, f.encoder, Schema::snopes, 1);
    auto short_ckpt = ckpt;
    short_ckpt.values.pop_back();
    CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(short_ckpt)), CheckpointError);
    auto wrong_vocab = ckpt;
    wrong_vocab.config.vocab_size += 1;
    CHECK_THROWS_AS(deserialize_checkpoint(serialize_checkpoint(wrong_vocab)), CheckpointError);
  }
}
