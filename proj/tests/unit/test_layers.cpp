#include <doctest.h>

#include <cmath>

#include "../support/helpers.hpp"
#include "mac/errors.hpp"
#include "mac/layers.hpp"

using namespace mac;
using mac::testing::random_tensor;

namespace {

void zero_all(LstmParams& p) {
  for (auto* g : {&p.input_gate, &p.forget_gate, &p.cell_gate, &p.output_gate}) {
    for (auto* t : {&g->input_weight, &g->recurrent_weight, &g->bias})
      for (auto& v : t->values()) v = 0.0;
  }
}

std::vector<Tensor> lstm_tensors(const LstmParams& p) {
  ParamList list;
  p.collect("cell", list);
  std::vector<Tensor> out;
  for (auto& n : list) out.push_back(n.tensor);
  return out;
}

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("embedding lookup") {
    Rng rng(1);
    auto table = EmbeddingTable::uniform(8, 3, -0.1, 0.1, rng, true);
    for (std::size_t c = 0; c < 3; ++c) CHECK(table.table(0, c) == 0.0);
    for (std::size_t r = 1; r < 8; ++r)
      for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(table.table(r, c)) <= 0.1);

    Tape tape;
    const std::int32_t pad[] = {0};
    auto z = embed_sequence(tape, table, pad);
    CHECK(z(0, 0) == 0.0);

    const std::int32_t ids[] = {2, 5, 1};
    auto e = embed_sequence(tape, table, ids);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 3; ++c) CHECK(e(j, c) == table.table(static_cast<std::size_t>(ids[j]), c));

    Tape t2;
    const std::int32_t twice[] = {3, 3};
    auto d = embed_sequence(t2, table, twice);
    auto loss = sum_all(t2, d);
    t2.backward(loss);
    CHECK(table.table.grad()[3 * 3] == 2.0);
    CHECK(table.table.grad()[2 * 3] == 0.0);

    const std::int32_t bad[] = {8};
    CHECK_THROWS_AS(embed_sequence(tape, table, bad), IndexError);
  }

  TEST_CASE("entity-style tables have no reserved row") {
    Rng rng(2);
    auto t = EmbeddingTable::uniform(5, 2, -0.2, 0.2, rng, false);
    bool row0_nonzero = false;
    for (std::size_t c = 0; c < 2; ++c) row0_nonzero |= t.table(0, c) != 0.0;
    CHECK(row0_nonzero);
    for (double v : t.table.values()) CHECK(std::abs(v) <= 0.2);
  }

  TEST_CASE("lstm init ranges") {
    Rng rng(3);
    auto p = LstmParams::init(5, 4, rng);
    const double bound = 1.0 / std::sqrt(4.0);
    for (double v : p.forget_gate.bias.values()) CHECK(v == 1.0);
    for (auto* t : {&p.input_gate.input_weight, &p.cell_gate.recurrent_weight, &p.output_gate.bias})
      for (double v : t->values()) CHECK(std::abs(v) <= bound);
    CHECK(p.input_gate.input_weight.rows() == 5);
    CHECK(p.input_gate.recurrent_weight.rows() == 4);
  }

  TEST_CASE("lstm_cell special cases") {
    Rng rng(4);
    auto p = LstmParams::init(3, 2, rng);
    zero_all(p);
    Tape tape;
    auto s = lstm_cell(tape, p, Tensor::row({0.3, -1, 2}), {Tensor::zeros(1, 2), Tensor::zeros(1, 2)});
    for (double v : s.h.values()) CHECK(v == 0.0);
    for (double v : s.c.values()) CHECK(v == 0.0);

    // Saturated forget gate and closed input gate carry the cell through.
    for (auto& v : p.forget_gate.bias.values()) v = 1e3;
    for (auto& v : p.input_gate.bias.values()) v = -1e3;
    auto prev_c = Tensor::row({0.7, -0.4});
    auto s2 = lstm_cell(tape, p, Tensor::row({0.3, -1, 2}), {Tensor::row({0.1, 0.2}), prev_c});
    CHECK(s2.c(0, 0) == 0.7);
    CHECK(s2.c(0, 1) == -0.4);

    CHECK_THROWS_AS(lstm_cell(tape, p, Tensor::row({1, 2}), {Tensor::zeros(1, 2), Tensor::zeros(1, 2)}), ShapeError);
  }

  TEST_CASE("lstm_cell gradient") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed);
      auto p = LstmParams::init(3, 2, rng);
      auto x = random_tensor(1, 3, rng);
      auto h0 = random_tensor(1, 2, rng);
      auto c0 = random_tensor(1, 2, rng);
      auto params = lstm_tensors(p);
      params.push_back(x);
      params.push_back(h0);
      params.push_back(c0);
      auto r = grad_check([&](Tape& t) { return sum_all(t, lstm_cell(t, p, x, {h0, c0}).h); }, params);
      CHECK(r.max_relative_error < 1e-5);
    }
  }

  TEST_CASE("bilstm structure") {
    Rng rng(5);
    auto b = BiLstm::init(3, 2, rng);
    CHECK(b.output_dim() == 4);
    Tape tape;

    // Single token: row = [backward step ; forward step].
    auto x1 = random_tensor(1, 3, rng, false);
    auto out1 = bilstm_encode(tape, b, x1, {});
    LstmState zero{Tensor::zeros(1, 2), Tensor::zeros(1, 2)};
    auto f = lstm_cell(tape, b.forward, x1, zero);
    auto bk = lstm_cell(tape, b.backward, x1, zero);
    CHECK(out1(0, 0) == bk.h(0, 0));
    CHECK(out1(0, 1) == bk.h(0, 1));
    CHECK(out1(0, 2) == f.h(0, 0));
    CHECK(out1(0, 3) == f.h(0, 1));

    // Trailing and interior padding are inert.
    auto x = random_tensor(3, 3, rng, false);
    auto base = bilstm_encode(tape, b, x, {});
    std::vector<double> padded_values(x.values().begin(), x.values().end());
    padded_values.insert(padded_values.begin() + 3, {9, 9, 9});  // interior PAD row
    padded_values.insert(padded_values.end(), {7, 7, 7, 8, 8, 8});
    auto xp = Tensor::from(6, 3, padded_values);
    const std::uint8_t mask[] = {1, 0, 1, 1, 0, 0};
    auto padded = bilstm_encode(tape, b, xp, mask);
    const std::size_t map[] = {0, 2, 3};
    for (std::size_t t = 0; t < 3; ++t)
      for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(padded(map[t], c) - base(t, c)) <= 1e-12);
    for (std::size_t r : {1u, 4u, 5u})
      for (std::size_t c = 0; c < 4; ++c) CHECK(padded(r, c) == 0.0);

    const std::uint8_t none[] = {0, 0, 0};
    CHECK_THROWS_AS(bilstm_encode(tape, b, x, none), DegenerateInputError);
  }

  TEST_CASE("bilstm reversal swaps halves") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      auto b = BiLstm::init(3, 2, rng);
      BiLstm swapped{b.backward, b.forward};
      const std::size_t len = 2 + seed;
      auto x = random_tensor(len, 3, rng, false);
      auto rev = x.clone();
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < 3; ++c) rev(t, c) = x(len - 1 - t, c);
      Tape tape;
      auto a = bilstm_encode(tape, b, x, {});
      auto r = bilstm_encode(tape, swapped, rev, {});
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t c = 0; c < 2; ++c) {
          CHECK(std::abs(r(t, c) - a(len - 1 - t, c + 2)) <= 1e-12);
          CHECK(std::abs(r(t, c + 2) - a(len - 1 - t, c)) <= 1e-12);
        }
      }
    }
  }

  TEST_CASE("zero-weight bilstm outputs zeros") {
    Rng rng(6);
    auto b = BiLstm::init(3, 2, rng);
    zero_all(b.forward);
    zero_all(b.backward);
    Tape tape;
    auto out = bilstm_encode(tape, b, random_tensor(4, 3, rng, false), {});
    for (double v : out.values()) CHECK(v == 0.0);
  }

  TEST_CASE("bilstm gradient with padding") {
    Rng rng(7);
    auto b = BiLstm::init(2, 2, rng);
    ParamList list;
    b.collect("enc", list);
    std::vector<Tensor> params;
    for (auto& n : list) params.push_back(n.tensor);
    auto x = random_tensor(4, 2, rng);
    params.push_back(x);
    const std::uint8_t mask[] = {1, 1, 0, 1};
    auto w = random_tensor(4, 4, rng, false);
    auto r = grad_check([&](Tape& t) { return sum_all(t, mul(t, bilstm_encode(t, b, x, mask), w)); }, params);
    CHECK(r.max_relative_error < 1e-5);
    // The padded input row never influences anything.
    for (std::size_t c = 0; c < 2; ++c) CHECK(x.grad()[2 * 2 + c] == 0.0);
  }

  TEST_CASE("linear") {
    Tape tape;
    CHECK(linear(tape, Tensor::scalar(2), Tensor::scalar(3), Tensor::scalar(4)).item() == 11.0);
    auto id = Tensor::from(2, 2, {1, 0, 0, 1});
    auto x = Tensor::from(3, 2, {1, 2, 3, 4, 5, 6});
    auto y = linear(tape, id, Tensor::zeros(1, 2), x);
    CHECK(std::equal(y.values().begin(), y.values().end(), x.values().begin()));
    CHECK_THROWS_AS(linear(tape, Tensor::zeros(3, 2), std::nullopt, x), ShapeError);

    Rng rng(8);
    auto w = random_tensor(4, 2, rng), b = random_tensor(1, 2, rng), xin = random_tensor(3, 4, rng);
    std::vector<Tensor> params = {w, b, xin};
    auto r = grad_check([&](Tape& t) { return sum_all(t, tanh(t, linear(t, w, b, xin))); }, params);
    CHECK(r.max_relative_error < 1e-6);
  }
}
