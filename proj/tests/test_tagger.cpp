#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aal/metrics.hpp"
#include "aal/tagger.hpp"
#include "oracles.hpp"

using namespace aal;

namespace {

ModelSpec tiny(BackboneKind kind, std::size_t dim = 4, std::size_t hidden = 3) {
  ModelSpec s;
  s.kind = kind;
  s.input_dim = dim;
  s.hidden = hidden;
  return s;
}

EncodedSentence random_sentence(std::size_t dim, Rng& rng, long min_len = 1, long max_len = 5) {
  EncodedSentence s;
  const long T = min_len + static_cast<long>(rng.below(static_cast<std::uint64_t>(max_len - min_len + 1)));
  s.x = oracle::random_matrix(T, static_cast<long>(dim), rng);
  for (long t = 0; t < T; ++t) s.gold.push_back(static_cast<int>(rng.below(3)));
  return s;
}

void randomize(TaggerModel& m, Rng& rng, double scale = 0.5) {
  for (double& p : m.params().flat()) p = rng.uniform(-scale, scale);
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Toy task: token vectors are scaled one-hot codes of their label.
std::vector<EncodedSentence> separable_task(std::size_t n, Rng& rng) {
  std::vector<EncodedSentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    EncodedSentence s;
    const long T = 2 + static_cast<long>(rng.below(5));
    s.x = Matrix::Zero(T, 3);
    for (long t = 0; t < T; ++t) {
      const int y = static_cast<int>(rng.below(3));
      s.x(t, y) = 3.0;
      s.gold.push_back(y);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("linear backbone: zero weights give zero scores") {
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  m.params().set_zero();
  Rng rng(1);
  const auto e = m.emissions(oracle::random_matrix(4, 3, rng), false, nullptr);
  CHECK(e.isZero(0));
}

TEST_CASE("linear backbone: identity weight maps e2 to e2") {
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  m.params().set_zero();
  m.params().mat(m.params().find("emit.w")) = Matrix::Identity(3, 3);
  Matrix x = Matrix::Zero(1, 3);
  x(0, 1) = 1.0;
  const auto e = m.emissions(x, false, nullptr);
  CHECK(e(0, 0) == 0.0);
  CHECK(e(0, 1) == 1.0);
  CHECK(e(0, 2) == 0.0);
}

TEST_CASE("shape mismatch is rejected") {
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  CHECK_THROWS_AS(m.emissions(Matrix::Zero(2, 4), false, nullptr), std::invalid_argument);
}

TEST_CASE("bilstm emissions equal a scalar step-by-step recurrence") {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    auto m = TaggerModel::create(tiny(BackboneKind::bilstm, 4, 5), 10 + static_cast<std::uint64_t>(rep));
    randomize(m, rng);
    const auto x = oracle::random_matrix(3, 4, rng);
    const auto e = m.emissions(x, false, nullptr);
    const auto ref = oracle::bilstm_emissions(m.params(), x, 5);
    CHECK((e - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero model: loss ln 9 for T=2") {
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 2), 1);
  m.params().set_zero();
  EncodedSentence s{Matrix::Zero(2, 2), {0, 2}};
  const EncodedSentence* batch[] = {&s, &s};
  const auto g = nll_and_gradient(m, batch, false, 0);
  CHECK(g.loss == doctest::Approx(std::log(9.0)).epsilon(1e-14));
}

TEST_CASE("gradient matches central finite differences for both backbones") {
  for (auto kind : {BackboneKind::linear, BackboneKind::bilstm}) {
    Rng rng(kind == BackboneKind::linear ? 21 : 22);
    for (int rep = 0; rep < 5; ++rep) {
      auto m = TaggerModel::create(tiny(kind, 3, 2), 100 + static_cast<std::uint64_t>(rep));
      randomize(m, rng);
      std::vector<EncodedSentence> data;
      for (int i = 0; i < 3; ++i) data.push_back(random_sentence(3, rng));
      std::vector<const EncodedSentence*> batch;
      for (auto& s : data) batch.push_back(&s);
      for (bool training : {false, true}) {
        const std::uint64_t seed = 77;
        const auto g = nll_and_gradient(m, batch, training, seed, Exec::serial);
        const auto fd = oracle::finite_difference(m.params().flat(), [&] {
          return nll_and_gradient(m, batch, training, seed, Exec::serial).loss;
        });
        CHECK(max_relative_error(g.grad.flat(), fd, 1e-12) < 1e-4);
      }
    }
  }
}

TEST_CASE("parallel gradient equals the serial reference") {
  Rng rng(5);
  auto m = TaggerModel::create(tiny(BackboneKind::bilstm, 4, 3), 1);
  std::vector<EncodedSentence> data;
  for (int i = 0; i < 37; ++i) data.push_back(random_sentence(4, rng, 1, 8));
  std::vector<const EncodedSentence*> batch;
  for (auto& s : data) batch.push_back(&s);
  const auto a = nll_and_gradient(m, batch, true, 9, Exec::serial);
  const auto b = nll_and_gradient(m, batch, true, 9, Exec::parallel);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-13));
  CHECK(max_relative_error(a.grad.flat(), b.grad.flat(), 1e-12) < 1e-10);
}

TEST_CASE("posteriors: softmax rows and mode equivalence with zero CRF") {
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  m.params().set_zero();
  const auto u = token_posteriors(m, Matrix::Zero(2, 3));
  CHECK((u.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);

  m.params().mat(m.params().find("emit.b"))(0, 0) = std::log(2.0);
  const auto p = token_posteriors(m, Matrix::Zero(1, 3));
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p(0, 2) == doctest::Approx(0.25).epsilon(1e-14));

  Rng rng(4);
  auto r = TaggerModel::create(tiny(BackboneKind::linear, 3), 2);
  const auto x = oracle::random_matrix(5, 3, rng, 2.0);
  const auto a = token_posteriors(r, x, PosteriorMode::softmax_emissions);
  const auto b = token_posteriors(r, x, PosteriorMode::crf_marginals);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predict: lengths, zero-model tie rule, order invariance") {
  auto zero = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  zero.params().set_zero();
  CHECK(predict(zero, Matrix::Zero(4, 3)) == std::vector<int>{0, 0, 0, 0});

  Rng rng(6);
  auto m = TaggerModel::create(tiny(BackboneKind::bilstm, 3, 4), 3);
  randomize(m, rng);
  std::vector<EncodedSentence> data;
  for (int i = 0; i < 20; ++i) data.push_back(random_sentence(3, rng, 1, 9));
  const auto pred = predict(m, data);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(pred[i].size() == static_cast<std::size_t>(data[i].x.rows()));
  std::vector<EncodedSentence> rev(data.rbegin(), data.rend());
  const auto pred_rev = predict(m, rev);
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(pred_rev[data.size() - 1 - i] == pred[i]);
  CHECK(predict(m, data, Exec::serial) == pred);
}

TEST_CASE("training reaches dev F1 1.0 on a separable toy task") {
  Rng rng(12);
  const auto tr = separable_task(200, rng);
  const auto dev = separable_task(50, rng);
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 5);
  TrainConfig cfg;
  cfg.minibatch = 8;
  const auto r = train(m, tr, dev, cfg, 1);
  CHECK(r.best_dev_f1 == 1.0);
  CHECK(r.epochs_run < cfg.max_epochs);
  CHECK(evaluate(m, dev) == 1.0);
}

TEST_CASE("early stopping with flat dev F1 stops within min_epochs + patience") {
  Rng rng(2);
  std::vector<EncodedSentence> tr, dev;
  for (int i = 0; i < 20; ++i) {
    EncodedSentence s{Matrix::Zero(3, 2), {2, 2, 2}};
    tr.push_back(s);
    dev.push_back(s);
  }
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 2), 1);
  TrainConfig cfg;
  const auto r = train(m, tr, dev, cfg, 3);
  CHECK(r.epochs_run >= cfg.min_epochs);
  CHECK(r.epochs_run <= cfg.min_epochs + cfg.patience);
  CHECK(r.epoch_seconds.size() == static_cast<std::size_t>(r.epochs_run));
}

TEST_CASE("fixed seed gives a bitwise-identical loss trajectory") {
  Rng rng(8);
  std::vector<EncodedSentence> tr, dev;
  for (int i = 0; i < 40; ++i) tr.push_back(random_sentence(4, rng, 2, 6));
  for (int i = 0; i < 10; ++i) dev.push_back(random_sentence(4, rng, 2, 6));
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.min_epochs = 2;
  cfg.patience = 12;
  cfg.minibatch = 16;
  for (auto kind : {BackboneKind::linear, BackboneKind::bilstm}) {
    auto a = TaggerModel::create(tiny(kind, 4, 3), 7);
    auto b = TaggerModel::create(tiny(kind, 4, 3), 7);
    const auto ra = train(a, tr, dev, cfg, 99);
    const auto rb = train(b, tr, dev, cfg, 99);
    CHECK(ra.epoch_losses == rb.epoch_losses);
    CHECK(ra.dev_f1 == rb.dev_f1);
    CHECK(std::equal(a.params().flat().begin(), a.params().flat().end(), b.params().flat().begin()));
  }
}

TEST_CASE("without dropout the loss on one sentence is non-increasing") {
  Rng rng(31);
  std::vector<EncodedSentence> one{random_sentence(3, rng, 5, 5)};
  auto m = TaggerModel::create(tiny(BackboneKind::linear, 3), 4);
  TrainConfig cfg;
  cfg.use_dropout = false;
  cfg.max_epochs = 60;
  cfg.min_epochs = 60;
  cfg.patience = 60;
  const auto r = train(m, one, one, cfg, 1);
  for (std::size_t i = 1; i < r.epoch_losses.size(); ++i) CHECK(r.epoch_losses[i] <= r.epoch_losses[i - 1]);
}

TEST_CASE("inference is deterministic and dropout-free") {
  Rng rng(2);
  auto m = TaggerModel::create(tiny(BackboneKind::bilstm, 3, 4), 1);
  const auto x = oracle::random_matrix(4, 3, rng);
  const auto a = m.emissions(x, false, nullptr);
  const auto b = m.emissions(x, false, nullptr);
  CHECK(a == b);
}

TEST_CASE("checkpoint round trip is exact") {
  for (auto kind : {BackboneKind::linear, BackboneKind::bilstm}) {
    auto m = TaggerModel::create(tiny(kind, 5, 3), 11);
    const auto bytes = m.serialize();
    CHECK(bytes.substr(0, 5) == "ACRF1");
    const auto back = TaggerModel::deserialize(bytes);
    CHECK(back.serialize() == bytes);
    CHECK(back.spec().kind == kind);
    CHECK(back.spec().input_dropout == m.spec().input_dropout);
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      CHECK(back.params().flat()[i] == static_cast<double>(static_cast<float>(m.params().flat()[i])));
    }
  }
  CHECK_THROWS(TaggerModel::deserialize("ACRF0...."));
}

TEST_CASE("sentence representation") {
  Rng rng(1);
  const auto x = oracle::random_matrix(4, 3, rng);
  auto lin = TaggerModel::create(tiny(BackboneKind::linear, 3), 1);
  const auto r = lin.sentence_representation(x);
  CHECK(r.size() == 3);
  CHECK(r(0) == doctest::Approx(x.col(0).mean()));

  auto bi = TaggerModel::create(tiny(BackboneKind::bilstm, 3, 2), 1);
  const auto rb = bi.sentence_representation(x);
  CHECK(rb.size() == 4);
}

TEST_CASE("macro F1 per sequence") {
  CHECK(sequence_macro_f1(std::vector<int>{0, 2}, std::vector<int>{0, 0}) == doctest::Approx(1.0 / 3));
  CHECK(sequence_macro_f1(std::vector<int>{1, 2, 0}, std::vector<int>{1, 2, 0}) == 1.0);
  CHECK(sequence_macro_f1(std::vector<int>{1, 1}, std::vector<int>{0, 0}) == 0.0);
}
