#include <cmath>

#include "bookalign/vsembed.hpp"
#include "doctest.h"

using namespace bookalign;
using namespace bookalign::vsembed;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

/// Every hinge term enumerated directly from cosine scores.
double brute_force_loss(const MatrixXd& m, const MatrixXd& v, double margin) {
  auto s = [](const VectorXd& a, const VectorXd& b) { return a.dot(b) / (a.norm() * b.norm()); };
  double loss = 0.0;
  for (Eigen::Index b = 0; b < m.rows(); ++b) {
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      if (k == b) continue;
      const VectorXd mb = m.row(b), vb = v.row(b), vk = v.row(k), mk = m.row(k);
      loss += std::max(0.0, margin - s(mb, vb) + s(mb, vk));
      loss += std::max(0.0, margin - s(vb, mb) + s(vb, mk));
    }
  }
  return loss;
}

}  // namespace

TEST_CASE("lstm_encode with zero weights") {
  Model m(Config{6, 3, 4, 5}, 1);
  for (auto& [_, e] : m.params()) e.value.data.setZero();
  auto trace = lstm_trace(std::vector<TokenId>{3, 4, 5}, m);
  for (const auto& s : trace.steps) {
    CHECK((s.i.array() == 0.5).all());
    CHECK((s.f.array() == 0.5).all());
    CHECK((s.o.array() == 0.5).all());
    CHECK(s.a.isZero(0.0));
    CHECK(s.c.isZero(0.0));
    CHECK(s.m.isZero(0.0));
  }
  CHECK_THROWS_AS(lstm_encode(std::vector<TokenId>{}, m), std::invalid_argument);
}

TEST_CASE("lstm cell carousel: f = 1, i = 0 keeps the cell") {
  Model m(Config{6, 3, 4, 5}, 2);
  m.params().mat("emb").setConstant(1.0);
  m.params().mat("Wxf").setConstant(1000.0);
  m.params().mat("Wxi").setConstant(-1000.0);
  m.params().value("wcf").data.setZero();
  m.params().value("wci").data.setZero();
  auto trace = lstm_trace(std::vector<TokenId>{3, 4, 5, 3}, m);
  for (const auto& s : trace.steps) {
    CHECK((s.f.array() == 1.0).all());
    CHECK((s.i.array() == 0.0).all());
    CHECK(s.c == s.c_prev);
  }
}

TEST_CASE("lstm state bounds") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Model m(Config{8, 3, 4, 2}, 10 + trial);
    for (auto& [_, e] : m.params()) e.value.data *= 4.0;
    std::vector<TokenId> s(2 + rng.index(8));
    for (auto& t : s) t = static_cast<TokenId>(rng.index(8));
    auto trace = lstm_trace(s, m);
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      const auto& st = trace.steps[t];
      CHECK((st.m.array().abs() < 1.0).all());
      CHECK((st.c.array().abs() <= static_cast<double>(t + 1)).all());
    }
  }
}

TEST_CASE("pool_frames") {
  CHECK(pool_frames({vec({1, 2, 3})}) == vec({1, 2, 3}));
  CHECK(pool_frames({vec({0, 2}), vec({2, 0})}) == vec({1, 1}));
  const VectorXd v = vec({0.25, -3, 7});
  CHECK(pool_frames({v, v, v, v}).isApprox(v, 1e-15));
  CHECK_THROWS_AS(pool_frames({}), std::invalid_argument);
  CHECK_THROWS_AS(pool_frames({vec({1}), vec({1, 2})}), std::invalid_argument);
}

TEST_CASE("score is cosine") {
  const VectorXd m = vec({1, 2, -1});
  CHECK(score(m, m) == doctest::Approx(1.0));
  CHECK(score(m, -m) == doctest::Approx(-1.0));
  CHECK(score(vec({1, 0}), vec({0, 3})) == 0.0);
  CHECK(score(2.5 * m, 0.1 * vec({3, 1, 0})) == doctest::Approx(score(m, vec({3, 1, 0}))).epsilon(1e-14));
  CHECK_THROWS_AS(score(VectorXd::Zero(3), m), std::invalid_argument);
}

TEST_CASE("ranking_loss") {
  SUBCASE("inactive hinges give zero") {
    MatrixXd m = MatrixXd::Identity(3, 3), v = MatrixXd::Identity(3, 3);
    auto r = ranking_loss(m, v, 0.2);
    CHECK(r.loss == 0.0);
    CHECK(r.active_terms == 0);
    CHECK(r.d_sentences.isZero(0.0));
  }
  SUBCASE("one violating pair contributes alpha - s(m,v) + s(m,v_k)") {
    MatrixXd S(2, 2);
    S << 0.5, 0.6,
         -0.9, 0.9;
    auto h = hinge_terms(S, 0.2);
    // sentence 0 vs clip 1: 0.2 - 0.5 + 0.6 = 0.3; clip 0 vs sentence 1: 0.2 - 0.5 - 0.9 < 0;
    // sentence 1 vs clip 0: 0.2 - 0.9 - 0.9 < 0; clip 1 vs sentence 0: 0.2 - 0.9 + 0.6 < 0.
    CHECK(h.loss == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(h.active_terms == 1);
  }
  SUBCASE("matches brute-force enumeration") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const int B = 3 + static_cast<int>(rng.index(3));
      MatrixXd m(B, 4), v(B, 4);
      for (Eigen::Index k = 0; k < m.size(); ++k) {
        m.data()[k] = rng.normal();
        v.data()[k] = rng.normal();
      }
      CHECK(ranking_loss(m, v, 0.2).loss == doctest::Approx(brute_force_loss(m, v, 0.2)).epsilon(1e-12));
    }
  }
  SUBCASE("zero iff no hinge is active; non-increasing in a matched score") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      MatrixXd S(4, 4);
      for (Eigen::Index k = 0; k < S.size(); ++k) S.data()[k] = 2.0 * rng.uniform() - 1.0;
      auto h = hinge_terms(S, 0.2);
      CHECK((h.loss == 0.0) == (h.active_terms == 0));
      const Eigen::Index b = static_cast<Eigen::Index>(rng.index(4));
      double prev = h.loss;
      for (int step = 0; step < 10; ++step) {
        S(b, b) += 0.1;
        const double l = hinge_terms(S, 0.2).loss;
        CHECK(l <= prev);
        prev = l;
      }
    }
  }
}

TEST_CASE("ranking loss gradient through both encoders matches finite differences") {
  Rng rng(8);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Model model(Config{7, 2, 3, 4}, 60 + trial);
    for (auto& [_, e] : model.params()) e.value.data *= 3.0;
    std::vector<Pair> pairs(3);
    for (auto& p : pairs) {
      p.feature = VectorXd(4);
      for (int k = 0; k < 4; ++k) p.feature[k] = rng.normal();
      p.sentence.resize(1 + rng.index(4));
      for (auto& t : p.sentence) t = static_cast<TokenId>(rng.index(7));
    }
    std::vector<const Pair*> batch = {&pairs[0], &pairs[1], &pairs[2]};
    const double margin = 0.3;

    // Skip draws where a hinge sits within 1e-3 of its kink.
    MatrixXd ms(3, 3), vs(3, 3);
    for (int b = 0; b < 3; ++b) {
      ms.row(b) = lstm_encode(pairs[b].sentence, model).transpose();
      vs.row(b) = embed_clip(pairs[b].feature, model).transpose();
    }
    MatrixXd S = ms.rowwise().normalized() * vs.rowwise().normalized().transpose();
    bool near_kink = false;
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k)
        if (k != b) {
          near_kink |= std::abs(margin - S(b, b) + S(b, k)) < 1e-3;
          near_kink |= std::abs(margin - S(b, b) + S(k, b)) < 1e-3;
        }
    if (near_kink) continue;

    auto f = [&](ParamStore& p) {
      std::swap(p, model.params());
      const double l = batch_loss(batch, model, margin, 1.0);
      std::swap(p, model.params());
      return l;
    };
    ParamStore p = model.params();
    auto r = grad_check(f, p, 1e-5, 1e-4);
    INFO("worst ", r.worst_param, "[", r.worst_index, "] analytic ", r.worst_analytic, " numeric ", r.worst_numeric);
    CHECK(r.passed);
    ++checked;
  }
  CHECK(checked >= 5);
}

TEST_CASE("train: lr = 0 and determinism") {
  Rng rng(1);
  std::vector<Pair> pairs(8);
  for (auto& p : pairs) {
    p.feature = VectorXd::Random(5);
    p.sentence = {static_cast<TokenId>(3 + rng.index(5)), static_cast<TokenId>(3 + rng.index(5))};
  }
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.sgd.lr = 0.0;
  Model m(Config{8, 3, 4, 5}, 3);
  const ParamStore before = m.params();
  train(m, pairs, cfg);
  CHECK(m.params().same_values(before));

  cfg.sgd.lr = 0.1;
  Model a(Config{8, 3, 4, 5}, 3), b(Config{8, 3, 4, 5}, 3);
  CHECK(train(a, pairs, cfg).epoch_loss == train(b, pairs, cfg).epoch_loss);
  CHECK(a.params().same_values(b.params()));
}
