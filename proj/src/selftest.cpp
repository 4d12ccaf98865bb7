#include "bookalign/selftest.hpp"

#include <cmath>
#include <map>
#include <utility>

#include "bookalign/crfalign.hpp"
#include "bookalign/ctxcnn.hpp"
#include "bookalign/numerics.hpp"
#include "bookalign/simtensor.hpp"
#include "bookalign/skipthought.hpp"
#include "bookalign/vsembed.hpp"

namespace bookalign::selftest {

namespace {

using Eigen::MatrixXd;

Check dp_exactness() {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t K = 1 + rng.index(5), N = 1 + rng.index(6);
    crf::ChainCrf c;
    c.n_book = N;
    c.unary = MatrixXd(K, N);
    for (auto& v : c.unary.reshaped()) v = 3.0 * rng.uniform();
    for (std::size_t i = 0; i < K; ++i) {
      c.nodes.push_back({i, 0, 1});
      c.time_fraction.push_back(rng.uniform());
      if (i + 1 < K) c.d_s.push_back(rng.uniform());
    }
    const crf::Weights w{rng.uniform() + 0.1, 2.0 * rng.uniform(), 2.0 * rng.uniform(), 0.01 + 0.1 * rng.uniform()};

    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> y(K, 0);
    for (;;) {
      best = std::min(best, crf::energy(y, c, w).energy);
      std::size_t i = 0;
      while (i < K && ++y[i] == N) y[i++] = 0;
      if (i == K) break;
    }
    const double got = crf::infer(c, w, 1.0).energy;
    if (got != best) return {"dp-vs-enumeration", false, "trial " + std::to_string(trial) + ": " + std::to_string(got) + " vs " + std::to_string(best)};
  }
  return {"dp-vs-enumeration", true, "60 random chains"};
}

/// Counts every n-gram by explicit window comparison.
double brute_bleu(const Tokens& cand, const Tokens& ref, int n) {
  if (cand.empty()) return 0.0;
  double log_p = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    std::size_t total = cand.size() >= ku ? cand.size() - ku + 1 : 0, clipped = 0;
    std::vector<bool> used(ref.size() >= ku ? ref.size() - ku + 1 : 0, false);
    for (std::size_t a = 0; a < total; ++a) {
      for (std::size_t b = 0; b < used.size(); ++b) {
        if (used[b]) continue;
        bool same = true;
        for (std::size_t m = 0; m < ku && same; ++m) same = cand[a + m] == ref[b + m];
        if (same) {
          used[b] = true;
          ++clipped;
          break;
        }
      }
    }
    const double p = k == 1 ? (total ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0)
                            : (static_cast<double>(clipped) + 1.0) / (static_cast<double>(total) + 1.0);
    if (p == 0.0) return 0.0;
    log_p += std::log(p);
  }
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_p / n);
}

Check bleu_oracle() {
  if (bleu_n({"the", "the", "the"}, {"the", "cat"}, 1) != 1.0 / 3.0) return {"bleu-oracle", false, "worked example"};
  Rng rng(202);
  const std::vector<std::string> words = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 50; ++trial) {
    Tokens c(1 + rng.index(9)), r(1 + rng.index(9));
    for (auto& t : c) t = words[rng.index(words.size())];
    for (auto& t : r) t = words[rng.index(words.size())];
    for (int n = 1; n <= 5; ++n) {
      if (std::abs(bleu_n(c, r, n) - brute_bleu(c, r, n)) > 1e-12) {
        return {"bleu-oracle", false, "trial " + std::to_string(trial) + " n=" + std::to_string(n)};
      }
    }
  }
  return {"bleu-oracle", true, "50 random pairs, n = 1..5"};
}

template <typename M, typename L>
GradCheckReport check_model(M& model, L loss) {
  auto f = [&](ParamStore& p) {
    std::swap(p, model.params());
    const double l = loss();
    std::swap(p, model.params());
    return l;
  };
  ParamStore p = model.params();
  return grad_check(f, p, 1e-5, 1e-4);
}

Check summarize(const std::string& name, const std::vector<GradCheckReport>& reports) {
  double worst = 0.0;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed) {
      return {name, false, "max relative error " + std::to_string(r.max_rel_error) + " at " + r.worst_param + "[" +
                               std::to_string(r.worst_index) + "] analytic " + std::to_string(r.worst_analytic) +
                               " numeric " + std::to_string(r.worst_numeric)};
    }
  }
  return {name, !reports.empty(), std::to_string(reports.size()) + " instances, max relative error " + std::to_string(worst)};
}

Check gru_gradients() {
  Rng rng(303);
  std::vector<GradCheckReport> reports;
  for (int trial = 0; trial < 3; ++trial) {
    skipthought::Model m(skipthought::Config{5, 2, 3}, 500 + trial);
    for (auto& [_, e] : m.params()) e.value.data *= 4.0;
    auto sentence = [&] {
      std::vector<TokenId> s(1 + rng.index(3));
      for (auto& t : s) t = static_cast<TokenId>(rng.index(5));
      return s;
    };
    const skipthought::SentenceTriple t{sentence(), sentence(), sentence()};
    reports.push_back(check_model(m, [&] { return skipthought::triple_loss(t, m, 1.0); }));
  }
  return summarize("gru-gradient", reports);
}

Check lstm_gradients() {
  Rng rng(404);
  std::vector<GradCheckReport> reports;
  for (int trial = 0; reports.size() < 3 && trial < 20; ++trial) {
    vsembed::Model m(vsembed::Config{6, 2, 3, 4}, 600 + trial);
    for (auto& [_, e] : m.params()) e.value.data *= 3.0;
    std::vector<vsembed::Pair> pairs(3);
    for (auto& p : pairs) {
      p.feature = Eigen::VectorXd(4);
      for (auto& v : p.feature) v = rng.normal();
      p.sentence.resize(1 + rng.index(3));
      for (auto& t : p.sentence) t = static_cast<TokenId>(rng.index(6));
    }
    MatrixXd ms(3, 3), vs(3, 3);
    for (int b = 0; b < 3; ++b) {
      ms.row(b) = vsembed::lstm_encode(pairs[b].sentence, m).transpose().normalized();
      vs.row(b) = vsembed::embed_clip(pairs[b].feature, m).transpose().normalized();
    }
    const MatrixXd S = ms * vs.transpose();
    bool near_kink = false;
    for (int b = 0; b < 3; ++b)
      for (int k = 0; k < 3; ++k)
        if (k != b) near_kink |= std::abs(0.3 - S(b, b) + S(b, k)) < 1e-3 || std::abs(0.3 - S(b, b) + S(k, b)) < 1e-3;
    if (near_kink) continue;
    std::vector<const vsembed::Pair*> batch = {&pairs[0], &pairs[1], &pairs[2]};
    reports.push_back(check_model(m, [&] { return vsembed::batch_loss(batch, m, 0.3, 1.0); }));
  }
  return summarize("lstm-gradient", reports);
}

Check cnn_gradients() {
  Rng rng(505);
  std::vector<GradCheckReport> reports;
  ctxcnn::Config c;
  c.layers = {{3, 3, 2}, {3, 3, 2}, {1, 1, 2}};
  for (int trial = 0; reports.size() < 3 && trial < 20; ++trial) {
    ctxcnn::Model m(c, 700 + trial);
    for (std::size_t k = 0; k < 3; ++k) {
      for (auto& b : m.params().value("conv" + std::to_string(k) + ".b").data) b = 0.3 * rng.normal();
    }
    MatrixXd x(kChannelCount, 16);
    for (auto& v : x.reshaped()) v = rng.uniform();
    ctxcnn::Labels labels;
    labels.positives = {{0, 0}, {2, 3}, {3, 3}};
    labels.negatives = {{3, 0}, {1, 2}};
    labels.negative_weight = 1.5;
    bool near_kink = false;
    for (const auto& z : ctxcnn::forward(x, 4, 4, m).pre) near_kink |= (z.array().abs() < 1e-4).any();
    if (near_kink) continue;
    reports.push_back(check_model(m, [&] { return ctxcnn::cross_entropy(x, 4, 4, labels, m, 1.0); }));
  }
  return summarize("cnn-gradient", reports);
}

}  // namespace

std::vector<Check> run(std::ostream& log) {
  std::vector<Check> out;
  for (auto* check : {dp_exactness, bleu_oracle, gru_gradients, lstm_gradients, cnn_gradients}) {
    out.push_back(check());
    log << (out.back().passed ? "PASS " : "FAIL ") << out.back().name << ": " << out.back().detail << '\n';
  }
  return out;
}

}  // namespace bookalign::selftest
