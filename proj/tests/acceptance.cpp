// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails. Expected values come from oracles written here,
// independent of the library code under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bookalign/checkpoint.hpp"
#include "bookalign/corpus.hpp"
#include "bookalign/crfalign.hpp"
#include "bookalign/ctxcnn.hpp"
#include "bookalign/numerics.hpp"
#include "bookalign/pipeline.hpp"
#include "bookalign/simtensor.hpp"
#include "bookalign/skipthought.hpp"
#include "bookalign/vsembed.hpp"

namespace fs = std::filesystem;
using namespace bookalign;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradients against central differences.

/// Largest per-coordinate relative error between the analytic gradient that
/// `loss(1)` accumulates and central differences of `loss(0)`.
template <typename Loss>
double max_relative_error(ParamStore& params, Loss loss, double h = 1e-5) {
  params.zero_grad();
  loss(1.0);
  std::map<std::string, VectorXd> analytic;
  for (auto& [name, e] : params) analytic[name] = e.grad.data;
  double worst = 0.0;
  for (auto& [name, e] : params) {
    for (Eigen::Index k = 0; k < e.value.data.size(); ++k) {
      const double keep = e.value.data[k];
      e.value.data[k] = keep + h;
      const double up = loss(0.0);
      e.value.data[k] = keep - h;
      const double down = loss(0.0);
      e.value.data[k] = keep;
      const double fd = (up - down) / (2.0 * h), ga = analytic[name][k];
      worst = std::max(worst, std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd)));
    }
  }
  return worst;
}

std::vector<TokenId> random_ids(Rng& rng, std::size_t vocab, std::size_t max_len) {
  std::vector<TokenId> s(1 + rng.index(max_len));
  for (auto& t : s) t = static_cast<TokenId>(rng.index(vocab));
  return s;
}

struct GradientMaxima {
  double gru = 0.0, lstm = 0.0, cnn = 0.0;
  int gru_n = 0, lstm_n = 0, cnn_n = 0;
};

GradientMaxima gradient_maxima(double h) {
  constexpr int kInstances = 20;
  Rng rng(11);
  GradientMaxima g;
  auto& [gru, lstm, cnn, gru_n, lstm_n, cnn_n] = g;

  for (; gru_n < kInstances; ++gru_n) {
    skipthought::Model m(skipthought::Config{6, 3, 4}, 100 + static_cast<std::uint64_t>(gru_n));
    for (auto& [_, e] : m.params()) e.value.data *= 4.0;
    auto prev = random_ids(rng, 6, 4), next = random_ids(rng, 6, 4);
    prev.push_back(Vocabulary::kEos);
    next.push_back(Vocabulary::kEos);
    const skipthought::SentenceTriple t{prev, random_ids(rng, 6, 4), next};
    gru = std::max(gru, max_relative_error(m.params(), [&](double s) { return skipthought::triple_loss(t, m, s); }, h));
  }

  const double margin = 0.3;
  for (int trial = 0; lstm_n < kInstances && trial < 200; ++trial) {
    vsembed::Model m(vsembed::Config{7, 3, 4, 5}, 200 + static_cast<std::uint64_t>(trial));
    for (auto& [_, e] : m.params()) e.value.data *= 3.0;
    std::vector<vsembed::Pair> pairs(4);
    for (auto& p : pairs) {
      p.feature = VectorXd(5);
      for (auto& v : p.feature) v = rng.normal();
      p.sentence = random_ids(rng, 7, 4);
    }
    // Cosine scores recomputed here; draws with a hinge within 1e-3 of its kink are skipped.
    MatrixXd S(4, 4);
    for (int a = 0; a < 4; ++a) {
      const VectorXd ma = vsembed::lstm_encode(pairs[a].sentence, m);
      for (int b = 0; b < 4; ++b) {
        const VectorXd vb = vsembed::embed_clip(pairs[b].feature, m);
        S(a, b) = ma.dot(vb) / (ma.norm() * vb.norm());
      }
    }
    bool kink = false;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (a != b) kink |= std::abs(margin - S(a, a) + S(a, b)) < 1e-3 || std::abs(margin - S(a, a) + S(b, a)) < 1e-3;
    if (kink) continue;
    std::vector<const vsembed::Pair*> batch;
    for (const auto& p : pairs) batch.push_back(&p);
    lstm = std::max(lstm, max_relative_error(m.params(), [&](double s) { return vsembed::batch_loss(batch, m, margin, s); }, h));
    ++lstm_n;
  }

  ctxcnn::Config c;
  c.layers = {{3, 3, 2}, {3, 3, 2}, {3, 3, 2}};
  for (int trial = 0; cnn_n < kInstances && trial < 200; ++trial) {
    ctxcnn::Model m(c, 300 + static_cast<std::uint64_t>(trial));
    for (std::size_t k = 0; k < 3; ++k) {
      for (auto& b : m.params().value("conv" + std::to_string(k) + ".b").data) b = 0.3 * rng.normal();
    }
    MatrixXd x(kChannelCount, 25);
    for (auto& v : x.reshaped()) v = rng.uniform();
    ctxcnn::Labels labels;
    labels.positives = {{0, 0}, {2, 3}, {3, 3}, {4, 1}};
    labels.negatives = {{4, 4}, {1, 2}, {0, 3}};
    labels.negative_weight = 1.5;
    bool kink = false;
    for (const auto& z : ctxcnn::forward(x, 5, 5, m).pre) kink |= (z.array().abs() < 1e-4).any();
    if (kink) continue;
    cnn = std::max(cnn, max_relative_error(m.params(), [&](double s) { return ctxcnn::cross_entropy(x, 5, 5, labels, m, s); }, h));
    ++cnn_n;
  }

  return g;
}

Outcome gradient_checks() {
  constexpr int kInstances = 20;
  constexpr double kTolerance = 1e-4;
  const GradientMaxima g = gradient_maxima(1e-5);
  const bool ok = g.gru_n >= kInstances && g.lstm_n >= kInstances && g.cnn_n >= kInstances && g.gru < kTolerance &&
                  g.lstm < kTolerance && g.cnn < kTolerance;
  std::string detail = "max relative error GRU " + fmt("%.2e", g.gru) + " (" + std::to_string(g.gru_n) + "), LSTM " +
                       fmt("%.2e", g.lstm) + " (" + std::to_string(g.lstm_n) + "), CNN " + fmt("%.2e", g.cnn) + " (" +
                       std::to_string(g.cnn_n) + ")";
  if (!ok) {
    // Same instances with a larger step: a shrinking error points at rounding in the differences.
    const GradientMaxima coarse = gradient_maxima(1e-4);
    detail += "; at h = 1e-4: GRU " + fmt("%.2e", coarse.gru) + ", LSTM " + fmt("%.2e", coarse.lstm) + ", CNN " +
              fmt("%.2e", coarse.cnn);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 2. Dynamic programming against enumeration.

/// Energy written out from the potentials: unary terms in node order, then
/// edge terms in node order.
double oracle_energy(const std::vector<std::size_t>& y, const crf::ChainCrf& c, const crf::Weights& w) {
  double e = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) e += w.unary * c.unary(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i]));
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    const double span = c.n_book > 1 ? static_cast<double>(c.n_book - 1) : 1.0;
    const double d_b = c.n_book > 1 ? std::abs(static_cast<double>(y[i]) - static_cast<double>(y[i + 1])) / span : 0.0;
    const double diff = (c.d_s[i] - d_b) * (c.d_s[i] - d_b);
    e += w.pairwise_p * (diff / (diff + w.sigma2)) + w.pairwise_q * (d_b * d_b / (d_b * d_b + w.sigma2));
  }
  return e;
}

Outcome dp_exactness() {
  Rng rng(22);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + rng.index(6), N = 1 + rng.index(8);
    crf::ChainCrf c;
    c.n_book = N;
    c.unary = MatrixXd(K, N);
    for (auto& v : c.unary.reshaped()) v = -std::log(0.01 + 0.98 * rng.uniform());
    for (std::size_t i = 0; i < K; ++i) {
      c.nodes.push_back({i, static_cast<std::int64_t>(1000 * i), static_cast<std::int64_t>(1000 * i + 800)});
      c.time_fraction.push_back(K > 1 ? static_cast<double>(i) / static_cast<double>(K - 1) : 0.0);
      if (i + 1 < K) c.d_s.push_back(rng.uniform());
    }
    const crf::Weights w{0.1 + rng.uniform(), 2.0 * rng.uniform(), 2.0 * rng.uniform(), 0.005 + 0.1 * rng.uniform()};

    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> y(K, 0);
    for (;;) {
      best = std::min(best, oracle_energy(y, c, w));
      std::size_t i = 0;
      while (i < K && ++y[i] == N) y[i++] = 0;
      if (i == K) break;
    }
    const auto dp = crf::infer(c, w, 1.0);
    if (dp.energy != best || oracle_energy(dp.y, c, w) != best) ++mismatches;
  }
  return {mismatches == 0, "200 chains, " + std::to_string(mismatches) + " differ from the enumerated minimum"};
}

// ---------------------------------------------------------------------------
// 3. BLEU against explicit window counting.

double oracle_bleu(const Tokens& cand, const Tokens& ref, int n) {
  if (cand.empty()) return 0.0;
  double log_sum = 0.0;
  for (int k = 1; k <= n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const std::size_t total = cand.size() >= ku ? cand.size() - ku + 1 : 0;
    std::vector<bool> used(ref.size() >= ku ? ref.size() - ku + 1 : 0, false);
    std::size_t matched = 0;
    for (std::size_t a = 0; a < total; ++a) {
      for (std::size_t b = 0; b < used.size(); ++b) {
        if (used[b] || !std::equal(cand.begin() + static_cast<long>(a), cand.begin() + static_cast<long>(a + ku),
                                   ref.begin() + static_cast<long>(b))) {
          continue;
        }
        used[b] = true;
        ++matched;
        break;
      }
    }
    const double p = k == 1 ? (total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0)
                            : (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size()), r = static_cast<double>(ref.size());
  return (c < r ? std::exp(1.0 - r / c) : 1.0) * std::exp(log_sum / n);
}

Outcome bleu_oracle() {
  Rng rng(33);
  const std::vector<std::string> words = {"the", "cat", "sat", "on", "mat"};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tokens c(1 + rng.index(10)), r(1 + rng.index(10));
    for (auto& t : c) t = words[rng.index(words.size())];
    for (auto& t : r) t = words[rng.index(words.size())];
    for (int n = 1; n <= 5; ++n) worst = std::max(worst, std::abs(bleu_n(c, r, n) - oracle_bleu(c, r, n)));
  }
  const double worked = bleu_n({"the", "the", "the"}, {"the", "cat"}, 1);
  return {worst <= 1e-12 && std::abs(worked - 1.0 / 3.0) <= 1e-12,
          "100 pairs, max deviation " + fmt("%.1e", worst) + "; worked example " + fmt("%.17g", worked)};
}

// ---------------------------------------------------------------------------
// 4. Gate limits.

Outcome gate_limits() {
  const std::vector<TokenId> s = {3, 1, 4, 5, 2};
  bool ok = true;
  {
    skipthought::Model m(skipthought::Config{6, 3, 4}, 7);
    m.params().mat("emb").setConstant(1.0);
    m.params().mat("enc.Wz").setConstant(1000.0);
    for (const auto& step : skipthought::gru_encode(s, m).steps) ok &= (step.z.array() == 1.0).all() && step.h == step.h_bar;
    m.params().mat("enc.Wz").setConstant(-1000.0);
    for (const auto& step : skipthought::gru_encode(s, m).steps) ok &= (step.z.array() == 0.0).all() && step.h == step.h_prev;
  }
  {
    vsembed::Model m(vsembed::Config{6, 3, 4, 5}, 8);
    m.params().mat("emb").setConstant(1.0);
    m.params().mat("Wxf").setConstant(1000.0);
    m.params().mat("Wxi").setConstant(-1000.0);
    m.params().value("wcf").data.setZero();
    m.params().value("wci").data.setZero();
    for (const auto& step : vsembed::lstm_trace(s, m).steps) {
      ok &= (step.f.array() == 1.0).all() && (step.i.array() == 0.0).all() && step.c == step.c_prev;
    }
  }
  return {ok, "GRU z = 1 and z = 0, LSTM f = 1 with i = 0, compared bit for bit"};
}

// ---------------------------------------------------------------------------
// 5. Skip-thought neighbourhoods.

Outcome skipthought_clusters() {
  const std::vector<std::vector<std::vector<std::string>>> fillers = {
      {{"chef", "baker", "cook", "waiter"}, {"stirs", "tastes", "bakes", "serves"}, {"soup", "bread", "cake", "stew"}},
      {{"pilot", "captain", "sailor", "navigator"}, {"steers", "anchors", "sails", "docks"}, {"ship", "boat", "ferry", "yacht"}},
      {{"teacher", "student", "tutor", "pupil"}, {"reads", "writes", "grades", "studies"}, {"essay", "lesson", "book", "exam"}},
      {{"farmer", "shepherd", "rancher", "miller"}, {"plows", "harvests", "feeds", "plants"}, {"field", "wheat", "sheep", "barley"}},
  };
  Rng rng(55);
  auto sentence = [&](std::size_t c) {
    const auto& f = fillers[c];
    return std::vector<std::string>{"the", f[0][rng.index(4)], f[1][rng.index(4)], "the", f[2][rng.index(4)]};
  };
  // 4 clusters x 10 documents x 5 sentences; a document stays inside its cluster.
  std::vector<std::vector<std::vector<std::string>>> docs;
  std::vector<std::size_t> cluster_of;
  std::vector<std::vector<std::string>> pool_text;
  for (std::size_t d = 0; d < 40; ++d) {
    docs.emplace_back();
    for (int k = 0; k < 5; ++k) {
      docs.back().push_back(sentence(d % 4));
      pool_text.push_back(docs.back().back());
      cluster_of.push_back(d % 4);
    }
  }
  std::vector<std::vector<std::string>> flat(pool_text.begin(), pool_text.end());
  const Vocabulary vocab = build_vocab(flat, 100);
  std::vector<std::vector<std::vector<TokenId>>> encoded;
  for (const auto& d : docs) {
    encoded.emplace_back();
    for (const auto& s : d) encoded.back().push_back(vocab.encode(s));
  }
  skipthought::Model m(skipthought::Config{vocab.size(), 16, 32}, 5);
  skipthought::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.adam.lr = 0.01;
  skipthought::train(m, skipthought::make_triples(encoded), cfg);

  std::vector<std::vector<TokenId>> pool;
  for (const auto& s : pool_text) pool.push_back(vocab.encode(s));
  int worst = 4;
  std::string counts;
  for (std::size_t c = 0; c < 4; ++c) {
    std::vector<std::string> query;
    do query = sentence(c);
    while (std::find(pool_text.begin(), pool_text.end(), query) != pool_text.end());
    int same = 0;
    for (std::size_t k : skipthought::nearest_neighbors(vocab.encode(query), pool, 4, m)) same += cluster_of[k] == c;
    worst = std::min(worst, same);
    counts += (c ? "," : "") + std::to_string(same);
  }
  return {worst >= 3, "200 sentences; same-cluster neighbours among top 4 per held-out query: " + counts};
}

// ---------------------------------------------------------------------------
// 6. Ranking loss on separable pairs.

Outcome ranking_separable() {
  Rng rng(66);
  std::vector<vsembed::Pair> pairs(50);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    pairs[k].feature = VectorXd(16);
    for (auto& v : pairs[k].feature) v = rng.normal();
    pairs[k].sentence = {static_cast<TokenId>(Vocabulary::kSpecialCount + k)};
  }
  vsembed::Model m(vsembed::Config{Vocabulary::kSpecialCount + pairs.size(), 16, 32, 16}, 6);
  vsembed::TrainConfig cfg;
  const double initial = vsembed::dataset_loss(pairs, m, cfg.margin);
  cfg.epochs = 100;
  cfg.batch_size = 10;
  cfg.sgd.lr = 0.5;
  vsembed::train(m, pairs, cfg);
  const double final_loss = vsembed::dataset_loss(pairs, m, cfg.margin);
  const double rank = vsembed::median_rank(pairs, m);
  return {final_loss < 0.05 * initial && rank == 1.0,
          "loss " + fmt("%.4g", initial) + " -> " + fmt("%.4g", final_loss) + ", median rank " + fmt("%g", rank)};
}

// ---------------------------------------------------------------------------
// 7-10. The pipeline on a synthetic pair.

struct Synthetic {
  pipeline::PipelineConfig config;
  std::vector<eval::EvalReport> reports;
  double seconds = 0.0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const eval::EvalReport& report(const std::vector<eval::EvalReport>& reports, const std::string& method) {
  for (const auto& r : reports) {
    if (r.method == method) return r;
  }
  throw std::runtime_error("no report for " + method);
}

Synthetic& synthetic(const fs::path& root) {
  static Synthetic s = [&] {
    Synthetic out;
    const auto t0 = std::chrono::steady_clock::now();
    out.config = pipeline::write_synthetic((root / "data").string(), 1);
    out.config.out_dir = (root / "run_a").string();
    out.config.quiet = true;
    pipeline::Runner runner(out.config);
    runner.run_all();
    out.reports = runner.evaluate();
    out.seconds = seconds_since(t0);
    return out;
  }();
  return s;
}

Outcome end_to_end(const fs::path& root) {
  const Synthetic& s = synthetic(root);
  const double uni = report(s.reports, "uniform").recall, cnn = report(s.reports, "cnn").recall,
               crf = report(s.reports, "crf").recall;
  return {crf >= uni + 30.0 && crf >= cnn && s.seconds < 15 * 60,
          "recall uniform " + fmt("%.2f", uni) + ", cnn " + fmt("%.2f", cnn) + ", crf " + fmt("%.2f", crf) + "; " +
              fmt("%.0f", s.seconds) + " s"};
}

Outcome depth_ablation(const fs::path& root) {
  const Synthetic& s = synthetic(root);
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::PipelineConfig shallow = s.config;
  shallow.out_dir = (root / "run_shallow").string();
  shallow.cnn_arch = shallow.cnn_arch.substr(0, shallow.cnn_arch.find(','));
  fs::create_directories(shallow.out_dir);
  for (const auto& entry : fs::directory_iterator(s.config.out_dir)) {
    fs::copy(entry.path(), fs::path(shallow.out_dir) / entry.path().filename(), fs::copy_options::overwrite_existing);
  }
  pipeline::Runner runner(shallow);
  runner.train_cnn();
  const double one = report(runner.evaluate(), "cnn").recall, three = report(s.reports, "cnn").recall;
  const double secs = seconds_since(t0);
  return {three >= one && secs < 15 * 60, "CNN recall " + s.config.cnn_arch + " " + fmt("%.2f", three) + ", " +
                                              shallow.cnn_arch + " " + fmt("%.2f", one) + "; " + fmt("%.0f", secs) + " s"};
}

Outcome book_retrieval(const fs::path& root) {
  const Synthetic& s = synthetic(root);
  const auto t0 = std::chrono::steady_clock::now();
  pipeline::Runner runner(s.config);
  const auto ranked = runner.retrieve_book();
  const double secs = seconds_since(t0);
  bool ok = ranked.size() == 5 && ranked.front().name == s.config.candidates.front() && ranked.front().score == 100.0;
  for (std::size_t k = 1; k < ranked.size(); ++k) ok &= ranked[k].score < 100.0;
  std::string detail = "first " + fs::path(ranked.front().name).filename().string() + " score " +
                       fmt("%g", ranked.front().score) + ", runner-up " + fmt("%.3g", ranked.size() > 1 ? ranked[1].score : 0.0);
  return {ok && secs < 5 * 60, detail + "; " + fmt("%.0f", secs) + " s"};
}

Outcome determinism(const fs::path& root) {
  const Synthetic& s = synthetic(root);
  pipeline::PipelineConfig again = s.config;
  again.out_dir = (root / "run_b").string();
  pipeline::Runner(again).run_all();
  const pipeline::Artifacts a(s.config.out_dir), b(again.out_dir);
  const std::vector<std::pair<std::string, std::string>> files = {
      {a.alignment, b.alignment},
      {a.skipthought, b.skipthought},
      {pipeline::Artifacts::vocab_of(a.skipthought), pipeline::Artifacts::vocab_of(b.skipthought)},
      {a.vsembed, b.vsembed},
      {a.cnn, b.cnn},
      {a.crf, b.crf},
      {a.tensor, b.tensor},
  };
  std::string differing;
  for (const auto& [x, y] : files) {
    if (read_file(x) != read_file(y)) differing += " " + fs::path(x).filename().string();
  }
  return {differing.empty(), differing.empty() ? std::to_string(files.size()) + " artifacts byte-identical"
                                               : "differ:" + differing};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "bookalign_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient checks", [] {
         const auto t0 = std::chrono::steady_clock::now();
         Outcome o = gradient_checks();
         const double secs = seconds_since(t0);
         o.passed &= secs < 120;
         o.detail += "; " + fmt("%.1f", secs) + " s";
         return o;
       }},
      {"dp equals enumeration", [] {
         const auto t0 = std::chrono::steady_clock::now();
         Outcome o = dp_exactness();
         const double secs = seconds_since(t0);
         o.passed &= secs < 10;
         o.detail += "; " + fmt("%.2f", secs) + " s";
         return o;
       }},
      {"bleu oracle", bleu_oracle},
      {"gate limits", gate_limits},
      {"skip-thought clusters", [] {
         const auto t0 = std::chrono::steady_clock::now();
         Outcome o = skipthought_clusters();
         const double secs = seconds_since(t0);
         o.passed &= secs < 600;
         o.detail += "; " + fmt("%.1f", secs) + " s";
         return o;
       }},
      {"ranking on separable pairs", [] {
         const auto t0 = std::chrono::steady_clock::now();
         Outcome o = ranking_separable();
         const double secs = seconds_since(t0);
         o.passed &= secs < 300;
         o.detail += "; " + fmt("%.1f", secs) + " s";
         return o;
       }},
      {"synthetic end to end", [&] { return end_to_end(root); }},
      {"depth ablation", [&] { return depth_ablation(root); }},
      {"book retrieval", [&] { return book_retrieval(root); }},
      {"determinism", [&] { return determinism(root); }},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.passed;
    std::cout << (o.passed ? "PASS " : "FAIL ") << k + 1 << ' ' << criteria[k].first << ": " << o.detail << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
