#include "bookalign/vsembed.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "bookalign/error.hpp"

namespace bookalign::vsembed {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct LstmView {
  ConstMatrixMap Wxi, Whi, Wxf, Whf, Wxc, Whc, Wxo, Who;
  ConstVectorMap wci, wcf, wco;

  explicit LstmView(const ParamStore& p)
      : Wxi(p.mat("Wxi")), Whi(p.mat("Whi")), Wxf(p.mat("Wxf")), Whf(p.mat("Whf")),
        Wxc(p.mat("Wxc")), Whc(p.mat("Whc")), Wxo(p.mat("Wxo")), Who(p.mat("Who")),
        wci(p.value("wci").data.data(), p.value("wci").data.size()),
        wcf(p.value("wcf").data.data(), p.value("wcf").data.size()),
        wco(p.value("wco").data.data(), p.value("wco").data.size()) {}
};

LstmStep lstm_step(const LstmView& w, const VectorXd& x, const VectorXd& m_prev, const VectorXd& c_prev) {
  LstmStep s;
  s.x = x;
  s.m_prev = m_prev;
  s.c_prev = c_prev;
  s.i = sigmoid(w.Wxi * x + w.Whi * m_prev + w.wci.cwiseProduct(c_prev));
  s.f = sigmoid(w.Wxf * x + w.Whf * m_prev + w.wcf.cwiseProduct(c_prev));
  s.a = tanh(w.Wxc * x + w.Whc * m_prev);
  s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.a);
  s.o = sigmoid(w.Wxo * x + w.Who * m_prev + w.wco.cwiseProduct(s.c));
  s.tanh_c = tanh(s.c);
  s.m = s.o.cwiseProduct(s.tanh_c);
  return s;
}

VectorXd sigmoid_grad(const VectorXd& y) { return y.cwiseProduct(VectorXd::Ones(y.size()) - y); }
VectorXd tanh_grad(const VectorXd& y) { return VectorXd::Ones(y.size()) - y.cwiseAbs2(); }

/// Backprop through the whole trace given d loss / d m^N; accumulates grads.
void lstm_backward(const LstmTrace& trace, std::span<const TokenId> sentence, const VectorXd& dm_final,
                   ParamStore& p) {
  const LstmView w(std::as_const(p));
  MatrixMap gWxi = p.grad_mat("Wxi"), gWhi = p.grad_mat("Whi"), gWxf = p.grad_mat("Wxf"),
            gWhf = p.grad_mat("Whf"), gWxc = p.grad_mat("Wxc"), gWhc = p.grad_mat("Whc"),
            gWxo = p.grad_mat("Wxo"), gWho = p.grad_mat("Who"), gemb = p.grad_mat("emb");
  VectorMap gwci(p.grad("wci").data.data(), p.grad("wci").data.size());
  VectorMap gwcf(p.grad("wcf").data.data(), p.grad("wcf").data.size());
  VectorMap gwco(p.grad("wco").data.data(), p.grad("wco").data.size());

  VectorXd dm = dm_final;
  VectorXd dc_next = VectorXd::Zero(dm.size());
  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    const LstmStep& s = trace.steps[t];
    const VectorXd d_o = dm.cwiseProduct(s.tanh_c);
    const VectorXd da_o = d_o.cwiseProduct(sigmoid_grad(s.o));
    VectorXd dc = dc_next + dm.cwiseProduct(s.o).cwiseProduct(tanh_grad(s.tanh_c)) + w.wco.cwiseProduct(da_o);
    gwco += da_o.cwiseProduct(s.c);

    const VectorXd da_i = dc.cwiseProduct(s.a).cwiseProduct(sigmoid_grad(s.i));
    const VectorXd da_f = dc.cwiseProduct(s.c_prev).cwiseProduct(sigmoid_grad(s.f));
    const VectorXd da_a = dc.cwiseProduct(s.i).cwiseProduct(tanh_grad(s.a));

    gWxi.noalias() += da_i * s.x.transpose();
    gWhi.noalias() += da_i * s.m_prev.transpose();
    gWxf.noalias() += da_f * s.x.transpose();
    gWhf.noalias() += da_f * s.m_prev.transpose();
    gWxc.noalias() += da_a * s.x.transpose();
    gWhc.noalias() += da_a * s.m_prev.transpose();
    gWxo.noalias() += da_o * s.x.transpose();
    gWho.noalias() += da_o * s.m_prev.transpose();
    gwci += da_i.cwiseProduct(s.c_prev);
    gwcf += da_f.cwiseProduct(s.c_prev);

    const VectorXd dx = w.Wxi.transpose() * da_i + w.Wxf.transpose() * da_f + w.Wxc.transpose() * da_a +
                        w.Wxo.transpose() * da_o;
    gemb.row(sentence[t]) += dx.transpose();

    dm = w.Whi.transpose() * da_i + w.Whf.transpose() * da_f + w.Whc.transpose() * da_a +
         w.Who.transpose() * da_o;
    dc_next = dc.cwiseProduct(s.f) + w.wci.cwiseProduct(da_i) + w.wcf.cwiseProduct(da_f);
  }
}

/// Row-normalize; throws on a zero row.
MatrixXd normalize_rows(const MatrixXd& x, VectorXd& norms) {
  norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (norms[r] == 0.0) throw std::invalid_argument("cosine score of a zero vector is undefined");
  }
  return norms.cwiseInverse().asDiagonal() * x;
}

/// Gradient through x_hat = x / |x| (row-wise).
MatrixXd normalize_rows_backward(const MatrixXd& x_hat, const VectorXd& norms, const MatrixXd& d_hat) {
  const VectorXd proj = (x_hat.cwiseProduct(d_hat)).rowwise().sum();
  return norms.cwiseInverse().asDiagonal() * (d_hat - proj.asDiagonal() * x_hat);
}

}  // namespace

// ---------------------------------------------------------------------------

Model::Model(const Config& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size == 0 || config.embed_dim == 0 || config.mem_dim == 0 || config.feature_dim == 0) {
    throw std::invalid_argument("vsembed: all dimensions must be positive");
  }
  const std::size_t V = config.vocab_size, dx = config.embed_dim, dm = config.mem_dim, dq = config.feature_dim;
  std::uint64_t stream = 0;
  auto gaussian = [&](std::vector<std::size_t> shape) { return init_gaussian(std::move(shape), 0.1, mix_seed(seed, stream++)); };
  auto orthogonal = [&](std::vector<std::size_t> shape) { return init_orthogonal(std::move(shape), mix_seed(seed, stream++)); };

  params_.add("emb", gaussian({V, dx}));
  for (const char* g : {"i", "f", "c", "o"}) {
    params_.add(std::string("Wx") + g, gaussian({dm, dx}));
    params_.add(std::string("Wh") + g, orthogonal({dm, dm}));
  }
  for (const char* g : {"wci", "wcf", "wco"}) params_.add(g, gaussian({dm}));
  params_.add("WI", gaussian({dm, dq}));
}

Model::Model(ParamStore params) : params_(std::move(params)) {
  config_.vocab_size = params_.value("emb").shape.at(0);
  config_.embed_dim = params_.value("emb").shape.at(1);
  config_.mem_dim = params_.value("WI").shape.at(0);
  config_.feature_dim = params_.value("WI").shape.at(1);
}

LstmTrace lstm_trace(std::span<const TokenId> sentence, const Model& model) {
  if (sentence.empty()) throw std::invalid_argument("lstm_encode: empty sentence");
  for (auto id : sentence) {
    if (id >= model.config().vocab_size) throw std::invalid_argument("lstm_encode: token id out of range");
  }
  const LstmView w(model.params());
  const ConstMatrixMap emb = model.params().mat("emb");
  const auto dm = static_cast<Eigen::Index>(model.config().mem_dim);
  VectorXd m = VectorXd::Zero(dm);
  VectorXd c = VectorXd::Zero(dm);
  LstmTrace trace;
  trace.steps.reserve(sentence.size());
  for (TokenId id : sentence) {
    trace.steps.push_back(lstm_step(w, emb.row(id).transpose(), m, c));
    m = trace.steps.back().m;
    c = trace.steps.back().c;
  }
  return trace;
}

VectorXd lstm_encode(std::span<const TokenId> sentence, const Model& model) {
  return lstm_trace(sentence, model).final_state();
}

VectorXd pool_frames(const std::vector<VectorXd>& frames) {
  if (frames.empty()) throw std::invalid_argument("pool_frames: no frames");
  VectorXd sum = VectorXd::Zero(frames.front().size());
  for (const auto& f : frames) {
    if (f.size() != sum.size()) throw std::invalid_argument("pool_frames: frame dimensions differ");
    sum += f;
  }
  return sum / static_cast<double>(frames.size());
}

VectorXd embed_clip(const VectorXd& feature, const Model& model) {
  const ConstMatrixMap WI = model.params().mat("WI");
  if (feature.size() != WI.cols()) {
    throw std::invalid_argument("embed_clip: feature has dimension " + std::to_string(feature.size()) +
                                ", model expects " + std::to_string(WI.cols()));
  }
  return WI * feature;
}

double score(const VectorXd& m, const VectorXd& v) {
  if (m.norm() == 0.0 || v.norm() == 0.0) throw std::invalid_argument("cosine score of a zero vector is undefined");
  return cosine(m, v);
}

HingeTerms hinge_terms(const MatrixXd& S, double margin) {
  HingeTerms out;
  out.d_scores = MatrixXd::Zero(S.rows(), S.cols());
  MatrixXd& dS = out.d_scores;
  const Eigen::Index B = S.rows();
  for (Eigen::Index b = 0; b < B; ++b) {
    for (Eigen::Index k = 0; k < B; ++k) {
      if (k == b) continue;
      const double sentence_term = margin - S(b, b) + S(b, k);
      if (sentence_term > 0.0) {
        out.loss += sentence_term;
        dS(b, b) -= 1.0;
        dS(b, k) += 1.0;
        ++out.active_terms;
      }
      const double clip_term = margin - S(b, b) + S(k, b);
      if (clip_term > 0.0) {
        out.loss += clip_term;
        dS(b, b) -= 1.0;
        dS(k, b) += 1.0;
        ++out.active_terms;
      }
    }
  }
  return out;
}

RankingLoss ranking_loss(const MatrixXd& sentences, const MatrixXd& clips, double margin) {
  if (sentences.rows() != clips.rows() || sentences.cols() != clips.cols()) {
    throw std::invalid_argument("ranking_loss: sentence and clip batches differ in shape");
  }
  VectorXd m_norm, v_norm;
  const MatrixXd M = normalize_rows(sentences, m_norm);
  const MatrixXd V = normalize_rows(clips, v_norm);
  const MatrixXd S = M * V.transpose();  // S(a, b) = s(m_a, v_b)

  const HingeTerms h = hinge_terms(S, margin);
  RankingLoss out;
  out.loss = h.loss;
  out.active_terms = h.active_terms;
  const MatrixXd& dS = h.d_scores;
  out.d_sentences = normalize_rows_backward(M, m_norm, dS * V);
  out.d_clips = normalize_rows_backward(V, v_norm, dS.transpose() * M);
  return out;
}

double batch_loss(std::span<const Pair* const> batch, Model& model, double margin, double grad_scale) {
  const auto B = static_cast<Eigen::Index>(batch.size());
  const auto dm = static_cast<Eigen::Index>(model.config().mem_dim);
  std::vector<LstmTrace> traces;
  traces.reserve(batch.size());
  MatrixXd sentences(B, dm), clips(B, dm);
  for (Eigen::Index b = 0; b < B; ++b) {
    traces.push_back(lstm_trace(batch[b]->sentence, model));
    sentences.row(b) = traces.back().final_state().transpose();
    clips.row(b) = embed_clip(batch[b]->feature, model).transpose();
  }
  const RankingLoss r = ranking_loss(sentences, clips, margin);
  if (grad_scale == 0.0 || r.active_terms == 0) return r.loss;

  auto& p = model.params();
  MatrixMap gWI = p.grad_mat("WI");
  for (Eigen::Index b = 0; b < B; ++b) {
    gWI.noalias() += grad_scale * r.d_clips.row(b).transpose() * batch[b]->feature.transpose();
    lstm_backward(traces[b], batch[b]->sentence, grad_scale * r.d_sentences.row(b).transpose(), p);
  }
  return r.loss;
}

double dataset_loss(const std::vector<Pair>& pairs, Model& model, double margin) {
  std::vector<const Pair*> all;
  for (const auto& p : pairs) all.push_back(&p);
  return batch_loss(all, model, margin, 0.0);
}

double median_rank(const std::vector<Pair>& pairs, const Model& model) {
  if (pairs.empty()) return 0.0;
  std::vector<VectorXd> m, v;
  for (const auto& p : pairs) {
    m.push_back(lstm_encode(p.sentence, model));
    v.push_back(embed_clip(p.feature, model));
  }
  std::vector<double> ranks;
  for (std::size_t a = 0; a < pairs.size(); ++a) {
    const double own = score(m[a], v[a]);
    std::size_t rank = 1;
    for (std::size_t b = 0; b < pairs.size(); ++b) {
      if (b != a && score(m[a], v[b]) > own) ++rank;
    }
    ranks.push_back(static_cast<double>(rank));
  }
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  return n % 2 == 1 ? ranks[n / 2] : 0.5 * (ranks[n / 2 - 1] + ranks[n / 2]);
}

TrainResult train(Model& model, const std::vector<Pair>& pairs, const TrainConfig& config,
                  const std::vector<Pair>& eval) {
  if (pairs.size() < 2) throw std::invalid_argument("vsembed::train: need at least two pairs");
  const std::size_t batch = std::max<std::size_t>(2, config.batch_size);
  Rng rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  ParamStore last_good = model.params();
  model.params().zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      std::size_t e = std::min(order.size(), b + batch);
      if (e - b < 2) continue;  // a singleton batch has no contrastive samples
      std::vector<const Pair*> members;
      for (std::size_t k = b; k < e; ++k) members.push_back(&pairs[order[k]]);
      const double loss = batch_loss(members, model, config.margin, 1.0);
      if (!std::isfinite(loss)) {
        model.params() = last_good;
        throw NumericError("vsembed training diverged in epoch " + std::to_string(epoch + 1));
      }
      sgd_step(model.params(), config.sgd);
      total += loss;
    }
    result.epoch_loss.push_back(total);
    last_good = model.params();
  }
  result.median_rank = median_rank(eval.empty() ? pairs : eval, model);
  return result;
}

}  // namespace bookalign::vsembed
