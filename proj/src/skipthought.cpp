#include "bookalign/skipthought.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "bookalign/error.hpp"

namespace bookalign::skipthought {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const char* prefix(Decoder which) { return which == Decoder::kPrevious ? "dec_prev." : "dec_next."; }

/// Weight views for one GRU. C* are null for the encoder.
struct GruView {
  ConstMatrixMap W, U, Wz, Uz, Wr, Ur;
  const ConstMatrixMap* C = nullptr;
  const ConstMatrixMap* Cz = nullptr;
  const ConstMatrixMap* Cr = nullptr;

  GruView(const ParamStore& p, const std::string& pre)
      : W(p.mat(pre + "W")), U(p.mat(pre + "U")), Wz(p.mat(pre + "Wz")), Uz(p.mat(pre + "Uz")),
        Wr(p.mat(pre + "Wr")), Ur(p.mat(pre + "Ur")) {}
};

struct GruGrads {
  MatrixMap W, U, Wz, Uz, Wr, Ur;
  GruGrads(ParamStore& p, const std::string& pre)
      : W(p.grad_mat(pre + "W")), U(p.grad_mat(pre + "U")), Wz(p.grad_mat(pre + "Wz")),
        Uz(p.grad_mat(pre + "Uz")), Wr(p.grad_mat(pre + "Wr")), Ur(p.grad_mat(pre + "Ur")) {}
};

/// Conditioning offsets C h_i, C_z h_i, C_r h_i (zero for the encoder).
struct Context {
  VectorXd h, z, r;
};

GruStep gru_step(const GruView& g, const VectorXd& x, const VectorXd& h_prev, const Context& ctx) {
  GruStep s;
  s.x = x;
  s.h_prev = h_prev;
  s.z = sigmoid(g.Wz * x + g.Uz * h_prev + ctx.z);
  s.r = sigmoid(g.Wr * x + g.Ur * h_prev + ctx.r);
  s.h_bar = tanh(g.W * x + g.U * s.r.cwiseProduct(h_prev) + ctx.h);
  s.h = (VectorXd::Ones(h_prev.size()) - s.z).cwiseProduct(h_prev) + s.z.cwiseProduct(s.h_bar);
  return s;
}

/// Backprop of one step. Accumulates weight grads; returns d/dx and d/dh_prev;
/// adds the pre-activation grads to dctx (which are the grads w.r.t. the offsets).
void gru_step_backward(const GruView& g, GruGrads& gg, const GruStep& s, const VectorXd& dh,
                       VectorXd& dx, VectorXd& dh_prev, Context& dctx) {
  const VectorXd dz = dh.cwiseProduct(s.h_bar - s.h_prev);
  const VectorXd dh_bar = dh.cwiseProduct(s.z);
  dh_prev = dh.cwiseProduct(VectorXd::Ones(dh.size()) - s.z);

  const VectorXd da_h = dh_bar.cwiseProduct(VectorXd::Ones(dh.size()) - s.h_bar.cwiseAbs2());
  const VectorXd rh = s.r.cwiseProduct(s.h_prev);
  gg.W.noalias() += da_h * s.x.transpose();
  gg.U.noalias() += da_h * rh.transpose();
  const VectorXd drh = g.U.transpose() * da_h;
  const VectorXd dr = drh.cwiseProduct(s.h_prev);
  dh_prev += drh.cwiseProduct(s.r);

  const VectorXd da_z = dz.cwiseProduct(s.z.cwiseProduct(VectorXd::Ones(dh.size()) - s.z));
  const VectorXd da_r = dr.cwiseProduct(s.r.cwiseProduct(VectorXd::Ones(dh.size()) - s.r));
  gg.Wz.noalias() += da_z * s.x.transpose();
  gg.Uz.noalias() += da_z * s.h_prev.transpose();
  gg.Wr.noalias() += da_r * s.x.transpose();
  gg.Ur.noalias() += da_r * s.h_prev.transpose();

  dx = g.W.transpose() * da_h + g.Wz.transpose() * da_z + g.Wr.transpose() * da_r;
  dh_prev += g.Uz.transpose() * da_z + g.Ur.transpose() * da_r;

  dctx.h += da_h;
  dctx.z += da_z;
  dctx.r += da_r;
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab_size, const char* what) {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + ": empty sentence");
  for (auto id : ids) {
    if (id >= vocab_size) {
      throw std::invalid_argument(std::string(what) + ": token id " + std::to_string(id) +
                                  " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
}

Context zero_context(std::size_t d_h) {
  return {VectorXd::Zero(d_h), VectorXd::Zero(d_h), VectorXd::Zero(d_h)};
}

Context decoder_context(const ParamStore& p, const std::string& pre, const VectorXd& h_i) {
  return {p.mat(pre + "C") * h_i, p.mat(pre + "Cz") * h_i, p.mat(pre + "Cr") * h_i};
}

std::vector<GruStep> run_decoder(std::span<const TokenId> target, const VectorXd& h_i,
                                 const Model& model, Decoder which) {
  const auto& p = model.params();
  const std::string pre = prefix(which);
  const GruView g(p, pre);
  const Context ctx = decoder_context(p, pre, h_i);
  const ConstMatrixMap emb = p.mat("emb");

  std::vector<GruStep> steps;
  steps.reserve(target.size());
  VectorXd h = VectorXd::Zero(static_cast<Eigen::Index>(model.config().hidden_dim));
  for (std::size_t t = 0; t < target.size(); ++t) {
    const TokenId input = t == 0 ? Vocabulary::kEos : target[t - 1];
    steps.push_back(gru_step(g, emb.row(input).transpose(), h, ctx));
    h = steps.back().h;
  }
  return steps;
}

/// Loss of one decoder and (when scale != 0) backprop into decoder, projection,
/// embeddings. Returns the loss; adds d loss / d h_i * scale to dh_i.
double decoder_loss(std::span<const TokenId> target, const VectorXd& h_i, Model& model, Decoder which,
                    double scale, VectorXd& dh_i) {
  const std::vector<GruStep> steps = run_decoder(target, h_i, model, which);
  auto& p = model.params();
  const ConstMatrixMap proj = std::as_const(p).mat("proj");

  double loss = 0.0;
  std::vector<VectorXd> dlogits;
  if (scale != 0.0) dlogits.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const VectorXd logp = log_softmax(proj * steps[t].h);
    loss -= logp[target[t]];
    if (scale != 0.0) {
      VectorXd d = logp.array().exp();
      d[target[t]] -= 1.0;
      dlogits.push_back(scale * d);
    }
  }
  if (scale == 0.0) return loss;

  const std::string pre = prefix(which);
  const GruView g(std::as_const(p), pre);
  GruGrads gg(p, pre);
  MatrixMap dproj = p.grad_mat("proj");
  MatrixMap demb = p.grad_mat("emb");
  const auto d_h = static_cast<Eigen::Index>(model.config().hidden_dim);
  Context dctx = zero_context(static_cast<std::size_t>(d_h));
  VectorXd dh_next = VectorXd::Zero(d_h);
  VectorXd dx, dh_prev;
  for (std::size_t t = steps.size(); t-- > 0;) {
    dproj.noalias() += dlogits[t] * steps[t].h.transpose();
    const VectorXd dh = dh_next + proj.transpose() * dlogits[t];
    gru_step_backward(g, gg, steps[t], dh, dx, dh_prev, dctx);
    const TokenId input = t == 0 ? Vocabulary::kEos : target[t - 1];
    demb.row(input) += dx.transpose();
    dh_next = dh_prev;
  }

  p.grad_mat(pre + "C").noalias() += dctx.h * h_i.transpose();
  p.grad_mat(pre + "Cz").noalias() += dctx.z * h_i.transpose();
  p.grad_mat(pre + "Cr").noalias() += dctx.r * h_i.transpose();
  const auto& cp = std::as_const(p);
  dh_i += cp.mat(pre + "C").transpose() * dctx.h + cp.mat(pre + "Cz").transpose() * dctx.z +
          cp.mat(pre + "Cr").transpose() * dctx.r;
  return loss;
}

const std::vector<std::string>& gru_names(bool decoder) {
  static const std::vector<std::string> enc = {"W", "U", "Wz", "Uz", "Wr", "Ur"};
  static const std::vector<std::string> dec = {"W", "U", "Wz", "Uz", "Wr", "Ur", "C", "Cz", "Cr"};
  return decoder ? dec : enc;
}

}  // namespace

// ---------------------------------------------------------------------------

Model::Model(const Config& config, std::uint64_t seed) : config_(config) {
  if (config.vocab_size == 0 || config.embed_dim == 0 || config.hidden_dim == 0) {
    throw std::invalid_argument("skipthought: all dimensions must be positive");
  }
  const std::size_t V = config.vocab_size, dx = config.embed_dim, dh = config.hidden_dim;
  std::uint64_t stream = 0;
  auto gaussian = [&](std::vector<std::size_t> shape) { return init_gaussian(std::move(shape), 0.1, mix_seed(seed, stream++)); };
  auto orthogonal = [&](std::vector<std::size_t> shape) { return init_orthogonal(std::move(shape), mix_seed(seed, stream++)); };

  params_.add("emb", gaussian({V, dx}));
  params_.add("proj", gaussian({V, dh}));
  for (const std::string pre : {"enc.", "dec_prev.", "dec_next."}) {
    const bool decoder = pre != "enc.";
    for (const auto& n : gru_names(decoder)) {
      if (n[0] == 'U') {
        params_.add(pre + n, orthogonal({dh, dh}));
      } else if (n[0] == 'C') {
        params_.add(pre + n, gaussian({dh, dh}));
      } else {
        params_.add(pre + n, gaussian({dh, dx}));
      }
    }
  }
}

Model::Model(ParamStore params) : params_(std::move(params)) {
  const auto& emb = params_.value("emb");
  const auto& W = params_.value("enc.W");
  config_.vocab_size = emb.shape.at(0);
  config_.embed_dim = emb.shape.at(1);
  config_.hidden_dim = W.shape.at(0);
}

EncoderTrace gru_encode(std::span<const TokenId> sentence, const Model& model) {
  check_ids(sentence, model.config().vocab_size, "gru_encode");
  const auto& p = model.params();
  const GruView g(p, "enc.");
  const ConstMatrixMap emb = p.mat("emb");
  const Context ctx = zero_context(model.config().hidden_dim);

  EncoderTrace trace;
  trace.steps.reserve(sentence.size());
  VectorXd h = VectorXd::Zero(static_cast<Eigen::Index>(model.config().hidden_dim));
  for (TokenId id : sentence) {
    trace.steps.push_back(gru_step(g, emb.row(id).transpose(), h, ctx));
    h = trace.steps.back().h;
  }
  return trace;
}

VectorXd encode(std::span<const TokenId> sentence, const Model& model) {
  return gru_encode(sentence, model).final_state();
}

MatrixXd gru_decode_logits(std::span<const TokenId> target, const VectorXd& h_i, const Model& model,
                           Decoder which) {
  check_ids(target, model.config().vocab_size, "gru_decode_logits");
  const auto steps = run_decoder(target, h_i, model, which);
  const ConstMatrixMap proj = model.params().mat("proj");
  MatrixXd logits(static_cast<Eigen::Index>(steps.size()), proj.rows());
  for (std::size_t t = 0; t < steps.size(); ++t) logits.row(static_cast<Eigen::Index>(t)) = (proj * steps[t].h).transpose();
  return logits;
}

double triple_loss(const SentenceTriple& triple, Model& model, double grad_scale) {
  const std::size_t V = model.config().vocab_size;
  check_ids(triple.current, V, "triple_loss");
  check_ids(triple.previous, V, "triple_loss");
  check_ids(triple.next, V, "triple_loss");

  const EncoderTrace trace = gru_encode(triple.current, model);
  const VectorXd& h_i = trace.final_state();
  VectorXd dh_i = VectorXd::Zero(h_i.size());
  double loss = decoder_loss(triple.next, h_i, model, Decoder::kNext, grad_scale, dh_i);
  loss += decoder_loss(triple.previous, h_i, model, Decoder::kPrevious, grad_scale, dh_i);
  if (grad_scale == 0.0) return loss;

  auto& p = model.params();
  const GruView g(std::as_const(p), "enc.");
  GruGrads gg(p, "enc.");
  MatrixMap demb = p.grad_mat("emb");
  Context dctx = zero_context(static_cast<std::size_t>(h_i.size()));
  VectorXd dh = dh_i;
  VectorXd dx, dh_prev;
  for (std::size_t t = trace.steps.size(); t-- > 0;) {
    gru_step_backward(g, gg, trace.steps[t], dh, dx, dh_prev, dctx);
    demb.row(triple.current[t]) += dx.transpose();
    dh = dh_prev;
  }
  return loss;
}

TrainResult train(Model& model, const std::vector<SentenceTriple>& corpus, const TrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("skipthought::train: empty corpus");
  const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
  AdamState adam(config.adam);
  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  ParamStore last_good = model.params();
  model.params().zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      const std::size_t e = std::min(order.size(), b + batch);
      const double scale = 1.0 / static_cast<double>(e - b);
      double batch_loss = 0.0;
      for (std::size_t k = b; k < e; ++k) batch_loss += triple_loss(corpus[order[k]], model, scale);
      if (!std::isfinite(batch_loss)) {
        model.params() = last_good;
        throw NumericError("skipthought training diverged in epoch " + std::to_string(epoch + 1));
      }
      adam_step(model.params(), adam);
      total += batch_loss;
    }
    result.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
    last_good = model.params();
  }
  return result;
}

std::vector<SentenceTriple> make_triples(const std::vector<std::vector<std::vector<TokenId>>>& documents) {
  std::vector<SentenceTriple> out;
  for (const auto& doc : documents) {
    for (std::size_t k = 1; k + 1 < doc.size(); ++k) {
      if (doc[k - 1].empty() || doc[k].empty() || doc[k + 1].empty()) continue;
      SentenceTriple t{doc[k - 1], doc[k], doc[k + 1]};
      t.previous.push_back(Vocabulary::kEos);
      t.next.push_back(Vocabulary::kEos);
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<std::vector<std::vector<std::string>>> parse_training_corpus(std::string_view raw) {
  validate_utf8(raw);
  std::vector<std::vector<std::vector<std::string>>> docs(1);
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    auto tokens = tokenize(raw.substr(pos, nl - pos));
    pos = nl + 1;
    if (tokens.empty()) {
      if (!docs.back().empty()) docs.emplace_back();
    } else {
      docs.back().push_back(std::move(tokens));
    }
  }
  if (docs.back().empty()) docs.pop_back();
  return docs;
}

double similarity(const VectorXd& u, const VectorXd& v) { return u.dot(v); }

std::vector<std::size_t> nearest_neighbors(std::span<const TokenId> query,
                                           const std::vector<std::vector<TokenId>>& pool, std::size_t k,
                                           const Model& model) {
  if (k == 0) return {};
  const VectorXd q = encode(query, model);
  std::vector<double> scores(pool.size());
  for (std::size_t j = 0; j < pool.size(); ++j) scores[j] = similarity(q, encode(pool[j], model));
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace bookalign::skipthought
