#include "bookalign/ctxcnn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "bookalign/error.hpp"

namespace bookalign::ctxcnn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

constexpr double kLogitClip = 30.0;

std::string conv_name(std::size_t k, const char* part) { return "conv" + std::to_string(k) + "." + part; }

/// Copy of x (channels x rows*cols) padded by (pi, pj) on every side with
/// replicated borders.
MatrixXd pad(const MatrixXd& x, std::size_t rows, std::size_t cols, std::size_t pi, std::size_t pj) {
  const long R = static_cast<long>(rows), C = static_cast<long>(cols);
  const long PR = R + 2 * static_cast<long>(pi), PC = C + 2 * static_cast<long>(pj);
  MatrixXd out(x.rows(), PR * PC);
  for (long i = 0; i < PR; ++i) {
    const long si = std::clamp(i - static_cast<long>(pi), 0L, R - 1);
    for (long j = 0; j < PC; ++j) out.col(i * PC + j) = x.col(si * C + std::clamp(j - static_cast<long>(pj), 0L, C - 1));
  }
  return out;
}

/// Adjoint of pad: every padded cell's gradient goes to the cell it copied.
MatrixXd unpad(const MatrixXd& g, std::size_t rows, std::size_t cols, std::size_t pi, std::size_t pj) {
  const long R = static_cast<long>(rows), C = static_cast<long>(cols);
  const long PR = R + 2 * static_cast<long>(pi), PC = C + 2 * static_cast<long>(pj);
  MatrixXd out = MatrixXd::Zero(g.rows(), R * C);
  for (long i = 0; i < PR; ++i) {
    const long si = std::clamp(i - static_cast<long>(pi), 0L, R - 1);
    for (long j = 0; j < PC; ++j) out.col(si * C + std::clamp(j - static_cast<long>(pj), 0L, C - 1)) += g.col(i * PC + j);
  }
  return out;
}

struct ConvShape {
  std::size_t out, in, ki, kj;
};

ConvShape conv_shape(const ParamStore& p, std::size_t k) {
  const auto& s = p.value(conv_name(k, "w")).shape;
  return {s.at(0), s.at(1), s.at(2), s.at(3)};
}

/// Out x In slice of the weight tensor at kernel offset (a, b).
MatrixXd kernel_slice(const VectorXd& w, const ConvShape& s, std::size_t a, std::size_t b) {
  MatrixXd W(static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
  for (std::size_t o = 0; o < s.out; ++o) {
    for (std::size_t c = 0; c < s.in; ++c) {
      W(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c)) =
          w[static_cast<Eigen::Index>(((o * s.in + c) * s.ki + a) * s.kj + b)];
    }
  }
  return W;
}

void add_kernel_slice(VectorXd& w, const ConvShape& s, std::size_t a, std::size_t b, const MatrixXd& dW) {
  for (std::size_t o = 0; o < s.out; ++o) {
    for (std::size_t c = 0; c < s.in; ++c) {
      w[static_cast<Eigen::Index>(((o * s.in + c) * s.ki + a) * s.kj + b)] +=
          dW(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(c));
    }
  }
}

MatrixXd conv_forward(const MatrixXd& x, std::size_t rows, std::size_t cols, const ParamStore& p, std::size_t k) {
  const ConvShape s = conv_shape(p, k);
  const VectorXd& w = p.value(conv_name(k, "w")).data;
  const VectorXd& bias = p.value(conv_name(k, "b")).data;
  const MatrixXd xp = pad(x, rows, cols, s.ki / 2, s.kj / 2);
  const auto C = static_cast<Eigen::Index>(cols), PC = static_cast<Eigen::Index>(cols + 2 * (s.kj / 2));
  MatrixXd y = bias.replicate(1, x.cols());
  for (std::size_t a = 0; a < s.ki; ++a) {
    for (std::size_t b = 0; b < s.kj; ++b) {
      const MatrixXd W = kernel_slice(w, s, a, b);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows); ++i) {
        y.middleCols(i * C, C).noalias() += W * xp.middleCols((i + static_cast<Eigen::Index>(a)) * PC + static_cast<Eigen::Index>(b), C);
      }
    }
  }
  return y;
}

/// Accumulates weight and bias grads; returns d loss / d x.
MatrixXd conv_backward(const MatrixXd& x, const MatrixXd& dy, std::size_t rows, std::size_t cols, ParamStore& p,
                       std::size_t k) {
  const ConvShape s = conv_shape(p, k);
  const VectorXd& w = p.value(conv_name(k, "w")).data;
  VectorXd& gw = p.grad(conv_name(k, "w")).data;
  p.grad(conv_name(k, "b")).data += dy.rowwise().sum();
  const MatrixXd xp = pad(x, rows, cols, s.ki / 2, s.kj / 2);
  MatrixXd dxp = MatrixXd::Zero(xp.rows(), xp.cols());
  const auto C = static_cast<Eigen::Index>(cols), PC = static_cast<Eigen::Index>(cols + 2 * (s.kj / 2));
  for (std::size_t a = 0; a < s.ki; ++a) {
    for (std::size_t b = 0; b < s.kj; ++b) {
      const MatrixXd Wt = kernel_slice(w, s, a, b).transpose();
      MatrixXd dW = MatrixXd::Zero(static_cast<Eigen::Index>(s.out), static_cast<Eigen::Index>(s.in));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(rows); ++i) {
        const Eigen::Index at = (i + static_cast<Eigen::Index>(a)) * PC + static_cast<Eigen::Index>(b);
        dW.noalias() += dy.middleCols(i * C, C) * xp.middleCols(at, C).transpose();
        dxp.middleCols(at, C).noalias() += Wt * dy.middleCols(i * C, C);
      }
      add_kernel_slice(gw, s, a, b, dW);
    }
  }
  return unpad(dxp, rows, cols, s.ki / 2, s.kj / 2);
}

void backward(const Forward& fw, const RowVectorXd& dlogits, ParamStore& p) {
  const std::size_t L = fw.pre.size();
  p.grad("proj.w").data += (dlogits * fw.inputs[L].transpose()).transpose();
  p.grad("proj.b").data[0] += dlogits.sum();
  const ConstMatrixMap proj = std::as_const(p).mat("proj.w");
  MatrixXd da = proj.transpose() * dlogits;
  for (std::size_t k = L; k-- > 0;) {
    if (!fw.masks.empty()) da = da.cwiseProduct(fw.masks[k]);
    const MatrixXd dz = (fw.pre[k].array() > 0.0).select(da, 0.0);
    da = conv_backward(fw.inputs[k], dz, fw.rows, fw.cols, p, k);
  }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

std::pair<std::size_t, std::size_t> receptive_radius(const Config& config) {
  std::size_t ri = 0, rj = 0;
  for (const auto& l : config.layers) {
    ri += l.kernel_i / 2;
    rj += l.kernel_j / 2;
  }
  return {ri, rj};
}

Model::Model(const Config& config, std::uint64_t seed) : config_(config) {
  if (config.in_channels == 0 || config.layers.empty()) {
    throw std::invalid_argument("ctxcnn: need at least one input channel and one layer");
  }
  std::uint64_t stream = 0;
  std::size_t in = config.in_channels;
  for (std::size_t k = 0; k < config.layers.size(); ++k) {
    const LayerSpec& l = config.layers[k];
    if (l.kernel_i % 2 == 0 || l.kernel_j % 2 == 0 || l.out_channels == 0) {
      throw std::invalid_argument("ctxcnn: kernels must have odd extents and layers at least one channel");
    }
    const double fan_in = static_cast<double>(in * l.kernel_i * l.kernel_j);
    params_.add(conv_name(k, "w"), init_gaussian({l.out_channels, in, l.kernel_i, l.kernel_j},
                                                 std::sqrt(2.0 / fan_in), mix_seed(seed, stream++)));
    params_.add(conv_name(k, "b"), DenseTensor({l.out_channels}));
    in = l.out_channels;
  }
  params_.add("proj.w", init_gaussian({1, in}, std::sqrt(1.0 / static_cast<double>(in)), mix_seed(seed, stream++)));
  params_.add("proj.b", DenseTensor({1}));
}

Model::Model(ParamStore params) : params_(std::move(params)) {
  config_.layers.clear();
  for (std::size_t k = 0; params_.contains(conv_name(k, "w")); ++k) {
    const ConvShape s = conv_shape(params_, k);
    if (k == 0) config_.in_channels = s.in;
    config_.layers.push_back({s.ki, s.kj, s.out});
  }
  if (config_.layers.empty() || !params_.contains("proj.w")) throw DataError("ctxcnn checkpoint has no layers");
}

MatrixXd tensor_input(const SimilarityTensor& tensor) {
  const std::size_t rows = tensor.rows(), cols = tensor.cols();
  MatrixXd x(static_cast<Eigen::Index>(tensor.depth()), static_cast<Eigen::Index>(rows * cols));
  for (std::size_t m = 0; m < tensor.depth(); ++m) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(i * cols + j)) =
            tensor.channels[m](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return x;
}

Forward forward(const MatrixXd& input, std::size_t rows, std::size_t cols, const Model& model, double dropout,
                Rng* dropout_rng) {
  if (static_cast<std::size_t>(input.rows()) != model.config().in_channels) {
    throw std::invalid_argument("ctxcnn: tensor has " + std::to_string(input.rows()) + " channels, model expects " +
                                std::to_string(model.config().in_channels));
  }
  if (static_cast<std::size_t>(input.cols()) != rows * cols) throw std::invalid_argument("ctxcnn: input extents");
  Forward fw;
  fw.rows = rows;
  fw.cols = cols;
  fw.inputs.push_back(input);
  const double keep = 1.0 - dropout;
  for (std::size_t k = 0; k < model.config().layers.size(); ++k) {
    fw.pre.push_back(conv_forward(fw.inputs.back(), rows, cols, model.params(), k));
    MatrixXd a = fw.pre.back().cwiseMax(0.0);
    if (dropout_rng) {
      MatrixXd mask(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < mask.size(); ++c) {
        mask.data()[c] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      }
      a = a.cwiseProduct(mask);
      fw.masks.push_back(std::move(mask));
    }
    fw.inputs.push_back(std::move(a));
  }
  fw.logits = model.params().mat("proj.w") * fw.inputs.back();
  fw.logits.array() += model.params().value("proj.b").data[0];
  return fw;
}

MatrixXd score_map(const SimilarityTensor& tensor, const Model& model) {
  const std::size_t rows = tensor.rows(), cols = tensor.cols();
  const Forward fw = forward(tensor_input(tensor), rows, cols, model);
  if (!all_finite(fw.logits)) throw NumericError("ctxcnn: non-finite logits");
  MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double z = std::clamp(fw.logits[static_cast<Eigen::Index>(i * cols + j)], -kLogitClip, kLogitClip);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0 / (1.0 + std::exp(-z));
    }
  }
  return out;
}

SimilarityTensor as_tensor(const MatrixXd& scores) {
  SimilarityTensor t;
  t.channels.push_back(scores);
  ChannelMeta meta;
  meta.name = "CNN";
  meta.raw_min = scores.size() ? scores.minCoeff() : 0.0;
  meta.raw_max = scores.size() ? scores.maxCoeff() : 0.0;
  meta.constant = meta.raw_min == meta.raw_max;
  t.meta.push_back(meta);
  return t;
}

std::vector<Cell> expand_positives(const std::vector<Cell>& positives, std::size_t cols) {
  std::vector<Cell> out;
  for (const Cell& c : positives) {
    out.push_back(c);
    if (c.j > 0) out.push_back({c.i, c.j - 1});
    if (c.j + 1 < cols) out.push_back({c.i, c.j + 1});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Cell> negative_sampling(const std::vector<Cell>& positives, std::size_t rows, std::size_t cols,
                                    double ratio, std::uint64_t seed, std::size_t guard_i, std::size_t guard_j) {
  std::vector<char> blocked(rows * cols, 0);
  for (const Cell& p : positives) {
    const std::size_t i0 = p.i > guard_i ? p.i - guard_i : 0, i1 = std::min(rows - 1, p.i + guard_i);
    const std::size_t j0 = p.j > guard_j ? p.j - guard_j : 0, j1 = std::min(cols - 1, p.j + guard_j);
    for (std::size_t i = i0; i <= i1; ++i) {
      for (std::size_t j = j0; j <= j1; ++j) blocked[i * cols + j] = 1;
    }
  }
  std::vector<Cell> eligible;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (!blocked[i * cols + j]) eligible.push_back({i, j});
    }
  }
  const auto want = std::min(eligible.size(),
                             static_cast<std::size_t>(std::llround(ratio * static_cast<double>(positives.size()))));
  Rng rng(seed);
  for (std::size_t k = 0; k < want; ++k) std::swap(eligible[k], eligible[k + rng.index(eligible.size() - k)]);
  eligible.resize(want);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

double cross_entropy(const MatrixXd& input, std::size_t rows, std::size_t cols, const Labels& labels, Model& model,
                     double grad_scale, double dropout, Rng* dropout_rng) {
  const double total_weight = labels.positive_weight * static_cast<double>(labels.positives.size()) +
                              labels.negative_weight * static_cast<double>(labels.negatives.size());
  if (!(total_weight > 0.0)) throw std::invalid_argument("ctxcnn: no labeled cells");
  const Forward fw = forward(input, rows, cols, model, dropout, dropout_rng);
  RowVectorXd dlogits = RowVectorXd::Zero(fw.logits.size());
  double loss = 0.0;
  auto add = [&](const Cell& c, double y, double w) {
    if (c.i >= rows || c.j >= cols) throw std::invalid_argument("ctxcnn: labeled cell outside the tensor");
    const auto k = static_cast<Eigen::Index>(c.i * cols + c.j);
    const double z = fw.logits[k];
    loss += w * (softplus(z) - y * z);
    dlogits[k] += w * (1.0 / (1.0 + std::exp(-z)) - y);
  };
  for (const Cell& c : labels.positives) add(c, 1.0, labels.positive_weight);
  for (const Cell& c : labels.negatives) add(c, 0.0, labels.negative_weight);
  if (grad_scale != 0.0) backward(fw, dlogits * (grad_scale / total_weight), model.params());
  return loss / total_weight;
}

TrainResult train(Model& model, const SimilarityTensor& tensor, const Labels& labels, const TrainConfig& config) {
  if (labels.positives.empty() && labels.negatives.empty()) throw std::invalid_argument("ctxcnn::train: no labels");
  const MatrixXd input = tensor_input(tensor);
  AdamState adam(config.adam);
  Rng rng(config.seed);
  TrainResult result;
  ParamStore last_good = model.params();
  model.params().zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = cross_entropy(input, tensor.rows(), tensor.cols(), labels, model, 1.0, config.dropout,
                                      config.dropout > 0.0 ? &rng : nullptr);
    if (!std::isfinite(loss)) {
      model.params() = last_good;
      throw NumericError("ctxcnn training diverged in epoch " + std::to_string(epoch + 1));
    }
    adam_step(model.params(), adam);
    result.epoch_loss.push_back(loss);
    last_good = model.params();
  }
  return result;
}

SimilarityTensor mask_channels(const SimilarityTensor& tensor, const std::vector<bool>& keep) {
  if (keep.size() != tensor.depth()) throw std::invalid_argument("mask_channels: mask length differs from depth");
  SimilarityTensor out = tensor;
  for (std::size_t m = 0; m < keep.size(); ++m) {
    if (!keep[m]) out.channels[m].setZero();
  }
  return out;
}

}  // namespace bookalign::ctxcnn
