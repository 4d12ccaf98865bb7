#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"
#include "bookalign/numerics.hpp"

/// Joint embedding of clip features and sentences: an LSTM sentence encoder
/// with diagonal peepholes, a linear clip map, cosine scoring and a pairwise
/// hinge ranking loss.
namespace bookalign::vsembed {

inline constexpr const char* kCheckpointKind = "vsembed";

struct Config {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t mem_dim = 64;
  std::size_t feature_dim = 0;
};

struct LstmStep {
  Eigen::VectorXd x, m_prev, c_prev;
  Eigen::VectorXd i, f, a, c, o, tanh_c, m;
};

struct LstmTrace {
  std::vector<LstmStep> steps;
  const Eigen::VectorXd& final_state() const { return steps.back().m; }
};

class Model {
 public:
  Model(const Config& config, std::uint64_t seed);
  explicit Model(ParamStore params);

  const Config& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  Config config_;
  ParamStore params_;
};

/// c^0 = m^0 = 0; returns every step. Throws std::invalid_argument on an empty
/// sentence or out-of-range id.
LstmTrace lstm_trace(std::span<const TokenId> sentence, const Model& model);
Eigen::VectorXd lstm_encode(std::span<const TokenId> sentence, const Model& model);

/// Per-coordinate mean of equally sized frame vectors.
Eigen::VectorXd pool_frames(const std::vector<Eigen::VectorXd>& frames);

/// v = W_I q.
Eigen::VectorXd embed_clip(const Eigen::VectorXd& feature, const Model& model);

/// Cosine similarity. Throws std::invalid_argument if either vector is zero.
double score(const Eigen::VectorXd& m, const Eigen::VectorXd& v);

struct RankingLoss {
  double loss = 0.0;
  Eigen::MatrixXd d_sentences;  // same shape as the sentence matrix
  Eigen::MatrixXd d_clips;
  std::size_t active_terms = 0;
};

struct HingeTerms {
  double loss = 0.0;
  Eigen::MatrixXd d_scores;
  std::size_t active_terms = 0;
};

/// The hinge sum over a score matrix S(a, b) = s(m_a, v_b) whose diagonal holds
/// the matched pairs.
HingeTerms hinge_terms(const Eigen::MatrixXd& scores, double margin);

/// Row b of `sentences` is matched with row b of `clips`; every other row of the
/// batch is a contrastive sample. Hinges are strict: a term exactly at its kink
/// contributes neither loss nor gradient.
RankingLoss ranking_loss(const Eigen::MatrixXd& sentences, const Eigen::MatrixXd& clips, double margin);

struct Pair {
  Eigen::VectorXd feature;
  std::vector<TokenId> sentence;
};

/// Ranking loss of a batch through both encoders. With grad_scale != 0 the
/// scaled gradient is accumulated into model.params().
double batch_loss(std::span<const Pair* const> batch, Model& model, double margin, double grad_scale);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double margin = 0.2;
  SgdConfig sgd;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // summed batch losses per epoch
  double median_rank = 0.0;        // on the evaluation pairs, after training
};

/// Minibatch SGD without momentum. The median rank is measured on `eval`
/// (falls back to the training pairs when empty).
TrainResult train(Model& model, const std::vector<Pair>& pairs, const TrainConfig& config,
                  const std::vector<Pair>& eval = {});

/// For each sentence, the 1-based rank of its own clip among all clips in
/// `pairs`; returns the median.
double median_rank(const std::vector<Pair>& pairs, const Model& model);

/// Full-set ranking loss with every pair in one batch.
double dataset_loss(const std::vector<Pair>& pairs, Model& model, double margin);

}  // namespace bookalign::vsembed
