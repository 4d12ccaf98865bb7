#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"
#include "bookalign/numerics.hpp"

/// GRU sentence encoder with two conditioned GRU decoders (previous / next
/// sentence) sharing one vocabulary projection.
namespace bookalign::skipthought {

inline constexpr const char* kCheckpointKind = "skipthought";

struct Config {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
};

enum class Decoder { kPrevious, kNext };

/// Cached activations of one GRU step (inputs included) for backprop.
struct GruStep {
  Eigen::VectorXd x;
  Eigen::VectorXd h_prev;
  Eigen::VectorXd z;
  Eigen::VectorXd r;
  Eigen::VectorXd h_bar;
  Eigen::VectorXd h;
};

struct EncoderTrace {
  std::vector<GruStep> steps;
  const Eigen::VectorXd& final_state() const { return steps.back().h; }
};

/// Neighbor sentences are decoded verbatim, so they should already end in <eos>
/// (make_triples does this).
struct SentenceTriple {
  std::vector<TokenId> previous;
  std::vector<TokenId> current;
  std::vector<TokenId> next;
};

class Model {
 public:
  /// Recurrent matrices orthogonal, everything else Gaussian with scale 0.1.
  Model(const Config& config, std::uint64_t seed);
  /// Rebuild from checkpoint parameters; dimensions are read off the shapes.
  explicit Model(ParamStore params);

  const Config& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  Config config_;
  ParamStore params_;
};

/// Runs the encoder from h^0 = 0. Throws std::invalid_argument on an empty
/// sentence or out-of-range id.
EncoderTrace gru_encode(std::span<const TokenId> sentence, const Model& model);
Eigen::VectorXd encode(std::span<const TokenId> sentence, const Model& model);

/// Teacher-forced decoder logits, one row per target position. Step 1 consumes
/// the <eos> embedding as its start symbol.
Eigen::MatrixXd gru_decode_logits(std::span<const TokenId> target, const Eigen::VectorXd& h_i,
                                  const Model& model, Decoder which);

/// Negative log-likelihood of both neighbors given the encoded current sentence.
/// When grad_scale != 0 the gradient times grad_scale is accumulated into
/// model.params().
double triple_loss(const SentenceTriple& triple, Model& model, double grad_scale = 1.0);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  AdamConfig adam;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean triple loss per epoch
};

/// Minibatch Adam on the mean triple loss. On a non-finite loss the model is
/// restored to the last completed epoch and NumericError is thrown.
TrainResult train(Model& model, const std::vector<SentenceTriple>& corpus, const TrainConfig& config);

/// Consecutive (prev, cur, next) windows inside each document; neighbors get <eos> appended.
std::vector<SentenceTriple> make_triples(const std::vector<std::vector<std::vector<TokenId>>>& documents);

/// One sentence per line; blank lines separate documents. Returns tokenized sentences.
std::vector<std::vector<std::vector<std::string>>> parse_training_corpus(std::string_view raw);

/// Raw inner product.
double similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Indices into pool, best first by inner product; ties by smaller index.
std::vector<std::size_t> nearest_neighbors(std::span<const TokenId> query,
                                           const std::vector<std::vector<TokenId>>& pool,
                                           std::size_t k, const Model& model);

}  // namespace bookalign::skipthought
