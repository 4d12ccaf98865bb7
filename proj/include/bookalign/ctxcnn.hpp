#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/numerics.hpp"
#include "bookalign/simtensor.hpp"

/// Convolutional combiner over the similarity tensor: stacked same-padded
/// convolutions with ReLU and dropout, a 1x1 projection and a sigmoid.
namespace bookalign::ctxcnn {

inline constexpr const char* kCheckpointKind = "ctxcnn";

struct LayerSpec {
  std::size_t kernel_i = 5;
  std::size_t kernel_j = 5;
  std::size_t out_channels = 16;
};

struct Config {
  std::size_t in_channels = kChannelCount;
  std::vector<LayerSpec> layers = {{5, 5, 16}, {7, 7, 16}, {5, 5, 8}};
};

/// Context half-widths (rows, cols) of the receptive field.
std::pair<std::size_t, std::size_t> receptive_radius(const Config& config);

/// Parameters: conv{k}.w [out, in, kernel_i, kernel_j], conv{k}.b [out],
/// proj.w [1, C_last], proj.b [1].
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

/// Channels x cells, cell index i * cols + j.
Eigen::MatrixXd tensor_input(const SimilarityTensor& tensor);

struct Forward {
  std::size_t rows = 0, cols = 0;
  std::vector<Eigen::MatrixXd> inputs;  // input to each conv layer, then to the projection
  std::vector<Eigen::MatrixXd> pre;     // conv outputs before ReLU
  std::vector<Eigen::MatrixXd> masks;   // scaled dropout masks (train mode only)
  Eigen::RowVectorXd logits;
};

/// `dropout_rng == nullptr` selects inference mode. Train mode zeroes each
/// post-ReLU activation with probability `dropout` and scales survivors by
/// 1 / (1 - dropout). Throws std::invalid_argument on a channel-count mismatch.
Forward forward(const Eigen::MatrixXd& input, std::size_t rows, std::size_t cols, const Model& model,
                double dropout = 0.0, Rng* dropout_rng = nullptr);

/// Inference score map (rows x cols) with logits clipped to [-30, 30] so every
/// value stays strictly inside (0, 1).
Eigen::MatrixXd score_map(const SimilarityTensor& tensor, const Model& model);

/// Wraps a score map in the tensor container (one channel named "CNN").
SimilarityTensor as_tensor(const Eigen::MatrixXd& scores);

struct Cell {
  std::size_t i = 0;
  std::size_t j = 0;
  auto operator<=>(const Cell&) const = default;
};

struct Labels {
  std::vector<Cell> positives;
  std::vector<Cell> negatives;
  double positive_weight = 1.0;
  double negative_weight = 1.0;
};

/// Each positive plus its left and right neighbours in j, deduplicated and sorted.
std::vector<Cell> expand_positives(const std::vector<Cell>& positives, std::size_t cols);

/// round(ratio * |positives|) cells drawn uniformly without replacement from
/// those outside every positive's guard box (|di| <= guard_i and |dj| <= guard_j).
std::vector<Cell> negative_sampling(const std::vector<Cell>& positives, std::size_t rows, std::size_t cols,
                                    double ratio, std::uint64_t seed, std::size_t guard_i = 5,
                                    std::size_t guard_j = 3);

/// Weighted mean binary cross-entropy over labeled cells, computed from logits.
/// With grad_scale != 0 the scaled gradient is accumulated into model.params().
double cross_entropy(const Eigen::MatrixXd& input, std::size_t rows, std::size_t cols, const Labels& labels,
                     Model& model, double grad_scale, double dropout = 0.0, Rng* dropout_rng = nullptr);

struct TrainConfig {
  std::size_t epochs = 100;
  double dropout = 0.3;
  std::uint64_t seed = 1;
  AdamConfig adam{0.003};
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// Full-batch Adam. On a non-finite loss the last good parameters are
/// restored and NumericError is thrown.
TrainResult train(Model& model, const SimilarityTensor& tensor, const Labels& labels, const TrainConfig& config);

/// Zeroes the channels whose mask entry is false (leave-one-out ablations).
SimilarityTensor mask_channels(const SimilarityTensor& tensor, const std::vector<bool>& keep);

}  // namespace bookalign::ctxcnn
