#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"

/// Chain CRF over movie timeline nodes (one per subtitle sentence) whose
/// states are book sentence indices. Lower energy is better.
namespace bookalign::crf {

struct Weights {
  double unary = 1.0;
  double pairwise_p = 1.0;
  double pairwise_q = 1.0;
  double sigma2 = 0.01;

  /// Throws std::invalid_argument unless every weight is >= 0, one is > 0, and sigma2 > 0.
  void validate() const;
  bool operator==(const Weights&) const = default;
};

struct Node {
  std::size_t subtitle_sentence = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct ChainCrf {
  std::vector<Node> nodes;
  std::size_t n_book = 0;
  Eigen::MatrixXd unary;             // K x n_book, -log of the match probability
  std::vector<double> d_s;           // K - 1 normalized gaps between neighbouring nodes
  std::vector<double> time_fraction; // K node positions on the movie timeline, in [0, 1]

  std::size_t size() const { return nodes.size(); }
};

/// -log(score); throws std::invalid_argument unless 0 < score < 1.
double unary(double score);

/// d_b = |y_a - y_b| / (n_book - 1), or 0 when n_book == 1.
double book_distance(std::size_t y_a, std::size_t y_b, std::size_t n_book);

/// (d_s - d_b)^2 / ((d_s - d_b)^2 + sigma2)
double pairwise_p(double d_s, double d_b, double sigma2);

/// d_b^2 / (d_b^2 + sigma2)
double pairwise_q(double d_b, double sigma2);

/// One node per subtitle sentence. d_s is the gap between neighbouring
/// sentence midpoints over the movie duration; time_fraction is the midpoint
/// over the duration.
ChainCrf build_crf(const Eigen::MatrixXd& score_map, const SubtitleTrack& subtitle);

struct AlignmentPath {
  std::vector<std::size_t> y;
  double energy = 0.0;
  std::vector<double> unary_terms;  // w_u * phi_u(y_i)
  std::vector<double> edge_terms;   // edge (i, i+1): w_p * psi_p + w_q * psi_q
};

/// Evaluates a path. Each chain edge is counted once; the returned energy is
/// the sum of unary_terms followed by edge_terms, in order.
AlignmentPath energy(const std::vector<std::size_t>& y, const ChainCrf& crf, const Weights& w);

/// Inclusive state band of node i: |j - round(t_i (n_book - 1))| <= floor(prune_fraction * n_book).
std::pair<std::size_t, std::size_t> state_band(const ChainCrf& crf, std::size_t i, double prune_fraction);

/// Exact minimum-energy path within the bands by dynamic programming. Ties
/// go to the smaller book index. Throws std::invalid_argument on an empty chain
/// or state space.
AlignmentPath infer(const ChainCrf& crf, const Weights& w, double prune_fraction = 1.0 / 3.0);

/// A ground-truth correspondence: node index and book sentence index.
struct Observation {
  std::size_t node = 0;
  std::size_t book_sentence = 0;
};

struct Tolerance {
  std::size_t paragraphs = 3;
  std::size_t subtitle_sentences = 5;
};

/// An observation is recalled when some node within `subtitle_sentences` of it
/// is assigned a sentence within `paragraphs` paragraphs of the true one.
/// Returns the count of recalled observations.
std::size_t recalled(const std::vector<std::size_t>& y, const std::vector<Observation>& observations,
                     const std::vector<std::size_t>& paragraph_of_sentence, const Tolerance& tol = {});

struct TrainingInstance {
  ChainCrf crf;
  std::vector<Observation> observations;
  std::vector<std::size_t> paragraph_of_sentence;
};

struct Grid {
  std::vector<double> unary = {1.0};
  std::vector<double> pairwise_p = {0.0, 0.5, 1.0, 2.0, 4.0};
  std::vector<double> pairwise_q = {0.0, 0.25, 1.0};
  std::vector<double> sigma2 = {0.0025, 0.01, 0.04};
};

struct FitResult {
  Weights weights;
  double recall = 0.0;  // pooled over every observation
};

/// Grid search maximizing pooled recall on observed nodes. Ties resolve to the
/// smallest (w_p, w_q, w_u, sigma2) lexicographically. Throws DataError when
/// there are no observations.
FitResult fit_weights(const std::vector<TrainingInstance>& instances, const Grid& grid,
                      double prune_fraction = 1.0 / 3.0, const Tolerance& tol = {});

}  // namespace bookalign::crf
