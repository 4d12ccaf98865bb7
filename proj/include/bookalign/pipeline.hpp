#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"
#include "bookalign/crfalign.hpp"
#include "bookalign/ctxcnn.hpp"
#include "bookalign/evalharness.hpp"
#include "bookalign/simtensor.hpp"
#include "bookalign/skipthought.hpp"
#include "bookalign/vsembed.hpp"

/// Stage orchestration behind the command-line tool. Every stage reads its
/// inputs from the configured paths and the output directory and writes its
/// artifacts back into the output directory.
namespace bookalign::pipeline {

inline constexpr const char* kToolVersion = "1.0.0";

/// One book/movie pair.
struct DataPaths {
  std::string book;
  std::string srt;
  std::string shots;  // optional
  std::string gt;     // required for the training pair and for eval
};

struct PipelineConfig {
  DataPaths movie;  // the pair to align
  DataPaths train;  // labeled pair for CNN training and CRF fitting
  std::string names;      // name lexicon for DVS sentences (optional)
  std::string st_corpus;  // extra skip-thought text (optional)
  std::string dvs_pairs;  // vsembed training pairs
  std::vector<std::string> candidates;  // retrieve-book
  std::string other_book;               // cross-match
  std::string out_dir = "out";

  std::uint64_t seed = 1;
  std::size_t vocab_size = 4000;
  bool use_book_emb = true;
  bool use_vis = true;

  skipthought::Config st;  // vocab_size is filled in at training time
  skipthought::TrainConfig st_train;
  vsembed::Config vs;  // vocab_size and feature_dim are filled in at training time
  vsembed::TrainConfig vs_train;

  std::string cnn_arch = "5x5x16,7x7x16,5x5x8";
  ctxcnn::TrainConfig cnn_train;
  double negative_ratio = 5.0;
  /// Weight positives by #negatives / #positives so both classes carry equal mass.
  bool balance_classes = true;

  bool fit_crf = true;  // false: align with `crf` as given
  crf::Weights crf;
  crf::Grid grid;
  crf::Tolerance fit_tolerance{1, 0};
  double prune = 1.0 / 3.0;

  std::size_t top_k = 20;
  bool quiet = false;

  /// Sorted key=value lines of every setting that can change an artifact.
  /// The output directory and verbosity are excluded.
  std::string canonical() const;
  std::uint64_t hash() const;
};

/// Writes a synthetic movie pair, a labeled training pair and four distractor
/// books into `dir`, and returns a configuration pointing at them (absolute
/// paths, output in <dir>/out). The planted book is the first candidate.
PipelineConfig write_synthetic(const std::string& dir, std::uint64_t seed);

/// "KxLxC,..." kernel_i x kernel_j x out_channels per layer.
ctxcnn::Config parse_arch(const std::string& arch);

struct Artifacts {
  explicit Artifacts(const std::string& out_dir);
  std::string skipthought, vsembed, tensor, train_tensor, cnn, crf, alignment, report, ranking, matches, manifest;
  static std::string vocab_of(const std::string& checkpoint) { return checkpoint + ".vocab"; }
};

/// Throws DataError naming the command that produces `path` when it is missing.
void require_artifact(const std::string& path, const std::string& producer);

/// Feature file and sentence per row, feature paths relative to the TSV.
struct RawPair {
  Eigen::VectorXd feature;
  std::vector<std::string> tokens;
};
std::vector<RawPair> load_pair_file(const std::string& path, const std::set<std::string>& names);

struct Movie {
  Book book;
  SubtitleTrack subtitle;
  std::vector<Shot> shots;
};
Movie load_movie(const DataPaths& paths, const std::string& what);
Book load_book(const std::string& path);

/// Trained text models with their vocabularies, absent when disabled.
struct Models {
  std::optional<skipthought::Model> st;
  Vocabulary st_vocab;
  std::optional<vsembed::Model> vs;
  Vocabulary vs_vocab;
  std::set<std::string> names;
};
Models load_models(const PipelineConfig& config);

SimilarityTensor compute_tensor(const Book& book, const SubtitleTrack& subtitle, const std::vector<Shot>& shots,
                                const Models& models);

/// Positive cells from ground truth (each entry's node against every sentence
/// of its line range), before neighbour expansion.
std::vector<ctxcnn::Cell> gt_cells(const std::vector<eval::GroundTruthEntry>& gt, const Book& book,
                                   const SubtitleTrack& subtitle);

/// Row-wise argmax of a score map; ties to the smaller column.
std::vector<std::size_t> argmax_path(const Eigen::MatrixXd& scores);

struct AlignmentRow {
  std::size_t node = 0;
  std::int64_t start_ms = 0, end_ms = 0;
  std::size_t sentence = 0, line = 0, paragraph = 0, chapter = 0;
  double unary = 0.0;
  double edge = 0.0;  // edge term into this node (0 for the first)
};
std::vector<AlignmentRow> alignment_rows(const crf::AlignmentPath& path, const crf::ChainCrf& crf, const Book& book);
std::string format_alignment(const std::vector<AlignmentRow>& rows);
/// Book sentence per node from an alignment TSV.
std::vector<std::size_t> read_alignment(const std::string& path);

crf::Weights load_weights(const std::string& path);

struct StageRecord {
  std::string name;
  double seconds = 0.0;
};

/// Executes stages and records timings and artifacts for the manifest.
class Runner {
 public:
  explicit Runner(PipelineConfig config);

  void train_skipthought();
  void train_vsembed();
  void build_tensor();
  void train_cnn();
  void fit_crf();
  void align();
  std::vector<eval::EvalReport> evaluate();
  std::vector<eval::RankedBook> retrieve_book();
  std::vector<eval::Match> cross_match();
  /// Every stage from training to alignment.
  void run_all();

  /// Merges this run's stages into <out>/manifest.json and rewrites it atomically.
  void write_manifest() const;

  const PipelineConfig& config() const { return config_; }
  const Artifacts& artifacts() const { return artifacts_; }
  const std::vector<StageRecord>& stages() const { return stages_; }

 private:
  template <typename F>
  auto timed(const std::string& name, F&& body);
  void log(const std::string& message) const;

  PipelineConfig config_;
  Artifacts artifacts_;
  std::vector<StageRecord> stages_;
};

}  // namespace bookalign::pipeline
