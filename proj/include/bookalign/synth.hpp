#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"

/// Synthetic book/movie pairs with a planted alignment, used by the
/// end-to-end checks and the `synth` command.
namespace bookalign::synth {

struct Config {
  std::size_t book_sentences = 500;
  std::size_t paragraphs = 80;
  std::size_t subtitle_sentences = 120;
  double dialog_fraction = 0.4;
  /// Nodes in the out-of-order block and how far back in the book it jumps.
  std::size_t crossing_length = 10;
  double crossing_shift = 0.12;
  std::size_t feature_dim = 16;
  std::size_t dvs_pairs = 400;
  /// Every `gt_stride`-th node gets a ground-truth entry.
  std::size_t gt_stride = 2;
  /// The lexicon, topics and word features; shared by every dataset of a world.
  std::uint64_t world_seed = 7;
  std::uint64_t seed = 1;
};

struct DvsPair {
  Eigen::VectorXd feature;
  std::string sentence;
};

struct Dataset {
  std::string book_text;
  std::string srt_text;
  std::string gt_text;
  std::string names_text;
  std::vector<Shot> shots;  // features attached; filler shots have none
  std::vector<DvsPair> dvs;
  /// Book sentence planted for every subtitle sentence.
  std::vector<std::size_t> planted;
  std::vector<bool> dialog;
};

Dataset generate(const Config& config);

/// A book of the same world and size whose sentences are unrelated to any
/// dataset's subtitles.
std::string distractor_book(const Config& config, std::uint64_t seed);

/// Writes book.txt, movie.srt, gt.tsv, names.txt, shots.tsv, dvs.tsv and the
/// feature files under features/ into `dir` (created if needed). `prefix` is
/// prepended to every file name.
void write_dataset(const std::string& dir, const Dataset& data, const std::string& prefix = "");

}  // namespace bookalign::synth
