#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"
#include "bookalign/skipthought.hpp"
#include "bookalign/vsembed.hpp"

/// Per-channel similarities between subtitle sentences (rows) and book
/// sentences (columns), stacked into S(i, j, m).
namespace bookalign {

using Tokens = std::vector<std::string>;

enum class ChannelId : std::size_t { VIS, BOOK_EMB, BLEU1, BLEU2, BLEU3, BLEU4, BLEU5, TFIDF, PRIOR };

inline constexpr std::size_t kChannelCount = 9;
inline constexpr std::array<const char*, kChannelCount> kChannelNames = {
    "VIS", "BOOK_EMB", "BLEU1", "BLEU2", "BLEU3", "BLEU4", "BLEU5", "TFIDF", "PRIOR"};

const char* channel_name(ChannelId id);

struct ChannelMeta {
  std::string name;
  double raw_min = 0.0;
  double raw_max = 0.0;
  bool constant = false;
};

/// channels[m](i, j) = S(i, j, m). Values live in [0, 1] and are held at float
/// precision so that a saved tensor reloads bit-identically.
struct SimilarityTensor {
  std::vector<Eigen::MatrixXd> channels;
  std::vector<ChannelMeta> meta;
  std::vector<std::string> warnings;

  std::size_t rows() const { return channels.empty() ? 0 : static_cast<std::size_t>(channels[0].rows()); }
  std::size_t cols() const { return channels.empty() ? 0 : static_cast<std::size_t>(channels[0].cols()); }
  std::size_t depth() const { return channels.size(); }
  const Eigen::MatrixXd& channel(ChannelId id) const { return channels.at(static_cast<std::size_t>(id)); }

  /// Feature vector of cell (i, j) across channels.
  Eigen::VectorXd cell(std::size_t i, std::size_t j) const;
};

class CorpusStats {
 public:
  CorpusStats() = default;
  explicit CorpusStats(const std::vector<Tokens>& documents);

  std::size_t document_count() const { return documents_; }
  std::size_t df(const std::string& token) const;
  /// ln((1 + D) / (1 + df)) + 1; unseen tokens get df = 0.
  double idf(const std::string& token) const;

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
  std::unordered_map<std::string, double> idf_;
};

/// Sentence BLEU of `candidate` against `reference` up to order n (1..5).
/// Order 1 uses the plain clipped precision, orders above 1 add one to both
/// counts. Empty candidate scores 0.
double bleu_n(const Tokens& candidate, const Tokens& reference, int n);

/// Cosine of raw-count tf times idf vectors; 0 when either vector is zero.
double tfidf_similarity(const Tokens& a, const Tokens& b, const CorpusStats& stats);

/// Cosine of skip-thought encodings. Sentences are vocabulary ids; an empty
/// sentence is encoded as a lone <eos>. Throws NumericError on a zero encoding.
Eigen::MatrixXd book_emb_channel(const std::vector<std::vector<TokenId>>& sub_sentences,
                                 const std::vector<std::vector<TokenId>>& book_sentences,
                                 const skipthought::Model& model);

struct VisChannel {
  Eigen::MatrixXd values;
  bool neutral = false;  // no shot carried a feature
};

/// Shot-level cosine scores between each shot's clip embedding and each book
/// sentence's LSTM encoding, mapped onto subtitle sentences by temporal-overlap
/// weights. Shots without a feature are ignored.
VisChannel vis_channel(const std::vector<Shot>& shots, const SubtitleTrack& subtitle,
                       const std::vector<std::vector<TokenId>>& book_sentences, const vsembed::Model& model);

/// Normalized overlap weight of every shot with [start_ms, end_ms); all zero
/// when nothing overlaps.
Eigen::VectorXd overlap_weights(const std::vector<Shot>& shots, std::int64_t start_ms, std::int64_t end_ms);

/// 1 - |i/(N_sub-1) - j/(N_book-1)|, with a degenerate axis counted as 0.
Eigen::MatrixXd prior_channel(std::size_t n_sub, std::size_t n_book);

/// Raw channels in ChannelId order, plus an optional extra channel appended
/// after PRIOR.
struct RawChannels {
  std::array<Eigen::MatrixXd, kChannelCount> channels;
  std::optional<std::pair<std::string, Eigen::MatrixXd>> extra;
  std::vector<std::string> warnings;
};

/// Lexical channels (BLEU1..5, TFIDF) and PRIOR from tokens alone.
void fill_text_channels(RawChannels& raw, const std::vector<Tokens>& sub_tokens,
                        const std::vector<Tokens>& book_tokens);

/// Per-channel min-max normalization to [0, 1]; a constant channel becomes
/// 0.5. Throws NumericError naming the channel and cell of a non-finite entry.
SimilarityTensor assemble(const RawChannels& raw);

/// Layout (little-endian):
///   "SIMTENSOR"  u32 version  u64 rows  u64 cols  u32 depth
///   depth x { str name  f64 raw_min  f64 raw_max  u32 constant }
///   f32 data in (i, j, m) row-major order
void save_tensor(const std::string& path, const SimilarityTensor& tensor);
SimilarityTensor load_tensor(const std::string& path);

}  // namespace bookalign
