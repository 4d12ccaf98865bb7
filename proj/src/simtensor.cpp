#include "bookalign/simtensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"

namespace bookalign {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr int kMaxOrder = 5;
constexpr char kTensorMagic[] = "SIMTENSOR";
constexpr std::uint32_t kTensorVersion = 1;

/// Sorted (n-gram, count) pairs; n-grams are joined with a unit separator.
using NgramCounts = std::vector<std::pair<std::string, int>>;

NgramCounts count_ngrams(const Tokens& tokens, int n) {
  std::map<std::string, int> counts;
  if (tokens.size() >= static_cast<std::size_t>(n)) {
    for (std::size_t s = 0; s + n <= tokens.size(); ++s) {
      std::string key = tokens[s];
      for (int k = 1; k < n; ++k) key += '\x1f' + tokens[s + k];
      ++counts[key];
    }
  }
  return {counts.begin(), counts.end()};
}

/// Sum over candidate n-grams of min(count, reference count).
int clipped_matches(const NgramCounts& cand, const NgramCounts& ref) {
  int matches = 0;
  auto r = ref.begin();
  for (const auto& [gram, count] : cand) {
    while (r != ref.end() && r->first < gram) ++r;
    if (r != ref.end() && r->first == gram) matches += std::min(count, r->second);
  }
  return matches;
}

struct SentenceNgrams {
  std::size_t length = 0;
  std::array<NgramCounts, kMaxOrder> orders;
  std::array<int, kMaxOrder> totals{};
};

SentenceNgrams ngrams_of(const Tokens& tokens) {
  SentenceNgrams out;
  out.length = tokens.size();
  for (int n = 1; n <= kMaxOrder; ++n) {
    out.orders[n - 1] = count_ngrams(tokens, n);
    out.totals[n - 1] = std::max(0, static_cast<int>(tokens.size()) - n + 1);
  }
  return out;
}

/// BLEU for every order 1..max_order at once; scores[n - 1] is BLEU-n.
std::array<double, kMaxOrder> bleu_orders(const SentenceNgrams& cand, const SentenceNgrams& ref, int max_order) {
  std::array<double, kMaxOrder> scores{};
  if (cand.length == 0) return scores;
  const double c = static_cast<double>(cand.length), r = static_cast<double>(ref.length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_order; ++n) {
    const double matches = clipped_matches(cand.orders[n - 1], ref.orders[n - 1]);
    const double total = cand.totals[n - 1];
    const double p = n == 1 ? matches / total : (matches + 1.0) / (total + 1.0);
    if (p == 0.0) break;  // only order 1 can hit 0, and it zeroes every order
    log_sum += std::log(p);
    scores[n - 1] = bp * std::exp(log_sum / n);
  }
  return scores;
}

/// idf-weighted count vector normalized to unit length (empty if zero).
std::vector<std::pair<std::string, double>> tfidf_unit(const Tokens& tokens, const CorpusStats& stats) {
  std::map<std::string, double> tf;
  for (const auto& t : tokens) tf[t] += 1.0;
  std::vector<std::pair<std::string, double>> v;
  double norm2 = 0.0;
  for (const auto& [t, count] : tf) {
    const double w = count * stats.idf(t);
    v.emplace_back(t, w);
    norm2 += w * w;
  }
  if (norm2 == 0.0) return {};
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& [_, w] : v) w *= inv;
  return v;
}

double sparse_dot(const std::vector<std::pair<std::string, double>>& a,
                  const std::vector<std::pair<std::string, double>>& b) {
  double dot = 0.0;
  auto j = b.begin();
  for (const auto& [t, w] : a) {
    while (j != b.end() && j->first < t) ++j;
    if (j != b.end() && j->first == t) dot += w * j->second;
  }
  return dot;
}

MatrixXd unit_rows(const MatrixXd& x, const char* what) {
  const VectorXd norms = x.rowwise().norm();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!(norms[r] > 0.0)) {
      throw NumericError(std::string(what) + ": sentence " + std::to_string(r) + " encodes to a zero vector");
    }
  }
  return norms.cwiseInverse().asDiagonal() * x;
}

}  // namespace

const char* channel_name(ChannelId id) { return kChannelNames.at(static_cast<std::size_t>(id)); }

VectorXd SimilarityTensor::cell(std::size_t i, std::size_t j) const {
  VectorXd v(static_cast<Eigen::Index>(channels.size()));
  for (std::size_t m = 0; m < channels.size(); ++m) {
    v[static_cast<Eigen::Index>(m)] = channels[m](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return v;
}

CorpusStats::CorpusStats(const std::vector<Tokens>& documents) : documents_(documents.size()) {
  for (const auto& doc : documents) {
    Tokens unique = doc;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (const auto& t : unique) ++df_[t];
  }
  for (const auto& [t, df] : df_) idf_[t] = idf(t);
}

std::size_t CorpusStats::df(const std::string& token) const {
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

double CorpusStats::idf(const std::string& token) const {
  if (auto it = idf_.find(token); it != idf_.end()) return it->second;
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + static_cast<double>(df(token)))) + 1.0;
}

double bleu_n(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1 || n > kMaxOrder) throw std::invalid_argument("bleu_n: order must be in 1..5");
  return bleu_orders(ngrams_of(candidate), ngrams_of(reference), n)[n - 1];
}

double tfidf_similarity(const Tokens& a, const Tokens& b, const CorpusStats& stats) {
  return sparse_dot(tfidf_unit(a, stats), tfidf_unit(b, stats));
}

MatrixXd book_emb_channel(const std::vector<std::vector<TokenId>>& sub_sentences,
                          const std::vector<std::vector<TokenId>>& book_sentences, const skipthought::Model& model) {
  const auto dh = static_cast<Eigen::Index>(model.config().hidden_dim);
  auto encode_all = [&](const std::vector<std::vector<TokenId>>& sentences) {
    MatrixXd out(static_cast<Eigen::Index>(sentences.size()), dh);
    const std::vector<TokenId> eos = {Vocabulary::kEos};
    for (std::size_t k = 0; k < sentences.size(); ++k) {
      const auto& s = sentences[k].empty() ? eos : sentences[k];
      out.row(static_cast<Eigen::Index>(k)) = skipthought::encode(s, model).transpose();
    }
    return out;
  };
  const MatrixXd u = unit_rows(encode_all(sub_sentences), "BOOK_EMB subtitle");
  const MatrixXd w = unit_rows(encode_all(book_sentences), "BOOK_EMB book");
  return u * w.transpose();
}

VectorXd overlap_weights(const std::vector<Shot>& shots, std::int64_t start_ms, std::int64_t end_ms) {
  VectorXd w = VectorXd::Zero(static_cast<Eigen::Index>(shots.size()));
  for (std::size_t s = 0; s < shots.size(); ++s) {
    const std::int64_t overlap = std::min(end_ms, shots[s].end_ms) - std::max(start_ms, shots[s].start_ms);
    if (overlap > 0) w[static_cast<Eigen::Index>(s)] = static_cast<double>(overlap);
  }
  const double total = w.sum();
  if (total > 0.0) w /= total;
  return w;
}

VisChannel vis_channel(const std::vector<Shot>& shots, const SubtitleTrack& subtitle,
                       const std::vector<std::vector<TokenId>>& book_sentences, const vsembed::Model& model) {
  const auto n_sub = static_cast<Eigen::Index>(subtitle.sentence_count());
  const auto n_book = static_cast<Eigen::Index>(book_sentences.size());
  VisChannel out;

  std::vector<Shot> usable;
  for (const auto& s : shots) {
    if (s.feature) usable.push_back(s);
  }
  if (usable.empty()) {
    out.values = MatrixXd::Constant(n_sub, n_book, 0.5);
    out.neutral = true;
    return out;
  }

  const auto dm = static_cast<Eigen::Index>(model.config().mem_dim);
  MatrixXd book(n_book, dm);
  const std::vector<TokenId> eos = {Vocabulary::kEos};
  for (Eigen::Index j = 0; j < n_book; ++j) {
    const auto& s = book_sentences[static_cast<std::size_t>(j)];
    book.row(j) = vsembed::lstm_encode(s.empty() ? eos : s, model).transpose();
  }
  MatrixXd clips(static_cast<Eigen::Index>(usable.size()), dm);
  for (std::size_t s = 0; s < usable.size(); ++s) {
    clips.row(static_cast<Eigen::Index>(s)) = vsembed::embed_clip(*usable[s].feature, model).transpose();
  }
  // shot_scores(s, j) = s(m_j, v_s)
  const MatrixXd shot_scores = unit_rows(clips, "VIS shot") * unit_rows(book, "VIS book").transpose();

  out.values.resize(n_sub, n_book);
  std::vector<bool> covered(static_cast<std::size_t>(n_sub), false);
  for (Eigen::Index i = 0; i < n_sub; ++i) {
    const auto [start, end] = subtitle.span(static_cast<std::size_t>(i));
    const VectorXd w = overlap_weights(usable, start, end);
    if (w.sum() > 0.0) {
      out.values.row(i) = w.transpose() * shot_scores;
      covered[static_cast<std::size_t>(i)] = true;
    }
  }
  const double floor = shot_scores.minCoeff();
  for (Eigen::Index i = 0; i < n_sub; ++i) {
    if (!covered[static_cast<std::size_t>(i)]) out.values.row(i).setConstant(floor);
  }
  return out;
}

MatrixXd prior_channel(std::size_t n_sub, std::size_t n_book) {
  MatrixXd p(static_cast<Eigen::Index>(n_sub), static_cast<Eigen::Index>(n_book));
  auto frac = [](std::size_t k, std::size_t n) { return n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0; };
  for (std::size_t i = 0; i < n_sub; ++i) {
    for (std::size_t j = 0; j < n_book; ++j) {
      p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          (n_sub > 1 && n_book > 1) ? 1.0 - std::abs(frac(i, n_sub) - frac(j, n_book)) : 1.0;
    }
  }
  return p;
}

void fill_text_channels(RawChannels& raw, const std::vector<Tokens>& sub_tokens,
                        const std::vector<Tokens>& book_tokens) {
  const auto n_sub = static_cast<Eigen::Index>(sub_tokens.size());
  const auto n_book = static_cast<Eigen::Index>(book_tokens.size());
  const auto bleu1 = static_cast<std::size_t>(ChannelId::BLEU1);
  for (int n = 0; n < kMaxOrder; ++n) raw.channels[bleu1 + n].resize(n_sub, n_book);

  std::vector<SentenceNgrams> sub_grams, book_grams;
  for (const auto& t : sub_tokens) sub_grams.push_back(ngrams_of(t));
  for (const auto& t : book_tokens) book_grams.push_back(ngrams_of(t));

  std::vector<Tokens> union_corpus = book_tokens;
  union_corpus.insert(union_corpus.end(), sub_tokens.begin(), sub_tokens.end());
  const CorpusStats stats(union_corpus);
  std::vector<std::vector<std::pair<std::string, double>>> sub_vec, book_vec;
  for (const auto& t : sub_tokens) sub_vec.push_back(tfidf_unit(t, stats));
  for (const auto& t : book_tokens) book_vec.push_back(tfidf_unit(t, stats));

  MatrixXd& tfidf = raw.channels[static_cast<std::size_t>(ChannelId::TFIDF)];
  tfidf.resize(n_sub, n_book);
  for (Eigen::Index i = 0; i < n_sub; ++i) {
    for (Eigen::Index j = 0; j < n_book; ++j) {
      const auto scores = bleu_orders(sub_grams[i], book_grams[j], kMaxOrder);
      for (int n = 0; n < kMaxOrder; ++n) raw.channels[bleu1 + n](i, j) = scores[n];
      tfidf(i, j) = sparse_dot(sub_vec[i], book_vec[j]);
    }
  }
  raw.channels[static_cast<std::size_t>(ChannelId::PRIOR)] =
      prior_channel(sub_tokens.size(), book_tokens.size());
}

SimilarityTensor assemble(const RawChannels& raw) {
  std::vector<std::pair<std::string, const MatrixXd*>> inputs;
  for (std::size_t m = 0; m < kChannelCount; ++m) inputs.emplace_back(kChannelNames[m], &raw.channels[m]);
  if (raw.extra) inputs.emplace_back(raw.extra->first, &raw.extra->second);

  const Eigen::Index rows = inputs[0].second->rows(), cols = inputs[0].second->cols();
  SimilarityTensor t;
  t.warnings = raw.warnings;
  for (const auto& [name, mat] : inputs) {
    if (mat->rows() != rows || mat->cols() != cols) {
      throw std::invalid_argument("assemble: channel " + name + " has extents " + std::to_string(mat->rows()) + "x" +
                                  std::to_string(mat->cols()) + ", expected " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!std::isfinite((*mat)(i, j))) {
          throw NumericError("channel " + name + " has a non-finite value at (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")");
        }
      }
    }
    ChannelMeta meta;
    meta.name = name;
    meta.raw_min = mat->size() ? mat->minCoeff() : 0.0;
    meta.raw_max = mat->size() ? mat->maxCoeff() : 0.0;
    meta.constant = meta.raw_min == meta.raw_max;
    MatrixXd norm = meta.constant ? MatrixXd::Constant(rows, cols, 0.5)
                                  : MatrixXd(((mat->array() - meta.raw_min) / (meta.raw_max - meta.raw_min)).matrix());
    norm = norm.cast<float>().cast<double>();
    t.channels.push_back(std::move(norm));
    t.meta.push_back(std::move(meta));
  }
  return t;
}

void save_tensor(const std::string& path, const SimilarityTensor& tensor) {
  std::string out(kTensorMagic);
  wire::put_u32(out, kTensorVersion);
  wire::put_u64(out, tensor.rows());
  wire::put_u64(out, tensor.cols());
  wire::put_u32(out, static_cast<std::uint32_t>(tensor.depth()));
  for (const auto& m : tensor.meta) {
    wire::put_str(out, m.name);
    wire::put_f64(out, m.raw_min);
    wire::put_f64(out, m.raw_max);
    wire::put_u32(out, m.constant ? 1 : 0);
  }
  const auto rows = static_cast<Eigen::Index>(tensor.rows()), cols = static_cast<Eigen::Index>(tensor.cols());
  out.reserve(out.size() + 4 * tensor.rows() * tensor.cols() * tensor.depth());
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (const auto& c : tensor.channels) wire::put_f32(out, static_cast<float>(c(i, j)));
    }
  }
  write_file_atomic(path, out);
}

SimilarityTensor load_tensor(const std::string& path) {
  const std::string bytes = read_file(path);
  wire::Reader in(bytes, path);
  if (in.raw(sizeof(kTensorMagic) - 1) != kTensorMagic) throw DataError(path + ": not a similarity tensor file");
  if (const auto v = in.u32(); v != kTensorVersion) {
    throw DataError(path + ": unsupported tensor version " + std::to_string(v));
  }
  const auto rows = static_cast<Eigen::Index>(in.u64());
  const auto cols = static_cast<Eigen::Index>(in.u64());
  const std::uint32_t depth = in.u32();
  SimilarityTensor t;
  for (std::uint32_t m = 0; m < depth; ++m) {
    ChannelMeta meta;
    meta.name = in.str();
    meta.raw_min = in.f64();
    meta.raw_max = in.f64();
    meta.constant = in.u32() != 0;
    t.meta.push_back(std::move(meta));
    t.channels.emplace_back(rows, cols);
  }
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (auto& c : t.channels) c(i, j) = in.f32();
    }
  }
  if (!in.at_end()) throw DataError(path + ": trailing bytes after tensor data");
  return t;
}

}  // namespace bookalign
