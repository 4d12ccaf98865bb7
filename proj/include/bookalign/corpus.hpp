#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace bookalign {

using TokenId = std::uint32_t;

/// Half-open index interval [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t k) const { return k >= begin && k < end; }
  bool operator==(const Range&) const = default;
};

struct Sentence {
  std::size_t id = 0;
  std::string text;
  std::vector<std::string> tokens;
  std::size_t source_line = 0;  // 1-based
};

struct Paragraph {
  std::size_t id = 0;
  Range sentences;
};

struct Chapter {
  std::size_t id = 0;
  std::optional<std::size_t> title_line;
  Range paragraphs;
};

struct Book {
  std::vector<Chapter> chapters;
  std::vector<Paragraph> paragraphs;
  std::vector<Sentence> sentences;

  /// Paragraph index containing each sentence.
  std::vector<std::size_t> paragraph_of_sentence() const;
  /// Chapter index containing each paragraph.
  std::vector<std::size_t> chapter_of_paragraph() const;
  /// Largest sentence index whose source_line <= line (0 if line precedes every sentence).
  std::size_t sentence_at_line(std::size_t line) const;
};

struct SubtitleEntry {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::vector<Sentence> sentences;
};

struct SubtitleTrack {
  std::vector<SubtitleEntry> entries;

  /// All sentences in global order (ids are 0..n-1).
  std::vector<const Sentence*> sentences() const;
  std::size_t sentence_count() const;
  /// Entry index of each global sentence.
  std::vector<std::size_t> entry_of_sentence() const;
  /// Time span of a global sentence, inherited from its entry.
  std::pair<std::int64_t, std::int64_t> span(std::size_t sentence) const;
  std::int64_t duration_ms() const;
};

struct Shot {
  std::size_t id = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::optional<Eigen::VectorXd> feature;
};

/// Special ids are fixed: 0 = <unk>, 1 = <eos>, 2 = <someone>.
class Vocabulary {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kSomeone = 2;
  static constexpr std::size_t kSpecialCount = 3;
  static constexpr std::string_view kUnknownToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kSomeoneToken = "<someone>";

  Vocabulary();
  /// Specials are prepended; `words` must not contain them or repeat.
  explicit Vocabulary(const std::vector<std::string>& words);

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the newline-joined token list.
  std::uint64_t hash() const;

  /// One token per line, specials included.
  std::string serialize() const;
  static Vocabulary deserialize(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// ---------------------------------------------------------------------------

/// Throws ParseError (location = byte offset) on invalid UTF-8.
void validate_utf8(std::string_view raw);

/// Paragraphs start at indented lines or after blank lines. A chapter starts at
/// an indented line that follows a page break (form feed, two or more blank
/// lines, or start of file) and does not end in . ! ? " or '.
/// The heading line is kept as its own paragraph.
Book parse_book(std::string_view raw);

/// Sentences that run across cues are merged; the resulting entry spans the
/// union of the merged cues. Throws ParseError (location = cue index) on a
/// malformed timestamp line.
SubtitleTrack parse_srt(std::string_view raw);

/// Split after . ! ? (plus closing quotes) when followed by whitespace and an
/// uppercase letter or opening quote; known abbreviations never end a sentence.
std::vector<std::string> segment_sentences(std::string_view text);

/// Byte spans [begin, end) of the sentences found by segment_sentences.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text);

/// Lowercase, whitespace split, punctuation peeled off both ends one character
/// per token, clitics split with a fixed table ("don't" -> "do" "n't").
std::vector<std::string> tokenize(std::string_view text);

/// Most frequent tokens first, ties lexicographic. max_size counts the specials.
Vocabulary build_vocab(const std::vector<Sentence>& corpus, std::size_t max_size);
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t max_size);

std::vector<std::string> replace_names_with_someone(const std::vector<std::string>& tokens,
                                                    const std::set<std::string>& name_lexicon);

/// One name per line; stored lowercase.
std::set<std::string> parse_name_lexicon(std::string_view raw);

/// u32 little-endian length followed by that many little-endian float32 values.
Eigen::VectorXd read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const Eigen::VectorXd& v);

/// TSV columns shot_id, start_ms, end_ms, feature_file. An optional header row
/// is skipped. Relative feature paths resolve against the TSV's directory; an
/// empty feature_file column leaves the shot without a feature.
std::vector<Shot> load_shots(const std::string& tsv_path);

}  // namespace bookalign
