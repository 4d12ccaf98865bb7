#include "bookalign/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <map>
#include <sstream>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"
#include "bookalign/numerics.hpp"

namespace bookalign {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u);
}

std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// UTF-8 curly quotes.
constexpr std::string_view kLeftDouble = "\xE2\x80\x9C";
constexpr std::string_view kRightDouble = "\xE2\x80\x9D";
constexpr std::string_view kLeftSingle = "\xE2\x80\x98";
constexpr std::string_view kRightSingle = "\xE2\x80\x99";

bool starts_with_at(std::string_view s, std::size_t pos, std::string_view what) {
  return s.substr(pos, what.size()) == what;
}

/// Length of a closing quote/bracket at pos, or 0.
std::size_t closer_at(std::string_view s, std::size_t pos) {
  if (pos >= s.size()) return 0;
  if (s[pos] == '"' || s[pos] == '\'' || s[pos] == ')' || s[pos] == ']') return 1;
  if (starts_with_at(s, pos, kRightDouble) || starts_with_at(s, pos, kRightSingle)) return 3;
  return 0;
}

bool opens_sentence_at(std::string_view s, std::size_t pos) {
  const char c = s[pos];
  if (c >= 'A' && c <= 'Z') return true;
  if (c == '"' || c == '\'' || c == '(' || c == '[') return true;
  return starts_with_at(s, pos, kLeftDouble) || starts_with_at(s, pos, kLeftSingle);
}

constexpr std::array<std::string_view, 12> kAbbreviations = {
    "mr.", "mrs.", "ms.", "dr.", "st.", "vs.", "etc.", "jr.", "sr.", "prof.", "e.g.", "i.e."};

bool is_abbreviation(std::string_view text, std::size_t dot_pos) {
  std::size_t b = dot_pos;
  while (b > 0 && !is_space(text[b - 1])) --b;
  std::string_view word = text.substr(b, dot_pos + 1 - b);
  while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'')) {
    word.remove_prefix(1);
  }
  const std::string w = lower_ascii(word);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), w) != kAbbreviations.end();
}

}  // namespace

// ---------------------------------------------------------------------------

void validate_utf8(std::string_view raw) {
  std::size_t i = 0;
  const std::size_t n = raw.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(raw[i]);
    std::size_t len = 0;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      len = 4;
    } else {
      throw ParseError("invalid UTF-8 lead byte at offset " + std::to_string(i), i);
    }
    if (i + len > n) throw ParseError("truncated UTF-8 sequence at offset " + std::to_string(i), i);
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(raw[i + k]) & 0xC0) != 0x80) {
        throw ParseError("invalid UTF-8 sequence at offset " + std::to_string(i), i);
      }
    }
    i += len;
  }
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const std::size_t n = text.size();
  std::size_t start = 0;
  auto emit = [&](std::size_t b, std::size_t e) {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    if (b < e) spans.emplace_back(b, e);
  };

  std::size_t p = 0;
  while (p < n) {
    const char c = text[p];
    if (c != '.' && c != '!' && c != '?') {
      ++p;
      continue;
    }
    std::size_t q = p;
    while (q < n && (text[q] == '.' || text[q] == '!' || text[q] == '?')) ++q;
    const bool single_dot = (q - p == 1 && c == '.');
    while (std::size_t len = closer_at(text, q)) q += len;

    if (q >= n) break;
    if (!is_space(text[q])) {
      p = q;
      continue;
    }
    std::size_t r = q;
    while (r < n && is_space(text[r])) ++r;
    if (r >= n) break;
    if (opens_sentence_at(text, r) && !(single_dot && is_abbreviation(text, p))) {
      emit(start, q);
      start = r;
    }
    p = r;
  }
  emit(start, n);
  return spans;
}

std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (auto [b, e] : sentence_spans(text)) out.emplace_back(text.substr(b, e - b));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::array<std::string_view, 6> kClitics = {"'s", "'re", "'ve", "'ll", "'d", "'m"};
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < n && !is_space(text[j])) ++j;
    if (j == i) break;
    std::string word = lower_ascii(text.substr(i, j - i));
    i = j;

    std::size_t b = 0;
    std::size_t e = word.size();
    while (b < e && is_ascii_punct(word[b])) tokens.emplace_back(1, word[b++]);
    std::vector<std::string> trailing;
    while (e > b && is_ascii_punct(word[e - 1])) trailing.emplace_back(1, word[--e]);
    std::string core = word.substr(b, e - b);

    if (!core.empty()) {
      std::string clitic;
      if (core.size() > 3 && core.ends_with("n't")) {
        clitic = "n't";
      } else {
        for (auto c : kClitics) {
          if (core.size() > c.size() && core.ends_with(c)) {
            clitic = std::string(c);
            break;
          }
        }
      }
      if (!clitic.empty()) {
        tokens.push_back(core.substr(0, core.size() - clitic.size()));
        tokens.push_back(clitic);
      } else {
        tokens.push_back(std::move(core));
      }
    }
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
  }
  return tokens;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> Book::paragraph_of_sentence() const {
  std::vector<std::size_t> out(sentences.size(), 0);
  for (const auto& p : paragraphs)
    for (std::size_t s = p.sentences.begin; s < p.sentences.end; ++s) out[s] = p.id;
  return out;
}

std::vector<std::size_t> Book::chapter_of_paragraph() const {
  std::vector<std::size_t> out(paragraphs.size(), 0);
  for (const auto& c : chapters)
    for (std::size_t p = c.paragraphs.begin; p < c.paragraphs.end; ++p) out[p] = c.id;
  return out;
}

std::size_t Book::sentence_at_line(std::size_t line) const {
  auto it = std::upper_bound(sentences.begin(), sentences.end(), line,
                             [](std::size_t l, const Sentence& s) { return l < s.source_line; });
  if (it == sentences.begin()) return 0;
  return static_cast<std::size_t>(std::distance(sentences.begin(), it)) - 1;
}

namespace {

struct ParagraphLine {
  std::size_t line_no;
  std::string text;
};

class BookBuilder {
 public:
  void start_chapter(std::optional<std::size_t> title_line) {
    close_paragraph();
    if (!book_.chapters.empty() && book_.chapters.back().paragraphs.size() == 0) {
      book_.chapters.back().title_line = title_line;
      return;
    }
    Chapter c;
    c.id = book_.chapters.size();
    c.title_line = title_line;
    c.paragraphs = {book_.paragraphs.size(), book_.paragraphs.size()};
    book_.chapters.push_back(c);
  }

  void start_paragraph() { close_paragraph(); }

  void add_line(std::size_t line_no, std::string text) {
    if (book_.chapters.empty()) start_chapter(std::nullopt);
    pending_.push_back({line_no, std::move(text)});
  }

  Book finish() {
    close_paragraph();
    return std::move(book_);
  }

 private:
  void close_paragraph() {
    if (pending_.empty()) return;
    std::string joined;
    std::vector<std::pair<std::size_t, std::size_t>> line_starts;  // (offset, line)
    for (const auto& l : pending_) {
      if (!joined.empty()) joined.push_back(' ');
      line_starts.emplace_back(joined.size(), l.line_no);
      joined += l.text;
    }
    pending_.clear();

    Paragraph para;
    para.id = book_.paragraphs.size();
    para.sentences.begin = book_.sentences.size();
    for (auto [b, e] : sentence_spans(joined)) {
      Sentence s;
      s.text = joined.substr(b, e - b);
      s.tokens = tokenize(s.text);
      if (s.tokens.empty()) continue;
      auto it = std::upper_bound(line_starts.begin(), line_starts.end(), b,
                                 [](std::size_t off, const auto& ls) { return off < ls.first; });
      s.source_line = std::prev(it)->second;
      s.id = book_.sentences.size();
      book_.sentences.push_back(std::move(s));
    }
    para.sentences.end = book_.sentences.size();
    if (para.sentences.size() == 0) return;
    book_.paragraphs.push_back(para);
    book_.chapters.back().paragraphs.end = book_.paragraphs.size();
  }

  Book book_;
  std::vector<ParagraphLine> pending_;
};

bool ends_with_end_symbol(std::string_view s) {
  if (s.empty()) return false;
  const char c = s.back();
  if (c == '.' || c == '!' || c == '?' || c == '"' || c == '\'') return true;
  return s.ends_with(kRightDouble) || s.ends_with(kRightSingle);
}

}  // namespace

Book parse_book(std::string_view raw) {
  validate_utf8(raw);
  BookBuilder builder;

  std::size_t blank_run = 0;
  bool page_break = true;  // start of file counts as a fresh page
  bool after_heading = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string line(raw.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;

    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find('\f') != std::string::npos) {
      page_break = true;
      std::erase(line, '\f');
    }
    const std::string_view content = trim(line);
    if (content.empty()) {
      if (++blank_run >= 2) page_break = true;
      continue;
    }

    const bool indented = line.front() == ' ' || line.front() == '\t';
    const bool chapter = indented && page_break && !ends_with_end_symbol(content);
    if (chapter) {
      builder.start_chapter(line_no);
    } else if (indented || blank_run > 0 || after_heading) {
      builder.start_paragraph();
    }
    builder.add_line(line_no, std::string(content));
    if (chapter) builder.start_paragraph();

    after_heading = chapter;
    blank_run = 0;
    page_break = false;
  }
  return builder.finish();
}

// ---------------------------------------------------------------------------

std::vector<const Sentence*> SubtitleTrack::sentences() const {
  std::vector<const Sentence*> out;
  for (const auto& e : entries)
    for (const auto& s : e.sentences) out.push_back(&s);
  return out;
}

std::size_t SubtitleTrack::sentence_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.sentences.size();
  return n;
}

std::vector<std::size_t> SubtitleTrack::entry_of_sentence() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < entries.size(); ++k) out.insert(out.end(), entries[k].sentences.size(), k);
  return out;
}

std::pair<std::int64_t, std::int64_t> SubtitleTrack::span(std::size_t sentence) const {
  for (const auto& e : entries) {
    if (sentence < e.sentences.size()) return {e.start_ms, e.end_ms};
    sentence -= e.sentences.size();
  }
  throw std::out_of_range("subtitle sentence index out of range");
}

std::int64_t SubtitleTrack::duration_ms() const {
  std::int64_t end = 0;
  for (const auto& e : entries) end = std::max(end, e.end_ms);
  return end;
}

namespace {

struct Cue {
  std::size_t ordinal;  // 1-based position in the file
  std::int64_t start_ms;
  std::int64_t end_ms;
  std::vector<std::pair<std::size_t, std::string>> lines;  // (line_no, text)
};

std::optional<std::int64_t> parse_clock(std::string_view s) {
  // HH:MM:SS,mmm
  s = trim(s);
  if (s.size() < 12 || s[2] != ':' || s[5] != ':' || (s[8] != ',' && s[8] != '.')) return std::nullopt;
  auto field = [&](std::size_t b, std::size_t len) -> std::optional<int> {
    int v = 0;
    auto sub = s.substr(b, len);
    auto [ptr, ec] = std::from_chars(sub.data(), sub.data() + sub.size(), v);
    if (ec != std::errc() || ptr != sub.data() + sub.size()) return std::nullopt;
    return v;
  };
  auto h = field(0, 2), m = field(3, 2), sec = field(6, 2), ms = field(9, s.size() - 9);
  if (!h || !m || !sec || !ms || *m >= 60 || *sec >= 60 || s.size() != 12) return std::nullopt;
  return ((static_cast<std::int64_t>(*h) * 60 + *m) * 60 + *sec) * 1000 + *ms;
}

std::string strip_markup(std::string_view s) {
  std::string out;
  bool in_tag = false;
  for (char c : s) {
    if (c == '<') {
      in_tag = true;
    } else if (c == '>' && in_tag) {
      in_tag = false;
    } else if (!in_tag) {
      out.push_back(c);
    }
  }
  std::string_view t = trim(out);
  if (t.starts_with("- ")) t.remove_prefix(2);
  return std::string(trim(t));
}

}  // namespace

SubtitleTrack parse_srt(std::string_view raw) {
  validate_utf8(raw);
  if (raw.starts_with("\xEF\xBB\xBF")) raw.remove_prefix(3);

  std::vector<std::pair<std::size_t, std::string>> lines;
  {
    std::size_t pos = 0;
    std::size_t no = 0;
    while (pos < raw.size()) {
      std::size_t nl = raw.find('\n', pos);
      if (nl == std::string_view::npos) nl = raw.size();
      std::string l(raw.substr(pos, nl - pos));
      if (!l.empty() && l.back() == '\r') l.pop_back();
      lines.emplace_back(++no, std::move(l));
      pos = nl + 1;
    }
  }

  std::vector<Cue> cues;
  std::size_t k = 0;
  while (k < lines.size()) {
    if (trim(lines[k].second).empty()) {
      ++k;
      continue;
    }
    Cue cue;
    cue.ordinal = cues.size() + 1;
    std::string_view index_line = trim(lines[k].second);
    if (!std::all_of(index_line.begin(), index_line.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw ParseError("cue " + std::to_string(cue.ordinal) + ": expected numeric index, got '" +
                           std::string(index_line) + "'",
                       cue.ordinal);
    }
    ++k;
    const std::string timing = k < lines.size() ? lines[k].second : std::string();
    const auto arrow = timing.find("-->");
    std::optional<std::int64_t> start, end;
    if (arrow != std::string::npos) {
      start = parse_clock(std::string_view(timing).substr(0, arrow));
      end = parse_clock(std::string_view(timing).substr(arrow + 3));
    }
    if (!start || !end || *start >= *end) {
      throw ParseError("cue " + std::to_string(cue.ordinal) + ": malformed timestamp line '" + timing + "'",
                       cue.ordinal);
    }
    cue.start_ms = *start;
    cue.end_ms = *end;
    ++k;
    while (k < lines.size() && !trim(lines[k].second).empty()) {
      std::string text = strip_markup(lines[k].second);
      if (!text.empty()) cue.lines.emplace_back(lines[k].first, std::move(text));
      ++k;
    }
    if (!cue.lines.empty()) cues.push_back(std::move(cue));
  }

  std::stable_sort(cues.begin(), cues.end(),
                   [](const Cue& a, const Cue& b) { return a.start_ms < b.start_ms; });

  // One text stream over all cues, remembering where each cue and line starts.
  std::string stream;
  std::vector<std::size_t> cue_begin;
  std::vector<std::pair<std::size_t, std::size_t>> line_starts;  // (offset, line_no)
  for (const auto& cue : cues) {
    cue_begin.push_back(stream.size() + (stream.empty() ? 0 : 1));
    for (const auto& [no, text] : cue.lines) {
      if (!stream.empty()) stream.push_back(' ');
      line_starts.emplace_back(stream.size(), no);
      stream += text;
    }
  }
  auto cue_at = [&](std::size_t offset) {
    auto it = std::upper_bound(cue_begin.begin(), cue_begin.end(), offset);
    return static_cast<std::size_t>(std::distance(cue_begin.begin(), it)) - 1;
  };
  auto line_at = [&](std::size_t offset) {
    auto it = std::upper_bound(line_starts.begin(), line_starts.end(), offset,
                               [](std::size_t off, const auto& ls) { return off < ls.first; });
    return std::prev(it)->second;
  };

  SubtitleTrack track;
  std::size_t entry_last_cue = 0;
  std::size_t next_id = 0;
  for (auto [b, e] : sentence_spans(stream)) {
    Sentence s;
    s.text = stream.substr(b, e - b);
    s.tokens = tokenize(s.text);
    if (s.tokens.empty()) continue;
    s.source_line = line_at(b);
    const std::size_t first = cue_at(b);
    const std::size_t last = cue_at(e - 1);

    if (track.entries.empty() || first > entry_last_cue) {
      SubtitleEntry entry;
      entry.start_ms = cues[first].start_ms;
      entry.end_ms = cues[first].end_ms;
      track.entries.push_back(std::move(entry));
      entry_last_cue = first;
    }
    auto& entry = track.entries.back();
    for (std::size_t c = entry_last_cue; c <= last; ++c) {
      entry.start_ms = std::min(entry.start_ms, cues[c].start_ms);
      entry.end_ms = std::max(entry.end_ms, cues[c].end_ms);
    }
    entry_last_cue = std::max(entry_last_cue, last);
    s.id = next_id++;
    entry.sentences.push_back(std::move(s));
  }
  return track;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  tokens_ = {std::string(kUnknownToken), std::string(kEosToken), std::string(kSomeoneToken)};
  tokens_.insert(tokens_.end(), words.begin(), words.end());
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    if (!index_.emplace(tokens_[k], static_cast<TokenId>(k)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[k] + "'");
    }
  }
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string line;
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (k++ < kSpecialCount) continue;
    words.push_back(line);
  }
  if (k < kSpecialCount) throw DataError("vocabulary file is missing the special tokens");
  return Vocabulary(words);
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t max_size) {
  if (max_size < Vocabulary::kSpecialCount + 1) {
    throw std::invalid_argument("build_vocab: max_size must leave room for the special tokens");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const auto& t : sentence) {
      if (t == Vocabulary::kUnknownToken || t == Vocabulary::kEosToken || t == Vocabulary::kSomeoneToken) {
        continue;
      }
      ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - Vocabulary::kSpecialCount);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) words.push_back(ranked[k].first);
  return Vocabulary(words);
}

Vocabulary build_vocab(const std::vector<Sentence>& corpus, std::size_t max_size) {
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(corpus.size());
  for (const auto& s : corpus) tokens.push_back(s.tokens);
  return build_vocab(tokens, max_size);
}

std::vector<std::string> replace_names_with_someone(const std::vector<std::string>& tokens,
                                                    const std::set<std::string>& name_lexicon) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (name_lexicon.count(lower_ascii(t)) != 0) {
      out.emplace_back(Vocabulary::kSomeoneToken);
    } else {
      out.push_back(t);
    }
  }
  return out;
}

std::set<std::string> parse_name_lexicon(std::string_view raw) {
  validate_utf8(raw);
  std::set<std::string> names;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    const auto name = trim(raw.substr(pos, nl - pos));
    if (!name.empty()) names.insert(lower_ascii(name));
    pos = nl + 1;
  }
  return names;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd read_feature_file(const std::string& path) {
  const std::string bytes = read_file(path);
  wire::Reader in(bytes, path);
  const std::uint32_t n = in.u32();
  Eigen::VectorXd v(n);
  for (std::uint32_t k = 0; k < n; ++k) v[k] = in.f32();
  if (!in.at_end()) throw DataError(path + ": feature file longer than its declared length");
  return v;
}

void write_feature_file(const std::string& path, const Eigen::VectorXd& v) {
  std::string out;
  wire::put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) wire::put_f32(out, static_cast<float>(v[k]));
  write_file_atomic(path, out);
}

std::vector<Shot> load_shots(const std::string& tsv_path) {
  namespace fs = std::filesystem;
  const std::string text = read_file(tsv_path);
  const fs::path base = fs::path(tsv_path).parent_path();

  std::vector<Shot> shots;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (line.back() == '\t') cols.emplace_back();
    auto number = [&](const std::string& s, std::int64_t& out) {
      auto t = trim(s);
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
      return ec == std::errc() && ptr == t.data() + t.size();
    };
    std::int64_t id = 0, start = 0, end = 0;
    if (cols.size() < 3 || !number(cols[0], id)) {
      if (shots.empty() && line_no == 1) continue;  // header
      throw DataError(tsv_path + ":" + std::to_string(line_no) + ": expected shot_id, start_ms, end_ms, feature_file");
    }
    if (!number(cols[1], start) || !number(cols[2], end) || start >= end) {
      throw DataError(tsv_path + ":" + std::to_string(line_no) + ": bad shot interval");
    }
    Shot shot;
    shot.id = static_cast<std::size_t>(id);
    shot.start_ms = start;
    shot.end_ms = end;
    if (cols.size() > 3 && !trim(cols[3]).empty()) {
      fs::path f(std::string(trim(cols[3])));
      if (f.is_relative()) f = base / f;
      shot.feature = read_feature_file(f.string());
    }
    if (!shots.empty() && shot.start_ms < shots.back().end_ms) {
      throw DataError(tsv_path + ":" + std::to_string(line_no) + ": shots must be sorted and non-overlapping");
    }
    shots.push_back(std::move(shot));
  }
  return shots;
}

}  // namespace bookalign
