#include "bookalign/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bookalign/checkpoint.hpp"
#include "bookalign/numerics.hpp"

namespace bookalign::synth {

using Eigen::VectorXd;

namespace {

const std::vector<std::string> kCommon = {"the", "a",    "and",  "of",   "to",  "in",   "he",   "she",
                                          "it",  "was",  "had",  "that", "with", "for", "on",   "at",
                                          "his", "her",  "they", "but",  "not",  "from", "then", "there",
                                          "we",  "said", "all",  "so",   "out",  "into"};
const std::vector<std::string> kNames = {"anna", "boris", "clara", "dmitri", "elena", "felix", "greta", "hugo"};
const std::vector<std::string> kOnsets = {"b", "br", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "st", "t", "v", "z"};
const std::vector<std::string> kVowels = {"a", "e", "i", "o", "u", "ai", "ou"};

constexpr std::size_t kLexiconSize = 360;
constexpr std::size_t kTopics = 12;
constexpr std::size_t kTopicWords = 30;

struct World {
  std::vector<std::string> lexicon;
  std::vector<std::vector<std::size_t>> topics;  // lexicon indices
  std::vector<VectorXd> features;                // per lexicon word
};

World make_world(const Config& c) {
  Rng rng(mix_seed(c.world_seed, 1));
  World w;
  std::set<std::string> seen(kCommon.begin(), kCommon.end());
  seen.insert(kNames.begin(), kNames.end());
  while (w.lexicon.size() < kLexiconSize) {
    std::string word;
    const std::size_t syllables = 2 + rng.index(2);
    for (std::size_t s = 0; s < syllables; ++s) word += kOnsets[rng.index(kOnsets.size())] + kVowels[rng.index(kVowels.size())];
    if (rng.uniform() < 0.4) word += "n";
    if (seen.insert(word).second) w.lexicon.push_back(word);
  }
  std::vector<std::size_t> all(kLexiconSize);
  for (std::size_t k = 0; k < kLexiconSize; ++k) all[k] = k;
  for (std::size_t t = 0; t < kTopics; ++t) {
    rng.shuffle(all);
    w.topics.emplace_back(all.begin(), all.begin() + kTopicWords);
  }
  for (std::size_t k = 0; k < kLexiconSize; ++k) {
    VectorXd f(c.feature_dim);
    for (auto& v : f) v = rng.normal();
    w.features.push_back(f);
  }
  return w;
}

/// A token is either a lexicon index or a literal word.
struct Token {
  std::string word;
  int lexicon = -1;
};
using Words = std::vector<Token>;

Token lexicon_token(const World& w, std::size_t k) { return {w.lexicon[k], static_cast<int>(k)}; }

Words topic_sentence(const World& w, std::size_t topic, Rng& rng, std::size_t min_len, std::size_t max_len) {
  Words s;
  const std::size_t len = min_len + rng.index(max_len - min_len + 1);
  for (std::size_t k = 0; k < len; ++k) {
    const double u = rng.uniform();
    if (u < 0.35) {
      s.push_back({kCommon[rng.index(kCommon.size())]});
    } else if (u < 0.9) {
      s.push_back(lexicon_token(w, w.topics[topic][rng.index(kTopicWords)]));
    } else if (u < 0.95) {
      s.push_back({kNames[rng.index(kNames.size())]});
    } else {
      s.push_back(lexicon_token(w, rng.index(kLexiconSize)));
    }
  }
  return s;
}

bool is_name(const std::string& word) { return std::find(kNames.begin(), kNames.end(), word) != kNames.end(); }

std::string render(const Words& s, bool quoted) {
  std::string out;
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::string word = s[k].word;
    if (k == 0 || is_name(word)) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    if (k) out += ' ';
    out += word;
  }
  out += '.';
  return quoted ? "\"" + out + "\"" : out;
}

VectorXd visual_feature(const World& w, const Words& s, Rng& rng, std::size_t dim) {
  VectorXd f = VectorXd::Zero(static_cast<Eigen::Index>(dim));
  std::size_t n = 0;
  for (const auto& t : s) {
    if (t.lexicon < 0) continue;
    f += w.features[static_cast<std::size_t>(t.lexicon)];
    ++n;
  }
  if (n) f /= static_cast<double>(n);
  for (auto& v : f) v = static_cast<float>(v + 0.3 * rng.normal());
  return f;
}

struct BookDraft {
  std::vector<Words> sentences;
  std::vector<bool> quoted;
  std::vector<std::size_t> paragraph_start;  // first sentence of each paragraph
};

BookDraft draft_book(const World& w, const Config& c, Rng& rng) {
  if (c.paragraphs == 0 || c.book_sentences < 2 * c.paragraphs) {
    throw std::invalid_argument("synth: need at least two sentences per paragraph");
  }
  std::vector<std::size_t> sizes(c.paragraphs, 2);
  for (std::size_t k = 2 * c.paragraphs; k < c.book_sentences; ++k) ++sizes[rng.index(c.paragraphs)];
  BookDraft b;
  std::size_t topic = rng.index(kTopics);
  for (std::size_t p = 0; p < c.paragraphs; ++p) {
    if (rng.uniform() < 0.5) topic = rng.index(kTopics);
    b.paragraph_start.push_back(b.sentences.size());
    for (std::size_t s = 0; s < sizes[p]; ++s) {
      b.sentences.push_back(topic_sentence(w, topic, rng, 6, 14));
      b.quoted.push_back(rng.uniform() < 0.1);
    }
  }
  return b;
}

std::string book_text(const BookDraft& b) {
  std::string out;
  std::size_t next_par = 0;
  for (std::size_t j = 0; j < b.sentences.size(); ++j) {
    if (next_par < b.paragraph_start.size() && b.paragraph_start[next_par] == j) {
      out += "    ";
      ++next_par;
    }
    out += render(b.sentences[j], b.quoted[j]) + "\n";
  }
  return out;
}

std::string srt_time(std::int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld,%03lld", static_cast<long long>(ms / 3600000),
                static_cast<long long>(ms / 60000 % 60), static_cast<long long>(ms / 1000 % 60),
                static_cast<long long>(ms % 1000));
  return buf;
}

std::string seconds(std::int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(ms / 1000), static_cast<long long>(ms % 1000));
  return buf;
}

}  // namespace

Dataset generate(const Config& c) {
  if (c.subtitle_sentences < 2) throw std::invalid_argument("synth: need at least two subtitle sentences");
  if (c.gt_stride == 0) throw std::invalid_argument("synth: gt_stride must be positive");
  const World w = make_world(c);
  Rng rng(mix_seed(c.seed, 2));
  BookDraft book = draft_book(w, c, rng);
  const std::size_t K = c.subtitle_sentences, N = c.book_sentences;

  // Timeline: cue lengths and gaps, with an occasional scene break.
  std::vector<std::int64_t> start(K), end(K);
  std::int64_t t = 2000;
  for (std::size_t k = 0; k < K; ++k) {
    start[k] = t;
    end[k] = t + 1200 + static_cast<std::int64_t>(rng.index(2300));
    const bool scene_break = rng.uniform() < 0.05;
    t = end[k] + (scene_break ? 8000 + static_cast<std::int64_t>(rng.index(12000))
                              : 300 + static_cast<std::int64_t>(rng.index(2200)));
  }

  // Book position per node: piecewise pacing, then one block moved back.
  const std::vector<double> paces = {0.35, 0.7, 1.0, 1.6, 2.8};
  std::vector<double> pos(K);
  double acc = 0.0, pace = 1.0;
  std::size_t left = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (left == 0) {
      pace = paces[rng.index(paces.size())];
      left = 8 + rng.index(13);
    }
    --left;
    if (k) acc += pace * (0.5 + rng.uniform());
    pos[k] = acc;
  }
  Dataset d;
  d.planted.resize(K);
  const double span = static_cast<double>(N - 1);
  for (std::size_t k = 0; k < K; ++k) {
    d.planted[k] = static_cast<std::size_t>(std::lround(0.02 * span + 0.96 * span * pos[k] / pos[K - 1]));
  }
  if (c.crossing_length > 0 && c.crossing_length < K / 2) {
    const std::size_t first = K * 2 / 5 + rng.index(K * 3 / 10);
    const auto shift = static_cast<std::size_t>(std::lround(c.crossing_shift * static_cast<double>(N)));
    for (std::size_t k = first; k < std::min(K, first + c.crossing_length); ++k) {
      d.planted[k] = d.planted[k] > shift ? d.planted[k] - shift : 0;
    }
  }

  // Dialog nodes quote their book sentence with small edits.
  std::vector<std::size_t> order(K);
  for (std::size_t k = 0; k < K; ++k) order[k] = k;
  rng.shuffle(order);
  d.dialog.assign(K, false);
  const auto n_dialog = static_cast<std::size_t>(std::lround(c.dialog_fraction * static_cast<double>(K)));
  for (std::size_t k = 0; k < n_dialog; ++k) d.dialog[order[k]] = true;

  std::vector<std::string> lines(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (d.dialog[k]) {
      book.quoted[d.planted[k]] = true;
      Words said;
      for (const auto& tok : book.sentences[d.planted[k]]) {
        const double u = rng.uniform();
        if (u < 0.12) continue;
        said.push_back(u < 0.24 ? Token{kCommon[rng.index(kCommon.size())]} : tok);
      }
      if (said.empty()) said.push_back(book.sentences[d.planted[k]].front());
      lines[k] = render(said, false);
    } else {
      Words noise;
      const std::size_t len = 3 + rng.index(7);
      for (std::size_t m = 0; m < len; ++m) {
        noise.push_back(rng.uniform() < 0.5 ? Token{kCommon[rng.index(kCommon.size())]}
                                            : lexicon_token(w, rng.index(kLexiconSize)));
      }
      lines[k] = render(noise, false);
    }
  }

  d.book_text = book_text(book);
  std::ostringstream srt, gt;
  gt << "time_s\ttime_end_s\tline_start\tline_end\ttag\n";
  for (std::size_t k = 0; k < K; ++k) {
    srt << k + 1 << '\n' << srt_time(start[k]) << " --> " << srt_time(end[k]) << '\n' << lines[k] << "\n\n";
    if (k % c.gt_stride == 0) {
      gt << seconds((start[k] + end[k]) / 2) << "\t\t" << d.planted[k] + 1 << "\t\t"
         << (d.dialog[k] ? "dialogue" : "visual") << '\n';
    }
  }
  d.srt_text = srt.str();
  d.gt_text = gt.str();
  for (const auto& n : kNames) d.names_text += n + "\n";

  for (std::size_t k = 0; k < K; ++k) {
    Shot s;
    s.id = d.shots.size();
    s.start_ms = start[k];
    s.end_ms = end[k];
    s.feature = visual_feature(w, book.sentences[d.planted[k]], rng, c.feature_dim);
    d.shots.push_back(s);
    if (k + 1 < K && start[k + 1] - end[k] > 1500) d.shots.push_back({d.shots.size(), end[k], start[k + 1], std::nullopt});
  }

  for (std::size_t k = 0; k < c.dvs_pairs; ++k) {
    const Words s = topic_sentence(w, rng.index(kTopics), rng, 5, 10);
    d.dvs.push_back({visual_feature(w, s, rng, c.feature_dim), render(s, false)});
  }
  return d;
}

std::string distractor_book(const Config& config, std::uint64_t seed) {
  const World w = make_world(config);
  Rng rng(mix_seed(seed, 3));
  return book_text(draft_book(w, config, rng));
}

void write_dataset(const std::string& dir, const Dataset& data, const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "features");
  const auto at = [&](const std::string& name) { return (fs::path(dir) / (prefix + name)).string(); };
  write_file_atomic(at("book.txt"), data.book_text);
  write_file_atomic(at("movie.srt"), data.srt_text);
  write_file_atomic(at("gt.tsv"), data.gt_text);
  write_file_atomic(at("names.txt"), data.names_text);

  std::ostringstream shots;
  shots << "shot_id\tstart_ms\tend_ms\tfeature_file\n";
  for (const auto& s : data.shots) {
    shots << s.id << '\t' << s.start_ms << '\t' << s.end_ms << '\t';
    if (s.feature) {
      const std::string rel = "features/" + prefix + "shot" + std::to_string(s.id) + ".bin";
      write_feature_file((fs::path(dir) / rel).string(), *s.feature);
      shots << rel;
    }
    shots << '\n';
  }
  write_file_atomic(at("shots.tsv"), shots.str());

  if (data.dvs.empty()) return;
  std::ostringstream dvs;
  dvs << "feature_file\tsentence\n";
  for (std::size_t k = 0; k < data.dvs.size(); ++k) {
    const std::string rel = "features/" + prefix + "dvs" + std::to_string(k) + ".bin";
    write_feature_file((fs::path(dir) / rel).string(), data.dvs[k].feature);
    dvs << rel << '\t' << data.dvs[k].sentence << '\n';
  }
  write_file_atomic(at("dvs.tsv"), dvs.str());
}

}  // namespace bookalign::synth
