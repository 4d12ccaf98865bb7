#include "bookalign/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"

namespace bookalign::eval {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) return out;
    start = tab + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

const char* tag_name(MatchTag tag) {
  switch (tag) {
    case MatchTag::Visual: return "visual";
    case MatchTag::Dialogue: return "dialogue";
    case MatchTag::Audio: return "audio";
  }
  return "?";
}

std::vector<GroundTruthEntry> parse_ground_truth(std::string_view raw, const std::string& source) {
  std::vector<GroundTruthEntry> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t nl = raw.find('\n', pos);
    const std::string_view line = trim(raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? raw.size() : nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (out.empty() && line.starts_with("time")) continue;

    const std::string where = source + ":" + std::to_string(line_no);
    const auto cols = split_tabs(line);
    if (cols.size() != 5) {
      throw ParseError(where + ": expected 5 tab-separated columns, found " + std::to_string(cols.size()), line_no);
    }
    GroundTruthEntry e;
    double end = 0.0;
    std::size_t line_end = 0;
    if (!parse_number(trim(cols[0]), e.time_s) || e.time_s < 0.0) throw ParseError(where + ": bad time_s", line_no);
    if (!trim(cols[1]).empty()) {
      if (!parse_number(trim(cols[1]), end) || end < e.time_s) throw ParseError(where + ": bad time_end_s", line_no);
      e.time_end_s = end;
    }
    if (!parse_number(trim(cols[2]), e.line_start) || e.line_start < 1) {
      throw ParseError(where + ": bad line_start", line_no);
    }
    if (!trim(cols[3]).empty()) {
      if (!parse_number(trim(cols[3]), line_end) || line_end < e.line_start) {
        throw ParseError(where + ": bad line_end", line_no);
      }
      e.line_end = line_end;
    }
    const std::string_view tag = trim(cols[4]);
    if (tag == "visual") {
      e.tag = MatchTag::Visual;
    } else if (tag == "dialogue") {
      e.tag = MatchTag::Dialogue;
    } else if (tag == "audio") {
      e.tag = MatchTag::Audio;
    } else {
      throw ParseError(where + ": unknown tag '" + std::string(tag) + "'", line_no);
    }
    out.push_back(e);
  }
  if (out.empty()) throw DataError(source + ": ground-truth file has no entries");
  return out;
}

std::vector<GroundTruthEntry> load_ground_truth(const std::string& path) {
  return parse_ground_truth(read_file(path), path);
}

std::string format_ground_truth(const std::vector<GroundTruthEntry>& gt) {
  std::ostringstream out;
  out.precision(17);
  out << "time_s\ttime_end_s\tline_start\tline_end\ttag\n";
  for (const auto& e : gt) {
    out << e.time_s << '\t';
    if (e.time_end_s) out << *e.time_end_s;
    out << '\t' << e.line_start << '\t';
    if (e.line_end) out << *e.line_end;
    out << '\t' << tag_name(e.tag) << '\n';
  }
  return out.str();
}

std::size_t node_at_time(const SubtitleTrack& subtitle, double time_s) {
  const std::size_t n = subtitle.sentence_count();
  if (n == 0) throw DataError("subtitle track has no sentences");
  const double t = time_s * 1000.0;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const auto [s, e] = subtitle.span(k);
    const double d = t < static_cast<double>(s) ? static_cast<double>(s) - t
                     : t > static_cast<double>(e) ? t - static_cast<double>(e)
                                                   : 0.0;
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<crf::Observation> observations(const std::vector<GroundTruthEntry>& gt, const Book& book,
                                           const SubtitleTrack& subtitle) {
  std::vector<crf::Observation> out;
  for (const auto& e : gt) out.push_back({node_at_time(subtitle, e.time_s), book.sentence_at_line(e.line_start)});
  return out;
}

double recall_at(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path, const Book& book,
                 const SubtitleTrack& subtitle, const crf::Tolerance& tol) {
  if (gt.empty()) throw DataError("recall: empty ground truth");
  const auto obs = observations(gt, book, subtitle);
  return 100.0 * static_cast<double>(crf::recalled(path, obs, book.paragraph_of_sentence(), tol)) /
         static_cast<double>(obs.size());
}

double pr_area(std::vector<PrPoint> points) {
  std::stable_sort(points.begin(), points.end(), [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  double area = 0.0, prev = 0.0;
  for (const auto& p : points) {
    area += (p.recall - prev) * p.precision;
    prev = p.recall;
  }
  return area;
}

std::vector<PrPoint> pr_curve(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path,
                              const Book& book, const SubtitleTrack& subtitle, std::size_t max_threshold,
                              std::size_t subtitle_slack) {
  if (gt.empty()) throw DataError("precision/recall: empty ground truth");
  const auto obs = observations(gt, book, subtitle);
  const auto par = book.paragraph_of_sentence();
  const std::size_t K = path.size();

  // For every node near some entry, its smallest paragraph offset to such an entry.
  std::vector<std::optional<std::size_t>> offset(K);
  for (const auto& o : obs) {
    const std::size_t lo = o.node > subtitle_slack ? o.node - subtitle_slack : 0;
    const std::size_t hi = std::min(K, o.node + subtitle_slack + 1);
    for (std::size_t k = lo; k < hi; ++k) {
      const auto d = static_cast<std::size_t>(
          std::abs(static_cast<long>(par.at(path[k])) - static_cast<long>(par.at(o.book_sentence))));
      offset[k] = offset[k] ? std::min(*offset[k], d) : d;
    }
  }
  const auto considered = static_cast<std::size_t>(std::count_if(offset.begin(), offset.end(), [](auto& o) { return o.has_value(); }));

  std::vector<PrPoint> curve;
  for (std::size_t tau = 0; tau <= max_threshold; ++tau) {
    PrPoint p;
    p.threshold = tau;
    const std::size_t hits = crf::recalled(path, obs, par, {tau, subtitle_slack});
    p.recall = static_cast<double>(hits) / static_cast<double>(obs.size());
    std::size_t correct = 0;
    for (const auto& o : offset) correct += o && *o <= tau;
    p.precision = considered ? static_cast<double>(correct) / static_cast<double>(considered) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

double average_precision(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path,
                         const Book& book, const SubtitleTrack& subtitle, std::size_t max_threshold) {
  return 100.0 * pr_area(pr_curve(gt, path, book, subtitle, max_threshold));
}

std::size_t uniform_sentence(const Book& book, double fraction) {
  const auto& s = book.sentences;
  if (s.empty()) throw DataError("book has no sentences");
  const double first = static_cast<double>(s.front().source_line), last = static_cast<double>(s.back().source_line);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double f = last > first ? (static_cast<double>(s[j].source_line) - first) / (last - first) : 0.0;
    const double d = std::abs(f - fraction);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

std::vector<std::size_t> uniform_baseline(const SubtitleTrack& subtitle, const Book& book) {
  const double duration = static_cast<double>(std::max<std::int64_t>(1, subtitle.duration_ms()));
  std::vector<std::size_t> y;
  for (std::size_t k = 0; k < subtitle.sentence_count(); ++k) {
    const auto [s, e] = subtitle.span(k);
    y.push_back(uniform_sentence(book, std::clamp(0.5 * static_cast<double>(s + e) / duration, 0.0, 1.0)));
  }
  return y;
}

EvalReport evaluate(const std::string& method, const std::vector<GroundTruthEntry>& gt,
                    const std::vector<std::size_t>& path, const Book& book, const SubtitleTrack& subtitle) {
  EvalReport r;
  r.method = method;
  r.gt_entries = gt.size();
  r.nodes = path.size();
  r.recall = recall_at(gt, path, book, subtitle);
  r.recalled = static_cast<std::size_t>(std::llround(r.recall * static_cast<double>(gt.size()) / 100.0));
  r.curve = pr_curve(gt, path, book, subtitle);
  r.average_precision = 100.0 * pr_area(r.curve);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["recall_percent"] = recall;
  j["average_precision_percent"] = average_precision;
  j["gt_entries"] = gt_entries;
  j["recalled"] = recalled;
  j["nodes"] = nodes;
  j["tolerance"] = {{"paragraphs", 3}, {"subtitle_sentences", 5}};
  j["precision_denominator"] = "predicted nodes within 5 subtitle sentences of a ground-truth node";
  auto& c = j["curve"] = nlohmann::ordered_json::array();
  for (const auto& p : curve) c.push_back({{"threshold", p.threshold}, {"precision", p.precision}, {"recall", p.recall}});
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const { return format_table({*this}); }

std::string EvalReport::curve_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,precision,recall\n";
  for (const auto& p : curve) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  return out.str();
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.method.size());
  auto pad = [&](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  std::string out = pad("method", width) + "  recall    AP        GT\n";
  for (const auto& r : reports) {
    out += pad(r.method, width) + "  " + pad(percent(r.recall), 8) + "  " + pad(percent(r.average_precision), 8) +
           "  " + std::to_string(r.gt_entries) + "\n";
  }
  return out;
}

std::vector<RankedBook> book_retrieval(const std::vector<std::string>& names,
                                       const std::function<double(std::size_t)>& align) {
  std::vector<RankedBook> out;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const double e = align(k);
    if (!std::isfinite(e) || e < 0.0) throw NumericError("book retrieval: candidate " + names[k] + " has energy " + std::to_string(e));
    out.push_back({k, names[k], e, 0.0});
  }
  if (out.empty()) return out;
  std::stable_sort(out.begin(), out.end(), [](const RankedBook& a, const RankedBook& b) { return a.energy < b.energy; });
  const double best = out.front().energy;
  for (auto& r : out) r.score = r.energy == best ? 100.0 : 100.0 * best / r.energy;
  return out;
}

std::vector<Match> cross_match(const Eigen::MatrixXd& score_map, const Book& book, std::size_t top_k) {
  const auto par = book.paragraph_of_sentence();
  if (static_cast<std::size_t>(score_map.cols()) != par.size()) {
    throw std::invalid_argument("cross_match: score map columns differ from the book's sentence count");
  }
  std::vector<Match> cells;
  for (Eigen::Index i = 0; i < score_map.rows(); ++i) {
    for (Eigen::Index j = 0; j < score_map.cols(); ++j) {
      cells.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), par[static_cast<std::size_t>(j)], score_map(i, j)});
    }
  }
  const std::size_t k = std::min(top_k, cells.size());
  std::partial_sort(cells.begin(), cells.begin() + static_cast<long>(k), cells.end(), [](const Match& a, const Match& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.node != b.node ? a.node < b.node : a.sentence < b.sentence;
  });
  cells.resize(k);
  return cells;
}

}  // namespace bookalign::eval
