#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bookalign/corpus.hpp"
#include "bookalign/crfalign.hpp"

/// Metrics and baselines for movie/book alignments.
namespace bookalign::eval {

enum class MatchTag { Visual, Dialogue, Audio };

struct GroundTruthEntry {
  double time_s = 0.0;
  std::optional<double> time_end_s;
  std::size_t line_start = 1;
  std::optional<std::size_t> line_end;
  MatchTag tag = MatchTag::Dialogue;
};

/// TSV rows: time_s, time_end_s, line_start, line_end, tag. Empty optional
/// columns are allowed; a first row starting with "time" is a header; '#'
/// starts a comment line. Throws ParseError on a bad row and DataError when no
/// entries remain.
std::vector<GroundTruthEntry> parse_ground_truth(std::string_view raw, const std::string& source);
std::vector<GroundTruthEntry> load_ground_truth(const std::string& path);
std::string format_ground_truth(const std::vector<GroundTruthEntry>& gt);

const char* tag_name(MatchTag tag);

/// Subtitle sentence nearest to time t (distance 0 inside a span; ties to the
/// smaller index).
std::size_t node_at_time(const SubtitleTrack& subtitle, double time_s);

/// Each entry as a CRF observation: its node and the book sentence at line_start.
std::vector<crf::Observation> observations(const std::vector<GroundTruthEntry>& gt, const Book& book,
                                           const SubtitleTrack& subtitle);

/// Percent of entries recalled at the given slack. Throws DataError on empty gt.
double recall_at(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path, const Book& book,
                 const SubtitleTrack& subtitle, const crf::Tolerance& tol = {});

struct PrPoint {
  std::size_t threshold = 0;  // paragraph offset
  double precision = 0.0;     // fractions in [0, 1]
  double recall = 0.0;
};

/// Step-interpolated area: sum over points ordered by recall of
/// (recall_k - recall_{k-1}) * precision_k with recall_{-1} = 0.
double pr_area(std::vector<PrPoint> points);

/// Precision/recall at paragraph offsets 0..max_threshold. Recall counts
/// recalled entries; precision counts, among nodes within the subtitle slack
/// of any entry's node, those whose sentence lies within the offset of such an
/// entry.
std::vector<PrPoint> pr_curve(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path,
                              const Book& book, const SubtitleTrack& subtitle, std::size_t max_threshold = 10,
                              std::size_t subtitle_slack = 5);

/// pr_area of pr_curve, in percent.
double average_precision(const std::vector<GroundTruthEntry>& gt, const std::vector<std::size_t>& path,
                         const Book& book, const SubtitleTrack& subtitle, std::size_t max_threshold = 10);

/// Book sentence whose line fraction is nearest `fraction`; ties to the smaller line.
std::size_t uniform_sentence(const Book& book, double fraction);

/// Maps every subtitle sentence by its time fraction (span midpoint over duration).
std::vector<std::size_t> uniform_baseline(const SubtitleTrack& subtitle, const Book& book);

struct EvalReport {
  std::string method;
  double recall = 0.0;             // percent
  double average_precision = 0.0;  // percent
  std::vector<PrPoint> curve;
  std::size_t gt_entries = 0;
  std::size_t recalled = 0;
  std::size_t nodes = 0;

  std::string to_json() const;
  std::string to_table() const;
  std::string curve_csv() const;
};

EvalReport evaluate(const std::string& method, const std::vector<GroundTruthEntry>& gt,
                    const std::vector<std::size_t>& path, const Book& book, const SubtitleTrack& subtitle);

/// Plain-text table of several reports, one row each.
std::string format_table(const std::vector<EvalReport>& reports);

struct RankedBook {
  std::size_t candidate = 0;
  std::string name;
  double energy = 0.0;
  double score = 0.0;  // 100 * E_min / E; the best candidate scores exactly 100
};

/// `align(k)` returns the optimal CRF energy of the movie against candidate k.
/// Sorted best first; ties keep candidate order.
std::vector<RankedBook> book_retrieval(const std::vector<std::string>& names,
                                       const std::function<double(std::size_t)>& align);

struct Match {
  std::size_t node = 0;
  std::size_t sentence = 0;
  std::size_t paragraph = 0;
  double score = 0.0;
};

/// The top_k cells of a score map, highest first; ties by (node, sentence).
std::vector<Match> cross_match(const Eigen::MatrixXd& score_map, const Book& book, std::size_t top_k);

}  // namespace bookalign::eval
