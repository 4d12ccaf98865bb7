#include <cmath>

#include "bookalign/error.hpp"
#include "bookalign/evalharness.hpp"
#include "bookalign/numerics.hpp"
#include "doctest.h"

using namespace bookalign;
using namespace bookalign::eval;

namespace {

/// `paragraphs` paragraphs of `per` sentences; sentence j sits on line j + 1.
Book grid_book(std::size_t paragraphs, std::size_t per) {
  Book b;
  for (std::size_t p = 0; p < paragraphs; ++p) {
    b.paragraphs.push_back({p, {p * per, (p + 1) * per}});
    for (std::size_t s = 0; s < per; ++s) {
      Sentence sent;
      sent.id = p * per + s;
      sent.source_line = sent.id + 1;
      b.sentences.push_back(sent);
    }
  }
  b.chapters.push_back({0, std::nullopt, {0, paragraphs}});
  return b;
}

/// Sentence k spans [k s, k s + 0.8 s).
SubtitleTrack even_track(std::size_t n) {
  SubtitleTrack t;
  for (std::size_t k = 0; k < n; ++k) {
    SubtitleEntry e;
    e.start_ms = static_cast<std::int64_t>(k) * 1000;
    e.end_ms = e.start_ms + 800;
    e.sentences.push_back(Sentence{k, "x", {"x"}, 0});
    t.entries.push_back(e);
  }
  return t;
}

GroundTruthEntry gt_at(std::size_t node, std::size_t sentence) {
  GroundTruthEntry e;
  e.time_s = static_cast<double>(node) + 0.4;
  e.line_start = sentence + 1;
  return e;
}

}  // namespace

TEST_CASE("ground-truth files") {
  const auto gt = parse_ground_truth("time_s\ttime_end_s\tline_start\tline_end\ttag\n"
                                     "12.5\t\t40\t\tdialogue\n"
                                     "# a comment\n"
                                     "60\t63.5\t101\t104\tvisual\n",
                                     "gt.tsv");
  REQUIRE(gt.size() == 2);
  CHECK(gt[0].time_s == 12.5);
  CHECK_FALSE(gt[0].time_end_s.has_value());
  CHECK(gt[0].line_start == 40);
  CHECK(gt[1].time_end_s == 63.5);
  CHECK(gt[1].line_end == 104u);
  CHECK(gt[1].tag == MatchTag::Visual);

  const auto again = parse_ground_truth(format_ground_truth(gt), "again");
  CHECK(again.size() == 2);
  CHECK(again[1].line_end == 104u);

  CHECK_THROWS_AS(parse_ground_truth("1\t\t2\t\tsmell\n", "x"), ParseError);
  CHECK_THROWS_AS(parse_ground_truth("1\t\t0\t\taudio\n", "x"), ParseError);
  CHECK_THROWS_AS(parse_ground_truth("-1\t\t3\t\taudio\n", "x"), ParseError);
  try {
    parse_ground_truth("time_s\ttime_end_s\tline_start\tline_end\ttag\n", "empty_gt.tsv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("empty_gt.tsv") != std::string::npos);
  }
}

TEST_CASE("node_at_time") {
  const SubtitleTrack t = even_track(4);
  CHECK(node_at_time(t, 0.0) == 0);
  CHECK(node_at_time(t, 2.5) == 2);
  CHECK(node_at_time(t, 2.9) == 2);   // 100 ms after 2, 100 ms before 3: tie to the smaller
  CHECK(node_at_time(t, 2.95) == 3);
  CHECK(node_at_time(t, 100.0) == 3);
}

TEST_CASE("recall_at") {
  const Book book = grid_book(20, 3);
  const SubtitleTrack track = even_track(30);
  std::vector<std::size_t> path(30);
  for (std::size_t k = 0; k < 30; ++k) path[k] = 2 * k;

  std::vector<GroundTruthEntry> exact;
  for (std::size_t k = 0; k < 30; k += 3) exact.push_back(gt_at(k, path[k]));
  CHECK(recall_at(exact, path, book, track) == 100.0);

  // Flat prediction: paragraph 0 everywhere.
  const std::vector<std::size_t> flat(30, 0);
  CHECK(recall_at({gt_at(10, 12)}, flat, book, track) == 0.0);   // 4 paragraphs away
  CHECK(recall_at({gt_at(10, 11)}, flat, book, track) == 100.0);  // 3 paragraphs away
  CHECK(recall_at({gt_at(10, 11), gt_at(20, 40)}, flat, book, track) == 50.0);
  CHECK_THROWS_AS(recall_at({}, flat, book, track), DataError);

  // Widening either slack never lowers recall.
  Rng rng(1);
  std::vector<std::size_t> noisy(30);
  for (auto& y : noisy) y = rng.index(60);
  double prev_p = 0.0;
  for (std::size_t p = 0; p < 8; ++p) {
    double prev_s = 0.0;
    for (std::size_t s = 0; s < 8; ++s) {
      const double r = recall_at(exact, noisy, book, track, {p, s});
      CHECK(r >= prev_s);
      prev_s = r;
    }
    const double r = recall_at(exact, noisy, book, track, {p, 5});
    CHECK(r >= prev_p);
    prev_p = r;
  }
}

TEST_CASE("precision-recall area") {
  CHECK(pr_area({{0, 1.0, 0.2}, {1, 0.8, 0.5}, {2, 0.5, 0.9}}) == doctest::Approx(0.2 * 1.0 + 0.3 * 0.8 + 0.4 * 0.5));
  CHECK(pr_area({{2, 0.5, 0.9}, {0, 1.0, 0.2}, {1, 0.8, 0.5}}) == doctest::Approx(0.64));
  CHECK(pr_area({}) == 0.0);

  const Book book = grid_book(40, 2);
  const SubtitleTrack track = even_track(20);
  std::vector<std::size_t> path(20);
  for (std::size_t k = 0; k < 20; ++k) path[k] = 4 * k;
  std::vector<GroundTruthEntry> gt;
  for (std::size_t k = 0; k < 20; ++k) gt.push_back(gt_at(k, path[k]));
  CHECK(average_precision(gt, path, book, track) == 100.0);

  // Every other node annotated: unannotated nodes sit 2 paragraphs from their
  // nearest entry, so precision is 1/2 at offsets 0 and 1 and 1 from offset 2 on,
  // while recall is 1 throughout.
  std::vector<GroundTruthEntry> half;
  for (std::size_t k = 0; k < 20; k += 2) half.push_back(gt_at(k, path[k]));
  const auto half_curve = pr_curve(half, path, book, track, 10);
  CHECK(half_curve[0].precision == 0.5);
  CHECK(half_curve[1].precision == 0.5);
  CHECK(half_curve[2].precision == 1.0);
  CHECK(average_precision(half, path, book, track) == 50.0);

  std::vector<GroundTruthEntry> far;
  for (std::size_t k = 0; k < 10; ++k) far.push_back(gt_at(k, 79));  // paragraph 39, predictions <= 19
  CHECK(average_precision(far, std::vector<std::size_t>(20, 0), book, track) == 0.0);

  const auto curve = pr_curve(gt, std::vector<std::size_t>(20, 0), book, track, 10);
  CHECK(curve.size() == 11);
  for (std::size_t k = 1; k < curve.size(); ++k) CHECK(curve[k].recall >= curve[k - 1].recall);
}

TEST_CASE("uniform baseline") {
  const Book book = grid_book(5, 1);  // lines 1..5
  CHECK(uniform_sentence(book, 0.0) == 0);
  CHECK(uniform_sentence(book, 1.0) == 4);
  CHECK(uniform_sentence(book, 0.5) == 2);
  CHECK(uniform_sentence(book, 0.125) == 0);  // halfway between lines 1 and 2
  CHECK(uniform_sentence(book, 0.126) == 1);

  const Book big = grid_book(30, 4);
  const SubtitleTrack track = even_track(25);
  const auto base = uniform_baseline(track, big);
  CHECK(base.size() == 25);
  CHECK(std::is_sorted(base.begin(), base.end()));
  std::vector<GroundTruthEntry> own;
  for (std::size_t k = 0; k < 25; ++k) own.push_back(gt_at(k, base[k]));
  CHECK(recall_at(own, base, big, track) == 100.0);
}

TEST_CASE("book_retrieval") {
  auto ranked = book_retrieval({"only"}, [](std::size_t) { return 7.5; });
  CHECK(ranked[0].score == 100.0);

  const std::vector<double> energies = {30.0, 12.0, 12.0, 48.0};
  ranked = book_retrieval({"a", "b", "c", "d"}, [&](std::size_t k) { return energies[k]; });
  CHECK(ranked[0].name == "b");
  CHECK(ranked[1].name == "c");
  CHECK(ranked[0].score == 100.0);
  CHECK(ranked[1].score == 100.0);
  CHECK(ranked[2].score == doctest::Approx(40.0));
  CHECK(ranked[3].score == doctest::Approx(25.0));
  CHECK(book_retrieval({}, [](std::size_t) { return 0.0; }).empty());
}

TEST_CASE("cross_match") {
  const Book book = grid_book(6, 3);
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(4, 18, 0.1);
  s(2, 13) = 0.9;  // paragraph 4
  s(1, 14) = 0.8;
  s(3, 2) = 0.8;
  CHECK(cross_match(s, book, 0).empty());
  const auto m = cross_match(s, book, 3);
  REQUIRE(m.size() == 3);
  CHECK(m[0].node == 2);
  CHECK(m[0].sentence == 13);
  CHECK(m[0].paragraph == 4);
  CHECK(m[0].score == s.maxCoeff());
  CHECK(m[1].node == 1);  // ties by node
  CHECK(m[2].node == 3);
  CHECK(cross_match(s, book, 1000).size() == 72);
}

TEST_CASE("report formats") {
  const Book book = grid_book(10, 2);
  const SubtitleTrack track = even_track(10);
  std::vector<std::size_t> path(10);
  for (std::size_t k = 0; k < 10; ++k) path[k] = 2 * k;
  const auto r = evaluate("crf", {gt_at(1, 2), gt_at(5, 19)}, path, book, track);
  CHECK(r.recall == 100.0);
  CHECK(r.to_json().find("\"recall_percent\": 100.0") != std::string::npos);
  CHECK(r.to_table().find("crf") != std::string::npos);
  CHECK(r.curve_csv().starts_with("threshold,precision,recall\n0,"));
}
