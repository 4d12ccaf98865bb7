#include <algorithm>
#include <filesystem>
#include <fstream>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"
#include "bookalign/pipeline.hpp"
#include "bookalign/synth.hpp"
#include "doctest.h"

using namespace bookalign;
using namespace bookalign::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("bookalign_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config canonical form and hash") {
  PipelineConfig a;
  const std::string text = a.canonical();
  CHECK(text.find("seed=1\n") != std::string::npos);
  CHECK(text.find("cnn-arch=5x5x16,7x7x16,5x5x8\n") != std::string::npos);
  CHECK(text.find("\nout=") == std::string::npos);
  CHECK(text.find("quiet") == std::string::npos);

  std::vector<std::string> keys;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) keys.push_back(l.substr(0, l.find('=')));
  CHECK(std::is_sorted(keys.begin(), keys.end()));

  PipelineConfig b = a;
  b.out_dir = "elsewhere";
  b.quiet = true;
  CHECK(a.hash() == b.hash());
  b.seed = 2;
  CHECK(a.hash() != b.hash());
  PipelineConfig c = a;
  c.cnn_train.dropout = 0.5;
  CHECK(a.hash() != c.hash());
}

TEST_CASE("config hash follows input file content, not its path") {
  TempDir dir("hash");
  write_file_atomic((dir.path / "a.txt").string(), "One.\n");
  write_file_atomic((dir.path / "b.txt").string(), "One.\n");
  PipelineConfig a, b;
  a.movie.book = (dir.path / "a.txt").string();
  b.movie.book = (dir.path / "b.txt").string();
  CHECK(a.hash() == b.hash());
  write_file_atomic((dir.path / "b.txt").string(), "Two.\n");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("architecture strings") {
  const auto c = parse_arch("5x5x16,7x3x8");
  REQUIRE(c.layers.size() == 2);
  CHECK(c.layers[0].kernel_i == 5);
  CHECK(c.layers[0].out_channels == 16);
  CHECK(c.layers[1].kernel_i == 7);
  CHECK(c.layers[1].kernel_j == 3);
  CHECK(c.layers[1].out_channels == 8);
  CHECK_THROWS_AS(parse_arch(""), std::invalid_argument);
  CHECK_THROWS_AS(parse_arch("5x5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_arch("5x5x16x2"), std::invalid_argument);
  CHECK_THROWS_AS(parse_arch("5*5*16"), std::invalid_argument);
}

TEST_CASE("a missing artifact names the command that makes it") {
  TempDir dir("artifact");
  PipelineConfig config;
  config.out_dir = dir.path.string();
  config.quiet = true;
  Runner runner(config);
  try {
    runner.align();
    FAIL("align ran without a tensor");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("tensor.bin") != std::string::npos);
    CHECK(what.find("bookalign build-tensor") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(require_artifact((dir.path / "cnn.ckpt").string(), "train-cnn"),
                       doctest::Contains("run `bookalign train-cnn` first"), DataError);
}

TEST_CASE("unset inputs are reported by key") {
  TempDir dir("inputs");
  PipelineConfig config;
  config.out_dir = dir.path.string();
  config.quiet = true;
  config.use_book_emb = false;
  config.use_vis = false;
  CHECK_THROWS_WITH_AS(Runner(config).build_tensor(), doctest::Contains("'book'"), DataError);
  config.movie.book = (dir.path / "absent.txt").string();
  CHECK_THROWS_WITH_AS(Runner(config).build_tensor(), doctest::Contains("absent.txt"), DataError);
}

TEST_CASE("alignment TSV round trip") {
  std::vector<AlignmentRow> rows(3);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    rows[k].node = k;
    rows[k].start_ms = static_cast<std::int64_t>(1000 * k);
    rows[k].end_ms = rows[k].start_ms + 500;
    rows[k].sentence = 7 * k + 2;
    rows[k].line = rows[k].sentence + 3;
    rows[k].unary = 0.1 * static_cast<double>(k) + 1.0 / 3.0;
    rows[k].edge = k ? 0.25 : 0.0;
  }
  const std::string text = format_alignment(rows);
  CHECK(text.rfind("node_id\tsubtitle_sentence_id\tstart_ms\tend_ms\tbook_sentence_id\tbook_line\tparagraph_id\t"
                   "chapter_id\tunary\tedge_energy\n",
                   0) == 0);
  CHECK(text.find("0.33333333333333331") != std::string::npos);

  TempDir dir("alignment");
  const std::string path = (dir.path / "alignment.tsv").string();
  write_file_atomic(path, text);
  CHECK(read_alignment(path) == std::vector<std::size_t>{2, 9, 16});

  write_file_atomic(path, "node_id\n");
  CHECK_THROWS_AS(read_alignment(path), DataError);
}

TEST_CASE("row argmax prefers the smaller column on ties") {
  Eigen::MatrixXd s(3, 4);
  s << 0.1, 0.5, 0.5, 0.2,  //
      0.7, 0.7, 0.7, 0.7,   //
      0.0, 0.1, 0.2, 0.3;
  CHECK(argmax_path(s) == std::vector<std::size_t>{1, 0, 3});
}

TEST_CASE("ground-truth cells cover the annotated line range") {
  const Book book = parse_book("One. Two.\nThree.\nFour.\n");
  const SubtitleTrack track = parse_srt("1\n00:00:01,000 --> 00:00:02,000\nOne.\n\n2\n00:00:05,000 --> 00:00:06,000\nTwo.\n");
  eval::GroundTruthEntry e;
  e.time_s = 5.5;
  e.line_start = 2;
  e.line_end = 3;
  const auto cells = gt_cells({e, e}, book, track);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].i == 1);
  CHECK(cells[0].j == 2);
  CHECK(cells[1].j == 3);
}

TEST_CASE("pair files resolve features beside the file and mask names") {
  TempDir dir("pairs");
  fs::create_directories(dir.path / "f");
  write_feature_file((dir.path / "f" / "a.bin").string(), Eigen::VectorXd::Constant(3, 0.5));
  write_file_atomic((dir.path / "pairs.tsv").string(), "feature_file\tsentence\nf/a.bin\tAnna opens the door.\n");
  const auto pairs = load_pair_file((dir.path / "pairs.tsv").string(), {"anna"});
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].feature.size() == 3);
  CHECK(pairs[0].tokens.front() == "<someone>");

  write_file_atomic((dir.path / "bad.tsv").string(), "no tab here\n");
  CHECK_THROWS_WITH_AS(load_pair_file((dir.path / "bad.tsv").string(), {}), doctest::Contains("bad.tsv:1"), DataError);
}

TEST_CASE("synthetic pair has the requested shape") {
  const synth::Config config;
  const synth::Dataset d = synth::generate(config);
  const Book book = parse_book(d.book_text);
  const SubtitleTrack track = parse_srt(d.srt_text);
  CHECK(book.sentences.size() == 500);
  CHECK(book.paragraphs.size() == 80);
  CHECK(track.sentence_count() == 120);
  REQUIRE(d.planted.size() == 120);
  REQUIRE(d.dialog.size() == 120);
  CHECK(std::count(d.dialog.begin(), d.dialog.end(), true) == 48);

  std::size_t descents = 0;
  for (std::size_t k = 1; k < d.planted.size(); ++k) descents += d.planted[k] < d.planted[k - 1];
  CHECK(descents >= 1);
  CHECK(descents <= 2);

  const auto gt = eval::parse_ground_truth(d.gt_text, "gt.tsv");
  CHECK(gt.size() == 60);
  for (const auto& e : gt) {
    const std::size_t node = eval::node_at_time(track, e.time_s);
    CHECK(book.sentence_at_line(e.line_start) == d.planted[node]);
  }
  CHECK(d.dvs.size() == config.dvs_pairs);
}

TEST_CASE("synthetic generation is a function of its seeds") {
  synth::Config a;
  const auto x = synth::generate(a), y = synth::generate(a);
  CHECK(x.book_text == y.book_text);
  CHECK(x.srt_text == y.srt_text);
  CHECK(x.planted == y.planted);
  a.seed = 2;
  CHECK(synth::generate(a).book_text != x.book_text);
  CHECK(synth::distractor_book(a, 5) == synth::distractor_book(a, 5));
  CHECK(synth::distractor_book(a, 5) != synth::distractor_book(a, 6));
}
