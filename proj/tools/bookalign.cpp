#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"
#include "bookalign/pipeline.hpp"
#include "bookalign/selftest.hpp"

namespace {

namespace fs = std::filesystem;
using namespace bookalign;
using pipeline::PipelineConfig;

constexpr int kUsage = 1, kData = 2, kNumeric = 3;

void add_config_options(CLI::App& app, PipelineConfig& c) {
  auto path = [&](const char* name, std::string& v, const char* help) { return app.add_option(name, v, help); };
  path("--book", c.movie.book, "book text to align");
  path("--srt", c.movie.srt, "subtitles of the movie to align");
  path("--shots", c.movie.shots, "shot TSV (shot_id, start_ms, end_ms, feature_file)");
  path("--gt", c.movie.gt, "ground truth for eval");
  path("--train-book", c.train.book, "book of the labeled training pair");
  path("--train-srt", c.train.srt, "subtitles of the training pair");
  path("--train-shots", c.train.shots, "shots of the training pair");
  path("--train-gt", c.train.gt, "ground truth of the training pair");
  path("--names", c.names, "name lexicon, one per line");
  path("--st-corpus", c.st_corpus, "extra skip-thought text, blank line between documents");
  path("--dvs-pairs", c.dvs_pairs, "clip/sentence TSV (feature_file, sentence)");
  path("--other-book", c.other_book, "book for cross-match");
  path("--out", c.out_dir, "output directory")->capture_default_str();
  app.add_option("--candidates", c.candidates, "candidate books for retrieve-book")->delimiter(',');

  app.add_option("--seed", c.seed, "master seed")->capture_default_str();
  app.add_option("--vocab-size", c.vocab_size)->capture_default_str();
  app.add_option("--use-book-emb", c.use_book_emb, "compute the BOOK_EMB channel")->capture_default_str();
  app.add_option("--use-vis", c.use_vis, "compute the VIS channel")->capture_default_str();

  app.add_option("--st-embed", c.st.embed_dim)->capture_default_str();
  app.add_option("--st-hidden", c.st.hidden_dim)->capture_default_str();
  app.add_option("--st-epochs", c.st_train.epochs)->capture_default_str();
  app.add_option("--st-batch", c.st_train.batch_size)->capture_default_str();
  app.add_option("--st-lr", c.st_train.adam.lr)->capture_default_str();

  app.add_option("--vs-embed", c.vs.embed_dim)->capture_default_str();
  app.add_option("--vs-mem", c.vs.mem_dim)->capture_default_str();
  app.add_option("--vs-epochs", c.vs_train.epochs)->capture_default_str();
  app.add_option("--vs-batch", c.vs_train.batch_size)->capture_default_str();
  app.add_option("--vs-lr", c.vs_train.sgd.lr)->capture_default_str();
  app.add_option("--vs-margin", c.vs_train.margin)->capture_default_str();

  app.add_option("--cnn-arch", c.cnn_arch, "KxLxC per layer, comma separated")->capture_default_str();
  app.add_option("--cnn-epochs", c.cnn_train.epochs)->capture_default_str();
  app.add_option("--cnn-dropout", c.cnn_train.dropout)->capture_default_str();
  app.add_option("--cnn-lr", c.cnn_train.adam.lr)->capture_default_str();
  app.add_option("--cnn-negative-ratio", c.negative_ratio, "negatives per positive cell")->capture_default_str();

  app.add_option("--cnn-balance", c.balance_classes, "weight positives to balance the negatives")->capture_default_str();
  app.add_option("--crf-fit", c.fit_crf, "align with fitted weights (false: use --crf-*)")->capture_default_str();
  app.add_option("--crf-unary", c.crf.unary)->capture_default_str();
  app.add_option("--crf-p", c.crf.pairwise_p)->capture_default_str();
  app.add_option("--crf-q", c.crf.pairwise_q)->capture_default_str();
  app.add_option("--crf-sigma2", c.crf.sigma2)->capture_default_str();
  app.add_option("--crf-grid-unary", c.grid.unary)->delimiter(',');
  app.add_option("--crf-grid-p", c.grid.pairwise_p)->delimiter(',');
  app.add_option("--crf-grid-q", c.grid.pairwise_q)->delimiter(',');
  app.add_option("--crf-grid-sigma2", c.grid.sigma2)->delimiter(',');
  app.add_option("--crf-fit-paragraphs", c.fit_tolerance.paragraphs)->capture_default_str();
  app.add_option("--crf-fit-slack", c.fit_tolerance.subtitle_sentences)->capture_default_str();
  app.add_option("--prune", c.prune, "state band half-width as a fraction of the book")->capture_default_str();
  app.add_option("--top-k", c.top_k, "matches reported by cross-match")->capture_default_str();
  app.add_flag("--quiet", c.quiet, "no progress log");
}

std::string synth_config(const PipelineConfig& c) {
  const auto q = [](const std::string& path) { return "\"" + path + "\""; };
  std::ostringstream out;
  out << "# Synthetic book/movie pair with a planted alignment.\n"
      << "book = " << q(c.movie.book) << "\nsrt = " << q(c.movie.srt) << "\nshots = " << q(c.movie.shots)
      << "\ngt = " << q(c.movie.gt) << "\ntrain-book = " << q(c.train.book) << "\ntrain-srt = " << q(c.train.srt)
      << "\ntrain-shots = " << q(c.train.shots) << "\ntrain-gt = " << q(c.train.gt) << "\nnames = " << q(c.names)
      << "\ndvs-pairs = " << q(c.dvs_pairs) << "\nother-book = " << q(c.other_book) << "\ncandidates = ";
  for (std::size_t k = 0; k < c.candidates.size(); ++k) out << (k ? "," : "") << q(c.candidates[k]);
  out << "\nout = " << q(c.out_dir) << "\nseed = " << c.seed << '\n';
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Align a book to a movie's subtitles and shots."};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file; flags override it")->check(CLI::ExistingFile);
  PipelineConfig config;
  add_config_options(app, config);

  const auto sub = [&](const char* name, const char* help) { return app.add_subcommand(name, help); };
  auto* st = sub("train-skipthought", "train the sentence encoder on the book text");
  auto* vs = sub("train-vsembed", "train the clip/sentence embedding on DVS pairs");
  auto* bt = sub("build-tensor", "compute similarity tensors for the movie and training pairs");
  auto* tc = sub("train-cnn", "train the context CNN on the training pair");
  auto* fc = sub("fit-crf", "grid-search CRF weights on the training pair");
  auto* al = sub("align", "align the movie to the book");
  auto* ev = sub("eval", "evaluate the alignment against ground truth");
  auto* rb = sub("retrieve-book", "rank candidate books by alignment energy");
  auto* cm = sub("cross-match", "top-scoring subtitle/sentence cells against another book");
  auto* run = sub("run", "every stage from training to evaluation");
  auto* self = sub("selftest", "built-in oracle checks");
  auto* sy = sub("synth", "write a synthetic dataset and its config.ini");
  std::string synth_dir = "synthetic";
  std::uint64_t synth_seed = 1;
  sy->add_option("--dir", synth_dir, "target directory")->capture_default_str();
  sy->add_option("--synth-seed", synth_seed, "dataset seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (self->parsed()) {
      bool ok = true;
      for (const auto& c : selftest::run(std::cout)) ok &= c.passed;
      return ok ? 0 : kNumeric;
    }
    if (sy->parsed()) {
      const PipelineConfig c = pipeline::write_synthetic(synth_dir, synth_seed);
      write_file_atomic((fs::path(synth_dir) / "config.ini").string(), synth_config(c));
      std::cout << "wrote " << (fs::path(synth_dir) / "config.ini").string() << '\n';
      return 0;
    }

    pipeline::Runner runner(config);
    if (st->parsed()) runner.train_skipthought();
    if (vs->parsed()) runner.train_vsembed();
    if (bt->parsed()) runner.build_tensor();
    if (tc->parsed()) runner.train_cnn();
    if (fc->parsed()) runner.fit_crf();
    if (al->parsed()) runner.align();
    if (ev->parsed()) std::cout << eval::format_table(runner.evaluate());
    if (run->parsed()) {
      runner.run_all();
      if (!config.movie.gt.empty()) std::cout << eval::format_table(runner.evaluate());
    }
    if (rb->parsed()) {
      for (const auto& r : runner.retrieve_book()) std::cout << r.score << '\t' << r.energy << '\t' << r.name << '\n';
    }
    if (cm->parsed()) {
      for (const auto& m : runner.cross_match()) {
        std::cout << m.node << '\t' << m.sentence << '\t' << m.paragraph << '\t' << m.score << '\n';
      }
    }
    runner.write_manifest();
    return 0;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
