#include "bookalign/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"
#include "bookalign/synth.hpp"

namespace bookalign::pipeline {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using nlohmann::ordered_json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Short form for progress messages.
std::string brief(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + num(v[k]);
  return out;
}

/// Content hash of an input file, or "-" when the path is unset.
std::string file_digest(const std::string& path) {
  if (path.empty()) return "-";
  if (!fs::exists(path)) return "missing";
  return hex64(fnv1a(read_file(path)));
}

void require_input(const std::string& path, const std::string& key) {
  if (path.empty()) throw DataError("config key '" + key + "' is not set");
  if (!fs::exists(path)) throw DataError(key + ": file not found: " + path);
}

std::vector<std::vector<TokenId>> encode_all(const std::vector<std::vector<std::string>>& tokens, const Vocabulary& v) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(v.encode(t));
  return out;
}

std::vector<std::vector<std::string>> book_tokens(const Book& book) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : book.sentences) out.push_back(s.tokens);
  return out;
}

std::vector<std::vector<std::string>> subtitle_tokens(const SubtitleTrack& subtitle) {
  std::vector<std::vector<std::string>> out;
  for (const Sentence* s : subtitle.sentences()) out.push_back(s->tokens);
  return out;
}

/// Checkpoint plus its vocabulary, with the recorded hash verified.
std::pair<Checkpoint, Vocabulary> load_with_vocab(const std::string& path, const std::string& kind,
                                                  const std::string& producer) {
  require_artifact(path, producer);
  require_artifact(Artifacts::vocab_of(path), producer);
  Checkpoint ckpt = load_checkpoint(path, kind);
  Vocabulary vocab = Vocabulary::deserialize(read_file(Artifacts::vocab_of(path)));
  if (vocab.hash() != ckpt.vocab_hash) {
    throw DataError(path + ": vocabulary hash " + hex64(vocab.hash()) + " does not match the checkpoint's " +
                    hex64(ckpt.vocab_hash) + "; rerun `bookalign " + producer + "`");
  }
  return {std::move(ckpt), std::move(vocab)};
}

void save_with_vocab(const std::string& path, const std::string& kind, const Vocabulary& vocab,
                     const ParamStore& params) {
  write_file_atomic(Artifacts::vocab_of(path), vocab.serialize());
  save_checkpoint(path, kind, vocab.hash(), params);
}

std::string weights_json(const crf::Weights& w, double recall) {
  ordered_json j;
  j["unary"] = w.unary;
  j["pairwise_p"] = w.pairwise_p;
  j["pairwise_q"] = w.pairwise_q;
  j["sigma2"] = w.sigma2;
  j["fit_recall"] = recall;
  return j.dump(2) + "\n";
}

}  // namespace

std::string PipelineConfig::canonical() const {
  std::map<std::string, std::string> kv;
  const auto paths = [&](const std::string& prefix, const DataPaths& p) {
    kv[prefix + "book"] = file_digest(p.book);
    kv[prefix + "srt"] = file_digest(p.srt);
    kv[prefix + "shots"] = file_digest(p.shots);
    kv[prefix + "gt"] = file_digest(p.gt);
  };
  paths("", movie);
  paths("train-", train);
  kv["names"] = file_digest(names);
  kv["st-corpus"] = file_digest(st_corpus);
  kv["dvs-pairs"] = file_digest(dvs_pairs);
  std::string cands;
  for (const auto& c : candidates) cands += file_digest(c) + ",";
  kv["candidates"] = cands;
  kv["other-book"] = file_digest(other_book);

  kv["seed"] = std::to_string(seed);
  kv["vocab-size"] = std::to_string(vocab_size);
  kv["use-book-emb"] = use_book_emb ? "1" : "0";
  kv["use-vis"] = use_vis ? "1" : "0";
  kv["st-embed"] = std::to_string(st.embed_dim);
  kv["st-hidden"] = std::to_string(st.hidden_dim);
  kv["st-epochs"] = std::to_string(st_train.epochs);
  kv["st-batch"] = std::to_string(st_train.batch_size);
  kv["st-lr"] = num(st_train.adam.lr);
  kv["vs-embed"] = std::to_string(vs.embed_dim);
  kv["vs-mem"] = std::to_string(vs.mem_dim);
  kv["vs-epochs"] = std::to_string(vs_train.epochs);
  kv["vs-batch"] = std::to_string(vs_train.batch_size);
  kv["vs-lr"] = num(vs_train.sgd.lr);
  kv["vs-margin"] = num(vs_train.margin);
  kv["cnn-arch"] = cnn_arch;
  kv["cnn-epochs"] = std::to_string(cnn_train.epochs);
  kv["cnn-dropout"] = num(cnn_train.dropout);
  kv["cnn-lr"] = num(cnn_train.adam.lr);
  kv["cnn-negative-ratio"] = num(negative_ratio);
  kv["cnn-balance"] = balance_classes ? "1" : "0";
  kv["crf-fit"] = fit_crf ? "1" : "0";
  kv["crf-unary"] = num(crf.unary);
  kv["crf-p"] = num(crf.pairwise_p);
  kv["crf-q"] = num(crf.pairwise_q);
  kv["crf-sigma2"] = num(crf.sigma2);
  kv["crf-grid-unary"] = list(grid.unary);
  kv["crf-grid-p"] = list(grid.pairwise_p);
  kv["crf-grid-q"] = list(grid.pairwise_q);
  kv["crf-grid-sigma2"] = list(grid.sigma2);
  kv["crf-fit-paragraphs"] = std::to_string(fit_tolerance.paragraphs);
  kv["crf-fit-slack"] = std::to_string(fit_tolerance.subtitle_sentences);
  kv["prune"] = num(prune);
  kv["top-k"] = std::to_string(top_k);

  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t PipelineConfig::hash() const { return fnv1a(canonical()); }

PipelineConfig write_synthetic(const std::string& dir, std::uint64_t seed) {
  synth::Config movie;
  movie.seed = seed;
  synth::write_dataset(dir, synth::generate(movie));
  synth::Config train = movie;
  train.seed = seed + 1000;
  train.gt_stride = 1;
  train.dvs_pairs = 0;
  synth::write_dataset(dir, synth::generate(train), "train_");

  const auto at = [&](const std::string& name) { return fs::absolute(fs::path(dir) / name).string(); };
  PipelineConfig c;
  c.movie = {at("book.txt"), at("movie.srt"), at("shots.tsv"), at("gt.tsv")};
  c.train = {at("train_book.txt"), at("train_movie.srt"), at("train_shots.tsv"), at("train_gt.tsv")};
  c.names = at("names.txt");
  c.dvs_pairs = at("dvs.tsv");
  c.candidates = {c.movie.book};
  for (std::uint64_t k = 1; k <= 4; ++k) {
    const std::string name = "candidate" + std::to_string(k) + ".txt";
    write_file_atomic(at(name), synth::distractor_book(movie, seed + 2000 + k));
    c.candidates.push_back(at(name));
  }
  c.other_book = c.candidates[1];
  c.out_dir = at("out");
  return c;
}

ctxcnn::Config parse_arch(const std::string& arch) {
  ctxcnn::Config c;
  c.layers.clear();
  std::stringstream in(arch);
  std::string layer;
  while (std::getline(in, layer, ',')) {
    ctxcnn::LayerSpec s;
    char x1 = 0, x2 = 0;
    std::istringstream ls(layer);
    if (!(ls >> s.kernel_i >> x1 >> s.kernel_j >> x2 >> s.out_channels) || x1 != 'x' || x2 != 'x' || !ls.eof()) {
      throw std::invalid_argument("cnn-arch: expected KxLxC per layer, got '" + layer + "'");
    }
    c.layers.push_back(s);
  }
  if (c.layers.empty()) throw std::invalid_argument("cnn-arch: no layers");
  return c;
}

Artifacts::Artifacts(const std::string& out_dir) {
  const auto at = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  skipthought = at("skipthought.ckpt");
  vsembed = at("vsembed.ckpt");
  tensor = at("tensor.bin");
  train_tensor = at("train_tensor.bin");
  cnn = at("cnn.ckpt");
  crf = at("crf_weights.json");
  alignment = at("alignment.tsv");
  report = at("report.json");
  ranking = at("ranking.tsv");
  matches = at("matches.tsv");
  manifest = at("manifest.json");
}

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path)) throw DataError("missing artifact " + path + "; run `bookalign " + producer + "` first");
}

std::vector<RawPair> load_pair_file(const std::string& path, const std::set<std::string>& names) {
  const std::string text = read_file(path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<RawPair> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path + ":" + std::to_string(line_no) + ": expected feature_file<TAB>sentence");
    if (line_no == 1 && line.substr(0, tab) == "feature_file") continue;
    fs::path f = line.substr(0, tab);
    if (f.is_relative()) f = base / f;
    RawPair p;
    p.feature = read_feature_file(f.string());
    p.tokens = replace_names_with_someone(tokenize(line.substr(tab + 1)), names);
    if (p.tokens.empty()) throw DataError(path + ":" + std::to_string(line_no) + ": empty sentence");
    out.push_back(std::move(p));
  }
  if (out.empty()) throw DataError(path + ": no training pairs");
  return out;
}

Book load_book(const std::string& path) {
  Book b = parse_book(read_file(path));
  if (b.sentences.empty()) throw DataError(path + ": book has no sentences");
  return b;
}

Movie load_movie(const DataPaths& paths, const std::string& what) {
  const std::string prefix = what == "train" ? "train-" : "";
  require_input(paths.book, prefix + "book");
  require_input(paths.srt, prefix + "srt");
  Movie m;
  m.book = load_book(paths.book);
  m.subtitle = parse_srt(read_file(paths.srt));
  if (m.subtitle.sentence_count() == 0) throw DataError(paths.srt + ": subtitle track has no sentences");
  if (!paths.shots.empty()) {
    require_input(paths.shots, prefix + "shots");
    m.shots = load_shots(paths.shots);
  }
  return m;
}

Models load_models(const PipelineConfig& config) {
  const Artifacts a(config.out_dir);
  Models m;
  if (config.use_book_emb) {
    auto [ckpt, vocab] = load_with_vocab(a.skipthought, skipthought::kCheckpointKind, "train-skipthought");
    m.st.emplace(std::move(ckpt.params));
    m.st_vocab = std::move(vocab);
  }
  if (config.use_vis) {
    auto [ckpt, vocab] = load_with_vocab(a.vsembed, vsembed::kCheckpointKind, "train-vsembed");
    m.vs.emplace(std::move(ckpt.params));
    m.vs_vocab = std::move(vocab);
  }
  if (!config.names.empty()) {
    require_input(config.names, "names");
    m.names = parse_name_lexicon(read_file(config.names));
  }
  return m;
}

SimilarityTensor compute_tensor(const Book& book, const SubtitleTrack& subtitle, const std::vector<Shot>& shots,
                                const Models& models) {
  const auto sub = subtitle_tokens(subtitle);
  const auto bk = book_tokens(book);
  const auto n_sub = static_cast<Eigen::Index>(sub.size());
  const auto n_book = static_cast<Eigen::Index>(bk.size());

  RawChannels raw;
  fill_text_channels(raw, sub, bk);
  auto& emb = raw.channels[static_cast<std::size_t>(ChannelId::BOOK_EMB)];
  if (models.st) {
    emb = book_emb_channel(encode_all(sub, models.st_vocab), encode_all(bk, models.st_vocab), *models.st);
  } else {
    emb = MatrixXd::Constant(n_sub, n_book, 0.5);
    raw.warnings.push_back("BOOK_EMB disabled; channel filled with 0.5");
  }
  auto& vis = raw.channels[static_cast<std::size_t>(ChannelId::VIS)];
  if (models.vs) {
    std::vector<std::vector<TokenId>> ids;
    for (const auto& t : bk) ids.push_back(models.vs_vocab.encode(replace_names_with_someone(t, models.names)));
    VisChannel v = vis_channel(shots, subtitle, ids, *models.vs);
    vis = std::move(v.values);
    if (v.neutral) raw.warnings.push_back("VIS: no shot carries a feature; channel filled with 0.5");
  } else {
    vis = MatrixXd::Constant(n_sub, n_book, 0.5);
    raw.warnings.push_back("VIS disabled; channel filled with 0.5");
  }
  return assemble(raw);
}

std::vector<ctxcnn::Cell> gt_cells(const std::vector<eval::GroundTruthEntry>& gt, const Book& book,
                                   const SubtitleTrack& subtitle) {
  std::vector<ctxcnn::Cell> cells;
  for (const auto& e : gt) {
    const std::size_t node = eval::node_at_time(subtitle, e.time_s);
    const std::size_t first = book.sentence_at_line(e.line_start);
    const std::size_t last = e.line_end ? book.sentence_at_line(*e.line_end) : first;
    for (std::size_t j = first; j <= last; ++j) cells.push_back({node, j});
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

std::vector<std::size_t> argmax_path(const MatrixXd& scores) {
  std::vector<std::size_t> y(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    y[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return y;
}

std::vector<AlignmentRow> alignment_rows(const crf::AlignmentPath& path, const crf::ChainCrf& crf, const Book& book) {
  const auto par = book.paragraph_of_sentence();
  const auto chap = book.chapter_of_paragraph();
  std::vector<AlignmentRow> rows;
  for (std::size_t i = 0; i < path.y.size(); ++i) {
    AlignmentRow r;
    r.node = i;
    r.start_ms = crf.nodes[i].start_ms;
    r.end_ms = crf.nodes[i].end_ms;
    r.sentence = path.y[i];
    r.line = book.sentences.at(r.sentence).source_line;
    r.paragraph = par.at(r.sentence);
    r.chapter = chap.at(r.paragraph);
    r.unary = path.unary_terms.at(i);
    r.edge = i ? path.edge_terms.at(i - 1) : 0.0;
    rows.push_back(r);
  }
  return rows;
}

std::string format_alignment(const std::vector<AlignmentRow>& rows) {
  std::ostringstream out;
  out << "node_id\tsubtitle_sentence_id\tstart_ms\tend_ms\tbook_sentence_id\tbook_line\tparagraph_id\tchapter_id\tunary"
         "\tedge_energy\n";
  for (const auto& r : rows) {
    out << r.node << '\t' << r.node << '\t' << r.start_ms << '\t' << r.end_ms << '\t' << r.sentence << '\t' << r.line
        << '\t' << r.paragraph << '\t' << r.chapter << '\t' << num(r.unary) << '\t' << num(r.edge) << '\n';
  }
  return out.str();
}

std::vector<std::size_t> read_alignment(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::size_t> y;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1 || line.empty()) continue;
    std::istringstream ls(line);
    std::string col;
    for (int c = 0; c < 5 && std::getline(ls, col, '\t'); ++c) {}
    try {
      y.push_back(std::stoul(col));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad book_sentence_id");
    }
  }
  if (y.empty()) throw DataError(path + ": alignment has no rows");
  return y;
}

crf::Weights load_weights(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    crf::Weights w{j.at("unary").get<double>(), j.at("pairwise_p").get<double>(), j.at("pairwise_q").get<double>(),
                   j.at("sigma2").get<double>()};
    w.validate();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Runner::Runner(PipelineConfig config) : config_(std::move(config)), artifacts_(config_.out_dir) {
  fs::create_directories(config_.out_dir);
}

void Runner::log(const std::string& message) const {
  if (!config_.quiet) std::cerr << "[bookalign] " << message << '\n';
}

template <typename F>
auto Runner::timed(const std::string& name, F&& body) {
  log(name + ": start");
  const auto t0 = std::chrono::steady_clock::now();
  const auto record = [&] {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    stages_.push_back({name, s});
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", s);
    log(name + ": done in " + buf + " s");
  };
  if constexpr (std::is_void_v<decltype(body())>) {
    body();
    record();
  } else {
    auto result = body();
    record();
    return result;
  }
}

void Runner::train_skipthought() {
  timed("train-skipthought", [&] {
    std::vector<std::vector<std::vector<std::string>>> docs;
    require_input(config_.movie.book, "book");
    docs.push_back(book_tokens(load_book(config_.movie.book)));
    if (!config_.train.book.empty()) {
      require_input(config_.train.book, "train-book");
      docs.push_back(book_tokens(load_book(config_.train.book)));
    }
    if (!config_.st_corpus.empty()) {
      require_input(config_.st_corpus, "st-corpus");
      for (auto& d : skipthought::parse_training_corpus(read_file(config_.st_corpus))) docs.push_back(std::move(d));
    }
    std::vector<std::vector<std::string>> flat;
    for (const auto& d : docs) flat.insert(flat.end(), d.begin(), d.end());
    const Vocabulary vocab = build_vocab(flat, config_.vocab_size);
    std::vector<std::vector<std::vector<TokenId>>> ids;
    for (const auto& d : docs) ids.push_back(encode_all(d, vocab));
    const auto triples = skipthought::make_triples(ids);
    if (triples.empty()) throw DataError("train-skipthought: corpus has no sentence triples");

    skipthought::Config c = config_.st;
    c.vocab_size = vocab.size();
    skipthought::TrainConfig t = config_.st_train;
    t.seed = mix_seed(config_.seed, 11);
    skipthought::Model model(c, mix_seed(config_.seed, 10));
    log("train-skipthought: " + std::to_string(triples.size()) + " triples, vocabulary " + std::to_string(vocab.size()));
    try {
      const auto r = skipthought::train(model, triples, t);
      if (!r.epoch_loss.empty()) log("train-skipthought: final loss " + brief(r.epoch_loss.back()));
    } catch (const NumericError&) {
      save_with_vocab(artifacts_.skipthought, skipthought::kCheckpointKind, vocab, model.params());
      log("train-skipthought: diverged; last good parameters saved to " + artifacts_.skipthought);
      throw;
    }
    save_with_vocab(artifacts_.skipthought, skipthought::kCheckpointKind, vocab, model.params());
  });
}

void Runner::train_vsembed() {
  timed("train-vsembed", [&] {
    require_input(config_.dvs_pairs, "dvs-pairs");
    std::set<std::string> names;
    if (!config_.names.empty()) {
      require_input(config_.names, "names");
      names = parse_name_lexicon(read_file(config_.names));
    }
    const auto raw = load_pair_file(config_.dvs_pairs, names);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& p : raw) sentences.push_back(p.tokens);
    const Vocabulary vocab = build_vocab(sentences, config_.vocab_size);

    // Every tenth pair is held out for the median-rank report.
    std::vector<vsembed::Pair> train, held;
    for (std::size_t k = 0; k < raw.size(); ++k) {
      vsembed::Pair p{raw[k].feature, vocab.encode(raw[k].tokens)};
      if (p.feature.size() != raw[0].feature.size()) throw DataError(config_.dvs_pairs + ": feature dimensions differ");
      (k % 10 == 9 ? held : train).push_back(std::move(p));
    }
    vsembed::Config c = config_.vs;
    c.vocab_size = vocab.size();
    c.feature_dim = static_cast<std::size_t>(raw[0].feature.size());
    vsembed::TrainConfig t = config_.vs_train;
    t.seed = mix_seed(config_.seed, 21);
    vsembed::Model model(c, mix_seed(config_.seed, 20));
    try {
      const auto r = vsembed::train(model, train, t, held);
      log("train-vsembed: " + std::to_string(train.size()) + " pairs, held-out median rank " + brief(r.median_rank));
    } catch (const NumericError&) {
      save_with_vocab(artifacts_.vsembed, vsembed::kCheckpointKind, vocab, model.params());
      log("train-vsembed: diverged; last good parameters saved to " + artifacts_.vsembed);
      throw;
    }
    save_with_vocab(artifacts_.vsembed, vsembed::kCheckpointKind, vocab, model.params());
  });
}

void Runner::build_tensor() {
  timed("build-tensor", [&] {
    const Models models = load_models(config_);
    const auto build = [&](const DataPaths& paths, const std::string& what, const std::string& out) {
      const Movie m = load_movie(paths, what);
      const SimilarityTensor t = compute_tensor(m.book, m.subtitle, m.shots, models);
      for (const auto& w : t.warnings) log("build-tensor (" + what + "): " + w);
      save_tensor(out, t);
      log("build-tensor (" + what + "): " + std::to_string(t.rows()) + " x " + std::to_string(t.cols()) + " x " +
          std::to_string(t.depth()) + " -> " + out);
    };
    build(config_.movie, "movie", artifacts_.tensor);
    if (!config_.train.book.empty()) build(config_.train, "train", artifacts_.train_tensor);
  });
}

void Runner::train_cnn() {
  timed("train-cnn", [&] {
    require_artifact(artifacts_.train_tensor, "build-tensor");
    require_input(config_.train.gt, "train-gt");
    const Movie m = load_movie(config_.train, "train");
    const SimilarityTensor tensor = load_tensor(artifacts_.train_tensor);
    if (tensor.rows() != m.subtitle.sentence_count() || tensor.cols() != m.book.sentences.size()) {
      throw DataError(artifacts_.train_tensor + " does not match the training pair; rerun `bookalign build-tensor`");
    }
    const auto gt = eval::load_ground_truth(config_.train.gt);
    ctxcnn::Labels labels;
    const auto cells = gt_cells(gt, m.book, m.subtitle);
    labels.positives = ctxcnn::expand_positives(cells, tensor.cols());
    labels.negatives = ctxcnn::negative_sampling(cells, tensor.rows(), tensor.cols(),
                                                 config_.negative_ratio * static_cast<double>(labels.positives.size()) /
                                                     static_cast<double>(cells.size()),
                                                 mix_seed(config_.seed, 31));
    if (labels.negatives.empty()) throw DataError("train-cnn: no cell is far enough from the ground truth to sample negatives");
    if (config_.balance_classes) {
      labels.positive_weight = static_cast<double>(labels.negatives.size()) / static_cast<double>(labels.positives.size());
    }

    ctxcnn::Config c = parse_arch(config_.cnn_arch);
    c.in_channels = tensor.depth();
    ctxcnn::Model model(c, mix_seed(config_.seed, 30));
    ctxcnn::TrainConfig t = config_.cnn_train;
    t.seed = mix_seed(config_.seed, 32);
    log("train-cnn: " + std::to_string(labels.positives.size()) + " positive and " +
        std::to_string(labels.negatives.size()) + " negative cells");
    try {
      const auto r = ctxcnn::train(model, tensor, labels, t);
      if (!r.epoch_loss.empty()) log("train-cnn: loss " + brief(r.epoch_loss.front()) + " -> " + brief(r.epoch_loss.back()));
    } catch (const NumericError&) {
      save_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind, 0, model.params());
      log("train-cnn: diverged; last good parameters saved to " + artifacts_.cnn);
      throw;
    }
    save_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind, 0, model.params());
  });
}

void Runner::fit_crf() {
  timed("fit-crf", [&] {
    require_artifact(artifacts_.train_tensor, "build-tensor");
    require_artifact(artifacts_.cnn, "train-cnn");
    require_input(config_.train.gt, "train-gt");
    const Movie m = load_movie(config_.train, "train");
    const ctxcnn::Model model(load_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind).params);
    const SimilarityTensor tensor = load_tensor(artifacts_.train_tensor);
    crf::TrainingInstance inst;
    inst.crf = crf::build_crf(ctxcnn::score_map(tensor, model), m.subtitle);
    inst.observations = eval::observations(eval::load_ground_truth(config_.train.gt), m.book, m.subtitle);
    inst.paragraph_of_sentence = m.book.paragraph_of_sentence();
    const auto fit = crf::fit_weights({inst}, config_.grid, config_.prune, config_.fit_tolerance);
    log("fit-crf: unary " + brief(fit.weights.unary) + ", p " + brief(fit.weights.pairwise_p) + ", q " +
        brief(fit.weights.pairwise_q) + ", sigma2 " + brief(fit.weights.sigma2) + " (training recall " +
        brief(fit.recall) + ")");
    write_file_atomic(artifacts_.crf, weights_json(fit.weights, fit.recall));
  });
}

void Runner::align() {
  timed("align", [&] {
    require_artifact(artifacts_.tensor, "build-tensor");
    require_artifact(artifacts_.cnn, "train-cnn");
    crf::Weights w = config_.crf;
    if (config_.fit_crf) {
      require_artifact(artifacts_.crf, "fit-crf");
      w = load_weights(artifacts_.crf);
    }
    const Movie m = load_movie(config_.movie, "movie");
    const SimilarityTensor tensor = load_tensor(artifacts_.tensor);
    if (tensor.rows() != m.subtitle.sentence_count() || tensor.cols() != m.book.sentences.size()) {
      throw DataError(artifacts_.tensor + " does not match the configured movie; rerun `bookalign build-tensor`");
    }
    const ctxcnn::Model model(load_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind).params);
    const crf::ChainCrf chain = crf::build_crf(ctxcnn::score_map(tensor, model), m.subtitle);
    const crf::AlignmentPath path = crf::infer(chain, w, config_.prune);
    write_file_atomic(artifacts_.alignment, format_alignment(alignment_rows(path, chain, m.book)));
    log("align: energy " + brief(path.energy) + " -> " + artifacts_.alignment);
  });
}

std::vector<eval::EvalReport> Runner::evaluate() {
  return timed("eval", [&] {
    require_input(config_.movie.gt, "gt");
    const auto gt = eval::load_ground_truth(config_.movie.gt);
    require_artifact(artifacts_.alignment, "align");
    require_artifact(artifacts_.tensor, "build-tensor");
    require_artifact(artifacts_.cnn, "train-cnn");
    const Movie m = load_movie(config_.movie, "movie");
    const auto crf_path = read_alignment(artifacts_.alignment);
    if (crf_path.size() != m.subtitle.sentence_count()) {
      throw DataError(artifacts_.alignment + " does not match the configured movie; rerun `bookalign align`");
    }
    const ctxcnn::Model model(load_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind).params);
    const auto cnn_path = argmax_path(ctxcnn::score_map(load_tensor(artifacts_.tensor), model));

    std::vector<eval::EvalReport> reports;
    reports.push_back(eval::evaluate("uniform", gt, eval::uniform_baseline(m.subtitle, m.book), m.book, m.subtitle));
    reports.push_back(eval::evaluate("cnn", gt, cnn_path, m.book, m.subtitle));
    reports.push_back(eval::evaluate("crf", gt, crf_path, m.book, m.subtitle));

    ordered_json j = ordered_json::array();
    for (const auto& r : reports) j.push_back(ordered_json::parse(r.to_json()));
    write_file_atomic(artifacts_.report, j.dump(2) + "\n");
    return reports;
  });
}

std::vector<eval::RankedBook> Runner::retrieve_book() {
  return timed("retrieve-book", [&] {
    if (config_.candidates.empty()) throw std::invalid_argument("retrieve-book: no candidate books given");
    require_artifact(artifacts_.cnn, "train-cnn");
    crf::Weights w = config_.crf;
    if (config_.fit_crf) {
      require_artifact(artifacts_.crf, "fit-crf");
      w = load_weights(artifacts_.crf);
    }
    require_input(config_.movie.srt, "srt");
    const SubtitleTrack subtitle = parse_srt(read_file(config_.movie.srt));
    std::vector<Shot> shots;
    if (!config_.movie.shots.empty()) shots = load_shots(config_.movie.shots);
    const Models models = load_models(config_);
    const ctxcnn::Model model(load_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind).params);

    for (const auto& c : config_.candidates) require_input(c, "candidates");
    const auto ranked = eval::book_retrieval(config_.candidates, [&](std::size_t k) {
      const Book book = load_book(config_.candidates[k]);
      const auto scores = ctxcnn::score_map(compute_tensor(book, subtitle, shots, models), model);
      const double e = crf::infer(crf::build_crf(scores, subtitle), w, config_.prune).energy;
      log("retrieve-book: " + config_.candidates[k] + " energy " + brief(e));
      return e;
    });
    std::ostringstream out;
    out << "rank\tbook\tenergy\tscore\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      out << r + 1 << '\t' << ranked[r].name << '\t' << num(ranked[r].energy) << '\t' << num(ranked[r].score) << '\n';
    }
    write_file_atomic(artifacts_.ranking, out.str());
    return ranked;
  });
}

std::vector<eval::Match> Runner::cross_match() {
  return timed("cross-match", [&] {
    require_input(config_.other_book, "other-book");
    require_artifact(artifacts_.cnn, "train-cnn");
    require_input(config_.movie.srt, "srt");
    const SubtitleTrack subtitle = parse_srt(read_file(config_.movie.srt));
    std::vector<Shot> shots;
    if (!config_.movie.shots.empty()) shots = load_shots(config_.movie.shots);
    const Book book = load_book(config_.other_book);
    const ctxcnn::Model model(load_checkpoint(artifacts_.cnn, ctxcnn::kCheckpointKind).params);
    const auto scores = ctxcnn::score_map(compute_tensor(book, subtitle, shots, load_models(config_)), model);
    const auto matches = eval::cross_match(scores, book, config_.top_k);
    std::ostringstream out;
    out << "node_id\tstart_ms\tend_ms\tbook_sentence_id\tbook_line\tparagraph_id\tscore\n";
    for (const auto& mt : matches) {
      const auto [s, e] = subtitle.span(mt.node);
      out << mt.node << '\t' << s << '\t' << e << '\t' << mt.sentence << '\t' << book.sentences[mt.sentence].source_line
          << '\t' << mt.paragraph << '\t' << num(mt.score) << '\n';
    }
    write_file_atomic(artifacts_.matches, out.str());
    return matches;
  });
}

void Runner::run_all() {
  if (config_.use_book_emb) train_skipthought();
  if (config_.use_vis) train_vsembed();
  build_tensor();
  train_cnn();
  if (config_.fit_crf) fit_crf();
  align();
}

void Runner::write_manifest() const {
  ordered_json m = ordered_json::object();
  if (fs::exists(artifacts_.manifest)) {
    try {
      m = ordered_json::parse(read_file(artifacts_.manifest));
    } catch (const nlohmann::json::exception&) {
      m = ordered_json::object();
    }
  }
  m["tool_version"] = kToolVersion;
  m["config_hash"] = hex64(config_.hash());
  m["config"] = config_.canonical();

  ordered_json artifacts = ordered_json::object(), hashes = ordered_json::object();
  const std::vector<std::pair<std::string, std::string>> files = {
      {"skipthought", artifacts_.skipthought}, {"vsembed", artifacts_.vsembed}, {"tensor", artifacts_.tensor},
      {"train_tensor", artifacts_.train_tensor}, {"cnn", artifacts_.cnn},       {"crf", artifacts_.crf},
      {"alignment", artifacts_.alignment},     {"report", artifacts_.report},   {"ranking", artifacts_.ranking},
      {"matches", artifacts_.matches}};
  for (const auto& [name, path] : files) {
    if (!fs::exists(path)) continue;
    artifacts[name] = path;
    hashes[name] = hex64(fnv1a(read_file(path)));
  }
  m["artifacts"] = artifacts;
  m["hashes"] = hashes;

  ordered_json stages = m.contains("stages") && m["stages"].is_object() ? m["stages"] : ordered_json::object();
  for (const auto& s : stages_) stages[s.name] = {{"seconds", s.seconds}};
  m["stages"] = stages;
  write_file_atomic(artifacts_.manifest, m.dump(2) + "\n");
}

}  // namespace bookalign::pipeline
