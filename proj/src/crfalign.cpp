#include "bookalign/crfalign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bookalign/error.hpp"

namespace bookalign::crf {

using Eigen::MatrixXd;

namespace {

double edge_term(double d_s, double d_b, const Weights& w) {
  return w.pairwise_p * pairwise_p(d_s, d_b, w.sigma2) + w.pairwise_q * pairwise_q(d_b, w.sigma2);
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

void Weights::validate() const {
  if (!(unary >= 0.0 && pairwise_p >= 0.0 && pairwise_q >= 0.0)) {
    throw std::invalid_argument("CRF weights must be non-negative");
  }
  if (unary == 0.0 && pairwise_p == 0.0 && pairwise_q == 0.0) {
    throw std::invalid_argument("at least one CRF weight must be positive");
  }
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
}

double unary(double score) {
  if (!(score > 0.0 && score < 1.0)) {
    throw std::invalid_argument("unary: score " + std::to_string(score) + " is outside (0, 1)");
  }
  return -std::log(score);
}

double book_distance(std::size_t y_a, std::size_t y_b, std::size_t n_book) {
  if (n_book <= 1) return 0.0;
  const std::size_t diff = y_a > y_b ? y_a - y_b : y_b - y_a;
  return static_cast<double>(diff) / static_cast<double>(n_book - 1);
}

double pairwise_p(double d_s, double d_b, double sigma2) {
  const double d2 = (d_s - d_b) * (d_s - d_b);
  return d2 / (d2 + sigma2);
}

double pairwise_q(double d_b, double sigma2) { return d_b * d_b / (d_b * d_b + sigma2); }

ChainCrf build_crf(const MatrixXd& score_map, const SubtitleTrack& subtitle) {
  const std::size_t K = subtitle.sentence_count();
  if (static_cast<std::size_t>(score_map.rows()) != K) {
    throw std::invalid_argument("build_crf: score map has " + std::to_string(score_map.rows()) + " rows for " +
                                std::to_string(K) + " subtitle sentences");
  }
  ChainCrf crf;
  crf.n_book = static_cast<std::size_t>(score_map.cols());
  crf.unary.resize(score_map.rows(), score_map.cols());
  for (Eigen::Index i = 0; i < score_map.rows(); ++i) {
    for (Eigen::Index j = 0; j < score_map.cols(); ++j) crf.unary(i, j) = unary(score_map(i, j));
  }
  const double duration = static_cast<double>(std::max<std::int64_t>(1, subtitle.duration_ms()));
  std::vector<double> mid;
  for (std::size_t k = 0; k < K; ++k) {
    const auto [s, e] = subtitle.span(k);
    crf.nodes.push_back({k, s, e});
    mid.push_back(0.5 * static_cast<double>(s + e));
    crf.time_fraction.push_back(std::clamp(mid.back() / duration, 0.0, 1.0));
  }
  for (std::size_t k = 0; k + 1 < K; ++k) {
    crf.d_s.push_back(std::clamp(std::abs(mid[k + 1] - mid[k]) / duration, 0.0, 1.0));
  }
  return crf;
}

AlignmentPath energy(const std::vector<std::size_t>& y, const ChainCrf& crf, const Weights& w) {
  if (y.size() != crf.size()) throw std::invalid_argument("energy: path length differs from node count");
  AlignmentPath p;
  p.y = y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= crf.n_book) throw std::invalid_argument("energy: state outside the book");
    p.unary_terms.push_back(w.unary * crf.unary(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(y[i])));
  }
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    p.edge_terms.push_back(edge_term(crf.d_s[i], book_distance(y[i], y[i + 1], crf.n_book), w));
  }
  for (double t : p.unary_terms) p.energy += t;
  for (double t : p.edge_terms) p.energy += t;
  return p;
}

std::pair<std::size_t, std::size_t> state_band(const ChainCrf& crf, std::size_t i, double prune_fraction) {
  if (crf.n_book == 0) throw std::invalid_argument("state_band: empty book");
  if (!(prune_fraction >= 0.0)) throw std::invalid_argument("state_band: prune fraction must be non-negative");
  const auto last = static_cast<long>(crf.n_book - 1);
  const long centre = std::lround(crf.time_fraction.at(i) * static_cast<double>(last));
  const auto half = static_cast<long>(std::floor(prune_fraction * static_cast<double>(crf.n_book)));
  return {static_cast<std::size_t>(std::max(0L, centre - half)), static_cast<std::size_t>(std::min(last, centre + half))};
}

AlignmentPath infer(const ChainCrf& crf, const Weights& w, double prune_fraction) {
  w.validate();
  const std::size_t K = crf.size();
  if (K == 0 || crf.n_book == 0) throw std::invalid_argument("infer: empty chain or state space");

  std::vector<std::pair<std::size_t, std::size_t>> band(K);
  for (std::size_t i = 0; i < K; ++i) band[i] = state_band(crf, i, prune_fraction);

  // cost[j - lo] for the current node; back[i][j - lo] is the best predecessor.
  std::vector<double> cost, next;
  std::vector<std::vector<std::size_t>> back(K);
  for (std::size_t j = band[0].first; j <= band[0].second; ++j) {
    cost.push_back(w.unary * crf.unary(0, static_cast<Eigen::Index>(j)));
  }
  std::vector<double> table(crf.n_book);
  for (std::size_t i = 1; i < K; ++i) {
    for (std::size_t d = 0; d < crf.n_book; ++d) table[d] = edge_term(crf.d_s[i - 1], book_distance(0, d, crf.n_book), w);
    const auto [plo, phi] = band[i - 1];
    const auto [lo, hi] = band[i];
    next.assign(hi - lo + 1, 0.0);
    back[i].assign(hi - lo + 1, 0);
    for (std::size_t j = lo; j <= hi; ++j) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = plo;
      for (std::size_t jp = plo; jp <= phi; ++jp) {
        const double c = cost[jp - plo] + table[jp > j ? jp - j : j - jp];
        if (c < best) {
          best = c;
          arg = jp;
        }
      }
      next[j - lo] = best + w.unary * crf.unary(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      back[i][j - lo] = arg;
    }
    cost.swap(next);
  }

  std::vector<std::size_t> y(K);
  const auto best = std::min_element(cost.begin(), cost.end());  // first minimum = smallest index
  if (!std::isfinite(*best)) throw NumericError("infer: no finite-energy path inside the pruning bands");
  y[K - 1] = band[K - 1].first + static_cast<std::size_t>(best - cost.begin());
  for (std::size_t i = K - 1; i > 0; --i) y[i - 1] = back[i][y[i] - band[i].first];
  return energy(y, crf, w);
}

std::size_t recalled(const std::vector<std::size_t>& y, const std::vector<Observation>& observations,
                     const std::vector<std::size_t>& paragraph_of_sentence, const Tolerance& tol) {
  std::size_t hits = 0;
  for (const Observation& o : observations) {
    const long target = static_cast<long>(paragraph_of_sentence.at(o.book_sentence));
    const std::size_t lo = o.node > tol.subtitle_sentences ? o.node - tol.subtitle_sentences : 0;
    const std::size_t hi = std::min(y.size(), o.node + tol.subtitle_sentences + 1);
    for (std::size_t k = lo; k < hi; ++k) {
      if (std::abs(static_cast<long>(paragraph_of_sentence.at(y[k])) - target) <= static_cast<long>(tol.paragraphs)) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

FitResult fit_weights(const std::vector<TrainingInstance>& instances, const Grid& grid, double prune_fraction,
                      const Tolerance& tol) {
  std::size_t total = 0;
  for (const auto& inst : instances) total += inst.observations.size();
  if (total == 0) throw DataError("fit_weights: no observed nodes");

  FitResult result;
  bool found = false;
  for (double wp : sorted_unique(grid.pairwise_p)) {
    for (double wq : sorted_unique(grid.pairwise_q)) {
      for (double wu : sorted_unique(grid.unary)) {
        for (double s2 : sorted_unique(grid.sigma2)) {
          const Weights w{wu, wp, wq, s2};
          try {
            w.validate();
          } catch (const std::invalid_argument&) {
            continue;
          }
          std::size_t hits = 0;
          for (const auto& inst : instances) {
            if (inst.observations.empty()) continue;
            hits += recalled(infer(inst.crf, w, prune_fraction).y, inst.observations, inst.paragraph_of_sentence, tol);
          }
          const double r = static_cast<double>(hits) / static_cast<double>(total);
          if (!found || r > result.recall) {
            result = {w, r};
            found = true;
          }
        }
      }
    }
  }
  if (!found) throw std::invalid_argument("fit_weights: grid has no valid weight combination");
  return result;
}

}  // namespace bookalign::crf
