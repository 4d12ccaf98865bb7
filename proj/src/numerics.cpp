#include "bookalign/numerics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "bookalign/error.hpp"

namespace bookalign {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor(std::vector<std::size_t> extents)
    : shape(std::move(extents)), data(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape_size(shape)))) {}

namespace {

std::pair<Eigen::Index, Eigen::Index> matrix_extents(const std::vector<std::size_t>& shape) {
  if (shape.empty()) return {1, 1};
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  std::size_t cols = 1;
  for (std::size_t k = 1; k < shape.size(); ++k) cols *= shape[k];
  return {rows, static_cast<Eigen::Index>(cols)};
}

}  // namespace

MatrixMap DenseTensor::matrix() {
  auto [r, c] = matrix_extents(shape);
  return MatrixMap(data.data(), r, c);
}

ConstMatrixMap DenseTensor::matrix() const {
  auto [r, c] = matrix_extents(shape);
  return ConstMatrixMap(data.data(), r, c);
}

bool DenseTensor::operator==(const DenseTensor& other) const {
  return shape == other.shape && data.size() == other.data.size() &&
         std::equal(data.data(), data.data() + data.size(), other.data.data());
}

// ---------------------------------------------------------------------------

void ParamStore::add(const std::string& name, DenseTensor value) {
  Entry e;
  e.grad = DenseTensor(value.shape);
  e.value = std::move(value);
  entries_[name] = std::move(e);
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

DenseTensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const DenseTensor& ParamStore::value(const std::string& name) const { return entry(name).value; }
DenseTensor& ParamStore::grad(const std::string& name) { return entry(name).grad; }
const DenseTensor& ParamStore::grad(const std::string& name) const { return entry(name).grad; }

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.data.setZero();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

namespace {

void require_finite_gradients(const ParamStore& params) {
  for (const auto& [name, e] : params) {
    if (!e.grad.data.allFinite()) {
      throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
}

}  // namespace

void adam_step(ParamStore& params, AdamState& state) {
  require_finite_gradients(params);
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (auto& [name, e] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != e.value.data.size()) {
      m = Eigen::VectorXd::Zero(e.value.data.size());
      v = Eigen::VectorXd::Zero(e.value.data.size());
    }
    const auto& g = e.grad.data;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    e.value.data.array() -=
        c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
    e.grad.data.setZero();
  }
}

void sgd_step(ParamStore& params, const SgdConfig& cfg) {
  require_finite_gradients(params);
  for (auto& [_, e] : params) {
    e.value.data -= cfg.lr * e.grad.data;
    e.grad.data.setZero();
  }
}

// ---------------------------------------------------------------------------

std::size_t Rng::index(std::size_t n) {
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DenseTensor init_gaussian(std::vector<std::size_t> shape, double scale, std::uint64_t seed) {
  DenseTensor t(std::move(shape));
  if (scale == 0.0) return t;
  Rng rng(seed);
  for (Eigen::Index k = 0; k < t.data.size(); ++k) t.data[k] = scale * rng.normal();
  return t;
}

DenseTensor init_orthogonal(std::vector<std::size_t> shape, std::uint64_t seed) {
  if (shape.size() != 2) throw std::invalid_argument("init_orthogonal needs a rank-2 shape");
  const auto rows = static_cast<Eigen::Index>(shape[0]);
  const auto cols = static_cast<Eigen::Index>(shape[1]);
  const Eigen::Index tall = std::max(rows, cols);
  const Eigen::Index wide = std::min(rows, cols);

  Rng rng(seed);
  Eigen::MatrixXd g(tall, wide);
  for (Eigen::Index c = 0; c < wide; ++c)
    for (Eigen::Index r = 0; r < tall; ++r) g(r, c) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
  // Sign convention: make diag(R) positive so the draw is Haar-distributed.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(wide).triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < wide; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }

  DenseTensor t(std::move(shape));
  if (rows >= cols) {
    t.matrix() = q;
  } else {
    t.matrix() = q.transpose();
  }
  return t;
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const LossFn& f, ParamStore& params, double h, double tolerance) {
  params.zero_grad();
  f(params);
  std::map<std::string, Eigen::VectorXd> analytic;
  for (auto& [name, e] : params) analytic[name] = e.grad.data;

  GradCheckReport report;
  for (auto& [name, e] : params) {
    const Eigen::VectorXd& ga = analytic[name];
    for (Eigen::Index k = 0; k < e.value.data.size(); ++k) {
      const double saved = e.value.data[k];
      e.value.data[k] = saved + h;
      params.zero_grad();
      const double up = f(params);
      e.value.data[k] = saved - h;
      params.zero_grad();
      const double down = f(params);
      e.value.data[k] = saved;

      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(ga[k] - fd) / std::max(1e-8, std::abs(ga[k]) + std::abs(fd));
      ++report.coordinates;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = static_cast<std::size_t>(k);
        report.worst_analytic = ga[k];
        report.worst_numeric = fd;
      }
    }
  }
  params.zero_grad();
  report.passed = report.max_rel_error < tolerance;
  return report;
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace bookalign
