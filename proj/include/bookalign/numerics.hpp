#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bookalign {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using VectorMap = Eigen::Map<Eigen::VectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

// ---------------------------------------------------------------------------
// Expression helpers. Templated on the Eigen expression, so they work for any
// scalar type and compose without temporaries.

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Derived>
auto tanh(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.unaryExpr([](Scalar v) { return std::tanh(v); });
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  return a.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(0); });
}

/// Cosine of the angle between two vectors. Caller guarantees both are nonzero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

/// log-softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = logits.maxCoeff();
  const Scalar lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& a) {
  return a.allFinite();
}

// ---------------------------------------------------------------------------

/// Row-major dense array of doubles with an explicit shape.
struct DenseTensor {
  std::vector<std::size_t> shape;
  Eigen::VectorXd data;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<std::size_t> extents);

  std::size_t size() const { return static_cast<std::size_t>(data.size()); }
  std::size_t rank() const { return shape.size(); }

  /// View as shape[0] x (product of remaining extents). Rank-1 tensors are column vectors.
  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  bool operator==(const DenseTensor& other) const;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

/// Named parameters with same-shaped gradient accumulators. Iteration order is by name.
class ParamStore {
 public:
  struct Entry {
    DenseTensor value;
    DenseTensor grad;
  };

  void add(const std::string& name, DenseTensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  DenseTensor& value(const std::string& name);
  const DenseTensor& value(const std::string& name) const;
  DenseTensor& grad(const std::string& name);
  const DenseTensor& grad(const std::string& name) const;

  MatrixMap mat(const std::string& name) { return value(name).matrix(); }
  ConstMatrixMap mat(const std::string& name) const { return value(name).matrix(); }
  MatrixMap grad_mat(const std::string& name) { return grad(name).matrix(); }

  void zero_grad();
  std::vector<std::string> names() const;
  std::size_t parameter_count() const;
  std::size_t size() const { return entries_.size(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Same names, shapes and values (gradients ignored).
  bool same_values(const ParamStore& other) const;

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Optimizers.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::map<std::string, Eigen::VectorXd> first_moment;
  std::map<std::string, Eigen::VectorXd> second_moment;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

struct SgdConfig {
  double lr = 0.1;
};

/// Bias-corrected Adam update; zeroes gradients. Throws NumericError naming
/// the first parameter whose gradient is not finite (no parameter is touched).
void adam_step(ParamStore& params, AdamState& state);

/// theta -= lr * grad; zeroes gradients.
void sgd_step(ParamStore& params, const SgdConfig& cfg);

// ---------------------------------------------------------------------------
// Randomness. Every stochastic choice in the project draws from one of these.

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  std::mt19937_64& engine() { return engine_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// splitmix64 step; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

DenseTensor init_gaussian(std::vector<std::size_t> shape, double scale, std::uint64_t seed);

/// Rank-2 tensor with orthonormal columns (rows >= cols) or rows (rows < cols).
DenseTensor init_orthogonal(std::vector<std::size_t> shape, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;
};

/// Loss evaluation that also accumulates the analytic gradient into the store.
using LossFn = std::function<double(ParamStore&)>;

/// Central finite differences on every coordinate. Per coordinate the relative
/// error is |g_an - g_fd| / max(1e-8, |g_an| + |g_fd|); the report carries the max.
GradCheckReport grad_check(const LossFn& f, ParamStore& params, double h, double tolerance);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s);
std::string hex64(std::uint64_t v);

}  // namespace bookalign
