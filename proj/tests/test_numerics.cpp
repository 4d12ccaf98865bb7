#include <cmath>
#include <filesystem>

#include "bookalign/checkpoint.hpp"
#include "bookalign/error.hpp"
#include "bookalign/numerics.hpp"
#include "doctest.h"

using namespace bookalign;

namespace {

ParamStore scalar_store(double theta) {
  ParamStore p;
  DenseTensor t({1});
  t.data[0] = theta;
  p.add("theta", t);
  return p;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters and advances t") {
  ParamStore p = scalar_store(1.5);
  AdamState s;
  adam_step(p, s);
  CHECK(p.value("theta").data[0] == 1.5);
  CHECK(s.t == 1);
}

TEST_CASE("adam: first step moves by lr in the -sign(g) direction") {
  ParamStore p = scalar_store(0.0);
  AdamState s(AdamConfig{0.1, 0.9, 0.999, 1e-8});
  p.grad("theta").data[0] = 2.0;
  adam_step(p, s);
  // m_hat = 2, v_hat = 4, update = -0.1 * 2 / (2 + 1e-8)
  CHECK(p.value("theta").data[0] == doctest::Approx(-0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(p.grad("theta").data[0] == 0.0);
}

TEST_CASE("adam: constant gradient moves monotonically") {
  ParamStore p = scalar_store(0.0);
  AdamState s;
  double prev = 0.0;
  for (int k = 0; k < 5; ++k) {
    p.grad("theta").data[0] = 0.7;
    adam_step(p, s);
    CHECK(p.value("theta").data[0] < prev);
    prev = p.value("theta").data[0];
  }
}

TEST_CASE("adam and sgd reject non-finite gradients and name the parameter") {
  ParamStore p = scalar_store(1.0);
  p.add("other", DenseTensor({2}));
  p.grad("other").data[1] = std::nan("");
  AdamState s;
  CHECK_THROWS_WITH_AS(adam_step(p, s), doctest::Contains("other"), NumericError);
  CHECK(s.t == 0);
  CHECK_THROWS_AS(sgd_step(p, SgdConfig{0.1}), NumericError);
  CHECK(p.value("theta").data[0] == 1.0);
}

TEST_CASE("sgd arithmetic") {
  ParamStore p = scalar_store(1.0);
  sgd_step(p, SgdConfig{0.2});
  CHECK(p.value("theta").data[0] == 1.0);

  p.grad("theta").data[0] = 0.5;
  sgd_step(p, SgdConfig{0.2});
  CHECK(p.value("theta").data[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(p.grad("theta").data[0] == 0.0);
}

TEST_CASE("sgd on theta^2 shrinks |theta| each step") {
  // theta <- theta - 0.1 * 2 theta = 0.8 theta: 1, 0.8, 0.64, 0.512
  ParamStore p = scalar_store(1.0);
  const double expected[] = {0.8, 0.64, 0.512};
  for (double e : expected) {
    p.grad("theta").data[0] = 2.0 * p.value("theta").data[0];
    sgd_step(p, SgdConfig{0.1});
    CHECK(p.value("theta").data[0] == doctest::Approx(e).epsilon(1e-14));
  }
}

TEST_CASE("optimizers keep parameters finite on finite gradients") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ParamStore p;
    p.add("w", init_gaussian({3, 4}, 10.0, 100 + trial));
    AdamState s;
    for (int step = 0; step < 20; ++step) {
      for (Eigen::Index k = 0; k < p.grad("w").data.size(); ++k) p.grad("w").data[k] = 1e6 * rng.normal();
      adam_step(p, s);
      for (Eigen::Index k = 0; k < p.grad("w").data.size(); ++k) p.grad("w").data[k] = rng.normal();
      sgd_step(p, SgdConfig{0.01});
    }
    CHECK(p.value("w").data.allFinite());
  }
}

TEST_CASE("grad_check on simple functions") {
  SUBCASE("theta^2 at 3") {
    ParamStore p = scalar_store(3.0);
    auto f = [](ParamStore& s) {
      const double t = s.value("theta").data[0];
      s.grad("theta").data[0] += 2.0 * t;
      return t * t;
    };
    auto r = grad_check(f, p, 1e-5, 1e-6);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("constant") {
    ParamStore p = scalar_store(3.0);
    auto r = grad_check([](ParamStore&) { return 4.0; }, p, 1e-5, 1e-6);
    CHECK(r.passed);
    CHECK(r.max_rel_error == 0.0);
  }
  SUBCASE("random quadratic with known Hessian") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::MatrixXd B(5, 5);
      for (Eigen::Index k = 0; k < B.size(); ++k) B.data()[k] = rng.normal();
      const Eigen::MatrixXd A = B.transpose() * B + Eigen::MatrixXd::Identity(5, 5);
      Eigen::VectorXd b(5);
      for (int k = 0; k < 5; ++k) b[k] = rng.normal();
      ParamStore p;
      p.add("x", init_gaussian({5}, 1.0, 50 + trial));
      auto f = [&](ParamStore& s) {
        const auto& x = s.value("x").data;
        s.grad("x").data += A * x + b;
        return 0.5 * x.dot(A * x) + b.dot(x);
      };
      auto r = grad_check(f, p, 1e-5, 1e-6);
      CHECK(r.passed);
    }
  }
  SUBCASE("a wrong gradient is reported") {
    ParamStore p = scalar_store(3.0);
    auto f = [](ParamStore& s) {
      const double t = s.value("theta").data[0];
      s.grad("theta").data[0] += 3.0 * t;
      return t * t;
    };
    auto r = grad_check(f, p, 1e-5, 1e-4);
    CHECK_FALSE(r.passed);
    CHECK(r.worst_param == "theta");
  }
}

TEST_CASE("initializers") {
  CHECK(init_gaussian({3, 3}, 0.0, 1).data.isZero());
  CHECK(init_gaussian({4, 2}, 0.5, 9) == init_gaussian({4, 2}, 0.5, 9));
  CHECK_FALSE(init_gaussian({4, 2}, 0.5, 9) == init_gaussian({4, 2}, 0.5, 10));

  const DenseTensor q = init_orthogonal({4, 4}, 3);
  const Eigen::MatrixXd qtq = q.matrix().transpose() * q.matrix();
  CHECK((qtq - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(std::abs(q.matrix().col(c).norm() - 1.0) < 1e-10);

  const DenseTensor tall = init_orthogonal({6, 3}, 4);
  CHECK((tall.matrix().transpose() * tall.matrix() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);
  const DenseTensor wide = init_orthogonal({2, 5}, 4);
  CHECK((wide.matrix() * wide.matrix().transpose() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bookalign_test_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "m.ckpt").string();

  ParamStore p;
  p.add("a.w", init_gaussian({3, 2, 2}, 1.0, 1));
  p.add("b", init_gaussian({7}, 1e-300, 2));
  DenseTensor odd({2});
  odd.data << -0.0, 1.0 / 3.0;
  p.add("c", odd);
  save_checkpoint(path, "skipthought", 0xdeadbeefULL, p);

  Checkpoint ck = load_checkpoint(path, "skipthought");
  CHECK(ck.kind == "skipthought");
  CHECK(ck.vocab_hash == 0xdeadbeefULL);
  CHECK(ck.params.same_values(p));
  CHECK(std::signbit(ck.params.value("c").data[0]));

  CHECK_THROWS_AS(load_checkpoint(path, "vsembed"), DataError);
  write_file_atomic(path, "NOTACKPT....");
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  fs::remove_all(dir);
}
