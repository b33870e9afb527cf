#include <cmath>

#include "doctest.h"
#include "mmcl/errors.hpp"
#include "mmcl/loss.hpp"
#include "test_util.hpp"

using namespace mmcl;
using namespace mmcl::test;

namespace {

KernelSpec kernel_of(KernelKind kind) {
  KernelSpec k;
  k.kind = kind;
  k.sigma_sq = 0.7;
  k.gamma = 0.8;
  k.bias = 0.1;
  return k;
}

LossBatch random_batch(Index d, Index n, std::uint64_t seed) {
  LossBatch b;
  Mat z = unit_columns(random_matrix(d, n + 2, seed));
  b.z = z.col(0);
  b.z_pos = z.col(1);
  b.z_neg = z.rightCols(n);
  CounterRng rng(seed, 5);
  b.alpha.resize(n);
  for (Index i = 0; i < n; ++i) b.alpha(i) = rng.uniform(0.0, 3.0);
  return b;
}

Vec pack(const LossBatch& b) {
  Vec v(b.z.size() * (2 + b.z_neg.cols()));
  v << b.z, b.z_pos, flatten(b.z_neg);
  return v;
}

LossBatch unpack(const LossBatch& like, const Vec& v) {
  const Index d = like.z.size(), n = like.z_neg.cols();
  LossBatch b = like;
  b.z = v.head(d);
  b.z_pos = v.segment(d, d);
  b.z_neg = flatten_to_mat(v.tail(d * n), d, n);
  return b;
}

Vec pack(const LossGrads& g) {
  Vec v(g.d_z.size() * (2 + g.d_z_neg.cols()));
  v << g.d_z, g.d_z_pos, flatten(g.d_z_neg);
  return v;
}

}  // namespace

TEST_CASE("mmcl_loss examples") {
  auto b = random_batch(4, 3, 1);
  KernelSpec rbf = kernel_of(KernelKind::rbf);
  LossBatch zero = b;
  zero.alpha.setZero();
  CHECK(mmcl_loss(zero, rbf) == 0.0);
  CHECK(decision_function(zero, rbf) == 0.0);

  LossBatch one;
  one.z = Vec::Unit(2, 0);
  one.z_pos = Vec::Unit(2, 0);
  one.z_neg = Mat(2, 1);
  one.z_neg << 0.2, std::sqrt(1 - 0.04);
  one.alpha = Vec::Ones(1);
  KernelSpec lin = kernel_of(KernelKind::linear);
  CHECK(mmcl_loss(one, lin) == doctest::Approx(-0.8).epsilon(1e-14));

  one.z_pos << 0.9, std::sqrt(1 - 0.81);
  one.z_neg << 0.1, std::sqrt(1 - 0.01);
  CHECK(decision_function(one, lin) == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("loss equals minus the decision function") {
  for (std::uint64_t seed = 0; seed < 30; ++seed)
    for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::tanh}) {
      auto b = random_batch(5, 6, seed);
      CHECK(std::abs(mmcl_loss(b, kernel_of(kind)) + decision_function(b, kernel_of(kind))) <= 1e-12);
    }
}

TEST_CASE("shape mismatch is rejected") {
  auto b = random_batch(4, 3, 2);
  b.alpha = Vec::Ones(2);
  CHECK_THROWS_AS(mmcl_loss(b, kernel_of(KernelKind::rbf)), InvalidArgument);
  CHECK_THROWS_AS(mmcl_grad(b, kernel_of(KernelKind::rbf)), InvalidArgument);
  auto c = random_batch(4, 3, 2);
  c.z_pos = Vec::Ones(5);
  CHECK_THROWS_AS(mmcl_loss(c, kernel_of(KernelKind::rbf)), InvalidArgument);
}

TEST_CASE("mmcl_grad examples") {
  auto b = random_batch(4, 3, 3);
  b.alpha.setZero();
  auto g = mmcl_grad(b, kernel_of(KernelKind::rbf));
  CHECK(pack(g).cwiseAbs().maxCoeff() == 0.0);

  auto p = random_batch(4, 3, 4);
  p.z_pos = p.z;
  // With z+ = z the positive term sits at the rbf peak and only negatives
  // contribute to d_z; d_z_pos vanishes.
  auto gp = mmcl_grad(p, kernel_of(KernelKind::rbf));
  CHECK(gp.d_z_pos.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mmcl_grad matches central differences for every kernel") {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (auto kind : {KernelKind::linear, KernelKind::rbf, KernelKind::tanh}) {
      const Index d = 3 + seed % 6, n = 2 * (2 + seed % 6);
      auto b = random_batch(d, n, 50 + seed);
      const auto spec = kernel_of(kind);
      auto f = [&](const Vec& v) { return mmcl_loss(unpack(b, v), spec); };
      CHECK(relative_error(pack(mmcl_grad(b, spec)), numeric_gradient(f, pack(b))) <= 1e-4);
    }
}

TEST_CASE("gradients are linear in the fixed multipliers") {
  auto b = random_batch(5, 6, 9);
  auto spec = kernel_of(KernelKind::rbf);
  LossBatch shifted = b, delta = b;
  delta.alpha = random_vector(6, 77).cwiseAbs();
  shifted.alpha = b.alpha + delta.alpha;
  const Vec lhs = pack(mmcl_grad(shifted, spec)) - pack(mmcl_grad(b, spec));
  CHECK(relative_error(lhs, pack(mmcl_grad(delta, spec))) <= 1e-12);
}

TEST_CASE("loss decreases in positive-pair similarity") {
  auto b = random_batch(3, 4, 10);
  auto spec = kernel_of(KernelKind::rbf);
  LossBatch far = b;
  far.z_pos = -b.z;
  LossBatch mid = b;
  mid.z_pos = (b.z - 0.3 * b.z_pos).normalized();
  LossBatch near = b;
  near.z_pos = b.z;
  CHECK(mmcl_loss(far, spec) > mmcl_loss(mid, spec));
  CHECK(mmcl_loss(mid, spec) > mmcl_loss(near, spec));
}

TEST_CASE("fn_correct") {
  Vec a(3);
  a << 0, 0.3, 100;
  Vec expect(3);
  expect << 0, 0.3, 0;
  CHECK(fn_correct(a, 100) == expect);
  Vec interior = Vec::Constant(4, 0.5);
  CHECK(fn_correct(interior, 100) == interior);
  CHECK(fn_correct(Vec::Constant(4, 7.0), 7.0) == Vec::Zero(4));
  Vec near(3);
  near << 100 - 1e-10, 100 - 1e-6, 50;
  Vec fixed = fn_correct(near, 100);
  CHECK(fixed(0) == 0.0);
  CHECK(fixed(1) == near(1));
  CHECK(fn_correct(fixed, 100) == fixed);
}

TEST_CASE("nce_loss examples") {
  const Index d = 3;
  Vec z = Vec::Unit(d, 0);
  Mat neg(d, 4);
  neg.setZero();
  neg.row(1).setOnes();
  Vec pos = Vec::Unit(d, 1);
  CHECK(nce_loss(z, pos, neg, 0.5) == doctest::Approx(std::log(5.0)).epsilon(1e-14));

  Mat two(d, 2);
  two.col(0) = -z;
  two.col(1) = -z;
  const double expect = -std::log(std::exp(2.0) / (std::exp(2.0) + 2 * std::exp(-2.0)));
  CHECK(nce_loss(z, z, two, 0.5) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(nce_loss(z, z, two, 0.5) == doctest::Approx(std::log1p(2 * std::exp(-4.0))).epsilon(1e-14));

  CHECK_THROWS_AS(nce_loss(z, z, two, 0.0), InvalidArgument);
  CHECK_THROWS_AS(nce_loss(z, z, two, -1.0), InvalidArgument);
}

TEST_CASE("nce_grad matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto b = random_batch(6, 5, 200 + seed);
    const double tau = 0.3 + 0.1 * (seed % 5);
    auto f = [&](const Vec& v) {
      auto u = unpack(b, v);
      return nce_loss(u.z, u.z_pos, u.z_neg, tau);
    };
    auto g = nce_grad(b.z, b.z_pos, b.z_neg, tau);
    CHECK(relative_error(pack(g), numeric_gradient(f, pack(b))) <= 1e-6);
  }
}

TEST_CASE("negative counts follow the batch size") {
  for (Index n : {2, 5, 128, 256}) {
    for (Index k : {Index(0), n - 1}) {
      auto cols = negative_columns(n, k);
      CHECK(Index(cols.size()) == 2 * (n - 1));
      for (auto c : cols) {
        CHECK(c != k);
        CHECK(c != n + k);
      }
    }
  }
  CHECK(negative_columns(128, 0).size() == 254);
  CHECK(negative_columns(256, 3).size() == 510);
  auto cols = negative_columns(3, 1);
  CHECK(cols == std::vector<Index>{0, 2, 3, 5});
}

TEST_CASE("batch_loss layout and frozen-multiplier gradients") {
  const Index d = 4, N = 4;
  Mat v1 = unit_columns(random_matrix(d, N, 31)), v2 = unit_columns(random_matrix(d, N, 32));
  BatchLossOptions opts;
  opts.kernel = kernel_of(KernelKind::rbf);
  opts.C = 100;
  opts.solver = SolverKind::inv;
  auto res = batch_loss(v1, v2, opts);
  REQUIRE(res.anchors.size() == size_t(N));

  Mat all(d, 2 * N);
  all << v1, v2;
  double total = 0;
  for (Index k = 0; k < N; ++k) {
    const auto& a = res.anchors[k];
    CHECK(a.alpha.size() == 2 * (N - 1));
    LossBatch b;
    b.z = v2.col(k);
    b.z_pos = v1.col(k);
    auto cols = negative_columns(N, k);
    b.z_neg.resize(d, cols.size());
    for (size_t i = 0; i < cols.size(); ++i) b.z_neg.col(i) = all.col(cols[i]);
    b.alpha = a.alpha;
    auto inst = build_instance(opts.kernel, b.z_pos, b.z_neg, opts.C, opts.beta);
    CHECK((a.solution.alpha - solve_inv(inst).alpha).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(a.loss - mmcl_loss(b, opts.kernel)) <= 1e-12);
    total += a.loss;
  }
  CHECK(res.loss == doctest::Approx(total).epsilon(1e-14));

  // Central differences with every anchor's multipliers frozen.
  auto frozen = [&](const Vec& flat) {
    Mat w1 = flatten_to_mat(flat.head(d * N), d, N), w2 = flatten_to_mat(flat.tail(d * N), d, N);
    Mat cat(d, 2 * N);
    cat << w1, w2;
    double s = 0;
    for (Index k = 0; k < N; ++k) {
      LossBatch b;
      b.z = w2.col(k);
      b.z_pos = w1.col(k);
      auto cols = negative_columns(N, k);
      b.z_neg.resize(d, cols.size());
      for (size_t i = 0; i < cols.size(); ++i) b.z_neg.col(i) = cat.col(cols[i]);
      b.alpha = res.anchors[k].alpha;
      s += mmcl_loss(b, opts.kernel);
    }
    return s;
  };
  Vec flat(2 * d * N);
  flat << flatten(v1), flatten(v2);
  Vec analytic(2 * d * N);
  analytic << flatten(res.d_view1), flatten(res.d_view2);
  CHECK(relative_error(analytic, numeric_gradient(frozen, flat)) <= 1e-4);

  opts.reduction = Reduction::mean;
  auto mean = batch_loss(v1, v2, opts);
  CHECK(mean.loss == doctest::Approx(res.loss / N).epsilon(1e-14));
  CHECK((mean.d_view1 * N - res.d_view1).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(batch_loss(v1.leftCols(1), v2.leftCols(1), opts), InvalidArgument);
  CHECK_THROWS_AS(batch_loss(v1, v2.leftCols(3), opts), InvalidArgument);
}

TEST_CASE("batch_loss false-negative correction") {
  const Index d = 3, N = 6;
  Mat v1 = unit_columns(random_matrix(d, N, 41)), v2 = unit_columns(random_matrix(d, N, 42));
  BatchLossOptions opts;
  opts.C = 0.05;
  opts.solver = SolverKind::pgd;
  opts.fn_correction = true;
  auto res = batch_loss(v1, v2, opts);
  bool any = false;
  for (const auto& a : res.anchors) {
    CHECK(a.alpha == fn_correct(a.solution.alpha, opts.C));
    any = any || (a.solution.alpha.array() == opts.C).any();
  }
  CHECK(any);
  CHECK(std::isfinite(res.loss));
}

TEST_CASE("batch InfoNCE matches per-anchor evaluation") {
  const Index d = 5, N = 5;
  Mat v1 = unit_columns(random_matrix(d, N, 51)), v2 = unit_columns(random_matrix(d, N, 52));
  auto res = nce_batch_loss(v1, v2, 0.5, Reduction::sum);
  Mat all(d, 2 * N);
  all << v1, v2;
  double total = 0;
  for (Index k = 0; k < N; ++k) {
    auto cols = negative_columns(N, k);
    Mat neg(d, cols.size());
    for (size_t i = 0; i < cols.size(); ++i) neg.col(i) = all.col(cols[i]);
    total += nce_loss(v2.col(k), v1.col(k), neg, 0.5);
  }
  CHECK(res.loss == doctest::Approx(total).epsilon(1e-14));

  auto f = [&](const Vec& flat) {
    return nce_batch_loss(flatten_to_mat(flat.head(d * N), d, N), flatten_to_mat(flat.tail(d * N), d, N), 0.5,
                          Reduction::sum, false)
        .loss;
  };
  Vec flat(2 * d * N), analytic(2 * d * N);
  flat << flatten(v1), flatten(v2);
  analytic << flatten(res.d_view1), flatten(res.d_view2);
  CHECK(relative_error(analytic, numeric_gradient(f, flat)) <= 1e-6);
}
