// Foundations: hashing, RNG, archive container, tape autodiff, parameter
// store, optimizer.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hgrl/archive.hpp"
#include "hgrl/optim.hpp"
#include "hgrl/params.hpp"
#include "hgrl/rng.hpp"

using namespace hgrl;

namespace {

std::filesystem::path temp_file(const std::string& stem) {
  return std::filesystem::temp_directory_path() / ("hgrl_core_" + stem + "_" + std::to_string(::getpid()));
}

// Central-difference gradient of a scalar tape function with respect to one
// leaf, probing every coordinate (tests use small shapes).
Mat fd_gradient(const std::function<double(const Mat&)>& f, const Mat& x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  Mat p = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      p(i, j) = x(i, j) + h;
      const double up = f(p);
      p(i, j) = x(i, j) - h;
      const double dn = f(p);
      p(i, j) = x(i, j);
      g(i, j) = (up - dn) / (2.0 * h);
    }
  return g;
}

void check_grad_close(const Mat& analytic, const Mat& fd, double tol = 1e-6) {
  REQUIRE(analytic.rows() == fd.rows());
  REQUIRE(analytic.cols() == fd.cols());
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double denom = std::max({1.0, std::abs(analytic(i, j)), std::abs(fd(i, j))});
      REQUIRE(std::abs(analytic(i, j) - fd(i, j)) / denom < tol);
    }
}

}  // namespace

TEST_CASE("fnv1a is stable across overloads and chains") {
  const std::string s = "state_loss";
  CHECK(fnv1a(s) == fnv1a("state_loss"));
  CHECK(fnv1a(s) == fnv1a(s.data(), s.size()));
  CHECK(fnv1a("a") != fnv1a("b"));
  CHECK(fnv1a("ab") == fnv1a("b", fnv1a("a")));  // chaining == concatenation
  const double z = 0.5;
  CHECK(fnv1a(&z, sizeof z) == fnv1a(&z, sizeof z));
}

TEST_CASE("rng streams are deterministic and fork-independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42);
  Rng f1 = c.fork(1), f2 = c.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
  // Forking must not consume from the parent stream.
  Rng d(42);
  (void)d.fork(7);
  Rng e(42);
  CHECK(d.next_u64() == e.next_u64());
}

TEST_CASE("rng gaussian moments and uniform range") {
  Rng r(7);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("rng shuffle is a permutation and seed-stable") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng r1(5), r2(5);
  r1.shuffle(v);
  r2.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
}

TEST_CASE("archive round-trips every value kind") {
  Archive a;
  Rng r(3);
  const Mat m = r.gaussian_matrix(4, 7);
  a.put("kind", std::string("unit-test"));
  a.put("m", m);
  a.put("ids", std::vector<std::int64_t>{3, -1, 99});
  a.put_scalar("zeta", 0.5);

  const auto path = temp_file("arc");
  a.save(path.string());
  Archive b = Archive::load(path.string());
  CHECK(b.str("kind") == "unit-test");
  CHECK((b.mat("m") - m).cwiseAbs().maxCoeff() == 0.0);  // bit-exact
  CHECK(b.ints("ids") == std::vector<std::int64_t>{3, -1, 99});
  CHECK(b.scalar("zeta") == 0.5);
  CHECK(b.has("m"));
  CHECK_FALSE(b.has("nope"));
  CHECK(a.content_hash() == b.content_hash());
  std::filesystem::remove(path);
}

TEST_CASE("archive detects corruption and truncation") {
  Archive a;
  a.put("kind", std::string("unit-test"));
  a.put("m", Mat::Identity(3, 3));
  const auto path = temp_file("corrupt");
  a.save(path.string());

  // Flip one payload byte.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::streamoff>(f.tellg());
    f.seekp(size - 5);
    char c;
    f.seekg(size - 5);
    f.read(&c, 1);
    c ^= 0x5a;
    f.seekp(size - 5);
    f.write(&c, 1);
  }
  CHECK_THROWS_AS(Archive::load(path.string()), ValidationError);

  // Truncate.
  std::filesystem::resize_file(path, 16);
  CHECK_THROWS(Archive::load(path.string()));
  std::filesystem::remove(path);
}

TEST_CASE("archive rejects duplicate and missing names") {
  Archive a;
  a.put("x", Mat::Zero(1, 1));
  CHECK_THROWS_AS(a.put("x", Mat::Zero(1, 1)), ContractError);
  CHECK_THROWS_AS(a.mat("absent"), ContractError);
}

TEST_CASE("tape gradients match finite differences op by op") {
  Rng r(11);
  ad::Tape tape;

  SECTION("matmul + add_rowvec + gelu chain") {
    const Mat X = r.gaussian_matrix(3, 4);
    const Mat W = r.gaussian_matrix(4, 5);
    const Mat b = r.gaussian_matrix(1, 5);
    auto loss_of_W = [&](const Mat& w) {
      ad::Tape t;
      return t.mean_all(t.gelu(t.add_rowvec(t.matmul(t.constant(X), t.constant(w)), t.constant(b)))).value()(0, 0);
    };
    ad::Var Wv = tape.leaf(W, true);
    ad::Var bv = tape.leaf(b, true);
    ad::Var loss = tape.mean_all(tape.gelu(tape.add_rowvec(tape.matmul(tape.constant(X), Wv), bv)));
    tape.backward(loss);
    check_grad_close(Wv.grad(), fd_gradient(loss_of_W, W));
  }

  SECTION("row_softmax") {
    const Mat X = r.gaussian_matrix(3, 5);
    const Mat C = r.gaussian_matrix(3, 5);  // fixed mixing so the loss sees every coordinate
    auto f = [&](const Mat& x) {
      ad::Tape t;
      return t.sum_all(t.mul_elem(t.row_softmax(t.constant(x)), t.constant(C))).value()(0, 0);
    };
    ad::Var Xv = tape.leaf(X, true);
    ad::Var loss = tape.sum_all(tape.mul_elem(tape.row_softmax(Xv), tape.constant(C)));
    tape.backward(loss);
    check_grad_close(Xv.grad(), fd_gradient(f, X));
  }

  SECTION("masked_row_softmax leaves excluded entries at zero grad") {
    const Mat X = r.gaussian_matrix(3, 4);
    MaskMat M = MaskMat::Constant(3, 4, true);
    M(0, 1) = false;
    M(2, 0) = false;
    M(2, 3) = false;
    const Mat C = r.gaussian_matrix(3, 4);
    auto f = [&](const Mat& x) {
      ad::Tape t;
      return t.sum_all(t.mul_elem(t.masked_row_softmax(t.constant(x), M), t.constant(C))).value()(0, 0);
    };
    ad::Var Xv = tape.leaf(X, true);
    ad::Var loss = tape.sum_all(tape.mul_elem(tape.masked_row_softmax(Xv, M), tape.constant(C)));
    tape.backward(loss);
    check_grad_close(Xv.grad(), fd_gradient(f, X));
    CHECK(Xv.grad()(0, 1) == 0.0);
    CHECK(Xv.grad()(2, 0) == 0.0);
  }

  SECTION("row_l2_normalize, logsumexp_rows, recip, row_scale") {
    const Mat X = r.gaussian_matrix(4, 3).array() + 2.0;  // keep away from zero rows
    auto f = [&](const Mat& x) {
      ad::Tape t;
      ad::Var v = t.constant(x);
      ad::Var norm = t.row_l2_normalize(v);
      ad::Var lse = t.logsumexp_rows(norm);                    // 4x1
      ad::Var scaled = t.row_scale(norm, t.recip(lse));        // rows / lse
      return t.mean_all(scaled).value()(0, 0);
    };
    ad::Var Xv = tape.leaf(X, true);
    ad::Var norm = tape.row_l2_normalize(Xv);
    ad::Var lse = tape.logsumexp_rows(norm);
    ad::Var loss = tape.mean_all(tape.row_scale(norm, tape.recip(lse)));
    tape.backward(loss);
    check_grad_close(Xv.grad(), fd_gradient(f, X));
  }

  SECTION("log_weighted_sumexp_rows in both arguments") {
    const Mat X = r.gaussian_matrix(3, 4);
    Mat W = r.gaussian_matrix(3, 4).cwiseAbs();
    W.array() += 0.1;
    auto fx = [&](const Mat& x) {
      ad::Tape t;
      return t.mean_all(t.log_weighted_sumexp_rows(t.constant(x), t.constant(W))).value()(0, 0);
    };
    auto fw = [&](const Mat& w) {
      ad::Tape t;
      return t.mean_all(t.log_weighted_sumexp_rows(t.constant(X), t.constant(w))).value()(0, 0);
    };
    ad::Var Xv = tape.leaf(X, true);
    ad::Var Wv = tape.leaf(W, true);
    ad::Var loss = tape.mean_all(tape.log_weighted_sumexp_rows(Xv, Wv));
    tape.backward(loss);
    check_grad_close(Xv.grad(), fd_gradient(fx, X));
    check_grad_close(Wv.grad(), fd_gradient(fw, W));
  }

  SECTION("structure ops: concat, slice, vstack, gathers, transpose, scale_var") {
    const Mat A = r.gaussian_matrix(3, 2);
    const Mat B = r.gaussian_matrix(3, 3);
    const Mat s = Mat::Constant(1, 1, 0.7);
    IndexMat cols(3, 2);
    cols << 0, 4, 2, 2, 1, 3;
    auto f = [&](const Mat& a) {
      ad::Tape t;
      ad::Var cat = t.concat_cols(t.constant(a), t.constant(B));          // 3x5
      ad::Var stacked = t.vstack({cat, cat});                              // 6x5
      ad::Var picked = t.gather_rows(stacked, {5, 0, 2});                  // 3x5
      ad::Var cell = t.gather_cols_per_row(picked, cols);                  // 3x2
      ad::Var sv = t.scale_var(t.transpose(cell), t.constant(s));          // 2x3
      return t.sum_all(t.slice_cols(sv, 1, 2)).value()(0, 0);
    };
    ad::Var Av = tape.leaf(A, true);
    ad::Var sv_leaf = tape.leaf(s, true);
    ad::Var cat = tape.concat_cols(Av, tape.constant(B));
    ad::Var stacked = tape.vstack({cat, cat});
    ad::Var picked = tape.gather_rows(stacked, {5, 0, 2});
    ad::Var cell = tape.gather_cols_per_row(picked, cols);
    ad::Var loss = tape.sum_all(tape.slice_cols(tape.scale_var(tape.transpose(cell), sv_leaf), 1, 2));
    tape.backward(loss);
    check_grad_close(Av.grad(), fd_gradient(f, A));
    // d loss / d s by FD on the scalar.
    auto fs = [&](const Mat& sc) {
      ad::Tape t;
      ad::Var cat2 = t.concat_cols(t.constant(A), t.constant(B));
      ad::Var stacked2 = t.vstack({cat2, cat2});
      ad::Var picked2 = t.gather_rows(stacked2, {5, 0, 2});
      ad::Var cell2 = t.gather_cols_per_row(picked2, cols);
      return t.sum_all(t.slice_cols(t.scale_var(t.transpose(cell2), t.constant(sc)), 1, 2)).value()(0, 0);
    };
    check_grad_close(sv_leaf.grad(), fd_gradient(fs, s));
  }

  SECTION("layernorm_rows with frozen affine") {
    const Mat X = r.gaussian_matrix(3, 6);
    const Mat gamma = r.gaussian_matrix(1, 6).array() + 1.5;
    const Mat beta = r.gaussian_matrix(1, 6);
    const Mat C = r.gaussian_matrix(3, 6);
    auto f = [&](const Mat& x) {
      ad::Tape t;
      return t.sum_all(t.mul_elem(t.layernorm_rows(t.constant(x), gamma, beta), t.constant(C))).value()(0, 0);
    };
    ad::Var Xv = tape.leaf(X, true);
    ad::Var loss = tape.sum_all(tape.mul_elem(tape.layernorm_rows(Xv, gamma, beta), tape.constant(C)));
    tape.backward(loss);
    check_grad_close(Xv.grad(), fd_gradient(f, X), 1e-5);
  }
}

TEST_CASE("tape contracts") {
  ad::Tape tape;
  ad::Var a = tape.leaf(Mat::Zero(2, 3), true);
  ad::Var b = tape.leaf(Mat::Zero(3, 2), true);
  CHECK_THROWS_AS(tape.add(a, b), ShapeError);
  CHECK_THROWS_AS(tape.backward(tape.add(a, a)), ShapeError);  // non-scalar loss
  ad::Var z = tape.constant(Mat::Zero(1, 1));
  CHECK_THROWS_AS(tape.recip(z), NumericError);
  CHECK_THROWS_AS(tape.row_l2_normalize(tape.constant(Mat::Zero(2, 2))), NumericError);
}

TEST_CASE("param store semantics") {
  ParamStore p;
  p.add("b", Mat::Zero(1, 1));
  p.add("a", Mat::Zero(1, 2));
  CHECK_THROWS_AS(p.add("a", Mat::Zero(1, 1)), ContractError);
  CHECK_THROWS_AS(p.at("zzz"), ContractError);
  CHECK(p.names() == std::vector<std::string>{"a", "b"});  // deterministic order
  p.frozen.insert("a");
  CHECK(p.trainable_names() == std::vector<std::string>{"b"});

  ad::Tape tape;
  LeafMap leafs = make_leafs(tape, p);
  CHECK_FALSE(tape.needs(leafs.at("a")));
  CHECK(tape.needs(leafs.at("b")));
}

TEST_CASE("adam matches a hand-computed step and skips frozen tensors") {
  ParamStore p;
  const Mat w0 = Mat::Constant(1, 2, 1.0);
  p.add("w", w0);
  p.add("frozen", w0);
  p.frozen.insert("frozen");

  ad::Tape tape;
  LeafMap leafs = make_leafs(tape, p);
  // loss = sum(w * c) with c = [2, -3]: gradient is exactly c.
  Mat c(1, 2);
  c << 2.0, -3.0;
  ad::Var loss = tape.sum_all(tape.mul_elem(leafs.at("w"), tape.constant(c)));
  tape.backward(loss);

  Adam opt;
  opt.lr = 0.1;
  opt.update(p, leafs);

  // Step 1: mhat = g, vhat = g^2 -> update = -lr * g / (|g| + eps).
  for (int j = 0; j < 2; ++j) {
    const double g = c(0, j);
    const double expect = 1.0 - 0.1 * g / (std::abs(g) + opt.eps);
    CHECK(std::abs(p.at("w")(0, j) - expect) < 1e-12);
  }
  CHECK((p.at("frozen") - w0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(opt.step == 1);
  CHECK(opt.m.count("w") == 1);
  CHECK(opt.m.count("frozen") == 0);
}

TEST_CASE("adam rejects non-finite gradients") {
  ParamStore p;
  p.add("w", Mat::Zero(1, 1));
  ad::Tape tape;
  LeafMap leafs = make_leafs(tape, p);
  ad::Var x = leafs.at("w");
  // log(0) path: recip throws first, so craft the non-finite grad directly.
  ad::Var loss = tape.sum_all(x);
  tape.backward(loss);
  const_cast<Mat&>(leafs.at("w").grad())(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Adam opt;
  CHECK_THROWS_AS(opt.update(p, leafs), NumericError);
}
