#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "hgrl/common.hpp"

namespace hgrl::ad {

// Reverse-mode tape over dense double matrices. Creation order is the
// topological order; backward() walks it in reverse. Scalars are 1x1.
class Tape;

struct Var {
  Tape* tape = nullptr;
  Eigen::Index id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;             // backward closures capture `this`
  Tape& operator=(const Tape&) = delete;

  Var leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
  }

  Var constant(Mat value) { return leaf(std::move(value), false); }

  Var scalar_constant(double x) {
    Mat m(1, 1);
    m(0, 0) = x;
    return constant(m);
  }

  Var add(Var a, Var b) {
    check_shape(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "add: shape mismatch");
    Var out = push(val(a) + val(b), needs(a) || needs(b), {a.id, b.id});
    node(out).backward = [this, a, b, out]() {
      accum(a, g(out));
      accum(b, g(out));
    };
    return out;
  }

  Var sub(Var a, Var b) {
    check_shape(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "sub: shape mismatch");
    Var out = push(val(a) - val(b), needs(a) || needs(b), {a.id, b.id});
    node(out).backward = [this, a, b, out]() {
      accum(a, g(out));
      accum(b, -g(out));
    };
    return out;
  }

  // Broadcast a 1 x c row vector over every row of A.
  Var add_rowvec(Var a, Var r) {
    check_shape(val(r).rows() == 1 && val(r).cols() == val(a).cols(), "add_rowvec: r must be 1 x cols(A)");
    Mat v = val(a);
    v.rowwise() += val(r).row(0);
    Var out = push(std::move(v), needs(a) || needs(r), {a.id, r.id});
    node(out).backward = [this, a, r, out]() {
      accum(a, g(out));
      accum(r, g(out).colwise().sum());
    };
    return out;
  }

  Var add_const(Var a, const Mat& c) {
    check_shape(c.rows() == val(a).rows() && c.cols() == val(a).cols(), "add_const: shape mismatch");
    Var out = push(val(a) + c, needs(a), {a.id});
    node(out).backward = [this, a, out]() { accum(a, g(out)); };
    return out;
  }

  Var mul_elem(Var a, Var b) {
    check_shape(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(), "mul_elem: shape mismatch");
    Var out = push(val(a).cwiseProduct(val(b)), needs(a) || needs(b), {a.id, b.id});
    node(out).backward = [this, a, b, out]() {
      accum(a, g(out).cwiseProduct(val(b)));
      accum(b, g(out).cwiseProduct(val(a)));
    };
    return out;
  }

  Var scale(Var a, double c) {
    Var out = push(val(a) * c, needs(a), {a.id});
    node(out).backward = [this, a, c, out]() { accum(a, g(out) * c); };
    return out;
  }

  // Multiply by a learnable 1x1 scalar (beta in the branch fusion).
  Var scale_var(Var a, Var s) {
    check_shape(val(s).size() == 1, "scale_var: s must be 1x1");
    Var out = push(val(a) * val(s)(0, 0), needs(a) || needs(s), {a.id, s.id});
    node(out).backward = [this, a, s, out]() {
      accum(a, g(out) * val(s)(0, 0));
      Mat ds(1, 1);
      ds(0, 0) = g(out).cwiseProduct(val(a)).sum();
      accum(s, ds);
    };
    return out;
  }

  Var matmul(Var a, Var b) {
    check_shape(val(a).cols() == val(b).rows(), "matmul: inner dimension mismatch");
    Var out = push(val(a) * val(b), needs(a) || needs(b), {a.id, b.id});
    node(out).backward = [this, a, b, out]() {
      accum(a, g(out) * val(b).transpose());
      accum(b, val(a).transpose() * g(out));
    };
    return out;
  }

  Var transpose(Var a) {
    Var out = push(val(a).transpose(), needs(a), {a.id});
    node(out).backward = [this, a, out]() { accum(a, g(out).transpose()); };
    return out;
  }

  Var row_softmax(Var a) {
    Mat v = val(a);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double m = v.row(i).maxCoeff();
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = std::exp(v(i, j) - m);
      v.row(i) /= v.row(i).sum();
    }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      const Mat& y = val(out);
      const Mat& go = g(out);
      Mat da(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = go.row(i).cwiseProduct(y.row(i)).sum();
        for (Eigen::Index j = 0; j < y.cols(); ++j) da(i, j) = y(i, j) * (go(i, j) - dot);
      }
      accum(a, da);
    };
    return out;
  }

  // Softmax restricted to the admitted support; excluded entries get weight
  // exactly zero and receive no gradient. A row with an empty support yields
  // an all-zero row.
  Var masked_row_softmax(Var a, const MaskMat& mask) {
    check_shape(mask.rows() == val(a).rows() && mask.cols() == val(a).cols(), "masked_row_softmax: mask shape");
    const Mat& x = val(a);
    Mat v = Mat::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j)) m = std::max(m, x(i, j));
      if (!std::isfinite(m)) continue;
      double z = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j)) z += std::exp(x(i, j) - m);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j)) v(i, j) = std::exp(x(i, j) - m) / z;
    }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, mask, out]() {
      const Mat& y = val(out);
      const Mat& go = g(out);
      Mat da = Mat::Zero(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j < y.cols(); ++j)
          if (mask(i, j)) dot += go(i, j) * y(i, j);
        for (Eigen::Index j = 0; j < y.cols(); ++j)
          if (mask(i, j)) da(i, j) = y(i, j) * (go(i, j) - dot);
      }
      accum(a, da);
    };
    return out;
  }

  // Exact (erf) GELU; smooth, so finite-difference checks stay clean.
  Var gelu(Var a) {
    const Mat& x = val(a);
    Mat v = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t / std::numbers::sqrt2)); });
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      const Mat& x2 = val(a);
      Mat d = x2.unaryExpr([](double t) {
        const double cdf = 0.5 * (1.0 + std::erf(t / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + t * pdf;
      });
      accum(a, g(out).cwiseProduct(d));
    };
    return out;
  }

  Var row_l2_normalize(Var a) {
    const Mat& x = val(a);
    Mat v(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double n = x.row(i).norm();
      if (n == 0.0) throw NumericError("row_l2_normalize: zero-norm row " + std::to_string(i));
      v.row(i) = x.row(i) / n;
    }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      const Mat& x2 = val(a);
      const Mat& y = val(out);
      const Mat& go = g(out);
      Mat da(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i) {
        const double n = x2.row(i).norm();
        const double dot = go.row(i).cwiseProduct(y.row(i)).sum();
        da.row(i) = (go.row(i) - dot * y.row(i)) / n;
      }
      accum(a, da);
    };
    return out;
  }

  // Per-row layer norm with frozen affine parameters (encoder adapters only).
  Var layernorm_rows(Var a, const Mat& gamma, const Mat& beta, double eps = 1e-5) {
    const Mat& x = val(a);
    check_shape(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 && beta.cols() == x.cols(),
                "layernorm_rows: affine params must be 1 x cols");
    Mat xhat(x.rows(), x.cols());
    Vec inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mu = x.row(i).mean();
      const double var = (x.row(i).array() - mu).square().mean();
      inv_std(i) = 1.0 / std::sqrt(var + eps);
      for (Eigen::Index j = 0; j < x.cols(); ++j) xhat(i, j) = (x(i, j) - mu) * inv_std(i);
    }
    Mat v = xhat;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      v.row(i) = v.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, gamma, xhat, inv_std, out]() {
      const Mat& go = g(out);
      const auto n = static_cast<double>(go.cols());
      Mat da(go.rows(), go.cols());
      for (Eigen::Index i = 0; i < go.rows(); ++i) {
        Eigen::RowVectorXd gg = go.row(i).cwiseProduct(gamma.row(0));
        const double mean_gg = gg.mean();
        const double mean_ggx = gg.cwiseProduct(xhat.row(i)).sum() / n;
        for (Eigen::Index j = 0; j < go.cols(); ++j)
          da(i, j) = inv_std(i) * (gg(j) - mean_gg - xhat(i, j) * mean_ggx);
      }
      accum(a, da);
    };
    return out;
  }

  Var concat_cols(Var a, Var b) {
    check_shape(val(a).rows() == val(b).rows(), "concat_cols: row mismatch");
    Mat v(val(a).rows(), val(a).cols() + val(b).cols());
    v << val(a), val(b);
    Var out = push(std::move(v), needs(a) || needs(b), {a.id, b.id});
    node(out).backward = [this, a, b, out]() {
      accum(a, g(out).leftCols(val(a).cols()));
      accum(b, g(out).rightCols(val(b).cols()));
    };
    return out;
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index n) {
    check_shape(start >= 0 && n >= 0 && start + n <= val(a).cols(), "slice_cols: out of range");
    Var out = push(val(a).middleCols(start, n), needs(a), {a.id});
    node(out).backward = [this, a, start, n, out]() {
      Mat da = Mat::Zero(val(a).rows(), val(a).cols());
      da.middleCols(start, n) = g(out);
      accum(a, da);
    };
    return out;
  }

  Var vstack(const std::vector<Var>& rows) {
    check_contract(!rows.empty(), "vstack: empty input");
    const Eigen::Index c = val(rows[0]).cols();
    Eigen::Index r = 0;
    bool req = false;
    for (const Var& v : rows) {
      check_shape(val(v).cols() == c, "vstack: column mismatch");
      r += val(v).rows();
      req = req || needs(v);
    }
    Mat m(r, c);
    Eigen::Index at = 0;
    std::vector<Eigen::Index> ids;
    ids.reserve(rows.size());
    for (const Var& v : rows) {
      m.middleRows(at, val(v).rows()) = val(v);
      at += val(v).rows();
      ids.push_back(v.id);
    }
    Var out = push(std::move(m), req, ids);
    node(out).backward = [this, rows, out]() {
      Eigen::Index at2 = 0;
      for (const Var& v : rows) {
        accum(v, g(out).middleRows(at2, val(v).rows()));
        at2 += val(v).rows();
      }
    };
    return out;
  }

  Var gather_rows(Var a, std::vector<Eigen::Index> idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), val(a).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      check_shape(idx[i] >= 0 && idx[i] < val(a).rows(), "gather_rows: index out of range");
      v.row(static_cast<Eigen::Index>(i)) = val(a).row(idx[i]);
    }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, idx, out]() {
      Mat da = Mat::Zero(val(a).rows(), val(a).cols());
      for (std::size_t i = 0; i < idx.size(); ++i) da.row(idx[i]) += g(out).row(static_cast<Eigen::Index>(i));
      accum(a, da);
    };
    return out;
  }

  // out(i, k) = a(i, idx(i, k)).
  Var gather_cols_per_row(Var a, const IndexMat& idx) {
    check_shape(idx.rows() == val(a).rows(), "gather_cols_per_row: row mismatch");
    Mat v(idx.rows(), idx.cols());
    for (Eigen::Index i = 0; i < idx.rows(); ++i)
      for (Eigen::Index k = 0; k < idx.cols(); ++k) {
        check_shape(idx(i, k) >= 0 && idx(i, k) < val(a).cols(), "gather_cols_per_row: index out of range");
        v(i, k) = val(a)(i, idx(i, k));
      }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, idx, out]() {
      Mat da = Mat::Zero(val(a).rows(), val(a).cols());
      for (Eigen::Index i = 0; i < idx.rows(); ++i)
        for (Eigen::Index k = 0; k < idx.cols(); ++k) da(i, idx(i, k)) += g(out)(i, k);
      accum(a, da);
    };
    return out;
  }

  // Scale row i of A by v(i, 0).
  Var row_scale(Var a, Var v) {
    check_shape(val(v).rows() == val(a).rows() && val(v).cols() == 1, "row_scale: v must be rows(A) x 1");
    Mat m = val(a);
    for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i) *= val(v)(i, 0);
    Var out = push(std::move(m), needs(a) || needs(v), {a.id, v.id});
    node(out).backward = [this, a, v, out]() {
      const Mat& go = g(out);
      Mat da(go.rows(), go.cols());
      Mat dv(go.rows(), 1);
      for (Eigen::Index i = 0; i < go.rows(); ++i) {
        da.row(i) = go.row(i) * val(v)(i, 0);
        dv(i, 0) = go.row(i).cwiseProduct(val(a).row(i)).sum();
      }
      accum(a, da);
      accum(v, dv);
    };
    return out;
  }

  Var recip(Var a) {
    const Mat& x = val(a);
    Mat v(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (x(i, j) == 0.0) throw NumericError("recip: division by zero");
        v(i, j) = 1.0 / x(i, j);
      }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      accum(a, -g(out).cwiseProduct(val(out).cwiseProduct(val(out))));
    };
    return out;
  }

  Var sum_cols(Var a) {
    Var out = push(val(a).rowwise().sum(), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      accum(a, g(out) * Mat::Ones(1, val(a).cols()));
    };
    return out;
  }

  Var mean_rows(Var a) {
    const auto r = static_cast<double>(val(a).rows());
    Var out = push(Mat(val(a).colwise().sum() / r), needs(a), {a.id});
    node(out).backward = [this, a, r, out]() {
      accum(a, Mat::Ones(val(a).rows(), 1) * (g(out) / r));
    };
    return out;
  }

  Var sum_all(Var a) {
    Mat v(1, 1);
    v(0, 0) = val(a).sum();
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      accum(a, Mat::Constant(val(a).rows(), val(a).cols(), g(out)(0, 0)));
    };
    return out;
  }

  Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size())); }

  Var logsumexp_rows(Var a) {
    const Mat& x = val(a);
    Mat v(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      v(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    Var out = push(std::move(v), needs(a), {a.id});
    node(out).backward = [this, a, out]() {
      const Mat& x2 = val(a);
      const Mat& v2 = val(out);
      Mat da(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i)
        for (Eigen::Index j = 0; j < x2.cols(); ++j)
          da(i, j) = g(out)(i, 0) * std::exp(x2(i, j) - v2(i, 0));
      accum(a, da);
    };
    return out;
  }

  // out(i) = log sum_j W(i,j) * exp(A(i,j)); W >= 0 with a positive row sum.
  Var log_weighted_sumexp_rows(Var a, Var w) {
    check_shape(val(a).rows() == val(w).rows() && val(a).cols() == val(w).cols(),
                "log_weighted_sumexp_rows: shape mismatch");
    const Mat& x = val(a);
    const Mat& ww = val(w);
    Mat v(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) s += ww(i, j) * std::exp(x(i, j) - m);
      if (!(s > 0.0)) throw NumericError("log_weighted_sumexp_rows: nonpositive weighted sum at row " + std::to_string(i));
      v(i, 0) = m + std::log(s);
    }
    Var out = push(std::move(v), needs(a) || needs(w), {a.id, w.id});
    node(out).backward = [this, a, w, out]() {
      const Mat& x2 = val(a);
      const Mat& w2 = val(w);
      const Mat& v2 = val(out);
      Mat da(x2.rows(), x2.cols());
      Mat dw(x2.rows(), x2.cols());
      for (Eigen::Index i = 0; i < x2.rows(); ++i)
        for (Eigen::Index j = 0; j < x2.cols(); ++j) {
          const double e = std::exp(x2(i, j) - v2(i, 0));
          da(i, j) = g(out)(i, 0) * w2(i, j) * e;
          dw(i, j) = g(out)(i, 0) * e;
        }
      accum(a, da);
      accum(w, dw);
    };
    return out;
  }

  void backward(Var loss) {
    check_contract(loss.tape == this, "backward: var from another tape");
    check_shape(val(loss).size() == 1, "backward: loss must be a scalar");
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    if (!nodes_[static_cast<std::size_t>(loss.id)].requires_grad) return;
    nodes_[static_cast<std::size_t>(loss.id)].grad(0, 0) = 1.0;
    for (Eigen::Index i = loss.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backward) n.backward();
    }
  }

  const Mat& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Mat& g(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  Var push(Mat value, bool requires_grad, std::vector<Eigen::Index> /*parents*/) {
    nodes_.push_back(Node{std::move(value), Mat(), requires_grad, nullptr});
    return Var{this, static_cast<Eigen::Index>(nodes_.size()) - 1};
  }

  void accum(Var v, const Mat& dg) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    n.grad += dg;
  }

  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->val(*this); }
inline const Mat& Var::grad() const { return tape->g(*this); }

}  // namespace hgrl::ad
