#include "step/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace step::ops {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
using ImplPtr = std::shared_ptr<detail::TensorImpl<T>>;

template <class T>
bool needs_grad(const Tensor<T>& t) {
  return t.requires_grad();
}

template <class T>
T* grad_ptr(const ImplPtr<T>& impl) {
  return impl->requires_grad ? impl->grad.data() : nullptr;
}

template <class T>
const T* data_ptr(const Tensor<T>& t) {
  return t.data().data();
}

template <class T>
T* out_ptr(Tensor<T>& t) {
  return t.mutable_data().data();
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a,
                                 const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " + shape_string(s));
  }
}

// Views a tensor of rank 1 or 2 as rows x cols.
std::pair<std::size_t, std::size_t> as_matrix(const char* op, const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw ShapeError(std::string(op) + ": expected rank 1 or 2, got " +
                   shape_string(s));
}

}  // namespace

template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3) {
    shape_mismatch("matmul", sa, sb);
  }
  const std::size_t ba = sa.size() == 3 ? sa[0] : 1;
  const std::size_t bb = sb.size() == 3 ? sb[0] : 1;
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t k2 = sb[sb.size() - 2], p = sb.back();
  if (k != k2 || (ba != bb && ba != 1 && bb != 1)) shape_mismatch("matmul", sa, sb);
  const std::size_t batch = std::max(ba, bb);

  Shape out_shape = (sa.size() == 2 && sb.size() == 2) ? Shape{m, p}
                                                        : Shape{batch, m, p};
  auto out = tape.make_output(out_shape, needs_grad(a) || needs_grad(b));
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMap<T> ma(data_ptr(a) + (ba == 1 ? 0 : i * m * k), m, k);
    ConstMap<T> mb(data_ptr(b) + (bb == 1 ? 0 : i * k * p), k, p);
    MutMap<T> mo(out_ptr(out) + i * m * p, m, p);
    mo.noalias() = ma * mb;
  }
  if (out.requires_grad()) {
    tape.record([ai = a.impl(), bi = b.impl(), oi = out.impl(), ba, bb, batch,
                 m, k, p] {
      T* ga = grad_ptr(ai);
      T* gb = grad_ptr(bi);
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap<T> g(oi->grad.data() + i * m * p, m, p);
        const std::size_t oa = ba == 1 ? 0 : i * m * k;
        const std::size_t ob = bb == 1 ? 0 : i * k * p;
        if (ga) {
          ConstMap<T> mb(bi->data->data() + ob, k, p);
          MutMap<T>(ga + oa, m, k).noalias() += g * mb.transpose();
        }
        if (gb) {
          ConstMap<T> ma(ai->data->data() + oa, m, k);
          MutMap<T>(gb + ob, k, p).noalias() += ma.transpose() * g;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("add", a.shape(), b.shape());
  auto out = tape.make_output(a.shape(), needs_grad(a) || needs_grad(b));
  const std::size_t n = a.size();
  const T* pa = data_ptr(a);
  const T* pb = data_ptr(b);
  T* po = out_ptr(out);
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.requires_grad()) {
    tape.record([ai = a.impl(), bi = b.impl(), oi = out.impl(), n] {
      const T* g = oi->grad.data();
      if (T* ga = grad_ptr(ai)) for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      if (T* gb = grad_ptr(bi)) for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  auto out = tape.make_output(a.shape(), needs_grad(a) || needs_grad(b));
  const std::size_t n = a.size();
  const T* pa = data_ptr(a);
  const T* pb = data_ptr(b);
  T* po = out_ptr(out);
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    tape.record([ai = a.impl(), bi = b.impl(), oi = out.impl(), n] {
      const T* g = oi->grad.data();
      const T* va = ai->data->data();
      const T* vb = bi->data->data();
      if (T* ga = grad_ptr(ai))
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
      if (T* gb = grad_ptr(bi))
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  auto out = tape.make_output(x.shape(), needs_grad(x));
  const std::size_t n = x.size();
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * factor;
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), n, factor] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  auto out = tape.make_output(Shape{}, needs_grad(x));
  T acc = T(0);
  for (T v : x.data()) acc += v;
  out.mutable_data()[0] = acc;
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl()] {
      T* gx = grad_ptr(xi);
      const T g = oi->grad[0];
      for (std::size_t i = 0; i < xi->grad.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <class T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) +
                     " out of range for " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];

  auto out = tape.make_output(s, needs_grad(x));
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = px[base];
      for (std::size_t j = 0; j < len; ++j) {
        const T v = px[base + j * inner];
        if (std::isnan(v)) throw NumericError("softmax: NaN input");
        mx = std::max(mx, v);
      }
      T denom = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) po[base + j * inner] /= denom;
    }
  }
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), outer, inner, len] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      const T* y = oi->data->data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < len; ++j) {
            dot += g[base + j * inner] * y[base + j * inner];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = base + j * inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> scaled_dot_attention(Tape<T>& tape, const Tensor<T>& q,
                               const Tensor<T>& k, const Tensor<T>& v,
                               Tensor<T>* weights) {
  require_rank("scaled_dot_attention", q.shape(), 3);
  require_rank("scaled_dot_attention", k.shape(), 3);
  require_rank("scaled_dot_attention", v.shape(), 3);
  const std::size_t heads = q.dim(0), lq = q.dim(1), dh = q.dim(2);
  const std::size_t lk = k.dim(1), dv = v.dim(2);
  if (k.dim(0) != heads || k.dim(2) != dh) shape_mismatch("scaled_dot_attention", q.shape(), k.shape());
  if (v.dim(0) != heads || v.dim(1) != lk) shape_mismatch("scaled_dot_attention", k.shape(), v.shape());
  if (lq == 0 || lk == 0) throw ShapeError("scaled_dot_attention: empty sequence");

  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  auto probs = std::make_shared<std::vector<T>>(heads * lq * lk);
  auto out = tape.make_output(Shape{heads, lq, dv},
                              needs_grad(q) || needs_grad(k) || needs_grad(v));
  for (std::size_t h = 0; h < heads; ++h) {
    ConstMap<T> mq(data_ptr(q) + h * lq * dh, lq, dh);
    ConstMap<T> mk(data_ptr(k) + h * lk * dh, lk, dh);
    ConstMap<T> mv(data_ptr(v) + h * lk * dv, lk, dv);
    MutMap<T> p(probs->data() + h * lq * lk, lq, lk);
    p.noalias() = (mq * mk.transpose()) * inv_sqrt;
    for (std::size_t i = 0; i < lq; ++i) {
      auto row = p.row(i);
      const T mx = row.maxCoeff();
      if (std::isnan(mx)) throw NumericError("scaled_dot_attention: NaN score");
      row = (row.array() - mx).exp();
      row /= row.sum();
    }
    MutMap<T>(out_ptr(out) + h * lq * dv, lq, dv).noalias() = p * mv;
  }
  if (weights) {
    *weights = Tensor<T>::from_vector(Shape{heads, lq, lk}, *probs);
  }
  if (out.requires_grad()) {
    tape.record([qi = q.impl(), ki = k.impl(), vi = v.impl(), oi = out.impl(),
                 probs, heads, lq, lk, dh, dv, inv_sqrt] {
      T* gq = grad_ptr(qi);
      T* gk = grad_ptr(ki);
      T* gv = grad_ptr(vi);
      RowMat<T> dp(lq, lk);
      for (std::size_t h = 0; h < heads; ++h) {
        ConstMap<T> p(probs->data() + h * lq * lk, lq, lk);
        ConstMap<T> g(oi->grad.data() + h * lq * dv, lq, dv);
        ConstMap<T> mv(vi->data->data() + h * lk * dv, lk, dv);
        if (gv) MutMap<T>(gv + h * lk * dv, lk, dv).noalias() += p.transpose() * g;
        if (!gq && !gk) continue;
        dp.noalias() = g * mv.transpose();
        // Softmax Jacobian row by row, folded with the 1/sqrt(dh) scale.
        for (std::size_t i = 0; i < lq; ++i) {
          const T dot = dp.row(i).dot(p.row(i));
          dp.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)) * inv_sqrt;
        }
        if (gq) {
          ConstMap<T> mk(ki->data->data() + h * lk * dh, lk, dh);
          MutMap<T>(gq + h * lq * dh, lq, dh).noalias() += dp * mk;
        }
        if (gk) {
          ConstMap<T> mq(qi->data->data() + h * lq * dh, lq, dh);
          MutMap<T>(gk + h * lk * dh, lk, dh).noalias() += dp.transpose() * mq;
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> split_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t heads) {
  require_rank("split_heads", x.shape(), 2);
  const std::size_t len = x.dim(0), d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("split_heads: " + std::to_string(d) +
                     " columns not divisible into " + std::to_string(heads) +
                     " heads");
  }
  const std::size_t dh = d / heads;
  auto out = tape.make_output(Shape{heads, len, dh}, needs_grad(x));
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t l = 0; l < len; ++l)
      std::copy_n(px + l * d + h * dh, dh, po + (h * len + l) * dh);
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), heads, len, d, dh] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t c = 0; c < dh; ++c)
            gx[l * d + h * dh + c] += g[(h * len + l) * dh + c];
    });
  }
  return out;
}

template <class T>
Tensor<T> merge_heads(Tape<T>& tape, const Tensor<T>& x) {
  require_rank("merge_heads", x.shape(), 3);
  const std::size_t heads = x.dim(0), len = x.dim(1), dh = x.dim(2);
  const std::size_t d = heads * dh;
  auto out = tape.make_output(Shape{len, d}, needs_grad(x));
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t l = 0; l < len; ++l)
      std::copy_n(px + (h * len + l) * dh, dh, po + l * d + h * dh);
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), heads, len, d, dh] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t c = 0; c < dh; ++c)
            gx[(h * len + l) * dh + c] += g[l * d + h * dh + c];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean_pool(Tape<T>& tape, const Tensor<T>& x) {
  require_rank("mean_pool", x.shape(), 2);
  const std::size_t len = x.dim(0), d = x.dim(1);
  if (len == 0) throw ShapeError("mean_pool: no rows");
  auto out = tape.make_output(Shape{d}, needs_grad(x));
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  std::vector<T> column(len);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < len; ++r) column[r] = px[r * d + c];
    std::sort(column.begin(), column.end());
    T acc = T(0);
    for (T v : column) acc += v;
    po[c] = acc / static_cast<T>(len);
  }
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), len, d] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      const T inv = T(1) / static_cast<T>(len);
      for (std::size_t r = 0; r < len; ++r)
        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[c] * inv;
    });
  }
  return out;
}

template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
  const auto [rows, d] = as_matrix("layer_norm", x.shape());
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    shape_mismatch("layer_norm", x.shape(), gamma.shape());
  }
  auto out = tape.make_output(x.shape(), needs_grad(x) || needs_grad(gamma) ||
                                             needs_grad(beta));
  auto xhat = std::make_shared<std::vector<T>>(rows * d);
  auto rstd = std::make_shared<std::vector<T>>(rows);
  const T* px = data_ptr(x);
  const T* pg = data_ptr(gamma);
  const T* pb = data_ptr(beta);
  T* po = out_ptr(out);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mean = T(0);
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < d; ++c) {
      const T xh = (row[c] - mean) * rs;
      (*xhat)[r * d + c] = xh;
      po[r * d + c] = xh * pg[c] + pb[c];
    }
  }
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), gi = gamma.impl(), bi = beta.impl(),
                 oi = out.impl(), xhat, rstd, rows, d] {
      T* gx = grad_ptr(xi);
      T* gg = grad_ptr(gi);
      T* gb = grad_ptr(bi);
      const T* g = oi->grad.data();
      const T* pg = gi->data->data();
      std::vector<T> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g + r * d;
        const T* xr = xhat->data() + r * d;
        if (gg) for (std::size_t c = 0; c < d; ++c) gg[c] += gr[c] * xr[c];
        if (gb) for (std::size_t c = 0; c < d; ++c) gb[c] += gr[c];
        if (!gx) continue;
        T mean_dx = T(0), mean_dx_x = T(0);
        for (std::size_t c = 0; c < d; ++c) {
          dxhat[c] = gr[c] * pg[c];
          mean_dx += dxhat[c];
          mean_dx_x += dxhat[c] * xr[c];
        }
        mean_dx /= static_cast<T>(d);
        mean_dx_x /= static_cast<T>(d);
        for (std::size_t c = 0; c < d; ++c) {
          gx[r * d + c] += (*rstd)[r] * (dxhat[c] - mean_dx - xr[c] * mean_dx_x);
        }
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  const auto [rows, din] = as_matrix("linear", x.shape());
  require_rank("linear", weight.shape(), 2);
  const std::size_t dout = weight.dim(1);
  if (weight.dim(0) != din) shape_mismatch("linear", x.shape(), weight.shape());
  if (bias.shape() != Shape{dout}) shape_mismatch("linear", weight.shape(), bias.shape());

  Shape out_shape = x.rank() == 1 ? Shape{dout} : Shape{rows, dout};
  auto out = tape.make_output(out_shape, needs_grad(x) || needs_grad(weight) ||
                                             needs_grad(bias));
  ConstMap<T> mx(data_ptr(x), rows, din);
  ConstMap<T> mw(data_ptr(weight), din, dout);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> mb(data_ptr(bias), dout);
  MutMap<T> mo(out_ptr(out), rows, dout);
  mo.noalias() = mx * mw;
  mo.rowwise() += mb;
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), wi = weight.impl(), bi = bias.impl(),
                 oi = out.impl(), rows, din, dout] {
      ConstMap<T> g(oi->grad.data(), rows, dout);
      if (T* gx = grad_ptr(xi)) {
        ConstMap<T> mw(wi->data->data(), din, dout);
        MutMap<T>(gx, rows, din).noalias() += g * mw.transpose();
      }
      if (T* gw = grad_ptr(wi)) {
        ConstMap<T> mx(xi->data->data(), rows, din);
        MutMap<T>(gw, din, dout).noalias() += mx.transpose() * g;
      }
      if (T* gb = grad_ptr(bi)) {
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb, dout) += g.colwise().sum();
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  auto out = tape.make_output(x.shape(), needs_grad(x));
  const std::size_t n = x.size();
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), n] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      const T* px = xi->data->data();
      for (std::size_t i = 0; i < n; ++i)
        if (px[i] > T(0)) gx[i] += g[i];
    });
  }
  return out;
}

namespace {
template <class T>
constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2/pi)
template <class T>
constexpr T kGeluA = T(0.044715);
}  // namespace

template <class T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x) {
  auto out = tape.make_output(x.shape(), needs_grad(x));
  const std::size_t n = x.size();
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t i = 0; i < n; ++i) {
    const T v = px[i];
    po[i] = T(0.5) * v * (T(1) + std::tanh(kGeluC<T> * (v + kGeluA<T> * v * v * v)));
  }
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), n] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      const T* px = xi->data->data();
      for (std::size_t i = 0; i < n; ++i) {
        const T v = px[i];
        const T t = std::tanh(kGeluC<T> * (v + kGeluA<T> * v * v * v));
        const T dt = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * v * v);
        gx[i] += g[i] * (T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * dt);
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits,
                        std::size_t label) {
  const auto [rows, classes] = as_matrix("cross_entropy", logits.shape());
  if (rows != 1) throw ShapeError("cross_entropy: expected a single row of logits, got " + shape_string(logits.shape()));
  if (label >= classes) {
    throw IndexError("cross_entropy: label " + std::to_string(label) +
                     " out of range for " + std::to_string(classes) + " classes");
  }
  const T* pl = data_ptr(logits);
  T mx = pl[0];
  for (std::size_t c = 0; c < classes; ++c) {
    if (std::isnan(pl[c])) throw NumericError("cross_entropy: NaN logit");
    mx = std::max(mx, pl[c]);
  }
  auto probs = std::make_shared<std::vector<T>>(classes);
  T denom = T(0);
  for (std::size_t c = 0; c < classes; ++c) {
    (*probs)[c] = std::exp(pl[c] - mx);
    denom += (*probs)[c];
  }
  for (auto& p : *probs) p /= denom;
  auto out = tape.make_output(Shape{}, needs_grad(logits));
  out.mutable_data()[0] = std::log(denom) + mx - pl[label];
  if (out.requires_grad()) {
    tape.record([li = logits.impl(), oi = out.impl(), probs, label, classes] {
      T* gl = grad_ptr(li);
      const T g = oi->grad[0];
      for (std::size_t c = 0; c < classes; ++c) {
        gl[c] += g * ((*probs)[c] - (c == label ? T(1) : T(0)));
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> concat_rows(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().shape().back();
  std::size_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_rank("concat_rows", p.shape(), 2);
    if (p.dim(1) != cols) shape_mismatch("concat_rows", parts.front().shape(), p.shape());
    rows += p.dim(0);
    rg = rg || needs_grad(p);
  }
  auto out = tape.make_output(Shape{rows, cols}, rg);
  T* po = out_ptr(out);
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), po);
    po += p.size();
  }
  if (out.requires_grad()) {
    std::vector<ImplPtr<T>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    tape.record([impls = std::move(impls), oi = out.impl()] {
      const T* g = oi->grad.data();
      for (const auto& pi : impls) {
        const std::size_t n = pi->data->size();
        if (T* gp = grad_ptr(pi)) for (std::size_t i = 0; i < n; ++i) gp[i] += g[i];
        g += n;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> repeat_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t times) {
  require_rank("repeat_rows", x.shape(), 2);
  const std::size_t rows = x.dim(0), d = x.dim(1);
  auto out = tape.make_output(Shape{rows * times, d}, needs_grad(x));
  const T* px = data_ptr(x);
  T* po = out_ptr(out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < times; ++t)
      std::copy_n(px + r * d, d, po + (r * times + t) * d);
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), rows, times, d] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < times; ++t)
          for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[(r * times + t) * d + c];
    });
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(Tape<T>& tape, const Tensor<T>& x, std::size_t begin,
                     std::size_t end) {
  require_rank("slice_rows", x.shape(), 2);
  const std::size_t d = x.dim(1);
  if (begin > end || end > x.dim(0)) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") outside " + shape_string(x.shape()));
  }
  auto out = tape.make_output(Shape{end - begin, d}, needs_grad(x));
  std::copy_n(data_ptr(x) + begin * d, (end - begin) * d, out_ptr(out));
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl(), begin, d] {
      T* gx = grad_ptr(xi) + begin * d;
      const T* g = oi->grad.data();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) shape_mismatch("reshape", x.shape(), shape);
  auto out = tape.make_output(std::move(shape), needs_grad(x));
  std::copy(x.data().begin(), x.data().end(), out_ptr(out));
  if (out.requires_grad()) {
    tape.record([xi = x.impl(), oi = out.impl()] {
      T* gx = grad_ptr(xi);
      const T* g = oi->grad.data();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

#define STEP_INSTANTIATE_OPS(T)                                                \
  template Tensor<T> matmul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                     \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax(Tape<T>&, const Tensor<T>&, std::size_t);         \
  template Tensor<T> scaled_dot_attention(Tape<T>&, const Tensor<T>&,          \
                                          const Tensor<T>&, const Tensor<T>&,  \
                                          Tensor<T>*);                         \
  template Tensor<T> split_heads(Tape<T>&, const Tensor<T>&, std::size_t);     \
  template Tensor<T> merge_heads(Tape<T>&, const Tensor<T>&);                  \
  template Tensor<T> mean_pool(Tape<T>&, const Tensor<T>&);                    \
  template Tensor<T> layer_norm(Tape<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                const Tensor<T>&, T);                          \
  template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&,      \
                            const Tensor<T>&);                                 \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> gelu(Tape<T>&, const Tensor<T>&);                         \
  template Tensor<T> cross_entropy(Tape<T>&, const Tensor<T>&, std::size_t);   \
  template Tensor<T> concat_rows(Tape<T>&, const std::vector<Tensor<T>>&);     \
  template Tensor<T> repeat_rows(Tape<T>&, const Tensor<T>&, std::size_t);     \
  template Tensor<T> slice_rows(Tape<T>&, const Tensor<T>&, std::size_t,       \
                                std::size_t);                                  \
  template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);

STEP_INSTANTIATE_OPS(float)
STEP_INSTANTIATE_OPS(double)

}  // namespace step::ops
