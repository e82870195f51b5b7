#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "strokeseg/autodiff.hpp"

namespace strokeseg {
namespace {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Tape& tape_of(Var v) {
  require(v.valid(), ErrorKind::kInvalidArgument, "operation on an empty variable");
  return *v.tape;
}

void same_tape(Var a, Var b) {
  require(a.tape == b.tape, ErrorKind::kInvalidArgument, "operands live on different tapes");
}

void add_into(Tensor& dst, const Tensor& src) {
  real* d = dst.data();
  const real* s = src.data();
  for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += s[i];
}

struct ConvGeometry {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int ho, wo;

  int k() const { return cin * kh * kw; }
  long p() const { return static_cast<long>(ho) * wo; }
  long cols() const { return n * p(); }
};

// Column j of the virtual im2col matrix is output pixel (j / p, (j % p) / wo,
// j % wo). Chunks of columns are materialized so that the K x len block stays
// cache resident.
long chunk_columns(const ConvGeometry& g) {
  constexpr long kTargetElems = 1L << 16;
  return std::max(64L, kTargetElems / std::max(1, g.k()));
}

template <typename Visit>
void for_each_segment(const ConvGeometry& g, long j0, long j1, Visit visit) {
  long j = j0;
  while (j < j1) {
    const long b = j / g.p();
    const long pix = j % g.p();
    const int oy = static_cast<int>(pix / g.wo);
    const int ox = static_cast<int>(pix % g.wo);
    const int len = static_cast<int>(std::min<long>(j1 - j, g.wo - ox));
    visit(static_cast<int>(b), oy, ox, len, j - j0);
    j += len;
  }
}

void im2col(const ConvGeometry& g, const real* x, long j0, long j1, real* cols) {
  const long len = j1 - j0;
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        real* row = cols + ((static_cast<long>(ci) * g.kh + ky) * g.kw + kx) * len;
        for_each_segment(g, j0, j1, [&](int b, int oy, int ox, int n, long off) {
          real* out = row + off;
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + n, real(0));
            return;
          }
          const real* in = x + ((static_cast<long>(b) * g.cin + ci) * g.h + iy) * g.w;
          for (int t = 0; t < n; ++t) {
            const int ix = (ox + t) * g.stride - g.pad + kx;
            out[t] = (ix >= 0 && ix < g.w) ? in[ix] : real(0);
          }
        });
      }
}

void col2im_add(const ConvGeometry& g, const real* cols, long j0, long j1, real* dx) {
  const long len = j1 - j0;
  for (int ci = 0; ci < g.cin; ++ci)
    for (int ky = 0; ky < g.kh; ++ky)
      for (int kx = 0; kx < g.kw; ++kx) {
        const real* row = cols + ((static_cast<long>(ci) * g.kh + ky) * g.kw + kx) * len;
        for_each_segment(g, j0, j1, [&](int b, int oy, int ox, int n, long off) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) return;
          const real* in = row + off;
          real* out = dx + ((static_cast<long>(b) * g.cin + ci) * g.h + iy) * g.w;
          for (int t = 0; t < n; ++t) {
            const int ix = (ox + t) * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) out[ix] += in[t];
          }
        });
      }
}

// Gathers rows [0, c) of columns [j0, j1) from a batch-major (n, c, p) tensor
// into a c x len block, or scatters (adds) the block back.
void gather_columns(const ConvGeometry& g, int c, const real* src, long j0, long j1, real* dst) {
  const long len = j1 - j0;
  long j = j0;
  while (j < j1) {
    const long b = j / g.p(), pix = j % g.p();
    const long n = std::min(j1 - j, g.p() - pix);
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(src + (b * c + ch) * g.p() + pix, n, dst + ch * len + (j - j0));
    j += n;
  }
}

void scatter_columns(const ConvGeometry& g, int c, const real* src, long j0, long j1, real* dst,
                     bool accumulate) {
  const long len = j1 - j0;
  long j = j0;
  while (j < j1) {
    const long b = j / g.p(), pix = j % g.p();
    const long n = std::min(j1 - j, g.p() - pix);
    for (int ch = 0; ch < c; ++ch) {
      const real* s = src + ch * len + (j - j0);
      real* d = dst + (b * c + ch) * g.p() + pix;
      if (accumulate) {
        for (long t = 0; t < n; ++t) d[t] += s[t];
      } else {
        std::copy_n(s, n, d);
      }
    }
    j += n;
  }
}

// Reusable scratch buffers for the chunked convolution.
std::vector<real>& scratch(int slot, std::size_t size) {
  thread_local std::vector<real> buffers[3];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, int stride, int pad) {
  Tape& tape = tape_of(x);
  same_tape(x, weight);
  same_tape(x, bias);
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  require(stride >= 1, ErrorKind::kInvalidArgument, "conv2d: stride must be >= 1");
  require(pad >= 0, ErrorKind::kInvalidArgument, "conv2d: pad must be >= 0");
  require(xs.c == ws.c, ErrorKind::kShape,
          "conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
              " channels but weight " + ws.str() + " expects " + std::to_string(ws.c));
  require(bias.value().numel() == static_cast<std::size_t>(ws.n), ErrorKind::kShape,
          "conv2d: bias has " + std::to_string(bias.value().numel()) + " entries, expected " +
              std::to_string(ws.n));
  const int ho = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int wo = (xs.w + 2 * pad - ws.w) / stride + 1;
  require(xs.h + 2 * pad >= ws.h && xs.w + 2 * pad >= ws.w && ho > 0 && wo > 0,
          ErrorKind::kShape,
          "conv2d: non-positive output size for input " + xs.str() + " and kernel " + ws.str());

  const ConvGeometry g{xs.n, xs.c, xs.h, xs.w, ws.n, ws.h, ws.w, stride, pad, ho, wo};
  const bool pointwise = g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0;
  const long chunk = chunk_columns(g);

  Tensor out({g.n, g.cout, ho, wo});
  ConstMatMap wm(weight.value().data(), g.cout, g.k());
  const real* bias_data = bias.value().data();
  for (long j0 = 0; j0 < g.cols(); j0 += chunk) {
    const long j1 = std::min(g.cols(), j0 + chunk), len = j1 - j0;
    auto& cols = scratch(0, static_cast<std::size_t>(g.k()) * len);
    if (pointwise) {
      gather_columns(g, g.cin, x.value().data(), j0, j1, cols.data());
    } else {
      im2col(g, x.value().data(), j0, j1, cols.data());
    }
    auto& res = scratch(1, static_cast<std::size_t>(g.cout) * len);
    MatMap rm(res.data(), g.cout, len);
    rm.noalias() = wm * ConstMatMap(cols.data(), g.k(), len);
    for (int co = 0; co < g.cout; ++co) {
      real* row = res.data() + co * len;
      const real bv = bias_data[co];
      for (long i = 0; i < len; ++i) row[i] += bv;
    }
    scatter_columns(g, g.cout, res.data(), j0, j1, out.data(), false);
  }

  return tape.record(
      "conv2d", {x.id, weight.id, bias.id}, std::move(out),
      [g, pointwise, chunk](Tape& t, int self) {
        const int xi = t.input(self, 0), wi = t.input(self, 1), bi = t.input(self, 2);
        const bool need_x = t.requires_grad(xi), need_w = t.requires_grad(wi),
                   need_b = t.requires_grad(bi);
        const Tensor& dy = t.grad_of(self);
        if (need_b) {
          std::vector<double> acc(g.cout, 0.0);
          for (int b = 0; b < g.n; ++b)
            for (int co = 0; co < g.cout; ++co) {
              const real* row = dy.data() + (static_cast<long>(b) * g.cout + co) * g.p();
              double s = 0;
              for (long i = 0; i < g.p(); ++i) s += row[i];
              acc[co] += s;
            }
          real* db = t.grad_buffer(bi).data();
          for (int co = 0; co < g.cout; ++co) db[co] += static_cast<real>(acc[co]);
        }
        if (!need_w && !need_x) return;
        ConstMatMap wm(t.value_of(wi).data(), g.cout, g.k());
        real* dw = need_w ? t.grad_buffer(wi).data() : nullptr;
        real* dx = need_x ? t.grad_buffer(xi).data() : nullptr;
        const real* xv = t.value_of(xi).data();
        for (long j0 = 0; j0 < g.cols(); j0 += chunk) {
          const long j1 = std::min(g.cols(), j0 + chunk), len = j1 - j0;
          auto& dyc = scratch(1, static_cast<std::size_t>(g.cout) * len);
          gather_columns(g, g.cout, dy.data(), j0, j1, dyc.data());
          ConstMatMap dym(dyc.data(), g.cout, len);
          if (need_w) {
            auto& cols = scratch(0, static_cast<std::size_t>(g.k()) * len);
            if (pointwise) {
              gather_columns(g, g.cin, xv, j0, j1, cols.data());
            } else {
              im2col(g, xv, j0, j1, cols.data());
            }
            MatMap(dw, g.cout, g.k()).noalias() +=
                dym * ConstMatMap(cols.data(), g.k(), len).transpose();
          }
          if (need_x) {
            auto& dcols = scratch(2, static_cast<std::size_t>(g.k()) * len);
            MatMap(dcols.data(), g.k(), len).noalias() = wm.transpose() * dym;
            if (pointwise) {
              scatter_columns(g, g.cin, dcols.data(), j0, j1, dx, true);
            } else {
              col2im_add(g, dcols.data(), j0, j1, dx);
            }
          }
        }
      });
}

Var batchnorm2d(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                BatchNormMode mode, const BatchNormOptions& options) {
  Tape& tape = tape_of(x);
  same_tape(x, gamma);
  same_tape(x, beta);
  const Shape s = x.shape();
  const auto c = static_cast<std::size_t>(s.c);
  require(gamma.value().numel() == c && beta.value().numel() == c, ErrorKind::kShape,
          "batchnorm2d: gamma/beta length must equal channel count " + std::to_string(s.c));
  require(running_mean.numel() == c && running_var.numel() == c, ErrorKind::kShape,
          "batchnorm2d: running statistics length must equal channel count");
  const std::size_t plane = s.plane();
  const std::size_t count = plane * s.n;
  require(mode == BatchNormMode::kEval || count > 0, ErrorKind::kShape,
          "batchnorm2d: empty batch");

  std::vector<real> mean(c), invstd(c);
  const bool batch_stats = mode != BatchNormMode::kEval;
  const Tensor& xv = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (batch_stats) {
      double s1 = 0;
      for (int b = 0; b < s.n; ++b) {
        const real* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s1 += p[i];
      }
      const double m = s1 / static_cast<double>(count);
      double s2 = 0;
      for (int b = 0; b < s.n; ++b) {
        const real* p = xv.data() + (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          s2 += d * d;
        }
      }
      const double var = s2 / static_cast<double>(count);
      mean[ch] = static_cast<real>(m);
      invstd[ch] = static_cast<real>(1.0 / std::sqrt(var + options.epsilon));
      if (mode == BatchNormMode::kTrain) {
        const double unbiased = count > 1 ? s2 / static_cast<double>(count - 1) : var;
        running_mean[ch] = static_cast<real>((1.0 - options.momentum) * running_mean[ch] +
                                             options.momentum * m);
        running_var[ch] = static_cast<real>((1.0 - options.momentum) * running_var[ch] +
                                            options.momentum * unbiased);
      }
    } else {
      mean[ch] = running_mean[ch];
      invstd[ch] = static_cast<real>(1.0 / std::sqrt(double(running_var[ch]) + options.epsilon));
    }
  }

  Tensor xhat(s);
  Tensor out(s);
  const real* g = gamma.value().data();
  const real* bt = beta.value().data();
  for (int b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * plane;
      const real m = mean[ch], is = invstd[ch], gv = g[ch], bv = bt[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const real xh = (xv[off + i] - m) * is;
        xhat[off + i] = xh;
        out[off + i] = gv * xh + bv;
      }
    }
  }

  return tape.record(
      "batchnorm2d", {x.id, gamma.id, beta.id}, std::move(out),
      [xhat = std::move(xhat), invstd = std::move(invstd), batch_stats, s, c, plane,
       count](Tape& t, int self) {
        const int xi = t.input(self, 0), gi = t.input(self, 1), bi = t.input(self, 2);
        const Tensor& dy = t.grad_of(self);
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (int b = 0; b < s.n; ++b)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * plane;
            double a1 = 0, a2 = 0;
            for (std::size_t i = 0; i < plane; ++i) {
              a1 += dy[off + i];
              a2 += static_cast<double>(dy[off + i]) * xhat[off + i];
            }
            sum_dy[ch] += a1;
            sum_dy_xhat[ch] += a2;
          }
        if (t.requires_grad(gi)) {
          Tensor& dg = t.grad_buffer(gi);
          for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += static_cast<real>(sum_dy_xhat[ch]);
        }
        if (t.requires_grad(bi)) {
          Tensor& db = t.grad_buffer(bi);
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += static_cast<real>(sum_dy[ch]);
        }
        if (t.requires_grad(xi)) {
          const Tensor& gv = t.value_of(gi);
          Tensor& dx = t.grad_buffer(xi);
          const double inv_count = 1.0 / static_cast<double>(count);
          for (int b = 0; b < s.n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t off = (b * c + ch) * plane;
              const real k = gv[ch] * invstd[ch];
              if (batch_stats) {
                const real mdy = static_cast<real>(sum_dy[ch] * inv_count);
                const real mdyx = static_cast<real>(sum_dy_xhat[ch] * inv_count);
                for (std::size_t i = 0; i < plane; ++i)
                  dx[off + i] += k * (dy[off + i] - mdy - xhat[off + i] * mdyx);
              } else {
                for (std::size_t i = 0; i < plane; ++i) dx[off + i] += k * dy[off + i];
              }
            }
        }
      });
}

namespace {

template <typename Fwd, typename Deriv>
Var elementwise(const char* name, Var x, Fwd fwd, Deriv deriv) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  return tape.record(name, {x.id}, std::move(out), [deriv](Tape& t, int self) {
    const int xi = t.input(self, 0);
    const Tensor& xv = t.value_of(xi);
    const Tensor& yv = t.value_of(self);
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var relu(Var x) {
  return elementwise(
      "relu", x, [](real v) { return v < real(0) ? real(0) : v; },
      [](real v, real) { return v > real(0) ? real(1) : real(0); });
}

Var leaky_relu(Var x, real slope) {
  return elementwise(
      "leaky_relu", x, [slope](real v) { return v < real(0) ? slope * v : v; },
      [slope](real v, real) { return v > real(0) ? real(1) : slope; });
}

Var sigmoid(Var x) {
  return elementwise(
      "sigmoid", x,
      [](real v) {
        if (v >= real(0)) return real(1) / (real(1) + std::exp(-v));
        const real e = std::exp(v);
        return e / (real(1) + e);
      },
      [](real, real y) { return y * (real(1) - y); });
}

Var softmax_channels(Var x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  const Shape s = xv.shape();
  const std::size_t plane = s.plane();
  Tensor out(s);
  for (int b = 0; b < s.n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      real mx = -std::numeric_limits<real>::infinity();
      for (int ch = 0; ch < s.c; ++ch) mx = std::max(mx, xv[base + ch * plane + i]);
      double z = 0;
      for (int ch = 0; ch < s.c; ++ch) {
        const real e = std::exp(xv[base + ch * plane + i] - mx);
        out[base + ch * plane + i] = e;
        z += e;
      }
      const real inv = static_cast<real>(1.0 / z);
      for (int ch = 0; ch < s.c; ++ch) out[base + ch * plane + i] *= inv;
    }
  }
  return tape.record("softmax_channels", {x.id}, std::move(out), [s, plane](Tape& t, int self) {
    const Tensor& y = t.value_of(self);
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_buffer(t.input(self, 0));
    for (int b = 0; b < s.n; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * s.c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double dot = 0;
        for (int ch = 0; ch < s.c; ++ch)
          dot += static_cast<double>(dy[base + ch * plane + i]) * y[base + ch * plane + i];
        for (int ch = 0; ch < s.c; ++ch) {
          const std::size_t k = base + ch * plane + i;
          dx[k] += y[k] * (dy[k] - static_cast<real>(dot));
        }
      }
    }
  });
}

PoolResult maxpool2d_indices(Var x, int k) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  require(k >= 1, ErrorKind::kInvalidArgument, "maxpool2d: kernel must be >= 1");
  require(s.h % k == 0 && s.w % k == 0, ErrorKind::kShape,
          "maxpool2d: spatial dims " + s.str() + " not divisible by " + std::to_string(k) +
              " (pad the input first)");
  IndexMap idx;
  idx.pooled = {s.n, s.c, s.h / k, s.w / k};
  idx.in_h = s.h;
  idx.in_w = s.w;
  idx.index.resize(idx.pooled.numel());
  Tensor out(idx.pooled);
  const Tensor& xv = x.value();
  const int ho = s.h / k, wo = s.w / k;
  std::size_t o = 0;
  for (int b = 0; b < s.n; ++b)
    for (int ch = 0; ch < s.c; ++ch) {
      const real* p = xv.data() + (static_cast<std::size_t>(b) * s.c + ch) * s.plane();
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox, ++o) {
          int best = oy * k * s.w + ox * k;
          real bv = p[best];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int f = (oy * k + ky) * s.w + ox * k + kx;
              if (p[f] > bv) {
                bv = p[f];
                best = f;
              }
            }
          out[o] = bv;
          idx.index[o] = best;
        }
    }
  const std::vector<std::int32_t> saved = idx.index;
  Var v = tape.record("maxpool2d", {x.id}, std::move(out), [saved, s](Tape& t, int self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_buffer(t.input(self, 0));
    const std::size_t pooled_plane = dy.shape().plane();
    for (std::size_t o = 0; o < dy.numel(); ++o) {
      const std::size_t plane_id = o / pooled_plane;
      dx[plane_id * s.plane() + saved[o]] += dy[o];
    }
  });
  return {v, std::move(idx)};
}

Var max_unpool2d(Var y, const IndexMap& indices, int out_h, int out_w) {
  Tape& tape = tape_of(y);
  const Shape s = y.shape();
  require(indices.pooled == s, ErrorKind::kShape,
          "max_unpool2d: index map shape " + indices.pooled.str() + " does not match input " +
              s.str());
  require(indices.in_h == out_h && indices.in_w == out_w, ErrorKind::kShape,
          "max_unpool2d: index map was recorded for a different output size");
  require(indices.index.size() == s.numel(), ErrorKind::kShape,
          "max_unpool2d: index map has wrong length");
  const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
  for (std::int32_t i : indices.index)
    require(i >= 0 && i < plane, ErrorKind::kInvalidArgument,
            "max_unpool2d: index " + std::to_string(i) + " out of range");
  Tensor out({s.n, s.c, out_h, out_w});
  const std::size_t pooled_plane = s.plane();
  const Tensor& yv = y.value();
  for (std::size_t o = 0; o < yv.numel(); ++o)
    out[(o / pooled_plane) * plane + indices.index[o]] += yv[o];
  return tape.record("max_unpool2d", {y.id}, std::move(out),
                     [idx = indices.index, pooled_plane, plane](Tape& t, int self) {
                       const Tensor& dout = t.grad_of(self);
                       Tensor& dy = t.grad_buffer(t.input(self, 0));
                       for (std::size_t o = 0; o < dy.numel(); ++o)
                         dy[o] += dout[(o / pooled_plane) * plane + idx[o]];
                     });
}

Var concat_channels(Var a, Var b) {
  Tape& tape = tape_of(a);
  same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, ErrorKind::kShape,
          "concat_channels: mismatched shapes " + sa.str() + " and " + sb.str());
  Tensor out({sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane(), pb = sb.c * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + n * pa, pa, out.data() + n * (pa + pb));
    std::copy_n(b.value().data() + n * pb, pb, out.data() + n * (pa + pb) + pa);
  }
  return tape.record("concat_channels", {a.id, b.id}, std::move(out),
                     [pa, pb, n = sa.n](Tape& t, int self) {
                       const Tensor& dy = t.grad_of(self);
                       const int ai = t.input(self, 0), bi = t.input(self, 1);
                       if (t.requires_grad(ai)) {
                         Tensor& da = t.grad_buffer(ai);
                         for (int k = 0; k < n; ++k)
                           for (std::size_t i = 0; i < pa; ++i) da[k * pa + i] += dy[k * (pa + pb) + i];
                       }
                       if (t.requires_grad(bi)) {
                         Tensor& db = t.grad_buffer(bi);
                         for (int k = 0; k < n; ++k)
                           for (std::size_t i = 0; i < pb; ++i)
                             db[k * pb + i] += dy[k * (pa + pb) + pa + i];
                       }
                     });
}

Var cross_entropy(Var logits, const LabelMap& target) {
  Tape& tape = tape_of(logits);
  const Shape s = logits.shape();
  require(target.n == s.n && target.h == s.h && target.w == s.w, ErrorKind::kShape,
          "cross_entropy: label map (" + std::to_string(target.n) + "," +
              std::to_string(target.h) + "," + std::to_string(target.w) +
              ") does not match logits " + s.str());
  for (std::uint8_t l : target.labels)
    require(l < s.c, ErrorKind::kInvalidArgument,
            "cross_entropy: label " + std::to_string(l) + " outside [0," +
                std::to_string(s.c - 1) + "]");
  const std::size_t plane = s.plane();
  const Tensor& xv = logits.value();
  double total = 0;
  for (int b = 0; b < s.n; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int ch = 0; ch < s.c; ++ch) mx = std::max(mx, double(xv[base + ch * plane + i]));
      double z = 0;
      for (int ch = 0; ch < s.c; ++ch) z += std::exp(double(xv[base + ch * plane + i]) - mx);
      const int t = target.labels[b * plane + i];
      total += mx + std::log(z) - double(xv[base + t * plane + i]);
    }
  }
  const double m = static_cast<double>(s.n) * plane;
  return tape.record(
      "cross_entropy", {logits.id}, Tensor::scalar(static_cast<real>(total / m)),
      [labels = target.labels, s, plane, m](Tape& t, int self) {
        const real up = t.grad_of(self)[0];
        const int xi = t.input(self, 0);
        const Tensor& xv = t.value_of(xi);
        Tensor& dx = t.grad_buffer(xi);
        const double k = up / m;
        std::vector<double> e(s.c);
        for (int b = 0; b < s.n; ++b) {
          const std::size_t base = static_cast<std::size_t>(b) * s.c * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int ch = 0; ch < s.c; ++ch) mx = std::max(mx, double(xv[base + ch * plane + i]));
            double z = 0;
            for (int ch = 0; ch < s.c; ++ch) {
              e[ch] = std::exp(double(xv[base + ch * plane + i]) - mx);
              z += e[ch];
            }
            const int tl = labels[b * plane + i];
            for (int ch = 0; ch < s.c; ++ch)
              dx[base + ch * plane + i] +=
                  static_cast<real>(k * (e[ch] / z - (ch == tl ? 1.0 : 0.0)));
          }
        }
      });
}

Var binary_cross_entropy(Var p, const Tensor& target) {
  Tape& tape = tape_of(p);
  const Tensor& pv = p.value();
  require(pv.numel() == target.numel(), ErrorKind::kShape,
          "binary_cross_entropy: prediction " + pv.shape().str() + " vs target " +
              target.shape().str());
  require(pv.numel() > 0, ErrorKind::kShape, "binary_cross_entropy: empty input");
  static constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double total = 0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    const double q = std::clamp(double(pv[i]), lo, hi);
    const double y = target[i];
    total -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(pv.numel());
  return tape.record("binary_cross_entropy", {p.id}, Tensor::scalar(static_cast<real>(total / n)),
                     [y = target, n](Tape& t, int self) {
                       const double up = t.grad_of(self)[0];
                       const int pi = t.input(self, 0);
                       const Tensor& pv = t.value_of(pi);
                       Tensor& dp = t.grad_buffer(pi);
                       for (std::size_t i = 0; i < pv.numel(); ++i) {
                         // Gradient evaluated at the clamped point, passed straight through.
                         const double q = std::clamp(double(pv[i]), lo, hi);
                         dp[i] += static_cast<real>(up * (q - y[i]) / (q * (1.0 - q)) / n);
                       }
                     });
}

Var global_avg_pool(Var x) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  require(plane > 0, ErrorKind::kShape, "global_avg_pool: empty spatial extent");
  Tensor out({s.n, s.c, 1, 1});
  const Tensor& xv = x.value();
  for (std::size_t k = 0; k < out.numel(); ++k) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += xv[k * plane + i];
    out[k] = static_cast<real>(acc / static_cast<double>(plane));
  }
  return tape.record("global_avg_pool", {x.id}, std::move(out), [plane](Tape& t, int self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_buffer(t.input(self, 0));
    const real inv = real(1) / static_cast<real>(plane);
    for (std::size_t k = 0; k < dy.numel(); ++k)
      for (std::size_t i = 0; i < plane; ++i) dx[k * plane + i] += dy[k] * inv;
  });
}

Var select_channel(Var x, int channel) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  require(channel >= 0 && channel < s.c, ErrorKind::kShape,
          "select_channel: channel " + std::to_string(channel) + " out of range for " + s.str());
  Tensor out({s.n, 1, s.h, s.w});
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b)
    std::copy_n(x.value().data() + (static_cast<std::size_t>(b) * s.c + channel) * plane, plane,
                out.data() + b * plane);
  return tape.record("select_channel", {x.id}, std::move(out),
                     [s, plane, channel](Tape& t, int self) {
                       const Tensor& dy = t.grad_of(self);
                       Tensor& dx = t.grad_buffer(t.input(self, 0));
                       for (int b = 0; b < s.n; ++b) {
                         real* dst = dx.data() + (static_cast<std::size_t>(b) * s.c + channel) * plane;
                         const real* src = dy.data() + b * plane;
                         for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
                       }
                     });
}

Var permute_channels(Var x, const std::vector<std::vector<int>>& perms) {
  Tape& tape = tape_of(x);
  const Shape s = x.shape();
  require(perms.size() == static_cast<std::size_t>(s.n), ErrorKind::kShape,
          "permute_channels: need one permutation per sample");
  for (const auto& p : perms) {
    require(p.size() == static_cast<std::size_t>(s.c), ErrorKind::kShape,
            "permute_channels: permutation length must equal channel count");
    std::vector<int> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < s.c; ++i)
      require(sorted[i] == i, ErrorKind::kInvalidArgument, "permute_channels: not a permutation");
  }
  const std::size_t plane = s.plane();
  Tensor out(s);
  for (int b = 0; b < s.n; ++b)
    for (int j = 0; j < s.c; ++j)
      std::copy_n(x.value().data() + (static_cast<std::size_t>(b) * s.c + perms[b][j]) * plane,
                  plane, out.data() + (static_cast<std::size_t>(b) * s.c + j) * plane);
  return tape.record("permute_channels", {x.id}, std::move(out),
                     [perms, s, plane](Tape& t, int self) {
                       const Tensor& dy = t.grad_of(self);
                       Tensor& dx = t.grad_buffer(t.input(self, 0));
                       for (int b = 0; b < s.n; ++b)
                         for (int j = 0; j < s.c; ++j) {
                           real* dst = dx.data() + (static_cast<std::size_t>(b) * s.c + perms[b][j]) * plane;
                           const real* src = dy.data() + (static_cast<std::size_t>(b) * s.c + j) * plane;
                           for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
                         }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a);
  same_tape(a, b);
  require(a.shape() == b.shape(), ErrorKind::kShape,
          "add: mismatched shapes " + a.shape().str() + " and " + b.shape().str());
  Tensor out = a.value();
  add_into(out, b.value());
  return tape.record("add", {a.id, b.id}, std::move(out), [](Tape& t, int self) {
    const Tensor& dy = t.grad_of(self);
    for (int k = 0; k < 2; ++k) {
      const int in = t.input(self, k);
      if (t.requires_grad(in)) add_into(t.grad_buffer(in), dy);
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a);
  same_tape(a, b);
  require(a.shape() == b.shape(), ErrorKind::kShape,
          "mul: mismatched shapes " + a.shape().str() + " and " + b.shape().str());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return tape.record("mul", {a.id, b.id}, std::move(out), [](Tape& t, int self) {
    const Tensor& dy = t.grad_of(self);
    const int ai = t.input(self, 0), bi = t.input(self, 1);
    // Read both values before touching grad buffers; a and b may be the same node.
    const Tensor av = t.value_of(ai);
    const Tensor bv = t.value_of(bi);
    if (t.requires_grad(ai)) {
      Tensor& da = t.grad_buffer(ai);
      for (std::size_t i = 0; i < da.numel(); ++i) da[i] += dy[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& db = t.grad_buffer(bi);
      for (std::size_t i = 0; i < db.numel(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var x, real factor) {
  Tape& tape = tape_of(x);
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
  return tape.record("scale", {x.id}, std::move(out), [factor](Tape& t, int self) {
    const Tensor& dy = t.grad_of(self);
    Tensor& dx = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i] * factor;
  });
}

Var sum(Var x) {
  Tape& tape = tape_of(x);
  double acc = 0;
  for (real v : x.value().values()) acc += v;
  return tape.record("sum", {x.id}, Tensor::scalar(static_cast<real>(acc)), [](Tape& t, int self) {
    const real up = t.grad_of(self)[0];
    Tensor& dx = t.grad_buffer(t.input(self, 0));
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += up;
  });
}

Var detach(Var x) { return tape_of(x).constant(x.value()); }

}  // namespace strokeseg
