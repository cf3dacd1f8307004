#include "btsnet/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "btsnet/errors.hpp"

namespace btsnet::ops {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutMap = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col scratch per chunk, in elements.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct ConvGeometry {
  int channels, height, width;
  int kh, kw;
  int out_h, out_w;
  Conv2dOptions opt;

  int kdim() const { return channels * kh * kw; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
  }
  int rows_per_chunk() const {
    const std::size_t per_row = static_cast<std::size_t>(kdim()) * out_w;
    return static_cast<int>(
        std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1),
                                1, static_cast<std::size_t>(out_h)));
  }
};

// Columns for output rows [r0, r1) of one sample: (C*kh*kw) x ((r1-r0)*out_w).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, int r0, int r1, T* cols) {
  const int span = (r1 - r0) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        T* dst = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * span;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * g.opt.stride - g.opt.padding + ki * g.opt.dilation;
          T* row = dst + static_cast<std::size_t>(oy - r0) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.opt.stride - g.opt.padding + kj * g.opt.dilation;
            row[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, int r0, int r1, T* dx) {
  const int span = (r1 - r0) * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* src = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * span;
        for (int oy = r0; oy < r1; ++oy) {
          const int iy = oy * g.opt.stride - g.opt.padding + ki * g.opt.dilation;
          if (iy < 0 || iy >= g.height) continue;
          const T* row = src + static_cast<std::size_t>(oy - r0) * g.out_w;
          T* dst = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.opt.stride - g.opt.padding + kj * g.opt.dilation;
            if (ix >= 0 && ix < g.width) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

struct Broadcast {
  Shape out;
  std::size_t sa[4], sb[4];
};

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const int ad[4] = {a.n, a.c, a.h, a.w};
  const int bd[4] = {b.n, b.c, b.h, b.w};
  int od[4];
  for (int i = 0; i < 4; ++i) {
    if (ad[i] != bd[i] && ad[i] != 1 && bd[i] != 1) {
      throw ConfigError(std::string(op) + ": incompatible shapes " + a.str() +
                        " and " + b.str());
    }
    od[i] = std::max(ad[i], bd[i]);
  }
  Broadcast r;
  r.out = Shape{od[0], od[1], od[2], od[3]};
  std::size_t stride_a = 1, stride_b = 1;
  for (int i = 3; i >= 0; --i) {
    r.sa[i] = ad[i] == 1 ? 0 : stride_a;
    r.sb[i] = bd[i] == 1 ? 0 : stride_b;
    stride_a *= ad[i];
    stride_b *= bd[i];
  }
  return r;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  std::size_t o = 0;
  for (int n = 0; n < bc.out.n; ++n)
    for (int c = 0; c < bc.out.c; ++c)
      for (int h = 0; h < bc.out.h; ++h) {
        const std::size_t ia = n * bc.sa[0] + c * bc.sa[1] + h * bc.sa[2];
        const std::size_t ib = n * bc.sb[0] + c * bc.sb[1] + h * bc.sb[2];
        for (int w = 0; w < bc.out.w; ++w, ++o) {
          f(o, ia + w * bc.sa[3], ib + w * bc.sb[3]);
        }
      }
}

struct AxisWeights {
  std::vector<int> i0, i1;
  std::vector<double> lambda;
};

AxisWeights bilinear_axis(int in, int out) {
  AxisWeights a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.lambda.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    a.i0[i] = lo;
    a.i1[i] = std::min(lo + 1, in - 1);
    a.lambda[i] = src - lo;
  }
  return a;
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int padding, int dilation) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              Conv2dOptions options) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.c != xs.c) {
    throw ConfigError("conv2d: input has " + std::to_string(xs.c) +
                      " channels but weights expect " + std::to_string(ws.c));
  }
  if (bias.defined() && bias.shape() != Shape{1, ws.n, 1, 1}) {
    throw ConfigError("conv2d: bias shape " + bias.shape().str());
  }
  ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, 0, 0, options};
  g.out_h = conv_out_extent(xs.h, ws.h, options.stride, options.padding, options.dilation);
  g.out_w = conv_out_extent(xs.w, ws.w, options.stride, options.padding, options.dilation);
  if (g.out_h < 1 || g.out_w < 1) {
    throw PreconditionError("conv2d: input " + xs.str() + " too small for kernel");
  }
  const int out_ch = ws.n;
  const int kdim = g.kdim();
  const std::size_t out_plane = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t in_sample = static_cast<std::size_t>(xs.c) * xs.h * xs.w;

  Tensor<T> out(Shape{xs.n, out_ch, g.out_h, g.out_w});
  const ConstMap<T> wmat(weight.value().data(), out_ch, kdim, Eigen::OuterStride<>(kdim));
  const int chunk = g.rows_per_chunk();
  std::vector<T> cols;
  if (!g.pointwise()) cols.resize(static_cast<std::size_t>(kdim) * chunk * g.out_w);

  for (int n = 0; n < xs.n; ++n) {
    const T* xn = x.value().data() + n * in_sample;
    T* on = out.data() + n * static_cast<std::size_t>(out_ch) * out_plane;
    for (int r0 = 0; r0 < g.out_h; r0 += chunk) {
      const int r1 = std::min(g.out_h, r0 + chunk);
      const int span = (r1 - r0) * g.out_w;
      MutMap<T> oc(on + static_cast<std::size_t>(r0) * g.out_w, out_ch, span,
                   Eigen::OuterStride<>(out_plane));
      if (g.pointwise()) {
        const ConstMap<T> xc(xn + static_cast<std::size_t>(r0) * g.out_w, kdim, span,
                             Eigen::OuterStride<>(out_plane));
        oc.noalias() = wmat * xc;
      } else {
        im2col(xn, g, r0, r1, cols.data());
        const ConstMap<T> cc(cols.data(), kdim, span, Eigen::OuterStride<>(span));
        oc.noalias() = wmat * cc;
      }
    }
    if (bias.defined()) {
      const T* b = bias.value().data();
      for (int o = 0; o < out_ch; ++o) {
        T* p = on + o * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) p[i] += b[o];
      }
    }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs), [g, out_ch, kdim, out_plane, in_sample](Node<T>& self) {
    Node<T>& xin = *self.inputs[0];
    Node<T>& win = *self.inputs[1];
    const Tensor<T>& gout = self.grad;
    const int batch = gout.n();
    const ConstMap<T> wmat(win.value.data(), out_ch, kdim, Eigen::OuterStride<>(kdim));
    T* dw = win.requires_grad ? win.grad_buffer().data() : nullptr;
    T* dx = xin.requires_grad ? xin.grad_buffer().data() : nullptr;
    const int chunk = g.rows_per_chunk();
    std::vector<T> cols, dcols;
    if (!g.pointwise()) {
      cols.resize(static_cast<std::size_t>(kdim) * chunk * g.out_w);
      if (dx) dcols.resize(cols.size());
    }
    for (int n = 0; n < batch; ++n) {
      const T* xn = xin.value.data() + n * in_sample;
      const T* gn = gout.data() + n * static_cast<std::size_t>(out_ch) * out_plane;
      for (int r0 = 0; r0 < g.out_h; r0 += chunk) {
        const int r1 = std::min(g.out_h, r0 + chunk);
        const int span = (r1 - r0) * g.out_w;
        const ConstMap<T> gc(gn + static_cast<std::size_t>(r0) * g.out_w, out_ch, span,
                             Eigen::OuterStride<>(out_plane));
        if (g.pointwise()) {
          if (dw) {
            const ConstMap<T> xc(xn + static_cast<std::size_t>(r0) * g.out_w, kdim, span,
                                 Eigen::OuterStride<>(out_plane));
            MutMap<T>(dw, out_ch, kdim, Eigen::OuterStride<>(kdim)).noalias() += gc * xc.transpose();
          }
          if (dx) {
            MutMap<T> dxc(dx + n * in_sample + static_cast<std::size_t>(r0) * g.out_w, kdim, span,
                          Eigen::OuterStride<>(out_plane));
            dxc.noalias() += wmat.transpose() * gc;
          }
          continue;
        }
        if (dw) {
          im2col(xn, g, r0, r1, cols.data());
          const ConstMap<T> cc(cols.data(), kdim, span, Eigen::OuterStride<>(span));
          MutMap<T>(dw, out_ch, kdim, Eigen::OuterStride<>(kdim)).noalias() += gc * cc.transpose();
        }
        if (dx) {
          MutMap<T> dc(dcols.data(), kdim, span, Eigen::OuterStride<>(span));
          dc.noalias() = wmat.transpose() * gc;
          col2im_add(dcols.data(), g, r0, r1, dx + n * in_sample);
        }
      }
    }
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      T* db = self.inputs[2]->grad_buffer().data();
      for (int n = 0; n < batch; ++n)
        for (int o = 0; o < out_ch; ++o) {
          const T* p = gout.data() + (static_cast<std::size_t>(n) * out_ch + o) * out_plane;
          T acc = 0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += p[i];
          db[o] += acc;
        }
    }
  });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  Tensor<T>& running_mean, Tensor<T>& running_var,
                  bool training, double momentum, double eps) {
  const Shape s = x.shape();
  if (gamma.shape().c != s.c || beta.shape().c != s.c ||
      running_mean.shape().c != s.c) {
    throw ConfigError("batch_norm: input has " + std::to_string(s.c) +
                      " channels but layer has " + std::to_string(gamma.shape().c));
  }
  const std::size_t plane = s.plane();
  const std::size_t count = plane * s.n;
  std::vector<T> mean(s.c), inv_std(s.c);
  const T* xv = x.value().data();
  if (training) {
    for (int c = 0; c < s.c; ++c) {
      double sum = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / count;
      double sq = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / count;
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T v = (xv[off + i] - mean[c]) * inv_std[c];
        xhat[off + i] = v;
        out[off + i] = gm[c] * v + bt[c];
      }
    }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std, training, plane, count](Node<T>& self) {
    const Shape s = self.value.shape();
    const Tensor<T>& g = self.grad;
    Node<T>& xin = *self.inputs[0];
    Node<T>& gin = *self.inputs[1];
    Node<T>& bin = *self.inputs[2];
    const T* gm = gin.value.data();
    std::vector<double> sum_g(s.c, 0.0), sum_gx(s.c, 0.0);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g[c] += g[off + i];
          sum_gx[c] += g[off + i] * xhat[off + i];
        }
      }
    if (gin.requires_grad) {
      T* dg = gin.grad_buffer().data();
      for (int c = 0; c < s.c; ++c) dg[c] += static_cast<T>(sum_gx[c]);
    }
    if (bin.requires_grad) {
      T* db = bin.grad_buffer().data();
      for (int c = 0; c < s.c; ++c) db[c] += static_cast<T>(sum_g[c]);
    }
    if (!xin.requires_grad) return;
    T* dx = xin.grad_buffer().data();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const T k = gm[c] * inv_std[c];
        if (training) {
          const T mg = static_cast<T>(sum_g[c] / count);
          const T mgx = static_cast<T>(sum_gx[c] / count);
          for (std::size_t i = 0; i < plane; ++i) {
            dx[off + i] += k * (g[off + i] - mg - xhat[off + i] * mgx);
          }
        } else {
          for (std::size_t i = 0; i < plane; ++i) dx[off + i] += k * g[off + i];
        }
      }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  // NaN passes through so a diverged batch still shows up in the loss.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] <= T(0) ? T(0) : xv[i];
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (in.value[i] > T(0)) dx[i] += self.grad[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = xv[i];
    if (v >= 0) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T y = self.value[i];
      dx[i] += self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "add");
  Tensor<T> out(bc.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = av[ia] + bv[ib];
  });
  return make_result<T>(std::move(out), {a, b}, [bc](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    T* da = na.requires_grad ? na.grad_buffer().data() : nullptr;
    T* db = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    const T* g = self.grad.data();
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (da) da[ia] += g[o];
      if (db) db[ib] += g[o];
    });
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Broadcast bc = broadcast_shapes(a.shape(), b.shape(), "mul");
  Tensor<T> out(bc.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = av[ia] * bv[ib];
  });
  return make_result<T>(std::move(out), {a, b}, [bc](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    T* da = na.requires_grad ? na.grad_buffer().data() : nullptr;
    T* db = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    const T* av = na.value.data();
    const T* bv = nb.value.data();
    const T* g = self.grad.data();
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (da) da[ia] += g[o] * bv[ib];
      if (db) db[ib] += g[o] * av[ia];
    });
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  Tensor<T> out = x.value();
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f;
  return make_result<T>(std::move(out), {x}, [f](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += f * self.grad[i];
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw PreconditionError("concat_channels: no inputs");
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
      throw ConfigError("concat_channels: shape " + ps.str() +
                        " does not match " + s.str());
    }
    total += ps.c;
  }
  s.c = total;
  Tensor<T> out(s);
  const std::size_t plane = s.plane();
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    for (int n = 0; n < s.n; ++n) {
      const T* src = p.value().data() + static_cast<std::size_t>(n) * ps.c * plane;
      T* dst = out.data() + (static_cast<std::size_t>(n) * s.c + offset) * plane;
      std::copy(src, src + ps.c * plane, dst);
    }
    offsets.push_back(offset);
    offset += ps.c;
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return make_result<T>(std::move(out), std::move(inputs), [offsets, plane](Node<T>& self) {
    const Shape& s = self.value.shape();
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node<T>& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const int c = in.value.c();
      T* dx = in.grad_buffer().data();
      for (int n = 0; n < s.n; ++n) {
        const T* src = self.grad.data() + (static_cast<std::size_t>(n) * s.c + offsets[k]) * plane;
        T* dst = dx + static_cast<std::size_t>(n) * c * plane;
        for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      double acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      out.at(n, c, 0, 0) = static_cast<T>(acc / plane);
    }
  return make_result<T>(std::move(out), {x}, [plane](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    const T inv = T(1) / static_cast<T>(plane);
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      const T g = self.grad[k] * inv;
      T* p = dx + k * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += g;
    }
  });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor<T> out(s);
  const T* xv = x.value().data();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      T peak = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < s.c; ++c) peak = std::max(peak, xv[base + c * plane + i]);
      T total = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(xv[base + c * plane + i] - peak);
        out[base + c * plane + i] = e;
        total += e;
      }
      for (int c = 0; c < s.c; ++c) out[base + c * plane + i] /= total;
    }
  }
  return make_result<T>(std::move(out), {x}, [plane](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Shape& s = self.value.shape();
    T* dx = in.grad_buffer().data();
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        T dot = 0;
        for (int c = 0; c < s.c; ++c) {
          const std::size_t k = base + c * plane + i;
          dot += self.grad[k] * self.value[k];
        }
        for (int c = 0; c < s.c; ++c) {
          const std::size_t k = base + c * plane + i;
          dx[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, int target_h, int target_w) {
  const Shape s = x.shape();
  if (target_h < s.h || target_w < s.w) {
    throw PreconditionError("upsample_bilinear: target " + std::to_string(target_h) +
                            "x" + std::to_string(target_w) +
                            " is smaller than source " + s.str());
  }
  if (target_h == s.h && target_w == s.w) {
    return make_result<T>(x.value(), {x}, [](Node<T>& self) {
      Node<T>& in = *self.inputs[0];
      if (in.requires_grad) in.accumulate(self.grad);
    });
  }
  const AxisWeights ay = bilinear_axis(s.h, target_h);
  const AxisWeights ax = bilinear_axis(s.w, target_w);
  Tensor<T> out(Shape{s.n, s.c, target_h, target_w});
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = static_cast<std::size_t>(target_h) * target_w;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.value().data() + nc * in_plane;
    T* dst = out.data() + nc * out_plane;
    for (int i = 0; i < target_h; ++i) {
      const T ly = static_cast<T>(ay.lambda[i]);
      const T* r0 = src + static_cast<std::size_t>(ay.i0[i]) * s.w;
      const T* r1 = src + static_cast<std::size_t>(ay.i1[i]) * s.w;
      for (int j = 0; j < target_w; ++j) {
        const T lx = static_cast<T>(ax.lambda[j]);
        const T top = r0[ax.i0[j]] * (T(1) - lx) + r0[ax.i1[j]] * lx;
        const T bottom = r1[ax.i0[j]] * (T(1) - lx) + r1[ax.i1[j]] * lx;
        dst[static_cast<std::size_t>(i) * target_w + j] = top * (T(1) - ly) + bottom * ly;
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [ay, ax, in_plane, out_plane](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Shape& s = in.value.shape();
    const int th = self.value.h(), tw = self.value.w();
    T* dx = in.grad_buffer().data();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      const T* g = self.grad.data() + nc * out_plane;
      T* d = dx + nc * in_plane;
      for (int i = 0; i < th; ++i) {
        const T ly = static_cast<T>(ay.lambda[i]);
        T* r0 = d + static_cast<std::size_t>(ay.i0[i]) * s.w;
        T* r1 = d + static_cast<std::size_t>(ay.i1[i]) * s.w;
        for (int j = 0; j < tw; ++j) {
          const T lx = static_cast<T>(ax.lambda[j]);
          const T v = g[static_cast<std::size_t>(i) * tw + j];
          r0[ax.i0[j]] += v * (T(1) - ly) * (T(1) - lx);
          r0[ax.i1[j]] += v * (T(1) - ly) * lx;
          r1[ax.i0[j]] += v * ly * (T(1) - lx);
          r1[ax.i1[j]] += v * ly * lx;
        }
      }
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int kernel, int stride, int padding) {
  const Shape s = x.shape();
  const int oh = conv_out_extent(s.h, kernel, stride, padding, 1);
  const int ow = conv_out_extent(s.w, kernel, stride, padding, 1);
  if (oh < 1 || ow < 1) throw PreconditionError("max_pool2d: input too small");
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<std::size_t> argmax(out.size());
  const std::size_t in_plane = s.plane();
  std::size_t o = 0;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const T* src = x.value().data() + nc * in_plane;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t where = 0;
        for (int ki = 0; ki < kernel; ++ki) {
          const int y = i * stride - padding + ki;
          if (y < 0 || y >= s.h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const int xx = j * stride - padding + kj;
            if (xx < 0 || xx >= s.w) continue;
            const std::size_t k = static_cast<std::size_t>(y) * s.w + xx;
            if (src[k] > best) {
              best = src[k];
              where = k;
            }
          }
        }
        out[o] = best;
        argmax[o] = nc * in_plane + where;
      }
  }
  return make_result<T>(std::move(out), {x}, [argmax = std::move(argmax)](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    for (std::size_t k = 0; k < argmax.size(); ++k) dx[argmax[k]] += self.grad[k];
  });
}

template <typename T>
Var<T> bce_mean(const Var<T>& s, const Tensor<T>& target, double eps) {
  if (s.shape() != target.shape()) {
    throw ConfigError("bce: prediction " + s.shape().str() +
                      " and ground truth " + target.shape().str() + " differ");
  }
  const T lo = static_cast<T>(eps);
  const T hi = static_cast<T>(1.0 - eps);
  const std::size_t count = target.size();
  double acc = 0;
  const T* sv = s.value().data();
  for (std::size_t i = 0; i < count; ++i) {
    const double p = std::clamp(sv[i], lo, hi);
    const double g = target[i];
    acc -= g * std::log(p) + (1.0 - g) * std::log(1.0 - p);
  }
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc / count));
  return make_result<T>(std::move(out), {s}, [target, lo, hi, count](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    const T g0 = self.grad[0] / static_cast<T>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const T p = in.value[i];
      if (p < lo || p > hi) continue;
      const T g = target[i];
      dx[i] += g0 * ((T(1) - g) / (T(1) - p) - g / p);
    }
  });
}

template <typename T>
Var<T> inner(const Var<T>& x, const Tensor<T>& w) {
  if (x.shape() != w.shape()) {
    throw ConfigError("inner: shape mismatch " + x.shape().str() + " vs " + w.shape().str());
  }
  double acc = 0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += static_cast<double>(x.value()[i]) * w[i];
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(acc));
  return make_result<T>(std::move(out), {x}, [w](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    T* dx = in.grad_buffer().data();
    for (std::size_t i = 0; i < w.size(); ++i) dx[i] += self.grad[0] * w[i];
  });
}

#define BTSNET_INSTANTIATE_OPS(T)                                                     \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, Conv2dOptions); \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, \
                             Tensor<T>&, bool, double, double);                       \
  template Var<T> relu(const Var<T>&);                                                \
  template Var<T> sigmoid(const Var<T>&);                                             \
  template Var<T> add(const Var<T>&, const Var<T>&);                                  \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> scale(const Var<T>&, double);                                       \
  template Var<T> concat_channels(std::span<const Var<T>>);                           \
  template Var<T> global_avg_pool(const Var<T>&);                                     \
  template Var<T> softmax_channels(const Var<T>&);                                    \
  template Var<T> upsample_bilinear(const Var<T>&, int, int);                         \
  template Var<T> max_pool2d(const Var<T>&, int, int, int);                           \
  template Var<T> bce_mean(const Var<T>&, const Tensor<T>&, double);                  \
  template Var<T> inner(const Var<T>&, const Tensor<T>&);

BTSNET_INSTANTIATE_OPS(float)
BTSNET_INSTANTIATE_OPS(double)

}  // namespace btsnet::ops
