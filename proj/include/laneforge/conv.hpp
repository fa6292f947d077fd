#pragma once

// Spatial ops: same-padding stride-1 cross-correlation, 2x2 max pooling,
// exact x2 transposed convolution, and the depthwise 1-D slice convolution
// used by the directional message passing. conv2d lowers to im2col + GEMM.

#include <vector>

#include "laneforge/gemm.hpp"
#include "laneforge/tensor.hpp"

namespace laneforge {

namespace detail {

template <class Real>
std::vector<Real>& conv_scratch() {
  thread_local std::vector<Real> buf;
  return buf;
}

template <class Real>
std::vector<Real>& backward_scratch() {
  thread_local std::vector<Real> buf;
  return buf;
}

// col is (Cin*kh*kw) x (H*W); zero padding (k-1)/2.
template <class Real>
void im2col(const Real* x, int cin, int h, int w, int kh, int kw, Real* col) {
  int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  long long plane = (long long)h * w;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        Real* dst = col + (((long long)c * kh + ky) * kw + kx) * plane;
        int sy = ky - ph, sx = kx - pw;
        for (int y = 0; y < h; ++y) {
          int yy = y + sy;
          Real* d = dst + (long long)y * w;
          if (yy < 0 || yy >= h) {
            for (int xx = 0; xx < w; ++xx) d[xx] = Real(0);
            continue;
          }
          const Real* src = x + ((long long)c * h + yy) * w;
          int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
          for (int xx = 0; xx < x0; ++xx) d[xx] = Real(0);
          for (int xx = x0; xx < x1; ++xx) d[xx] = src[xx + sx];
          for (int xx = x1; xx < w; ++xx) d[xx] = Real(0);
        }
      }
    }
  }
}

template <class Real>
void col2im_accum(const Real* col, int cin, int h, int w, int kh, int kw, Real* gx) {
  int ph = (kh - 1) / 2, pw = (kw - 1) / 2;
  long long plane = (long long)h * w;
  for (int c = 0; c < cin; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const Real* src = col + (((long long)c * kh + ky) * kw + kx) * plane;
        int sy = ky - ph, sx = kx - pw;
        for (int y = 0; y < h; ++y) {
          int yy = y + sy;
          if (yy < 0 || yy >= h) continue;
          Real* dst = gx + ((long long)c * h + yy) * w;
          const Real* s = src + (long long)y * w;
          int x0 = std::max(0, -sx), x1 = std::min(w, w - sx);
          for (int xx = x0; xx < x1; ++xx) dst[xx + sx] += s[xx];
        }
      }
    }
  }
}

}  // namespace detail

/// Same-padding stride-1 convolution (cross-correlation).
/// input Cin x H x W, kernel Cout x Cin x kh x kw (odd kh, kw), bias Cout.
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& k, const Tensor<Real>& b) {
  if (x.rank() != 3 || k.rank() != 4 || b.rank() != 1) throw ShapeError("conv2d operand ranks");
  int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (k.dim(1) != cin) throw ShapeError("conv2d channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d requires odd kernel extents");
  if (b.dim(0) != cout) throw ShapeError("conv2d bias extent");

  long long plane = (long long)h * w;
  int kk = cin * kh * kw;
  Tensor<Real> y(Shape{cout, h, w});

  bool one_by_one = (kh == 1 && kw == 1);
  bool traced = detail::tracing<Real>({&x, &k, &b});
  // the lowered input is kept alive for the backward pass when tracing
  auto col_keep = std::make_shared<std::vector<Real>>();
  const Real* colp;
  if (one_by_one) {
    colp = x.data();
  } else if (traced) {
    col_keep->resize((std::size_t)kk * plane);
    detail::im2col(x.data(), cin, h, w, kh, kw, col_keep->data());
    colp = col_keep->data();
  } else {
    auto& col = detail::conv_scratch<Real>();
    col.resize((std::size_t)kk * plane);
    detail::im2col(x.data(), cin, h, w, kh, kw, col.data());
    colp = col.data();
  }
  detail::gemm<Real>(cout, (int)plane, kk, k.data(), kk, colp, (int)plane, y.data(), (int)plane, false);
  for (int c = 0; c < cout; ++c) {
    Real bv = b[(long long)c];
    Real* py = y.data() + c * plane;
    for (long long i = 0; i < plane; ++i) py[i] += bv;
  }

  if (traced) {
    detail::mark_out(y);
    auto xn = x.node(), kn = k.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, kn, bn, yn, col_keep, cin, h, w, cout, kh, kw, plane, kk,
                                      one_by_one] {
      // dW = dY . col^T      (Cout x kk)
      // dcol = W^T . dY      (kk x plane), then col2im
      const Real* colp2 = one_by_one ? xn->value.data() : col_keep->data();
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int c = 0; c < cout; ++c) {
          Real s = Real(0);
          const Real* g = yn->grad.data() + c * plane;
          for (long long i = 0; i < plane; ++i) s += g[i];
          bn->grad[(size_t)c] += s;
        }
      }
      if (kn->requires_grad) {
        kn->ensure_grad();
        detail::gemm_abt<Real>(cout, kk, (int)plane, yn->grad.data(), (int)plane, colp2, (int)plane,
                               kn->grad.data(), kk, true);
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        // W^T materialized once; small relative to the feature maps.
        std::vector<Real> wt((std::size_t)kk * cout);
        for (int c = 0; c < cout; ++c)
          for (int q = 0; q < kk; ++q) wt[(std::size_t)q * cout + c] = kn->value[(std::size_t)c * kk + q];
        if (one_by_one) {
          detail::gemm<Real>(kk, (int)plane, cout, wt.data(), cout, yn->grad.data(), (int)plane,
                             xn->grad.data(), (int)plane, true);
        } else {
          auto& dcol = detail::backward_scratch<Real>();
          dcol.resize((std::size_t)kk * plane);
          detail::gemm<Real>(kk, (int)plane, cout, wt.data(), cout, yn->grad.data(), (int)plane,
                             dcol.data(), (int)plane, false);
          detail::col2im_accum(dcol.data(), cin, h, w, kh, kw, xn->grad.data());
        }
      }
    });
  }
  return y;
}

/// 2x2 max pooling, stride 2. Backward routes to the first max in row-major
/// window order.
template <class Real>
Tensor<Real> maxpool2(const Tensor<Real>& x) {
  if (x.rank() != 3) throw ShapeError("maxpool2 expects rank-3 input");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw ShapeError("maxpool2 requires even spatial extents");
  int oh = h / 2, ow = w / 2;
  Tensor<Real> y(Shape{c, oh, ow});
  auto argmax = std::make_shared<std::vector<int>>((std::size_t)c * oh * ow);
  for (int cc = 0; cc < c; ++cc) {
    const Real* px = x.data() + (std::size_t)cc * h * w;
    Real* py = y.data() + (std::size_t)cc * oh * ow;
    int* pa = argmax->data() + (std::size_t)cc * oh * ow;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        int base = 2 * i * w + 2 * j;
        int cand[4] = {base, base + 1, base + w, base + w + 1};
        int best = cand[0];
        Real bv = px[best];
        for (int t = 1; t < 4; ++t)
          if (px[cand[t]] > bv) {
            bv = px[cand[t]];
            best = cand[t];
          }
        py[i * ow + j] = bv;
        pa[i * ow + j] = best;
      }
    }
  }
  if (detail::tracing<Real>({&x})) {
    detail::mark_out(y);
    auto xn = x.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, yn, argmax, c, h, w, oh, ow] {
      xn->ensure_grad();
      for (int cc = 0; cc < c; ++cc) {
        const int* pa = argmax->data() + (std::size_t)cc * oh * ow;
        const Real* g = yn->grad.data() + (std::size_t)cc * oh * ow;
        Real* gx = xn->grad.data() + (std::size_t)cc * h * w;
        for (long long i = 0; i < (long long)oh * ow; ++i) gx[pa[i]] += g[i];
      }
    });
  }
  return y;
}

/// Transposed convolution with a 2x2 kernel and stride 2: exact x2 upsampling.
/// kernel is Cin x Cout x 2 x 2, bias Cout.
template <class Real>
Tensor<Real> transposed_conv2(const Tensor<Real>& x, const Tensor<Real>& k, const Tensor<Real>& b) {
  if (x.rank() != 3 || k.rank() != 4 || b.rank() != 1) throw ShapeError("transposed_conv2 operand ranks");
  int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k.dim(0) != cin || k.dim(2) != 2 || k.dim(3) != 2)
    throw ShapeError("transposed_conv2 requires a Cin x Cout x 2 x 2 kernel");
  int cout = k.dim(1);
  if (b.dim(0) != cout) throw ShapeError("transposed_conv2 bias extent");
  int oh = 2 * h, ow = 2 * w;
  long long plane = (long long)h * w;
  Tensor<Real> y(Shape{cout, oh, ow});

  // Each (dy,dx) tap is an independent Cout x Cin matrix applied to the input,
  // scattered to the strided output positions.
  std::vector<Real> wt((std::size_t)cout * cin);
  std::vector<Real> tmp((std::size_t)cout * plane);
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          wt[(std::size_t)co * cin + ci] = k.data()[(((std::size_t)ci * cout + co) * 2 + dy) * 2 + dx];
      detail::gemm<Real>(cout, (int)plane, cin, wt.data(), cin, x.data(), (int)plane, tmp.data(),
                         (int)plane, false);
      for (int co = 0; co < cout; ++co) {
        Real bv = b[(long long)co];
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j)
            y.data()[((std::size_t)co * oh + 2 * i + dy) * ow + 2 * j + dx] =
                tmp[(std::size_t)co * plane + (long long)i * w + j] + bv;
      }
    }
  }

  if (detail::tracing<Real>({&x, &k, &b})) {
    detail::mark_out(y);
    auto xn = x.node(), kn = k.node(), bn = b.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, kn, bn, yn, cin, cout, h, w, oh, ow, plane] {
      std::vector<Real> gsub((std::size_t)cout * plane);
      std::vector<Real> wsub((std::size_t)cin * cout);
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          for (int co = 0; co < cout; ++co)
            for (int i = 0; i < h; ++i)
              for (int j = 0; j < w; ++j)
                gsub[(std::size_t)co * plane + (long long)i * w + j] =
                    yn->grad[((std::size_t)co * oh + 2 * i + dy) * ow + 2 * j + dx];
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int co = 0; co < cout; ++co) {
              Real s = Real(0);
              for (long long i = 0; i < plane; ++i) s += gsub[(std::size_t)co * plane + i];
              bn->grad[(size_t)co] += s;
            }
          }
          if (kn->requires_grad) {
            kn->ensure_grad();
            // dW[ci,co] = sum_p X[ci,p] * dYsub[co,p]
            std::vector<Real> dw((std::size_t)cin * cout);
            detail::gemm_abt<Real>(cin, cout, (int)plane, xn->value.data(), (int)plane, gsub.data(),
                                   (int)plane, dw.data(), cout, false);
            for (int ci = 0; ci < cin; ++ci)
              for (int co = 0; co < cout; ++co)
                kn->grad[(((std::size_t)ci * cout + co) * 2 + dy) * 2 + dx] += dw[(std::size_t)ci * cout + co];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            for (int ci = 0; ci < cin; ++ci)
              for (int co = 0; co < cout; ++co)
                wsub[(std::size_t)ci * cout + co] = kn->value[(((std::size_t)ci * cout + co) * 2 + dy) * 2 + dx];
            detail::gemm<Real>(cin, (int)plane, cout, wsub.data(), cout, gsub.data(), (int)plane,
                               xn->grad.data(), (int)plane, true);
          }
        }
      }
    });
  }
  return y;
}

/// Depthwise same-padding 1-D convolution along the last axis of a C x L
/// slice; kernel C x K with odd K <= L.
template <class Real>
Tensor<Real> conv1d_depthwise(const Tensor<Real>& x, const Tensor<Real>& k) {
  if (x.rank() != 2 || k.rank() != 2) throw ShapeError("conv1d_depthwise operand ranks");
  int c = x.dim(0), l = x.dim(1), kk = k.dim(1);
  if (k.dim(0) != c) throw ShapeError("conv1d_depthwise channel mismatch");
  if (kk % 2 == 0) throw ShapeError("conv1d_depthwise requires odd kernel length");
  if (kk > l) throw ShapeError("conv1d_depthwise kernel longer than slice");
  int p = (kk - 1) / 2;
  Tensor<Real> y(x.shape());
  for (int cc = 0; cc < c; ++cc) {
    const Real* px = x.data() + (std::size_t)cc * l;
    const Real* pk = k.data() + (std::size_t)cc * kk;
    Real* py = y.data() + (std::size_t)cc * l;
    for (int i = 0; i < l; ++i) {
      Real s = Real(0);
      int t0 = std::max(0, p - i), t1 = std::min(kk, l + p - i);
      for (int t = t0; t < t1; ++t) s += pk[t] * px[i + t - p];
      py[i] = s;
    }
  }
  if (detail::tracing<Real>({&x, &k})) {
    detail::mark_out(y);
    auto xn = x.node(), kn = k.node(), yn = y.node();
    Tape<Real>::active()->record(yn, [xn, kn, yn, c, l, kk, p] {
      for (int cc = 0; cc < c; ++cc) {
        const Real* g = yn->grad.data() + (std::size_t)cc * l;
        if (kn->requires_grad) {
          kn->ensure_grad();
          Real* gk = kn->grad.data() + (std::size_t)cc * kk;
          const Real* px = xn->value.data() + (std::size_t)cc * l;
          for (int i = 0; i < l; ++i) {
            int t0 = std::max(0, p - i), t1 = std::min(kk, l + p - i);
            for (int t = t0; t < t1; ++t) gk[t] += g[i] * px[i + t - p];
          }
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          Real* gx = xn->grad.data() + (std::size_t)cc * l;
          const Real* pk = kn->value.data() + (std::size_t)cc * kk;
          for (int i = 0; i < l; ++i) {
            int t0 = std::max(0, p - i), t1 = std::min(kk, l + p - i);
            for (int t = t0; t < t1; ++t) gx[i + t - p] += g[i] * pk[t];
          }
        }
      }
    });
  }
  return y;
}

}  // namespace laneforge
