#include "duocast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace duocast {

namespace {

template <class Real>
void same_shape_or_throw(const Var<Real>& a, const Var<Real>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

struct PlaneShift {
  int y0, y1, x0, x1, dy, dx;
};

inline PlaneShift plane_shift(int h, int w, int dy, int dx) {
  return {std::max(0, -dy), std::min(h, h - dy), std::max(0, -dx), std::min(w, w - dx), dy, dx};
}

// out[y, x] += k * in[y + dy, x + dx] over the valid region.
template <class Real>
void shifted_axpy(const Real* in, Real* out, Real k, int w, const PlaneShift& s) {
  for (int y = s.y0; y < s.y1; ++y) {
    const Real* ir = in + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.dx;
    Real* orow = out + static_cast<std::ptrdiff_t>(y) * w;
    for (int x = s.x0; x < s.x1; ++x) orow[x] += k * ir[x];
  }
}

// in[y + dy, x + dx] += k * out[y, x]  (adjoint of shifted_axpy w.r.t. in).
template <class Real>
void shifted_axpy_adjoint(Real* gin, const Real* gout, Real k, int w, const PlaneShift& s) {
  for (int y = s.y0; y < s.y1; ++y) {
    Real* ir = gin + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.dx;
    const Real* orow = gout + static_cast<std::ptrdiff_t>(y) * w;
    for (int x = s.x0; x < s.x1; ++x) ir[x] += k * orow[x];
  }
}

// sum_{y,x} gout[y, x] * in[y + dy, x + dx]
template <class Real>
Real shifted_dot(const Real* in, const Real* gout, int w, const PlaneShift& s) {
  Real acc = 0;
  for (int y = s.y0; y < s.y1; ++y) {
    const Real* ir = in + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.dx;
    const Real* orow = gout + static_cast<std::ptrdiff_t>(y) * w;
    Real row = 0;
    for (int x = s.x0; x < s.x1; ++x) row += orow[x] * ir[x];
    acc += row;
  }
  return acc;
}

// Dot product with eight independent partial sums so the loop vectorizes
// without reassociation flags; the summation order is fixed.
template <class Real>
Real dot(const Real* a, const Real* b, int n) {
  Real acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  Real tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// C[m, n] += op(A) * op(B) for row-major operands with leading dimensions
// lda, ldb, ldc; op transposes when the flag is set. Each case keeps the
// innermost loop contiguous.
template <class Real>
void gemm_raw(const Real* A, int lda, const Real* B, int ldb, Real* C, int ldc, int m, int k, int n, bool ta,
              bool tb) {
  if (!tb) {
    constexpr int kBlock = 256;
    for (int j0 = 0; j0 < n; j0 += kBlock) {
      const int j1 = std::min(n, j0 + kBlock);
      for (int i = 0; i < m; ++i) {
        Real* crow = C + static_cast<std::size_t>(i) * ldc;
        for (int p = 0; p < k; ++p) {
          const Real av = ta ? A[static_cast<std::size_t>(p) * lda + i] : A[static_cast<std::size_t>(i) * lda + p];
          if (av == Real(0)) continue;
          const Real* brow = B + static_cast<std::size_t>(p) * ldb;
          for (int j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  } else if (!ta) {
    for (int i = 0; i < m; ++i) {
      const Real* arow = A + static_cast<std::size_t>(i) * lda;
      Real* crow = C + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += dot(arow, B + static_cast<std::size_t>(j) * ldb, k);
    }
  } else {
    // A^T B^T = (B A)^T
    std::vector<Real> ba(static_cast<std::size_t>(n) * m);
    gemm_raw(B, ldb, A, lda, ba.data(), m, n, k, m, false, false);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) C[static_cast<std::size_t>(i) * ldc + j] += ba[static_cast<std::size_t>(j) * m + i];
  }
}

template <class Real>
void gemm(const Tensor<Real>& a, const Tensor<Real>& b, bool ta, bool tb, Tensor<Real>& c) {
  const int m = ta ? a.dim(1) : a.dim(0);
  const int k = ta ? a.dim(0) : a.dim(1);
  const int n = tb ? b.dim(0) : b.dim(1);
  gemm_raw(a.data(), a.dim(1), b.data(), b.dim(1), c.data(), n, m, k, n, ta, tb);
}

// Patch matrix of one [C, H, W] image: row (c, ky, kx), column (y, x).
template <class Real>
void im2col(const Real* in, int c, int h, int w, int k, int dil, Real* col) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Real* dst = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * plane;
        std::fill(dst, dst + plane, Real(0));
        const PlaneShift s = plane_shift(h, w, (ky - r) * dil, (kx - r) * dil);
        const Real* src = in + ch * plane;
        for (int y = s.y0; y < s.y1; ++y)
          std::copy(src + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.x0 + s.dx,
                    src + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.x1 + s.dx,
                    dst + static_cast<std::ptrdiff_t>(y) * w + s.x0);
      }
}

template <class Real>
void col2im_add(const Real* col, int c, int h, int w, int k, int dil, Real* gin) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Real* src = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * plane;
        const PlaneShift s = plane_shift(h, w, (ky - r) * dil, (kx - r) * dil);
        Real* dst = gin + ch * plane;
        for (int y = s.y0; y < s.y1; ++y) {
          Real* drow = dst + static_cast<std::ptrdiff_t>(y + s.dy) * w + s.dx;
          const Real* srow = src + static_cast<std::ptrdiff_t>(y) * w;
          for (int x = s.x0; x < s.x1; ++x) drow[x] += srow[x];
        }
      }
}

template <class Real>
void check_conv_args(const Var<Real>& x, const Var<Real>& kernel, const Conv2dSpec& spec) {
  require(x.value().rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  require(kernel.value().rank() == 4, "conv2d: kernel must be [Cout,Cin/groups,k,k], got " + shape_str(kernel.shape()));
  const int ci = x.dim(1);
  const int co = kernel.dim(0);
  const int kh = kernel.dim(2), kw = kernel.dim(3);
  require(spec.groups >= 1, "conv2d: groups must be >= 1");
  require(spec.dilation >= 1, "conv2d: dilation must be >= 1");
  require(kh == kw, "conv2d: kernel height " + std::to_string(kh) + " != kernel width " + std::to_string(kw));
  require(kh % 2 == 1, "conv2d: kernel spatial extent " + std::to_string(kh) + " must be odd");
  require(ci % spec.groups == 0, "conv2d: groups " + std::to_string(spec.groups) + " does not divide input channels " +
                                     std::to_string(ci));
  require(co % spec.groups == 0, "conv2d: groups " + std::to_string(spec.groups) +
                                     " does not divide output channels " + std::to_string(co));
  require(kernel.dim(1) == ci / spec.groups, "conv2d: kernel in-channel dimension " + std::to_string(kernel.dim(1)) +
                                                 " != input channels / groups = " + std::to_string(ci / spec.groups));
}

template <class Real>
Var<Real> conv2d_impl(Var<Real> x, Var<Real> kernel, const Var<Real>* bias, const Conv2dSpec& spec) {
  check_conv_args(x, kernel, spec);
  Tape<Real>& tape = x.tape();
  const Tensor<Real>& in = x.value();
  const Tensor<Real>& w = kernel.value();
  const int n = in.dim(0), ci = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int co = w.dim(0), k = w.dim(2);
  const int cig = ci / spec.groups, cog = co / spec.groups;
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * wd;

  if (bias != nullptr) {
    require(bias->value().size() == static_cast<std::size_t>(co),
            "conv2d: bias length " + std::to_string(bias->value().size()) + " != output channels " + std::to_string(co));
  }

  // Ungrouped convolutions go through an explicit patch matrix and GEMM;
  // grouped and depth-wise ones use shifted plane updates.
  const bool use_gemm = spec.groups == 1;
  const int kk = ci * k * k;
  const int hw = static_cast<int>(plane);

  Tensor<Real> out({n, co, h, wd});
  if (use_gemm) {
    std::vector<Real> col(static_cast<std::size_t>(kk) * plane);
    for (int b = 0; b < n; ++b) {
      Real* ob = out.data() + static_cast<std::size_t>(b) * co * plane;
      if (bias != nullptr)
        for (int o = 0; o < co; ++o) std::fill(ob + o * plane, ob + (o + 1) * plane, bias->value()[o]);
      im2col(in.data() + static_cast<std::size_t>(b) * ci * plane, ci, h, wd, k, spec.dilation, col.data());
      gemm_raw(w.data(), kk, col.data(), hw, ob, hw, co, kk, hw, false, false);
    }
  }
  for (int b = 0; b < n && !use_gemm; ++b) {
    for (int o = 0; o < co; ++o) {
      Real* op = out.data() + (static_cast<std::size_t>(b) * co + o) * plane;
      if (bias != nullptr) std::fill(op, op + plane, bias->value()[o]);
      const int g = o / cog;
      for (int j = 0; j < cig; ++j) {
        const int c = g * cig + j;
        const Real* ip = in.data() + (static_cast<std::size_t>(b) * ci + c) * plane;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const Real kv = w.data()[((static_cast<std::size_t>(o) * cig + j) * k + ky) * k + kx];
            if (kv == Real(0)) continue;
            shifted_axpy(ip, op, kv, wd, plane_shift(h, wd, (ky - r) * spec.dilation, (kx - r) * spec.dilation));
          }
        }
      }
    }
  }

  std::vector<int> inputs{x.id(), kernel.id()};
  if (bias != nullptr) inputs.push_back(bias->id());
  const int xid = x.id(), kid = kernel.id(), bid = bias ? bias->id() : -1;
  const Conv2dSpec sp = spec;
  return tape.record(std::move(out), inputs, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& gout = t.grad(self);
    const Tensor<Real>& inv = t.value(xid);
    const Tensor<Real>& wv = t.value(kid);
    const bool gx = t.requires_grad(xid), gk = t.requires_grad(kid);
    Tensor<Real>* gin = gx ? &t.grad(xid) : nullptr;
    Tensor<Real>* gw = gk ? &t.grad(kid) : nullptr;
    if (use_gemm && (gx || gk)) {
      std::vector<Real> col(static_cast<std::size_t>(kk) * plane);
      for (int b = 0; b < n; ++b) {
        const Real* gb = gout.data() + static_cast<std::size_t>(b) * co * plane;
        if (gk) {
          im2col(inv.data() + static_cast<std::size_t>(b) * ci * plane, ci, h, wd, k, sp.dilation, col.data());
          gemm_raw(gb, hw, col.data(), hw, gw->data(), kk, co, hw, kk, false, true);
        }
        if (gx) {
          std::fill(col.begin(), col.end(), Real(0));
          gemm_raw(wv.data(), kk, gb, hw, col.data(), hw, kk, co, hw, true, false);
          col2im_add(col.data(), ci, h, wd, k, sp.dilation, gin->data() + static_cast<std::size_t>(b) * ci * plane);
        }
      }
    }
    for (int b = 0; b < n && !use_gemm; ++b) {
      for (int o = 0; o < co; ++o) {
        const Real* gp = gout.data() + (static_cast<std::size_t>(b) * co + o) * plane;
        const int g = o / cog;
        for (int j = 0; j < cig; ++j) {
          const int c = g * cig + j;
          const std::size_t ioff = (static_cast<std::size_t>(b) * ci + c) * plane;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const std::size_t widx = ((static_cast<std::size_t>(o) * cig + j) * k + ky) * k + kx;
              const PlaneShift s = plane_shift(h, wd, (ky - r) * sp.dilation, (kx - r) * sp.dilation);
              if (gx && wv.data()[widx] != Real(0)) shifted_axpy_adjoint(gin->data() + ioff, gp, wv.data()[widx], wd, s);
              if (gk) gw->data()[widx] += shifted_dot(inv.data() + ioff, gp, wd, s);
            }
          }
        }
      }
    }
    if (bid >= 0 && t.requires_grad(bid)) {
      Tensor<Real>& gb = t.grad(bid);
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < co; ++o) {
          const Real* gp = gout.data() + (static_cast<std::size_t>(b) * co + o) * plane;
          Real acc = 0;
          for (std::size_t p = 0; p < plane; ++p) acc += gp[p];
          gb[o] += acc;
        }
    }
  });
}

}  // namespace

template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> kernel, const Conv2dSpec& spec) {
  return conv2d_impl<Real>(x, kernel, nullptr, spec);
}

template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> kernel, Var<Real> bias, const Conv2dSpec& spec) {
  return conv2d_impl<Real>(x, kernel, &bias, spec);
}

template <class Real>
Var<Real> conv_temporal(Var<Real> x, Var<Real> kernel) {
  require(x.value().rank() == 4, "conv_temporal: input must be [S,C,H,W], got " + shape_str(x.shape()));
  require(kernel.value().rank() == 2, "conv_temporal: kernel must be [C,K], got " + shape_str(kernel.shape()));
  const int s = x.dim(0), c = x.dim(1);
  const int kc = kernel.dim(0), k = kernel.dim(1);
  require(kc == c, "conv_temporal: kernel channels " + std::to_string(kc) + " != input channels " + std::to_string(c));
  require(k % 2 == 1, "conv_temporal: temporal extent " + std::to_string(k) + " must be odd");
  require(k <= s, "conv_temporal: temporal extent " + std::to_string(k) + " exceeds sequence length " +
                      std::to_string(s));
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  const int r = k / 2;
  const Tensor<Real>& in = x.value();
  const Tensor<Real>& w = kernel.value();
  Tensor<Real> out(in.shape());
  for (int f = 0; f < s; ++f)
    for (int ch = 0; ch < c; ++ch) {
      Real* op = out.data() + (static_cast<std::size_t>(f) * c + ch) * plane;
      for (int j = 0; j < k; ++j) {
        const int src = f + j - r;
        if (src < 0 || src >= s) continue;
        const Real kv = w.data()[static_cast<std::size_t>(ch) * k + j];
        const Real* ip = in.data() + (static_cast<std::size_t>(src) * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) op[p] += kv * ip[p];
      }
    }
  const int xid = x.id(), kid = kernel.id();
  return x.tape().record(std::move(out), {xid, kid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& gout = t.grad(self);
    const Tensor<Real>& inv = t.value(xid);
    const Tensor<Real>& wv = t.value(kid);
    const bool gx = t.requires_grad(xid), gk = t.requires_grad(kid);
    for (int f = 0; f < s; ++f)
      for (int ch = 0; ch < c; ++ch) {
        const Real* gp = gout.data() + (static_cast<std::size_t>(f) * c + ch) * plane;
        for (int j = 0; j < k; ++j) {
          const int src = f + j - r;
          if (src < 0 || src >= s) continue;
          const std::size_t ioff = (static_cast<std::size_t>(src) * c + ch) * plane;
          const std::size_t widx = static_cast<std::size_t>(ch) * k + j;
          if (gx) {
            Real* gi = t.grad(xid).data() + ioff;
            const Real kv = wv.data()[widx];
            for (std::size_t p = 0; p < plane; ++p) gi[p] += kv * gp[p];
          }
          if (gk) {
            Real acc = 0;
            const Real* ip = inv.data() + ioff;
            for (std::size_t p = 0; p < plane; ++p) acc += gp[p] * ip[p];
            t.grad(kid).data()[widx] += acc;
          }
        }
      }
  });
}

template <class Real>
Var<Real> avg_pool2(Var<Real> x) {
  require(x.value().rank() == 4, "avg_pool2: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "avg_pool2: spatial shape " + shape_str(x.shape()) + " must be even");
  const int ho = h / 2, wo = w / 2;
  Tensor<Real> out({n, c, ho, wo});
  const Tensor<Real>& in = x.value();
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const Real* b = in.data() + (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * xx;
        out.data()[(static_cast<std::size_t>(p) * ho + y) * wo + xx] = Real(0.25) * (b[0] + b[1] + b[w] + b[w + 1]);
      }
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (int p = 0; p < n * c; ++p)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          const Real v = Real(0.25) * g.data()[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
          Real* b = gi.data() + (static_cast<std::size_t>(p) * h + 2 * y) * w + 2 * xx;
          b[0] += v;
          b[1] += v;
          b[w] += v;
          b[w + 1] += v;
        }
  });
}

template <class Real>
Var<Real> upsample2(Var<Real> x) {
  require(x.value().rank() == 4, "upsample2: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  Tensor<Real> out({n, c, ho, wo});
  const Tensor<Real>& in = x.value();
  for (int p = 0; p < n * c; ++p)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx)
        out.data()[(static_cast<std::size_t>(p) * ho + y) * wo + xx] =
            in.data()[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2];
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (int p = 0; p < n * c; ++p)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx)
          gi.data()[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2] +=
              g.data()[(static_cast<std::size_t>(p) * ho + y) * wo + xx];
  });
}

namespace {

// Index map for space_to_depth: output flat index -> input flat index.
std::vector<std::size_t> s2d_map(int n, int c, int h, int w, int r) {
  const int ho = h / r, wo = w / r, co = c * r * r;
  std::vector<std::size_t> map(static_cast<std::size_t>(n) * c * h * w);
  std::size_t k = 0;
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < co; ++oc) {
      const int ch = oc / (r * r), dy = (oc % (r * r)) / r, dx = oc % r;
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx)
          map[k++] = ((static_cast<std::size_t>(b) * c + ch) * h + (y * r + dy)) * w + (xx * r + dx);
    }
  return map;
}

template <class Real>
Var<Real> permute_by_map(Var<Real> x, Shape out_shape, std::vector<std::size_t> map, bool forward) {
  // forward: out[k] = in[map[k]];  otherwise out[map[k]] = in[k].
  Tensor<Real> out(std::move(out_shape));
  const Tensor<Real>& in = x.value();
  for (std::size_t k = 0; k < map.size(); ++k) {
    if (forward) out[k] = in[map[k]];
    else out[map[k]] = in[k];
  }
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=, map = std::move(map)](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (std::size_t k = 0; k < map.size(); ++k) {
      if (forward) gi[map[k]] += g[k];
      else gi[k] += g[map[k]];
    }
  });
}

}  // namespace

template <class Real>
Var<Real> space_to_depth(Var<Real> x, int r) {
  require(x.value().rank() == 4, "space_to_depth: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(r >= 1 && h % r == 0 && w % r == 0,
          "space_to_depth: spatial shape " + shape_str(x.shape()) + " not divisible by " + std::to_string(r));
  return permute_by_map(x, {n, c * r * r, h / r, w / r}, s2d_map(n, c, h, w, r), true);
}

template <class Real>
Var<Real> depth_to_space(Var<Real> x, int r) {
  require(x.value().rank() == 4, "depth_to_space: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(r >= 1 && c % (r * r) == 0,
          "depth_to_space: channels " + std::to_string(c) + " not divisible by " + std::to_string(r * r));
  const int co = c / (r * r);
  return permute_by_map(x, {n, co, h * r, w * r}, s2d_map(n, co, h * r, w * r, r), false);
}

template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  const Shape& s0 = xs[0].shape();
  require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& v : xs) {
    require(v.shape().size() == s0.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < s0.size(); ++d)
      if (static_cast<int>(d) != axis)
        require(v.shape()[d] == s0[d], "concat: dimension " + std::to_string(d) + " mismatch " + shape_str(v.shape()) +
                                           " vs " + shape_str(s0));
    out_shape[axis] += v.shape()[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s0[d]);
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= static_cast<std::size_t>(s0[d]);
  const std::size_t out_block = static_cast<std::size_t>(out_shape[axis]) * inner;

  Tensor<Real> out(out_shape);
  std::vector<int> ids;
  std::vector<std::size_t> blocks, offsets;
  std::size_t off = 0;
  for (const auto& v : xs) {
    const std::size_t blk = static_cast<std::size_t>(v.shape()[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.value().data() + o * blk, blk, out.data() + o * out_block + off);
    ids.push_back(v.id());
    blocks.push_back(blk);
    offsets.push_back(off);
    off += blk;
  }
  return xs[0].tape().record(std::move(out), ids, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!t.requires_grad(ids[i])) continue;
      Tensor<Real>& gi = t.grad(ids[i]);
      for (std::size_t o = 0; o < outer; ++o) {
        const Real* src = g.data() + o * out_block + offsets[i];
        Real* dst = gi.data() + o * blocks[i];
        for (std::size_t k = 0; k < blocks[i]; ++k) dst[k] += src[k];
      }
    }
  });
}

template <class Real>
Var<Real> slice(Var<Real> x, int axis, int start, int count) {
  const Shape& s = x.shape();
  require(axis >= 0 && axis < static_cast<int>(s.size()), "slice: axis out of range");
  require(start >= 0 && count >= 1 && start + count <= s[axis],
          "slice: range [" + std::to_string(start) + "," + std::to_string(start + count) + ") out of bounds for axis " +
              std::to_string(axis) + " of " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(s[d]);
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= static_cast<std::size_t>(s[d]);
  Shape os = s;
  os[axis] = count;
  const std::size_t in_block = static_cast<std::size_t>(s[axis]) * inner;
  const std::size_t out_block = static_cast<std::size_t>(count) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  Tensor<Real> out(os);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data() + o * in_block + off, out_block, out.data() + o * out_block);
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < out_block; ++k) gi[o * in_block + off + k] += g[o * out_block + k];
  });
}

template <class Real>
Var<Real> gather_channels(Var<Real> x, const std::vector<int>& channels) {
  require(x.value().rank() == 4, "gather_channels: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  for (int ch : channels) require(ch >= 0 && ch < c, "gather_channels: channel index out of range");
  const int co = static_cast<int>(channels.size());
  Tensor<Real> out({n, co, x.dim(2), x.dim(3)});
  for (int b = 0; b < n; ++b)
    for (int k = 0; k < co; ++k)
      std::copy_n(x.value().data() + (static_cast<std::size_t>(b) * c + channels[k]) * plane, plane,
                  out.data() + (static_cast<std::size_t>(b) * co + k) * plane);
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < co; ++k) {
        const Real* src = g.data() + (static_cast<std::size_t>(b) * co + k) * plane;
        Real* dst = gi.data() + (static_cast<std::size_t>(b) * c + channels[k]) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
      }
  });
}

template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape) {
  Tensor<Real> out = x.value().reshaped(std::move(shape));
  const int xid = x.id();
  return x.tape().record(std::move(out), {xid}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(xid);
    for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
  });
}

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b) {
  same_shape_or_throw(a, b, "add");
  Tensor<Real> out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    for (int id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor<Real>& gi = t.grad(id);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
  });
}

template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b) {
  same_shape_or_throw(a, b, "sub");
  Tensor<Real> out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<Real>& gi = t.grad(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
    if (t.requires_grad(ib)) {
      Tensor<Real>& gi = t.grad(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] -= g[k];
    }
  });
}

template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b) {
  same_shape_or_throw(a, b, "mul");
  Tensor<Real> out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  const int ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor<Real>& gi = t.grad(ia);
      const Tensor<Real>& bv = t.value(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k] * bv[k];
    }
    if (t.requires_grad(ib)) {
      Tensor<Real>& gi = t.grad(ib);
      const Tensor<Real>& av = t.value(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k] * av[k];
    }
  });
}

template <class Real>
Var<Real> scale(Var<Real> a, double s) {
  Tensor<Real> out = a.value();
  const Real sr = static_cast<Real>(s);
  for (auto& v : out.values()) v *= sr;
  const int ia = a.id();
  return a.tape().record(std::move(out), {ia}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    Tensor<Real>& gi = t.grad(ia);
    for (std::size_t k = 0; k < g.size(); ++k) gi[k] += sr * g[k];
  });
}

template <class Real>
Var<Real> add_channel_bias(Var<Real> x, Var<Real> v) {
  require(x.value().rank() == 4, "add_channel_bias: input must be [N,C,H,W]");
  const int n = x.dim(0), c = x.dim(1);
  require(v.value().size() == static_cast<std::size_t>(c),
          "add_channel_bias: vector length " + std::to_string(v.value().size()) + " != channels " + std::to_string(c));
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<Real> out = x.value();
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      Real* p = out.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
      const Real bv = v.value()[ch];
      for (std::size_t k = 0; k < plane; ++k) p[k] += bv;
    }
  const int ix = x.id(), iv = v.id();
  return x.tape().record(std::move(out), {ix, iv}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor<Real>& gi = t.grad(ix);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
    if (t.requires_grad(iv)) {
      Tensor<Real>& gv = t.grad(iv);
      for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
          const Real* p = g.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
          Real acc = 0;
          for (std::size_t k = 0; k < plane; ++k) acc += p[k];
          gv[ch] += acc;
        }
    }
  });
}

template <class Real>
Var<Real> add_row_bias(Var<Real> x, Var<Real> b) {
  require(x.value().rank() == 2, "add_row_bias: input must be [M,N]");
  const int m = x.dim(0), n = x.dim(1);
  require(b.value().size() == static_cast<std::size_t>(n), "add_row_bias: bias length mismatch");
  Tensor<Real> out = x.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.data()[static_cast<std::size_t>(i) * n + j] += b.value()[j];
  const int ix = x.id(), ib = b.id();
  return x.tape().record(std::move(out), {ix, ib}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    if (t.requires_grad(ix)) {
      Tensor<Real>& gi = t.grad(ix);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
    if (t.requires_grad(ib)) {
      Tensor<Real>& gb = t.grad(ib);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb[j] += g.data()[static_cast<std::size_t>(i) * n + j];
    }
  });
}

template <class Real>
Var<Real> silu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = v / (Real(1) + std::exp(-v));
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& xv = t.value(ix);
    Tensor<Real>& gi = t.grad(ix);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Real sg = Real(1) / (Real(1) + std::exp(-xv[k]));
      gi[k] += g[k] * sg * (Real(1) + xv[k] * (Real(1) - sg));
    }
  });
}

template <class Real>
Var<Real> relu(Var<Real> x) {
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = v > Real(0) ? v : Real(0);
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& xv = t.value(ix);
    Tensor<Real>& gi = t.grad(ix);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] > Real(0)) gi[k] += g[k];
  });
}

template <class Real>
Var<Real> clamp(Var<Real> x, double lo, double hi) {
  require(lo <= hi, "clamp: lo > hi");
  const Real l = static_cast<Real>(lo), h = static_cast<Real>(hi);
  Tensor<Real> out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, l, h);
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& xv = t.value(ix);
    Tensor<Real>& gi = t.grad(ix);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] >= l && xv[k] <= h) gi[k] += g[k];
  });
}

template <class Real>
Var<Real> threshold_mask(Var<Real> x, double theta) {
  const Real th = static_cast<Real>(theta);
  Tensor<Real> out = x.value();
  for (auto& v : out.values())
    if (!(v >= th)) v = Real(0);
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& xv = t.value(ix);
    Tensor<Real>& gi = t.grad(ix);
    for (std::size_t k = 0; k < g.size(); ++k)
      if (xv[k] >= th) gi[k] += g[k];
  });
}

template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b, bool transpose_a, bool transpose_b) {
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: operands must be rank 2");
  const int m = transpose_a ? a.dim(1) : a.dim(0);
  const int ka = transpose_a ? a.dim(0) : a.dim(1);
  const int kb = transpose_b ? b.dim(1) : b.dim(0);
  const int n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb)
    throw ContractViolation("matmul: inner dimensions differ (" + std::to_string(ka) + " vs " + std::to_string(kb) + ")");
  Tensor<Real> out({m, n});
  gemm(a.value(), b.value(), transpose_a, transpose_b, out);
  const int ia = a.id(), ib = b.id();
  const bool ta = transpose_a, tb = transpose_b;
  return a.tape().record(std::move(out), {ia, ib}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& av = t.value(ia);
    const Tensor<Real>& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      if (!ta) gemm(g, bv, false, !tb, t.grad(ia));
      else gemm(bv, g, tb, true, t.grad(ia));
    }
    if (t.requires_grad(ib)) {
      if (!tb) gemm(av, g, !ta, false, t.grad(ib));
      else gemm(g, av, true, ta, t.grad(ib));
    }
  });
}

template <class Real>
Var<Real> softmax_rows(Var<Real> x) {
  require(x.value().rank() == 2, "softmax_rows: input must be [M,N]");
  const int m = x.dim(0), n = x.dim(1);
  Tensor<Real> out = x.value();
  for (int i = 0; i < m; ++i) {
    Real* row = out.data() + static_cast<std::size_t>(i) * n;
    const Real mx = *std::max_element(row, row + n);
    Real z = 0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    const Real inv = Real(1) / z;
    for (int j = 0; j < n; ++j) row[j] *= inv;
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), {ix}, [=](Tape<Real>& t, int self) {
    const Tensor<Real>& g = t.grad(self);
    const Tensor<Real>& p = t.value(self);
    Tensor<Real>& gi = t.grad(ix);
    for (int i = 0; i < m; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * n;
      Real dot = 0;
      for (int j = 0; j < n; ++j) dot += p[o + j] * g[o + j];
      for (int j = 0; j < n; ++j) gi[o + j] += p[o + j] * (g[o + j] - dot);
    }
  });
}

template <class Real>
Var<Real> sum(Var<Real> x) {
  Real acc = 0;
  for (Real v : x.value().values()) acc += v;
  const int ix = x.id();
  return x.tape().record(Tensor<Real>({1}, acc), {ix}, [=](Tape<Real>& t, int self) {
    const Real g = t.grad(self)[0];
    Tensor<Real>& gi = t.grad(ix);
    for (auto& v : gi.values()) v += g;
  });
}

template <class Real>
Var<Real> mean(Var<Real> x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

template <class Real>
Var<Real> mse(Var<Real> a, Var<Real> b) {
  same_shape_or_throw(a, b, "mse");
  const std::size_t n = a.value().size();
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double d = static_cast<double>(a.value()[k]) - static_cast<double>(b.value()[k]);
    acc += d * d;
  }
  const int ia = a.id(), ib = b.id();
  return a.tape().record(Tensor<Real>({1}, static_cast<Real>(acc / static_cast<double>(n))), {ia, ib},
                         [=](Tape<Real>& t, int self) {
                           const Real g = t.grad(self)[0] * Real(2) / static_cast<Real>(n);
                           const Tensor<Real>& av = t.value(ia);
                           const Tensor<Real>& bv = t.value(ib);
                           if (t.requires_grad(ia)) {
                             Tensor<Real>& gi = t.grad(ia);
                             for (std::size_t k = 0; k < n; ++k) gi[k] += g * (av[k] - bv[k]);
                           }
                           if (t.requires_grad(ib)) {
                             Tensor<Real>& gi = t.grad(ib);
                             for (std::size_t k = 0; k < n; ++k) gi[k] -= g * (av[k] - bv[k]);
                           }
                         });
}

namespace {

template <class Real>
int infer_groups(const Var<Real>& src, const Var<Real>& kernel, const char* which) {
  require(kernel.value().rank() == 4, std::string("attention: ") + which + " kernel must be rank 4");
  const int ci = src.dim(1), per = kernel.dim(1);
  require(per >= 1 && ci % per == 0, std::string("attention: ") + which + " kernel in-channel dimension " +
                                         std::to_string(per) + " incompatible with source channels " +
                                         std::to_string(ci));
  return ci / per;
}

}  // namespace

template <class Real>
AttentionOutput<Real> cross_attention(Var<Real> query_src, Var<Real> kv_src, Var<Real> wq, Var<Real> wk,
                                      Var<Real> wv) {
  require(query_src.value().rank() == 4 && query_src.dim(0) == 1, "cross_attention: query source must be [1,C,H,W]");
  require(kv_src.value().rank() == 4 && kv_src.dim(0) == 1, "cross_attention: key/value source must be [1,C,H,W]");
  require(query_src.dim(2) == kv_src.dim(2) && query_src.dim(3) == kv_src.dim(3),
          "cross_attention: spatial shape mismatch " + shape_str(query_src.shape()) + " vs " + shape_str(kv_src.shape()));
  const int h = query_src.dim(2), w = query_src.dim(3);
  const int tokens = h * w;
  Var<Real> q = conv2d(query_src, wq, Conv2dSpec{1, infer_groups(query_src, wq, "query")});
  Var<Real> k = conv2d(kv_src, wk, Conv2dSpec{1, infer_groups(kv_src, wk, "key")});
  Var<Real> v = conv2d(kv_src, wv, Conv2dSpec{1, infer_groups(kv_src, wv, "value")});
  const int dq = q.dim(1), dk = k.dim(1), dv = v.dim(1);
  require(dq == dk, "cross_attention: channel mismatch between projected Q (" + std::to_string(dq) +
                        " channels) and K (" + std::to_string(dk) + " channels)");
  Var<Real> qm = reshape(q, {dq, tokens});
  Var<Real> km = reshape(k, {dk, tokens});
  Var<Real> vm = reshape(v, {dv, tokens});
  Var<Real> scores = scale(matmul(qm, km, true, false), 1.0 / std::sqrt(static_cast<double>(dq)));
  Var<Real> weights = softmax_rows(scores);
  Var<Real> out = matmul(vm, weights, false, true);  // [dv, tokens]
  return {reshape(out, {1, dv, h, w}), weights};
}

template <class Real>
AttentionOutput<Real> self_attention(Var<Real> x, Var<Real> wq, Var<Real> wk, Var<Real> wv) {
  return cross_attention(x, x, wq, wk, wv);
}

#define DUOCAST_INSTANTIATE_OPS(R)                                                                     \
  template Var<R> conv2d<R>(Var<R>, Var<R>, const Conv2dSpec&);                                        \
  template Var<R> conv2d<R>(Var<R>, Var<R>, Var<R>, const Conv2dSpec&);                                \
  template Var<R> conv_temporal<R>(Var<R>, Var<R>);                                                    \
  template Var<R> avg_pool2<R>(Var<R>);                                                                \
  template Var<R> upsample2<R>(Var<R>);                                                                \
  template Var<R> space_to_depth<R>(Var<R>, int);                                                      \
  template Var<R> depth_to_space<R>(Var<R>, int);                                                      \
  template Var<R> concat<R>(const std::vector<Var<R>>&, int);                                          \
  template Var<R> slice<R>(Var<R>, int, int, int);                                                     \
  template Var<R> gather_channels<R>(Var<R>, const std::vector<int>&);                                 \
  template Var<R> reshape<R>(Var<R>, Shape);                                                           \
  template Var<R> add<R>(Var<R>, Var<R>);                                                              \
  template Var<R> sub<R>(Var<R>, Var<R>);                                                              \
  template Var<R> mul<R>(Var<R>, Var<R>);                                                              \
  template Var<R> scale<R>(Var<R>, double);                                                            \
  template Var<R> add_channel_bias<R>(Var<R>, Var<R>);                                                 \
  template Var<R> add_row_bias<R>(Var<R>, Var<R>);                                                     \
  template Var<R> silu<R>(Var<R>);                                                                     \
  template Var<R> relu<R>(Var<R>);                                                                     \
  template Var<R> clamp<R>(Var<R>, double, double);                                                    \
  template Var<R> threshold_mask<R>(Var<R>, double);                                                   \
  template Var<R> matmul<R>(Var<R>, Var<R>, bool, bool);                                               \
  template Var<R> softmax_rows<R>(Var<R>);                                                             \
  template Var<R> sum<R>(Var<R>);                                                                      \
  template Var<R> mean<R>(Var<R>);                                                                     \
  template Var<R> mse<R>(Var<R>, Var<R>);                                                              \
  template AttentionOutput<R> cross_attention<R>(Var<R>, Var<R>, Var<R>, Var<R>, Var<R>);              \
  template AttentionOutput<R> self_attention<R>(Var<R>, Var<R>, Var<R>, Var<R>);

DUOCAST_INSTANTIATE_OPS(float)
DUOCAST_INSTANTIATE_OPS(double)

#undef DUOCAST_INSTANTIATE_OPS

}  // namespace duocast
