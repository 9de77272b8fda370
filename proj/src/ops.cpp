#include "dpt/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dpt/errors.hpp"

namespace dpt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

using detail::make_result;
using detail::Node;

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

bool wants_grad(const Node& p) { return p.requires_grad; }

Buffer& grad_of(Node& p) {
  p.ensure_grad();
  return p.grad;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Column buffer [Cin*kh*kw x Ho*Wo] for one batch element.
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t ho, std::size_t wo, const Conv2dOptions& opt,
            double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(opt.pad);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * opt.stride + ki * opt.dilation) - pad;
          double* out = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = x + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * opt.stride + kj * opt.dilation) - pad;
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t ho, std::size_t wo, const Conv2dOptions& opt,
                double* dx) {
  const auto pad = static_cast<std::ptrdiff_t>(opt.pad);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = cols + ((c * kh + ki) * kw + kj) * ho * wo;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * opt.stride + ki * opt.dilation) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = dx + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * opt.stride + kj * opt.dilation) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) {
              dst[static_cast<std::size_t>(iw)] += row[oh * wo + ow];
            }
          }
        }
      }
    }
  }
}

Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Buffer out(n * m, 0.0);
  if (counting_macs()) {
    count_macs(static_cast<unsigned long long>(n) * k * m);
  } else {
    MapMat(out.data(), n, m).noalias() = CMapMat(a.data().data(), n, k) * CMapMat(b.data().data(), k, m);
  }
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    CMapMat g(self.grad.data(), n, m);
    if (wants_grad(pa)) {
      MapMat(grad_of(pa).data(), n, k).noalias() += g * CMapMat(pb.data.data(), k, m).transpose();
    }
    if (wants_grad(pb)) {
      MapMat(grad_of(pb).data(), k, m).noalias() += CMapMat(pa.data.data(), n, k).transpose() * g;
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner extents differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + "^T");
  }
  Buffer out(n * m, 0.0);
  if (counting_macs()) {
    count_macs(static_cast<unsigned long long>(n) * k * m);
  } else {
    MapMat(out.data(), n, m).noalias() =
        CMapMat(a.data().data(), n, k) * CMapMat(b.data().data(), m, k).transpose();
  }
  return make_result("matmul_nt", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    CMapMat g(self.grad.data(), n, m);
    if (wants_grad(pa)) {
      MapMat(grad_of(pa).data(), n, k).noalias() += g * CMapMat(pb.data.data(), m, k);
    }
    if (wants_grad(pb)) {
      MapMat(grad_of(pb).data(), m, k).noalias() += g.transpose() * CMapMat(pa.data.data(), n, k);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  return permute(a, {1, 0});
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Buffer out(n * m);
  auto in = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data() + i * m;
    double* dst = out.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dst[j] = std::exp(row[j] - mx);
      total += dst[j];
    }
    for (std::size_t j = 0; j < m; ++j) dst[j] /= total;
  }
  return make_result("softmax_rows", {n, m}, std::move(out), {x}, [n, m](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& gx = grad_of(px);
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = self.data.data() + i * m;
      const double* gy = self.grad.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[j] * (gy[j] - dot);
    }
  });
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const Conv2dOptions& opt) {
  if (opt.stride == 0 || opt.dilation == 0) throw ConfigError("conv2d: stride and dilation must be positive");
  const std::size_t span = opt.dilation * (kernel - 1) + 1;
  if (in + 2 * opt.pad < span) {
    throw DimensionError("conv2d: kernel span " + std::to_string(span) +
                         " exceeds padded input extent " + std::to_string(in + 2 * opt.pad));
  }
  return (in + 2 * opt.pad - span) / opt.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const Conv2dOptions& opt) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()));
  }
  const std::size_t ho = conv_out_extent(h, kh, opt), wo = conv_out_extent(w, kw, opt);
  const std::size_t kdim = cin * kh * kw, npos = ho * wo;
  const bool pointwise = kh == 1 && kw == 1 && opt.stride == 1 && opt.pad == 0;

  Buffer out(batch * cout * npos, 0.0);
  if (counting_macs()) {
    count_macs(static_cast<unsigned long long>(batch) * cout * kdim * npos);
  } else {
    CMapMat wmat(weight.data().data(), cout, kdim);
    Buffer cols(pointwise ? 0 : kdim * npos);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xb = x.data().data() + b * cin * h * w;
      const double* colp = xb;
      if (!pointwise) {
        im2col(xb, cin, h, w, kh, kw, ho, wo, opt, cols.data());
        colp = cols.data();
      }
      MapMat ob(out.data() + b * cout * npos, cout, npos);
      ob.noalias() = wmat * CMapMat(colp, kdim, npos);
      if (has_bias) {
        for (std::size_t c = 0; c < cout; ++c) ob.row(c).array() += bias.data()[c];
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      "conv2d", {batch, cout, ho, wo}, std::move(out), inputs,
      [=](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        CMapMat wmat(pw.data.data(), cout, kdim);
        Buffer cols(pointwise ? 0 : kdim * npos);
        Buffer dcols(pointwise ? 0 : kdim * npos);
        for (std::size_t b = 0; b < batch; ++b) {
          CMapMat gb(self.grad.data() + b * cout * npos, cout, npos);
          const double* xb = px.data.data() + b * cin * h * w;
          if (wants_grad(pw)) {
            const double* colp = xb;
            if (!pointwise) {
              im2col(xb, cin, h, w, kh, kw, ho, wo, opt, cols.data());
              colp = cols.data();
            }
            MapMat(grad_of(pw).data(), cout, kdim).noalias() +=
                gb * CMapMat(colp, kdim, npos).transpose();
          }
          if (has_bias && wants_grad(parent(self, 2))) {
            auto& gbias = grad_of(parent(self, 2));
            for (std::size_t c = 0; c < cout; ++c) gbias[c] += gb.row(c).sum();
          }
          if (wants_grad(px)) {
            double* dxb = grad_of(px).data() + b * cin * h * w;
            if (pointwise) {
              MapMat(dxb, kdim, npos).noalias() += wmat.transpose() * gb;
            } else {
              MapMat(dcols.data(), kdim, npos).noalias() = wmat.transpose() * gb;
              col2im_add(dcols.data(), cin, h, w, kh, kw, ho, wo, opt, dxb);
            }
          }
        }
      });
}

std::size_t patch_grid_extent(std::size_t extent, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ConfigError("patch and stride must be positive");
  if (patch > extent) {
    throw ConfigError("patch extent " + std::to_string(patch) + " exceeds input extent " +
                      std::to_string(extent));
  }
  if ((extent - patch) % stride != 0) {
    throw ConfigError("patch " + std::to_string(patch) + " with stride " + std::to_string(stride) +
                      " does not tile extent " + std::to_string(extent));
  }
  return (extent - patch) / stride + 1;
}

Tensor unfold(const Tensor& x, Extent2 patch, Extent2 stride) {
  require_rank(x, 4, "unfold");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t nh = patch_grid_extent(h, patch.h, stride.h);
  const std::size_t nw = patch_grid_extent(w, patch.w, stride.w);
  const std::size_t n = batch * nh * nw, d = ch * patch.h * patch.w;

  // index[t*d + k] = flat input offset of token t, component k
  auto index = std::make_shared<std::vector<std::size_t>>(n * d);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < nh; ++i)
      for (std::size_t j = 0; j < nw; ++j) {
        std::size_t* dst = index->data() + ((b * nh + i) * nw + j) * d;
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t y = 0; y < patch.h; ++y)
            for (std::size_t xo = 0; xo < patch.w; ++xo)
              *dst++ = ((b * ch + c) * h + i * stride.h + y) * w + j * stride.w + xo;
      }
  Buffer out(n * d);
  auto in = x.data();
  for (std::size_t t = 0; t < n * d; ++t) out[t] = in[(*index)[t]];
  return make_result("unfold", {n, d}, std::move(out), {x}, [index](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& gx = grad_of(px);
    for (std::size_t t = 0; t < index->size(); ++t) gx[(*index)[t]] += self.grad[t];
  });
}

Tensor fold(const Tensor& tokens, const Shape& out_shape, Extent2 patch, Extent2 stride) {
  require_rank(tokens, 2, "fold");
  if (out_shape.size() != 4) throw DimensionError("fold: output shape must be rank 4");
  const std::size_t batch = out_shape[0], ch = out_shape[1], h = out_shape[2], w = out_shape[3];
  const std::size_t nh = patch_grid_extent(h, patch.h, stride.h);
  const std::size_t nw = patch_grid_extent(w, patch.w, stride.w);
  const std::size_t n = batch * nh * nw, d = ch * patch.h * patch.w;
  if (tokens.dim(0) != n || tokens.dim(1) != d) {
    throw DimensionError("fold: tokens " + shape_str(tokens.shape()) + " inconsistent with " +
                         shape_str(out_shape) + " (expected [" + std::to_string(n) + "x" +
                         std::to_string(d) + "])");
  }
  // Per-pixel overlap counts are shared by every batch element and channel.
  Buffer count(h * w, 0.0);
  for (std::size_t i = 0; i < nh; ++i)
    for (std::size_t j = 0; j < nw; ++j)
      for (std::size_t y = 0; y < patch.h; ++y)
        for (std::size_t xo = 0; xo < patch.w; ++xo) count[(i * stride.h + y) * w + j * stride.w + xo] += 1.0;

  auto index = std::make_shared<std::vector<std::size_t>>(n * d);
  auto inv = std::make_shared<Buffer>(n * d);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < nh; ++i)
      for (std::size_t j = 0; j < nw; ++j) {
        const std::size_t base = ((b * nh + i) * nw + j) * d;
        std::size_t k = 0;
        for (std::size_t c = 0; c < ch; ++c)
          for (std::size_t y = 0; y < patch.h; ++y)
            for (std::size_t xo = 0; xo < patch.w; ++xo, ++k) {
              const std::size_t pix = (i * stride.h + y) * w + j * stride.w + xo;
              (*index)[base + k] = (b * ch + c) * h * w + pix;
              (*inv)[base + k] = 1.0 / count[pix];
            }
      }
  Buffer out(numel(out_shape), 0.0);
  auto in = tokens.data();
  for (std::size_t t = 0; t < n * d; ++t) out[(*index)[t]] += in[t] * (*inv)[t];
  return make_result("fold", out_shape, std::move(out), {tokens}, [index, inv](Node& self) {
    Node& pt = parent(self, 0);
    if (!wants_grad(pt)) return;
    auto& gt = grad_of(pt);
    for (std::size_t t = 0; t < index->size(); ++t) gt[t] += self.grad[(*index)[t]] * (*inv)[t];
  });
}

Tensor pixel_shuffle(const Tensor& x, std::size_t factor) {
  require_rank(x, 4, "pixel_shuffle");
  if (factor == 0) throw ConfigError("pixel_shuffle: factor must be positive");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t f2 = factor * factor;
  if (cin % f2 != 0) {
    throw DimensionError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " +
                         std::to_string(f2));
  }
  const std::size_t cout = cin / f2, oh = h * factor, ow = w * factor;
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          const std::size_t src_c = c * f2 + (y % factor) * factor + xo % factor;
          (*index)[((b * cout + c) * oh + y) * ow + xo] = ((b * cin + src_c) * h + y / factor) * w + xo / factor;
        }
  Buffer out(x.numel());
  auto in = x.data();
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = in[(*index)[t]];
  return make_result("pixel_shuffle", {batch, cout, oh, ow}, std::move(out), {x}, [index](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& gx = grad_of(px);
    for (std::size_t t = 0; t < index->size(); ++t) gx[(*index)[t]] += self.grad[t];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& pn = parent(self, p);
      if (!wants_grad(pn)) continue;
      auto& g = grad_of(pn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& pn = parent(self, p);
      if (!wants_grad(pn)) continue;
      auto& g = grad_of(pn);
      const double sign = p == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  const auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (wants_grad(pa)) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (wants_grad(pb)) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double s) {
  Buffer out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * s;
  return make_result("scale", x.shape(), std::move(out), {x}, [s](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_constant(const Tensor& x, std::span<const double> c) {
  if (c.size() != x.numel()) throw DimensionError("add_constant: length mismatch");
  Buffer out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c[i];
  return make_result("add_constant", x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (bias.rank() != 1 || bias.dim(0) != m) throw DimensionError("add_row_bias: bias shape " + shape_str(bias.shape()));
  Buffer out(x.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x[i * m + j] + bias[j];
  return make_result("add_row_bias", x.shape(), std::move(out), {x, bias}, [n, m](Node& self) {
    Node& px = parent(self, 0);
    Node& pb = parent(self, 1);
    if (wants_grad(px)) {
      auto& g = grad_of(px);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[j] += self.grad[i * m + j];
    }
  });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) {
  Buffer out(x.numel());
  const auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  return make_result(slope == 0.0 ? "relu" : "leaky_relu", x.shape(), std::move(out), {x},
                     [slope](Node& self) {
                       Node& px = parent(self, 0);
                       if (!wants_grad(px)) return;
                       auto& g = grad_of(px);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         g[i] += (px.data[i] > 0.0 ? 1.0 : slope) * self.grad[i];
                     });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw DimensionError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_chunk = out_shape[axis] * inner;
  std::vector<std::size_t> offsets;
  Buffer out(numel(out_shape));
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.dim(axis) * inner;
    auto src = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.data() + o * chunk, chunk, out.data() + o * out_chunk + offset);
    offsets.push_back(offset);
    offset += chunk;
  }
  return make_result("concat", out_shape, std::move(out), parts,
                     [offsets, outer, inner, out_chunk, axis](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         Node& pn = parent(self, p);
                         if (!wants_grad(pn)) continue;
                         auto& g = grad_of(pn);
                         const std::size_t chunk = pn.shape[axis] * inner;
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = self.grad.data() + o * out_chunk + offsets[p];
                           double* dst = g.data() + o * chunk;
                           for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("slice: axis out of range");
  if (start + length > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds extent " + std::to_string(s[axis]));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  const std::size_t in_chunk = s[axis] * inner, out_chunk = length * inner, offset = start * inner;
  Buffer out(outer * out_chunk);
  auto src = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(src.data() + o * in_chunk + offset, out_chunk, out.data() + o * out_chunk);
  return make_result("slice", out_shape, std::move(out), {x}, [=](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* gs = self.grad.data() + o * out_chunk;
      double* dst = g.data() + o * in_chunk + offset;
      for (std::size_t i = 0; i < out_chunk; ++i) dst[i] += gs[i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Buffer out(x.data().begin(), x.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw DimensionError("permute: axis count mismatch");
  std::vector<bool> seen(axes.size(), false);
  for (auto a : axes) {
    if (a >= axes.size() || seen[a]) throw DimensionError("permute: not a permutation");
    seen[a] = true;
  }
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[axes[i]];
  const Shape in_strides = strides_of(s);
  auto index = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> coord(s.size(), 0);
  for (std::size_t t = 0; t < index->size(); ++t) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < s.size(); ++i) src += coord[i] * in_strides[axes[i]];
    (*index)[t] = src;
    for (std::size_t i = s.size(); i-- > 0;) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  Buffer out(x.numel());
  auto in = x.data();
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = in[(*index)[t]];
  return make_result("permute", out_shape, std::move(out), {x}, [index](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (std::size_t t = 0; t < index->size(); ++t) g[(*index)[t]] += self.grad[t];
  });
}

Tensor sum(const Tensor& x) {
  auto d = x.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  return make_result("sum", {1}, {total}, {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (!wants_grad(px)) return;
    auto& g = grad_of(px);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  const std::size_t n = pred.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::abs(pred[i] - target[i]);
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_result("l1_loss", {1}, {total * inv_n}, {pred, target}, [n, inv_n](Node& self) {
    Node& pp = parent(self, 0);
    Node& pt = parent(self, 1);
    const double g0 = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = pp.data[i] - pt.data[i];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (wants_grad(pp)) grad_of(pp)[i] += g0 * sgn;
      if (wants_grad(pt)) grad_of(pt)[i] -= g0 * sgn;
    }
  });
}

}  // namespace dpt
