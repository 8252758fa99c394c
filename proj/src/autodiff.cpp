#include "paln/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "paln/gemm.hpp"

namespace paln {
namespace {

void check_finite(std::span<const double> vals, const char* op) {
  for (double v : vals) {
    PALN_CHECK(std::isfinite(v), op, ": non-finite value ", v);
  }
}

int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

Tensor Tape::make_output(std::vector<int> shape, std::vector<double> values,
                         bool needs_grad) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  out.set_requires_grad(grad_enabled_ && needs_grad);
  return out;
}

void Tape::record(Tensor out, std::function<void()> backprop) {
  if (out.requires_grad()) {
    records_.push_back({std::move(backprop), std::move(out)});
  }
}

Tensor Tape::conv2d(const Tensor& input, const Tensor& kernel,
                    const Tensor& bias, int stride, int pad) {
  PALN_CHECK(input.rank() == 4, "conv2d input must be [N,C,H,W], got ",
             input.shape_str());
  PALN_CHECK(kernel.rank() == 4, "conv2d kernel must be [K,C,kh,kw], got ",
             kernel.shape_str());
  PALN_CHECK(stride >= 1 && pad >= 0, "bad stride/pad ", stride, "/", pad);
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2),
                w = input.dim(3);
  const int64_t k = kernel.dim(0), kc = kernel.dim(1), kh = kernel.dim(2),
                kw = kernel.dim(3);
  PALN_CHECK(kc == c, "conv2d channel mismatch: kernel ", kernel.shape_str(),
             " vs input ", input.shape_str());
  PALN_CHECK(bias.rank() == 1 && bias.dim(0) == k, "conv2d bias must be [",
             k, "], got ", bias.shape_str());
  PALN_CHECK(kh <= h + 2 * pad && kw <= w + 2 * pad,
             "kernel larger than padded input");
  const int64_t oh = conv_out_extent(h, kh, stride, pad);
  const int64_t ow = conv_out_extent(w, kw, stride, pad);
  PALN_CHECK(oh >= 1 && ow >= 1, "empty conv output");

  const int64_t rows = c * kh * kw;     // im2col rows
  const int64_t cols = n * oh * ow;     // im2col columns
  auto col = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(rows * cols), 0.0);
  {
    const double* in = input.values().data();
    double* cp = col->data();
    for (int64_t ci = 0; ci < c; ++ci) {
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx, cp += cols) {
          for (int64_t ni = 0; ni < n; ++ni) {
            const double* inc = in + (ni * c + ci) * h * w;
            double* cpn = cp + ni * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy) {
              const int64_t iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= h) continue;
              const double* inr = inc + iy * w;
              double* cpr = cpn + oy * ow;
              for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t ix = ox * stride + kx - pad;
                if (ix >= 0 && ix < w) cpr[ox] = inr[ix];
              }
            }
          }
        }
      }
    }
  }

  // G[k, cols] = kernel_mat[k, rows] * col, then bias and NCHW layout.
  std::vector<double> g(static_cast<std::size_t>(k * cols), 0.0);
  gemm_nn(kernel.values().data(), col->data(), g.data(), k, cols, rows);
  std::vector<double> out_vals(static_cast<std::size_t>(n * k * oh * ow));
  {
    const double* bv = bias.values().data();
    const int64_t plane = oh * ow;
    for (int64_t ni = 0; ni < n; ++ni) {
      for (int64_t ki = 0; ki < k; ++ki) {
        const double* src = g.data() + ki * cols + ni * plane;
        double* dst = out_vals.data() + (ni * k + ki) * plane;
        const double b = bv[ki];
        for (int64_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
      }
    }
  }
  check_finite(out_vals, "conv2d");

  const bool needs = input.requires_grad() || kernel.requires_grad() ||
                     bias.requires_grad();
  Tensor out = make_output({static_cast<int>(n), static_cast<int>(k),
                            static_cast<int>(oh), static_cast<int>(ow)},
                           std::move(out_vals), needs);
  record(out, [input = input, kernel = kernel, bias = bias, out, col, n, c, h,
               w, k, kh, kw, oh, ow, stride, pad, rows, cols]() mutable {
    const double* dout = out.grad().data();
    const int64_t plane = oh * ow;
    std::vector<double> dg(static_cast<std::size_t>(k * cols));
    for (int64_t ni = 0; ni < n; ++ni) {
      for (int64_t ki = 0; ki < k; ++ki) {
        std::memcpy(dg.data() + ki * cols + ni * plane,
                    dout + (ni * k + ki) * plane,
                    static_cast<std::size_t>(plane) * sizeof(double));
      }
    }
    if (bias.requires_grad()) {
      double* db = bias.grad().data();
      for (int64_t ki = 0; ki < k; ++ki) {
        const double* row = dg.data() + ki * cols;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        int64_t p = 0;
        for (; p + 4 <= cols; p += 4) {
          s0 += row[p];
          s1 += row[p + 1];
          s2 += row[p + 2];
          s3 += row[p + 3];
        }
        for (; p < cols; ++p) s0 += row[p];
        db[ki] += (s0 + s1) + (s2 + s3);
      }
    }
    if (kernel.requires_grad()) {
      gemm_nt(dg.data(), col->data(), kernel.grad().data(), k, rows, cols);
    }
    if (input.requires_grad()) {
      std::vector<double> dcol(static_cast<std::size_t>(rows * cols), 0.0);
      gemm_tn(kernel.values().data(), dg.data(), dcol.data(), rows, cols, k);
      double* din = input.grad().data();
      const double* cp = dcol.data();
      for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t ky = 0; ky < kh; ++ky) {
          for (int64_t kx = 0; kx < kw; ++kx, cp += cols) {
            for (int64_t ni = 0; ni < n; ++ni) {
              double* dinc = din + (ni * c + ci) * h * w;
              const double* cpn = cp + ni * oh * ow;
              for (int64_t oy = 0; oy < oh; ++oy) {
                const int64_t iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                double* dinr = dinc + iy * w;
                const double* cpr = cpn + oy * ow;
                for (int64_t ox = 0; ox < ow; ++ox) {
                  const int64_t ix = ox * stride + kx - pad;
                  if (ix >= 0 && ix < w) dinr[ix] += cpr[ox];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor Tape::dense(const Tensor& input, const Tensor& weight,
                   const Tensor& bias) {
  PALN_CHECK(input.rank() == 2, "dense input must be [N,D], got ",
             input.shape_str());
  PALN_CHECK(weight.rank() == 2, "dense weight must be [D,E], got ",
             weight.shape_str());
  const int64_t n = input.dim(0), d = input.dim(1);
  const int64_t wd = weight.dim(0), e = weight.dim(1);
  PALN_CHECK(d == wd, "dense dimension mismatch: input ", input.shape_str(),
             " vs weight ", weight.shape_str());
  PALN_CHECK(bias.rank() == 1 && bias.dim(0) == e, "dense bias must be [", e,
             "], got ", bias.shape_str());

  std::vector<double> out_vals(static_cast<std::size_t>(n * e));
  {
    const double* bv = bias.values().data();
    for (int64_t i = 0; i < n; ++i) {
      std::memcpy(out_vals.data() + i * e, bv,
                  static_cast<std::size_t>(e) * sizeof(double));
    }
  }
  gemm_nn(input.values().data(), weight.values().data(), out_vals.data(), n,
          e, d);
  check_finite(out_vals, "dense");

  const bool needs = input.requires_grad() || weight.requires_grad() ||
                     bias.requires_grad();
  Tensor out = make_output({static_cast<int>(n), static_cast<int>(e)},
                           std::move(out_vals), needs);
  record(out, [input = input, weight = weight, bias = bias, out, n, d, e]() mutable {
    const double* dout = out.grad().data();
    if (bias.requires_grad()) {
      double* db = bias.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        const double* row = dout + i * e;
        for (int64_t j = 0; j < e; ++j) db[j] += row[j];
      }
    }
    if (weight.requires_grad()) {
      gemm_tn(input.values().data(), dout, weight.grad().data(), d, e, n);
    }
    if (input.requires_grad()) {
      gemm_nt(dout, weight.values().data(), input.grad().data(), n, d, e);
    }
  });
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  std::vector<double> out_vals(x.values().begin(), x.values().end());
  for (double& v : out_vals) v = v > 0.0 ? v : 0.0;
  Tensor out = make_output(x.shape(), std::move(out_vals), x.requires_grad());
  record(out, [x = x, out]() mutable {
    if (!x.requires_grad()) return;
    const double* xv = x.values().data();
    const double* dout = out.grad().data();
    double* dx = x.grad().data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) {
      if (xv[i] > 0.0) dx[i] += dout[i];
    }
  });
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  std::vector<double> out_vals(static_cast<std::size_t>(x.size()));
  const double* xv = x.values().data();
  for (std::size_t i = 0; i < out_vals.size(); ++i) {
    const double v = xv[i];
    PALN_CHECK(std::isfinite(v), "sigmoid: non-finite input");
    out_vals[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                           : std::exp(v) / (1.0 + std::exp(v));
  }
  Tensor out = make_output(x.shape(), std::move(out_vals), x.requires_grad());
  record(out, [x = x, out]() mutable {
    if (!x.requires_grad()) return;
    const double* ov = out.values().data();
    const double* dout = out.grad().data();
    double* dx = x.grad().data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) dx[i] += ov[i] * (1.0 - ov[i]) * dout[i];
  });
  return out;
}

Tensor Tape::softmax(const Tensor& x) {
  PALN_CHECK(x.rank() >= 1, "softmax needs at least one axis");
  const int64_t c = x.dim(x.rank() - 1);
  const int64_t rows = x.size() / c;
  std::vector<double> out_vals(static_cast<std::size_t>(x.size()));
  const double* xv = x.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = xv + r * c;
    double* orow = out_vals.data() + r * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    PALN_CHECK(std::isfinite(mx), "softmax: non-finite input");
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int64_t j = 0; j < c; ++j) orow[j] /= denom;
  }
  Tensor out = make_output(x.shape(), std::move(out_vals), x.requires_grad());
  record(out, [x = x, out, rows, c]() mutable {
    if (!x.requires_grad()) return;
    const double* ov = out.values().data();
    const double* dout = out.grad().data();
    double* dx = x.grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const double* p = ov + r * c;
      const double* dy = dout + r * c;
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += dy[j] * p[j];
      double* dxr = dx + r * c;
      for (int64_t j = 0; j < c; ++j) dxr[j] += p[j] * (dy[j] - dot);
    }
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  PALN_CHECK(a.shape() == b.shape(), "add shape mismatch ", a.shape_str(),
             " vs ", b.shape_str());
  std::vector<double> out_vals(static_cast<std::size_t>(a.size()));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < out_vals.size(); ++i) out_vals[i] = av[i] + bv[i];
  Tensor out = make_output(a.shape(), std::move(out_vals),
                           a.requires_grad() || b.requires_grad());
  record(out, [a = a, b = b, out]() mutable {
    const double* dout = out.grad().data();
    const int64_t n = out.size();
    if (a.requires_grad()) {
      double* da = a.grad().data();
      for (int64_t i = 0; i < n; ++i) da[i] += dout[i];
    }
    if (b.requires_grad()) {
      double* db = b.grad().data();
      for (int64_t i = 0; i < n; ++i) db[i] += dout[i];
    }
  });
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  PALN_CHECK(a.shape() == b.shape(), "sub shape mismatch ", a.shape_str(),
             " vs ", b.shape_str());
  std::vector<double> out_vals(static_cast<std::size_t>(a.size()));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < out_vals.size(); ++i) out_vals[i] = av[i] - bv[i];
  Tensor out = make_output(a.shape(), std::move(out_vals),
                           a.requires_grad() || b.requires_grad());
  record(out, [a = a, b = b, out]() mutable {
    const double* dout = out.grad().data();
    const int64_t n = out.size();
    if (a.requires_grad()) {
      double* da = a.grad().data();
      for (int64_t i = 0; i < n; ++i) da[i] += dout[i];
    }
    if (b.requires_grad()) {
      double* db = b.grad().data();
      for (int64_t i = 0; i < n; ++i) db[i] -= dout[i];
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& a, double factor) {
  PALN_CHECK(std::isfinite(factor), "scale: non-finite factor");
  std::vector<double> out_vals(static_cast<std::size_t>(a.size()));
  const double* av = a.values().data();
  for (std::size_t i = 0; i < out_vals.size(); ++i) out_vals[i] = factor * av[i];
  Tensor out = make_output(a.shape(), std::move(out_vals), a.requires_grad());
  record(out, [a = a, out, factor]() mutable {
    if (!a.requires_grad()) return;
    const double* dout = out.grad().data();
    double* da = a.grad().data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) da[i] += factor * dout[i];
  });
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = make_output({1}, {s}, a.requires_grad());
  record(out, [a = a, out]() mutable {
    if (!a.requires_grad()) return;
    const double g = out.grad()[0];
    double* da = a.grad().data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) da[i] += g;
  });
  return out;
}

Tensor Tape::smooth_l1_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) {
    PALN_CHECK(std::isfinite(v), "smooth_l1: non-finite input");
    const double a = std::abs(v);
    s += a < 1.0 ? 0.5 * v * v : a - 0.5;
  }
  Tensor out = make_output({1}, {s}, x.requires_grad());
  record(out, [x = x, out]() mutable {
    if (!x.requires_grad()) return;
    const double g = out.grad()[0];
    const double* xv = x.values().data();
    double* dx = x.grad().data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) {
      const double v = xv[i];
      dx[i] += g * (std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0));
    }
  });
  return out;
}

Tensor Tape::bce_mean(const Tensor& p, double target) {
  return bce_mean(p, target, std::span<const double>{});
}

Tensor Tape::bce_mean(const Tensor& p, double target,
                      std::span<const double> weights) {
  PALN_CHECK(target == 0.0 || target == 1.0, "bce target must be 0 or 1");
  const int64_t n = p.size();
  PALN_CHECK(weights.empty() || static_cast<int64_t>(weights.size()) == n,
             "bce weight count ", weights.size(), " does not match ", n,
             " probabilities");
  const double* pv = p.values().data();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    PALN_CHECK(std::isfinite(pv[i]), "bce: non-finite probability");
    const double term =
        target == 1.0 ? -std::log(std::max(pv[i], kProbEps))
                      : -std::log(std::max(1.0 - pv[i], kProbEps));
    s += weights.empty() ? term : weights[i] * term;
  }
  Tensor out = make_output({1}, {s / static_cast<double>(n)}, p.requires_grad());
  std::vector<double> w(weights.begin(), weights.end());
  record(out, [p = p, out, target, w = std::move(w), n]() mutable {
    if (!p.requires_grad()) return;
    const double g = out.grad()[0] / static_cast<double>(n);
    const double* pv = p.values().data();
    double* dp = p.grad().data();
    for (int64_t i = 0; i < n; ++i) {
      const double d = target == 1.0 ? -1.0 / std::max(pv[i], kProbEps)
                                     : 1.0 / std::max(1.0 - pv[i], kProbEps);
      dp[i] += g * (w.empty() ? d : w[i] * d);
    }
  });
  return out;
}

Tensor Tape::cross_entropy_sum(const Tensor& probs,
                               std::span<const int> labels) {
  int64_t rows, c;
  if (probs.rank() == 1) {
    rows = 1;
    c = probs.dim(0);
  } else {
    PALN_CHECK(probs.rank() == 2, "cross_entropy probs must be [C] or [M,C]");
    rows = probs.dim(0);
    c = probs.dim(1);
  }
  PALN_CHECK(static_cast<int64_t>(labels.size()) == rows, "expected ", rows,
             " labels, got ", labels.size());
  const double* pv = probs.values().data();
  double s = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    const int label = labels[r];
    PALN_CHECK(label >= 0 && label < c, "label ", label,
               " outside class range [0,", c, ")");
    s += -std::log(std::max(pv[r * c + label], kProbEps));
  }
  Tensor out = make_output({1}, {s}, probs.requires_grad());
  std::vector<int> lab(labels.begin(), labels.end());
  record(out, [probs = probs, out, lab = std::move(lab), rows, c]() mutable {
    if (!probs.requires_grad()) return;
    const double g = out.grad()[0];
    const double* pv = probs.values().data();
    double* dp = probs.grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const int64_t i = r * c + lab[r];
      dp[i] += g * (-1.0 / std::max(pv[i], kProbEps));
    }
  });
  return out;
}

Tensor Tape::rows_from_maps(const Tensor& maps, int groups, int k) {
  PALN_CHECK(maps.rank() == 4, "rows_from_maps expects [N,G*K,H,W], got ",
             maps.shape_str());
  const int64_t n = maps.dim(0), ch = maps.dim(1), h = maps.dim(2),
                w = maps.dim(3);
  PALN_CHECK(groups >= 1 && k >= 1 && ch == static_cast<int64_t>(groups) * k,
             "channel count ", ch, " != groups ", groups, " * k ", k);
  const int64_t out_rows = n * h * w * groups;
  std::vector<double> out_vals(static_cast<std::size_t>(out_rows * k));
  const double* mv = maps.values().data();
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        for (int64_t g = 0; g < groups; ++g) {
          const int64_t row = (((ni * h + y) * w + x) * groups + g);
          for (int64_t j = 0; j < k; ++j) {
            out_vals[static_cast<std::size_t>(row * k + j)] =
                mv[((ni * ch + g * k + j) * h + y) * w + x];
          }
        }
      }
    }
  }
  Tensor out = make_output({static_cast<int>(out_rows), k},
                           std::move(out_vals), maps.requires_grad());
  record(out, [maps = maps, out, n, ch, h, w, groups, k]() mutable {
    if (!maps.requires_grad()) return;
    const double* dout = out.grad().data();
    double* dm = maps.grad().data();
    for (int64_t ni = 0; ni < n; ++ni) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          for (int64_t g = 0; g < groups; ++g) {
            const int64_t row = (((ni * h + y) * w + x) * groups + g);
            for (int64_t j = 0; j < k; ++j) {
              dm[((ni * ch + g * k + j) * h + y) * w + x] +=
                  dout[row * k + j];
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor Tape::gather_rows(const Tensor& matrix, std::span<const int> rows) {
  PALN_CHECK(matrix.rank() == 2, "gather_rows expects a matrix, got ",
             matrix.shape_str());
  const int64_t n = matrix.dim(0), k = matrix.dim(1);
  std::vector<double> out_vals(rows.size() * static_cast<std::size_t>(k));
  const double* mv = matrix.values().data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    PALN_CHECK(rows[r] >= 0 && rows[r] < n, "row ", rows[r], " out of range");
    std::memcpy(out_vals.data() + r * k, mv + static_cast<int64_t>(rows[r]) * k,
                static_cast<std::size_t>(k) * sizeof(double));
  }
  Tensor out = make_output({static_cast<int>(rows.size()), static_cast<int>(k)},
                           std::move(out_vals), matrix.requires_grad());
  std::vector<int> idx(rows.begin(), rows.end());
  record(out, [matrix = matrix, out, idx = std::move(idx), k]() mutable {
    if (!matrix.requires_grad()) return;
    const double* dout = out.grad().data();
    double* dm = matrix.grad().data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* row = dm + static_cast<int64_t>(idx[r]) * k;
      const double* src = dout + static_cast<int64_t>(r) * k;
      for (int64_t j = 0; j < k; ++j) row[j] += src[j];
    }
  });
  return out;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  PALN_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
             "concat_cols expects matrices with equal row counts: ",
             a.shape_str(), " vs ", b.shape_str());
  const int64_t n = a.dim(0), ka = a.dim(1), kb = b.dim(1);
  std::vector<double> out_vals(static_cast<std::size_t>(n * (ka + kb)));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out_vals.data() + i * (ka + kb), av + i * ka,
                static_cast<std::size_t>(ka) * sizeof(double));
    std::memcpy(out_vals.data() + i * (ka + kb) + ka, bv + i * kb,
                static_cast<std::size_t>(kb) * sizeof(double));
  }
  Tensor out = make_output({static_cast<int>(n), static_cast<int>(ka + kb)},
                           std::move(out_vals),
                           a.requires_grad() || b.requires_grad());
  record(out, [a = a, b = b, out, n, ka, kb]() mutable {
    const double* dout = out.grad().data();
    if (a.requires_grad()) {
      double* da = a.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        const double* src = dout + i * (ka + kb);
        for (int64_t j = 0; j < ka; ++j) da[i * ka + j] += src[j];
      }
    }
    if (b.requires_grad()) {
      double* db = b.grad().data();
      for (int64_t i = 0; i < n; ++i) {
        const double* src = dout + i * (ka + kb) + ka;
        for (int64_t j = 0; j < kb; ++j) db[i * kb + j] += src[j];
      }
    }
  });
  return out;
}

void Tape::backward(const Tensor& loss) {
  PALN_CHECK(loss.size() == 1, "backward needs a scalar loss, got ",
             loss.shape_str());
  PALN_CHECK(!used_, "backward already ran on this tape; run a new forward");
  used_ = true;
  if (!loss.requires_grad()) return;  // constant loss: all grads stay zero
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    // Records off the path to the loss never get a gradient buffer.
    if (!it->out.grad_allocated()) continue;
    it->backprop();
  }
}

double grad_check(const std::function<Tensor(Tape&)>& f,
                  std::span<const Tensor> leaves, double eps) {
  PALN_CHECK(eps > 0.0, "grad_check: eps must be positive, got ", eps);
  std::vector<std::vector<double>> analytic;
  {
    for (const Tensor& leaf : leaves) Tensor(leaf).zero_grad();
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      Tensor l = leaf;
      auto g = l.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }
  auto eval = [&]() {
    Tape tape(false);
    return f(tape).item();
  };
  double max_err = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    auto vals = leaf.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = eval();
      vals[i] = orig - eps;
      const double fm = eval();
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[li][i];
      const double denom = std::max({1e-6, std::abs(a), std::abs(numeric)});
      max_err = std::max(max_err, std::abs(a - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace paln
