#include "conure/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "conure/errors.hpp"

namespace conure::ops {

namespace {

void require_rank(const Tensor& v, int rank, const char* op, const char* operand) {
  if (v.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + operand + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(v.shape));
  }
}

void require_axis(int got, int want, const char* op, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": " + what + " is " + std::to_string(got) +
                         ", expected " + std::to_string(want));
  }
}

}  // namespace

Var embedding_lookup(Tape& t, Var table, const std::vector<int>& ids) {
  const Tensor& tv = t.value(table);
  require_rank(tv, 2, "embedding_lookup", "table");
  const int vocab = tv.dim(0);
  const int f = tv.dim(1);
  const int n = static_cast<int>(ids.size());
  for (int p = 0; p < n; ++p) {
    if (ids[p] < 0 || ids[p] >= vocab) {
      throw VocabularyError("embedding_lookup: id " + std::to_string(ids[p]) +
                            " at position " + std::to_string(p) +
                            " outside vocabulary [0, " + std::to_string(vocab) + ")");
    }
  }
  Tensor out = Tensor::zeros({n, f});
  for (int p = 0; p < n; ++p) {
    const double* src = &tv.data[static_cast<std::size_t>(ids[p]) * f];
    std::copy(src, src + f, &out.data[static_cast<std::size_t>(p) * f]);
  }
  return t.record(std::move(out), {table}, [table, ids, f](Tape& tp, Var out_v) {
    Tensor* gt = tp.grad_if(table);
    if (gt == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    for (std::size_t p = 0; p < ids.size(); ++p) {
      const double* grow = &g.data[p * f];
      double* trow = &gt->data[static_cast<std::size_t>(ids[p]) * f];
      for (int c = 0; c < f; ++c) trow[c] += grow[c];
    }
  });
}

Var causal_dilated_conv1d(Tape& t, Var input, Var kernel, Var bias, int dilation) {
  const Tensor& iv = t.value(input);
  const Tensor& kv = t.value(kernel);
  const Tensor& bv = t.value(bias);
  require_rank(iv, 2, "causal_dilated_conv1d", "input");
  require_rank(kv, 3, "causal_dilated_conv1d", "kernel");
  require_rank(bv, 1, "causal_dilated_conv1d", "bias");
  const int n = iv.dim(0);
  const int fi = iv.dim(1);
  const int k = kv.dim(0);
  const int fo = kv.dim(2);
  if (n < 1) throw DimensionError("causal_dilated_conv1d: input axis 0 is empty");
  if (k < 1) throw DimensionError("causal_dilated_conv1d: kernel axis 0 is empty");
  require_axis(kv.dim(1), fi, "causal_dilated_conv1d", "kernel axis 1 (input channels)");
  require_axis(bv.dim(0), fo, "causal_dilated_conv1d", "bias axis 0 (output channels)");
  if (dilation < 1) {
    throw ContractError("causal_dilated_conv1d: dilation must be positive, got " +
                        std::to_string(dilation));
  }
  // tap j reads input position t - (k-1-j)*dilation; negative = zero padding
  Tensor out = Tensor::zeros({n, fo});
  for (int tt = 0; tt < n; ++tt) {
    double* orow = &out.data[static_cast<std::size_t>(tt) * fo];
    for (int o = 0; o < fo; ++o) orow[o] = bv.data[static_cast<std::size_t>(o)];
    for (int j = 0; j < k; ++j) {
      const int s = tt - (k - 1 - j) * dilation;
      if (s < 0) continue;
      const double* irow = &iv.data[static_cast<std::size_t>(s) * fi];
      const double* kslab = &kv.data[static_cast<std::size_t>(j) * fi * fo];
      for (int i = 0; i < fi; ++i) {
        const double x = irow[i];
        const double* kcol = kslab + static_cast<std::size_t>(i) * fo;
        for (int o = 0; o < fo; ++o) orow[o] += x * kcol[o];
      }
    }
  }
  return t.record(std::move(out), {input, kernel, bias},
                  [input, kernel, bias, dilation, n, fi, k, fo](Tape& tp, Var out_v) {
                    const Tensor& g = *tp.gradient(out_v);
                    const Tensor& iv2 = tp.value(input);
                    const Tensor& kv2 = tp.value(kernel);
                    Tensor* gi = tp.grad_if(input);
                    Tensor* gk = tp.grad_if(kernel);
                    Tensor* gb = tp.grad_if(bias);
                    for (int tt = 0; tt < n; ++tt) {
                      const double* grow = &g.data[static_cast<std::size_t>(tt) * fo];
                      if (gb != nullptr) {
                        for (int o = 0; o < fo; ++o) gb->data[static_cast<std::size_t>(o)] += grow[o];
                      }
                      for (int j = 0; j < k; ++j) {
                        const int s = tt - (k - 1 - j) * dilation;
                        if (s < 0) continue;
                        for (int i = 0; i < fi; ++i) {
                          const std::size_t kbase = (static_cast<std::size_t>(j) * fi + i) * fo;
                          if (gi != nullptr) {
                            double acc = 0.0;
                            for (int o = 0; o < fo; ++o) acc += kv2.data[kbase + o] * grow[o];
                            gi->data[static_cast<std::size_t>(s) * fi + i] += acc;
                          }
                          if (gk != nullptr) {
                            const double x = iv2.data[static_cast<std::size_t>(s) * fi + i];
                            for (int o = 0; o < fo; ++o) gk->data[kbase + o] += x * grow[o];
                          }
                        }
                      }
                    }
                  });
}

Var layer_norm(Tape& t, Var input, Var gain, Var bias, double epsilon) {
  const Tensor& iv = t.value(input);
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  require_rank(iv, 2, "layer_norm", "input");
  require_rank(gv, 1, "layer_norm", "gain");
  require_rank(bv, 1, "layer_norm", "bias");
  const int n = iv.dim(0);
  const int f = iv.dim(1);
  if (f < 1) throw DimensionError("layer_norm: empty feature axis");
  require_axis(gv.dim(0), f, "layer_norm", "gain length");
  require_axis(bv.dim(0), f, "layer_norm", "bias length");
  if (!(epsilon > 0.0)) throw ContractError("layer_norm: epsilon must be positive");

  Tensor out = Tensor::zeros({n, f});
  std::vector<double> xhat(static_cast<std::size_t>(n) * f);
  std::vector<double> istd(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const double* x = &iv.data[static_cast<std::size_t>(r) * f];
    double mean = 0.0;
    for (int c = 0; c < f; ++c) mean += x[c];
    mean /= f;
    double var = 0.0;
    for (int c = 0; c < f; ++c) {
      const double d = x[c] - mean;
      var += d * d;
    }
    var /= f;
    const double is = 1.0 / std::sqrt(var + epsilon);
    istd[static_cast<std::size_t>(r)] = is;
    double* xh = &xhat[static_cast<std::size_t>(r) * f];
    double* y = &out.data[static_cast<std::size_t>(r) * f];
    for (int c = 0; c < f; ++c) {
      xh[c] = (x[c] - mean) * is;
      y[c] = gv.data[static_cast<std::size_t>(c)] * xh[c] + bv.data[static_cast<std::size_t>(c)];
    }
  }
  return t.record(std::move(out), {input, gain, bias},
                  [input, gain, bias, n, f, xhat = std::move(xhat),
                   istd = std::move(istd)](Tape& tp, Var out_v) {
                    const Tensor& g = *tp.gradient(out_v);
                    const Tensor& gv2 = tp.value(gain);
                    Tensor* gi = tp.grad_if(input);
                    Tensor* gg = tp.grad_if(gain);
                    Tensor* gb = tp.grad_if(bias);
                    for (int r = 0; r < n; ++r) {
                      const double* grow = &g.data[static_cast<std::size_t>(r) * f];
                      const double* xh = &xhat[static_cast<std::size_t>(r) * f];
                      if (gg != nullptr) {
                        for (int c = 0; c < f; ++c) gg->data[static_cast<std::size_t>(c)] += grow[c] * xh[c];
                      }
                      if (gb != nullptr) {
                        for (int c = 0; c < f; ++c) gb->data[static_cast<std::size_t>(c)] += grow[c];
                      }
                      if (gi != nullptr) {
                        double m1 = 0.0;
                        double m2 = 0.0;
                        for (int c = 0; c < f; ++c) {
                          const double dxh = grow[c] * gv2.data[static_cast<std::size_t>(c)];
                          m1 += dxh;
                          m2 += dxh * xh[c];
                        }
                        m1 /= f;
                        m2 /= f;
                        const double is = istd[static_cast<std::size_t>(r)];
                        double* girow = &gi->data[static_cast<std::size_t>(r) * f];
                        for (int c = 0; c < f; ++c) {
                          const double dxh = grow[c] * gv2.data[static_cast<std::size_t>(c)];
                          girow[c] += is * (dxh - m1 - xh[c] * m2);
                        }
                      }
                    }
                  });
}

Var relu(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {x}, [x](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    const Tensor& xv = tp.value(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      if (xv.data[i] > 0.0) gx->data[i] += g.data[i];
    }
  });
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require_rank(av, 2, "matmul", "left operand");
  require_rank(bv, 2, "matmul", "right operand");
  const int m = av.dim(0);
  const int p = av.dim(1);
  const int q = bv.dim(1);
  require_axis(bv.dim(0), p, "matmul", "right operand axis 0");
  Tensor out = Tensor::zeros({m, q});
  for (int i = 0; i < m; ++i) {
    const double* arow = &av.data[static_cast<std::size_t>(i) * p];
    double* orow = &out.data[static_cast<std::size_t>(i) * q];
    for (int kk = 0; kk < p; ++kk) {
      const double av_ik = arow[kk];
      const double* brow = &bv.data[static_cast<std::size_t>(kk) * q];
      for (int j = 0; j < q; ++j) orow[j] += av_ik * brow[j];
    }
  }
  return t.record(std::move(out), {a, b}, [a, b, m, p, q](Tape& tp, Var out_v) {
    const Tensor& g = *tp.gradient(out_v);
    const Tensor& av2 = tp.value(a);
    const Tensor& bv2 = tp.value(b);
    if (Tensor* ga = tp.grad_if(a)) {
      // dA = G * B^T
      for (int i = 0; i < m; ++i) {
        const double* grow = &g.data[static_cast<std::size_t>(i) * q];
        double* garow = &ga->data[static_cast<std::size_t>(i) * p];
        for (int kk = 0; kk < p; ++kk) {
          const double* brow = &bv2.data[static_cast<std::size_t>(kk) * q];
          double acc = 0.0;
          for (int j = 0; j < q; ++j) acc += grow[j] * brow[j];
          garow[kk] += acc;
        }
      }
    }
    if (Tensor* gb = tp.grad_if(b)) {
      // dB = A^T * G
      for (int kk = 0; kk < p; ++kk) {
        double* gbrow = &gb->data[static_cast<std::size_t>(kk) * q];
        for (int i = 0; i < m; ++i) {
          const double a_ik = av2.data[static_cast<std::size_t>(i) * p + kk];
          const double* grow = &g.data[static_cast<std::size_t>(i) * q];
          for (int j = 0; j < q; ++j) gbrow[j] += a_ik * grow[j];
        }
      }
    }
  });
}

Var transpose(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 2, "transpose", "operand");
  const int m = xv.dim(0);
  const int n = xv.dim(1);
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
  }
  return t.record(std::move(out), {x}, [x, m, n](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) gx->at(i, j) += g.at(j, i);
    }
  });
}

namespace {

Var elementwise_pair(Tape& t, Var a, Var b, const char* op, double sign_b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(av.shape) +
                         " does not match " + shape_str(bv.shape));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += sign_b * bv.data[i];
  return t.record(std::move(out), {a, b}, [a, b, sign_b](Tape& tp, Var out_v) {
    const Tensor& g = *tp.gradient(out_v);
    if (Tensor* ga = tp.grad_if(a)) {
      for (std::size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i];
    }
    if (Tensor* gb = tp.grad_if(b)) {
      for (std::size_t i = 0; i < g.data.size(); ++i) gb->data[i] += sign_b * g.data[i];
    }
  });
}

}  // namespace

Var add(Tape& t, Var a, Var b) { return elementwise_pair(t, a, b, "add", 1.0); }
Var sub(Tape& t, Var a, Var b) { return elementwise_pair(t, a, b, "sub", -1.0); }

Var scale(Tape& t, Var x, double c) {
  Tensor out = t.value(x);
  for (double& v : out.data) v *= c;
  return t.record(std::move(out), {x}, [x, c](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx->data[i] += c * g.data[i];
  });
}

Var bias_add(Tape& t, Var x, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& bv = t.value(bias);
  require_rank(xv, 2, "bias_add", "input");
  require_rank(bv, 1, "bias_add", "bias");
  const int n = xv.dim(0);
  const int m = xv.dim(1);
  require_axis(bv.dim(0), m, "bias_add", "bias length");
  Tensor out = xv;
  for (int r = 0; r < n; ++r) {
    double* orow = &out.data[static_cast<std::size_t>(r) * m];
    for (int c = 0; c < m; ++c) orow[c] += bv.data[static_cast<std::size_t>(c)];
  }
  return t.record(std::move(out), {x, bias}, [x, bias, n, m](Tape& tp, Var out_v) {
    const Tensor& g = *tp.gradient(out_v);
    if (Tensor* gx = tp.grad_if(x)) {
      for (std::size_t i = 0; i < g.data.size(); ++i) gx->data[i] += g.data[i];
    }
    if (Tensor* gb = tp.grad_if(bias)) {
      for (int r = 0; r < n; ++r) {
        const double* grow = &g.data[static_cast<std::size_t>(r) * m];
        for (int c = 0; c < m; ++c) gb->data[static_cast<std::size_t>(c)] += grow[c];
      }
    }
  });
}

Var mask_multiply(Tape& t, Var x, const Tensor& mask) {
  const Tensor& xv = t.value(x);
  if (!xv.same_shape(mask)) {
    throw DimensionError("mask_multiply: mask shape " + shape_str(mask.shape) +
                         " does not match operand " + shape_str(xv.shape));
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  const Tensor* mp = &mask;
  return t.record(std::move(out), {x}, [x, mp](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx->data[i] += g.data[i] * mp->data[i];
  });
}

Var stop_gradient(Tape& t, Var x) { return t.leaf(t.value(x), false); }

Var gather_cols(Tape& t, Var matrix, const std::vector<int>& cols) {
  const Tensor& mv = t.value(matrix);
  if (mv.rank() != 1 && mv.rank() != 2) {
    throw DimensionError("gather_cols: operand must have rank 1 or 2, got shape " +
                         shape_str(mv.shape));
  }
  const int r = mv.rank() == 2 ? mv.dim(0) : 1;
  const int cdim = mv.rank() == 2 ? mv.dim(1) : mv.dim(0);
  const int n = static_cast<int>(cols.size());
  for (int j = 0; j < n; ++j) {
    if (cols[j] < 0 || cols[j] >= cdim) {
      throw VocabularyError("gather_cols: column id " + std::to_string(cols[j]) +
                            " outside [0, " + std::to_string(cdim) + ")");
    }
  }
  Tensor out = mv.rank() == 2 ? Tensor::zeros({r, n}) : Tensor::zeros({n});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < n; ++j) {
      out.data[static_cast<std::size_t>(i) * n + j] =
          mv.data[static_cast<std::size_t>(i) * cdim + cols[j]];
    }
  }
  return t.record(std::move(out), {matrix}, [matrix, cols, r, cdim, n](Tape& tp, Var out_v) {
    Tensor* gm = tp.grad_if(matrix);
    if (gm == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < n; ++j) {
        gm->data[static_cast<std::size_t>(i) * cdim + cols[j]] +=
            g.data[static_cast<std::size_t>(i) * n + j];
      }
    }
  });
}

Var rows_dot_cols(Tape& t, Var rows, Var matrix, Var bias, const std::vector<int>& cols) {
  const Tensor& rv = t.value(rows);
  const Tensor& mv = t.value(matrix);
  require_rank(rv, 2, "rows_dot_cols", "rows");
  require_rank(mv, 2, "rows_dot_cols", "matrix");
  const int nb = rv.dim(0);
  const int f = rv.dim(1);
  const int cdim = mv.dim(1);
  require_axis(mv.dim(0), f, "rows_dot_cols", "matrix axis 0");
  if (static_cast<int>(cols.size()) != nb) {
    throw DimensionError("rows_dot_cols: got " + std::to_string(cols.size()) +
                         " column ids for " + std::to_string(nb) + " rows");
  }
  const bool has_bias = bias.valid();
  if (has_bias) {
    const Tensor& bv = t.value(bias);
    require_rank(bv, 1, "rows_dot_cols", "bias");
    require_axis(bv.dim(0), cdim, "rows_dot_cols", "bias length");
  }
  for (int i = 0; i < nb; ++i) {
    if (cols[i] < 0 || cols[i] >= cdim) {
      throw VocabularyError("rows_dot_cols: column id " + std::to_string(cols[i]) +
                            " outside [0, " + std::to_string(cdim) + ")");
    }
  }
  Tensor out = Tensor::zeros({nb});
  for (int i = 0; i < nb; ++i) {
    const double* rrow = &rv.data[static_cast<std::size_t>(i) * f];
    double acc = has_bias ? t.value(bias).data[static_cast<std::size_t>(cols[i])] : 0.0;
    for (int kk = 0; kk < f; ++kk) {
      acc += rrow[kk] * mv.data[static_cast<std::size_t>(kk) * cdim + cols[i]];
    }
    out.data[static_cast<std::size_t>(i)] = acc;
  }
  std::vector<Var> inputs{rows, matrix};
  if (has_bias) inputs.push_back(bias);
  return t.record(std::move(out), inputs,
                  [rows, matrix, bias, cols, nb, f, cdim, has_bias](Tape& tp, Var out_v) {
                    const Tensor& g = *tp.gradient(out_v);
                    const Tensor& rv2 = tp.value(rows);
                    const Tensor& mv2 = tp.value(matrix);
                    Tensor* gr = tp.grad_if(rows);
                    Tensor* gm = tp.grad_if(matrix);
                    Tensor* gb = has_bias ? tp.grad_if(bias) : nullptr;
                    for (int i = 0; i < nb; ++i) {
                      const double gi = g.data[static_cast<std::size_t>(i)];
                      const int c = cols[i];
                      if (gr != nullptr) {
                        double* grow = &gr->data[static_cast<std::size_t>(i) * f];
                        for (int kk = 0; kk < f; ++kk) {
                          grow[kk] += gi * mv2.data[static_cast<std::size_t>(kk) * cdim + c];
                        }
                      }
                      if (gm != nullptr) {
                        const double* rrow = &rv2.data[static_cast<std::size_t>(i) * f];
                        for (int kk = 0; kk < f; ++kk) {
                          gm->data[static_cast<std::size_t>(kk) * cdim + c] += gi * rrow[kk];
                        }
                      }
                      if (gb != nullptr) gb->data[static_cast<std::size_t>(c)] += gi;
                    }
                  });
}

Var row(Tape& t, Var x, int r) {
  const Tensor& xv = t.value(x);
  require_rank(xv, 2, "row", "operand");
  const int n = xv.dim(0);
  const int f = xv.dim(1);
  if (r < 0 || r >= n) {
    throw DimensionError("row: index " + std::to_string(r) + " outside [0, " +
                         std::to_string(n) + ")");
  }
  Tensor out = Tensor::zeros({1, f});
  std::copy(&xv.data[static_cast<std::size_t>(r) * f],
            &xv.data[static_cast<std::size_t>(r) * f] + f, out.data.begin());
  return t.record(std::move(out), {x}, [x, r, f](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    double* grow = &gx->data[static_cast<std::size_t>(r) * f];
    for (int c = 0; c < f; ++c) grow[c] += g.data[static_cast<std::size_t>(c)];
  });
}

Var sum(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  return t.record(Tensor::scalar(acc), {x}, [x](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const double g0 = tp.gradient(out_v)->data[0];
    for (double& v : gx->data) v += g0;
  });
}

Var sum_squares(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  double acc = 0.0;
  for (double v : xv.data) acc += v * v;
  return t.record(Tensor::scalar(acc), {x}, [x](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const double g0 = tp.gradient(out_v)->data[0];
    const Tensor& xv2 = tp.value(x);
    for (std::size_t i = 0; i < xv2.data.size(); ++i) gx->data[i] += g0 * 2.0 * xv2.data[i];
  });
}

Var log_sigmoid(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  Tensor out = xv;
  for (double& v : out.data) {
    v = v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v));
  }
  return t.record(std::move(out), {x}, [x](Tape& tp, Var out_v) {
    Tensor* gx = tp.grad_if(x);
    if (gx == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    const Tensor& xv2 = tp.value(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double v = xv2.data[i];
      // d/dx log sigmoid(x) = sigmoid(-x)
      const double s = v >= 0.0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
      gx->data[i] += g.data[i] * s;
    }
  });
}

Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& targets, int first_col) {
  const Tensor& lv = t.value(logits);
  require_rank(lv, 2, "softmax_cross_entropy", "logits");
  const int nb = lv.dim(0);
  const int cdim = lv.dim(1);
  if (nb < 1) throw ContractError("softmax_cross_entropy: empty batch");
  if (first_col < 0 || first_col >= cdim) {
    throw DimensionError("softmax_cross_entropy: first_col " + std::to_string(first_col) +
                         " outside [0, " + std::to_string(cdim) + ")");
  }
  if (static_cast<int>(targets.size()) != nb) {
    throw DimensionError("softmax_cross_entropy: got " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(nb) + " rows");
  }
  std::vector<double> lse(static_cast<std::size_t>(nb));
  double loss = 0.0;
  for (int i = 0; i < nb; ++i) {
    if (targets[i] < first_col || targets[i] >= cdim) {
      throw VocabularyError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                            " outside [" + std::to_string(first_col) + ", " +
                            std::to_string(cdim) + ")");
    }
    const double* lrow = &lv.data[static_cast<std::size_t>(i) * cdim];
    double mx = lrow[first_col];
    for (int c = first_col + 1; c < cdim; ++c) mx = std::max(mx, lrow[c]);
    double z = 0.0;
    for (int c = first_col; c < cdim; ++c) z += std::exp(lrow[c] - mx);
    lse[static_cast<std::size_t>(i)] = mx + std::log(z);
    loss += lse[static_cast<std::size_t>(i)] - lrow[targets[i]];
  }
  loss /= nb;
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, targets, first_col, nb, cdim, lse = std::move(lse)](Tape& tp, Var out_v) {
                    Tensor* gl = tp.grad_if(logits);
                    if (gl == nullptr) return;
                    const double g0 = tp.gradient(out_v)->data[0];
                    const Tensor& lv2 = tp.value(logits);
                    for (int i = 0; i < nb; ++i) {
                      const double* lrow = &lv2.data[static_cast<std::size_t>(i) * cdim];
                      double* grow = &gl->data[static_cast<std::size_t>(i) * cdim];
                      const double denom = lse[static_cast<std::size_t>(i)];
                      for (int c = first_col; c < cdim; ++c) {
                        const double p = std::exp(lrow[c] - denom);
                        const double ind = c == targets[i] ? 1.0 : 0.0;
                        grow[c] += g0 * (p - ind) / nb;
                      }
                    }
                  });
}

Var sampled_softmax_nll(Tape& t, Var cand_logits, Var target_logits,
                        const std::vector<int>& target_slot,
                        const std::vector<std::uint8_t>& active) {
  const Tensor& cv = t.value(cand_logits);
  const Tensor& tv = t.value(target_logits);
  require_rank(cv, 2, "sampled_softmax_nll", "candidate logits");
  require_rank(tv, 1, "sampled_softmax_nll", "target logits");
  const int nb = cv.dim(0);
  const int nc = cv.dim(1);
  require_axis(tv.dim(0), nb, "sampled_softmax_nll", "target logits length");
  if (static_cast<int>(target_slot.size()) != nb || static_cast<int>(active.size()) != nb) {
    throw DimensionError("sampled_softmax_nll: slot/active lengths must equal batch size " +
                         std::to_string(nb));
  }
  int live = 0;
  for (int i = 0; i < nb; ++i) {
    if (target_slot[i] < -1 || target_slot[i] >= nc) {
      throw ContractError("sampled_softmax_nll: slot " + std::to_string(target_slot[i]) +
                          " outside [-1, " + std::to_string(nc) + ")");
    }
    if (active[i] != 0) ++live;
  }
  if (live == 0) throw ContractError("sampled_softmax_nll: no active rows");

  std::vector<double> lse(static_cast<std::size_t>(nb), 0.0);
  double loss = 0.0;
  for (int i = 0; i < nb; ++i) {
    if (active[i] == 0) continue;
    const double* crow = &cv.data[static_cast<std::size_t>(i) * nc];
    const double tl = tv.data[static_cast<std::size_t>(i)];
    double mx = tl;
    for (int j = 0; j < nc; ++j) {
      if (j != target_slot[i]) mx = std::max(mx, crow[j]);
    }
    double z = std::exp(tl - mx);
    for (int j = 0; j < nc; ++j) {
      if (j != target_slot[i]) z += std::exp(crow[j] - mx);
    }
    lse[static_cast<std::size_t>(i)] = mx + std::log(z);
    loss += lse[static_cast<std::size_t>(i)] - tl;
  }
  loss /= live;
  return t.record(Tensor::scalar(loss), {cand_logits, target_logits},
                  [cand_logits, target_logits, target_slot, active, nb, nc, live,
                   lse = std::move(lse)](Tape& tp, Var out_v) {
                    const double g0 = tp.gradient(out_v)->data[0];
                    const Tensor& cv2 = tp.value(cand_logits);
                    const Tensor& tv2 = tp.value(target_logits);
                    Tensor* gc = tp.grad_if(cand_logits);
                    Tensor* gt = tp.grad_if(target_logits);
                    for (int i = 0; i < nb; ++i) {
                      if (active[i] == 0) continue;
                      const double denom = lse[static_cast<std::size_t>(i)];
                      if (gt != nullptr) {
                        const double pt = std::exp(tv2.data[static_cast<std::size_t>(i)] - denom);
                        gt->data[static_cast<std::size_t>(i)] += g0 * (pt - 1.0) / live;
                      }
                      if (gc != nullptr) {
                        const double* crow = &cv2.data[static_cast<std::size_t>(i) * nc];
                        double* grow = &gc->data[static_cast<std::size_t>(i) * nc];
                        for (int j = 0; j < nc; ++j) {
                          if (j == target_slot[i]) continue;
                          grow[j] += g0 * std::exp(crow[j] - denom) / live;
                        }
                      }
                    }
                  });
}

Var causal_softmax(Tape& t, Var scores) {
  const Tensor& sv = t.value(scores);
  require_rank(sv, 2, "causal_softmax", "scores");
  const int n = sv.dim(0);
  require_axis(sv.dim(1), n, "causal_softmax", "scores axis 1");
  Tensor out = Tensor::zeros({n, n});
  for (int r = 0; r < n; ++r) {
    const double* srow = &sv.data[static_cast<std::size_t>(r) * n];
    double mx = srow[0];
    for (int c = 1; c <= r; ++c) mx = std::max(mx, srow[c]);
    double z = 0.0;
    for (int c = 0; c <= r; ++c) z += std::exp(srow[c] - mx);
    double* orow = &out.data[static_cast<std::size_t>(r) * n];
    for (int c = 0; c <= r; ++c) orow[c] = std::exp(srow[c] - mx) / z;
  }
  return t.record(std::move(out), {scores}, [scores, n](Tape& tp, Var out_v) {
    Tensor* gs = tp.grad_if(scores);
    if (gs == nullptr) return;
    const Tensor& g = *tp.gradient(out_v);
    const Tensor& p = tp.value(out_v);
    for (int r = 0; r < n; ++r) {
      const double* prow = &p.data[static_cast<std::size_t>(r) * n];
      const double* grow = &g.data[static_cast<std::size_t>(r) * n];
      double dot = 0.0;
      for (int c = 0; c <= r; ++c) dot += grow[c] * prow[c];
      double* gsrow = &gs->data[static_cast<std::size_t>(r) * n];
      for (int c = 0; c <= r; ++c) gsrow[c] += prow[c] * (grow[c] - dot);
    }
  });
}

}  // namespace conure::ops
