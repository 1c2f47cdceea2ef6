#pragma once

// Reverse-mode autodiff over dense row-major matrices. One Tape per forward
// pass; backward() walks the recorded nodes in reverse. Reductions accumulate
// in double regardless of T.

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "o3dsg/tensor.hpp"

namespace o3dsg {

template <typename T>
class Tape {
 public:
  struct Var {
    int id = -1;
  };

  Var leaf(Tensor<T> value) { return push(std::move(value), nullptr); }

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  /// Valid after backward(); zero-filled for nodes the loss does not reach.
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Records every discrete branch decision (ReLU sign, max-pool argmax) so a
  /// finite-difference check can tell when a perturbation crosses a kink.
  void set_kink_log(std::vector<std::int64_t>* log) { kinks_ = log; }

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Tensor<T> C;
    matmul_into(A, B, C);
    return push(std::move(C), [a, b](Tape& t, int self) {
      const auto& dC = t.nodes_[self].grad;
      add_matmul_bt(dC, t.value(b), t.nodes_[a.id].grad);
      add_at_matmul(t.value(a), dC, t.nodes_[b.id].grad);
    });
  }

  /// x (R x C) + bias (1 x C) broadcast over rows.
  Var add_bias(Var x, Var bias) {
    const auto& X = value(x);
    const auto& B = value(bias);
    if (B.rows != 1 || B.cols != X.cols) throw std::invalid_argument("add_bias: shape mismatch");
    Tensor<T> Y = X;
    for (int r = 0; r < Y.rows; ++r)
      for (int c = 0; c < Y.cols; ++c) Y(r, c) += B(0, c);
    return push(std::move(Y), [x, bias](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      accumulate(t.nodes_[x.id].grad, dY);
      auto& dB = t.nodes_[bias.id].grad;
      for (int c = 0; c < dY.cols; ++c) {
        double s = 0;
        for (int r = 0; r < dY.rows; ++r) s += dY(r, c);
        dB(0, c) += static_cast<T>(s);
      }
    });
  }

  Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> Y = A;
    for (std::size_t k = 0; k < Y.size(); ++k) Y.data[k] += B.data[k];
    return push(std::move(Y), [a, b](Tape& t, int self) {
      accumulate(t.nodes_[a.id].grad, t.nodes_[self].grad);
      accumulate(t.nodes_[b.id].grad, t.nodes_[self].grad);
    });
  }

  Var scale(Var x, T s) {
    Tensor<T> Y = value(x);
    for (auto& v : Y.data) v *= s;
    return push(std::move(Y), [x, s](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (std::size_t k = 0; k < dY.size(); ++k) dX.data[k] += s * dY.data[k];
    });
  }

  Var relu(Var x) {
    const auto& X = value(x);
    Tensor<T> Y(X.rows, X.cols);
    for (std::size_t k = 0; k < X.size(); ++k) {
      const bool on = X.data[k] > T(0);
      Y.data[k] = on ? X.data[k] : T(0);
      if (kinks_) kinks_->push_back(on);
    }
    return push(std::move(Y), [x](Tape& t, int self) {
      const auto& X = t.value(x);
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (std::size_t k = 0; k < X.size(); ++k)
        if (X.data[k] > T(0)) dX.data[k] += dY.data[k];
    });
  }

  /// Row-wise normalization to zero mean / unit variance, then gain and bias (1 x C).
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
    const auto& X = value(x);
    const auto& G = value(gain);
    const auto& B = value(bias);
    if (G.cols != X.cols || B.cols != X.cols) throw std::invalid_argument("layer_norm: shape mismatch");
    Tensor<T> Y(X.rows, X.cols);
    Tensor<T> Xhat(X.rows, X.cols);
    std::vector<double> inv_std(std::size_t(X.rows));
    for (int r = 0; r < X.rows; ++r) {
      double mean = 0;
      for (int c = 0; c < X.cols; ++c) mean += X(r, c);
      mean /= X.cols;
      double var = 0;
      for (int c = 0; c < X.cols; ++c) var += (X(r, c) - mean) * (X(r, c) - mean);
      var /= X.cols;
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (int c = 0; c < X.cols; ++c) {
        Xhat(r, c) = static_cast<T>((X(r, c) - mean) * inv_std[r]);
        Y(r, c) = Xhat(r, c) * G(0, c) + B(0, c);
      }
    }
    return push(std::move(Y), [x, gain, bias, Xhat = std::move(Xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      const auto& G = t.value(gain);
      auto& dX = t.nodes_[x.id].grad;
      auto& dG = t.nodes_[gain.id].grad;
      auto& dB = t.nodes_[bias.id].grad;
      const int C = dY.cols;
      for (int c = 0; c < C; ++c) {
        double sg = 0, sb = 0;
        for (int r = 0; r < dY.rows; ++r) {
          sg += double(dY(r, c)) * Xhat(r, c);
          sb += dY(r, c);
        }
        dG(0, c) += static_cast<T>(sg);
        dB(0, c) += static_cast<T>(sb);
      }
      for (int r = 0; r < dY.rows; ++r) {
        double mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (int c = 0; c < C; ++c) {
          const double dxh = double(dY(r, c)) * G(0, c);
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * Xhat(r, c);
        }
        mean_dxhat /= C;
        mean_dxhat_xhat /= C;
        for (int c = 0; c < C; ++c) {
          const double dxh = double(dY(r, c)) * G(0, c);
          dX(r, c) += static_cast<T>(inv_std[r] * (dxh - mean_dxhat - Xhat(r, c) * mean_dxhat_xhat));
        }
      }
    });
  }

  /// Column-wise max over each row segment [offsets[g], offsets[g+1]).
  /// Ties resolve to the lowest row.
  Var segment_max(Var x, std::vector<int> offsets) {
    const auto& X = value(x);
    const int G = int(offsets.size()) - 1;
    Tensor<T> Y(G, X.cols);
    std::vector<int> arg(std::size_t(G) * X.cols);
    for (int g = 0; g < G; ++g) {
      if (offsets[g + 1] <= offsets[g]) throw std::invalid_argument("segment_max: empty segment");
      for (int c = 0; c < X.cols; ++c) {
        int best = offsets[g];
        for (int r = offsets[g] + 1; r < offsets[g + 1]; ++r)
          if (X(r, c) > X(best, c)) best = r;
        Y(g, c) = X(best, c);
        arg[std::size_t(g) * X.cols + c] = best;
        if (kinks_) kinks_->push_back(best);
      }
    }
    return push(std::move(Y), [x, arg = std::move(arg)](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (int g = 0; g < dY.rows; ++g)
        for (int c = 0; c < dY.cols; ++c) dX(arg[std::size_t(g) * dY.cols + c], c) += dY(g, c);
    });
  }

  /// Column-wise mean over each row segment.
  Var segment_mean(Var x, std::vector<int> offsets) {
    const auto& X = value(x);
    const int G = int(offsets.size()) - 1;
    Tensor<T> Y(G, X.cols);
    std::vector<double> acc(std::size_t(X.cols));
    for (int g = 0; g < G; ++g) {
      const int n = offsets[g + 1] - offsets[g];
      if (n <= 0) throw std::invalid_argument("segment_mean: empty segment");
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int r = offsets[g]; r < offsets[g + 1]; ++r)
        for (int c = 0; c < X.cols; ++c) acc[c] += X(r, c);
      for (int c = 0; c < X.cols; ++c) Y(g, c) = static_cast<T>(acc[c] / n);
    }
    return push(std::move(Y), [x, offsets = std::move(offsets)](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (int g = 0; g + 1 < int(offsets.size()); ++g) {
        const T inv = static_cast<T>(1.0 / (offsets[g + 1] - offsets[g]));
        for (int r = offsets[g]; r < offsets[g + 1]; ++r)
          for (int c = 0; c < dY.cols; ++c) dX(r, c) += dY(g, c) * inv;
      }
    });
  }

  Var gather_rows(Var x, std::vector<int> idx) {
    const auto& X = value(x);
    Tensor<T> Y(int(idx.size()), X.cols);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = X.row(idx[r]);
      std::copy(src.begin(), src.end(), Y.row(int(r)).begin());
    }
    return push(std::move(Y), [x, idx = std::move(idx)](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < dY.cols; ++c) dX(idx[r], c) += dY(int(r), c);
    });
  }

  /// Row r of the result is the mean of msgs rows whose target is r, or the
  /// matching row of `fallback` when no message targets r.
  Var scatter_mean(Var msgs, std::vector<int> target, Var fallback) {
    const auto& M = value(msgs);
    const auto& F = value(fallback);
    if (M.cols != F.cols || int(target.size()) != M.rows) throw std::invalid_argument("scatter_mean: shape mismatch");
    Tensor<double> acc(F.rows, F.cols);
    std::vector<int> count(std::size_t(F.rows), 0);
    for (int r = 0; r < M.rows; ++r) {
      ++count[target[r]];
      for (int c = 0; c < M.cols; ++c) acc(target[r], c) += M(r, c);
    }
    Tensor<T> Y(F.rows, F.cols);
    for (int r = 0; r < F.rows; ++r)
      for (int c = 0; c < F.cols; ++c) Y(r, c) = count[r] ? static_cast<T>(acc(r, c) / count[r]) : F(r, c);
    return push(std::move(Y), [msgs, fallback, target = std::move(target), count = std::move(count)](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dM = t.nodes_[msgs.id].grad;
      auto& dF = t.nodes_[fallback.id].grad;
      for (std::size_t r = 0; r < target.size(); ++r) {
        const T inv = static_cast<T>(1.0 / count[target[r]]);
        for (int c = 0; c < dY.cols; ++c) dM(int(r), c) += dY(target[r], c) * inv;
      }
      for (int r = 0; r < dY.rows; ++r)
        if (count[r] == 0)
          for (int c = 0; c < dY.cols; ++c) dF(r, c) += dY(r, c);
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    int rows = value(parts.at(0)).rows, cols = 0;
    for (auto p : parts) {
      if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += value(p).cols;
    }
    Tensor<T> Y(rows, cols);
    int off = 0;
    for (auto p : parts) {
      const auto& P = value(p);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < P.cols; ++c) Y(r, off + c) = P(r, c);
      off += P.cols;
    }
    return push(std::move(Y), [parts](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      int off = 0;
      for (auto p : parts) {
        auto& dP = t.nodes_[p.id].grad;
        for (int r = 0; r < dP.rows; ++r)
          for (int c = 0; c < dP.cols; ++c) dP(r, c) += dY(r, off + c);
        off += dP.cols;
      }
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    int cols = value(parts.at(0)).cols, rows = 0;
    for (auto p : parts) {
      if (value(p).cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(p).rows;
    }
    Tensor<T> Y(rows, cols);
    std::size_t off = 0;
    for (auto p : parts) {
      const auto& P = value(p);
      std::copy(P.data.begin(), P.data.end(), Y.data.begin() + std::ptrdiff_t(off));
      off += P.size();
    }
    return push(std::move(Y), [parts](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      std::size_t off = 0;
      for (auto p : parts) {
        auto& dP = t.nodes_[p.id].grad;
        for (std::size_t k = 0; k < dP.size(); ++k) dP.data[k] += dY.data[off + k];
        off += dP.size();
      }
    });
  }

  Var slice_cols(Var x, int start, int n) {
    const auto& X = value(x);
    if (start < 0 || start + n > X.cols) throw std::invalid_argument("slice_cols: out of range");
    Tensor<T> Y(X.rows, n);
    for (int r = 0; r < X.rows; ++r)
      for (int c = 0; c < n; ++c) Y(r, c) = X(r, start + c);
    return push(std::move(Y), [x, start](Tape& t, int self) {
      const auto& dY = t.nodes_[self].grad;
      auto& dX = t.nodes_[x.id].grad;
      for (int r = 0; r < dY.rows; ++r)
        for (int c = 0; c < dY.cols; ++c) dX(r, start + c) += dY(r, c);
    });
  }

  /// Row-major reinterpretation with the same element count.
  Var reshape(Var x, int rows, int cols) {
    Tensor<T> Y = value(x);
    if (std::size_t(rows) * cols != Y.size()) throw std::invalid_argument("reshape: size mismatch");
    Y.rows = rows;
    Y.cols = cols;
    return push(std::move(Y), [x](Tape& t, int self) {
      auto& dX = t.nodes_[x.id].grad;
      const auto& dY = t.nodes_[self].grad;
      for (std::size_t k = 0; k < dY.size(); ++k) dX.data[k] += dY.data[k];
    });
  }

  /// Single-head scaled dot-product attention applied independently to each
  /// consecutive block of `block` rows of q, k, v.
  Var block_attention(Var q, Var k, Var v, int block) {
    const auto& Q = value(q);
    const auto& K = value(k);
    const auto& V = value(v);
    if (!Q.same_shape(K) || Q.rows != V.rows || Q.rows % block != 0) {
      throw std::invalid_argument("block_attention: shape mismatch");
    }
    const int d = Q.cols;
    const double inv_sqrt_d = 1.0 / std::sqrt(double(d));
    const int blocks = Q.rows / block;
    Tensor<T> Y(Q.rows, V.cols);
    std::vector<double> probs(std::size_t(blocks) * block * block);
    for (int b = 0; b < blocks; ++b) {
      const int base = b * block;
      for (int i = 0; i < block; ++i) {
        double* p = &probs[(std::size_t(b) * block + i) * block];
        double mx = -INFINITY;
        for (int j = 0; j < block; ++j) {
          double s = 0;
          for (int c = 0; c < d; ++c) s += double(Q(base + i, c)) * K(base + j, c);
          p[j] = s * inv_sqrt_d;
          mx = std::max(mx, p[j]);
        }
        double z = 0;
        for (int j = 0; j < block; ++j) z += (p[j] = std::exp(p[j] - mx));
        for (int j = 0; j < block; ++j) p[j] /= z;
        for (int c = 0; c < V.cols; ++c) {
          double o = 0;
          for (int j = 0; j < block; ++j) o += p[j] * V(base + j, c);
          Y(base + i, c) = static_cast<T>(o);
        }
      }
    }
    return push(std::move(Y), [q, k, v, block, inv_sqrt_d, probs = std::move(probs)](Tape& t, int self) {
      const auto& Q = t.value(q);
      const auto& K = t.value(k);
      const auto& V = t.value(v);
      const auto& dY = t.nodes_[self].grad;
      auto& dQ = t.nodes_[q.id].grad;
      auto& dK = t.nodes_[k.id].grad;
      auto& dV = t.nodes_[v.id].grad;
      const int d = Q.cols;
      std::vector<double> dp(static_cast<std::size_t>(block)), ds(static_cast<std::size_t>(block));
      for (int b = 0; b < Q.rows / block; ++b) {
        const int base = b * block;
        for (int i = 0; i < block; ++i) {
          const double* p = &probs[(std::size_t(b) * block + i) * block];
          double dot = 0;
          for (int j = 0; j < block; ++j) {
            double s = 0;
            for (int c = 0; c < V.cols; ++c) s += double(dY(base + i, c)) * V(base + j, c);
            dp[j] = s;
            dot += s * p[j];
          }
          for (int j = 0; j < block; ++j) {
            ds[j] = p[j] * (dp[j] - dot) * inv_sqrt_d;
            for (int c = 0; c < V.cols; ++c) dV(base + j, c) += static_cast<T>(p[j] * dY(base + i, c));
          }
          for (int j = 0; j < block; ++j) {
            for (int c = 0; c < d; ++c) {
              dQ(base + i, c) += static_cast<T>(ds[j] * K(base + j, c));
              dK(base + j, c) += static_cast<T>(ds[j] * Q(base + i, c));
            }
          }
        }
      }
    });
  }

  /// Mean over rows with mask != 0 of 1 - cos(pred_r, target_r); norms carry
  /// an additive epsilon. Returns a 1 x 1 node (0 when no row is present).
  Var cosine_distill(Var pred, Tensor<T> target, std::vector<std::uint8_t> mask, double eps = 1e-8) {
    const auto& P = value(pred);
    if (!P.same_shape(target) || int(mask.size()) != P.rows) throw std::invalid_argument("cosine_distill: shape mismatch");
    int present = 0;
    double total = 0;
    for (int r = 0; r < P.rows; ++r) {
      if (!mask[r]) continue;
      ++present;
      total += 1.0 - cosine_row(P.row(r), target.row(r), eps);
    }
    Tensor<T> Y(1, 1, static_cast<T>(present ? total / present : 0.0));
    return push(std::move(Y), [pred, eps, present, target = std::move(target), mask = std::move(mask)](Tape& t, int self) {
      if (!present) return;
      const double upstream = t.nodes_[self].grad(0, 0);
      const auto& P = t.value(pred);
      auto& dP = t.nodes_[pred.id].grad;
      for (int r = 0; r < P.rows; ++r) {
        if (!mask[r]) continue;
        const auto a = P.row(r);
        const auto b = target.row(r);
        double dot = 0, na = 0, nb = 0;
        for (int c = 0; c < P.cols; ++c) {
          dot += double(a[c]) * b[c];
          na += double(a[c]) * a[c];
          nb += double(b[c]) * b[c];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        const double denom = (na + eps) * (nb + eps);
        const double coef = -upstream / present;
        for (int c = 0; c < P.cols; ++c) {
          double dcos = b[c] / denom;
          if (na > 0) dcos -= dot * a[c] / (na * (na + eps) * denom);
          dP(r, c) += static_cast<T>(coef * dcos);
        }
      }
    });
  }

  /// Seeds d(out)/d(out) = 1 for a 1 x 1 node and propagates to every node.
  void backward(Var out) {
    if (value(out).size() != 1) throw std::invalid_argument("backward: output must be scalar");
    for (auto& n : nodes_) n.grad = Tensor<T>(n.value.rows, n.value.cols);
    nodes_[out.id].grad.data[0] = T(1);
    for (int id = out.id; id >= 0; --id) {
      if (nodes_[id].back) nodes_[id].back(*this, id);
    }
  }

  static double cosine_row(std::span<const T> a, std::span<const T> b, double eps) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t c = 0; c < a.size(); ++c) {
      dot += double(a[c]) * b[c];
      na += double(a[c]) * a[c];
      nb += double(b[c]) * b[c];
    }
    return dot / ((std::sqrt(na) + eps) * (std::sqrt(nb) + eps));
  }

 private:
  using Backward = std::function<void(Tape&, int)>;
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Backward back;
  };

  Var push(Tensor<T> v, Backward back) {
    nodes_.push_back({std::move(v), {}, std::move(back)});
    return {int(nodes_.size()) - 1};
  }

  static void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t k = 0; k < src.size(); ++k) dst.data[k] += src.data[k];
  }

  // dA += dC * B^T
  static void add_matmul_bt(const Tensor<T>& dC, const Tensor<T>& B, Tensor<T>& dA) {
    const Tensor<T> Bt = transpose(B);
    std::vector<double> acc(std::size_t(B.rows));
    for (int i = 0; i < dC.rows; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const T* crow = dC.data.data() + std::size_t(i) * dC.cols;
      for (int j = 0; j < dC.cols; ++j) {
        const double g = crow[j];
        if (g == 0.0) continue;
        const T* btrow = Bt.data.data() + std::size_t(j) * Bt.cols;
        for (int k = 0; k < Bt.cols; ++k) acc[k] += g * btrow[k];
      }
      for (int k = 0; k < B.rows; ++k) dA(i, k) += static_cast<T>(acc[k]);
    }
  }

  // dB += A^T * dC
  static void add_at_matmul(const Tensor<T>& A, const Tensor<T>& dC, Tensor<T>& dB) {
    Tensor<double> acc(A.cols, dC.cols);
    for (int i = 0; i < A.rows; ++i) {
      const T* crow = dC.data.data() + std::size_t(i) * dC.cols;
      for (int k = 0; k < A.cols; ++k) {
        const double a = A(i, k);
        if (a == 0.0) continue;
        double* arow = acc.data.data() + std::size_t(k) * acc.cols;
        for (int j = 0; j < dC.cols; ++j) arow[j] += a * crow[j];
      }
    }
    for (std::size_t k = 0; k < acc.size(); ++k) dB.data[k] += static_cast<T>(acc.data[k]);
  }

  std::vector<Node> nodes_;
  std::vector<std::int64_t>* kinks_ = nullptr;
};

}  // namespace o3dsg
