#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace landval::nn {

/// Dot product with eight independent partial sums. The summation order is
/// fixed, so results are reproducible while still vectorizing.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// C(MxN) += A(MxK) * B(KxN).
template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  MapMat<T>(C, Eigen::Index(M), Eigen::Index(N)).noalias() +=
      ConstMapMat<T>(A, Eigen::Index(M), Eigen::Index(K)) * ConstMapMat<T>(B, Eigen::Index(K), Eigen::Index(N));
}

/// C(MxN) += A(MxK) * B(NxK)^T.
template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  MapMat<T>(C, Eigen::Index(M), Eigen::Index(N)).noalias() +=
      ConstMapMat<T>(A, Eigen::Index(M), Eigen::Index(K)) *
      ConstMapMat<T>(B, Eigen::Index(N), Eigen::Index(K)).transpose();
}

/// C(MxN) += A(KxM)^T * B(KxN).
template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
  MapMat<T>(C, Eigen::Index(M), Eigen::Index(N)).noalias() +=
      ConstMapMat<T>(A, Eigen::Index(K), Eigen::Index(M)).transpose() *
      ConstMapMat<T>(B, Eigen::Index(K), Eigen::Index(N));
}

/// 3x3, stride 1, zero padding 1: (C,H,W) -> (C*9, H*W).
template <class T>
void im2col3(const T* in, int C, int H, int W, T* col) {
  const std::size_t hw = std::size_t(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + (std::size_t(c) * 9 + ky * 3 + kx) * hw;
        const T* src = in + std::size_t(c) * hw;
        for (int y = 0; y < H; ++y) {
          const int iy = y + ky - 1;
          T* dst = row + std::size_t(y) * W;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + W, T(0));
            continue;
          }
          const T* s = src + std::size_t(iy) * W;
          for (int x = 0; x < W; ++x) {
            const int ix = x + kx - 1;
            dst[x] = (ix < 0 || ix >= W) ? T(0) : s[ix];
          }
        }
      }
}

/// Adjoint of im2col3: accumulates (C*9, H*W) back into (C,H,W).
template <class T>
void col2im3(const T* col, int C, int H, int W, T* out) {
  const std::size_t hw = std::size_t(H) * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + (std::size_t(c) * 9 + ky * 3 + kx) * hw;
        T* dst = out + std::size_t(c) * hw;
        for (int y = 0; y < H; ++y) {
          const int iy = y + ky - 1;
          if (iy < 0 || iy >= H) continue;
          const T* r = row + std::size_t(y) * W;
          T* d = dst + std::size_t(iy) * W;
          for (int x = 0; x < W; ++x) {
            const int ix = x + kx - 1;
            if (ix >= 0 && ix < W) d[ix] += r[x];
          }
        }
      }
}

/// 2x2 max pool with stride 2 over (C,H,W). Stores the flat argmax of each window.
template <class T>
void maxpool2(const T* in, int C, int H, int W, T* out, int* argmax) {
  const int h = H / 2, w = W / 2;
  for (int c = 0; c < C; ++c) {
    const T* src = in + std::size_t(c) * H * W;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int best = (2 * y) * W + 2 * x;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int k = (2 * y + dy) * W + 2 * x + dx;
            if (src[k] > src[best]) best = k;
          }
        const std::size_t o = (std::size_t(c) * h + y) * w + x;
        out[o] = src[best];
        argmax[o] = best;
      }
  }
}

template <class T>
T sigmoid(T z) {
  if (z >= 0) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

/// Binary cross-entropy computed from the logit; never overflows.
template <class T>
T bce_with_logit(T z, T y) {
  return std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace landval::nn

namespace landval {

inline constexpr double kBceEpsilon = 1e-7;

/// Binary cross-entropy of a probability, clipped to [eps, 1 - eps].
inline double bce_loss(double score, int label) {
  const double s = std::clamp(score, kBceEpsilon, 1.0 - kBceEpsilon);
  return label ? -std::log(s) : -std::log(1.0 - s);
}

}  // namespace landval
