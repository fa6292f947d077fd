#pragma once

// Small row-major GEMM kernels backing the convolution lowering. The float
// path carries the training workload on CPU, so it gets a register-blocked
// FMA microkernel; the double path only serves the verification suites and
// stays generic.

#include <cstring>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define LANEFORGE_GEMM_AVX2 1
#endif

namespace laneforge::detail {

// C[M,N] (+)= A[M,K] * B[K,N]; all row-major with leading dimensions.
template <class Real>
void gemm(int M, int N, int K, const Real* A, int lda, const Real* B, int ldb,
          Real* C, int ldc, bool accumulate) {
  for (int m = 0; m < M; ++m) {
    Real* c = C + (std::size_t)m * ldc;
    if (!accumulate) {
      for (int n = 0; n < N; ++n) c[n] = Real(0);
    }
    for (int k = 0; k < K; ++k) {
      Real a = A[(std::size_t)m * lda + k];
      if (a == Real(0)) continue;
      const Real* b = B + (std::size_t)k * ldb;
      for (int n = 0; n < N; ++n) c[n] += a * b[n];
    }
  }
}

#ifdef LANEFORGE_GEMM_AVX2

// 6xN microkernel columns-outer so the K x 16 B panel stays cache resident
// across row tiles.
template <int MR>
inline void gemm_f32_panel16(int K, const float* A, int lda, const float* B,
                             int ldb, float* C, int ldc, bool accumulate) {
  __m256 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    if (accumulate) {
      acc[r][0] = _mm256_loadu_ps(C + (std::size_t)r * ldc);
      acc[r][1] = _mm256_loadu_ps(C + (std::size_t)r * ldc + 8);
    } else {
      acc[r][0] = _mm256_setzero_ps();
      acc[r][1] = _mm256_setzero_ps();
    }
  }
  for (int k = 0; k < K; ++k) {
    __m256 b0 = _mm256_loadu_ps(B + (std::size_t)k * ldb);
    __m256 b1 = _mm256_loadu_ps(B + (std::size_t)k * ldb + 8);
    for (int r = 0; r < MR; ++r) {
      __m256 a = _mm256_set1_ps(A[(std::size_t)r * lda + k]);
      acc[r][0] = _mm256_fmadd_ps(a, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(a, b1, acc[r][1]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm256_storeu_ps(C + (std::size_t)r * ldc, acc[r][0]);
    _mm256_storeu_ps(C + (std::size_t)r * ldc + 8, acc[r][1]);
  }
}

template <int MR>
inline void gemm_f32_panel8(int K, const float* A, int lda, const float* B,
                            int ldb, float* C, int ldc, bool accumulate) {
  __m256 acc[MR];
  for (int r = 0; r < MR; ++r)
    acc[r] = accumulate ? _mm256_loadu_ps(C + (std::size_t)r * ldc) : _mm256_setzero_ps();
  for (int k = 0; k < K; ++k) {
    __m256 b0 = _mm256_loadu_ps(B + (std::size_t)k * ldb);
    for (int r = 0; r < MR; ++r) {
      __m256 a = _mm256_set1_ps(A[(std::size_t)r * lda + k]);
      acc[r] = _mm256_fmadd_ps(a, b0, acc[r]);
    }
  }
  for (int r = 0; r < MR; ++r) _mm256_storeu_ps(C + (std::size_t)r * ldc, acc[r]);
}

inline void gemm_f32_tile(int mr, int K, const float* A, int lda, const float* B,
                          int ldb, float* C, int ldc, bool accumulate, int width) {
  if (width == 16) {
    switch (mr) {
      case 6: gemm_f32_panel16<6>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 5: gemm_f32_panel16<5>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 4: gemm_f32_panel16<4>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 3: gemm_f32_panel16<3>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 2: gemm_f32_panel16<2>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 1: gemm_f32_panel16<1>(K, A, lda, B, ldb, C, ldc, accumulate); return;
    }
  } else {
    switch (mr) {
      case 6: gemm_f32_panel8<6>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 5: gemm_f32_panel8<5>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 4: gemm_f32_panel8<4>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 3: gemm_f32_panel8<3>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 2: gemm_f32_panel8<2>(K, A, lda, B, ldb, C, ldc, accumulate); return;
      case 1: gemm_f32_panel8<1>(K, A, lda, B, ldb, C, ldc, accumulate); return;
    }
  }
}

template <>
inline void gemm<float>(int M, int N, int K, const float* A, int lda, const float* B,
                        int ldb, float* C, int ldc, bool accumulate) {
  int n = 0;
  for (; n + 16 <= N; n += 16) {
    for (int m = 0; m < M; m += 6) {
      int mr = (M - m < 6) ? (M - m) : 6;
      gemm_f32_tile(mr, K, A + (std::size_t)m * lda, lda, B + n, ldb,
                    C + (std::size_t)m * ldc + n, ldc, accumulate, 16);
    }
  }
  for (; n + 8 <= N; n += 8) {
    for (int m = 0; m < M; m += 6) {
      int mr = (M - m < 6) ? (M - m) : 6;
      gemm_f32_tile(mr, K, A + (std::size_t)m * lda, lda, B + n, ldb,
                    C + (std::size_t)m * ldc + n, ldc, accumulate, 8);
    }
  }
  if (n < N) {
    for (int m = 0; m < M; ++m) {
      float* c = C + (std::size_t)m * ldc;
      for (int j = n; j < N; ++j) {
        float s = accumulate ? c[j] : 0.0f;
        const float* a = A + (std::size_t)m * lda;
        for (int k = 0; k < K; ++k) s += a[k] * B[(std::size_t)k * ldb + j];
        c[j] = s;
      }
    }
  }
}

#endif  // LANEFORGE_GEMM_AVX2

// C[M,N] (+)= A[M,K] * B^T where B is [N,K] row-major (dot products of rows).
template <class Real>
void gemm_abt(int M, int N, int K, const Real* A, int lda, const Real* B, int ldb,
              Real* C, int ldc, bool accumulate) {
  for (int m = 0; m < M; ++m) {
    const Real* a = A + (std::size_t)m * lda;
    Real* c = C + (std::size_t)m * ldc;
    for (int n = 0; n < N; ++n) {
      const Real* b = B + (std::size_t)n * ldb;
      Real s = Real(0);
#ifdef LANEFORGE_GEMM_AVX2
      if constexpr (std::is_same_v<Real, float>) {
        __m256 v0 = _mm256_setzero_ps(), v1 = _mm256_setzero_ps();
        __m256 v2 = _mm256_setzero_ps(), v3 = _mm256_setzero_ps();
        int k = 0;
        for (; k + 32 <= K; k += 32) {
          v0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), v0);
          v1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), v1);
          v2 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 16), _mm256_loadu_ps(b + k + 16), v2);
          v3 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 24), _mm256_loadu_ps(b + k + 24), v3);
        }
        for (; k + 8 <= K; k += 8)
          v0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), v0);
        __m256 vs = _mm256_add_ps(_mm256_add_ps(v0, v1), _mm256_add_ps(v2, v3));
        alignas(32) float tmp[8];
        _mm256_store_ps(tmp, vs);
        s = tmp[0] + tmp[1] + tmp[2] + tmp[3] + tmp[4] + tmp[5] + tmp[6] + tmp[7];
        for (; k < K; ++k) s += a[k] * b[k];
      } else
#endif
      {
        for (int k = 0; k < K; ++k) s += a[k] * b[k];
      }
      c[n] = accumulate ? c[n] + s : s;
    }
  }
}

}  // namespace laneforge::detail
