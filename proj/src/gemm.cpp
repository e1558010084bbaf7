// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/gemm.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define ORNATRY_AVX2 1
#endif

namespace ornatry {

int thread_count() {
    static int n = [] {
        if (const char* env = std::getenv("ORNATRY_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }();
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
    int nt = thread_count();
    if (nt <= 1 || n < 2) {
        body(0, n);
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(nt, n));
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    std::exception_ptr error;
    std::mutex error_mutex;
    auto guarded = [&](int64_t lo, int64_t hi) {
        try {
            body(lo, hi);
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    for (int t = 1; t < workers; ++t) {
        int64_t lo = t * chunk, hi = std::min<int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(guarded, lo, hi);
    }
    guarded(0, std::min<int64_t>(n, chunk));
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

namespace {

#ifdef ORNATRY_AVX2

// C[0..3][0..15] outer-product microkernel: broadcasts A, streams 16-wide B rows.
inline void kernel_4x16(int kk, const float* a, int lda, const float* b, int ldb, float* c,
                        int ldc, bool accumulate) {
    __m256 acc[4][2];
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j)
            acc[i][j] = accumulate ? _mm256_loadu_ps(c + i * ldc + j * 8) : _mm256_setzero_ps();
    for (int k = 0; k < kk; ++k) {
        __m256 b0 = _mm256_loadu_ps(b + k * ldb);
        __m256 b1 = _mm256_loadu_ps(b + k * ldb + 8);
        for (int i = 0; i < 4; ++i) {
            __m256 ai = _mm256_set1_ps(a[i * lda + k]);
            acc[i][0] = _mm256_fmadd_ps(ai, b0, acc[i][0]);
            acc[i][1] = _mm256_fmadd_ps(ai, b1, acc[i][1]);
        }
    }
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) _mm256_storeu_ps(c + i * ldc + j * 8, acc[i][j]);
}

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

#endif  // ORNATRY_AVX2

// Column-panel outer loop: the K x 16 panel of B stays cached while every
// row block of A sweeps it, so B streams through memory exactly once.
void gemm_block(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate,
                int col0, int col1) {
#ifdef ORNATRY_AVX2
    int j = col0;
    for (; j + 16 <= col1; j += 16) {
        int i = 0;
        for (; i + 4 <= m; i += 4)
            kernel_4x16(k, a + static_cast<int64_t>(i) * k, k, b + j, n,
                        c + static_cast<int64_t>(i) * n + j, n, accumulate);
        for (; i < m; ++i) {
            float* cr = c + static_cast<int64_t>(i) * n + j;
            const float* ar = a + static_cast<int64_t>(i) * k;
            __m256 acc0 = accumulate ? _mm256_loadu_ps(cr) : _mm256_setzero_ps();
            __m256 acc1 = accumulate ? _mm256_loadu_ps(cr + 8) : _mm256_setzero_ps();
            for (int kk = 0; kk < k; ++kk) {
                __m256 av = _mm256_set1_ps(ar[kk]);
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b + static_cast<int64_t>(kk) * n + j),
                                       acc0);
                acc1 = _mm256_fmadd_ps(av,
                                       _mm256_loadu_ps(b + static_cast<int64_t>(kk) * n + j + 8),
                                       acc1);
            }
            _mm256_storeu_ps(cr, acc0);
            _mm256_storeu_ps(cr + 8, acc1);
        }
    }
    for (; j < col1; ++j) {
        for (int i = 0; i < m; ++i) {
            float s = accumulate ? c[static_cast<int64_t>(i) * n + j] : 0.f;
            const float* ar = a + static_cast<int64_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) s += ar[kk] * b[static_cast<int64_t>(kk) * n + j];
            c[static_cast<int64_t>(i) * n + j] = s;
        }
    }
#else
    for (int i = 0; i < m; ++i) {
        float* cr = c + static_cast<int64_t>(i) * n;
        const float* ar = a + static_cast<int64_t>(i) * k;
        for (int j2 = col0; j2 < col1; ++j2) {
            float s = accumulate ? cr[j2] : 0.f;
            for (int kk = 0; kk < k; ++kk) s += ar[kk] * b[static_cast<int64_t>(kk) * n + j2];
            cr[j2] = s;
        }
    }
#endif
}

// Dot-product form with B rows in the outer loop: each B row is loaded once
// and shared across a 4-row block of A (which the cache keeps hot).
void gemm_nt_block(int m, int k, const float* a, const float* b, float* c, int n, bool accumulate,
                   int col0, int col1) {
    for (int j = col0; j < col1; ++j) {
        const float* br = b + static_cast<int64_t>(j) * k;
        int i = 0;
#ifdef ORNATRY_AVX2
        for (; i + 4 <= m; i += 4) {
            __m256 acc[4] = {_mm256_setzero_ps(), _mm256_setzero_ps(), _mm256_setzero_ps(),
                             _mm256_setzero_ps()};
            int kk = 0;
            for (; kk + 8 <= k; kk += 8) {
                __m256 bv = _mm256_loadu_ps(br + kk);
                for (int r = 0; r < 4; ++r)
                    acc[r] = _mm256_fmadd_ps(
                        _mm256_loadu_ps(a + static_cast<int64_t>(i + r) * k + kk), bv, acc[r]);
            }
            for (int r = 0; r < 4; ++r) {
                float s = hsum(acc[r]);
                for (int kt = kk; kt < k; ++kt)
                    s += a[static_cast<int64_t>(i + r) * k + kt] * br[kt];
                float* cp = c + static_cast<int64_t>(i + r) * n + j;
                *cp = accumulate ? *cp + s : s;
            }
        }
#endif
        for (; i < m; ++i) {
            float s = 0.f;
            const float* ar = a + static_cast<int64_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) s += ar[kk] * br[kk];
            float* cp = c + static_cast<int64_t>(i) * n + j;
            *cp = accumulate ? *cp + s : s;
        }
    }
}

void transpose_into(const float* src, int rows, int cols, float* dst) {
    constexpr int kBlock = 32;
    for (int r0 = 0; r0 < rows; r0 += kBlock)
        for (int c0 = 0; c0 < cols; c0 += kBlock) {
            int r1 = std::min(rows, r0 + kBlock), c1 = std::min(cols, c0 + kBlock);
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c)
                    dst[static_cast<int64_t>(c) * rows + r] = src[static_cast<int64_t>(r) * cols + c];
        }
}

}  // namespace

void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    if (static_cast<int64_t>(m) * n * k < 64 * 1024 || thread_count() <= 1) {
        gemm_block(m, n, k, a, b, c, accumulate, 0, n);
        return;
    }
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        gemm_block(m, n, k, a, b, c, accumulate, static_cast<int>(lo), static_cast<int>(hi));
    });
}

void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    // the streaming kernel wins once the transpose cost amortizes
    if (static_cast<int64_t>(m) * n * k >= 512 * 1024) {
        thread_local std::vector<float> scratch;
        scratch.resize(static_cast<size_t>(k) * n);
        transpose_into(b, n, k, scratch.data());
        gemm(m, n, k, a, scratch.data(), c, accumulate);
        return;
    }
    if (static_cast<int64_t>(m) * n * k < 64 * 1024 || thread_count() <= 1) {
        gemm_nt_block(m, k, a, b, c, n, accumulate, 0, n);
        return;
    }
    parallel_for(n, [&](int64_t lo, int64_t hi) {
        gemm_nt_block(m, k, a, b, c, n, accumulate, static_cast<int>(lo), static_cast<int>(hi));
    });
}

void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate) {
    if (static_cast<int64_t>(m) * n * k >= 512 * 1024) {
        thread_local std::vector<float> scratch;
        scratch.resize(static_cast<size_t>(m) * k);
        transpose_into(a, k, m, scratch.data());
        gemm(m, n, k, scratch.data(), b, c, accumulate);
        return;
    }
    // C(M,N) = A(K,M)^T B(K,N): row i of C accumulates A[kk*m+i] * B-row kk.
    auto body = [&](int64_t lo, int64_t hi) {
        for (int i = static_cast<int>(lo); i < static_cast<int>(hi); ++i) {
            float* cr = c + static_cast<int64_t>(i) * n;
            if (!accumulate) std::memset(cr, 0, sizeof(float) * n);
            for (int kk = 0; kk < k; ++kk) {
                float av = a[static_cast<int64_t>(kk) * m + i];
                const float* br = b + static_cast<int64_t>(kk) * n;
#ifdef ORNATRY_AVX2
                __m256 avv = _mm256_set1_ps(av);
                int j = 0;
                for (; j + 8 <= n; j += 8)
                    _mm256_storeu_ps(cr + j, _mm256_fmadd_ps(avv, _mm256_loadu_ps(br + j),
                                                             _mm256_loadu_ps(cr + j)));
                for (; j < n; ++j) cr[j] += av * br[j];
#else
                for (int j = 0; j < n; ++j) cr[j] += av * br[j];
#endif
            }
        }
    };
    if (static_cast<int64_t>(m) * n * k < 64 * 1024 || thread_count() <= 1) {
        body(0, m);
        return;
    }
    parallel_for(m, body);
}

}  // namespace ornatry
