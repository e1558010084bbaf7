// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace ornatry {

// Row-major float GEMMs. Output C is always M x N. Accumulation order over k
// is fixed per output cell, so results are bit-identical for any thread count.

/// C (+)= A(M,K) * B(K,N)
void gemm(int m, int n, int k, const float* a, const float* b, float* c, bool accumulate = false);
/// C (+)= A(M,K) * B(N,K)^T
void gemm_nt(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate = false);
/// C (+)= A(K,M)^T * B(K,N)
void gemm_tn(int m, int n, int k, const float* a, const float* b, float* c,
             bool accumulate = false);

/// Deterministic static-partition parallel loop over [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);
int thread_count();

}  // namespace ornatry
