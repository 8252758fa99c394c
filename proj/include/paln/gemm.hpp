#ifndef PALN_GEMM_HPP_
#define PALN_GEMM_HPP_

#include <cstdint>

namespace paln {

// Row-major matrix kernels, accumulating into c (caller zeroes when needed).
// Loop orders are chosen so the inner loop is over contiguous memory and
// vectorizes without reassociation; results are deterministic run to run.

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t n, std::int64_t k);

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t n, std::int64_t k);

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t n, std::int64_t k);

}  // namespace paln

#endif  // PALN_GEMM_HPP_
