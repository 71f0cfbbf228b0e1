#pragma once

#include <cstddef>

// Data-parallel inner kernels. Each kernel has a serial reference
// implementation and an OpenMP variant that must produce bit-identical
// results (same per-element summation order, threads split only over
// independent output elements). The dispatching entry points pick the
// OpenMP path for large problems and fall back to serial below a
// threshold where thread startup dominates.

namespace ttm::kernels {

// c[m x n] = a[m x k] * b[k x n], row-major, c overwritten.
void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);
void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[k x n]
void matmul_acc_serial(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n);
void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n);

// y += x, length n
void axpy_serial(const double* x, double* y, std::size_t n);

// Work size (m*k*n) above which the OpenMP path is used.
std::size_t parallel_threshold();
void set_parallel_threshold(std::size_t flops);

}  // namespace ttm::kernels
