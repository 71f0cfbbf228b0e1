#include "ttm/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ttm::kernels {

namespace {
std::atomic<std::size_t> g_threshold{1u << 16};
}

std::size_t parallel_threshold() { return g_threshold.load(); }
void set_parallel_threshold(std::size_t flops) { g_threshold.store(flops); }

void matmul_serial(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_omp(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= g_threshold.load()) {
    matmul_omp(a, b, c, m, k, n);
  } else {
    matmul_serial(a, b, c, m, k, n);
  }
}

void matmul_acc_serial(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void matmul_acc(const double* a, const double* b, double* c,
                std::size_t m, std::size_t k, std::size_t n) {
  if (m * k * n >= g_threshold.load()) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      double* ci = c + i * n;
      const double* ai = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = ai[p];
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else {
    matmul_acc_serial(a, b, c, m, k, n);
  }
}

void axpy_serial(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

}  // namespace ttm::kernels
