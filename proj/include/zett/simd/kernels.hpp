#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the autodiff engine. Each
// kernel has a portable scalar reference and an AVX2/FMA variant; the
// variant is chosen once at startup from CPUID (override with
// ZETT_SIMD=scalar|avx2) and both are kept equivalence-tested.
namespace zett::simd {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  double (*sum_squares)(const double* x, std::size_t n);
  // C[m,n] (+)= A[m,k] * B[k,n]; row-major, densely packed.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate);
};

const KernelTable& scalar_kernels();
const KernelTable* avx2_kernels();  // nullptr when not compiled in

bool isa_supported(Isa isa);
Isa active_isa();
void set_active_isa(Isa isa);  // throws InvalidArgument if unsupported
std::string_view isa_name(Isa isa);

const KernelTable& kernels();

// Row-parallel matrix products on top of the active table.
// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

}  // namespace zett::simd
