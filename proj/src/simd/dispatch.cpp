#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "zett/common/error.hpp"
#include "zett/common/parallel.hpp"
#include "zett/simd/kernels.hpp"

namespace zett::simd {

#ifndef ZETT_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect() {
  Isa best = isa_supported(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
  if (const char* env = std::getenv("ZETT_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
  }
  return best;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

void transpose(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

bool isa_supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
  return avx2_kernels() != nullptr && cpu_has_avx2();
}

Isa active_isa() { return active().load(); }

void set_active_isa(Isa isa) {
  require(isa_supported(isa), ErrorCode::InvalidArgument, std::string("ISA not supported: ") + std::string(isa_name(isa)));
  active().store(isa);
}

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels() { return active_isa() == Isa::Avx2 ? *avx2_kernels() : scalar_kernels(); }

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  const auto& kt = kernels();
  // Rows per task chosen so each task does at least ~256k multiply-adds.
  std::size_t min_rows = std::max<std::size_t>(4, (1u << 18) / std::max<std::size_t>(1, k * n));
  min_rows = (min_rows + 3) / 4 * 4;
  parallel_for((m + 3) / 4, min_rows / 4, [&](std::size_t lo, std::size_t hi) {
    std::size_t r0 = lo * 4;
    std::size_t r1 = std::min(m, hi * 4);
    kt.gemm(a + r0 * k, b, c + r0 * n, r1 - r0, k, n, accumulate);
  });
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<double> bt(k * n);
  transpose(b, bt.data(), n, k);
  gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<double> at(m * k);
  transpose(a, at.data(), k, m);
  gemm_nn(at.data(), b, c, m, k, n, accumulate);
}

}  // namespace zett::simd
