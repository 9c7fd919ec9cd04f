#include <atomic>
#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace prunekit::simd {
namespace {

constexpr KernelTable kScalar{
    Isa::Scalar,
    detail::dot_scalar,
    detail::weighted_sum_squares_scalar,
    detail::accumulate_squares_scalar,
    detail::axpy_scalar,
    detail::gemv_scalar,
    detail::gemv_t_accumulate_scalar,
    detail::rank1_update_scalar,
    detail::adamw_update_scalar,
};

#if defined(PRUNEKIT_HAVE_AVX2)
constexpr KernelTable kAvx2{
    Isa::Avx2,
    detail::dot_avx2,
    detail::weighted_sum_squares_avx2,
    detail::accumulate_squares_avx2,
    detail::axpy_avx2,
    detail::gemv_avx2,
    detail::gemv_t_accumulate_avx2,
    detail::rank1_update_avx2,
    detail::adamw_update_avx2,
};

bool cpu_has_avx2() noexcept {
#if defined(__GNUC__) || defined(__clang__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}
#endif

const KernelTable* initial_table() noexcept {
  const KernelTable* best = &kScalar;
#if defined(PRUNEKIT_HAVE_AVX2)
  if (cpu_has_avx2()) best = &kAvx2;
#endif
  if (const char* env = std::getenv("PRUNEKIT_KERNELS")) {
    if (std::string_view(env) == "scalar") best = &kScalar;
  }
  return best;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(PRUNEKIT_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

bool isa_available(Isa isa) noexcept {
  return isa == Isa::Scalar || avx2_table() != nullptr;
}

Isa active_isa() noexcept { return current().load()->isa; }

bool set_active_isa(Isa isa) noexcept {
  if (!isa_available(isa)) return false;
  current().store(isa == Isa::Scalar ? &kScalar : avx2_table());
  return true;
}

std::string_view isa_name(Isa isa) noexcept {
  return isa == Isa::Scalar ? "scalar" : "avx2";
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

}  // namespace prunekit::simd
