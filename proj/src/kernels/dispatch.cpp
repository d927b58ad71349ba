#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "trtm/kernels/kernels.hpp"

namespace trtm::kern {
namespace {

struct Selection {
  const Table<float>* f32;
  const Table<double>* f64;
  std::string name;
};

Selection select() {
  const char* env = std::getenv("TRTM_KERNELS");
  bool want_scalar = env && std::strcmp(env, "scalar") == 0;
  bool want_avx2 = env && std::strcmp(env, "avx2") == 0;
  if (env && !want_scalar && !want_avx2)
    throw std::runtime_error("TRTM_KERNELS must be 'scalar' or 'avx2'");

  bool cpu_ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  const Table<float>* a32 = f32_avx2();
  const Table<double>* a64 = f64_avx2();
  bool avx2_ok = cpu_ok && a32 != nullptr && a64 != nullptr;

  if (want_avx2 && !avx2_ok)
    throw std::runtime_error("TRTM_KERNELS=avx2 but AVX2 is unavailable");
  if (!want_scalar && avx2_ok) return {a32, a64, "avx2"};
  return {&f32_scalar(), &f64_scalar(), "scalar"};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

}  // namespace

const Table<float>& f32() { return *selection().f32; }
const Table<double>& f64() { return *selection().f64; }
const std::string& backend_name() { return selection().name; }

}  // namespace trtm::kern
