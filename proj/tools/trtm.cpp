#include <cstdio>

#include "trtm/kernels/kernels.hpp"

int main() {
  std::printf("trtm (kernel backend: %s)\n", trtm::kern::backend_name().c_str());
  return 0;
}
