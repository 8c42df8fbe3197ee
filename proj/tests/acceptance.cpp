#include <iostream>

#include "faceswap/verify.hpp"

int main() {
  faceswap::verify::Context ctx;
  ctx.root = faceswap::verify::default_root();
  const auto results = faceswap::verify::run_suite("all", ctx, std::cout);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
