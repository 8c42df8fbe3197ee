#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

// Acceptance checks packaged for the `verify` subcommand and the acceptance
// test binary.
namespace faceswap::verify {

struct Context {
  std::filesystem::path root;  // repository root holding fixtures/ and configs/
  std::uint64_t seed = 2017;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct Criterion {
  int id;
  const char* name;
  std::vector<std::string> suites;
  CheckResult (*run)(const Context&);
};

CheckResult loss_oracles(const Context& ctx);
CheckResult gradient_checks(const Context& ctx);
CheckResult structural_budget(const Context& ctx);
CheckResult freeze_invariant(const Context& ctx);
CheckResult overfit_smoke(const Context& ctx);
CheckResult style_identity_monotonicity(const Context& ctx);
CheckResult poisson_solver(const Context& ctx);
CheckResult alignment_recovery(const Context& ctx);
CheckResult lighting_separation(const Context& ctx);
CheckResult end_to_end(const Context& ctx);
CheckResult full_scale_configs(const Context& ctx);

const std::vector<Criterion>& criteria();
std::vector<std::string> suite_names();

/// Runs every criterion in `suite` ("grads", "oracles", "training" or "all"),
/// printing one PASS/FAIL line each. A non-empty `only` restricts the run to
/// those criterion ids.
std::vector<CheckResult> run_suite(const std::string& suite, const Context& ctx, std::ostream& out,
                                   const std::vector<int>& only = {});

/// FACESWAP_ROOT when set, otherwise the source tree this build came from.
std::filesystem::path default_root();

}  // namespace faceswap::verify
