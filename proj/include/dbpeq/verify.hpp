#pragma once

// Headless self-checks behind `dbpeq verify`.

#include <cstdint>
#include <string>
#include <vector>

namespace dbpeq {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyOptions {
  /// Run only checks whose name contains this substring.
  std::string filter;
  /// Added to every simulated ledger before comparing with the formulas.
  std::int64_t ledger_fault = 0;
};

std::vector<std::string> check_names();
std::vector<CheckResult> run_checks(const VerifyOptions& opts);

}  // namespace dbpeq
