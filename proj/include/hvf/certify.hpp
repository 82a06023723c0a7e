#pragma once

#include "hvf/report.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hvf {

inline constexpr int kCriterionCount = 14;

struct CertifyOptions {
  uint64_t seed = 1;
  long budget = 200000;              // Monte Carlo samples per ball integral
  int workers = 1;
  std::vector<std::string> systems;  // registered names; empty runs every fixture
  std::vector<int> criteria;         // 1..14; empty runs all
};

struct CriterionResult {
  int id = 0;
  std::string name;
  std::string status;                // "pass", "fail" or "skipped"
  std::string threshold;
  Json measured = Json::object();
  std::vector<std::string> failures;
  double seconds = 0.0;              // wall time, kept out of the summary

  bool ok() const { return status != "fail"; }
};

const std::string& criterion_name(int id);
// Runs one criterion restricted to the requested systems. Errors raised by
// the library are recorded as failures, not rethrown.
CriterionResult run_criterion(int id, const CertifyOptions& opt);

struct CertifyReport {
  std::vector<CriterionResult> results;
  bool passed() const;
  // Deterministic: no timings.
  Summary summary(const CertifyOptions& opt) const;
  Json timings() const;
};

CertifyReport certify(const CertifyOptions& opt, const std::function<void(const CriterionResult&)>& progress = {});

}  // namespace hvf
