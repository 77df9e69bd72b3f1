#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace l2g {

struct CheckOutcome {
  std::string group;  // ops, mlp, hvp, bilevel, closed_form, equivalence
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<CheckOutcome> checks;
  double seconds = 0.0;

  bool passed() const;
  // Largest error in `group`, or over every check when group is empty.
  double max_error(std::string_view group = {}) const;
  std::vector<CheckOutcome> failures() const;
  void merge(const GradcheckReport& other);
};

// Reverse-mode gradient of every op against central differences (eps 1e-6).
GradcheckReport check_ops(std::uint64_t seed);
// Embedding MLP 6 -> 5 -> 4 under both heads, plus Hessian-vector products.
GradcheckReport check_mlp(std::uint64_t seed);
// Exact meta-gradient of a frozen disjoint pair against differences of the
// full bilevel objective, on an MLP with fewer than 200 parameters.
GradcheckReport check_bilevel(std::uint64_t seed);
// Scalar quadratic with a known meta-gradient in both gradient modes.
GradcheckReport check_closed_form();
// Bit-exact collapses between training modes.
GradcheckReport check_mode_equivalences(std::uint64_t seed);

GradcheckReport run_gradcheck_suite(std::uint64_t seed);

std::string format_report(const GradcheckReport& report);

}  // namespace l2g
