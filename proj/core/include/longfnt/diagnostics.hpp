// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lfnt {

struct CheckResult {
  std::string name;
  double value = 0.0;  // measured error
  double tolerance = 0.0;

  bool passed() const { return value <= tolerance; }
};

/// 64-bit finite-difference checks of every building block and of the
/// end-to-end micro models. Each entry's value is the worst relative error.
std::vector<CheckResult> gradient_suite(std::uint64_t seed = 17, double tolerance = 1e-4);

struct LatticeOracleReport {
  std::size_t instances = 0;
  double max_transducer_diff = 0.0;
  double max_ctc_diff = 0.0;
  std::size_t ctc_infeasible = 0;  // instances where both sides agree the alignment is impossible
  std::size_t ctc_mismatch = 0;    // feasibility disagreements
};

/// Fuzzes the lattice losses (T <= 4, U <= 3, V <= 3) against the
/// enumeration references in 64-bit.
LatticeOracleReport lattice_oracle(std::size_t instances, std::uint64_t seed);

}  // namespace lfnt
