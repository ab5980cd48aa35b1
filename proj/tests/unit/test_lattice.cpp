// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "longfnt/grad_check.hpp"
#include "longfnt/lattice.hpp"
#include "longfnt/ops.hpp"
#include "test_util.hpp"

using namespace lfnt;
using lfnt::testing::random_values;

namespace {

/// Random row-normalized log-distributions, [rows x cols].
std::vector<double> random_log_probs(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  auto raw = random_values(rows * cols, rng, -2.0, 2.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double m = -1e300;
    for (std::size_t c = 0; c < cols; ++c) m = std::max(m, raw[r * cols + c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(raw[r * cols + c] - m);
    for (std::size_t c = 0; c < cols; ++c) raw[r * cols + c] -= m + std::log(z);
  }
  return raw;
}

LabelSequence random_labels(std::size_t n, std::size_t vocab_ext, std::mt19937_64& rng) {
  LabelSequence y(n);
  for (auto& v : y) v = 1 + static_cast<std::int64_t>(rng() % (vocab_ext - 1));
  return y;
}

}  // namespace

TEST_CASE("transducer: single forced all-blank path") {
  // T=1, U=0, uniform over 3 symbols.
  std::vector<double> lp(3, -std::log(3.0));
  auto r = transducer_loss(lp, {1, 0, 3}, {});
  CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(std::abs(r.loss - 1.0986) < 1e-4);
  CHECK(brute_force_transducer_loss(lp, {1, 0, 3}, {}) == doctest::Approx(-lp[0]));
}

TEST_CASE("transducer: T=2 U=1 equals the explicit sum over its paths") {
  std::mt19937_64 rng(1);
  const LatticeDims dims{2, 1, 3};
  const auto lp = random_log_probs(4, 3, rng);
  const LabelSequence y{2};
  auto at = [&](std::size_t t, std::size_t u, std::size_t k) { return lp[(t * 2 + u) * 3 + k]; };
  // Paths end with the blank out of (T-1, U): label at t=0 then two blanks,
  // or blank, label at t=1, blank.
  const double p1 = std::exp(at(0, 0, 2) + at(0, 1, 0) + at(1, 1, 0));
  const double p2 = std::exp(at(0, 0, 0) + at(1, 0, 2) + at(1, 1, 0));
  CHECK(transducer_path_count(2, 1) == 2);
  CHECK(transducer_loss(lp, dims, y).loss == doctest::Approx(-std::log(p1 + p2)).epsilon(1e-12));
}

TEST_CASE("transducer: T=3 U=2 matches enumeration") {
  std::mt19937_64 rng(2);
  const LatticeDims dims{3, 2, 4};
  const auto lp = random_log_probs(9, 4, rng);
  const LabelSequence y{3, 1};
  CHECK(transducer_path_count(3, 2) == 6);
  CHECK(std::abs(transducer_loss(lp, dims, y).loss - brute_force_transducer_loss(lp, dims, y)) <= 1e-6);
}

TEST_CASE("transducer errors") {
  std::vector<double> lp(6, -std::log(3.0));
  CHECK_THROWS_AS(transducer_loss(lp, {0, 1, 3}, LabelSequence{1}), ShapeError);
  CHECK_THROWS_AS(transducer_loss(lp, {1, 1, 3}, LabelSequence{0}), ShapeError);
  lp[2] = std::nan("");
  CHECK_THROWS_AS(transducer_loss(lp, {1, 1, 3}, LabelSequence{1}), NumericError);
  std::vector<double> big(13 * 3, -std::log(3.0));
  CHECK_THROWS_AS(brute_force_transducer_loss(big, {13, 0, 3}, {}), ShapeError);
}

TEST_CASE("transducer: relabeling symmetry of the oracle") {
  std::mt19937_64 rng(3);
  const LatticeDims dims{3, 2, 4};
  const auto lp = random_log_probs(9, 4, rng);
  const LabelSequence y{1, 3};
  // Swap symbols 1 and 3 everywhere.
  auto swapped = lp;
  for (std::size_t r = 0; r < 9; ++r) std::swap(swapped[r * 4 + 1], swapped[r * 4 + 3]);
  const LabelSequence y2{3, 1};
  CHECK(brute_force_transducer_loss(lp, dims, y) ==
        doctest::Approx(brute_force_transducer_loss(swapped, dims, y2)).epsilon(1e-14));
}

TEST_CASE("fuzzed lattice equivalence against enumeration") {
  std::mt19937_64 rng(500);
  double worst_rnnt = 0.0, worst_ctc = 0.0;
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t T = 1 + rng() % 4, U = rng() % 4, V = 2 + rng() % 2;
    const auto y = random_labels(U, V, rng);
    const auto lp = random_log_probs(T * (U + 1), V, rng);
    const LatticeDims dims{T, U, V};
    const double fast = transducer_loss(lp, dims, y).loss;
    const double slow = brute_force_transducer_loss(lp, dims, y);
    worst_rnnt = std::max(worst_rnnt, std::abs(fast - slow));
    CHECK(fast >= 0.0);

    const auto ctc_lp = random_log_probs(T, V, rng);
    const auto c = ctc_loss(ctc_lp, T, V, y);
    const double c_slow = brute_force_ctc_loss(ctc_lp, T, V, y);
    if (std::isinf(c_slow)) {
      CHECK_FALSE(c.feasible);
      CHECK(std::isinf(c.loss));
    } else {
      CHECK(c.feasible);
      worst_ctc = std::max(worst_ctc, std::abs(c.loss - c_slow));
      CHECK(c.loss >= 0.0);
    }
  }
  CHECK(worst_rnnt <= 1e-6);
  CHECK(worst_ctc <= 1e-6);
}

TEST_CASE("transducer gradient: beta recursion vs autodiff vs finite differences") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 1 + rng() % 4, U = rng() % 4, V = 3;
    const auto y = random_labels(U, V, rng);
    std::vector<Tensor> params{Tensor::from_values({T * (U + 1), V}, random_log_probs(T * (U + 1), V, rng), true)};

    transducer_loss(params[0], T, y).backward();
    const auto analytic = params[0].grad_values();
    params[0].zero_grad();
    Tensor via_graph = transducer_loss_autodiff(params[0], T, y);
    via_graph.backward();
    const auto autodiff = params[0].grad_values();
    CHECK(lfnt::testing::max_abs_diff(analytic, autodiff) <= 1e-8);
    CHECK(via_graph.item() == doctest::Approx(transducer_loss(params[0], T, y).item()).epsilon(1e-12));

    auto report = grad_check([&] { return transducer_loss(params[0], T, y); }, params);
    CHECK(report.max_rel_error <= 1e-4);
  }
}

TEST_CASE("moving mass onto the target path never increases the transducer loss") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 2 + rng() % 3, U = 1 + rng() % 2, V = 4;
    const auto y = random_labels(U, V, rng);
    auto lp = random_log_probs(T * (U + 1), V, rng);
    const std::size_t t = rng() % T, u = rng() % (U + 1);
    // Pick the symbol the lattice actually uses at (t,u) and a wrong one.
    const std::size_t good = u < U ? static_cast<std::size_t>(y[u]) : 0;
    std::size_t bad = 1;
    while (bad == good || (u < U && bad == 0)) bad = (bad + 1) % V;
    const double before = transducer_loss(lp, {T, U, V}, y).loss;
    double* row = lp.data() + (t * (U + 1) + u) * V;
    const double moved = std::exp(row[bad]) * 0.5;
    row[bad] = std::log(std::exp(row[bad]) - moved);
    row[good] = std::log(std::exp(row[good]) + moved);
    CHECK(transducer_loss(lp, {T, U, V}, y).loss <= before + 1e-12);
  }
}

TEST_CASE("ctc small cases") {
  std::mt19937_64 rng(10);
  const auto lp1 = random_log_probs(1, 3, rng);
  CHECK(ctc_loss(lp1, 1, 3, LabelSequence{2}).loss == doctest::Approx(-lp1[2]));

  const auto lp2 = random_log_probs(2, 3, rng);
  const double p = std::exp(lp2[2] + lp2[3 + 2]) + std::exp(lp2[0] + lp2[3 + 2]) + std::exp(lp2[2] + lp2[3 + 0]);
  CHECK(ctc_loss(lp2, 2, 3, LabelSequence{2}).loss == doctest::Approx(-std::log(p)).epsilon(1e-12));

  const auto r = ctc_loss(lp1, 1, 3, LabelSequence{1, 1});
  CHECK_FALSE(r.feasible);
  CHECK(std::isinf(r.loss));
  CHECK(std::all_of(r.grad.begin(), r.grad.end(), [](double g) { return g == 0.0; }));
}

TEST_CASE("ctc gradient matches finite differences") {
  PrecisionScope p64(DType::kF64);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t T = 2 + rng() % 4, V = 4, U = 1 + rng() % 2;
    const auto y = random_labels(U, V, rng);
    std::vector<Tensor> params{Tensor::from_values({T, V}, random_log_probs(T, V, rng), true)};
    auto report = grad_check([&] { return ctc_loss(params[0], y); }, params);
    CHECK(report.max_rel_error <= 1e-4);
  }
}

TEST_CASE("lm loss") {
  const std::size_t C = 5;
  SUBCASE("perfect predictions") {
    std::vector<double> lp(3 * C, -1e9);
    const LabelSequence y{2, 4};
    lp[0 * C + 2] = 0.0;
    lp[1 * C + 4] = 0.0;
    lp[2 * C + 0] = 0.0;
    CHECK(lm_loss(lp, C, y, 0) == 0.0);
  }
  SUBCASE("uniform") {
    std::vector<double> lp(3 * C, -std::log(5.0));
    CHECK(lm_loss(lp, C, LabelSequence{1, 3}, 0) == doctest::Approx(std::log(5.0)));
  }
  SUBCASE("random against gather-and-average") {
    std::mt19937_64 rng(12);
    const auto lp = random_log_probs(4, C, rng);
    const LabelSequence y{1, 2, 3};
    const double expect = -(lp[0 * C + 1] + lp[1 * C + 2] + lp[2 * C + 3] + lp[3 * C + 0]) / 4.0;
    CHECK(lm_loss(lp, C, y, 0) == doctest::Approx(expect).epsilon(1e-14));
    PrecisionScope p64(DType::kF64);
    CHECK(lm_loss(Tensor::from_values({4, C}, lp), y, 0).item() == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("length mismatch") {
    std::vector<double> lp(2 * C, -std::log(5.0));
    CHECK_THROWS_AS(lm_loss(lp, C, LabelSequence{1, 2}, 0), ShapeError);
  }
}
