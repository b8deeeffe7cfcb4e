#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hashparse/encoder.h"

namespace hashparse::oracle {

// Central differences of f over every entry of params.values.
std::vector<double> finite_difference_gradient(const std::function<double(const EncoderParams&)>& f,
                                               const EncoderParams& params, double step);

struct SelfcheckOptions {
  int max_n = 5;
  int max_k = 2;
  int trials = 50;
  uint64_t seed = 1;
};

struct SelfcheckReport {
  int checks = 0;
  int failures = 0;
  std::vector<std::string> lines;  // one per suite

  bool ok() const { return failures == 0; }
};

// Chart, decoding and gradient oracles on random small problems.
SelfcheckReport run_selfcheck(const SelfcheckOptions& options);

}  // namespace hashparse::oracle
