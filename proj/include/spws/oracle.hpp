#pragma once

#include <map>
#include <string>
#include <vector>

#include "spws/tensor.hpp"

namespace spws {

/// A tensor expression in sum-of-products form, used only by the reference
/// oracle. It is deliberately separate from the CIN types so the oracle shares
/// no code with the compiler path it checks.
struct Einsum {
  struct Factor {
    std::string tensor;
    std::vector<std::string> vars;
  };
  struct Term {
    double coef = 1.0;
    std::vector<Factor> factors;
  };

  std::string result;
  std::vector<std::string> result_vars;
  std::vector<Term> terms;
};

/// Largest iteration space the oracle accepts.
inline constexpr std::size_t kOracleLimit = 10'000'000;

/// Evaluates the expression with naive nested loops over every index
/// variable's full extent. Extents come from the inputs; `extra_extents`
/// supplies extents for variables that only appear on the left-hand side.
DenseArray dense_oracle(const Einsum& expr, const std::map<std::string, DenseArray>& inputs,
                        const std::map<std::string, Coord>& extra_extents = {});

} // namespace spws
