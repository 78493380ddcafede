#ifndef RAINBOW_EXPRESSION_HPP
#define RAINBOW_EXPRESSION_HPP

// Tiny arithmetic grammar for custom payoffs: variables S1..SJ, numeric
// constants, + - *, and max(...)/min(...). Convexity and sub-modularity
// flags are set only when the expression matches a recognized pattern.

#include <memory>
#include <string>

#include "rainbow/payoffs.hpp"

namespace rainbow::expr {

// Throws an argument error with the offending position on parse failure or
// when a variable index exceeds the asset count.
payoffs::Payoff parse_payoff_expression(const std::string& text, int assets);

// Parses an expression into a plain evaluator (no payoff classification);
// used for jump-map coordinates.
std::function<double(std::span<const double>)> parse_scalar_expression(const std::string& text,
                                                                       int assets);

}  // namespace rainbow::expr

#endif
