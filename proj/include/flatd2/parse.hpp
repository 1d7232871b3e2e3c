#pragma once

#include <string_view>

#include "flatd2/expr.hpp"

namespace flatd2 {

/// Parses infix expression text. `line` and `column` locate the first
/// character of `text` in its source file and are used in ParseError.
Expr parse_expr(std::string_view text, int line = 1, int column = 1);

}  // namespace flatd2
