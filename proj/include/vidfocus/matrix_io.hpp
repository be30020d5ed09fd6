#pragma once

#include <string>
#include <string_view>

#include "vidfocus/matrix.hpp"

namespace vidfocus {

// Text matrix format: first line "rows cols", then rows*cols whitespace
// separated reals in row-major order. Values are written with 17 significant
// digits so they round-trip exactly.
Matrix parse_matrix_text(std::string_view text);
std::string format_matrix_text(const Matrix& m);

Matrix read_matrix_file(const std::string& path);

}  // namespace vidfocus
