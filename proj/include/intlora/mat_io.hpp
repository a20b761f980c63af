#pragma once

#include <string>

#include "intlora/matrix.hpp"

namespace intlora {

// Matrix interchange: "*.csv" is parsed/printed as plain CSV; anything else
// uses the binary layout u32 rows, u32 cols, then rows*cols binary64 values,
// all little-endian.
Matrix read_matrix(const std::string& path);
void write_matrix(const std::string& path, const Matrix& m);

} // namespace intlora
