#pragma once

#include <span>
#include <vector>

#include "bayescal/common.hpp"

namespace bayescal {

/// Max-subtracted softmax; throws ValidationError on non-finite input.
std::vector<double> softmax(std::span<const double> z);

void softmax_inplace(double* z, std::size_t n);
void log_softmax_inplace(double* z, std::size_t n);

/// Row-wise softmax of an N x C matrix.
Matrix softmax_rows(const Matrix& logits);

}  // namespace bayescal
