#include "bayescal/softmax.hpp"

#include <algorithm>
#include <cmath>

namespace bayescal {

void softmax_inplace(double* z, std::size_t n) {
    const double zmax = *std::max_element(z, z + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (z[i] = std::exp(z[i] - zmax));
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < n; ++i) z[i] *= inv;
}

void log_softmax_inplace(double* z, std::size_t n) {
    const double zmax = *std::max_element(z, z + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(z[i] - zmax);
    const double lse = zmax + std::log(total);
    for (std::size_t i = 0; i < n; ++i) z[i] -= lse;
}

std::vector<double> softmax(std::span<const double> z) {
    require(!z.empty(), "softmax of an empty vector");
    for (double v : z) require(std::isfinite(v), "softmax input is not finite");
    std::vector<double> out(z.begin(), z.end());
    softmax_inplace(out.data(), out.size());
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out = logits;
    for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r), out.cols());
    return out;
}

}  // namespace bayescal
