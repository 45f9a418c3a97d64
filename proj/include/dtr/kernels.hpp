#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dtr::kernels {

// Row-major matrix of `rows` vectors, each `dim` floats.
struct MatrixView {
    std::span<const float> data;
    std::size_t rows = 0;
    std::size_t dim = 0;

    std::span<const float> row(std::size_t i) const noexcept {
        return data.subspan(i * dim, dim);
    }
};

// out[i] = <row i, probe>, each row accumulated in double in dimension order.
// Rows are scored in parallel; the per-row arithmetic is identical to the
// serial reference, so results match it bit for bit.
void inner_products(const MatrixView& m, std::span<const float> probe, std::span<double> out);

// Indices of the n best rows: score descending, then ids[i] ascending.
std::vector<std::size_t> top_n(std::span<const double> scores,
                               std::span<const std::string> ids,
                               std::size_t n);

namespace reference {

void inner_products(const MatrixView& m, std::span<const float> probe, std::span<double> out);

} // namespace reference

} // namespace dtr::kernels
