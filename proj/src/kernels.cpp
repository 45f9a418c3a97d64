#include "dtr/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace dtr::kernels {

namespace {

inline double row_dot(const float* row, const float* probe, std::size_t dim) noexcept {
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        acc += static_cast<double>(row[j]) * static_cast<double>(probe[j]);
    }
    return acc;
}

} // namespace

void inner_products(const MatrixView& m, std::span<const float> probe, std::span<double> out) {
    const float* base = m.data.data();
    const float* p = probe.data();
    const std::size_t dim = m.dim;
    const auto rows = static_cast<std::int64_t>(m.rows);
#pragma omp parallel for schedule(static) if (rows > 2048)
    for (std::int64_t i = 0; i < rows; ++i) {
        out[static_cast<std::size_t>(i)] =
                row_dot(base + static_cast<std::size_t>(i) * dim, p, dim);
    }
}

std::vector<std::size_t> top_n(std::span<const double> scores,
                               std::span<const std::string> ids,
                               std::size_t n) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    n = std::min(n, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) {
            return scores[a] > scores[b];
        }
        return ids[a] < ids[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n),
                      order.end(), better);
    order.resize(n);
    return order;
}

namespace reference {

void inner_products(const MatrixView& m, std::span<const float> probe, std::span<double> out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        out[i] = row_dot(m.data.data() + i * m.dim, probe.data(), m.dim);
    }
}

} // namespace reference

} // namespace dtr::kernels
