#include "dtr/unit_vector.hpp"

#include <cmath>

#include "dtr/error.hpp"

namespace dtr {

namespace {

template <typename T>
UnitVector normalize_impl(std::span<const T> raw, std::vector<float>& out) {
    double sq = 0.0;
    for (T x : raw) {
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    const double norm = std::sqrt(sq);
    if (raw.empty() || !std::isfinite(norm) || norm == 0.0) {
        fail(ErrorCategory::embedding, "cannot normalize a zero, empty or non-finite vector");
    }
    out.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(raw[i]) / norm);
    }
    return UnitVector::from_normalized(std::move(out));
}

} // namespace

UnitVector UnitVector::normalize(std::span<const float> raw) {
    std::vector<float> out;
    return normalize_impl(raw, out);
}

UnitVector UnitVector::normalize(std::span<const double> raw) {
    std::vector<float> out;
    return normalize_impl(raw, out);
}

UnitVector UnitVector::from_normalized(std::vector<float> values) {
    const double norm = l2_norm(values);
    if (values.empty() || !(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
        fail(ErrorCategory::integrity,
             "vector is not unit length (norm " + std::to_string(norm) + ")");
    }
    return UnitVector(std::move(values));
}

double l2_norm(std::span<const float> v) noexcept {
    return std::sqrt(dot(v, v));
}

double dot(std::span<const float> a, std::span<const float> b) noexcept {
    double acc = 0.0;
    const std::size_t n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t i = 0; i < n; ++i) {
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return acc;
}

} // namespace dtr
