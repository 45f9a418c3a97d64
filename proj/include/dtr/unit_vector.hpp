#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dtr {

inline constexpr double kUnitNormTolerance = 1e-6;

// L2-normalized embedding. Every similarity in the engine is an inner product
// between two of these, so it doubles as a cosine.
class UnitVector {
public:
    UnitVector() = default;

    // Divides by the L2 norm. Throws Error(embedding) on zero or non-finite input.
    static UnitVector normalize(std::span<const float> raw);
    static UnitVector normalize(std::span<const double> raw);

    // Adopts values that are already unit length (cache hits, snapshots).
    // Throws Error(integrity) if the norm is off by more than kUnitNormTolerance.
    static UnitVector from_normalized(std::vector<float> values);

    std::span<const float> values() const noexcept { return values_; }
    std::size_t dimension() const noexcept { return values_.size(); }

    friend bool operator==(const UnitVector&, const UnitVector&) = default;

private:
    explicit UnitVector(std::vector<float> values) : values_(std::move(values)) {}

    std::vector<float> values_;
};

double l2_norm(std::span<const float> v) noexcept;

// Inner product accumulated in double, in index order.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

} // namespace dtr
