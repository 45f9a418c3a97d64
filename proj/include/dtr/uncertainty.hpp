#pragma once

#include <cstddef>
#include <span>

#include "dtr/generator.hpp"

namespace dtr {

// Normalized negative log-likelihood of a generated answer, in nats/token.
struct UncertaintyScore {
    double value = 0.0;
    std::size_t token_count = 0;

    friend bool operator==(const UncertaintyScore&, const UncertaintyScore&) = default;
};

struct TriggerDecision {
    bool retrieve = false;
    UncertaintyScore u;
    double threshold = 0.0;
};

// u = -(1/T) * sum(logprobs). Error(undefined_uncertainty) on an empty list.
UncertaintyScore uncertainty(std::span<const TokenLogprob> token_logprobs);
UncertaintyScore uncertainty(const GenerationResult& result);

// Retrieve iff u > threshold; u == threshold bypasses. The threshold must be
// >= 0, or -infinity to force retrieval; anything else is Error(contract).
TriggerDecision decide(const UncertaintyScore& u, double threshold);

} // namespace dtr
