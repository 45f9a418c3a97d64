#include "dtr/uncertainty.hpp"

#include <cmath>
#include <limits>

#include "dtr/error.hpp"

namespace dtr {

UncertaintyScore uncertainty(std::span<const TokenLogprob> token_logprobs) {
    if (token_logprobs.empty()) {
        fail(ErrorCategory::undefined_uncertainty, "no token logprobs to score");
    }
    double sum = 0.0;
    for (const auto& t : token_logprobs) {
        sum += t.logprob;
    }
    const auto count = token_logprobs.size();
    double value = -sum / static_cast<double>(count);
    // -0.0 prints as "-0" in traces
    if (value == 0.0) {
        value = 0.0;
    }
    return {value, count};
}

UncertaintyScore uncertainty(const GenerationResult& result) {
    return uncertainty(result.token_logprobs);
}

TriggerDecision decide(const UncertaintyScore& u, double threshold) {
    const bool force = threshold == -std::numeric_limits<double>::infinity();
    if (!force && !(threshold >= 0.0)) {
        fail(ErrorCategory::contract, "uncertainty threshold must be >= 0");
    }
    return {u.value > threshold, u, threshold};
}

} // namespace dtr
