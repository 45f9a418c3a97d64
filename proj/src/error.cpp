#include "dtr/error.hpp"

namespace dtr {

std::string_view category_name(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::config: return "config";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::integrity: return "integrity";
        case ErrorCategory::build: return "build";
        case ErrorCategory::search: return "search";
        case ErrorCategory::template_error: return "template";
        case ErrorCategory::contract: return "contract";
        case ErrorCategory::undefined_uncertainty: return "undefined_uncertainty";
        case ErrorCategory::io: return "io";
        case ErrorCategory::embedding: return "embedding";
        case ErrorCategory::generation: return "generation";
        case ErrorCategory::scripted_miss: return "scripted_miss";
    }
    return "unknown";
}

int exit_code(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::usage: return 2;
        case ErrorCategory::config: return 3;
        case ErrorCategory::embedding:
        case ErrorCategory::generation:
        case ErrorCategory::scripted_miss: return 5;
        default: return 4;
    }
}

} // namespace dtr
