#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtr {

enum class ErrorCategory {
    usage,
    config,
    parse,
    integrity,
    build,
    search,
    template_error,
    contract,
    undefined_uncertainty,
    io,
    embedding,
    generation,
    scripted_miss,
};

std::string_view category_name(ErrorCategory category) noexcept;

// Process exit code for the CLI: 2 usage, 3 config, 4 data integrity, 5 backend.
int exit_code(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
            : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

// Raised when the embedder keeps failing after all retries. Indices refer to
// positions in the caller's input list.
class EmbeddingError : public Error {
public:
    EmbeddingError(const std::string& message, std::vector<std::size_t> failed)
            : Error(ErrorCategory::embedding, message),
              failed_indices_(std::move(failed)) {}

    const std::vector<std::size_t>& failed_indices() const noexcept {
        return failed_indices_;
    }

private:
    std::vector<std::size_t> failed_indices_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

} // namespace dtr
