#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ladder {

enum class ErrorKind {
    dimension,
    numeric,
    contract,
    reuse,
    format,
    length,
    consistency,
    budget,
    degeneracy,
    collapse,
    yield_shortfall,
    configuration,
    usage,
    io,
};

std::string_view to_string(ErrorKind kind);

// All library failures derive from this; kind() is what callers branch on.
class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

class YieldShortfallError : public Error {
   public:
    YieldShortfallError(std::size_t achieved, std::size_t requested)
        : Error(ErrorKind::yield_shortfall, "generated " + std::to_string(achieved) + " of " +
                                                std::to_string(requested) + " requested examples"),
          achieved_(achieved),
          requested_(requested) {}

    std::size_t achieved() const noexcept { return achieved_; }
    std::size_t requested() const noexcept { return requested_; }

   private:
    std::size_t achieved_;
    std::size_t requested_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) fail(kind, message);
}

}  // namespace ladder
