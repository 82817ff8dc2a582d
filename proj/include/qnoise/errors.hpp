#pragma once

#include <stdexcept>
#include <string>

namespace qnoise {

// Base of every error thrown by the library. The CLI maps the three
// families below onto exit codes 2, 3 and 4.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Malformed or out-of-range input: bad config, invalid parameters.
class ValidationError : public Error
{
public:
    using Error::Error;
};

enum class DomainFault
{
    divergence,                // the requested PSD is infinite (phi = 0, p = 0, alpha_p = 0)
    unsupported_configuration, // outside the resonant-probe model (Delta != 0, asymmetric cavity)
    pole,                      // synodyne branch crossover
    out_of_range,              // value does not fall on the evaluation grid
    no_peak,                   // fit input carries no resolvable peak
    non_convergence,           // iterative refinement did not meet its stopping rule
};

inline const char* to_string(DomainFault fault)
{
    switch (fault) {
    case DomainFault::divergence: return "divergence";
    case DomainFault::unsupported_configuration: return "unsupported configuration";
    case DomainFault::pole: return "pole";
    case DomainFault::out_of_range: return "out of range";
    case DomainFault::no_peak: return "no peak";
    case DomainFault::non_convergence: return "non-convergence";
    }
    return "domain error";
}

// A well-formed request whose physics is undefined or unsupported.
class DomainError : public Error
{
public:
    DomainError(DomainFault fault, const std::string& what)
        : Error(std::string(to_string(fault)) + ": " + what), fault_(fault), detail_(what)
    {
    }

    DomainFault fault() const noexcept { return fault_; }
    // The message without the fault prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    DomainFault fault_;
    std::string detail_;
};

class IoError : public Error
{
public:
    IoError(const std::string& path, const std::string& what)
        : Error(path + ": " + what), path_(path)
    {
    }

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition)
        throw ValidationError(message);
}

} // namespace detail

} // namespace qnoise
