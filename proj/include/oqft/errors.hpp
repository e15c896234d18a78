#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace oqft {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

#define OQFT_DECLARE_ERROR(Name)                                      \
    class Name : public Error {                                       \
    public:                                                           \
        using Error::Error;                                           \
        const char* kind() const noexcept override { return #Name; }  \
    }

// Fock-space cutoff too small for the requested state or evolution.
OQFT_DECLARE_ERROR(TruncationError);
// Hamiltonian term above quartic order (no second-order generator exists).
OQFT_DECLARE_ERROR(OrderError);
OQFT_DECLARE_ERROR(UnsupportedDiffusion);
OQFT_DECLARE_ERROR(ConvergenceError);
OQFT_DECLARE_ERROR(StabilityError);
OQFT_DECLARE_ERROR(InfiniteAction);
OQFT_DECLARE_ERROR(OverlapError);
OQFT_DECLARE_ERROR(DimensionError);
OQFT_DECLARE_ERROR(InvalidArgument);
OQFT_DECLARE_ERROR(ConfigError);

#undef OQFT_DECLARE_ERROR

/// Three significant digits, for error messages about small quantities.
inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace oqft
