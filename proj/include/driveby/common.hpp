#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace driveby {

// Error taxonomy. The CLI maps these onto exit codes: config -> 1,
// data -> 2, numerical -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

// OpenBLAS's runtime dispatch cannot identify this CPU when the hypervisor
// masks the model string and falls back to a slow kernel. Pinning the core
// type recovers ~3x GEMM throughput. Must run before the first BLAS call;
// an explicit OPENBLAS_CORETYPE in the environment always wins.
inline bool init_blas_env() {
#if defined(__x86_64__) && defined(__GNUC__)
    if (std::getenv("OPENBLAS_CORETYPE") == nullptr &&
        __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
        __builtin_cpu_supports("avx512bw") && __builtin_cpu_supports("avx512vl")) {
        ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    }
#endif
    return true;
}

inline const bool blas_env_ready = init_blas_env();

} // namespace detail

inline constexpr std::uint16_t kFormatVersion = 1;

} // namespace driveby
