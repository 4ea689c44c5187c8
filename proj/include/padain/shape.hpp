#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace padain {

// Errors are split by who has to fix them: DimError for shape algebra bugs,
// InputError for bad runtime values (labels, sizes), UsageError for API misuse,
// CheckInvalidError for gradient checks run on unsuitable functions,
// IngestError for anything wrong with files on disk.
struct DimError : std::runtime_error {
    explicit DimError(const std::string& msg) : std::runtime_error(msg) {}
};
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};
struct CheckInvalidError : std::runtime_error {
    explicit CheckInvalidError(const std::string& msg) : std::runtime_error(msg) {}
};
struct IngestError : std::runtime_error {
    explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dense NCHW shape. Weight tensors reuse the same four slots:
// conv weights are (OutC, InC, kH, kW), linear weights are (Out, In, 1, 1).
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const {  // elements per (n, c) slice
        return static_cast<std::size_t>(h) * w;
    }
    std::size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
    }
    bool operator==(const Shape4&) const = default;
};

inline std::string to_string(const Shape4& s) {
    return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " +
           std::to_string(s.h) + ", " + std::to_string(s.w) + ")";
}

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* op) {
    if (!(a == b)) {
        throw DimError(std::string(op) + ": shape mismatch, " + to_string(a) +
                       " vs " + to_string(b));
    }
}

}  // namespace padain
