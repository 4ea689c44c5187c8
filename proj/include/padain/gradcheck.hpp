#pragma once

#include <functional>
#include <string>
#include <vector>

#include "padain/tensor.hpp"

namespace padain {

struct GradCheckResult {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    int worst_param = -1;
    std::size_t worst_elem = 0;
    bool pass = false;
};

// Builds a scalar loss from leaves bound to the given tape. Called many times;
// must be a pure function of the leaf values.
using CheckFn =
    std::function<TensorT<double>(Tape<double>&, std::vector<TensorT<double>>&)>;

// Central-difference gradient verification on the 64-bit path. Each parameter
// element is perturbed by fd_eps * max(1, |v|). The function is evaluated
// twice at the base point first; a bitwise mismatch there means it is not a
// deterministic function of its inputs and the check throws CheckInvalidError.
// Relative error per element: |a - n| / max(|a|, |n|, 1e-2); the floor turns
// the bound absolute for near-zero entries, below finite-difference noise
// would otherwise dominate the ratio.
GradCheckResult gradient_check(const CheckFn& f, std::vector<TensorT<double>> params,
                               double fd_eps = 1e-5, double tol = 1e-6);

}  // namespace padain
