#include "padain/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace padain {

namespace {

double eval_loss(const CheckFn& f, std::vector<TensorT<double>>& params,
                 std::vector<std::vector<double>>* grads_out) {
    Tape<double> tape;
    std::vector<TensorT<double>> leaves;
    leaves.reserve(params.size());
    for (TensorT<double>& p : params) leaves.push_back(tape.leaf(p));
    TensorT<double> loss = f(tape, leaves);
    if (loss.numel() != 1) {
        throw CheckInvalidError("gradient_check: function must return a scalar, got " +
                                to_string(loss.shape));
    }
    const double value = (*loss.store)[0];
    if (grads_out != nullptr) {
        tape.backward(loss);
        grads_out->clear();
        for (const TensorT<double>& leaf : leaves) {
            const std::vector<double>* g = leaf.grad();
            grads_out->push_back(g != nullptr ? *g
                                              : std::vector<double>(leaf.numel(), 0.0));
        }
    }
    return value;
}

}  // namespace

GradCheckResult gradient_check(const CheckFn& f, std::vector<TensorT<double>> params,
                               double fd_eps, double tol) {
    if (fd_eps <= 0.0) throw InputError("gradient_check: fd_eps must be > 0");
    const double base0 = eval_loss(f, params, nullptr);
    std::vector<std::vector<double>> analytic;
    const double base1 = eval_loss(f, params, &analytic);
    if (base0 != base1) {
        throw CheckInvalidError(
            "gradient_check: function is not deterministic (two evaluations at the "
            "same point disagree)");
    }
    if (!std::isfinite(base0)) {
        throw CheckInvalidError("gradient_check: loss is not finite at the base point");
    }

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::vector<double>& vals = *params[pi].store;
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double orig = vals[j];
            const double h = fd_eps * std::max(1.0, std::fabs(orig));
            vals[j] = orig + h;
            const double lp = eval_loss(f, params, nullptr);
            vals[j] = orig - h;
            const double lm = eval_loss(f, params, nullptr);
            vals[j] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi][j];
            const double abs_err = std::fabs(a - numeric);
            // Floor the denominator at 1e-2: central differences on an O(1)
            // loss carry ~1e-11 roundoff noise, so entries smaller than the
            // floor are held to an absolute bound of tol * 1e-2 instead of a
            // meaningless pure ratio.
            const double rel_err =
                abs_err / std::max({std::fabs(a), std::fabs(numeric), 1e-2});
            if (rel_err > res.max_rel_err) {
                res.max_rel_err = rel_err;
                res.worst_param = static_cast<int>(pi);
                res.worst_elem = j;
            }
            res.max_abs_err = std::max(res.max_abs_err, abs_err);
        }
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

}  // namespace padain
