#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cama/matrix.hpp"

namespace cama {

// Central-difference oracle: perturbs every coordinate of every input by
// +-h and differences the scalar function.
using ScalarFn = std::function<double(const std::vector<Matrix>&)>;
std::vector<Matrix> fd_gradients(const ScalarFn& f, const std::vector<Matrix>& inputs,
                                 double h = 1e-4);

// |a - n| <= max(abs_tol, rel_tol * max(|a|, |n|)) per coordinate.
bool gradients_close(const Matrix& analytic, const Matrix& numeric, double rel_tol = 1e-4,
                     double abs_tol = 1e-6, double* worst = nullptr);

struct GradCheckReport {
    int checks = 0;
    int failures = 0;
    std::vector<std::string> messages;  // one line per check

    bool ok() const { return failures == 0; }
};

// Finite-difference verification of every tape primitive plus the full
// GCN/GIN-0 classification losses w.r.t. parameters, features and the
// real-relaxed adjacency on a 6-node graph.
GradCheckReport run_gradcheck(uint64_t seed = 42);

}  // namespace cama
