#pragma once

#include <vector>

namespace panelkit::lp {

enum class Relation { le, eq, ge };
enum class Status { optimal, infeasible, unbounded, iteration_limit };

struct Constraint {
    std::vector<double> coeffs; // dense, size = num_vars
    Relation rel = Relation::le;
    double rhs = 0.0;
};

/// min (or max) objective . x  subject to  constraints, x >= 0.
struct Problem {
    int num_vars = 0;
    bool maximize = false;
    std::vector<double> objective;
    std::vector<Constraint> constraints;
};

struct Solution {
    Status status = Status::infeasible;
    std::vector<double> x;     // size num_vars
    double objective = 0.0;    // in the caller's sense (max or min)
    std::vector<double> duals; // one per constraint row
    int pivots = 0;
};

/// Dense two-phase simplex with Bland's rule (anti-cycling) and a
/// configurable feasibility/pivot tolerance. Intended for the modest
/// instance sizes this project solves; the interface is deliberately
/// solver-agnostic so another LP backend can be swapped in behind it.
Solution solve(const Problem& problem, double tol = 1e-9, long max_pivots = -1);

} // namespace panelkit::lp
