#include "panelkit/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "panelkit/errors.hpp"

namespace panelkit::lp {

namespace {

// Dense tableau:
//   rows 0..m-1   constraint rows (Ax = b after adding slack/surplus/artificial)
//   row  m        phase objective row (reduced costs)
// Columns: [structural | slack+surplus | artificial | rhs]
struct Tableau {
    std::size_t rows = 0, cols = 0; // cols includes rhs
    std::vector<double> a;
    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

void pivot(Tableau& t, std::size_t pr, std::size_t pc) {
    const double piv = t.at(pr, pc);
    const double inv = 1.0 / piv;
    for (std::size_t c = 0; c < t.cols; ++c) t.at(pr, c) *= inv;
    t.at(pr, pc) = 1.0;
    for (std::size_t r = 0; r < t.rows; ++r) {
        if (r == pr) continue;
        const double f = t.at(r, pc);
        if (f == 0.0) continue;
        double* row = &t.a[r * t.cols];
        const double* prow = &t.a[pr * t.cols];
        for (std::size_t c = 0; c < t.cols; ++c) row[c] -= f * prow[c];
        t.at(r, pc) = 0.0;
    }
}

// Runs simplex iterations on the current objective row (row m, minimizing).
// Pricing is Dantzig (most negative reduced cost) for speed; after a run of
// degenerate pivots with no objective progress it switches to Bland's rule,
// whose lowest-index choices cannot cycle, and switches back once the
// objective moves again.
Status iterate(Tableau& t, std::vector<int>& basis, std::size_t num_cols_usable,
               double tol, long max_pivots, int& pivots) {
    const std::size_t m = t.rows - 1;
    const std::size_t rhs = t.cols - 1;
    bool bland = false;
    long stall = 0;
    const long stall_limit = 2 * static_cast<long>(m) + 10;
    for (;;) {
        if (max_pivots >= 0 && pivots >= max_pivots) return Status::iteration_limit;
        std::size_t enter = num_cols_usable;
        if (bland) {
            for (std::size_t c = 0; c < num_cols_usable; ++c) {
                if (t.at(m, c) < -tol) {
                    enter = c;
                    break;
                }
            }
        } else {
            double best = -tol;
            for (std::size_t c = 0; c < num_cols_usable; ++c) {
                if (t.at(m, c) < best) {
                    best = t.at(m, c);
                    enter = c;
                }
            }
        }
        if (enter == num_cols_usable) return Status::optimal;

        std::size_t leave = m;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < m; ++r) {
            const double coef = t.at(r, enter);
            if (coef > tol) {
                const double ratio = t.at(r, rhs) / coef;
                if (ratio < best_ratio - tol ||
                    (ratio < best_ratio + tol && (leave == m || basis[r] < basis[leave]))) {
                    best_ratio = ratio;
                    leave = r;
                }
            }
        }
        if (leave == m) return Status::unbounded;
        const double before = t.at(m, rhs);
        pivot(t, leave, enter);
        basis[leave] = static_cast<int>(enter);
        ++pivots;
        const double after = t.at(m, rhs);
        if (std::abs(after - before) <= tol) {
            if (++stall >= stall_limit) bland = true;
        } else {
            stall = 0;
            bland = false;
        }
    }
}

} // namespace

Solution solve(const Problem& problem, double tol, long max_pivots) {
    const std::size_t n = static_cast<std::size_t>(problem.num_vars);
    const std::size_t m = problem.constraints.size();
    if (problem.objective.size() != n) throw SolverError("objective size mismatch");

    // Count auxiliary columns. Every row gets either a slack (le), a
    // surplus+artificial (ge), or an artificial (eq); rows are normalized
    // to rhs >= 0 first.
    std::vector<double> sign(m, 1.0);
    std::vector<Relation> rel(m);
    for (std::size_t r = 0; r < m; ++r) {
        if (problem.constraints[r].coeffs.size() != n) throw SolverError("constraint size mismatch");
        rel[r] = problem.constraints[r].rel;
        if (problem.constraints[r].rhs < 0) {
            sign[r] = -1.0;
            rel[r] = rel[r] == Relation::le ? Relation::ge
                   : rel[r] == Relation::ge ? Relation::le
                                            : Relation::eq;
        }
    }
    std::size_t num_slack = 0, num_art = 0;
    for (std::size_t r = 0; r < m; ++r) {
        if (rel[r] != Relation::eq) ++num_slack;
        if (rel[r] != Relation::le) ++num_art;
    }

    const std::size_t slack0 = n;
    const std::size_t art0 = n + num_slack;
    const std::size_t total = n + num_slack + num_art;

    Tableau t;
    t.rows = m + 1;
    t.cols = total + 1;
    t.a.assign(t.rows * t.cols, 0.0);
    const std::size_t rhs = total;

    std::vector<int> basis(m, -1);
    // Remembers, per row, the column whose final reduced cost yields the dual.
    std::vector<std::size_t> dual_col(m);
    std::vector<double> dual_sign(m);

    std::size_t next_slack = slack0, next_art = art0;
    for (std::size_t r = 0; r < m; ++r) {
        const Constraint& con = problem.constraints[r];
        for (std::size_t c = 0; c < n; ++c) t.at(r, c) = sign[r] * con.coeffs[c];
        t.at(r, rhs) = sign[r] * con.rhs;

        if (rel[r] == Relation::le) {
            t.at(r, next_slack) = 1.0;
            basis[r] = static_cast<int>(next_slack);
            dual_col[r] = next_slack;
            dual_sign[r] = -sign[r];
            ++next_slack;
        } else if (rel[r] == Relation::ge) {
            t.at(r, next_slack) = -1.0;
            dual_col[r] = next_slack;
            dual_sign[r] = sign[r];
            ++next_slack;
            t.at(r, next_art) = 1.0;
            basis[r] = static_cast<int>(next_art);
            ++next_art;
        } else {
            t.at(r, next_art) = 1.0;
            basis[r] = static_cast<int>(next_art);
            dual_col[r] = next_art;
            dual_sign[r] = -sign[r];
            ++next_art;
        }
    }

    Solution sol;
    if (max_pivots < 0) max_pivots = 2000 + 50L * static_cast<long>(m + total);

    // Phase 1: minimize sum of artificials.
    if (num_art > 0) {
        for (std::size_t c = art0; c < total; ++c) t.at(m, c) = 1.0;
        // Price out basic artificials.
        for (std::size_t r = 0; r < m; ++r) {
            if (basis[r] >= static_cast<int>(art0)) {
                for (std::size_t c = 0; c <= rhs; ++c) t.at(m, c) -= t.at(r, c);
            }
        }
        Status st = iterate(t, basis, total, tol, max_pivots, sol.pivots);
        if (st == Status::iteration_limit) {
            sol.status = st;
            return sol;
        }
        const double infeas = -t.at(m, rhs);
        if (infeas > 1e-7) {
            sol.status = Status::infeasible;
            return sol;
        }
        // Drive remaining artificials out of the basis where possible.
        for (std::size_t r = 0; r < m; ++r) {
            if (basis[r] < static_cast<int>(art0)) continue;
            std::size_t pc = art0;
            for (std::size_t c = 0; c < art0; ++c) {
                if (std::abs(t.at(r, c)) > tol) {
                    pc = c;
                    break;
                }
            }
            if (pc < art0) {
                pivot(t, r, pc);
                basis[r] = static_cast<int>(pc);
                ++sol.pivots;
            }
            // else: redundant row; its artificial stays basic at level ~0.
        }
    }

    // Phase 2: install the real objective (minimization form) and price out.
    for (std::size_t c = 0; c <= rhs; ++c) t.at(m, c) = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        t.at(m, c) = problem.maximize ? -problem.objective[c] : problem.objective[c];
    }
    for (std::size_t r = 0; r < m; ++r) {
        const int b = basis[r];
        if (b >= 0 && b < static_cast<int>(n)) {
            const double cb = problem.maximize ? -problem.objective[b] : problem.objective[b];
            if (cb != 0.0) {
                for (std::size_t c = 0; c <= rhs; ++c) t.at(m, c) -= cb * t.at(r, c);
            }
        }
    }
    // Artificial columns are frozen out of phase 2 (usable columns < art0),
    // except any still basic at zero level, which simply stay put.
    Status st = iterate(t, basis, art0, tol, max_pivots, sol.pivots);
    sol.status = st;
    if (st != Status::optimal) return sol;

    sol.x.assign(n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        if (basis[r] >= 0 && basis[r] < static_cast<int>(n)) {
            sol.x[static_cast<std::size_t>(basis[r])] = t.at(r, rhs);
        }
    }
    double obj = 0.0;
    for (std::size_t c = 0; c < n; ++c) obj += problem.objective[c] * sol.x[c];
    sol.objective = obj;

    sol.duals.assign(m, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        // Reduced cost of the row's identity column encodes the dual value
        // (phase-2 costs of slack/artificial columns are zero).
        double z = t.at(m, dual_col[r]);
        double y = dual_sign[r] * z;
        sol.duals[r] = problem.maximize ? -y : y;
    }
    return sol;
}

} // namespace panelkit::lp
