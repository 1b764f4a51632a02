//! Dense revised simplex for the pairing relaxation.
//!
//! Solves `max sum_e w_e x_e` subject to `sum_{e incident to v} x_e <= 1`
//! for every vertex v and `x >= 0`. The slack basis is feasible from the
//! start, so there is no phase one. The entering variable is the largest
//! reduced cost; the leaving variable comes from a lexicographic ratio
//! test, which breaks the degenerate ties these unit-capacity problems are
//! full of and rules out cycling. Both rules are deterministic. One row
//! per vertex keeps the dense basis inverse small enough that nothing
//! smarter is warranted.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error};
use crate::Result;

/// Objective value and one optimal dual vector (a price per vertex).
pub(crate) struct LpOutcome {
    pub value: f64,
    pub duals: Vec<f64>,
}

/// Reduced costs at or below this count as non-improving.
const RC_TOL: f64 = 1e-9;
/// Pivot column entries at or below this cannot leave the basis. Basis
/// columns here are vertex incidences, so genuine pivots sit at 1/2 or
/// above and anything near zero is rounding noise; dividing by it would
/// wreck the inverse.
const PIV_TOL: f64 = 1e-7;
/// Slop allowed in the final optimality certificate.
const CERT_TOL: f64 = 1e-7;
/// Tie window in the lexicographic ratio comparisons.
const LEX_TOL: f64 = 1e-9;
/// Rebuild the basis inverse from scratch this often, so pivot-to-pivot
/// rounding cannot compound across long degenerate runs.
const REFACTOR_EVERY: usize = 256;

const NONE: usize = usize::MAX;

pub(crate) fn solve_matching_lp(
    nvertex: usize,
    edges: &[(usize, usize, f64)],
) -> Result<LpOutcome> {
    for &(i, j, w) in edges {
        if i == j || i >= nvertex || j >= nvertex {
            return Err(invalid("relaxation edge endpoints out of range"));
        }
        if !w.is_finite() {
            return Err(invalid("relaxation edge weights must be finite"));
        }
    }
    if nvertex == 0 || edges.is_empty() {
        return Ok(LpOutcome {
            value: 0.0,
            duals: vec![0.0; nvertex],
        });
    }

    let m = nvertex;
    let ne = edges.len();
    let nvars = ne + m; // edge variables first, then one slack per vertex

    let cost = |var: usize| if var < ne { edges[var].2 } else { 0.0 };

    // Basis inverse, row-major, starts as the identity (slack basis).
    let mut binv = vec![0.0f64; m * m];
    for r in 0..m {
        binv[r * m + r] = 1.0;
    }
    let mut basis: Vec<usize> = (ne..nvars).collect();
    let mut is_basic = vec![false; nvars];
    for &v in &basis {
        is_basic[v] = true;
    }
    let mut xb = vec![1.0f64; m];
    let mut y = vec![0.0f64; m];
    let mut d = vec![0.0f64; m];

    let max_iters = 50 * (m + ne) + 1000;
    let mut converged = false;
    for iter in 0..max_iters {
        if iter % REFACTOR_EVERY == REFACTOR_EVERY - 1 {
            refactorize(&basis, edges, ne, &mut binv, &mut xb);
        }

        // Dual prices y = c_B * B^-1.
        dual_prices(&basis, &binv, &cost, &mut y);

        // Entering variable: the best reduced cost, lowest index on ties.
        let mut entering = NONE;
        let mut best_rc = RC_TOL;
        for var in 0..nvars {
            if is_basic[var] {
                continue;
            }
            let rc = if var < ne {
                let (i, j, w) = edges[var];
                w - y[i] - y[j]
            } else {
                -y[var - ne]
            };
            if rc > best_rc {
                best_rc = rc;
                entering = var;
            }
        }
        if entering == NONE {
            converged = true;
            break;
        }

        // Direction d = B^-1 * A_entering. Edge columns have two unit
        // entries, slack columns one, so this is a row read.
        if entering < ne {
            let (i, j, _) = edges[entering];
            for (r, d_r) in d.iter_mut().enumerate() {
                *d_r = binv[r * m + i] + binv[r * m + j];
            }
        } else {
            let v = entering - ne;
            for (r, d_r) in d.iter_mut().enumerate() {
                *d_r = binv[r * m + v];
            }
        }

        // Lexicographic ratio test: among the eligible rows, leave with the
        // lexicographically smallest `(xb[r], binv row r) / d[r]`. A plain
        // minimum-ratio rule stalls for ages on these degenerate bases.
        let mut leave = NONE;
        for r in 0..m {
            if d[r] <= PIV_TOL {
                continue;
            }
            if leave == NONE {
                leave = r;
                continue;
            }
            let lead = xb[r] / d[r] - xb[leave] / d[leave];
            if lead < -LEX_TOL {
                leave = r;
            } else if lead <= LEX_TOL {
                for c in 0..m {
                    let diff = binv[r * m + c] / d[r] - binv[leave * m + c] / d[leave];
                    if diff < -LEX_TOL {
                        leave = r;
                        break;
                    }
                    if diff > LEX_TOL {
                        break;
                    }
                }
            }
        }
        if leave == NONE {
            return Err(numeric_failure(
                "unbounded direction in pairing relaxation",
                objective(&basis, &xb, &cost),
                dual_objective(&y),
            ));
        }
        let theta = (xb[leave] / d[leave]).max(0.0);

        // Pivot: update the basic solution, then the inverse.
        for r in 0..m {
            if r != leave {
                xb[r] -= theta * d[r];
                if xb[r] < 0.0 {
                    if xb[r] < -CERT_TOL {
                        return Err(numeric_failure(
                            "pairing relaxation lost primal feasibility",
                            objective(&basis, &xb, &cost),
                            dual_objective(&y),
                        ));
                    }
                    xb[r] = 0.0;
                }
            }
        }
        xb[leave] = theta;

        let piv = d[leave];
        for c in 0..m {
            binv[leave * m + c] /= piv;
        }
        for r in 0..m {
            if r != leave && d[r] != 0.0 {
                let f = d[r];
                for c in 0..m {
                    binv[r * m + c] -= f * binv[leave * m + c];
                }
            }
        }

        is_basic[basis[leave]] = false;
        is_basic[entering] = true;
        basis[leave] = entering;
    }

    // Certify from a freshly rebuilt inverse, not the drifted running one.
    refactorize(&basis, edges, ne, &mut binv, &mut xb);
    dual_prices(&basis, &binv, &cost, &mut y);
    let certified = certify(&basis, &xb, &y, edges, &cost);
    if converged {
        return certified;
    }
    // Bland's rule can stall on large degenerate graphs, grinding out
    // zero-length pivots long after the optimum is reached. The answer is
    // still good if it passes the same certificate as a converged run.
    certified.map_err(|_| {
        numeric_failure(
            "pairing relaxation hit the pivot limit",
            objective(&basis, &xb, &cost),
            dual_objective(&y),
        )
    })
}

/// Certify a basis before handing it out: the duals must price out every
/// column and the primal/dual objectives must meet.
fn certify(
    basis: &[usize],
    xb: &[f64],
    y: &[f64],
    edges: &[(usize, usize, f64)],
    cost: &impl Fn(usize) -> f64,
) -> Result<LpOutcome> {
    let value = objective(basis, xb, cost);
    for &(i, j, w) in edges {
        if y[i] + y[j] < w - CERT_TOL {
            return Err(numeric_failure(
                "pairing relaxation duals are infeasible",
                value,
                dual_objective(y),
            ));
        }
    }
    for &yv in y {
        if yv < -CERT_TOL {
            return Err(numeric_failure(
                "pairing relaxation produced a negative dual",
                value,
                dual_objective(y),
            ));
        }
    }
    let dual = dual_objective(y);
    if (value - dual).abs() > CERT_TOL * value.abs().max(1.0) {
        return Err(numeric_failure(
            "pairing relaxation objectives disagree",
            value,
            dual,
        ));
    }

    let duals = y.iter().map(|&v| v.max(0.0)).collect();
    Ok(LpOutcome { value, duals })
}

/// Dual prices `y = c_B B^-1` for the current basis.
fn dual_prices(basis: &[usize], binv: &[f64], cost: &impl Fn(usize) -> f64, y: &mut [f64]) {
    let m = y.len();
    for col in y.iter_mut() {
        *col = 0.0;
    }
    for r in 0..m {
        let cb = cost(basis[r]);
        if cb != 0.0 {
            for (col, y_col) in y.iter_mut().enumerate() {
                *y_col += cb * binv[r * m + col];
            }
        }
    }
}

/// Rebuilds the basis inverse from scratch by Gauss-Jordan elimination with
/// partial pivoting, then the basic solution from it. Leaves the incremental
/// state untouched if the rebuilt basis matrix looks singular, which only
/// happens once rounding has already corrupted the pivot history.
fn refactorize(
    basis: &[usize],
    edges: &[(usize, usize, f64)],
    ne: usize,
    binv: &mut [f64],
    xb: &mut [f64],
) {
    let m = basis.len();
    let w = 2 * m;
    // aug = [B | I], reduced in place to [I | B^-1].
    let mut aug = vec![0.0f64; m * w];
    for (c, &var) in basis.iter().enumerate() {
        if var < ne {
            let (i, j, _) = edges[var];
            aug[i * w + c] += 1.0;
            aug[j * w + c] += 1.0;
        } else {
            aug[(var - ne) * w + c] += 1.0;
        }
    }
    for r in 0..m {
        aug[r * w + m + r] = 1.0;
    }
    for col in 0..m {
        let mut piv = col;
        for r in (col + 1)..m {
            if aug[r * w + col].abs() > aug[piv * w + col].abs() {
                piv = r;
            }
        }
        if aug[piv * w + col].abs() <= 1e-12 {
            return;
        }
        if piv != col {
            for c in 0..w {
                aug.swap(piv * w + c, col * w + c);
            }
        }
        let p = aug[col * w + col];
        for c in col..w {
            aug[col * w + c] /= p;
        }
        for r in 0..m {
            let f = aug[r * w + col];
            if r != col && f != 0.0 {
                for c in col..w {
                    aug[r * w + c] -= f * aug[col * w + c];
                }
            }
        }
    }
    for r in 0..m {
        binv[r * m..(r + 1) * m].copy_from_slice(&aug[r * w + m..r * w + 2 * m]);
    }
    // Unit right-hand sides: the basic solution is the inverse's row sums.
    for r in 0..m {
        let s: f64 = binv[r * m..(r + 1) * m].iter().sum();
        xb[r] = s.max(0.0);
    }
}

fn objective(basis: &[usize], xb: &[f64], cost: &impl Fn(usize) -> f64) -> f64 {
    basis
        .iter()
        .zip(xb.iter())
        .map(|(&var, &x)| cost(var) * x)
        .sum()
}

/// With unit right-hand sides the dual objective is just the price sum.
fn dual_objective(y: &[f64]) -> f64 {
    y.iter().sum()
}

fn numeric_failure(message: impl Into<String>, primal: f64, dual: f64) -> Error {
    Error::NumericFailure {
        message: message.into(),
        primal,
        dual,
    }
}
