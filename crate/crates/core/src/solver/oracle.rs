//! Exact optimum of tiny 1D instances by active-set enumeration.
//!
//! On a line the full pair system is equivalent to the slope sandwich
//! `p_i <= (v_{i+1} - v_i)/h_i <= p_{i+1}` (plus signs), which keeps the
//! enumeration to subsets of 4N - 2 inequalities. Every subset of at most
//! 2N rows is taken as the active set; its KKT system is solved exactly and
//! kept if the point is primal feasible with nonnegative multipliers. The
//! problem is convex, so every surviving point is optimal and the best value
//! is returned.

use nalgebra::{DMatrix, DVector};

use crate::cone::Mode;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::objective::QuadraticProgram;

pub const ORACLE_MAX_NODES: usize = 6;

const TOL: f64 = 1e-12;

pub fn brute_force_oracle(qp: &QuadraticProgram) -> Result<f64> {
    brute_force_oracle_with(qp, Exec::default())
}

pub fn brute_force_oracle_with(qp: &QuadraticProgram, exec: Exec) -> Result<f64> {
    let grid = qp.grid();
    if qp.mode() != Mode::Classical || grid.dim() != 1 {
        return Err(Error::Dimension("brute force covers 1D classical instances".into()));
    }
    let n = grid.len();
    if n > ORACLE_MAX_NODES {
        return Err(Error::TooLarge {
            nodes: n,
            limit: ORACLE_MAX_NODES,
        });
    }
    let m = 2 * n;
    let theta = grid.axis_nodes(0);
    // minimize ½xᵀPx + gᵀx subject to Ax >= 0, x = [v | p]
    let pd: Vec<f64> = qp.hessian_diag().iter().map(|h| -h).collect();
    let g: Vec<f64> = qp.linear().iter().map(|c| -c).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(4 * n - 2);
    for i in 0..n - 1 {
        let h = theta[i + 1] - theta[i];
        let mut left = vec![0.0; m];
        left[i + 1] = 1.0 / h;
        left[i] = -1.0 / h;
        left[n + i] = -1.0;
        let mut right = vec![0.0; m];
        right[n + i + 1] = 1.0;
        right[i + 1] = -1.0 / h;
        right[i] = 1.0 / h;
        rows.push(left);
        rows.push(right);
    }
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        rows.push(e);
    }
    let r = rows.len();
    let masks: Vec<u32> = (0u32..1 << r).filter(|s| s.count_ones() as usize <= m).collect();
    let values = exec.map(masks.len(), |k| {
        kkt_value(masks[k], &rows, &pd, &g).unwrap_or(f64::NEG_INFINITY)
    });
    let best = values.into_iter().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("no KKT point found".into()));
    }
    Ok(best)
}

/// Value of J at the KKT point of `active`, if it is a valid optimum.
fn kkt_value(active: u32, rows: &[Vec<f64>], pd: &[f64], g: &[f64]) -> Option<f64> {
    let m = pd.len();
    let w: Vec<usize> = (0..rows.len()).filter(|&k| active >> k & 1 == 1).collect();
    let size = m + w.len();
    let mut k = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..m {
        k[(i, i)] = pd[i];
        rhs[i] = -g[i];
    }
    for (a, &row) in w.iter().enumerate() {
        for j in 0..m {
            k[(m + a, j)] = rows[row][j];
            k[(j, m + a)] = -rows[row][j];
        }
    }
    let sol = k.clone().lu().solve(&rhs)?;
    if sol.iter().any(|x| !x.is_finite()) || (&k * &sol - &rhs).amax() > 1e-9 {
        return None;
    }
    let x = &sol.as_slice()[..m];
    let feasible = rows
        .iter()
        .all(|row| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= -TOL);
    let dual_ok = sol.as_slice()[m..].iter().all(|&mu| mu >= -TOL);
    (feasible && dual_ok).then(|| {
        -x.iter()
            .zip(pd)
            .zip(g)
            .map(|((x, p), g)| 0.5 * p * x * x + g * x)
            .sum::<f64>()
    })
}
