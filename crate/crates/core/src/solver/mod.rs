//! Maximization of the discrete objectives over the cone.

mod banded;
mod closed_form;
mod ipm;
mod oracle;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cone::{
    assemble_constraints, check_feasibility_with, clip_signs, envelope, ConstraintSet, Mode, Pairing, SurplusField,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::objective::{evaluate, QuadraticProgram};

pub use closed_form::{closed_form_1d, HazardReport};
pub use oracle::{brute_force_oracle, ORACLE_MAX_NODES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Newton steps per working-set round.
    pub max_iters: usize,
    /// Relative residual and complementarity tolerance of the inner solve.
    pub tol: f64,
    pub feas_tol: f64,
    /// Fraction of the distance to the boundary taken per step.
    pub step_fraction: f64,
    /// Working-set rounds before giving up on adding violated pairs.
    pub max_rounds: usize,
    pub pairing: Pairing,
    /// Carried along for provenance; the solver itself is deterministic.
    pub seed: u64,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-10,
            feas_tol: 1e-8,
            step_fraction: 0.99,
            max_rounds: 30,
            pairing: Pairing::Full,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tol", self.tol), ("feas_tol", self.feas_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_fraction must lie in (0, 1), got {}",
                self.step_fraction
            )));
        }
        if self.max_iters == 0 || self.max_rounds == 0 {
            return Err(Error::InvalidParameter(
                "max_iters and max_rounds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub iters: usize,
    pub max_violation: f64,
    pub q_cap_bound: bool,
    pub seconds: f64,
    #[serde(skip)]
    pub converged: bool,
    /// Pairs in the final working set.
    #[serde(skip)]
    pub working_pairs: usize,
}

/// Maximizes `qp` over the cone.
///
/// Only nodes with positive weight enter the optimization; the others carry
/// no objective mass and receive the smallest convex extension afterwards.
/// With full pairing the inner problem starts from lattice neighbours and
/// gains every pair found violated, until none is. The result is always
/// feasible under full pairing. `converged` is false when the final inner
/// solve or the round budget ran out first.
pub fn solve(qp: &QuadraticProgram, cfg: &SolverConfig) -> Result<(SurplusField, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let exec = cfg.exec;
    let grid = qp.grid();
    let mode = qp.mode();
    let full = qp.constraints().to_full();
    let q_max = full.q_max();
    let d = grid.type_dim();
    let ext = mode == Mode::Extended;
    let support: Vec<usize> = (0..grid.len()).filter(|&i| qp.mass()[i] > 0.0).collect();
    let ns = support.len();

    let mut field = SurplusField::zeros(grid);
    let mut iters = 0;
    let mut converged = true;
    let mut working = 0;
    if ns > 0 {
        let red = Reduced::new(qp, &support);
        let mut pairs = match cfg.pairing {
            Pairing::Full => red.stencil(grid, &support),
            Pairing::KNearest(_) => {
                let cs = assemble_constraints(grid, mode, cfg.pairing, q_max)?;
                let mut local = vec![u32::MAX; grid.len()];
                for (a, &i) in support.iter().enumerate() {
                    local[i] = a as u32;
                }
                cs.pairs()
                    .filter_map(|(i, j)| {
                        let (a, b) = (local[i], local[j]);
                        (a != u32::MAX && b != u32::MAX).then_some((a, b))
                    })
                    .collect()
            }
        };
        let settings = ipm::Settings {
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            step_fraction: cfg.step_fraction,
            exec,
        };
        let mut x;
        let mut round = 0;
        loop {
            let kernel = ipm::Qp {
                p: red.p.clone(),
                g: red.g.clone(),
                upper: red.upper.clone(),
                rows: ipm::Rows::new(d, ext, &red.coords, &pairs),
            };
            let out = ipm::solve(&kernel, &settings);
            iters += out.iters;
            // earlier rounds only supply cuts; the last one decides
            converged = out.converged;
            x = out.x;
            round += 1;
            if cfg.pairing != Pairing::Full {
                break;
            }
            let cuts = red.violated(&x, cfg.tol.max(1e-12), exec);
            if cuts.is_empty() {
                break;
            }
            if round >= cfg.max_rounds {
                converged = false;
                break;
            }
            pairs.extend(cuts);
            pairs.sort_unstable();
            pairs.dedup();
        }
        working = pairs.len();
        let sb = red.block;
        for (a, &i) in support.iter().enumerate() {
            field.v[i] = x[a * sb];
            for k in 0..d {
                field.p[i * d + k] = x[a * sb + 1 + k];
            }
            if let Some(q) = &mut field.q {
                q[i] = x[a * sb + 1 + d];
            }
        }
    }

    let field = finalize(field, &full, exec);
    let audit = check_feasibility_with(&field, &full, cfg.feas_tol, exec)?;
    let objective = evaluate(qp, &field)?;
    let q_cap_bound = match (ext, q_max, &field.q) {
        (true, Some(cap), Some(q)) => q.iter().any(|&x| x >= cap * (1.0 - 1e-9)),
        _ => false,
    };
    let report = SolveReport {
        objective,
        iters,
        max_violation: audit.max_violation,
        q_cap_bound,
        seconds: start.elapsed().as_secs_f64(),
        converged: converged && audit.feasible,
        working_pairs: working,
    };
    Ok((field, report))
}

/// The problem restricted to positive-weight nodes, as a minimization with
/// node-interleaved unknowns and weights rescaled to average one.
struct Reduced {
    block: usize,
    d: usize,
    ext: bool,
    p: Vec<f64>,
    g: Vec<f64>,
    upper: Vec<f64>,
    coords: Vec<f64>,
}

impl Reduced {
    fn new(qp: &QuadraticProgram, support: &[usize]) -> Self {
        let grid = qp.grid();
        let d = grid.type_dim();
        let ext = qp.mode() == Mode::Extended;
        let ns = support.len();
        let n = grid.len();
        let block = 1 + d + usize::from(ext);
        let scale = ns as f64 / support.iter().map(|&i| qp.mass()[i]).sum::<f64>();
        let lin = qp.linear();
        let m = ns * block;
        let mut p = vec![0.0; m];
        let mut g = vec![0.0; m];
        let mut upper = vec![f64::INFINITY; m];
        let mut coords = Vec::with_capacity(ns * (block - 1));
        for (a, &i) in support.iter().enumerate() {
            let o = a * block;
            g[o] = -scale * lin[i];
            for k in 0..d {
                p[o + 1 + k] = scale * qp.mass()[i];
                g[o + 1 + k] = -scale * lin[n + i * d + k];
            }
            coords.extend_from_slice(grid.theta(i));
            if ext {
                g[o + 1 + d] = -scale * lin[n * (1 + d) + i];
                if let Some(cap) = qp.constraints().q_max() {
                    upper[o + 1 + d] = cap;
                }
                coords.push(grid.alpha(i));
            }
        }
        Self {
            block,
            d,
            ext,
            p,
            g,
            upper,
            coords,
        }
    }

    fn ns(&self) -> usize {
        self.g.len() / self.block
    }

    /// Ordered pairs of support nodes that are lattice neighbours
    /// (index offsets in {-1, 0, 1} on every axis).
    fn stencil(&self, grid: &crate::domain::Grid, support: &[usize]) -> Vec<(u32, u32)> {
        let mut local = vec![u32::MAX; grid.len()];
        for (a, &i) in support.iter().enumerate() {
            local[i] = a as u32;
        }
        let dim = grid.dim();
        let offsets: Vec<Vec<i64>> = (0..3usize.pow(dim as u32))
            .map(|mut c| {
                (0..dim)
                    .map(|_| {
                        let o = (c % 3) as i64 - 1;
                        c /= 3;
                        o
                    })
                    .collect()
            })
            .filter(|o: &Vec<i64>| o.iter().any(|x| *x != 0))
            .collect();
        let mut pairs = Vec::new();
        for (a, &i) in support.iter().enumerate() {
            let idx = grid.multi_index(i);
            for off in &offsets {
                let nb: Option<Vec<usize>> = idx
                    .iter()
                    .zip(off)
                    .zip(grid.n())
                    .map(|((&k, &o), &n)| {
                        let t = k as i64 + o;
                        (0..n as i64).contains(&t).then_some(t as usize)
                    })
                    .collect();
                if let Some(nb) = nb {
                    let b = local[grid.flat_index(&nb)];
                    if b != u32::MAX {
                        pairs.push((a as u32, b));
                    }
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    /// For every target node, the source whose plane exceeds it the most,
    /// when that excess is above `tol·(1 + |v|)`.
    fn violated(&self, x: &[f64], tol: f64, exec: Exec) -> Vec<(u32, u32)> {
        let ns = self.ns();
        let (sb, w) = (self.block, self.d + usize::from(self.ext));
        let hits = exec.map(ns, |b| {
            let vb = x[b * sb];
            let cb = &self.coords[b * w..][..w];
            let mut worst = (tol * (1.0 + vb.abs()), u32::MAX);
            for a in 0..ns {
                if a == b {
                    continue;
                }
                let ca = &self.coords[a * w..][..w];
                let mut plane = x[a * sb];
                for k in 0..w {
                    plane += x[a * sb + 1 + k] * (cb[k] - ca[k]);
                }
                if plane - vb > worst.0 {
                    worst = (plane - vb, a as u32);
                }
            }
            (worst.1 != u32::MAX).then_some((worst.1, b as u32))
        });
        hits.into_iter().flatten().collect()
    }
}

/// Turns an approximate optimum into a feasible field with minimal v and q.
///
/// Each round takes the plane envelope (which extends the field to
/// zero-weight nodes and fixes any violation above the repair slack), lowers
/// every q to the smallest value its planes allow, then replaces v by the
/// least solution of the pair inequalities for the current gradients.
pub(crate) fn finalize(mut field: SurplusField, full: &ConstraintSet, exec: Exec) -> SurplusField {
    for _ in 0..2 {
        clip_signs(&mut field, full.q_max());
        field = envelope(&field, exec, |_| true);
        if field.q.is_some() {
            min_q(&mut field, exec);
        }
        min_v(&mut field);
    }
    field
}

fn min_q(field: &mut SurplusField, exec: Exec) {
    let grid = &field.grid;
    let n = grid.len();
    let d = grid.type_dim();
    let q_old = field.q.clone().expect("extended field");
    let lowered = exec.map(n, |i| {
        let ai = grid.alpha(i);
        let (ti, pi) = (grid.theta(i), &field.p[i * d..(i + 1) * d]);
        let mut lo = 0.0f64;
        for j in 0..n {
            let aj = grid.alpha(j);
            if aj >= ai {
                continue;
            }
            let mut s = field.v[i] - field.v[j];
            for (k, t) in grid.theta(j).iter().enumerate() {
                s += pi[k] * (t - ti[k]);
            }
            lo = lo.max(s / (ai - aj));
        }
        lo.min(q_old[i])
    });
    field.q = Some(lowered);
}

/// Least v satisfying the pair inequalities and v >= 0 for fixed (p, q),
/// by monotone Gauss-Seidel sweeps from zero.
fn min_v(field: &mut SurplusField) {
    let n = field.len();
    let q = field.q.clone();
    let mut v = vec![0.0f64; n];
    for sweep in 0..n.max(1) {
        let mut changed = false;
        let order: Box<dyn Iterator<Item = usize>> = if sweep % 2 == 0 {
            Box::new(0..n)
        } else {
            Box::new((0..n).rev())
        };
        for j in order {
            let mut best = v[j];
            for i in 0..n {
                if i != j {
                    best = best.max(crate::cone::plane(&field.grid, &v, &field.p, q.as_deref(), i, j));
                }
            }
            if best > v[j] + 1e-15 * (1.0 + best.abs()) {
                v[j] = best;
                changed = true;
            } else {
                v[j] = v[j].max(best);
            }
        }
        if !changed {
            break;
        }
    }
    field.v = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{check_feasibility, FEAS_TOL};
    use crate::domain::{uniform_density, Density, Grid, TypeDomain};
    use crate::objective::{assemble_classical, CostSpec};

    fn unit(n: usize) -> Grid {
        Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[n]).unwrap()
    }

    #[test]
    fn uniform_1d_is_close_to_closed_form() {
        let g = unit(41);
        let qp = assemble_classical(&g, &uniform_density(&g), CostSpec::default()).unwrap();
        let (field, report) = solve(&qp, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert!(report.max_violation <= FEAS_TOL);
        for i in 0..g.len() {
            let t = g.theta(i)[0];
            assert!((field.v[i] - (t - 1.0).powi(2)).abs() < 0.02, "v at {t}");
            assert!((field.p[i] - 2.0 * (t - 1.0)).abs() < 0.03, "p at {t}");
        }
    }

    #[test]
    fn point_mass_at_the_top() {
        let g = unit(6);
        let mut values = vec![0.0; 6];
        values[5] = 1.0 / (0.5 * g.spacing()[0]);
        let f = Density::new(g.clone(), values).unwrap();
        let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
        let (field, report) = solve(&qp, &SolverConfig::default()).unwrap();
        assert!((field.p[5] - 2.0).abs() < 1e-9);
        assert!(field.v[5].abs() < 1e-9);
        assert!((report.objective - 2.0).abs() < 1e-9);
        assert!(check_feasibility(&field, qp.constraints(), FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn three_nodes_match_oracle() {
        let g = unit(3);
        let qp = assemble_classical(&g, &uniform_density(&g), CostSpec::default()).unwrap();
        let (_, report) = solve(&qp, &SolverConfig::default()).unwrap();
        let best = brute_force_oracle(&qp).unwrap();
        assert!((report.objective - best).abs() < 1e-8, "{} vs {best}", report.objective);
    }

    #[test]
    fn deterministic_reports() {
        let g = unit(21);
        let qp = assemble_classical(&g, &uniform_density(&g), CostSpec::default()).unwrap();
        let cfg = SolverConfig::default();
        let (a, ra) = solve(&qp, &cfg).unwrap();
        let (b, rb) = solve(&qp, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.objective.to_bits(), rb.objective.to_bits());
        assert_eq!(ra.iters, rb.iters);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let g = unit(21);
        let qp = assemble_classical(&g, &uniform_density(&g), CostSpec::default()).unwrap();
        let seq = SolverConfig {
            exec: Exec::Sequential,
            ..Default::default()
        };
        let (a, _) = solve(&qp, &seq).unwrap();
        let (b, _) = solve(&qp, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig {
            feas_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            step_fraction: 1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
