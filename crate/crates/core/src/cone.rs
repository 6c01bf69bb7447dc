//! The discrete cone of admissible surplus fields.
//!
//! A field stores a value and a gradient at every node. It belongs to the cone
//! when every node's supporting plane lies below every other node's value,
//!
//! ```text
//! v_j >= v_i + p_i·(θ_j - θ_i) + q_i·(α_j - α_i)
//! ```
//!
//! and the sign constraints v, p, q >= 0 (plus q <= Q_max when capped) hold.

use serde::{Deserialize, Serialize};

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Default feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;

/// Violations below this (times 1 + |v|) are left alone by [`repair`].
pub const REPAIR_SLACK: f64 = 1e-10;

const WORST_KEPT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Classical,
    Extended,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    #[default]
    Full,
    /// Pairs each node with its k nearest neighbours (both directions).
    KNearest(usize),
}

/// Values v, θ-gradients p (row-major, `d` per node) and α-slopes q.
#[derive(Clone, Debug, PartialEq)]
pub struct SurplusField {
    pub grid: Grid,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    /// Present exactly when the grid carries an α axis.
    pub q: Option<Vec<f64>>,
}

impl SurplusField {
    pub fn new(grid: Grid, v: Vec<f64>, p: Vec<f64>, q: Option<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        let d = grid.type_dim();
        if v.len() != n || p.len() != n * d {
            return Err(Error::GridMismatch(format!(
                "field sizes v={} p={} for {n} nodes in {d}D",
                v.len(),
                p.len()
            )));
        }
        match (&q, grid.is_extended()) {
            (Some(q), true) if q.len() == n => {}
            (None, false) => {}
            _ => {
                return Err(Error::GridMismatch(
                    "q must be present exactly on extended grids".into(),
                ))
            }
        }
        Ok(Self { grid, v, p, q })
    }

    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        let q = grid.is_extended().then(|| vec![0.0; n]);
        Self {
            grid: grid.clone(),
            v: vec![0.0; n],
            p: vec![0.0; n * grid.type_dim()],
            q,
        }
    }

    /// Samples `v` and its gradient at every node; `grad` fills the θ part.
    pub fn from_fn(grid: &Grid, value: impl Fn(&[f64]) -> f64, grad: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut f = Self::zeros(grid);
        let d = grid.type_dim();
        for i in 0..grid.len() {
            f.v[i] = value(grid.theta(i));
            grad(grid.theta(i), &mut f.p[i * d..(i + 1) * d]);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn mode(&self) -> Mode {
        if self.q.is_some() {
            Mode::Extended
        } else {
            Mode::Classical
        }
    }

    pub fn p_at(&self, i: usize) -> &[f64] {
        let d = self.grid.type_dim();
        &self.p[i * d..(i + 1) * d]
    }

    pub fn q_at(&self, i: usize) -> f64 {
        self.q.as_ref().map_or(0.0, |q| q[i])
    }

    /// Value of node `i`'s supporting plane at node `j`.
    #[inline]
    pub fn plane(&self, i: usize, j: usize) -> f64 {
        plane(&self.grid, &self.v, &self.p, self.q.as_deref(), i, j)
    }
}

#[inline]
pub(crate) fn plane(grid: &Grid, v: &[f64], p: &[f64], q: Option<&[f64]>, i: usize, j: usize) -> f64 {
    let d = grid.type_dim();
    let (ti, tj) = (grid.theta(i), grid.theta(j));
    let mut s = v[i];
    for k in 0..d {
        s += p[i * d + k] * (tj[k] - ti[k]);
    }
    if let Some(q) = q {
        s += q[i] * (grid.alpha(j) - grid.alpha(i));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    grid: Grid,
    mode: Mode,
    pairing: Pairing,
    q_max: Option<f64>,
    /// Explicit ordered pairs for truncated pairing; `None` means all pairs.
    pairs: Option<Vec<(u32, u32)>>,
}

/// Default cap on q: ten times the larger of κ and diam Ω.
pub fn default_q_max(grid: &Grid) -> Option<f64> {
    grid.aversion().map(|a| 10.0 * a.kappa().max(grid.domain().diameter()))
}

pub fn assemble_constraints(grid: &Grid, mode: Mode, pairing: Pairing, q_max: Option<f64>) -> Result<ConstraintSet> {
    match (mode, grid.is_extended()) {
        (Mode::Extended, false) => return Err(Error::Dimension("extended mode needs an α axis".into())),
        (Mode::Classical, true) => return Err(Error::Dimension("classical mode on an extended grid".into())),
        _ => {}
    }
    if let Some(c) = q_max {
        if mode == Mode::Classical || !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "q cap {c} needs extended mode and a positive value"
            )));
        }
    }
    let pairs = match pairing {
        Pairing::Full => None,
        Pairing::KNearest(k) => {
            if k < 2 * grid.dim() {
                return Err(Error::InvalidParameter(format!(
                    "k-nearest pairing needs k >= {} on this grid, got {k}",
                    2 * grid.dim()
                )));
            }
            Some(nearest_pairs(grid, k))
        }
    };
    Ok(ConstraintSet {
        grid: grid.clone(),
        mode,
        pairing,
        q_max,
        pairs,
    })
}

fn nearest_pairs(grid: &Grid, k: usize) -> Vec<(u32, u32)> {
    let n = grid.len();
    let dist2 = |i: usize, j: usize| -> f64 {
        grid.coords(i)
            .iter()
            .zip(grid.coords(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    let mut pairs = Vec::with_capacity(2 * n * k);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| dist2(i, a).total_cmp(&dist2(i, b)).then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            pairs.push((i as u32, j as u32));
            pairs.push((j as u32, i as u32));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

impl ConstraintSet {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    pub fn q_max(&self) -> Option<f64> {
        self.q_max
    }

    /// The same constraints with every ordered pair included.
    pub fn to_full(&self) -> ConstraintSet {
        ConstraintSet {
            pairing: Pairing::Full,
            pairs: None,
            ..self.clone()
        }
    }

    /// Number of incentive (pair) inequalities.
    pub fn incentive_count(&self) -> usize {
        match &self.pairs {
            Some(p) => p.len(),
            None => {
                let n = self.grid.len();
                n * (n - 1)
            }
        }
    }

    /// Number of sign and cap constraints.
    pub fn sign_count(&self) -> usize {
        let n = self.grid.len();
        let d = self.grid.type_dim();
        match self.mode {
            Mode::Classical => n * (1 + d),
            Mode::Extended => n * (2 + d) + if self.q_max.is_some() { n } else { 0 },
        }
    }

    pub fn len(&self) -> usize {
        self.incentive_count() + self.sign_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ordered pairs (i, j) in the deterministic constraint order.
    pub fn pairs(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match &self.pairs {
            Some(p) => Box::new(p.iter().map(|&(i, j)| (i as usize, j as usize))),
            None => {
                let n = self.grid.len();
                Box::new((0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))))
            }
        }
    }

    /// Targets paired with source node `i`.
    pub fn targets(&self, i: usize) -> Vec<usize> {
        match &self.pairs {
            Some(p) => {
                let start = p.partition_point(|&(a, _)| (a as usize) < i);
                p[start..]
                    .iter()
                    .take_while(|&&(a, _)| a as usize == i)
                    .map(|&(_, b)| b as usize)
                    .collect()
            }
            None => (0..self.grid.len()).filter(|&j| j != i).collect(),
        }
    }

    fn check_field(&self, field: &SurplusField) -> Result<()> {
        if field.grid != self.grid || field.mode() != self.mode {
            return Err(Error::GridMismatch(
                "field and constraints live on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// One violated inequality; sign and cap constraints report `j == i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub i: usize,
    pub j: usize,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub max_violation: f64,
    pub feasible: bool,
    /// Up to ten worst violations, largest first.
    pub worst: Vec<Violation>,
}

pub fn check_feasibility(field: &SurplusField, cs: &ConstraintSet, tol: f64) -> Result<FeasibilityReport> {
    check_feasibility_with(field, cs, tol, Exec::default())
}

pub fn check_feasibility_with(
    field: &SurplusField,
    cs: &ConstraintSet,
    tol: f64,
    exec: Exec,
) -> Result<FeasibilityReport> {
    cs.check_field(field)?;
    let n = field.len();
    let d = field.grid.type_dim();
    let per_node: Vec<Vec<Violation>> = exec.map(n, |i| {
        let mut local = Vec::new();
        let mut push = |j: usize, viol: f64| {
            if viol > 0.0 {
                local.push(Violation { i, j, violation: viol });
            }
        };
        push(i, -field.v[i]);
        for k in 0..d {
            push(i, -field.p[i * d + k]);
        }
        if let Some(q) = &field.q {
            push(i, -q[i]);
            if let Some(c) = cs.q_max {
                push(i, q[i] - c);
            }
        }
        for j in cs.targets(i) {
            push(j, field.plane(i, j) - field.v[j]);
        }
        keep_worst(&mut local);
        local
    });
    let mut all: Vec<Violation> = per_node.into_iter().flatten().collect();
    keep_worst(&mut all);
    let max_violation = all.first().map_or(0.0, |v| v.violation);
    Ok(FeasibilityReport {
        max_violation,
        feasible: max_violation <= tol,
        worst: all,
    })
}

fn keep_worst(xs: &mut Vec<Violation>) {
    xs.sort_by(|a, b| {
        b.violation
            .total_cmp(&a.violation)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    xs.truncate(WORST_KEPT);
}

/// Restores feasibility under full pairing.
///
/// Signs are clipped (and q capped), then every node takes the largest
/// supporting plane among all nodes: `v_j = max_i (v_i + p_i·Δθ + q_i·Δα)`,
/// with (p_j, q_j) copied from the winning plane. A foreign plane only wins
/// when it beats the current one by more than [`REPAIR_SLACK`] (relative), so
/// inputs that are feasible to that level come back unchanged.
pub fn repair(field: &SurplusField, cs: &ConstraintSet) -> Result<SurplusField> {
    repair_with(field, cs, Exec::default())
}

pub fn repair_with(field: &SurplusField, cs: &ConstraintSet, exec: Exec) -> Result<SurplusField> {
    cs.check_field(field)?;
    let mut f = field.clone();
    clip_signs(&mut f, cs.q_max);
    Ok(envelope(&f, exec, |_| true))
}

pub(crate) fn clip_signs(f: &mut SurplusField, q_max: Option<f64>) {
    f.v.iter_mut().for_each(|x| *x = x.max(0.0));
    f.p.iter_mut().for_each(|x| *x = x.max(0.0));
    if let Some(q) = &mut f.q {
        let cap = q_max.unwrap_or(f64::INFINITY);
        q.iter_mut().for_each(|x| *x = x.clamp(0.0, cap));
    }
}

/// Upper envelope of the planes of nodes selected by `source`, evaluated at
/// every node (each node's own plane always competes).
pub(crate) fn envelope(f: &SurplusField, exec: Exec, source: impl Fn(usize) -> bool + Sync + Send) -> SurplusField {
    let n = f.len();
    let q = f.q.as_deref();
    let winners: Vec<(f64, usize)> = exec.map(n, |j| {
        let mut best = f.v[j];
        let mut arg = j;
        let slack = REPAIR_SLACK * (1.0 + best.abs());
        for i in 0..n {
            if i == j || !source(i) {
                continue;
            }
            let val = plane(&f.grid, &f.v, &f.p, q, i, j);
            if val > best + slack {
                best = val;
                arg = i;
            }
        }
        (best, arg)
    });
    let d = f.grid.type_dim();
    let mut out = f.clone();
    for (j, &(val, arg)) in winners.iter().enumerate() {
        out.v[j] = val;
        if arg != j {
            out.p[j * d..(j + 1) * d].copy_from_slice(&f.p[arg * d..(arg + 1) * d]);
            if let (Some(dst), Some(src)) = (&mut out.q, q) {
                dst[j] = src[arg];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AversionDomain, TypeDomain};

    fn line(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::new(&TypeDomain::interval(lo, hi).unwrap(), None, &[n]).unwrap()
    }

    fn full(grid: &Grid) -> ConstraintSet {
        let mode = if grid.is_extended() {
            Mode::Extended
        } else {
            Mode::Classical
        };
        assemble_constraints(grid, mode, Pairing::Full, None).unwrap()
    }

    #[test]
    fn full_pairing_count() {
        let cs = full(&line(1.0, 2.0, 3));
        assert_eq!(cs.incentive_count(), 6);
        assert_eq!(cs.pairs().count(), 6);
        assert_eq!(cs.pairs().next(), Some((0, 1)));
    }

    #[test]
    fn affine_field_is_tight() {
        let g = line(1.0, 2.0, 5);
        let f = SurplusField::from_fn(&g, |t| 0.7 * t[0] - 0.5, |_, p| p[0] = 0.7);
        let cs = full(&g);
        for (i, j) in cs.pairs() {
            assert!((f.plane(i, j) - f.v[j]).abs() < 1e-15);
        }
        assert!(check_feasibility(&f, &cs, FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn single_violation() {
        let g = line(0.0, 1.0, 2);
        let f = SurplusField::new(g.clone(), vec![0.0, 0.0], vec![1.0, 0.0], None).unwrap();
        let r = check_feasibility(&f, &full(&g), FEAS_TOL).unwrap();
        assert_eq!(r.max_violation, 1.0);
        assert!(!r.feasible);
        assert_eq!(
            r.worst[0],
            Violation {
                i: 0,
                j: 1,
                violation: 1.0
            }
        );
    }

    #[test]
    fn zero_field_is_feasible() {
        let g = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[4, 4]).unwrap();
        let r = check_feasibility(&SurplusField::zeros(&g), &full(&g), FEAS_TOL).unwrap();
        assert_eq!(r.max_violation, 0.0);
        assert!(r.feasible && r.worst.is_empty());
    }

    #[test]
    fn convex_quadratic_is_feasible() {
        let g = line(1.0, 2.0, 101);
        let f = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
        assert!(check_feasibility(&f, &full(&g), FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let f = SurplusField::zeros(&line(1.0, 2.0, 3));
        assert!(matches!(
            check_feasibility(&f, &full(&line(1.0, 2.0, 4)), FEAS_TOL),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn repair_cases() {
        let g = line(1.0, 2.0, 11);
        let cs = full(&g);
        let good = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
        assert_eq!(repair(&good, &cs).unwrap(), good);

        let neg = SurplusField::new(g.clone(), vec![-3.0; 11], vec![0.0; 11], None).unwrap();
        let r = repair(&neg, &cs).unwrap();
        assert!(r.v.iter().all(|&x| x == 0.0));

        // planes that overshoot their neighbours
        let bad = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 3.0 * (t[0] - 1.0));
        assert!(!check_feasibility(&bad, &cs, FEAS_TOL).unwrap().feasible);
        let r = repair(&bad, &cs).unwrap();
        assert!(check_feasibility(&r, &cs, FEAS_TOL).unwrap().feasible);
        assert_eq!(repair(&r, &cs).unwrap(), r);
    }

    #[test]
    fn truncated_pairing_is_a_subset() {
        let g = Grid::new(&TypeDomain::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap(), None, &[5, 5]).unwrap();
        let cs = assemble_constraints(&g, Mode::Classical, Pairing::KNearest(4), None).unwrap();
        assert!(cs.incentive_count() < 25 * 24);
        assert!(cs.pairs().all(|(i, j)| i != j && i < 25 && j < 25));
        assert!(assemble_constraints(&g, Mode::Classical, Pairing::KNearest(3), None).is_err());
    }

    #[test]
    fn extended_counts_and_cap() {
        let g = Grid::new(
            &TypeDomain::interval(1.0, 2.0).unwrap(),
            Some(AversionDomain::new(1.0).unwrap()),
            &[3, 2],
        )
        .unwrap();
        assert_eq!(default_q_max(&g), Some(10.0));
        let cs = assemble_constraints(&g, Mode::Extended, Pairing::Full, default_q_max(&g)).unwrap();
        assert_eq!(cs.incentive_count(), 30);
        assert_eq!(cs.sign_count(), 6 * 4);
        let mut f = SurplusField::zeros(&g);
        f.q.as_mut().unwrap()[0] = 11.0;
        let r = check_feasibility(&f, &cs, FEAS_TOL).unwrap();
        assert!(r.worst.iter().any(|w| w.i == 0 && w.j == 0 && w.violation == 1.0));
    }
}
