//! Lottery perturbations of a classical surplus.
//!
//! A classical surplus v̄ on Ω is lifted to Ω × A by
//!
//! ```text
//! w_ε(θ, α) = v̄(θ + ε l(α) e),   l(α) = (α + a)₊
//! ```
//!
//! and the slope of ε ↦ J_R(w_ε) at zero certifies that offering the
//! undesirable quality pays. Off-grid values of v̄ come from
//! [`ConvexInterpolant`].

use serde::{Deserialize, Serialize};

use crate::cone::{
    assemble_constraints, check_feasibility_with, default_q_max, repair_with, Mode, Pairing, SurplusField, FEAS_TOL,
};
use crate::domain::{AversionDomain, Density, Grid};
use crate::error::{Error, Result};
use crate::exec::{tree_sum, Exec};
use crate::objective::{assemble_extended, evaluate, CostSpec};

/// Nodes with v and |p| at most this count as excluded.
pub const EXCLUSION_TOL: f64 = 1e-8;

/// Relative margin by which a foreign piece must beat the preferred one in
/// [`ConvexInterpolant::eval`]; pieces may overshoot other nodes by half of it.
const TIE_SLACK: f64 = 1e-9;

/// Rectangle with sides along `e` and its normal. ∂K₋ is the side through
/// `origin` (its centre); ∂K₊ is the opposite side, `length` further along e.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub origin: [f64; 2],
    pub e: [f64; 2],
    pub length: f64,
    pub half_width: f64,
}

impl Rectangle {
    fn normal(&self) -> [f64; 2] {
        [-self.e[1], self.e[0]]
    }

    /// `origin + s·e + t·e⊥`.
    pub fn point(&self, s: f64, t: f64) -> [f64; 2] {
        let n = self.normal();
        [
            self.origin[0] + s * self.e[0] + t * n[0],
            self.origin[1] + s * self.e[1] + t * n[1],
        ]
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (l, w) = (self.length, self.half_width);
        [
            self.point(0.0, -w),
            self.point(0.0, w),
            self.point(l, w),
            self.point(l, -w),
        ]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let n = self.normal();
        let s = d[0] * self.e[0] + d[1] * self.e[1];
        let t = d[0] * n[0] + d[1] * n[1];
        let eps = 1e-12;
        s >= -eps && s <= self.length + eps && t.abs() <= self.half_width + eps
    }

    /// Evenly spaced points on the side at distance `s`, at most `step` apart.
    fn side(&self, s: f64, step: f64) -> Vec<[f64; 2]> {
        let w = self.half_width;
        let m = ((2.0 * w / step).ceil() as usize).max(1);
        (0..=m)
            .map(|k| self.point(s, -w + 2.0 * w * k as f64 / m as f64))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let norm = self.e[0].hypot(self.e[1]);
        if !((norm - 1.0).abs() <= 1e-9 && self.e[0] > 0.0 && self.e[1] > 0.0) {
            return Err(Error::InvalidRectangle(format!(
                "direction {:?} is not a positive unit vector",
                self.e
            )));
        }
        if !(self.length > 0.0 && self.half_width > 0.0 && self.length.is_finite() && self.half_width.is_finite()) {
            return Err(Error::InvalidRectangle("length and half-width must be positive".into()));
        }
        Ok(())
    }
}

fn one() -> f64 {
    1.0
}

/// Parameters of the lift: kink a, cap κ, step ε and direction e, plus the
/// supports S (an α interval) and K (a rectangle) of the 2D construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub a: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub e: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<Rectangle>,
    /// Value used for l′ at α = -a, where l has a kink.
    #[serde(default = "one")]
    pub kink_slope: f64,
}

/// The diagonal direction (1, ..., 1)/√d.
pub fn default_direction(d: usize) -> Vec<f64> {
    vec![1.0 / (d as f64).sqrt(); d]
}

impl PerturbationSpec {
    pub fn new(a: f64, kappa: f64, epsilon: f64, e: Vec<f64>) -> Result<Self> {
        let spec = Self {
            a,
            kappa,
            epsilon,
            e,
            support: None,
            rectangle: None,
            kink_slope: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Adds the 2D supports S ⊂ [-a/2, 0] and K.
    pub fn with_support(mut self, s: [f64; 2], k: Rectangle) -> Result<Self> {
        self.support = Some(s);
        self.rectangle = Some(k);
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.validate()?;
        Ok(s)
    }

    pub fn with_kink_slope(&self, slope: f64) -> Result<Self> {
        let mut s = self.clone();
        s.kink_slope = slope;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.a >= 0.0 && self.a < self.kappa) {
            return bad(format!("a must lie in [0, {}), got {}", self.kappa, self.a));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        let norm = self.e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if self.e.is_empty() || (norm - 1.0).abs() > 1e-9 || self.e.iter().any(|x| !(*x > 0.0)) {
            return bad(format!("direction {:?} is not a positive unit vector", self.e));
        }
        if !(0.0..=1.0).contains(&self.kink_slope) {
            return bad(format!("kink slope must lie in [0, 1], got {}", self.kink_slope));
        }
        if let Some([lo, hi]) = self.support {
            if !(lo < hi && lo >= -0.5 * self.a - 1e-12 && hi <= 0.0) {
                return bad(format!("S = [{lo}, {hi}] must be a sub-interval of [-a/2, 0]"));
            }
        }
        if let Some(k) = &self.rectangle {
            k.validate()?;
            if self.e.len() != 2 || (k.e[0] - self.e[0]).abs() > 1e-12 || (k.e[1] - self.e[1]).abs() > 1e-12 {
                return Err(Error::InvalidRectangle("rectangle must be aligned with e".into()));
            }
        }
        Ok(())
    }

    /// l(α) = (α + a)₊.
    pub fn l(&self, alpha: f64) -> f64 {
        (alpha + self.a).max(0.0)
    }

    /// l′(α), with [`PerturbationSpec::kink_slope`] at the kink.
    pub fn l_prime(&self, alpha: f64) -> f64 {
        if self.a == 0.0 {
            return 0.0;
        }
        let tol = 1e-12 * (1.0 + self.kappa);
        if alpha > -self.a + tol {
            1.0
        } else if alpha >= -self.a - tol {
            self.kink_slope
        } else {
            0.0
        }
    }

    /// ∫_S l dα (zero without a support).
    pub fn support_l_integral(&self) -> f64 {
        self.support.map_or(0.0, |[lo, hi]| {
            let (x0, x1) = (self.l(lo), self.l(hi));
            0.5 * (x1 * x1 - x0 * x0)
        })
    }
}

/// Raw Jacobian ∂p_k/∂θ_l per node (row-major d×d), by central differences
/// along each axis and one-sided differences at the lattice boundary.
pub(crate) fn p_jacobian(field: &SurplusField) -> Vec<f64> {
    let grid = &field.grid;
    let d = grid.type_dim();
    let mut out = vec![0.0; grid.len() * d * d];
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        for l in 0..d {
            let n = grid.n()[l];
            let (lo, hi) = (idx[l].saturating_sub(1), (idx[l] + 1).min(n - 1));
            let mut a = idx.clone();
            a[l] = lo;
            let mut b = idx.clone();
            b[l] = hi;
            let (ia, ib) = (grid.flat_index(&a), grid.flat_index(&b));
            let dt = grid.axis_value(l, hi) - grid.axis_value(l, lo);
            for k in 0..d {
                out[i * d * d + k * d + l] = (field.p[ib * d + k] - field.p[ia * d + k]) / dt;
            }
        }
    }
    out
}

/// Convex interpolant of a classical field for evaluation along a fixed
/// direction e: the upper envelope of one piece per node,
///
/// ```text
/// Q_i(z) = v_i + p_i·(z - θ_i) + ½ ((z - θ_i)·r_i)₊²,
/// ```
///
/// where r_i r_i·e = t_i g_i, g_i = sym(∇p)_i e is the difference estimate
/// of ∇²v̄ e, and t_i <= 1 is the largest scale keeping Q_i below every node
/// value (up to half the tie slack). The bend is one-sided, so only nodes
/// ahead of θ_i along r_i restrict it. Each node is reproduced exactly, with
/// its own gradient.
#[derive(Clone, Debug)]
pub struct ConvexInterpolant {
    grid: Grid,
    e: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    r: Vec<f64>,
}

impl ConvexInterpolant {
    pub fn new(field: &SurplusField, e: &[f64], exec: Exec) -> Result<Self> {
        if field.mode() != Mode::Classical {
            return Err(Error::Dimension("interpolant needs a classical field".into()));
        }
        let grid = field.grid.clone();
        let d = grid.type_dim();
        if e.len() != d {
            return Err(Error::Dimension(format!(
                "direction has {} components on a {d}D grid",
                e.len()
            )));
        }
        let jac = p_jacobian(field);
        let n = grid.len();
        let r = exec.map(n, |i| {
            let jm = &jac[i * d * d..(i + 1) * d * d];
            let g: Vec<f64> = (0..d)
                .map(|k| (0..d).map(|l| 0.5 * (jm[k * d + l] + jm[l * d + k]) * e[l]).sum())
                .collect();
            let eg = dot(e, &g);
            if !(eg > 0.0) {
                return vec![0.0; d];
            }
            let u: Vec<f64> = g.iter().map(|x| x / eg.sqrt()).collect();
            let (ti, pi) = (grid.theta(i), &field.p[i * d..(i + 1) * d]);
            let mut t = 1.0f64;
            let mut dz = vec![0.0; d];
            for j in 0..n {
                if j == i {
                    continue;
                }
                for k in 0..d {
                    dz[k] = grid.theta(j)[k] - ti[k];
                }
                let reach = dot(&u, &dz);
                if reach > 0.0 {
                    let affine = field.v[i] + dot(pi, &dz);
                    let gap = (field.v[j] - affine + 0.5 * TIE_SLACK * (1.0 + field.v[j].abs())).max(0.0);
                    t = t.min(2.0 * gap / (reach * reach));
                }
            }
            let root = t.max(0.0).sqrt();
            u.iter().map(|x| x * root).collect()
        });
        Ok(Self {
            grid,
            e: e.to_vec(),
            v: field.v.clone(),
            p: field.p.clone(),
            r: r.concat(),
        })
    }

    /// ∇²Q_i e, the second derivative of node `i`'s piece along e.
    pub fn bend(&self, i: usize) -> Vec<f64> {
        let d = self.grid.type_dim();
        let r = &self.r[i * d..(i + 1) * d];
        let re = dot(r, &self.e);
        r.iter().map(|x| x * re).collect()
    }

    fn piece(&self, j: usize, z: &[f64], dz: &mut [f64]) -> (f64, f64) {
        let d = self.grid.type_dim();
        for k in 0..d {
            dz[k] = z[k] - self.grid.theta(j)[k];
        }
        let reach = dot(&self.r[j * d..(j + 1) * d], dz).max(0.0);
        (
            self.v[j] + dot(&self.p[j * d..(j + 1) * d], dz) + 0.5 * reach * reach,
            reach,
        )
    }

    /// Value and gradient at `z`. Node `hint`'s piece wins ties, so at a
    /// node the stored value and gradient come back unchanged.
    pub fn eval(&self, z: &[f64], hint: usize) -> (f64, Vec<f64>) {
        let d = self.grid.type_dim();
        let mut dz = vec![0.0; d];
        let (mut best, mut reach) = self.piece(hint, z, &mut dz);
        let mut arg = hint;
        for j in 0..self.grid.len() {
            if j == hint {
                continue;
            }
            let (val, rj) = self.piece(j, z, &mut dz);
            if val > best + TIE_SLACK * (1.0 + best.abs()) {
                best = val;
                reach = rj;
                arg = j;
            }
        }
        let grad = (0..d)
            .map(|k| self.p[arg * d + k] + reach * self.r[arg * d + k])
            .collect();
        (best, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn require_feasible(vbar: &SurplusField, exec: Exec) -> Result<()> {
    let cs = assemble_constraints(&vbar.grid, Mode::Classical, Pairing::Full, None)?;
    let rep = check_feasibility_with(vbar, &cs, FEAS_TOL, exec)?;
    if !rep.feasible {
        return Err(Error::Infeasible {
            max_violation: rep.max_violation,
        });
    }
    Ok(())
}

/// w_ε(θ, α) = V(θ + ε l(α) e) on the lattice Ω × [-κ, 0] with `n_alpha`
/// α nodes, where V is the convex interpolant of `vbar`.
///
/// Gradients follow the chain rule, q = ε (∇V·e) l′(α). The result is
/// audited against the full extended cone and repaired if rounding left a
/// violation.
pub fn lift(vbar: &SurplusField, spec: &PerturbationSpec, n_alpha: usize, exec: Exec) -> Result<SurplusField> {
    spec.validate()?;
    if vbar.mode() != Mode::Classical {
        return Err(Error::Dimension("lift needs a classical field".into()));
    }
    let d = vbar.grid.type_dim();
    if spec.e.len() != d {
        return Err(Error::Dimension(format!(
            "direction has {} components on a {d}D grid",
            spec.e.len()
        )));
    }
    require_feasible(vbar, exec)?;
    let grid = vbar.grid.extend(AversionDomain::new(spec.kappa)?, n_alpha)?;
    let interp = ConvexInterpolant::new(vbar, &spec.e, exec)?;
    let nodes = exec.map(grid.len(), |i| {
        let alpha = grid.alpha(i);
        let s = spec.epsilon * spec.l(alpha);
        let z: Vec<f64> = grid.theta(i).iter().zip(&spec.e).map(|(t, e)| t + s * e).collect();
        let (w, g) = interp.eval(&z, grid.theta_index(i));
        let q = spec.epsilon * dot(&g, &spec.e) * spec.l_prime(alpha);
        (w, g, q)
    });
    let mut v = Vec::with_capacity(grid.len());
    let mut p = Vec::with_capacity(grid.len() * d);
    let mut q = Vec::with_capacity(grid.len());
    for (w, g, qi) in nodes {
        v.push(w);
        p.extend(g);
        q.push(qi);
    }
    let field = SurplusField::new(grid.clone(), v, p, Some(q))?;
    let cs = assemble_constraints(&grid, Mode::Extended, Pairing::Full, default_q_max(&grid))?;
    if check_feasibility_with(&field, &cs, FEAS_TOL, exec)?.feasible {
        return Ok(field);
    }
    repair_with(&field, &cs, exec)
}

/// J_R of the lift of `vbar` on the lattice and density `h` (λ = 0).
pub fn lifted_objective(vbar: &SurplusField, h: &Density, spec: &PerturbationSpec, exec: Exec) -> Result<f64> {
    let grid = h.grid();
    if !grid.is_extended() || !grid.same_types(&vbar.grid) {
        return Err(Error::GridMismatch("h must live on the lifted lattice of vbar".into()));
    }
    let w = lift(vbar, spec, grid.n_alpha(), exec)?;
    if &w.grid != grid {
        return Err(Error::GridMismatch("h uses a different aversion range".into()));
    }
    let qp = assemble_extended(grid, h, CostSpec::default())?;
    evaluate(&qp, &w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation1d {
    pub jprime0: f64,
    /// Same quadrature with l′(-a) = 0 instead of the spec's kink slope.
    pub jprime0_kink_zero: f64,
}

/// Slope at ε = 0 of J_R along the 1D lift,
///
/// ```text
/// j′(0) = ∫ [(v̄″(θ)(θ - v̄′) - v̄′) l(α) + α v̄′ l′(α)] dh,
/// ```
///
/// by the trapezoid rule on h's lattice, with v̄″ the interpolant's bend.
pub fn first_variation_1d(vbar: &SurplusField, h: &Density, spec: &PerturbationSpec) -> Result<FirstVariation1d> {
    spec.validate()?;
    let grid = h.grid();
    if vbar.grid.type_dim() != 1 || vbar.mode() != Mode::Classical {
        return Err(Error::Dimension("first_variation_1d needs a 1D classical field".into()));
    }
    if !grid.is_extended() || !grid.same_types(&vbar.grid) {
        return Err(Error::GridMismatch("h must live on the lifted lattice of vbar".into()));
    }
    let interp = ConvexInterpolant::new(vbar, &spec.e, Exec::Sequential)?;
    let mass = h.node_mass();
    let zero = spec.with_kink_slope(0.0)?;
    let terms = |s: &PerturbationSpec| -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let j = grid.theta_index(i);
                let (theta, alpha) = (grid.theta(i)[0], grid.alpha(i));
                let p = vbar.p[j];
                let curv = interp.bend(j)[0];
                mass[i] * ((curv * (theta - p) - p) * s.l(alpha) + alpha * p * s.l_prime(alpha))
            })
            .collect()
    };
    Ok(FirstVariation1d {
        jprime0: tree_sum(&terms(spec)),
        jprime0_kink_zero: tree_sum(&terms(&zero)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfitabilitySet {
    /// Nodes where v̄″(θ - v̄′) - v̄′ > 0.
    pub mask: Vec<bool>,
    /// ∫_B f.
    pub mass: f64,
}

/// The set B of types where a lottery pays at first order.
pub fn profitability_set_1d(vbar: &SurplusField, f: &Density) -> Result<ProfitabilitySet> {
    if vbar.grid.dim() != 1 {
        return Err(Error::Dimension(
            "profitability_set_1d needs a 1D classical field".into(),
        ));
    }
    if f.grid() != &vbar.grid {
        return Err(Error::GridMismatch("f and vbar live on different grids".into()));
    }
    let jac = p_jacobian(vbar);
    let mask: Vec<bool> = (0..vbar.len())
        .map(|i| {
            let (theta, p) = (vbar.grid.theta(i)[0], vbar.p[i]);
            jac[i] * (theta - p) - p > 1e-10
        })
        .collect();
    let node_mass = f.node_mass();
    let inside: Vec<f64> = mask
        .iter()
        .zip(&node_mass)
        .map(|(&m, &c)| if m { c } else { 0.0 })
        .collect();
    Ok(ProfitabilitySet {
        mask,
        mass: tree_sum(&inside),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KField {
    /// k = ½|p|² - θ·p + v.
    pub k: Vec<f64>,
    pub k_plus_2v: Vec<f64>,
}

pub fn k_field(vbar: &SurplusField) -> Result<KField> {
    if vbar.mode() != Mode::Classical {
        return Err(Error::Dimension("k_field needs a classical field".into()));
    }
    let k: Vec<f64> = (0..vbar.len())
        .map(|i| {
            let (t, p) = (vbar.grid.theta(i), vbar.p_at(i));
            0.5 * dot(p, p) - dot(t, p) + vbar.v[i]
        })
        .collect();
    let k_plus_2v = k.iter().zip(&vbar.v).map(|(k, v)| k + 2.0 * v).collect();
    Ok(KField { k, k_plus_2v })
}

/// Multilinear interpolation of node values at `x`; `None` outside Ω.
pub(crate) fn sample(grid: &Grid, values: &[f64], x: &[f64]) -> Option<f64> {
    let d = grid.dim();
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let (lo, hi, h) = (grid.lo()[k], grid.hi()[k], grid.spacing()[k]);
        let tol = 1e-12 * (hi - lo);
        if x[k] < lo - tol || x[k] > hi + tol {
            return None;
        }
        let t = ((x[k] - lo) / h).clamp(0.0, (grid.n()[k] - 1) as f64);
        let c = (t.floor() as usize).min(grid.n()[k] - 2);
        base[k] = c;
        frac[k] = t - c as f64;
    }
    let mut s = 0.0;
    let mut idx = vec![0usize; d];
    for mask in 0..(1usize << d) {
        let mut w = 1.0;
        for k in 0..d {
            let up = mask >> k & 1 == 1;
            idx[k] = base[k] + usize::from(up);
            w *= if up { frac[k] } else { 1.0 - frac[k] };
        }
        if w != 0.0 {
            s += w * values[grid.flat_index(&idx)];
        }
    }
    Some(s)
}

struct Excluded {
    v: Vec<f64>,
    p: [Vec<f64>; 2],
}

impl Excluded {
    fn new(vbar: &SurplusField) -> Self {
        let p0 = (0..vbar.len()).map(|i| vbar.p[2 * i]).collect();
        let p1 = (0..vbar.len()).map(|i| vbar.p[2 * i + 1]).collect();
        Self {
            v: vbar.v.clone(),
            p: [p0, p1],
        }
    }

    /// Whether ∂K₋-type point `x` lies in Ω and has v and |∇v| (interpolated)
    /// within the exclusion tolerance.
    fn holds(&self, grid: &Grid, x: &[f64]) -> bool {
        let (Some(v), Some(a), Some(b)) = (
            sample(grid, &self.v, x),
            sample(grid, &self.p[0], x),
            sample(grid, &self.p[1], x),
        ) else {
            return false;
        };
        v <= EXCLUSION_TOL && a.hypot(b) <= EXCLUSION_TOL
    }
}

fn inside(grid: &Grid, x: &[f64]) -> bool {
    (0..grid.dim()).all(|k| {
        let tol = 1e-12 * (grid.hi()[k] - grid.lo()[k]);
        x[k] >= grid.lo()[k] - tol && x[k] <= grid.hi()[k] + tol
    })
}

/// Searches for a rectangle K with ∂K₋ in the exclusion region and
/// k + 2v̄ < -margin along ∂K₊.
///
/// Start points are the lattice nodes of Ω₀ interior to Ω with a neighbour
/// outside Ω₀. From each (optionally backed off along -e), ∂K₊ sweeps along
/// e in quarter-cell steps; wherever the widest admissible half-width gives
/// a valid K, the candidate is scored by ∫_{∂K₊}(k + 2v̄). The most negative
/// score wins (it maximizes the 2D lower bound), first found on ties. The
/// default margin is 1e-6·max(1, max v̄).
pub fn find_profitable_rectangle(vbar: &SurplusField, e: [f64; 2], margin: Option<f64>) -> Result<Option<Rectangle>> {
    let grid = &vbar.grid;
    if grid.dim() != 2 || vbar.mode() != Mode::Classical {
        return Err(Error::Dimension(
            "find_profitable_rectangle needs a 2D classical field".into(),
        ));
    }
    let margin = margin.unwrap_or_else(|| 1e-6 * vbar.v.iter().fold(1.0f64, |a, b| a.max(*b)));
    let kf = k_field(vbar)?;
    let excl = Excluded::new(vbar);
    let in0: Vec<bool> = (0..vbar.len())
        .map(|i| vbar.v[i] <= EXCLUSION_TOL && dot(vbar.p_at(i), vbar.p_at(i)).sqrt() <= EXCLUSION_TOL)
        .collect();
    let n = grid.n();
    let h = grid.spacing()[0].min(grid.spacing()[1]);
    let step = 0.25 * h;
    let reach = grid.domain().diameter();
    let widths = [4.0, 3.0, 2.0, 1.5, 1.0, 0.5, 0.25];
    let starts: Vec<usize> = (0..vbar.len())
        .filter(|&i| {
            let idx = grid.multi_index(i);
            if !in0[i] || idx.iter().zip(n).any(|(&k, &m)| k == 0 || k + 1 == m) {
                return false;
            }
            [(0, -1i64), (0, 1), (1, -1), (1, 1)].iter().any(|&(ax, o)| {
                let mut nb = idx.clone();
                nb[ax] = (nb[ax] as i64 + o) as usize;
                !in0[grid.flat_index(&nb)]
            })
        })
        .collect();
    let mut best: Option<(f64, Rectangle)> = None;
    for i in starts {
        let t = grid.theta(i);
        for back in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let origin = [t[0] - back * h * e[0], t[1] - back * h * e[1]];
            let near_ok: Vec<bool> = widths
                .iter()
                .map(|w| {
                    let r = Rectangle {
                        origin,
                        e,
                        length: 1.0,
                        half_width: w * h,
                    };
                    r.side(0.0, step).iter().all(|x| excl.holds(grid, x))
                })
                .collect();
            if !near_ok.iter().any(|&b| b) {
                continue;
            }
            let mut s = step;
            while s <= reach {
                let centre = [origin[0] + s * e[0], origin[1] + s * e[1]];
                let Some(g) = sample(grid, &kf.k_plus_2v, &centre) else {
                    break;
                };
                if g < -margin {
                    for (w, _) in widths.iter().zip(&near_ok).filter(|(_, &ok)| ok) {
                        let rect = Rectangle {
                            origin,
                            e,
                            length: s,
                            half_width: w * h,
                        };
                        if !rect.corners().iter().all(|c| inside(grid, c)) {
                            continue;
                        }
                        let far = rect.side(s, step);
                        let vals: Option<Vec<f64>> = far
                            .iter()
                            .map(|x| sample(grid, &kf.k_plus_2v, x).filter(|g| *g < -margin))
                            .collect();
                        if let Some(vals) = vals {
                            let ds = 2.0 * rect.half_width / (vals.len() - 1) as f64;
                            let last = vals.len() - 1;
                            let score: f64 = vals
                                .iter()
                                .enumerate()
                                .map(|(k, g)| if k == 0 || k == last { 0.5 * ds * g } else { ds * g })
                                .sum();
                            if best.as_ref().is_none_or(|(b, _)| score < *b) {
                                best = Some((score, rect));
                            }
                            break;
                        }
                    }
                }
                s += step;
            }
        }
    }
    Ok(best.map(|(_, r)| r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation2d {
    pub exact: f64,
    pub lower_bound: f64,
}

/// Slope at ε = 0 of J_R along the 2D lift for h = I_K(θ) I_S(α):
///
/// ```text
/// exact       = -∫_S l · ∫_{∂K₊} k  -  a|S| · ∫_{∂K₊} v̄
/// lower_bound = -∫_S l · ∫_{∂K₊} (k + 2v̄)
/// ```
///
/// Line integrals use the trapezoid rule on ∂K₊ with bilinear values.
pub fn first_variation_2d(vbar: &SurplusField, spec: &PerturbationSpec) -> Result<FirstVariation2d> {
    spec.validate()?;
    let grid = &vbar.grid;
    if grid.dim() != 2 || vbar.mode() != Mode::Classical {
        return Err(Error::Dimension("first_variation_2d needs a 2D classical field".into()));
    }
    let (Some(rect), Some([s0, s1])) = (&spec.rectangle, spec.support) else {
        return Err(Error::InvalidParameter(
            "2D first variation needs supports K and S".into(),
        ));
    };
    if !rect.corners().iter().all(|c| inside(grid, c)) {
        return Err(Error::InvalidRectangle("K is not contained in the type domain".into()));
    }
    let h = grid.spacing()[0].min(grid.spacing()[1]);
    let excl = Excluded::new(vbar);
    if let Some(x) = rect.side(0.0, 0.25 * h).into_iter().find(|x| !excl.holds(grid, x)) {
        return Err(Error::InvalidRectangle(format!(
            "v and its gradient do not vanish on the near side at ({:.6}, {:.6})",
            x[0], x[1]
        )));
    }
    let kf = k_field(vbar)?;
    let pts = rect.side(rect.length, 0.25 * h);
    let ds = 2.0 * rect.half_width / (pts.len() - 1) as f64;
    let line = |vals: &[f64]| -> f64 {
        let ys: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let w = if k == 0 || k + 1 == pts.len() { 0.5 * ds } else { ds };
                w * sample(grid, vals, x).expect("far side checked inside")
            })
            .collect();
        tree_sum(&ys)
    };
    let (ik, iv) = (line(&kf.k), line(&vbar.v));
    let il = spec.support_l_integral();
    Ok(FirstVariation2d {
        exact: -il * ik - spec.a * (s1 - s0) * iv,
        lower_bound: -il * (ik + 2.0 * iv),
    })
}

/// Joint density h = I_K(θ)·I_S(α) plus a completion on α below the kink,
/// so that the θ-marginal is exactly `f`.
///
/// Each θ node carries the fraction of its dual cell covered by K, each α
/// node the part of its dual interval covered by S (relative to its
/// trapezoid weight). The remaining mass f - |S|·cov_K sits on α nodes
/// strictly below -a, where l and l′ vanish.
pub fn rectangle_density(f: &Density, grid: &Grid, spec: &PerturbationSpec) -> Result<Density> {
    spec.validate()?;
    let (Some(rect), Some([s0, s1])) = (&spec.rectangle, spec.support) else {
        return Err(Error::InvalidParameter(
            "rectangle density needs supports K and S".into(),
        ));
    };
    let tgrid = f.grid();
    if tgrid.dim() != 2 || !grid.is_extended() || !grid.same_types(tgrid) {
        return Err(Error::GridMismatch(
            "needs f on the 2D type lattice of an extended grid".into(),
        ));
    }
    let kappa = grid.aversion().expect("extended").kappa();
    if (kappa - spec.kappa).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "grid kappa {kappa} differs from spec kappa {}",
            spec.kappa
        )));
    }
    const SUB: usize = 8;
    let cov_k: Vec<f64> = (0..tgrid.len())
        .map(|i| {
            let t = tgrid.theta(i);
            let cell: Vec<(f64, f64)> = (0..2)
                .map(|k| {
                    let h = tgrid.spacing()[k];
                    ((t[k] - 0.5 * h).max(tgrid.lo()[k]), (t[k] + 0.5 * h).min(tgrid.hi()[k]))
                })
                .collect();
            let mut hits = 0;
            for a in 0..SUB {
                for b in 0..SUB {
                    let x = [
                        cell[0].0 + (a as f64 + 0.5) / SUB as f64 * (cell[0].1 - cell[0].0),
                        cell[1].0 + (b as f64 + 0.5) / SUB as f64 * (cell[1].1 - cell[1].0),
                    ];
                    hits += usize::from(rect.contains(&x));
                }
            }
            hits as f64 / (SUB * SUB) as f64
        })
        .collect();
    let na = grid.n_alpha();
    let axis = grid.dim() - 1;
    let ha = grid.spacing()[axis];
    let alphas = grid.axis_nodes(axis);
    let weight = |k: usize| if k == 0 || k + 1 == na { 0.5 * ha } else { ha };
    let cov_s: Vec<f64> = (0..na)
        .map(|k| {
            let (lo, hi) = ((alphas[k] - 0.5 * ha).max(-kappa), (alphas[k] + 0.5 * ha).min(0.0));
            (hi.min(s1) - lo.max(s0)).max(0.0) / weight(k)
        })
        .collect();
    if (0..na).any(|k| cov_s[k] > 0.0 && alphas[k] <= -spec.a + 1e-12) {
        return Err(Error::Alignment(
            "the α lattice is too coarse to keep S above the kink".into(),
        ));
    }
    let low: Vec<bool> = alphas.iter().map(|&x| x < -spec.a - 1e-12).collect();
    let low_weight: f64 = (0..na).filter(|&k| low[k]).map(weight).sum();
    if low_weight <= 0.0 {
        return Err(Error::Alignment(
            "no α grid line below the kink for the completion".into(),
        ));
    }
    let len_s = s1 - s0;
    let mut values = vec![0.0; grid.len()];
    for i in 0..tgrid.len() {
        let rest = f.value(i) - cov_k[i] * len_s;
        if rest < -1e-12 {
            return Err(Error::InvalidParameter(format!(
                "I_K I_S exceeds the marginal at node {i}: f = {}",
                f.value(i)
            )));
        }
        let c = rest.max(0.0) / low_weight;
        for k in 0..na {
            values[i * na + k] = cov_k[i] * cov_s[k] + if low[k] { c } else { 0.0 };
        }
    }
    Density::new(grid.clone(), values)
}

/// J_R(w - ε(α + κ)) - J_R(w) for λ = 0, which the shift identity puts at
/// exactly ε·κ. The shift stays in the cone only for ε <= min q.
pub fn shift_identity_check(w: &SurplusField, h: &Density, eps: f64) -> Result<f64> {
    let grid = &w.grid;
    let Some(q) = &w.q else {
        return Err(Error::Dimension("shift identity needs an extended field".into()));
    };
    if h.grid() != grid {
        return Err(Error::GridMismatch("h and w live on different grids".into()));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("shift must be >= 0, got {eps}")));
    }
    let min_q = q.iter().copied().fold(f64::INFINITY, f64::min);
    if eps > min_q {
        return Err(Error::ShiftTooLarge { eps, min_q });
    }
    let kappa = grid.aversion().expect("extended").kappa();
    let mut shifted = w.clone();
    for i in 0..grid.len() {
        shifted.v[i] -= eps * (grid.alpha(i) + kappa);
    }
    shifted.q = Some(q.iter().map(|x| x - eps).collect());
    let qp = assemble_extended(grid, h, CostSpec::default())?;
    Ok(evaluate(&qp, &shifted)? - evaluate(&qp, w)?)
}

/// Exported profitability certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jprime0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    pub spec: PerturbationSpec,
    pub positive: bool,
}

impl Certificate {
    pub fn one_d(jprime0: f64, spec: &PerturbationSpec) -> Self {
        Self {
            kind: "1d".into(),
            jprime0: Some(jprime0),
            lower_bound: None,
            spec: spec.clone(),
            positive: jprime0 > 0.0,
        }
    }

    pub fn two_d(lower_bound: f64, spec: &PerturbationSpec) -> Self {
        Self {
            kind: "2d".into(),
            jprime0: None,
            lower_bound: Some(lower_bound),
            spec: spec.clone(),
            positive: lower_bound > 0.0,
        }
    }
}
