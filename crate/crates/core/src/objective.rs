//! Discrete seller objectives.
//!
//! Both problems reduce to the separable concave quadratic
//!
//! ```text
//! J = Σ_i c_i (θ_i·p_i + α_i q_i - v_i - ½|p_i|² - λ q_i)
//! ```
//!
//! where `c_i` is the density value times the trapezoid weight of node i.
//! Unknowns are packed as `[v (n) | p (n·d) | q (n)]`.

use crate::cone::{assemble_constraints, default_q_max, ConstraintSet, Mode, Pairing, SurplusField};
use crate::domain::{Density, Grid};
use crate::error::{Error, Result};
use crate::exec::tree_sum;

/// Production cost ½|x|² + λ·y.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostSpec {
    lambda: f64,
}

impl CostSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eval(&self, x: &[f64], y: f64) -> f64 {
        0.5 * x.iter().map(|t| t * t).sum::<f64>() + self.lambda * y
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    grid: Grid,
    mode: Mode,
    mass: Vec<f64>,
    lambda: f64,
    constraints: ConstraintSet,
}

pub fn assemble_classical(grid: &Grid, f: &Density, cost: CostSpec) -> Result<QuadraticProgram> {
    if grid.is_extended() || f.grid() != grid {
        return Err(Error::GridMismatch(
            "classical objective needs f on the same type grid".into(),
        ));
    }
    let constraints = assemble_constraints(grid, Mode::Classical, Pairing::Full, None)?;
    Ok(QuadraticProgram {
        grid: grid.clone(),
        mode: Mode::Classical,
        mass: f.node_mass(),
        lambda: cost.lambda(),
        constraints,
    })
}

pub fn assemble_extended(grid: &Grid, h: &Density, cost: CostSpec) -> Result<QuadraticProgram> {
    if !grid.is_extended() || h.grid() != grid {
        return Err(Error::GridMismatch(
            "extended objective needs h on the same (θ, α) grid".into(),
        ));
    }
    let constraints = assemble_constraints(grid, Mode::Extended, Pairing::Full, default_q_max(grid))?;
    Ok(QuadraticProgram {
        grid: grid.clone(),
        mode: Mode::Extended,
        mass: h.node_mass(),
        lambda: cost.lambda(),
        constraints,
    })
}

impl QuadraticProgram {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Per-node weight c_i (density × quadrature).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// Replaces the constraint set (e.g. a different q cap); must share the grid.
    pub fn with_constraints(mut self, cs: ConstraintSet) -> Result<Self> {
        if cs.grid() != &self.grid || cs.mode() != self.mode {
            return Err(Error::GridMismatch("constraints built on another grid".into()));
        }
        self.constraints = cs;
        Ok(self)
    }

    /// Replaces the node weights c_i (e.g. a sub-probability or a zero mass).
    pub fn with_mass(mut self, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != self.grid.len() || mass.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidDensity(
                "node weights must be finite, >= 0, one per node".into(),
            ));
        }
        self.mass = mass;
        Ok(self)
    }

    pub fn n_unknowns(&self) -> usize {
        let n = self.grid.len();
        n * (1 + self.grid.type_dim()) + if self.mode == Mode::Extended { n } else { 0 }
    }

    /// Linear coefficients of J in packed order.
    pub fn linear(&self) -> Vec<f64> {
        let n = self.grid.len();
        let d = self.grid.type_dim();
        let mut g = vec![0.0; self.n_unknowns()];
        for i in 0..n {
            let c = self.mass[i];
            g[i] = -c;
            for (k, t) in self.grid.theta(i).iter().enumerate() {
                g[n + i * d + k] = c * t;
            }
            if self.mode == Mode::Extended {
                g[n * (1 + d) + i] = c * (self.grid.alpha(i) - self.lambda);
            }
        }
        g
    }

    /// Diagonal of the (negative semidefinite) Hessian of J.
    pub fn hessian_diag(&self) -> Vec<f64> {
        let n = self.grid.len();
        let d = self.grid.type_dim();
        let mut h = vec![0.0; self.n_unknowns()];
        for i in 0..n {
            for k in 0..d {
                h[n + i * d + k] = -self.mass[i];
            }
        }
        h
    }

    pub fn pack(&self, field: &SurplusField) -> Result<Vec<f64>> {
        self.check(field)?;
        let mut x = Vec::with_capacity(self.n_unknowns());
        x.extend_from_slice(&field.v);
        x.extend_from_slice(&field.p);
        if let Some(q) = &field.q {
            x.extend_from_slice(q);
        }
        Ok(x)
    }

    pub fn unpack(&self, x: &[f64]) -> Result<SurplusField> {
        if x.len() != self.n_unknowns() {
            return Err(Error::GridMismatch(format!(
                "{} unknowns, expected {}",
                x.len(),
                self.n_unknowns()
            )));
        }
        let n = self.grid.len();
        let d = self.grid.type_dim();
        let q = (self.mode == Mode::Extended).then(|| x[n * (1 + d)..].to_vec());
        SurplusField::new(self.grid.clone(), x[..n].to_vec(), x[n..n * (1 + d)].to_vec(), q)
    }

    fn check(&self, field: &SurplusField) -> Result<()> {
        if field.grid != self.grid || field.mode() != self.mode {
            return Err(Error::GridMismatch("field lives on another grid".into()));
        }
        Ok(())
    }

    fn node_value(&self, field: &SurplusField, i: usize) -> f64 {
        let mut s = -field.v[i];
        for (t, p) in self.grid.theta(i).iter().zip(field.p_at(i)) {
            s += t * p - 0.5 * p * p;
        }
        if let Some(q) = &field.q {
            s += (self.grid.alpha(i) - self.lambda) * q[i];
        }
        self.mass[i] * s
    }
}

pub fn evaluate(qp: &QuadraticProgram, field: &SurplusField) -> Result<f64> {
    qp.check(field)?;
    let terms: Vec<f64> = (0..field.len()).map(|i| qp.node_value(field, i)).collect();
    Ok(tree_sum(&terms))
}

/// Analytic gradient of J in packed order.
pub fn gradient(qp: &QuadraticProgram, field: &SurplusField) -> Result<Vec<f64>> {
    let x = qp.pack(field)?;
    let mut g = qp.linear();
    for ((gk, hk), xk) in g.iter_mut().zip(qp.hessian_diag()).zip(&x) {
        *gk += hk * xk;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{uniform_density, AversionDomain, TypeDomain};

    fn unit(n: usize) -> (Grid, Density) {
        let g = Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[n]).unwrap();
        let f = uniform_density(&g);
        (g, f)
    }

    #[test]
    fn zero_field_scores_zero() {
        let (g, f) = unit(11);
        let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
        assert_eq!(evaluate(&qp, &SurplusField::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn affine_field_scores_half() {
        let (g, f) = unit(11);
        let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
        let field = SurplusField::from_fn(&g, |t| t[0] - 1.0, |_, p| p[0] = 1.0);
        assert!((evaluate(&qp, &field).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn quadratic_field_tends_to_two_thirds() {
        // trapezoid error for the integrand (θ-1)(3-θ) is h²/6
        for n in [11, 101, 401] {
            let (g, f) = unit(n);
            let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
            let field = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
            let h = 1.0 / (n - 1) as f64;
            let j = evaluate(&qp, &field).unwrap();
            assert!((j - (2.0 / 3.0 - h * h / 6.0)).abs() < 1e-12, "n={n}: {j}");
        }
    }

    #[test]
    fn gradient_basics() {
        let (g, f) = unit(5);
        let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
        let field = SurplusField::from_fn(&g, |_| 0.3, |t, p| p[0] = t[0]);
        let grad = gradient(&qp, &field).unwrap();
        for i in 0..5 {
            assert_eq!(grad[i], -qp.mass()[i]);
            assert_eq!(grad[5 + i], 0.0);
        }
    }

    #[test]
    fn pack_round_trip() {
        let g = Grid::new(
            &TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(),
            Some(AversionDomain::new(1.0).unwrap()),
            &[3, 3, 2],
        )
        .unwrap();
        let h = uniform_density(&g);
        let qp = assemble_extended(&g, &h, CostSpec::new(0.5).unwrap()).unwrap();
        let x: Vec<f64> = (0..qp.n_unknowns()).map(|k| k as f64).collect();
        let field = qp.unpack(&x).unwrap();
        assert_eq!(qp.pack(&field).unwrap(), x);
        assert_eq!(field.q_at(0), (18 * 3) as f64);
    }

    #[test]
    fn extended_without_q_matches_classical() {
        let (g, f) = unit(9);
        let eg = g.extend(AversionDomain::new(1.0).unwrap(), 5).unwrap();
        let h = uniform_density(&eg);
        let qd = assemble_classical(&g, &f, CostSpec::default()).unwrap();
        let qr = assemble_extended(&eg, &h, CostSpec::default()).unwrap();
        let fd = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
        let fr = SurplusField::from_fn(&eg, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
        let (a, b) = (evaluate(&qd, &fd).unwrap(), evaluate(&qr, &fr).unwrap());
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(CostSpec::new(-1.0).is_err());
        assert_eq!(CostSpec::new(2.0).unwrap().eval(&[1.0, 1.0], 0.5), 2.0);
    }
}
