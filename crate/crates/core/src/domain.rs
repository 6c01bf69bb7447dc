//! Type domains, node lattices and densities.
//!
//! A [`Grid`] is a regular lattice over the type rectangle Ω, optionally
//! extended by the aversion interval A = [-κ, 0] as a trailing axis. Nodes are
//! ordered lexicographically with the last axis fastest, so on an extended
//! grid the α-fiber above each type node is contiguous.

use crate::error::{Error, Result};

/// Tolerance used when checking that densities integrate to one.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TypeDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TypeDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidDomain(format!(
                "bounds must have the same positive length (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (k, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidDomain(format!("axis {k}: need lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Self::new(lo.to_vec(), hi.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }
}

/// The aversion interval A = [-κ, 0].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AversionDomain {
    kappa: f64,
}

impl AversionDomain {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::InvalidDomain(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    domain: TypeDomain,
    aversion: Option<AversionDomain>,
    n: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    coords: Vec<f64>,
}

impl Grid {
    /// Builds the lattice over Ω (and A when `aversion` is given).
    ///
    /// `n` lists nodes per axis: one entry per type axis, plus a trailing
    /// entry for α on extended grids.
    pub fn new(domain: &TypeDomain, aversion: Option<AversionDomain>, n: &[usize]) -> Result<Self> {
        let dim = domain.dim() + usize::from(aversion.is_some());
        if n.len() != dim {
            return Err(Error::Dimension(format!("expected {dim} resolutions, got {}", n.len())));
        }
        if let Some(&bad) = n.iter().find(|&&k| k < 2) {
            return Err(Error::InvalidResolution(bad));
        }
        let mut lo = domain.lo().to_vec();
        let mut hi = domain.hi().to_vec();
        if let Some(a) = aversion {
            lo.push(-a.kappa());
            hi.push(0.0);
        }
        let spacing: Vec<f64> = (0..dim).map(|k| (hi[k] - lo[k]) / (n[k] - 1) as f64).collect();
        let mut strides = vec![1usize; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * n[k + 1];
        }
        let len: usize = n.iter().product();
        let mut coords = Vec::with_capacity(len * dim);
        for i in 0..len {
            let mut rem = i;
            for k in 0..dim {
                let idx = rem / strides[k];
                rem %= strides[k];
                coords.push(axis_value(lo[k], hi[k], spacing[k], n[k], idx));
            }
        }
        Ok(Self {
            domain: domain.clone(),
            aversion,
            n: n.to_vec(),
            lo,
            hi,
            spacing,
            strides,
            coords,
        })
    }

    /// Same type lattice with an α axis appended.
    pub fn extend(&self, aversion: AversionDomain, n_alpha: usize) -> Result<Self> {
        if self.is_extended() {
            return Err(Error::Dimension("grid already has an aversion axis".into()));
        }
        let mut n = self.n.clone();
        n.push(n_alpha);
        Self::new(&self.domain, Some(aversion), &n)
    }

    /// The type-only lattice (drops the α axis if present).
    pub fn type_grid(&self) -> Grid {
        if !self.is_extended() {
            return self.clone();
        }
        Self::new(&self.domain, None, &self.n[..self.type_dim()]).expect("sub-lattice of a valid grid")
    }

    pub fn domain(&self) -> &TypeDomain {
        &self.domain
    }

    pub fn aversion(&self) -> Option<AversionDomain> {
        self.aversion
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Total number of axes.
    pub fn dim(&self) -> usize {
        self.n.len()
    }

    /// Number of type axes d.
    pub fn type_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_extended(&self) -> bool {
        self.aversion.is_some()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// All coordinates of node `i` (θ then α).
    pub fn coords(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.coords(i)[..self.type_dim()]
    }

    /// α of node `i`; zero on type-only grids.
    pub fn alpha(&self, i: usize) -> f64 {
        if self.is_extended() {
            self.coords[i * self.dim() + self.dim() - 1]
        } else {
            0.0
        }
    }

    /// Number of α nodes per type node (1 on type-only grids).
    pub fn n_alpha(&self) -> usize {
        if self.is_extended() {
            *self.n.last().unwrap()
        } else {
            1
        }
    }

    /// Index of node `i`'s type component in [`Grid::type_grid`].
    pub fn theta_index(&self, i: usize) -> usize {
        i / self.n_alpha()
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rem = i;
        self.strides
            .iter()
            .map(|&s| {
                let k = rem / s;
                rem %= s;
                k
            })
            .collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn axis_value(&self, axis: usize, k: usize) -> f64 {
        axis_value(self.lo[axis], self.hi[axis], self.spacing[axis], self.n[axis], k)
    }

    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|k| self.axis_value(axis, k)).collect()
    }

    /// Composite trapezoid weights of the product rule.
    pub fn quad_weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = (0..self.dim())
            .map(|k| {
                let mut w = vec![self.spacing[k]; self.n[k]];
                w[0] *= 0.5;
                w[self.n[k] - 1] *= 0.5;
                w
            })
            .collect();
        (0..self.len())
            .map(|i| {
                self.multi_index(i)
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| per_axis[k][j])
                    .product()
            })
            .collect()
    }

    /// Total measure of Ω (× A).
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Index of the lattice node nearest to `x` along `axis`.
    pub fn nearest_on_axis(&self, axis: usize, x: f64) -> usize {
        let t = ((x - self.lo[axis]) / self.spacing[axis]).round();
        t.clamp(0.0, (self.n[axis] - 1) as f64) as usize
    }

    /// True when `other` has the same type lattice as this grid.
    pub fn same_types(&self, other: &Grid) -> bool {
        self.domain == other.domain && self.n[..self.type_dim()] == other.n[..other.type_dim()]
    }
}

fn axis_value(lo: f64, hi: f64, h: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        hi
    } else {
        lo + k as f64 * h
    }
}

/// Nodal density with its trapezoid weights baked in.
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    grid: Grid,
    values: Vec<f64>,
    quad: Vec<f64>,
}

impl Density {
    /// Wraps node values; they must be non-negative and integrate to one.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let d = Self::unchecked(grid, values)?;
        let mass = d.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDensity(format!("integrates to {mass}, expected 1")));
        }
        Ok(d)
    }

    /// Rescales node values so that they integrate to one.
    pub fn normalized(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::unchecked(grid, values)?;
        let mass = d.mass();
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("total mass is zero".into()));
        }
        d.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    /// Node values from a piecewise-constant cell function: each node gets the
    /// mean of `cell(center)` over the lattice cells touching it.
    pub fn from_cells(grid: Grid, cell: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = cell_average(&grid, cell);
        Self::new(grid, values)
    }

    fn unchecked(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} density values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDensity(format!("value {v} at node {i}")));
        }
        let quad = grid.quad_weights();
        Ok(Self { grid, values, quad })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Trapezoid weights of the underlying grid.
    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    /// Per-node quadrature mass `quad_i * value_i`.
    pub fn node_mass(&self) -> Vec<f64> {
        self.quad.iter().zip(&self.values).map(|(w, v)| w * v).collect()
    }

    pub fn mass(&self) -> f64 {
        crate::exec::tree_sum(&self.node_mass())
    }
}

pub(crate) fn cell_average(grid: &Grid, cell: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let dim = grid.dim();
    let mut center = vec![0.0; dim];
    (0..grid.len())
        .map(|i| {
            let idx = grid.multi_index(i);
            let mut total = 0.0;
            let mut count = 0usize;
            for mask in 0..(1usize << dim) {
                let mut ok = true;
                for k in 0..dim {
                    let c = if mask >> k & 1 == 1 {
                        idx[k] as isize - 1
                    } else {
                        idx[k] as isize
                    };
                    if c < 0 || c as usize + 1 >= grid.n()[k] {
                        ok = false;
                        break;
                    }
                    center[k] = 0.5 * (grid.axis_value(k, c as usize) + grid.axis_value(k, c as usize + 1));
                }
                if ok {
                    total += cell(&center);
                    count += 1;
                }
            }
            total / count as f64
        })
        .collect()
}

/// Constant density 1/volume (over Ω × A on extended grids).
pub fn uniform_density(grid: &Grid) -> Density {
    let value = 1.0 / grid.volume();
    Density::normalized(grid.clone(), vec![value; grid.len()]).expect("uniform density is valid")
}

/// Truncated exponential density ∝ exp(-rate·(θ - θ_min)) on the type axes,
/// uniform in α on extended grids.
pub fn exponential_density(grid: &Grid, rate: f64) -> Result<Density> {
    if !rate.is_finite() {
        return Err(Error::InvalidParameter(format!("exponential rate {rate}")));
    }
    let values = (0..grid.len())
        .map(|i| {
            let s: f64 = grid.theta(i).iter().zip(grid.lo()).map(|(t, l)| t - l).sum();
            (-rate * s).exp()
        })
        .collect();
    Density::normalized(grid.clone(), values)
}

/// Returns the kink location a snapped onto the nearest α grid line.
pub fn snap_kink(a: f64, grid: &Grid) -> Result<f64> {
    let kappa = grid
        .aversion()
        .ok_or_else(|| Error::Dimension("kink snapping needs an extended grid".into()))?
        .kappa();
    if !(a > 0.0 && a < kappa) {
        return Err(Error::InvalidParameter(format!("a must lie in (0, {kappa}), got {a}")));
    }
    let axis = grid.dim() - 1;
    let k = grid.nearest_on_axis(axis, -a);
    let snapped = -grid.axis_value(axis, k);
    if (snapped - a).abs() > 0.5 * grid.spacing()[axis] + 1e-12 || !(snapped > 0.0 && snapped < kappa) {
        return Err(Error::Alignment(format!(
            "alpha = -{a} cannot be snapped to an interior grid line"
        )));
    }
    Ok(snapped)
}

/// Joint density of the 1D lottery example: 1/a on R₁ = [1, 3/2] × [-a, 0],
/// 1/(1-a) on R₂ = [3/2, 2] × [-1, -a], zero elsewhere.
///
/// Requires Ω = [1, 2], κ = 1 and a lattice line at θ = 3/2; `a` is snapped
/// to the nearest α line (see [`snap_kink`]).
pub fn fig1_joint_density(a: f64, grid: &Grid) -> Result<Density> {
    let dom = grid.domain();
    if grid.type_dim() != 1 || dom.lo()[0] != 1.0 || dom.hi()[0] != 2.0 {
        return Err(Error::Dimension("fig1 density lives on [1,2] x [-1,0]".into()));
    }
    match grid.aversion() {
        Some(av) if av.kappa() == 1.0 => {}
        _ => return Err(Error::Dimension("fig1 density needs kappa = 1".into())),
    }
    let split = (1.5 - grid.lo()[0]) / grid.spacing()[0];
    if (split - split.round()).abs() > 1e-9 {
        return Err(Error::Alignment("theta = 3/2 is not a grid line".into()));
    }
    let a = snap_kink(a, grid)?;
    Density::from_cells(grid.clone(), |c| {
        let (theta, alpha) = (c[0], c[1]);
        if theta < 1.5 && alpha > -a {
            1.0 / a
        } else if theta > 1.5 && alpha < -a {
            1.0 / (1.0 - a)
        } else {
            0.0
        }
    })
}

/// h(θ, α) = f(θ) g(α) on `grid`, where `g` is integrated with the α trapezoid
/// rule and normalized.
pub fn product_density(f: &Density, grid: &Grid, g: impl Fn(f64) -> f64) -> Result<Density> {
    if !grid.is_extended() || !f.grid().same_types(grid) || f.grid().is_extended() {
        return Err(Error::GridMismatch(
            "product density needs f on the type lattice of an extended grid".into(),
        ));
    }
    let values = (0..grid.len())
        .map(|i| f.value(grid.theta_index(i)) * g(grid.alpha(i)))
        .collect();
    Density::normalized(grid.clone(), values)
}

/// Density supported on the fiber {α = 0} with θ-profile `f`.
pub fn zero_aversion_density(f: &Density, grid: &Grid) -> Result<Density> {
    if !grid.is_extended() || !f.grid().same_types(grid) || f.grid().is_extended() {
        return Err(Error::GridMismatch(
            "needs f on the type lattice of an extended grid".into(),
        ));
    }
    let na = grid.n_alpha();
    let top_weight = 0.5 * grid.spacing()[grid.dim() - 1];
    let values = (0..grid.len())
        .map(|i| {
            if i % na == na - 1 {
                f.value(grid.theta_index(i)) / top_weight
            } else {
                0.0
            }
        })
        .collect();
    Density::new(grid.clone(), values)
}

/// θ-marginal ∫_A h dα by the α trapezoid rule.
pub fn marginalize(h: &Density) -> Result<Density> {
    let grid = h.grid();
    if !grid.is_extended() {
        return Err(Error::Dimension(
            "marginalize needs a density on an extended grid".into(),
        ));
    }
    let na = grid.n_alpha();
    let da = grid.spacing()[grid.dim() - 1];
    let values = h
        .values()
        .chunks(na)
        .map(|fiber| {
            let inner: f64 = fiber[1..na - 1].iter().sum();
            da * (inner + 0.5 * (fiber[0] + fiber[na - 1]))
        })
        .collect();
    Density::normalized(grid.type_grid(), values)
}

/// Tabulated cumulative distribution F(θ) = ∫_{θ_min}^θ f.
#[derive(Clone, Debug, PartialEq)]
pub struct Cdf {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl Cdf {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation, clamped outside the table.
    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.nodes.len();
        if theta <= self.nodes[0] {
            return self.values[0];
        }
        if theta >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nodes.partition_point(|&x| x <= theta).saturating_sub(1).min(n - 2);
        let t = (theta - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        self.values[k] + t * (self.values[k + 1] - self.values[k])
    }
}

/// Cumulative trapezoid integral of a 1D density.
pub fn cdf(f: &Density) -> Result<Cdf> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension(format!(
            "cdf needs a 1D density, got {} axes",
            grid.dim()
        )));
    }
    let nodes = grid.axis_nodes(0);
    let mut values = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    values.push(0.0);
    for k in 1..nodes.len() {
        acc += 0.5 * (nodes[k] - nodes[k - 1]) * (f.value(k - 1) + f.value(k));
        values.push(acc);
    }
    // the mass check bounds this rescale to 1e-10
    let total = acc;
    values.iter_mut().for_each(|v| *v /= total);
    Ok(Cdf { nodes, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_interval(n: usize) -> Grid {
        Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[n]).unwrap()
    }

    fn fig1_grid(nt: usize, na: usize) -> Grid {
        Grid::new(
            &TypeDomain::interval(1.0, 2.0).unwrap(),
            Some(AversionDomain::new(1.0).unwrap()),
            &[nt, na],
        )
        .unwrap()
    }

    #[test]
    fn build_grid_1d() {
        let g = unit_interval(3);
        assert_eq!(g.axis_nodes(0), vec![1.0, 1.5, 2.0]);
        assert_eq!(g.spacing(), &[0.5]);
    }

    #[test]
    fn build_grid_2d_corners() {
        let g = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[2, 2]).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.coords(0), &[1.0, 1.0]);
        assert_eq!(g.coords(1), &[1.0, 2.0]);
        assert_eq!(g.coords(2), &[2.0, 1.0]);
        assert_eq!(g.coords(3), &[2.0, 2.0]);
    }

    #[test]
    fn build_grid_rejects_single_node() {
        let err = Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[1]).unwrap_err();
        assert!(matches!(err, Error::InvalidResolution(1)));
        assert!(err.to_string().contains("invalid-resolution"));
    }

    #[test]
    fn endpoints_are_exact() {
        let g = Grid::new(&TypeDomain::interval(0.1, 0.7).unwrap(), None, &[7]).unwrap();
        assert_eq!(g.axis_value(0, 0), 0.1);
        assert_eq!(g.axis_value(0, 6), 0.7);
    }

    #[test]
    fn uniform_values() {
        let d = uniform_density(&unit_interval(3));
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let g = Grid::new(&TypeDomain::interval(0.0, 2.0).unwrap(), None, &[3]).unwrap();
        assert!(uniform_density(&g).values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let d = uniform_density(&fig1_grid(5, 3));
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((d.mass() - 1.0).abs() < NORMALIZATION_TOL);
    }

    #[test]
    fn fig1_values() {
        let g = fig1_grid(21, 21);
        let h = fig1_joint_density(0.5, &g).unwrap();
        // interior of R1 and R2
        let r1 = g.flat_index(&[g.nearest_on_axis(0, 1.2), g.nearest_on_axis(1, -0.2)]);
        let r2 = g.flat_index(&[g.nearest_on_axis(0, 1.8), g.nearest_on_axis(1, -0.8)]);
        assert_eq!(h.value(r1), 2.0);
        assert_eq!(h.value(r2), 2.0);

        let h = fig1_joint_density(0.25, &fig1_grid(21, 21)).unwrap();
        assert_eq!(h.value(g.flat_index(&[4, 18])), 4.0);
        assert!((h.value(g.flat_index(&[16, 4])) - 4.0 / 3.0).abs() < 1e-15);
        let off = g.flat_index(&[16, 19]);
        assert_eq!(h.value(off), 0.0);
    }

    #[test]
    fn fig1_marginal_is_uniform() {
        for a in [0.25, 0.5, 0.7] {
            let h = fig1_joint_density(a, &fig1_grid(21, 21)).unwrap();
            let f = marginalize(&h).unwrap();
            for &v in f.values() {
                assert!((v - 1.0).abs() < 1e-12, "a={a}: {v}");
            }
        }
    }

    #[test]
    fn fig1_rejects_misaligned_theta() {
        let err = fig1_joint_density(0.5, &fig1_grid(4, 11)).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
    }

    #[test]
    fn snapping() {
        let g = fig1_grid(3, 11);
        assert!((snap_kink(0.52, &g).unwrap() - 0.5).abs() < 1e-12);
        assert!(snap_kink(0.02, &g).is_err());
    }

    #[test]
    fn marginal_of_product_is_factor() {
        let tg = unit_interval(11);
        let f = exponential_density(&tg, 1.3).unwrap();
        let g = tg.extend(AversionDomain::new(2.0).unwrap(), 9).unwrap();
        let h = product_density(&f, &g, |a| 1.0 + a * a).unwrap();
        let m = marginalize(&h).unwrap();
        for (x, y) in m.values().iter().zip(f.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn marginal_of_zero_aversion_mass() {
        let tg = unit_interval(11);
        let f = exponential_density(&tg, -0.7).unwrap();
        let h = zero_aversion_density(&f, &tg.extend(AversionDomain::new(1.0).unwrap(), 5).unwrap()).unwrap();
        let m = marginalize(&h).unwrap();
        for (x, y) in m.values().iter().zip(f.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cdf_uniform() {
        let c = cdf(&uniform_density(&unit_interval(11))).unwrap();
        assert_eq!(c.values()[0], 0.0);
        assert!((c.values()[10] - 1.0).abs() < 1e-10);
        for (t, f) in c.nodes().iter().zip(c.values()) {
            assert!((f - (t - 1.0)).abs() < 1e-12);
        }
        assert!((c.eval(1.25) - 0.25).abs() < 1e-12);
        assert!(c.values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn cdf_rejects_2d() {
        let g = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[3, 3]).unwrap();
        assert!(matches!(cdf(&uniform_density(&g)), Err(Error::Dimension(_))));
    }
}
