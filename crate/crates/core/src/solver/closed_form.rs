use crate::cone::SurplusField;
use crate::domain::{cdf, Density};
use crate::error::{Error, Result};

/// Checks that make the pointwise 1D formula the true optimum.
#[derive(Clone, Debug, PartialEq)]
pub struct HazardReport {
    /// θ_min·f(θ_min); the boundary condition asks for >= 1.
    pub boundary: f64,
    /// Smallest grid value of 2 + (1-F)f′/f², which must stay >= 0.
    pub min_slope: f64,
    pub certified: bool,
}

/// Pointwise 1D solution: p = u := θ - (1-F)/f, v the running trapezoid
/// integral of u with v(θ_min) = 0.
///
/// The field is returned even when the hazard checks fail, but then it is
/// not certified (and may leave the cone).
pub fn closed_form_1d(f: &Density) -> Result<(SurplusField, HazardReport)> {
    let grid = f.grid();
    if grid.dim() != 1 {
        return Err(Error::Dimension("closed form needs a 1D density".into()));
    }
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    let big_f = cdf(f)?;
    let theta = grid.axis_nodes(0);
    let fv = f.values();
    let n = theta.len();
    let u: Vec<f64> = (0..n).map(|i| theta[i] - (1.0 - big_f.values()[i]) / fv[i]).collect();

    let mut v = vec![0.0; n];
    for i in 1..n {
        v[i] = v[i - 1] + 0.5 * (theta[i] - theta[i - 1]) * (u[i - 1] + u[i]);
    }

    let df = |i: usize| -> f64 {
        if i == 0 {
            (fv[1] - fv[0]) / (theta[1] - theta[0])
        } else if i == n - 1 {
            (fv[n - 1] - fv[n - 2]) / (theta[n - 1] - theta[n - 2])
        } else {
            (fv[i + 1] - fv[i - 1]) / (theta[i + 1] - theta[i - 1])
        }
    };
    let min_slope = (0..n)
        .map(|i| 2.0 + (1.0 - big_f.values()[i]) * df(i) / (fv[i] * fv[i]))
        .fold(f64::INFINITY, f64::min);
    let boundary = theta[0] * fv[0];
    let report = HazardReport {
        boundary,
        min_slope,
        // u(θ_min) >= 0 is the same as θ_min f(θ_min) >= 1 since F(θ_min) = 0
        certified: u[0] >= -1e-12 && min_slope >= -1e-12,
    };
    let field = SurplusField::new(grid.clone(), v, u, None)?;
    Ok((field, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{exponential_density, uniform_density, Grid, TypeDomain};

    fn line(lo: f64, hi: f64, n: usize) -> Grid {
        Grid::new(&TypeDomain::interval(lo, hi).unwrap(), None, &[n]).unwrap()
    }

    #[test]
    fn uniform_on_one_two() {
        let g = line(1.0, 2.0, 101);
        let (field, hz) = closed_form_1d(&uniform_density(&g)).unwrap();
        assert!(hz.certified);
        for i in 0..g.len() {
            let t = g.theta(i)[0];
            assert!((field.p[i] - 2.0 * (t - 1.0)).abs() < 1e-12);
            assert!((field.v[i] - (t - 1.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn hazard_fails_below_one() {
        let (_, hz) = closed_form_1d(&uniform_density(&line(0.5, 1.5, 21))).unwrap();
        assert!((hz.boundary - 0.5).abs() < 1e-12);
        assert!(!hz.certified);
    }

    #[test]
    fn exponential_slope_condition() {
        // 2 + (1-F) f'/f² stays positive for a mildly decreasing density
        let (_, hz) = closed_form_1d(&exponential_density(&line(1.0, 2.0, 51), 0.5).unwrap()).unwrap();
        assert!(hz.min_slope > 0.0);
    }

    #[test]
    fn zero_density_is_an_error() {
        let g = line(1.0, 2.0, 3);
        let f = Density::new(g, vec![4.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            closed_form_1d(&f),
            Err(Error::NonPositiveDensity { node: 1, .. })
        ));
    }
}
