//! Reading solved fields as economics: the contract menu, who is excluded,
//! who is bunched, and the structural checks on extended optima.

use serde::{Deserialize, Serialize};

use crate::cone::{assemble_constraints, check_feasibility_with, Mode, Pairing, SurplusField, FEAS_TOL};
use crate::domain::{marginalize, Density, Grid};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::perturbation::p_jacobian;

/// Relative participation tolerance; scaled by max(1, max v).
pub const PARTICIPATION_TOL: f64 = 1e-7;

/// Ratio σ_min/σ_max of the gradient map below which a node counts as bunched.
pub const BUNCHING_RATIO: f64 = 0.05;

/// Largest sup-norm gap between h and the product of its marginals that
/// still counts as a product density.
pub const PRODUCT_TOL: f64 = 1e-10;

/// The offer made to one type: good quality x, undesirable quality y,
/// tariff t.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Contract {
    pub x: Vec<f64>,
    pub y: f64,
    pub t: f64,
    pub participates: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractMenu {
    pub grid: Grid,
    pub contracts: Vec<Contract>,
    /// Surplus level separating participants from the excluded.
    pub tol: f64,
}

impl ContractMenu {
    /// Participants offered a strictly positive undesirable quality.
    pub fn lottery_nodes(&self) -> Vec<usize> {
        self.contracts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.participates && c.y > self.tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn offers_lotteries(&self) -> bool {
        !self.lottery_nodes().is_empty()
    }

    /// Surplus each type gets by picking its best contract (or staying out).
    pub fn surplus(&self, exec: Exec) -> Vec<f64> {
        let grid = &self.grid;
        let offered: Vec<&Contract> = self.contracts.iter().filter(|c| c.participates).collect();
        exec.map(grid.len(), |j| {
            let (theta, alpha) = (grid.theta(j), grid.alpha(j));
            offered
                .iter()
                .map(|c| c.x.iter().zip(theta).map(|(x, th)| x * th).sum::<f64>() + alpha * c.y - c.t)
                .fold(0.0, f64::max)
        })
    }
}

fn participation_tol(field: &SurplusField) -> f64 {
    PARTICIPATION_TOL * field.v.iter().fold(1.0f64, |m, &x| m.max(x.abs()))
}

/// Contracts implied by a feasible field: x = p, y = q and
/// t = θ·p + α·q − v. Excluded types get the null contract.
pub fn extract_contracts(field: &SurplusField, tol: Option<f64>, exec: Exec) -> Result<ContractMenu> {
    let cs = assemble_constraints(&field.grid, field.mode(), Pairing::Full, None)?;
    let rep = check_feasibility_with(field, &cs, FEAS_TOL, exec)?;
    if !rep.feasible {
        return Err(Error::Infeasible {
            max_violation: rep.max_violation,
        });
    }
    let tol = tol.unwrap_or_else(|| participation_tol(field));
    let grid = &field.grid;
    let d = grid.type_dim();
    let contracts = (0..field.len())
        .map(|i| {
            if field.v[i] <= tol {
                return Contract {
                    x: vec![0.0; d],
                    y: 0.0,
                    t: 0.0,
                    participates: false,
                };
            }
            let (x, y) = (field.p_at(i).to_vec(), field.q_at(i));
            let t = x.iter().zip(grid.theta(i)).map(|(a, b)| a * b).sum::<f64>() + grid.alpha(i) * y - field.v[i];
            Contract {
                x,
                y,
                t,
                participates: true,
            }
        })
        .collect();
    Ok(ContractMenu {
        grid: grid.clone(),
        contracts,
        tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Excluded,
    Bunched,
    Screened,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Excluded => "excluded",
            Region::Bunched => "bunched",
            Region::Screened => "screened",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMap {
    pub grid: Grid,
    pub labels: Vec<Region>,
}

impl SegmentationMap {
    pub fn count(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&l| l == r).count()
    }

    /// Fraction of lattice cells whose corners all carry label `r`.
    pub fn area_fraction(&self, r: Region) -> f64 {
        let n = self.grid.n();
        let dim = n.len();
        let cells: Vec<usize> = n.iter().map(|k| k - 1).collect();
        let total: usize = cells.iter().product();
        let mut inside = 0usize;
        let mut idx = vec![0usize; dim];
        let mut corner = vec![0usize; dim];
        for c in 0..total {
            let mut rem = c;
            for k in (0..dim).rev() {
                idx[k] = rem % cells[k];
                rem /= cells[k];
            }
            let all = (0..1usize << dim).all(|mask| {
                for k in 0..dim {
                    corner[k] = idx[k] + ((mask >> k) & 1);
                }
                self.labels[self.grid.flat_index(&corner)] == r
            });
            inside += usize::from(all);
        }
        inside as f64 / total as f64
    }
}

/// Ω₀ = {v ≤ tol}; every other node is labelled screened.
pub fn exclusion_region(field: &SurplusField, tol: f64) -> SegmentationMap {
    let labels = field
        .v
        .iter()
        .map(|&v| if v <= tol { Region::Excluded } else { Region::Screened })
        .collect();
    SegmentationMap {
        grid: field.grid.clone(),
        labels,
    }
}

/// Splits the participants of a 2D classical field into bunched nodes, where
/// the gradient map is locally rank deficient (σ_min ≤ ratio·σ_max of the
/// symmetrized difference Jacobian), and screened nodes.
pub fn bunching_map(field: &SurplusField, tol: f64, ratio: f64) -> Result<SegmentationMap> {
    if field.mode() != Mode::Classical || field.grid.type_dim() != 2 {
        return Err(Error::Dimension("bunching map needs a classical 2D field".into()));
    }
    let jac = p_jacobian(field);
    let labels = (0..field.len())
        .map(|i| {
            if field.v[i] <= tol {
                return Region::Excluded;
            }
            let j = &jac[4 * i..4 * i + 4];
            let (a, b, c) = (j[0], 0.5 * (j[1] + j[2]), j[3]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let (s1, s2) = ((mid + rad).abs(), (mid - rad).abs());
            if s1.min(s2) <= ratio * s1.max(s2) {
                Region::Bunched
            } else {
                Region::Screened
            }
        })
        .collect();
    Ok(SegmentationMap {
        grid: field.grid.clone(),
        labels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndependenceReport {
    /// sup |h − f⊗g| over the nodes.
    pub product_gap: f64,
    pub product: bool,
    pub max_q: f64,
    pub objective_gap: f64,
    /// `None` when h is not a product (no assertion is made).
    pub holds: Option<bool>,
}

/// When h factorizes, the extended optimum should carry no aversion slope
/// and match the classical value. `jr` and `jd` are the extended and
/// classical optimal values.
pub fn independence_check(
    h: &Density,
    extended: &SurplusField,
    jr: f64,
    jd: f64,
    tol: f64,
) -> Result<IndependenceReport> {
    let grid = h.grid();
    if !grid.is_extended() || extended.grid != *grid {
        return Err(Error::GridMismatch(
            "independence check needs h and the field on one extended grid".into(),
        ));
    }
    let f = marginalize(h)?;
    let na = grid.n_alpha();
    let wt = grid.type_grid().quad_weights();
    let mut g = vec![0.0; na];
    for (i, &hv) in h.values().iter().enumerate() {
        g[i % na] += wt[grid.theta_index(i)] * hv;
    }
    let product_gap = h
        .values()
        .iter()
        .enumerate()
        .map(|(i, &hv)| (hv - f.value(grid.theta_index(i)) * g[i % na]).abs())
        .fold(0.0, f64::max);
    let product = product_gap <= PRODUCT_TOL;
    let max_q = extended
        .q
        .as_deref()
        .unwrap_or(&[])
        .iter()
        .fold(0.0f64, |m, &q| m.max(q.abs()));
    let objective_gap = (jr - jd).abs() / jd.abs().max(1.0);
    Ok(IndependenceReport {
        product_gap,
        product,
        max_q,
        objective_gap,
        holds: product.then_some(max_q <= tol && objective_gap <= tol),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinYReport {
    /// Smallest q among participants; `None` if nobody participates.
    pub min_q: Option<f64>,
    pub holds: bool,
}

/// At an extended optimum some participant buys no undesirable quality.
pub fn min_y_property(field: &SurplusField, tol: f64) -> Result<MinYReport> {
    let q = field
        .q
        .as_deref()
        .ok_or_else(|| Error::Dimension("min-y property needs an extended field".into()))?;
    let ptol = participation_tol(field);
    let min_q = (0..field.len())
        .filter(|&i| field.v[i] > ptol)
        .map(|i| q[i])
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))));
    Ok(MinYReport {
        min_q,
        holds: min_q.is_none_or(|m| m <= tol),
    })
}
