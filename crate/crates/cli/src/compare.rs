//! `compare`: objective and field differences between two run directories.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use screenopt_core::solver::SolveReport;

/// One run's field as read back from `field.csv`.
struct FieldTable {
    /// Number of type axes (p columns).
    d: usize,
    axes: usize,
    coords: Vec<Vec<f64>>,
    v: Vec<f64>,
    p: Vec<Vec<f64>>,
    q: Option<Vec<f64>>,
}

fn read_field(dir: &Path) -> Result<FieldTable> {
    let path = dir.join("field.csv");
    let mut rdr = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let axes = header.iter().filter(|h| h.starts_with("axis")).count();
    let d = header.iter().filter(|h| h.starts_with('p')).count();
    let has_q = header.last().is_some_and(|h| h == "q");
    let mut t = FieldTable {
        d,
        axes,
        coords: Vec::new(),
        v: Vec::new(),
        p: Vec::new(),
        q: has_q.then(Vec::new),
    };
    for rec in rdr.records() {
        let row: Vec<f64> = rec?.iter().map(str::parse).collect::<Result<_, _>>()?;
        t.coords.push(row[..axes].to_vec());
        t.v.push(row[axes]);
        t.p.push(row[axes + 1..axes + 1 + d].to_vec());
        if let Some(q) = t.q.as_mut() {
            q.push(row[axes + 1 + d]);
        }
    }
    Ok(t)
}

fn read_report(dir: &Path) -> Result<SolveReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub objective_a: f64,
    pub objective_b: f64,
    /// objective_b - objective_a.
    pub objective_delta: f64,
    pub max_q_a: f64,
    pub max_q_b: f64,
    /// sup |v_a - v_b| over matching nodes; an extended field is compared
    /// fiber by fiber against a classical one on the same type lattice.
    pub field_linf_v: f64,
    pub field_linf_p: f64,
}

fn key(theta: &[f64]) -> Vec<u64> {
    theta.iter().map(|x| x.to_bits()).collect()
}

fn max_abs(q: &Option<Vec<f64>>) -> f64 {
    q.as_deref().unwrap_or(&[]).iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn compare(a: &Path, b: &Path) -> Result<Comparison> {
    let (ra, rb) = (read_report(a)?, read_report(b)?);
    let (fa, fb) = (read_field(a)?, read_field(b)?);
    if fa.d != fb.d {
        bail!("incompatible grids: {}D against {}D types", fa.d, fb.d);
    }
    let d = fa.d;
    // index the run with fewer axes by its type coordinates
    let (small, big) = if fa.axes <= fb.axes { (&fa, &fb) } else { (&fb, &fa) };
    if big.axes > d + 1 || small.axes > d + 1 {
        bail!("unexpected field layout");
    }
    let lookup: HashMap<Vec<u64>, usize> = if small.axes == big.axes {
        HashMap::new()
    } else {
        small
            .coords
            .iter()
            .enumerate()
            .map(|(i, c)| (key(&c[..d]), i))
            .collect()
    };
    if small.axes == big.axes && (small.coords != big.coords) {
        bail!("incompatible grids: node coordinates differ");
    }
    let (mut dv, mut dp) = (0.0f64, 0.0f64);
    for j in 0..big.v.len() {
        let i = if small.axes == big.axes {
            j
        } else {
            *lookup
                .get(&key(&big.coords[j][..d]))
                .with_context(|| format!("incompatible grids: no match for node {:?}", big.coords[j]))?
        };
        dv = dv.max((small.v[i] - big.v[j]).abs());
        for k in 0..d {
            dp = dp.max((small.p[i][k] - big.p[j][k]).abs());
        }
    }
    if small.axes != big.axes && (lookup.len() != small.v.len() || big.v.len() % small.v.len() != 0) {
        bail!("incompatible grids: type lattices differ");
    }
    Ok(Comparison {
        objective_a: ra.objective,
        objective_b: rb.objective,
        objective_delta: rb.objective - ra.objective,
        max_q_a: max_abs(&fa.q),
        max_q_b: max_abs(&fb.q),
        field_linf_v: dv,
        field_linf_p: dp,
    })
}
