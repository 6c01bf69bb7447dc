//! CSV and JSON exchange formats. Every CSV has a header row and one line
//! per lattice node in storage order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::cone::{FeasibilityReport, SurplusField};
use crate::diagnostics::{ContractMenu, SegmentationMap};
use crate::domain::{Density, Grid};
use crate::error::{Error, Result};

/// Coordinates read back from a CSV must match the lattice this closely.
const COORD_TOL: f64 = 1e-9;

fn num(x: f64) -> String {
    x.to_string()
}

fn axes(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| format!("{prefix}{i}"))
}

/// `axis0,...,axisK,value`
pub fn write_density<W: Write>(w: W, density: &Density) -> Result<()> {
    let grid = density.grid();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = axes("axis", grid.dim()).collect();
    header.push("value".into());
    out.write_record(&header)?;
    for i in 0..grid.len() {
        let mut row: Vec<String> = grid.coords(i).iter().map(|&x| num(x)).collect();
        row.push(num(density.value(i)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads nodal density values for `grid`; rows must follow the grid's
/// storage order. The values are renormalized.
pub fn read_density<R: Read>(r: R, grid: &Grid) -> Result<Density> {
    let mut rdr = csv::Reader::from_reader(r);
    let dim = grid.dim();
    if rdr.headers()?.len() != dim + 1 {
        return Err(Error::GridMismatch(format!(
            "density CSV has {} columns, expected {}",
            rdr.headers()?.len(),
            dim + 1
        )));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i >= grid.len() {
            return Err(Error::GridMismatch(format!(
                "density CSV has more than {} rows",
                grid.len()
            )));
        }
        let parsed: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidDensity(format!("row {}: {e}", i + 1)))?;
        let c = grid.coords(i);
        if (0..dim).any(|k| (parsed[k] - c[k]).abs() > COORD_TOL * (1.0 + c[k].abs())) {
            return Err(Error::GridMismatch(format!(
                "row {} is not at lattice node {c:?}",
                i + 1
            )));
        }
        values.push(parsed[dim]);
    }
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "density CSV has {} rows, grid has {} nodes",
            values.len(),
            grid.len()
        )));
    }
    Density::normalized(grid.clone(), values)
}

/// `pair_i,pair_j,violation` for the worst violations of a report.
pub fn write_feasibility<W: Write>(w: W, report: &FeasibilityReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["pair_i", "pair_j", "violation"])?;
    for v in &report.worst {
        out.write_record([v.i.to_string(), v.j.to_string(), num(v.violation)])?;
    }
    out.flush()?;
    Ok(())
}

/// `axis...,v,p...,q`, with the q column only on extended grids.
pub fn write_field<W: Write>(w: W, field: &SurplusField) -> Result<()> {
    let grid = &field.grid;
    let d = grid.type_dim();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = axes("axis", grid.dim()).collect();
    header.push("v".into());
    header.extend(axes("p", d));
    if field.q.is_some() {
        header.push("q".into());
    }
    out.write_record(&header)?;
    for i in 0..grid.len() {
        let mut row: Vec<String> = grid.coords(i).iter().map(|&x| num(x)).collect();
        row.push(num(field.v[i]));
        row.extend(field.p_at(i).iter().map(|&x| num(x)));
        if let Some(q) = &field.q {
            row.push(num(q[i]));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `theta...,alpha,x...,y,t,participates`; α is 0 on type-only grids.
pub fn write_contracts<W: Write>(w: W, menu: &ContractMenu) -> Result<()> {
    let grid = &menu.grid;
    let d = grid.type_dim();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = axes("theta", d).collect();
    header.push("alpha".into());
    header.extend(axes("x", d));
    header.extend(["y".into(), "t".into(), "participates".into()]);
    out.write_record(&header)?;
    for (i, c) in menu.contracts.iter().enumerate() {
        let mut row: Vec<String> = grid.theta(i).iter().map(|&x| num(x)).collect();
        row.push(num(grid.alpha(i)));
        row.extend(c.x.iter().map(|&x| num(x)));
        row.extend([num(c.y), num(c.t), c.participates.to_string()]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `theta...,label` with labels excluded, bunched or screened.
pub fn write_segmentation<W: Write>(w: W, seg: &SegmentationMap) -> Result<()> {
    let grid = &seg.grid;
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = axes("theta", grid.type_dim()).collect();
    header.push("label".into());
    out.write_record(&header)?;
    for (i, l) in seg.labels.iter().enumerate() {
        let mut row: Vec<String> = grid.theta(i).iter().map(|&x| num(x)).collect();
        row.push(l.label().into());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `f`.
pub fn to_file<F>(path: impl AsRef<Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{assemble_constraints, check_feasibility, Mode, Pairing};
    use crate::diagnostics::{exclusion_region, extract_contracts};
    use crate::domain::{exponential_density, AversionDomain, TypeDomain};
    use crate::exec::Exec;
    use crate::solver::SolveReport;

    fn grid2() -> Grid {
        Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[3, 4]).unwrap()
    }

    fn lines(buf: &[u8]) -> Vec<String> {
        String::from_utf8(buf.to_vec())
            .unwrap()
            .lines()
            .map(str::to_owned)
            .collect()
    }

    #[test]
    fn density_round_trip() {
        let g = grid2();
        let f = exponential_density(&g, 1.5).unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, &f).unwrap();
        let l = lines(&buf);
        assert_eq!(l[0], "axis0,axis1,value");
        assert_eq!(l.len(), 13);
        assert!(l[1].starts_with("1,1,"));
        let back = read_density(&buf[..], &g).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() <= 1e-14 * b);
        }
    }

    #[test]
    fn density_on_wrong_grid() {
        let g = grid2();
        let mut buf = Vec::new();
        write_density(&mut buf, &exponential_density(&g, 1.0).unwrap()).unwrap();
        let other = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[4, 3]).unwrap();
        assert!(matches!(read_density(&buf[..], &other), Err(Error::GridMismatch(_))));
        let small = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[2, 2]).unwrap();
        assert!(read_density(&buf[..], &small).is_err());
    }

    #[test]
    fn field_columns() {
        let g = grid2();
        let f = SurplusField::from_fn(&g, |t| t[0] + t[1], |_, p| p.fill(1.0));
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(lines(&buf)[0], "axis0,axis1,v,p0,p1");
        assert_eq!(lines(&buf)[1], "1,1,2,1,1");
        let eg = Grid::new(
            &TypeDomain::interval(1.0, 2.0).unwrap(),
            Some(AversionDomain::new(1.0).unwrap()),
            &[2, 2],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &SurplusField::zeros(&eg)).unwrap();
        assert_eq!(lines(&buf)[0], "axis0,axis1,v,p0,q");
        assert_eq!(lines(&buf)[1], "1,-1,0,0,0");
    }

    #[test]
    fn contract_and_segmentation_columns() {
        let g = Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[3]).unwrap();
        let f = SurplusField::from_fn(&g, |t| (t[0] - 1.0).powi(2), |t, p| p[0] = 2.0 * (t[0] - 1.0));
        let menu = extract_contracts(&f, None, Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        write_contracts(&mut buf, &menu).unwrap();
        let l = lines(&buf);
        assert_eq!(l[0], "theta0,alpha,x0,y,t,participates");
        assert_eq!(l[1], "1,0,0,0,0,false");
        assert_eq!(l[3], "2,0,2,0,3,true");
        let mut buf = Vec::new();
        write_segmentation(&mut buf, &exclusion_region(&f, 1e-9)).unwrap();
        assert_eq!(
            lines(&buf),
            ["theta0,label", "1,excluded", "1.5,screened", "2,screened"]
        );
    }

    #[test]
    fn feasibility_rows() {
        let g = Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[3]).unwrap();
        let f = SurplusField::from_fn(&g, |t| 2.0 - t[0], |_, p| p[0] = -1.0);
        let cs = assemble_constraints(&g, Mode::Classical, Pairing::Full, None).unwrap();
        let rep = check_feasibility(&f, &cs, 1e-8).unwrap();
        let mut buf = Vec::new();
        write_feasibility(&mut buf, &rep).unwrap();
        let l = lines(&buf);
        assert_eq!(l[0], "pair_i,pair_j,violation");
        assert_eq!(l.len(), rep.worst.len() + 1);
        assert!(l.len() > 1);
    }

    #[test]
    fn report_keys() {
        let rep = SolveReport {
            objective: 1.0,
            iters: 3,
            max_violation: 0.0,
            q_cap_bound: false,
            seconds: 0.5,
            converged: true,
            working_pairs: 7,
        };
        let mut buf = Vec::new();
        write_json(&mut buf, &rep).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["iters", "max_violation", "objective", "q_cap_bound", "seconds"]);
    }
}
