//! The `run` pipeline: solve, then write field, menu, segmentation,
//! diagnostics and certificates.

use std::fs;
use std::path::Path;

use anyhow::Result;
use serde_json::{json, Map, Value};

use screenopt_core::cone::{
    assemble_constraints, check_feasibility_with, default_q_max, Pairing, SurplusField, FEAS_TOL,
};
use screenopt_core::diagnostics::{
    bunching_map, exclusion_region, extract_contracts, independence_check, min_y_property, Region, BUNCHING_RATIO,
    PARTICIPATION_TOL,
};
use screenopt_core::domain::{marginalize, Density};
use screenopt_core::io::{
    to_file, write_contracts, write_density, write_feasibility, write_field, write_json, write_segmentation,
};
use screenopt_core::objective::{assemble_classical, CostSpec};
use screenopt_core::perturbation::{
    default_direction, find_profitable_rectangle, first_variation_1d, first_variation_2d, Certificate, PerturbationSpec,
};
use screenopt_core::solver::{closed_form_1d, solve, SolverConfig};

use crate::config::{DensitySpec, Problem, ProblemKind};

/// Objective tolerance for the independence and min-y checks.
const CHECK_TOL: f64 = 1e-4;

pub struct RunOutcome {
    pub converged: bool,
    pub objective: f64,
}

fn surplus_tol(field: &SurplusField) -> f64 {
    PARTICIPATION_TOL * field.v.iter().fold(1.0f64, |m, &x| m.max(x.abs()))
}

/// Discrete classical optimum for a θ-density, plus the field the 1D
/// certificate is built on: the closed form when its hazard checks pass,
/// the discrete optimum otherwise.
fn classical_optimum(f: &Density, cost: CostSpec, solver: &SolverConfig) -> Result<(SurplusField, f64)> {
    let qp = assemble_classical(f.grid(), f, cost)?;
    let (v, rep) = solve(&qp, solver)?;
    if f.grid().dim() == 1 && cost.lambda() == 0.0 {
        if let Ok((cf, hz)) = closed_form_1d(f) {
            if hz.certified {
                return Ok((cf, rep.objective));
            }
        }
    }
    Ok((v, rep.objective))
}

pub fn run(problem: &Problem, out: &Path) -> Result<RunOutcome> {
    let cfg = &problem.config;
    let exec = cfg.solver.exec;
    fs::create_dir_all(out)?;
    let (field, report) = solve(&problem.qp, &cfg.solver)?;
    to_file(out.join("report.json"), |w| write_json(w, &report))?;

    if cfg.outputs.fields {
        to_file(out.join("field.csv"), |w| write_field(w, &field))?;
        to_file(out.join("density.csv"), |w| write_density(w, &problem.density))?;
        let cs = assemble_constraints(&problem.grid, field.mode(), Pairing::Full, default_q_max(&problem.grid))?;
        let feas = check_feasibility_with(&field, &cs, FEAS_TOL, exec)?;
        to_file(out.join("feasibility.csv"), |w| write_feasibility(w, &feas))?;
    }

    let tol = surplus_tol(&field);
    let mut diag = Map::new();
    let menu = extract_contracts(&field, Some(tol), exec)?;
    diag.insert(
        "participants".into(),
        json!(menu.contracts.iter().filter(|c| c.participates).count()),
    );
    diag.insert("lottery_nodes".into(), json!(menu.lottery_nodes().len()));
    if cfg.outputs.contracts {
        to_file(out.join("contracts.csv"), |w| write_contracts(w, &menu))?;
    }

    let exclusion = exclusion_region(&field, tol);
    diag.insert(
        "exclusion_area_fraction".into(),
        json!(exclusion.area_fraction(Region::Excluded)),
    );
    let seg = if cfg.problem == ProblemKind::Classical2d {
        let b = bunching_map(&field, tol, BUNCHING_RATIO)?;
        diag.insert("bunched_nodes".into(), json!(b.count(Region::Bunched)));
        b
    } else {
        exclusion
    };
    if cfg.outputs.segmentation {
        to_file(out.join("segmentation.csv"), |w| write_segmentation(w, &seg))?;
    }

    let cost = CostSpec::new(cfg.lambda)?;
    let mut vbar_1d = None;
    if cfg.problem == ProblemKind::Extended {
        let f = marginalize(&problem.density)?;
        let (vbar, jd) = classical_optimum(&f, cost, &cfg.solver)?;
        diag.insert("classical_objective".into(), json!(jd));
        diag.insert("min_y".into(), serde_json::to_value(min_y_property(&field, 1e-6)?)?);
        let ind = independence_check(&problem.density, &field, report.objective, jd, CHECK_TOL)?;
        diag.insert("independence".into(), serde_json::to_value(ind)?);
        if problem.grid.type_dim() == 1 {
            vbar_1d = Some(vbar);
        }
    }

    if cfg.outputs.certificates {
        let cert = match (cfg.problem, vbar_1d) {
            (ProblemKind::Extended, Some(vbar)) => certificate_1d(problem, &vbar)?,
            (ProblemKind::Classical2d, _) if cfg.certificate.is_some() => {
                let c = certificate_2d(problem, &field)?;
                diag.insert("rectangle_found".into(), json!(c.is_some()));
                c
            }
            _ => None,
        };
        if let Some(cert) = cert {
            to_file(out.join("certificate.json"), |w| write_json(w, &cert))?;
        }
    }
    to_file(out.join("diagnostics.json"), |w| write_json(w, &Value::Object(diag)))?;

    Ok(RunOutcome {
        converged: report.converged,
        objective: report.objective,
    })
}

fn certificate_1d(problem: &Problem, vbar: &SurplusField) -> Result<Option<Certificate>> {
    let cfg = &problem.config;
    let spec_cfg = cfg.certificate.clone();
    let a = spec_cfg.as_ref().and_then(|c| c.a).or(match cfg.density {
        DensitySpec::Fig1 { a } => Some(a),
        _ => None,
    });
    let Some(a) = a else {
        return Ok(None);
    };
    let kappa = problem.grid.aversion().expect("extended grid").kappa();
    let kappa = spec_cfg.as_ref().and_then(|c| c.kappa).unwrap_or(kappa);
    let eps = spec_cfg.map_or(1e-3, |c| c.epsilon);
    let spec = PerturbationSpec::new(a, kappa, eps, vec![1.0])?;
    let fv = first_variation_1d(vbar, &problem.density, &spec)?;
    Ok(Some(Certificate::one_d(fv.jprime0, &spec)))
}

fn certificate_2d(problem: &Problem, vbar: &SurplusField) -> Result<Option<Certificate>> {
    let c = problem.config.certificate.as_ref().expect("checked by caller");
    let e = default_direction(2);
    let Some(rect) = find_profitable_rectangle(vbar, [e[0], e[1]], None)? else {
        return Ok(None);
    };
    let spec =
        PerturbationSpec::new(c.a.unwrap(), c.kappa.unwrap(), c.epsilon, e)?.with_support(c.support.unwrap(), rect)?;
    let fv = first_variation_2d(vbar, &spec)?;
    Ok(Some(Certificate::two_d(fv.lower_bound, &spec)))
}
