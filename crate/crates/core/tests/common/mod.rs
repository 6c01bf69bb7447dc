#![allow(dead_code)]

use proptest::prelude::*;
use screenopt_core::cone::{
    assemble_constraints, check_feasibility_with, repair_with, Pairing, SurplusField, FEAS_TOL,
};
use screenopt_core::domain::{AversionDomain, Grid, TypeDomain};
use screenopt_core::Exec;

/// Small lattices: 1D, 2D, and either with an α axis.
pub fn small_grid() -> impl Strategy<Value = Grid> {
    (any::<bool>(), any::<bool>(), 2usize..=5, 2usize..=4).prop_map(|(two_d, ext, n, na)| {
        let (dom, mut res) = if two_d {
            (
                TypeDomain::rectangle([1.0, 0.5], [2.0, 1.5]).unwrap(),
                vec![n.min(4), 3],
            )
        } else {
            (TypeDomain::interval(1.0, 2.0).unwrap(), vec![n])
        };
        let av = ext.then(|| AversionDomain::new(1.0).unwrap());
        if ext {
            res.push(na);
        }
        Grid::new(&dom, av, &res).unwrap()
    })
}

/// Arbitrary (mostly infeasible) field on `grid`.
pub fn raw_field(grid: Grid) -> impl Strategy<Value = SurplusField> {
    let n = grid.len();
    let d = grid.type_dim();
    let ext = grid.is_extended();
    (
        prop::collection::vec(-1.0f64..3.0, n),
        prop::collection::vec(-1.0f64..3.0, n * d),
        prop::collection::vec(-0.5f64..2.0, if ext { n } else { 0 }),
    )
        .prop_map(move |(v, p, q)| SurplusField::new(grid.clone(), v, p, ext.then_some(q)).unwrap())
}

/// Two raw fields on a shared lattice and a mixing weight.
pub fn field_pair() -> impl Strategy<Value = (SurplusField, SurplusField, f64)> {
    small_grid().prop_flat_map(|g| (raw_field(g.clone()), raw_field(g), 0.0f64..=1.0))
}

fn full_repair(f: &SurplusField) -> SurplusField {
    let cs = assemble_constraints(&f.grid, f.mode(), Pairing::Full, None).unwrap();
    repair_with(f, &cs, Exec::Sequential).unwrap()
}

fn max_violation(f: &SurplusField) -> f64 {
    let cs = assemble_constraints(&f.grid, f.mode(), Pairing::Full, None).unwrap();
    check_feasibility_with(f, &cs, FEAS_TOL, Exec::Sequential)
        .unwrap()
        .max_violation
}

/// Repaired fields are feasible and a convex combination of two stays so.
pub fn cone_convexity(a: &SurplusField, b: &SurplusField, t: f64) -> Result<(), TestCaseError> {
    let (a, b) = (full_repair(a), full_repair(b));
    prop_assert!(max_violation(&a) <= FEAS_TOL);
    prop_assert!(max_violation(&b) <= FEAS_TOL);
    let mix = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(x, y)| t * x + (1.0 - t) * y).collect() };
    let c = SurplusField::new(
        a.grid.clone(),
        mix(&a.v, &b.v),
        mix(&a.p, &b.p),
        a.q.as_ref().map(|qa| mix(qa, b.q.as_ref().unwrap())),
    )
    .unwrap();
    let viol = max_violation(&c);
    prop_assert!(viol <= FEAS_TOL, "mixture violates by {viol:e}");
    Ok(())
}

/// Repairing a repaired field changes nothing.
pub fn repair_idempotent(f: &SurplusField) -> Result<(), TestCaseError> {
    let once = full_repair(f);
    let twice = full_repair(&once);
    prop_assert_eq!(once, twice);
    Ok(())
}
