use screenopt_core::cone::SurplusField;
use screenopt_core::diagnostics::{
    bunching_map, exclusion_region, extract_contracts, independence_check, min_y_property, Region, BUNCHING_RATIO,
};
use screenopt_core::domain::{
    exponential_density, fig1_joint_density, marginalize, product_density, uniform_density, AversionDomain, Density,
    Grid, TypeDomain,
};
use screenopt_core::objective::{assemble_classical, assemble_extended, CostSpec};
use screenopt_core::solver::{solve, SolveReport, SolverConfig};
use screenopt_core::Exec;

fn extended(n: usize, na: usize) -> Grid {
    let g = Grid::new(&TypeDomain::interval(1.0, 2.0).unwrap(), None, &[n]).unwrap();
    g.extend(AversionDomain::new(1.0).unwrap(), na).unwrap()
}

fn solve_ext(h: &Density) -> (SurplusField, SolveReport) {
    let qp = assemble_extended(h.grid(), h, CostSpec::default()).unwrap();
    solve(&qp, &SolverConfig::default()).unwrap()
}

fn solve_cls(f: &Density) -> SolveReport {
    let qp = assemble_classical(f.grid(), f, CostSpec::default()).unwrap();
    solve(&qp, &SolverConfig::default()).unwrap().1
}

#[test]
fn product_density_gives_classical_optimum() {
    let eg = extended(11, 6);
    let f = uniform_density(&eg.type_grid());
    let h = product_density(&f, &eg, |a| 1.0 + 0.5 * a).unwrap();
    let (w, rep) = solve_ext(&h);
    assert!(rep.converged);
    let jd = solve_cls(&marginalize(&h).unwrap()).objective;
    let ind = independence_check(&h, &w, rep.objective, jd, 1e-4).unwrap();
    assert!(ind.product, "{ind:?}");
    assert_eq!(ind.holds, Some(true), "{ind:?}");
}

#[test]
fn fig1_optimum_offers_lotteries_with_a_zero_y_participant() {
    let eg = extended(11, 11);
    let h = fig1_joint_density(0.5, &eg).unwrap();
    let (w, rep) = solve_ext(&h);
    assert!(rep.converged);
    let jd = solve_cls(&marginalize(&h).unwrap()).objective;
    assert!(rep.objective > jd + 1e-3, "{} vs {jd}", rep.objective);
    let menu = extract_contracts(&w, None, Exec::Sequential).unwrap();
    assert!(menu.offers_lotteries());
    let my = min_y_property(&w, 1e-6).unwrap();
    assert!(my.holds, "{my:?}");
    let ind = independence_check(&h, &w, rep.objective, jd, 1e-4).unwrap();
    assert_eq!(ind.holds, None);
    // each type does at least as well with its own contract as with any other
    let own = menu.surplus(Exec::Sequential);
    for (i, s) in own.iter().enumerate() {
        assert!((s - w.v[i].max(0.0)).abs() <= 1e-6, "node {i}: {s} vs {}", w.v[i]);
    }
}

#[test]
fn exponential_2d_segments_along_the_diagonal() {
    let n = 17;
    let g = Grid::new(&TypeDomain::rectangle([1.0, 1.0], [2.0, 2.0]).unwrap(), None, &[n, n]).unwrap();
    let f = exponential_density(&g, 2.0).unwrap();
    let qp = assemble_classical(&g, &f, CostSpec::default()).unwrap();
    let (v, rep) = solve(&qp, &SolverConfig::default()).unwrap();
    assert!(rep.converged);
    let tol = 1e-7 * v.v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let seg = bunching_map(&v, tol, BUNCHING_RATIO).unwrap();
    let diag: Vec<Region> = (0..n).map(|k| seg.labels[g.flat_index(&[k, k])]).collect();
    assert_eq!(diag[0], Region::Excluded);
    assert_eq!(diag[n - 1], Region::Screened);
    let first = |r| diag.iter().position(|&l| l == r);
    let (b, s) = (first(Region::Bunched).unwrap(), first(Region::Screened).unwrap());
    assert!(b < s, "{diag:?}");
    assert!(diag[..b].iter().all(|&l| l == Region::Excluded), "{diag:?}");
    assert!(exclusion_region(&v, tol).area_fraction(Region::Excluded) > 0.0);
}
