//! Primal-dual interior-point kernel for the reduced QP.
//!
//! Solves `min ½xᵀPx + gᵀx  s.t.  Gx >= 0, 0 <= x <= u` for diagonal P,
//! where G stacks normalized pair rows `v_b - v_a - p_a·Δθ - q_a·Δα`.
//! Unknowns are interleaved per node, `[v, p_1..p_d, (q)]`, so for a
//! local set of pairs the normal matrix `P + GᵀDG + diag` is banded and
//! each Newton step costs one banded Cholesky. Steps follow Mehrotra's
//! predictor-corrector rule.

use super::banded::Band;
use crate::exec::Exec;

/// Iterative refinement passes per normal-equation solve.
const REFINE_STEPS: usize = 2;
/// Scaled residual accepted when the iteration stalls before `tol`.
const REDUCED_TOL: f64 = 1e-6;
/// Iterations without improvement before the iteration gives up.
const STALL_ITERS: usize = 15;

pub(crate) struct Rows {
    d: usize,
    ext: bool,
    src: Vec<u32>,
    dst: Vec<u32>,
    scale: Vec<f64>,
    /// Per row: Δθ (d values) then Δα when extended.
    delta: Vec<f64>,
}

impl Rows {
    /// `coords` holds `d` θ-values then α (when extended) per node.
    pub fn new(d: usize, ext: bool, coords: &[f64], pairs: &[(u32, u32)]) -> Self {
        let w = d + usize::from(ext);
        let mut rows = Self {
            d,
            ext,
            src: Vec::with_capacity(pairs.len()),
            dst: Vec::with_capacity(pairs.len()),
            scale: Vec::with_capacity(pairs.len()),
            delta: Vec::with_capacity(pairs.len() * w),
        };
        for &(a, b) in pairs {
            let (ca, cb) = (&coords[a as usize * w..][..w], &coords[b as usize * w..][..w]);
            let mut norm2 = 2.0;
            for (x, y) in ca.iter().zip(cb) {
                rows.delta.push(y - x);
                norm2 += (y - x) * (y - x);
            }
            rows.src.push(a);
            rows.dst.push(b);
            rows.scale.push(1.0 / f64::sqrt(norm2));
        }
        rows
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    fn width(&self) -> usize {
        self.d + usize::from(self.ext)
    }

    fn block(&self) -> usize {
        1 + self.width()
    }

    /// Nonzeros of row `r` as (column, coefficient).
    fn entries(&self, r: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let sb = self.block();
        let (a, b) = (self.src[r] as usize, self.dst[r] as usize);
        let e = self.scale[r];
        out.push((b * sb, e));
        out.push((a * sb, -e));
        for (k, dk) in self.delta[r * self.width()..][..self.width()].iter().enumerate() {
            out.push((a * sb + 1 + k, -e * dk));
        }
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let sb = self.block();
        let (a, b) = (self.src[r] as usize, self.dst[r] as usize);
        let mut s = x[b * sb] - x[a * sb];
        for (k, dk) in self.delta[r * self.width()..][..self.width()].iter().enumerate() {
            s -= x[a * sb + 1 + k] * dk;
        }
        self.scale[r] * s
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64], exec: Exec) {
        exec.fill(out, |r, z| *z = self.row_dot(r, x));
    }

    /// `out += Gᵀy`.
    fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        let mut ent = Vec::new();
        for (r, yr) in y.iter().enumerate() {
            self.entries(r, &mut ent);
            for &(c, e) in &ent {
                out[c] += e * yr;
            }
        }
    }

    fn bandwidth(&self) -> usize {
        let sb = self.block();
        (0..self.len())
            .map(|r| (self.src[r] as usize).abs_diff(self.dst[r] as usize) * sb + sb - 1)
            .max()
            .unwrap_or(0)
    }
}

pub(crate) struct Qp {
    /// Diagonal of P.
    pub p: Vec<f64>,
    pub g: Vec<f64>,
    /// Upper bounds, `INFINITY` where absent.
    pub upper: Vec<f64>,
    pub rows: Rows,
}

pub(crate) struct Settings {
    pub max_iters: usize,
    pub tol: f64,
    pub step_fraction: f64,
    pub exec: Exec,
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
}

struct Point {
    x: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Dir {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dy: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut t = 1.0f64;
    for (a, b) in v.iter().zip(dv) {
        if *b < 0.0 {
            t = t.min(-a / b);
        }
    }
    t
}

/// Orders iterates: an acceptable dual residual first, then the primal merit.
fn rank(merit: f64, dual: f64) -> (bool, f64) {
    if dual <= REDUCED_TOL {
        (false, merit)
    } else {
        (true, merit.max(dual))
    }
}

pub(crate) fn solve(qp: &Qp, set: &Settings) -> Outcome {
    let m = qp.g.len();
    let nr = qp.rows.len();
    let exec = set.exec;
    let bounded: Vec<bool> = qp.upper.iter().map(|u| u.is_finite()).collect();
    let slack_u = |x: &[f64], k: usize| if bounded[k] { qp.upper[k] - x[k] } else { 1.0 };

    let mut pt = Point {
        x: (0..m)
            .map(|k| if bounded[k] { 0.5f64.min(0.5 * qp.upper[k]) } else { 1.0 })
            .collect(),
        s: vec![1.0; nr],
        y: vec![1.0; nr],
        zl: vec![1.0; m],
        zu: (0..m).map(|k| if bounded[k] { 1.0 } else { 0.0 }).collect(),
    };
    let n_comp = (nr + m + bounded.iter().filter(|b| **b).count()) as f64;
    let g_norm = qp.g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let bw = qp.rows.bandwidth();

    let mut gx = vec![0.0; nr];
    let mut ent = Vec::with_capacity(8);
    let mut iters = 0;
    let mut best = (f64::INFINITY, f64::INFINITY, pt.x.clone());
    let mut best_merit = f64::INFINITY;
    let mut since_best = 0;
    while iters < set.max_iters {
        // residuals
        qp.rows.mul(&pt.x, &mut gx, exec);
        let r_p: Vec<f64> = gx.iter().zip(&pt.s).map(|(a, b)| a - b).collect();
        let mut r_d: Vec<f64> = (0..m)
            .map(|k| qp.p[k] * pt.x[k] + qp.g[k] - pt.zl[k] + pt.zu[k])
            .collect();
        let neg_y: Vec<f64> = pt.y.iter().map(|y| -y).collect();
        qp.rows.mul_t_add(&neg_y, &mut r_d);
        let comp = pt.s.iter().zip(&pt.y).map(|(a, b)| a * b).sum::<f64>()
            + pt.x.iter().zip(&pt.zl).map(|(a, b)| a * b).sum::<f64>()
            + (0..m)
                .filter(|&k| bounded[k])
                .map(|k| slack_u(&pt.x, k) * pt.zu[k])
                .sum::<f64>();
        let mu = comp / n_comp;
        let x_norm = pt.x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let obj: f64 = (0..m)
            .map(|k| 0.5 * qp.p[k] * pt.x[k] * pt.x[k] + qp.g[k] * pt.x[k])
            .sum();
        let rp_inf = r_p.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let rd_inf = r_d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let dual = rd_inf / (1.0 + g_norm);
        // the dual residual floors out on degenerate problems while the
        // primal iterate keeps improving, so progress is judged without it
        let merit = (rp_inf / (1.0 + x_norm)).max(comp / (1.0 + obj.abs()));
        if !(merit.is_finite() && dual.is_finite()) {
            break;
        }
        if rank(merit, dual) < rank(best.0, best.1) {
            best = (merit, dual, pt.x.clone());
        }
        if merit < best_merit {
            best_merit = merit;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if merit.max(dual) <= set.tol || since_best >= STALL_ITERS {
            break;
        }
        iters += 1;

        // normal matrix
        let mut band = Band::zeros(m, bw);
        let dy_w: Vec<f64> = pt.y.iter().zip(&pt.s).map(|(y, s)| y / s).collect();
        let mut diag: Vec<f64> = (0..m).map(|k| qp.p[k] + pt.zl[k] / pt.x[k]).collect();
        for k in 0..m {
            if bounded[k] {
                diag[k] += pt.zu[k] / slack_u(&pt.x, k);
            }
            band.add(k, k, diag[k]);
        }
        for r in 0..nr {
            qp.rows.entries(r, &mut ent);
            for (i, &(ci, ei)) in ent.iter().enumerate() {
                for &(cj, ej) in &ent[..=i] {
                    band.add(ci, cj, dy_w[r] * ei * ej);
                }
            }
        }
        let matrix = band.clone();
        band.factor();

        let direction = |r_sy: &[f64], r_xz: &[f64], r_uz: &[f64], ent: &mut Vec<(usize, f64)>| -> Dir {
            let mut rhs: Vec<f64> = (0..m)
                .map(|k| {
                    let mut v = -r_d[k] + r_xz[k] / pt.x[k];
                    if bounded[k] {
                        v -= r_uz[k] / slack_u(&pt.x, k);
                    }
                    v
                })
                .collect();
            let w: Vec<f64> = (0..nr).map(|r| (r_sy[r] - pt.y[r] * r_p[r]) / pt.s[r]).collect();
            for (r, wr) in w.iter().enumerate() {
                qp.rows.entries(r, ent);
                for &(c, e) in ent.iter() {
                    rhs[c] += e * wr;
                }
            }
            let mut dx = rhs.clone();
            band.solve(&mut dx);
            let mut res = vec![0.0; m];
            for _ in 0..REFINE_STEPS {
                matrix.mul(&dx, &mut res);
                for k in 0..m {
                    res[k] = rhs[k] - res[k];
                }
                band.solve(&mut res);
                for k in 0..m {
                    dx[k] += res[k];
                }
            }
            let mut gdx = vec![0.0; nr];
            qp.rows.mul(&dx, &mut gdx, exec);
            let ds: Vec<f64> = (0..nr).map(|r| gdx[r] + r_p[r]).collect();
            let dy: Vec<f64> = (0..nr).map(|r| (r_sy[r] - pt.y[r] * ds[r]) / pt.s[r]).collect();
            let dzl: Vec<f64> = (0..m).map(|k| (r_xz[k] - pt.zl[k] * dx[k]) / pt.x[k]).collect();
            let dzu: Vec<f64> = (0..m)
                .map(|k| {
                    if bounded[k] {
                        (r_uz[k] + pt.zu[k] * dx[k]) / slack_u(&pt.x, k)
                    } else {
                        0.0
                    }
                })
                .collect();
            Dir { dx, ds, dy, dzl, dzu }
        };
        let steps = |dir: &Dir| -> (f64, f64) {
            let su: Vec<f64> = (0..m).map(|k| slack_u(&pt.x, k)).collect();
            let dsu: Vec<f64> = (0..m).map(|k| if bounded[k] { -dir.dx[k] } else { 0.0 }).collect();
            let primal = max_step(&pt.x, &dir.dx)
                .min(max_step(&pt.s, &dir.ds))
                .min(max_step(&su, &dsu));
            let dual = max_step(&pt.y, &dir.dy)
                .min(max_step(&pt.zl, &dir.dzl))
                .min(max_step(&pt.zu, &dir.dzu));
            (primal, dual)
        };

        // predictor
        let r_sy: Vec<f64> = (0..nr).map(|r| -pt.s[r] * pt.y[r]).collect();
        let r_xz: Vec<f64> = (0..m).map(|k| -pt.x[k] * pt.zl[k]).collect();
        let r_uz: Vec<f64> = (0..m)
            .map(|k| if bounded[k] { -slack_u(&pt.x, k) * pt.zu[k] } else { 0.0 })
            .collect();
        let aff = direction(&r_sy, &r_xz, &r_uz, &mut ent);
        let (ap, ad) = steps(&aff);
        let a = ap.min(ad);
        let mut comp_aff = 0.0;
        for r in 0..nr {
            comp_aff += (pt.s[r] + a * aff.ds[r]) * (pt.y[r] + a * aff.dy[r]);
        }
        for k in 0..m {
            comp_aff += (pt.x[k] + a * aff.dx[k]) * (pt.zl[k] + a * aff.dzl[k]);
            if bounded[k] {
                comp_aff += (slack_u(&pt.x, k) - a * aff.dx[k]) * (pt.zu[k] + a * aff.dzu[k]);
            }
        }
        let sigma = (comp_aff / comp).clamp(0.0, 1.0).powi(3);
        let smu = sigma * mu;

        // corrector
        let r_sy: Vec<f64> = (0..nr)
            .map(|r| smu - pt.s[r] * pt.y[r] - aff.ds[r] * aff.dy[r])
            .collect();
        let r_xz: Vec<f64> = (0..m)
            .map(|k| smu - pt.x[k] * pt.zl[k] - aff.dx[k] * aff.dzl[k])
            .collect();
        let r_uz: Vec<f64> = (0..m)
            .map(|k| {
                if bounded[k] {
                    smu - slack_u(&pt.x, k) * pt.zu[k] + aff.dx[k] * aff.dzu[k]
                } else {
                    0.0
                }
            })
            .collect();
        let dir = direction(&r_sy, &r_xz, &r_uz, &mut ent);
        let (ap, ad) = steps(&dir);
        let t = (set.step_fraction * ap.min(ad)).min(1.0);
        for k in 0..m {
            pt.x[k] += t * dir.dx[k];
            pt.zl[k] += t * dir.dzl[k];
            pt.zu[k] += t * dir.dzu[k];
        }
        for r in 0..nr {
            pt.s[r] += t * dir.ds[r];
            pt.y[r] += t * dir.dy[r];
        }
    }
    let (merit, dual, x) = best;
    Outcome {
        x,
        iters,
        converged: merit <= set.tol && dual <= set.tol.max(REDUCED_TOL),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_scalar() {
        // min ½x² - 3x, 0 <= x <= 2 → x = 2
        let qp = Qp {
            p: vec![1.0],
            g: vec![-3.0],
            upper: vec![2.0],
            rows: Rows::new(0, false, &[], &[]),
        };
        let out = solve(
            &qp,
            &Settings {
                max_iters: 100,
                tol: 1e-11,
                step_fraction: 0.99,
                exec: Exec::Sequential,
            },
        );
        assert!(out.converged);
        assert!((out.x[0] - 2.0).abs() < 1e-9);
    }
}
