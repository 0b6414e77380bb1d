//! Commutators `[b, T] = b T - T b` with the Hilbert transforms, and
//! estimates of their `L^2` operator norms.
//!
//! With `A` the Galerkin matrix of `H_1H_2` (symmetric) and `D_b` the
//! diagonal multiplication by `b`, the discrete commutator `C = D_b A - A D_b`
//! is antisymmetric, so `C^T C = -C^2` and the norm estimate needs only `C`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::pi_form;
use crate::grid::{align, common_grid, inner_product, product, sub_within, Grid2D, GridFunction, DEFAULT_MAX_CELLS};
use crate::norms::{bmo_norm, ratio_range, RectFamily};
use crate::singular::{apply_h1, apply_h1h2, apply_h2};

/// Largest grid side for which [`commutator_matrix`] materialises the matrix.
pub const DENSE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HilbertAxis {
    First,
    Second,
}

fn commute(b: &GridFunction, f: &GridFunction, t: impl Fn(&GridFunction) -> GridFunction) -> Result<GridFunction> {
    let (b, f) = align(b, f)?;
    let left = product(&b, &t(&f))?;
    let right = t(&product(&b, &f)?);
    sub_within(&left, &right, DEFAULT_MAX_CELLS)
}

/// `[b, H_1H_2] f` on the common grid of `b` and `f`.
pub fn commutator_apply(b: &GridFunction, f: &GridFunction) -> Result<GridFunction> {
    commute(b, f, apply_h1h2)
}

/// `[b, H_1] f` or `[b, H_2] f`.
pub fn commutator_apply_single(b: &GridFunction, f: &GridFunction, axis: HilbertAxis) -> Result<GridFunction> {
    match axis {
        HilbertAxis::First => commute(b, f, apply_h1),
        HilbertAxis::Second => commute(b, f, apply_h2),
    }
}

/// `max |[b, H_1H_2] f - (H_1 [b, H_2] f + [b, H_1] H_2 f)|`.
pub fn aux1_identity_check(b: &GridFunction, f: &GridFunction) -> Result<f64> {
    let (b, f) = align(b, f)?;
    let lhs = commutator_apply(&b, &f)?;
    let first = apply_h1(&commutator_apply_single(&b, &f, HilbertAxis::Second)?);
    let second = commutator_apply_single(&b, &apply_h2(&f), HilbertAxis::First)?;
    Ok(lhs
        .values()
        .iter()
        .zip(first.values().iter().zip(second.values()))
        .map(|(l, (a, c))| (l - (a + c)).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    /// `<b, Pi(f, g)>`
    pub lhs: f64,
    /// `<[b, H_1H_2] f, g>`
    pub rhs: f64,
    pub abs_diff: f64,
}

/// Both sides of `<b, Pi(f, g)> = <[b, H_1H_2] f, g>` on one common grid.
pub fn duality_check(b: &GridFunction, f: &GridFunction, g: &GridFunction) -> Result<DualityCheck> {
    let grid = common_grid(
        &common_grid(b.grid(), f.grid(), DEFAULT_MAX_CELLS)?,
        g.grid(),
        DEFAULT_MAX_CELLS,
    )?;
    let (b, f, g) = (b.resample(&grid)?, f.resample(&grid)?, g.resample(&grid)?);
    let lhs = inner_product(&b, &pi_form(&f, &g)?)?;
    let rhs = inner_product(&commutator_apply(&b, &f)?, &g)?;
    Ok(DualityCheck {
        lhs,
        rhs,
        abs_diff: (lhs - rhs).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative increment of the estimate in the last iteration.
    pub residual: f64,
    pub seed: u64,
    pub converged: bool,
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`, by Sturm-sequence bisection.
fn tridiagonal_max_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let n = alpha.len();
    // Gershgorin bounds.
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < n { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    // Number of eigenvalues below x.
    let below = |x: f64| {
        let mut count = 0;
        let mut q = 1.0f64;
        for i in 0..n {
            let off = if i > 0 { beta[i - 1] * beta[i - 1] / q } else { 0.0 };
            q = alpha[i] - x - off;
            if q == 0.0 {
                q = -f64::EPSILON * (x.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Estimate of `||[b, H_1H_2]||` on `L^2(grid)`.
///
/// `b` is resampled onto `grid`. The Gram operator `C^T C = -C^2` is
/// iterated from a seeded start vector; the Krylov space it spans is kept
/// orthonormal (Lanczos with full reorthogonalisation), so the estimate is
/// the square root of the top Ritz value. It is nondecreasing across
/// iterations, never exceeds the true norm, and dominates the plain power
/// iterate from the same start. Stops when the relative increment stays
/// below `tol` for two consecutive steps or the Krylov space is exhausted.
pub fn operator_norm(
    b: &GridFunction,
    grid: &Grid2D,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<OperatorNormEstimate> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument("operator_norm needs max_iters >= 1".into()));
    }
    let b = b.resample(grid)?;
    let bv = b.values();
    if bv.iter().all(|&x| x == bv[0]) {
        // Multiplication by a constant commutes with everything.
        return Ok(OperatorNormEstimate {
            value: 0.0,
            iterations: 0,
            residual: 0.0,
            seed,
            converged: true,
        });
    }
    let apply = |v: &[f64]| -> Vec<f64> {
        let f = GridFunction::from_parts(*grid, v.to_vec());
        let af = apply_h1h2(&f);
        let bf = GridFunction::from_parts(*grid, v.iter().zip(bv).map(|(x, y)| x * y).collect());
        let abf = apply_h1h2(&bf);
        bv.iter()
            .zip(af.values())
            .zip(abf.values())
            .map(|((bi, a), c)| bi * a - c)
            .collect()
    };
    let gram = |v: &[f64]| -> Vec<f64> { apply(&apply(v)).into_iter().map(|x| -x).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n = grid.n_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n0 = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut value = 0.0f64;
    let mut residual = f64::INFINITY;
    let mut quiet = 0;
    let limit = max_iters.min(n);
    for it in 1..=limit {
        let mut w = gram(&v);
        alpha.push(dot(&v, &w));
        basis.push(v);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let theta = tridiagonal_max_eigenvalue(&alpha, &beta).max(0.0);
        let sigma = theta.sqrt();
        residual = if sigma > 0.0 {
            (sigma - value).abs() / sigma
        } else {
            0.0
        };
        value = value.max(sigma);
        let next = dot(&w, &w).sqrt();
        let exhausted = next <= 1e-14 * theta.max(f64::MIN_POSITIVE) || it == n;
        quiet = if residual < tol { quiet + 1 } else { 0 };
        if exhausted || quiet >= 2 || value == 0.0 {
            return Ok(OperatorNormEstimate {
                value,
                iterations: it,
                residual: if exhausted { 0.0 } else { residual },
                seed,
                converged: true,
            });
        }
        beta.push(next);
        v = w.into_iter().map(|x| x / next).collect();
    }
    Ok(OperatorNormEstimate {
        value,
        iterations: limit,
        residual,
        seed,
        converged: false,
    })
}

/// Dense matrix of `[b, H_1H_2]` on `b`'s grid, row-major, acting on cell
/// values; `N = nx * ny` rows and columns.
pub fn commutator_matrix(b: &GridFunction) -> Result<Vec<f64>> {
    let g = *b.grid();
    if g.nx() > DENSE_LIMIT || g.ny() > DENSE_LIMIT {
        return Err(Error::CellBudgetExceeded {
            needed: g.n_cells(),
            max: DENSE_LIMIT * DENSE_LIMIT,
        });
    }
    let n = g.n_cells();
    let mut m = vec![0.0; n * n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let c = commutator_apply(b, &GridFunction::from_parts(g, e))?;
        for (row, v) in c.values().iter().enumerate() {
            m[row * n + col] = *v;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-12,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorRow {
    pub b_id: String,
    pub n: usize,
    pub bmo: f64,
    pub op_norm: f64,
    pub ratio: f64,
    pub iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub rows: Vec<CommutatorRow>,
    /// `(b_id, reason)` for symbols left out of the table.
    pub skipped: Vec<(String, String)>,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

impl CommutatorReport {
    pub fn spread(&self) -> Option<f64> {
        Some(self.max_ratio? / self.min_ratio?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("b_id,n,bmo,op_norm,ratio,iters,residual\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:e}",
                r.b_id, r.n, r.bmo, r.op_norm, r.ratio, r.iters, r.residual
            );
        }
        out
    }
}

/// FNV-1a, used to derive a stable per-symbol seed.
fn id_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// `||[b, H_1H_2]|| / bmo(b)` for each symbol; constant symbols are skipped.
pub fn two_sided_experiment(
    symbols: &[(String, GridFunction)],
    grid: &Grid2D,
    family: &RectFamily,
    opts: &NormOptions,
) -> Result<CommutatorReport> {
    let results: Vec<Result<std::result::Result<CommutatorRow, (String, String)>>> = symbols
        .par_iter()
        .map(|(id, b)| {
            let b = b.resample(grid)?;
            let bmo = bmo_norm(&b, family)?;
            if bmo == 0.0 {
                return Ok(Err((id.clone(), "zero oscillation (constant symbol)".to_string())));
            }
            let est = operator_norm(&b, grid, opts.max_iters, opts.tol, opts.seed ^ id_hash(id))?;
            Ok(Ok(CommutatorRow {
                b_id: id.clone(),
                n: grid.nx(),
                bmo,
                op_norm: est.value,
                ratio: est.value / bmo,
                iters: est.iterations,
                residual: est.residual,
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(row) => rows.push(row),
            Err(s) => skipped.push(s),
        }
    }
    let (min_ratio, max_ratio) = ratio_range(rows.iter().map(|r| r.ratio));
    Ok(CommutatorReport {
        rows,
        skipped,
        min_ratio,
        max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(n: usize, s: f64) -> GridFunction {
        GridFunction::from_fn(Grid2D::unit(n).unwrap(), |x, y| (s * x).sin() + (0.3 * y * x).cos()).unwrap()
    }

    #[test]
    fn constant_symbol_commutes() {
        let g = Grid2D::unit(8).unwrap();
        let b = GridFunction::from_fn(g, |_, _| 2.5).unwrap();
        let f = smooth(8, 1.3);
        let c = commutator_apply(&b, &f).unwrap();
        assert!(c.linf_norm() <= 1e-12 * f.linf_norm() * 2.5 * 10.0);
        let est = operator_norm(&b, &g, 100, 1e-10, 1).unwrap();
        assert!(est.value <= 1e-10);
    }

    #[test]
    fn matrix_is_antisymmetric() {
        let b = smooth(4, 0.9);
        let m = commutator_matrix(&b).unwrap();
        let n = 16;
        for i in 0..n {
            for j in 0..n {
                assert!((m[i * n + j] + m[j * n + i]).abs() <= 1e-13);
            }
        }
        assert!(commutator_matrix(&smooth(17, 1.0)).is_err());
    }

    #[test]
    fn separable_symbol_commutes_with_h2() {
        let b = GridFunction::from_fn(Grid2D::unit(8).unwrap(), |x, _| x * x).unwrap();
        let f = smooth(8, 2.0);
        let c = commutator_apply_single(&b, &f, HilbertAxis::Second).unwrap();
        assert!(c.linf_norm() <= 1e-12 * 64.0 * f.linf_norm());
    }

    #[test]
    fn estimate_is_homogeneous() {
        let g = Grid2D::unit(8).unwrap();
        let b = smooth(8, 1.7);
        let a = operator_norm(&b, &g, 3000, 1e-13, 5).unwrap();
        let c = operator_norm(&b.scaled(-3.0), &g, 3000, 1e-13, 5).unwrap();
        assert!((c.value - 3.0 * a.value).abs() <= 1e-8 * c.value);
    }

    #[test]
    fn estimate_grows_with_iterations() {
        let g = Grid2D::unit(6).unwrap();
        let b = smooth(6, 2.3);
        let vals: Vec<f64> = (1..20)
            .map(|k| operator_norm(&b, &g, k, 0.0, 3).unwrap().value)
            .collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn tridiagonal_top_eigenvalue() {
        // [[2, 1, 0], [1, 2, 1], [0, 1, 2]] has eigenvalues 2 - sqrt 2, 2, 2 + sqrt 2.
        let top = tridiagonal_max_eigenvalue(&[2.0, 2.0, 2.0], &[1.0, 1.0]);
        assert!((top - (2.0 + 2f64.sqrt())).abs() < 1e-14);
        assert_eq!(tridiagonal_max_eigenvalue(&[3.0], &[]), 3.0);
    }

    #[test]
    fn id_hash_is_stable() {
        assert_eq!(id_hash(""), 0xcbf2_9ce4_8422_2325);
        assert_ne!(id_hash("checker-1"), id_hash("checker-2"));
    }
}
