//! Galerkin discretisation of the Hilbert transforms `H_1`, `H_2` and `H_1 H_2`.
//!
//! The kernel is `Hf(x) = p.v. \int f(y) / (y - x) dy` with no `1/pi` factor.
//! For cells of width `w` the cell-pair integral is
//!
//! ```text
//! \int_{cell_i} \int_{cell_j} dy dx / (y - x) = w * phi(j - i)
//! phi(d) = (d+1) ln|d+1| + (d-1) ln|d-1| - 2 d ln|d|,   0 ln 0 = 0
//! ```
//!
//! so the cell average of `H f` on cell `i` is `sum_j phi(j - i) f_j`, a
//! dimensionless Toeplitz matrix that is exactly antisymmetric. The double
//! transform inherits exact self-adjointness from it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction, LATTICE_TOL};

/// Below this many multiply-adds an axis transform runs on one thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Dimensionless cell-pair integral `\int_0^1 \int_0^1 du dv / (v - u + d)`.
pub fn phi(d: i64) -> f64 {
    let mag = phi_nonneg(d.unsigned_abs());
    if d < 0 {
        -mag
    } else {
        mag
    }
}

fn phi_nonneg(d: u64) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0 * std::f64::consts::LN_2,
        2..=31 => {
            // (d+1) ln(1 + 1/d) + (d-1) ln(1 - 1/d): the ln d terms cancel exactly.
            let x = d as f64;
            (x + 1.0) * (1.0 / x).ln_1p() + (x - 1.0) * (-1.0 / x).ln_1p()
        }
        _ => {
            // sum_{k>=1} d^{1-2k} / (k (2k-1))
            let x = 1.0 / d as f64;
            let x2 = x * x;
            let mut acc = 0.0;
            for k in (1..=10u32).rev() {
                let k = k as f64;
                acc = acc * x2 + 1.0 / (k * (2.0 * k - 1.0));
            }
            acc * x
        }
    }
}

/// Galerkin matrix of the one-dimensional Hilbert transform on `n` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertMatrix1D {
    n: usize,
    cell_width: f64,
    entries: Vec<f64>,
}

impl HilbertMatrix1D {
    pub fn build(n: usize, cell_width: f64) -> Result<Self> {
        if n == 0 || !(cell_width > 0.0 && cell_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "hilbert matrix needs n >= 1 and positive width, got n={n}, w={cell_width}"
            )));
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = cell_width * phi(j as i64 - i as i64);
            }
        }
        Ok(Self { n, cell_width, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    /// `K[i][j] = \int_{cell_i} \int_{cell_j} dy dx / (y - x)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Cell averages of `H v` for a vector `v` of cell values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.entries[i * self.n..(i + 1) * self.n];
                row.iter().zip(v).map(|(k, x)| k * x).sum::<f64>() / self.cell_width
            })
            .collect()
    }
}

/// `phi(d)` for `d` in `dmin..=dmax`.
fn phi_table(dmin: i64, dmax: i64) -> Vec<f64> {
    (dmin..=dmax).map(phi).collect()
}

/// Transforms along one axis of a row-major `dims` array.
///
/// Output cell `p` along `axis` sits at source index `p + shift`; the other
/// axis is left unchanged. Returns an array with `n_out` cells along `axis`.
fn transform_axis(values: &[f64], dims: [usize; 2], axis: usize, shift: i64, n_out: usize) -> Vec<f64> {
    let [nx, ny] = dims;
    let n_in = dims[axis] as i64;
    let dmin = -(n_out as i64 - 1) - shift;
    let dmax = n_in - 1 - shift;
    let table = phi_table(dmin, dmax);
    let kernel = |src: usize, dst: usize| table[(src as i64 - dst as i64 - shift - dmin) as usize];
    let work = n_in as usize * n_out * dims[1 - axis];
    if axis == 1 {
        let mut out = vec![0.0; nx * n_out];
        let row_op = |(ix, orow): (usize, &mut [f64])| {
            let irow = &values[ix * ny..(ix + 1) * ny];
            for (q, o) in orow.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (j, &v) in irow.iter().enumerate() {
                    acc += kernel(j, q) * v;
                }
                *o = acc;
            }
        };
        if work >= PAR_THRESHOLD {
            out.par_chunks_mut(n_out).enumerate().for_each(row_op);
        } else {
            out.chunks_mut(n_out).enumerate().for_each(row_op);
        }
        out
    } else {
        let mut out = vec![0.0; n_out * ny];
        let row_op = |(p, orow): (usize, &mut [f64])| {
            for i in 0..nx {
                let k = kernel(i, p);
                if k == 0.0 {
                    continue;
                }
                let irow = &values[i * ny..(i + 1) * ny];
                for (o, &v) in orow.iter_mut().zip(irow) {
                    *o += k * v;
                }
            }
        };
        if work >= PAR_THRESHOLD {
            out.par_chunks_mut(ny).enumerate().for_each(row_op);
        } else {
            out.chunks_mut(ny).enumerate().for_each(row_op);
        }
        out
    }
}

/// Cell-averaged `H_1 f` (transform in the first variable).
pub fn apply_h1(f: &GridFunction) -> GridFunction {
    let g = *f.grid();
    GridFunction::from_parts(g, transform_axis(f.values(), g.dims(), 0, 0, g.nx()))
}

/// Cell-averaged `H_2 f` (transform in the second variable).
pub fn apply_h2(f: &GridFunction) -> GridFunction {
    let g = *f.grid();
    GridFunction::from_parts(g, transform_axis(f.values(), g.dims(), 1, 0, g.ny()))
}

/// Cell-averaged `H_1 H_2 f`.
pub fn apply_h1h2(f: &GridFunction) -> GridFunction {
    let g = *f.grid();
    let tmp = transform_axis(f.values(), g.dims(), 1, 0, g.ny());
    GridFunction::from_parts(g, transform_axis(&tmp, g.dims(), 0, 0, g.nx()))
}

/// Offset in cells of `target` relative to `source` along `axis`, requiring
/// identical cell sizes and a lattice-aligned origin.
fn lattice_shift(source: &Grid2D, target: &Grid2D, axis: usize) -> Result<i64> {
    let (cs, ct) = (source.cell()[axis], target.cell()[axis]);
    if (cs - ct).abs() > LATTICE_TOL * cs {
        return Err(Error::IncompatibleGrids(format!(
            "cell sizes differ along axis {axis}: {cs} vs {ct}"
        )));
    }
    let t = (target.origin()[axis] - source.origin()[axis]) / cs;
    let k = t.round();
    if (t - k).abs() > LATTICE_TOL * t.abs().max(1.0) {
        return Err(Error::IncompatibleGrids(format!(
            "origin offset {t} cells along axis {axis} is not an integer"
        )));
    }
    Ok(k as i64)
}

/// Cell averages of `H_1 H_2 f` over the cells of `target`.
///
/// `target` must have the same cell size as `f`'s grid with an origin on the
/// same lattice. The values equal the corresponding entries of the transform
/// computed on any grid containing both, so the result restricted to one
/// grid's cells is consistent with the full-grid Galerkin operator.
pub fn apply_h1h2_onto(f: &GridFunction, target: &Grid2D) -> Result<GridFunction> {
    let src = *f.grid();
    if src == *target {
        return Ok(apply_h1h2(f));
    }
    let sx = lattice_shift(&src, target, 0)?;
    let sy = lattice_shift(&src, target, 1)?;
    let tmp = transform_axis(f.values(), src.dims(), 1, sy, target.ny());
    let out = transform_axis(&tmp, [src.nx(), target.ny()], 0, sx, target.nx());
    Ok(GridFunction::from_parts(*target, out))
}

/// Pointwise `H_1 H_2 f(p)` for a point at least one cell away from the
/// support of `f` in each coordinate.
pub fn eval_h1h2_point(f: &GridFunction, p: (f64, f64)) -> Result<f64> {
    let Some(supp) = f.support_bbox() else {
        return Ok(0.0);
    };
    let grid = f.grid();
    let [hx, hy] = grid.cell();
    let dist_x = (supp.ix.lo() - p.0).max(p.0 - supp.ix.hi());
    let dist_y = (supp.iy.lo() - p.1).max(p.1 - supp.iy.hi());
    if dist_x < hx * (1.0 - LATTICE_TOL) || dist_y < hy * (1.0 - LATTICE_TOL) {
        return Err(Error::PointTooCloseToSupport);
    }
    let [ox, oy] = grid.origin();
    let kx0 = ((supp.ix.lo() - ox) / hx).round() as usize;
    let kx1 = ((supp.ix.hi() - ox) / hx).round() as usize;
    let ky0 = ((supp.iy.lo() - oy) / hy).round() as usize;
    let ky1 = ((supp.iy.hi() - oy) / hy).round() as usize;
    // \int_{a}^{b} dy / (y - p) = ln |(b - p) / (a - p)| away from p.
    let log_ratio = |a: f64, b: f64, c: f64| ((b - c) / (a - c)).ln();
    let lx: Vec<f64> = (kx0..kx1)
        .map(|i| log_ratio(ox + i as f64 * hx, ox + (i + 1) as f64 * hx, p.0))
        .collect();
    let ly: Vec<f64> = (ky0..ky1)
        .map(|j| log_ratio(oy + j as f64 * hy, oy + (j + 1) as f64 * hy, p.1))
        .collect();
    let mut total = 0.0;
    for (a, &wx) in (kx0..kx1).zip(&lx) {
        let mut row = 0.0;
        for (b, &wy) in (ky0..ky1).zip(&ly) {
            row += f.value(a, b) * wy;
        }
        total += wx * row;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{indicator, inner_product, Rect};

    #[test]
    fn phi_small_values() {
        assert_eq!(phi(0), 0.0);
        assert!((phi(1) - 1.386_294_361_119_890_6).abs() < 1e-15);
        assert_eq!(phi(-3), -phi(3));
        assert!((phi(10) - 0.1).abs() < 0.001);
    }

    #[test]
    fn phi_branches_join_smoothly() {
        // The series branch starts at 32; compare against the log form there.
        let x = 32.0f64;
        let log_form = (x + 1.0) * (1.0 / x).ln_1p() + (x - 1.0) * (-1.0 / x).ln_1p();
        assert!((phi(32) - log_form).abs() < 1e-15);
        let x = 31.0f64;
        let series: f64 = (1..=10)
            .map(|k| x.powi(1 - 2 * k) / (k as f64 * (2 * k - 1) as f64))
            .sum();
        assert!((phi(31) - series).abs() < 1e-15);
    }

    #[test]
    fn matrix_is_antisymmetric_and_scales_linearly() {
        let k1 = HilbertMatrix1D::build(17, 1.0).unwrap();
        let k2 = HilbertMatrix1D::build(17, 0.125).unwrap();
        for i in 0..17 {
            assert_eq!(k1.get(i, i), 0.0);
            for j in 0..17 {
                assert_eq!(k1.get(i, j), -k1.get(j, i));
                assert_eq!(k2.get(i, j) / 0.125, k1.get(i, j));
            }
        }
        assert!(HilbertMatrix1D::build(0, 1.0).is_err());
    }

    #[test]
    fn matrix_apply_matches_grid_transform() {
        let grid = Grid2D::new([0.0, 0.0], [0.5, 0.5], [6, 1]).unwrap();
        let f = GridFunction::new(grid, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.5]).unwrap();
        let k = HilbertMatrix1D::build(6, 0.5).unwrap();
        let direct = k.apply(f.values());
        let h1 = apply_h1(&f);
        for (a, b) in direct.iter().zip(h1.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let f = GridFunction::zeros(Grid2D::unit(5).unwrap());
        assert!(apply_h1(&f).is_zero());
        assert!(apply_h1h2(&f).is_zero());
        assert_eq!(eval_h1h2_point(&f, (2.5, 2.5)).unwrap(), 0.0);
    }

    #[test]
    fn h1_and_h2_commute() {
        let grid = Grid2D::unit(7).unwrap();
        let f = GridFunction::from_fn(grid, |x, y| (x * 1.3).sin() + y * y - x * y).unwrap();
        let a = apply_h1(&apply_h2(&f));
        let b = apply_h2(&apply_h1(&f));
        let c = apply_h1h2(&f);
        for ((x, y), z) in a.values().iter().zip(b.values()).zip(c.values()) {
            assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
            assert_eq!(x, z);
        }
    }

    #[test]
    fn h1_is_skew() {
        let grid = Grid2D::new([0.0, 0.0], [0.25, 0.5], [9, 5]).unwrap();
        let f = GridFunction::from_fn(grid, |x, y| x - 0.3 * y * y).unwrap();
        let g = GridFunction::from_fn(grid, |x, y| (x + 2.0 * y).cos()).unwrap();
        let lhs = inner_product(&apply_h1(&f), &g).unwrap();
        let rhs = -inner_product(&f, &apply_h1(&g)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn onto_matches_full_grid_block() {
        let big = Grid2D::unit(12).unwrap();
        let f = indicator(&big, &Rect::from_bounds(1.0, 4.0, 2.0, 5.0).unwrap()).unwrap();
        let full = apply_h1h2(&f);
        let target = Grid2D::new([6.0, 3.0], [1.0, 1.0], [5, 7]).unwrap();
        let part = apply_h1h2_onto(
            &f.restrict(&Rect::from_bounds(1.0, 4.0, 2.0, 5.0).unwrap()).unwrap(),
            &target,
        )
        .unwrap();
        for ix in 0..5 {
            for iy in 0..7 {
                let a = part.value(ix, iy);
                let b = full.value(ix + 6, iy + 3);
                assert!((a - b).abs() <= 1e-15 * b.abs().max(1e-3), "{a} vs {b}");
            }
        }
        let bad = Grid2D::new([0.5, 0.0], [1.0, 1.0], [2, 2]).unwrap();
        assert!(apply_h1h2_onto(&f, &bad).is_err());
    }

    #[test]
    fn point_value_requires_separation() {
        let grid = Grid2D::unit(4).unwrap();
        let f = indicator(&grid, &Rect::from_bounds(1.0, 2.0, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(eval_h1h2_point(&f, (1.5, 1.5)), Err(Error::PointTooCloseToSupport));
        assert_eq!(eval_h1h2_point(&f, (2.5, 3.5)), Err(Error::PointTooCloseToSupport));
        assert!(eval_h1h2_point(&f, (3.0, 3.0)).is_ok());
    }

    #[test]
    fn point_value_of_shifted_square() {
        for m in [2.0f64, 10.0, 33.0] {
            let rect = Rect::centered((m, m), (1.0, 1.0)).unwrap();
            let f = GridFunction::constant_on(&rect, 1.0);
            let v = eval_h1h2_point(&f, (0.0, 0.0)).unwrap();
            let closed = ((2.0 * m + 1.0) / (2.0 * m - 1.0)).ln().powi(2);
            assert!((v - closed).abs() <= 1e-14 * closed);
        }
    }
}
