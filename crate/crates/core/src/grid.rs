//! Piecewise-constant, compactly supported functions on uniform tensor grids.
//!
//! Every function in the crate is a [`GridFunction`]: a uniform grid plus one
//! value per cell. Values are stored row-major with the row index running
//! along the first coordinate, so `values[ix * ny + iy]` is the value on the
//! cell `[x_ix, x_ix+1) x [y_iy, y_iy+1)`. Functions vanish outside their
//! grid's extent, which makes every integral below an exact finite sum.
//!
//! Binary operations first move both operands onto a common refinement
//! lattice (see [`align`]). Two grids are compatible when their cell sizes
//! and origin offsets are rationally related with small denominators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of cells any single aligned grid may have.
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

/// Lattice membership tolerance, relative to the cell size.
pub const LATTICE_TOL: f64 = 1e-9;

/// Largest denominator accepted when recognising a ratio of lengths as rational.
const MAX_DENOMINATOR: i64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    center: f64,
    halfwidth: f64,
}

impl Interval {
    pub fn new(center: f64, halfwidth: f64) -> Result<Self> {
        if !center.is_finite() || !halfwidth.is_finite() || halfwidth <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "interval needs finite center and positive halfwidth, got ({center}, {halfwidth})"
            )));
        }
        Ok(Self { center, halfwidth })
    }

    pub fn from_bounds(lo: f64, hi: f64) -> Result<Self> {
        Self::new(0.5 * (lo + hi), 0.5 * (hi - lo))
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn lo(&self) -> f64 {
        self.center - self.halfwidth
    }

    pub fn hi(&self) -> f64 {
        self.center + self.halfwidth
    }

    pub fn length(&self) -> f64 {
        2.0 * self.halfwidth
    }

    /// Concentric dilation by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        Self {
            center: self.center,
            halfwidth: self.halfwidth * factor,
        }
    }

    pub fn translate(&self, shift: f64) -> Self {
        Self {
            center: self.center + shift,
            halfwidth: self.halfwidth,
        }
    }

    /// Containment up to `LATTICE_TOL` times the larger length.
    pub fn contains(&self, other: &Interval) -> bool {
        let tol = LATTICE_TOL * self.length().max(other.length());
        other.lo() >= self.lo() - tol && other.hi() <= self.hi() + tol
    }

    pub fn hull(&self, other: &Interval) -> Self {
        let lo = self.lo().min(other.lo());
        let hi = self.hi().max(other.hi());
        Self {
            center: 0.5 * (lo + hi),
            halfwidth: 0.5 * (hi - lo),
        }
    }
}

/// Axis-parallel rectangle `ix x iy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RectRepr", into = "RectRepr")]
pub struct Rect {
    pub ix: Interval,
    pub iy: Interval,
}

#[derive(Serialize, Deserialize)]
struct RectRepr {
    cx: f64,
    cy: f64,
    hx: f64,
    hy: f64,
}

impl TryFrom<RectRepr> for Rect {
    type Error = Error;
    fn try_from(r: RectRepr) -> Result<Self> {
        Ok(Rect::new(Interval::new(r.cx, r.hx)?, Interval::new(r.cy, r.hy)?))
    }
}

impl From<Rect> for RectRepr {
    fn from(r: Rect) -> Self {
        RectRepr {
            cx: r.ix.center,
            cy: r.iy.center,
            hx: r.ix.halfwidth,
            hy: r.iy.halfwidth,
        }
    }
}

impl Rect {
    pub fn new(ix: Interval, iy: Interval) -> Self {
        Self { ix, iy }
    }

    pub fn from_bounds(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Ok(Self::new(
            Interval::from_bounds(x0, x1)?,
            Interval::from_bounds(y0, y1)?,
        ))
    }

    pub fn centered(center: (f64, f64), sides: (f64, f64)) -> Result<Self> {
        Ok(Self::new(
            Interval::new(center.0, 0.5 * sides.0)?,
            Interval::new(center.1, 0.5 * sides.1)?,
        ))
    }

    pub fn area(&self) -> f64 {
        self.ix.length() * self.iy.length()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.ix.center, self.iy.center)
    }

    pub fn sides(&self) -> (f64, f64) {
        (self.ix.length(), self.iy.length())
    }

    pub fn dilate(&self, factor: f64) -> Self {
        Self::new(self.ix.dilate(factor), self.iy.dilate(factor))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.ix.translate(dx), self.iy.translate(dy))
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.ix.contains(&other.ix) && self.iy.contains(&other.iy)
    }

    pub fn bounding_box(&self, other: &Rect) -> Self {
        Self::new(self.ix.hull(&other.ix), self.iy.hull(&other.iy))
    }
}

/// One axis of a uniform grid: `n` cells of width `cell` starting at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Axis {
    pub origin: f64,
    pub cell: f64,
    pub n: usize,
}

impl Axis {
    pub fn end(&self) -> f64 {
        self.origin + self.n as f64 * self.cell
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.cell
    }

    /// Index `k` with `origin + k * cell == x`, if `x` is on the lattice.
    pub fn snap(&self, x: f64) -> Option<i64> {
        let t = (x - self.origin) / self.cell;
        let k = t.round();
        if (t - k).abs() <= LATTICE_TOL * t.abs().max(1.0) {
            Some(k as i64)
        } else {
            None
        }
    }
}

/// Best rational approximation `p/q` of `x` within `tol`, with `q` bounded.
pub(crate) fn rational_approx(x: f64, tol: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOMINATOR {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2, k2));
        }
        let frac = r - a as f64;
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
        (h0, h1) = (h1, h2);
        (k0, k1) = (k1, k2);
    }
    None
}

/// Largest `c` such that both `a` and `b` are integer multiples of `c`.
pub(crate) fn real_gcd(a: f64, b: f64) -> Option<f64> {
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    let x = large / small;
    let (_, q) = rational_approx(x, LATTICE_TOL * x)?;
    Some(small / q as f64)
}

/// Common refinement of two axes covering the union of their extents.
pub(crate) fn common_axis(a: Axis, b: Axis) -> Result<Axis> {
    if a == b {
        return Ok(a);
    }
    let mismatch = || {
        Error::LatticeMismatch(format!(
            "cells {} / {} with origins {} / {}",
            a.cell, b.cell, a.origin, b.origin
        ))
    };
    let mut cell = real_gcd(a.cell, b.cell).ok_or_else(mismatch)?;
    let t = (b.origin - a.origin) / cell;
    let (_, q) = rational_approx(t, LATTICE_TOL * t.abs().max(1.0)).ok_or_else(mismatch)?;
    cell /= q as f64;
    let lo = a.origin.min(b.origin);
    let hi = a.end().max(b.end());
    let n = ((hi - lo) / cell).round();
    if n > (usize::MAX / 2) as f64 {
        return Err(mismatch());
    }
    Ok(Axis {
        origin: lo,
        cell,
        n: n as usize,
    })
}

/// For each cell of `dst`, the index of the `src` cell containing it.
fn axis_map(src: Axis, dst: Axis) -> Result<Vec<Option<usize>>> {
    let ratio = src.cell / dst.cell;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > LATTICE_TOL * ratio {
        return Err(Error::IncompatibleGrids(format!(
            "cell {} does not refine cell {}",
            dst.cell, src.cell
        )));
    }
    let k = dst.snap(src.origin).ok_or_else(|| {
        Error::IncompatibleGrids(format!(
            "origin {} is off the target lattice (origin {}, cell {})",
            src.origin, dst.origin, dst.cell
        ))
    })?;
    let r = r as i64;
    Ok((0..dst.n as i64)
        .map(|i| {
            let rel = i - k;
            if rel < 0 {
                return None;
            }
            let s = (rel / r) as usize;
            (s < src.n).then_some(s)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
}

impl Grid2D {
    pub fn new(origin: [f64; 2], cell: [f64; 2], dims: [usize; 2]) -> Result<Self> {
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        if !cell.iter().all(|&c| c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell sizes must be positive, got {cell:?}"
            )));
        }
        if dims[0] == 0 || dims[1] == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        Ok(Self { origin, cell, dims })
    }

    /// Grid whose extent is exactly `rect`, split into `dims` cells.
    pub fn covering(rect: &Rect, dims: [usize; 2]) -> Result<Self> {
        if dims[0] == 0 || dims[1] == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        Self::new(
            [rect.ix.lo(), rect.iy.lo()],
            [rect.ix.length() / dims[0] as f64, rect.iy.length() / dims[1] as f64],
            dims,
        )
    }

    /// Square grid of `n x n` unit cells with lower-left corner at the origin.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new([0.0, 0.0], [1.0, 1.0], [n, n])
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cell(&self) -> [f64; 2] {
        self.cell
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.dims[0]
    }

    pub fn ny(&self) -> usize {
        self.dims[1]
    }

    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn cell_area(&self) -> f64 {
        self.cell[0] * self.cell[1]
    }

    pub fn extent(&self) -> Rect {
        let x = self.axis(0);
        let y = self.axis(1);
        Rect {
            ix: Interval::from_bounds(x.origin, x.end()).expect("grid extent is non-degenerate"),
            iy: Interval::from_bounds(y.origin, y.end()).expect("grid extent is non-degenerate"),
        }
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin[0] + (ix as f64 + 0.5) * self.cell[0],
            self.origin[1] + (iy as f64 + 0.5) * self.cell[1],
        )
    }

    pub(crate) fn axis(&self, a: usize) -> Axis {
        Axis {
            origin: self.origin[a],
            cell: self.cell[a],
            n: self.dims[a],
        }
    }

    pub(crate) fn from_axes(x: Axis, y: Axis) -> Result<Self> {
        Self::new([x.origin, y.origin], [x.cell, y.cell], [x.n, y.n])
    }

    /// Cell index ranges `[kx0, kx1) x [ky0, ky1)` covered by `rect`.
    fn cell_ranges(&self, rect: &Rect) -> Result<([usize; 2], [usize; 2])> {
        let mut out = [[0usize; 2]; 2];
        for (a, iv) in [(0, rect.ix), (1, rect.iy)] {
            let axis = self.axis(a);
            let lo = axis.snap(iv.lo()).ok_or(Error::MisalignedRect { edge: iv.lo() })?;
            let hi = axis.snap(iv.hi()).ok_or(Error::MisalignedRect { edge: iv.hi() })?;
            if lo < 0 || hi > axis.n as i64 {
                return Err(Error::OutOfExtent);
            }
            out[a] = [lo as usize, hi as usize];
        }
        Ok((out[0], out[1]))
    }
}

/// A real function that is constant on each cell of a uniform grid and zero
/// outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFunctionRepr", into = "GridFunctionRepr")]
pub struct GridFunction {
    grid: Grid2D,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionRepr {
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    values: Vec<f64>,
}

impl TryFrom<GridFunctionRepr> for GridFunction {
    type Error = Error;
    fn try_from(r: GridFunctionRepr) -> Result<Self> {
        GridFunction::new(Grid2D::new(r.origin, r.cell, r.dims)?, r.values)
    }
}

impl From<GridFunction> for GridFunctionRepr {
    fn from(f: GridFunction) -> Self {
        GridFunctionRepr {
            origin: f.grid.origin,
            cell: f.grid.cell,
            dims: f.grid.dims,
            values: f.values,
        }
    }
}

impl GridFunction {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Trusted constructor for values produced by finite arithmetic.
    pub(crate) fn from_parts(grid: Grid2D, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            values: vec![0.0; grid.n_cells()],
            grid,
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.n_cells());
        for ix in 0..grid.nx() {
            for iy in 0..grid.ny() {
                let (x, y) = grid.cell_center(ix, iy);
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    /// `value` on `rect`, stored on a single-cell grid.
    pub fn constant_on(rect: &Rect, value: f64) -> Self {
        let grid = Grid2D::covering(rect, [1, 1]).expect("rect has positive sides");
        Self::from_parts(grid, vec![value])
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.grid.ny() + iy]
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L^q` norm; `q = f64::INFINITY` gives the sup norm.
    pub fn lq_norm(&self, q: f64) -> f64 {
        if q.is_infinite() {
            return self.linf_norm();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(q)).sum();
        (s * self.grid.cell_area()).powf(1.0 / q)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Bounding box of the cells carrying a nonzero value.
    pub fn support_bbox(&self) -> Option<Rect> {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
        for ix in 0..nx {
            for iy in 0..ny {
                if self.values[ix * ny + iy] != 0.0 {
                    x0 = x0.min(ix);
                    x1 = x1.max(ix + 1);
                    y0 = y0.min(iy);
                    y1 = y1.max(iy + 1);
                }
            }
        }
        if x0 == usize::MAX {
            return None;
        }
        let (xa, ya) = (self.grid.axis(0), self.grid.axis(1));
        Rect::from_bounds(xa.edge(x0), xa.edge(x1), ya.edge(y0), ya.edge(y1)).ok()
    }

    /// The function restricted to `rect`, on the sub-grid covering `rect`.
    pub fn restrict(&self, rect: &Rect) -> Result<Self> {
        let ([x0, x1], [y0, y1]) = self.grid.cell_ranges(rect)?;
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidArgument("restriction to an empty cell range".into()));
        }
        let ny = self.grid.ny();
        let mut values = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for ix in x0..x1 {
            values.extend_from_slice(&self.values[ix * ny + y0..ix * ny + y1]);
        }
        let xa = self.grid.axis(0);
        let ya = self.grid.axis(1);
        let grid = Grid2D::new([xa.edge(x0), ya.edge(y0)], self.grid.cell, [x1 - x0, y1 - y0])?;
        Ok(Self::from_parts(grid, values))
    }

    /// The same function expressed on `target`, which must refine this
    /// function's lattice. Cells of `target` outside the extent get zero;
    /// values outside `target` are dropped.
    pub fn resample(&self, target: &Grid2D) -> Result<Self> {
        if *target == self.grid {
            return Ok(self.clone());
        }
        let mx = axis_map(self.grid.axis(0), target.axis(0))?;
        let my = axis_map(self.grid.axis(1), target.axis(1))?;
        let sny = self.grid.ny();
        let mut values = vec![0.0; target.n_cells()];
        for (ix, sx) in mx.iter().enumerate() {
            let Some(sx) = sx else { continue };
            let row = &mut values[ix * target.ny()..(ix + 1) * target.ny()];
            for (out, sy) in row.iter_mut().zip(&my) {
                if let Some(sy) = sy {
                    *out = self.values[sx * sny + sy];
                }
            }
        }
        Ok(Self::from_parts(*target, values))
    }

    /// Re-expresses the function on the coarsest sub-lattice of its grid
    /// (same origin and extent) on which it is still exactly representable.
    pub fn coarsen(&self) -> Self {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let rows_equal = |a: usize, b: usize| self.values[a * ny..(a + 1) * ny] == self.values[b * ny..(b + 1) * ny];
        let cols_equal = |a: usize, b: usize| (0..nx).all(|ix| self.values[ix * ny + a] == self.values[ix * ny + b]);
        let kx = largest_block(nx, rows_equal);
        let ky = largest_block(ny, cols_equal);
        if kx == 1 && ky == 1 {
            return self.clone();
        }
        let (cx, cy) = (nx / kx, ny / ky);
        let mut values = Vec::with_capacity(cx * cy);
        for bx in 0..cx {
            for by in 0..cy {
                values.push(self.values[bx * kx * ny + by * ky]);
            }
        }
        let grid = Grid2D {
            origin: self.grid.origin,
            cell: [self.grid.cell[0] * kx as f64, self.grid.cell[1] * ky as f64],
            dims: [cx, cy],
        };
        Self::from_parts(grid, values)
    }
}

/// Largest divisor `k` of `n` such that lines are equal within each block of `k`.
fn largest_block(n: usize, equal: impl Fn(usize, usize) -> bool) -> usize {
    let mut divisors: Vec<usize> = (1..=n).filter(|k| n.is_multiple_of(*k)).collect();
    divisors.reverse();
    for k in divisors {
        if k == 1 {
            return 1;
        }
        let ok = (0..n / k).all(|b| (1..k).all(|o| equal(b * k, b * k + o)));
        if ok {
            return k;
        }
    }
    1
}

/// `1` on the cells inside `rect`, `0` elsewhere.
pub fn indicator(grid: &Grid2D, rect: &Rect) -> Result<GridFunction> {
    let ([x0, x1], [y0, y1]) = grid.cell_ranges(rect)?;
    let mut f = GridFunction::zeros(*grid);
    let ny = grid.ny();
    for ix in x0..x1 {
        f.values[ix * ny + y0..ix * ny + y1].fill(1.0);
    }
    Ok(f)
}

/// Grid on the common refinement lattice of `a` and `b` covering both extents.
pub fn common_grid(a: &Grid2D, b: &Grid2D, max_cells: usize) -> Result<Grid2D> {
    if a == b {
        return Ok(*a);
    }
    let x = common_axis(a.axis(0), b.axis(0))?;
    let y = common_axis(a.axis(1), b.axis(1))?;
    let needed = x.n.saturating_mul(y.n);
    if needed > max_cells {
        return Err(Error::CellBudgetExceeded { needed, max: max_cells });
    }
    Grid2D::from_axes(x, y)
}

/// Both functions on their common-refinement grid, with the default budget.
pub fn align(f: &GridFunction, g: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    align_within(f, g, DEFAULT_MAX_CELLS)
}

pub fn align_within(f: &GridFunction, g: &GridFunction, max_cells: usize) -> Result<(GridFunction, GridFunction)> {
    if f.grid == g.grid {
        return Ok((f.clone(), g.clone()));
    }
    let grid = common_grid(&f.grid, &g.grid, max_cells)?;
    Ok((f.resample(&grid)?, g.resample(&grid)?))
}

/// The two functions restricted to the overlap of their extents, on the
/// common lattice. `None` when the extents do not overlap.
fn overlap_pair(f: &GridFunction, g: &GridFunction) -> Result<Option<(GridFunction, GridFunction)>> {
    if f.grid == g.grid {
        return Ok(Some((f.clone(), g.clone())));
    }
    let mut axes = [f.grid.axis(0); 2];
    for (a, slot) in axes.iter_mut().enumerate() {
        let (fa, ga) = (f.grid.axis(a), g.grid.axis(a));
        let common = common_axis(fa, ga)?;
        let lo = fa.origin.max(ga.origin);
        let hi = fa.end().min(ga.end());
        if hi <= lo + LATTICE_TOL * common.cell {
            return Ok(None);
        }
        // lo is one of the two origins, so it lies on the common lattice.
        let n = ((hi - lo) / common.cell).round() as usize;
        *slot = Axis {
            origin: lo,
            cell: common.cell,
            n,
        };
    }
    let needed = axes[0].n.saturating_mul(axes[1].n);
    if needed > DEFAULT_MAX_CELLS {
        return Err(Error::CellBudgetExceeded {
            needed,
            max: DEFAULT_MAX_CELLS,
        });
    }
    let grid = Grid2D::from_axes(axes[0], axes[1])?;
    Ok(Some((f.resample(&grid)?, g.resample(&grid)?)))
}

/// `<f, g>` in `L^2(R^2)`, exact for piecewise-constant functions.
pub fn inner_product(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    Ok(match overlap_pair(f, g)? {
        None => 0.0,
        Some((a, b)) => a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>() * a.grid.cell_area(),
    })
}

/// Pointwise product on the common grid.
pub fn product(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    let (a, b) = align(f, g)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect();
    Ok(GridFunction::from_parts(a.grid, values))
}

/// `alpha * f + g` on the common grid.
pub fn axpy(alpha: f64, f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    axpy_within(alpha, f, g, DEFAULT_MAX_CELLS)
}

pub fn axpy_within(alpha: f64, f: &GridFunction, g: &GridFunction, max_cells: usize) -> Result<GridFunction> {
    let (a, b) = align_within(f, g, max_cells)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| alpha * x + y).collect();
    Ok(GridFunction::from_parts(a.grid, values))
}

/// `f - g` on the common grid. Computed as a plain subtraction so that
/// `sub(f, g) == -sub(g, f)` holds bit for bit.
pub fn sub_within(f: &GridFunction, g: &GridFunction, max_cells: usize) -> Result<GridFunction> {
    let (a, b) = align_within(f, g, max_cells)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    Ok(GridFunction::from_parts(a.grid, values))
}
