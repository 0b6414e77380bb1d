//! Lazily summed collections of grid functions.
//!
//! Reconstructions in the factorization pipeline are sums of many small
//! functions whose supports spread over regions far too large for a single
//! uniform grid at the finest cell size. [`PatchSum`] keeps the summands
//! separate and evaluates derived quantities (norms, the dense sum when it
//! fits) on the exact common partition, obtained by recursively splitting
//! the bounding box along patch cell boundaries until every patch is
//! constant on each piece.

use crate::error::{Error, Result};
use crate::grid::{rational_approx, real_gcd, Grid2D, GridFunction, LATTICE_TOL};

#[derive(Debug, Clone, Default)]
pub struct PatchSum {
    patches: Vec<(f64, GridFunction)>,
}

/// A patch expressed on the global integer lattice.
struct IntPatch<'a> {
    origin: [i64; 2],
    cell: [i64; 2],
    dims: [usize; 2],
    coeff: f64,
    values: &'a [f64],
}

impl IntPatch<'_> {
    fn lo(&self, axis: usize) -> i64 {
        self.origin[axis]
    }

    fn hi(&self, axis: usize) -> i64 {
        self.origin[axis] + self.cell[axis] * self.dims[axis] as i64
    }

    fn covers(&self, region: &[[i64; 2]; 2]) -> bool {
        (0..2).all(|a| self.lo(a) <= region[a][0] && self.hi(a) >= region[a][1])
    }

    fn overlaps(&self, region: &[[i64; 2]; 2]) -> bool {
        (0..2).all(|a| self.lo(a) < region[a][1] && self.hi(a) > region[a][0])
    }

    /// A cell boundary strictly inside `(lo, hi)` along `axis`, closest to the midpoint.
    fn split_candidate(&self, axis: usize, lo: i64, hi: i64) -> Option<i64> {
        let (o, c, n) = (self.origin[axis], self.cell[axis], self.dims[axis] as i64);
        let mid2 = lo + hi;
        let k_mid = ((mid2 - 2 * o) as f64 / (2 * c) as f64).round() as i64;
        let k_first = ((lo - o).div_euclid(c) + 1).max(0);
        let mut best: Option<i64> = None;
        for k in [k_mid - 1, k_mid, k_mid + 1, k_first] {
            if !(0..=n).contains(&k) {
                continue;
            }
            let pos = o + k * c;
            if pos <= lo || pos >= hi {
                continue;
            }
            if best.is_none_or(|b| (2 * pos - mid2).abs() < (2 * b - mid2).abs()) {
                best = Some(pos);
            }
        }
        best
    }

    fn value_at(&self, x: i64, y: i64) -> f64 {
        let ix = ((x - self.origin[0]) / self.cell[0]) as usize;
        let iy = ((y - self.origin[1]) / self.cell[1]) as usize;
        self.coeff * self.values[ix * self.dims[1] + iy]
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl PatchSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coeff: f64, f: GridFunction) {
        self.patches.push((coeff, f));
    }

    pub fn extend(&mut self, other: PatchSum) {
        self.patches.extend(other.patches);
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn patches(&self) -> &[(f64, GridFunction)] {
        &self.patches
    }

    pub fn integral(&self) -> f64 {
        let mut acc = Accumulator::default();
        for (c, f) in &self.patches {
            acc.add(c * f.integral());
        }
        acc.total()
    }

    /// Common lattice of all patches: a reference origin and cell sizes of
    /// which every patch origin offset and cell size is an integer multiple.
    fn lattice(&self) -> Result<([f64; 2], [f64; 2])> {
        let first = self.patches[0].1.grid();
        let origin = first.origin();
        let mut cell = first.cell();
        for a in 0..2 {
            for (_, f) in &self.patches[1..] {
                cell[a] = real_gcd(cell[a], f.grid().cell()[a]).ok_or_else(|| {
                    Error::LatticeMismatch(format!("patch cell {} is incommensurable", f.grid().cell()[a]))
                })?;
            }
            for (_, f) in &self.patches[1..] {
                let t = (f.grid().origin()[a] - origin[a]) / cell[a];
                let (_, q) = rational_approx(t, LATTICE_TOL * t.abs().max(1.0)).ok_or_else(|| {
                    Error::LatticeMismatch(format!("patch origin {} is off lattice", f.grid().origin()[a]))
                })?;
                cell[a] /= q as f64;
            }
        }
        Ok((origin, cell))
    }

    fn int_patches(&self) -> Result<(Vec<IntPatch<'_>>, [f64; 2], [f64; 2])> {
        let (origin, cell) = self.lattice()?;
        let to_int = |v: f64, a: usize| -> Result<i64> {
            let t = v / cell[a];
            let k = t.round();
            if (t - k).abs() > LATTICE_TOL * t.abs().max(1.0) || k.abs() > 1e15 {
                return Err(Error::LatticeMismatch(format!("{v} is off the common lattice")));
            }
            Ok(k as i64)
        };
        let mut out = Vec::with_capacity(self.patches.len());
        for (coeff, f) in &self.patches {
            let g = f.grid();
            out.push(IntPatch {
                origin: [
                    to_int(g.origin()[0] - origin[0], 0)?,
                    to_int(g.origin()[1] - origin[1], 1)?,
                ],
                cell: [to_int(g.cell()[0], 0)?, to_int(g.cell()[1], 1)?],
                dims: g.dims(),
                coeff: *coeff,
                values: f.values(),
            });
        }
        Ok((out, origin, cell))
    }

    /// Visits the exact common partition: `visit(region, value)` for every
    /// piece of the bounding box on which all patches are constant.
    fn for_each_piece(&self, mut visit: impl FnMut(&[[i64; 2]; 2], f64)) -> Result<()> {
        if self.patches.is_empty() {
            return Ok(());
        }
        let (patches, _, _) = self.int_patches()?;
        let mut region = [[i64::MAX, i64::MIN]; 2];
        for p in &patches {
            for (a, r) in region.iter_mut().enumerate() {
                r[0] = r[0].min(p.lo(a));
                r[1] = r[1].max(p.hi(a));
            }
        }
        let idx: Vec<usize> = (0..patches.len()).collect();
        split_visit(&patches, region, idx, &mut visit);
        Ok(())
    }

    pub fn l2_norm(&self) -> Result<f64> {
        if self.patches.is_empty() {
            return Ok(0.0);
        }
        let (_, _, cell) = self.int_patches()?;
        let mut acc = Accumulator::default();
        self.for_each_piece(|r, v| {
            if v != 0.0 {
                let area = ((r[0][1] - r[0][0]) as f64) * ((r[1][1] - r[1][0]) as f64);
                acc.add(v * v * area);
            }
        })?;
        Ok((acc.total() * cell[0] * cell[1]).sqrt())
    }

    pub fn linf_norm(&self) -> Result<f64> {
        let mut m = 0.0f64;
        self.for_each_piece(|_, v| m = m.max(v.abs()))?;
        Ok(m)
    }

    /// The sum as a single function on the common lattice.
    pub fn to_grid(&self, max_cells: usize) -> Result<GridFunction> {
        if self.patches.is_empty() {
            return Ok(GridFunction::zeros(Grid2D::new([0.0, 0.0], [1.0, 1.0], [1, 1])?));
        }
        let (patches, origin, cell) = self.int_patches()?;
        let mut lo = [i64::MAX; 2];
        let mut hi = [i64::MIN; 2];
        for p in &patches {
            for a in 0..2 {
                lo[a] = lo[a].min(p.lo(a));
                hi[a] = hi[a].max(p.hi(a));
            }
        }
        let nx = (hi[0] - lo[0]) as usize;
        let ny = (hi[1] - lo[1]) as usize;
        let needed = nx.saturating_mul(ny);
        if needed > max_cells {
            return Err(Error::CellBudgetExceeded { needed, max: max_cells });
        }
        let mut values = vec![0.0; needed];
        for p in &patches {
            for ix in 0..p.dims[0] {
                let x0 = (p.origin[0] + ix as i64 * p.cell[0] - lo[0]) as usize;
                for iy in 0..p.dims[1] {
                    let v = p.coeff * p.values[ix * p.dims[1] + iy];
                    if v == 0.0 {
                        continue;
                    }
                    let y0 = (p.origin[1] + iy as i64 * p.cell[1] - lo[1]) as usize;
                    for x in x0..x0 + p.cell[0] as usize {
                        let row = &mut values[x * ny + y0..x * ny + y0 + p.cell[1] as usize];
                        row.iter_mut().for_each(|o| *o += v);
                    }
                }
            }
        }
        let grid = Grid2D::new(
            [origin[0] + lo[0] as f64 * cell[0], origin[1] + lo[1] as f64 * cell[1]],
            cell,
            [nx, ny],
        )?;
        GridFunction::new(grid, values)
    }
}

fn split_visit(
    patches: &[IntPatch<'_>],
    region: [[i64; 2]; 2],
    idx: Vec<usize>,
    visit: &mut impl FnMut(&[[i64; 2]; 2], f64),
) {
    if idx.is_empty() {
        visit(&region, 0.0);
        return;
    }
    let varies = |i: usize| (0..2).any(|a| patches[i].split_candidate(a, region[a][0], region[a][1]).is_some());
    let (varying, constant): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| varies(i));
    let mut base = Accumulator::default();
    for &i in &constant {
        base.add(patches[i].value_at(region[0][0], region[1][0]));
    }
    let base = base.total();
    if varying.is_empty() {
        visit(&region, base);
        return;
    }
    if shares_lattice(patches, &varying) && varying.iter().all(|&i| patches[i].covers(&region)) {
        // Every remaining breakpoint lies on one lattice: enumerate its cells.
        let cuts = |a: usize| {
            let p = &patches[varying[0]];
            let [lo, hi] = region[a];
            let (o, c) = (p.origin[a], p.cell[a]);
            let mut out = vec![lo];
            let mut pos = o + ((lo - o).div_euclid(c) + 1) * c;
            while pos < hi {
                out.push(pos);
                pos += c;
            }
            out.push(hi);
            out
        };
        let (xs, ys) = (cuts(0), cuts(1));
        for xw in xs.windows(2) {
            for yw in ys.windows(2) {
                let mut acc = Accumulator::default();
                acc.add(base);
                for &i in &varying {
                    acc.add(patches[i].value_at(xw[0], yw[0]));
                }
                visit(&[[xw[0], xw[1]], [yw[0], yw[1]]], acc.total());
            }
        }
        return;
    }
    let mut best: Option<(usize, i64, f64)> = None;
    for &i in &varying {
        for (a, &[lo, hi]) in region.iter().enumerate() {
            if let Some(pos) = patches[i].split_candidate(a, lo, hi) {
                let score = ((2 * pos - lo - hi) as f64 / (hi - lo) as f64).abs();
                if best.is_none_or(|(_, _, s)| score < s) {
                    best = Some((a, pos, score));
                }
            }
        }
    }
    let (a, pos, _) = best.expect("a varying patch has a split candidate");
    let mut left = region;
    left[a][1] = pos;
    let mut right = region;
    right[a][0] = pos;
    let li: Vec<usize> = idx.iter().copied().filter(|&i| patches[i].overlaps(&left)).collect();
    let ri: Vec<usize> = idx.into_iter().filter(|&i| patches[i].overlaps(&right)).collect();
    split_visit(patches, left, li, visit);
    split_visit(patches, right, ri, visit);
}

/// Whether all listed patches have the same cells and cell boundaries.
fn shares_lattice(patches: &[IntPatch<'_>], idx: &[usize]) -> bool {
    let p = &patches[idx[0]];
    idx[1..].iter().all(|&i| {
        let q = &patches[i];
        (0..2).all(|a| q.cell[a] == p.cell[a] && (q.origin[a] - p.origin[a]).rem_euclid(p.cell[a]) == 0)
    })
}
