//! Mean-oscillation estimators for `bmo(R x R)`.
//!
//! [`bmo_norm`] maximises `|R|^{-1} \int_R |b - b_R|` over a family of
//! cell-aligned rectangles inside the grid extent; every rectangle is
//! evaluated exactly, so the result is a lower bound for the supremum over
//! aligned rectangles (and equals it for [`RectFamily::AllAligned`]).
//! [`bmo_slicewise`] is the sum of the worst one-parameter BMO norms of the
//! rows and of the columns.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Largest grid side on which the exhaustive scan is allowed.
pub const ALL_ALIGNED_LIMIT: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RectFamily {
    /// Every rectangle made of whole cells.
    AllAligned,
    /// Products of dyadic intervals of the cell index lattice, any eccentricity.
    Dyadic,
    /// The dyadic family plus `count` uniformly drawn aligned rectangles.
    Sampled { count: usize, seed: u64 },
}

impl RectFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RectFamily::AllAligned => "all_aligned",
            RectFamily::Dyadic => "dyadic",
            RectFamily::Sampled { .. } => "sampled",
        }
    }
}

/// Cell-index rectangle `[x0, x1) x [y0, y1)`.
type CellRect = [usize; 4];

/// Prefix sums over a row-major array, for O(1) rectangle means.
struct Prefix {
    ny: usize,
    sums: Vec<f64>,
}

impl Prefix {
    fn new(values: &[f64], nx: usize, ny: usize) -> Self {
        let w = ny + 1;
        let mut sums = vec![0.0; (nx + 1) * w];
        for ix in 0..nx {
            let mut row = 0.0;
            for iy in 0..ny {
                row += values[ix * ny + iy];
                sums[(ix + 1) * w + iy + 1] = sums[ix * w + iy + 1] + row;
            }
        }
        Self { ny, sums }
    }

    fn sum(&self, [x0, x1, y0, y1]: CellRect) -> f64 {
        let w = self.ny + 1;
        self.sums[x1 * w + y1] - self.sums[x0 * w + y1] - self.sums[x1 * w + y0] + self.sums[x0 * w + y0]
    }
}

/// Mean oscillation over a cell rectangle; cells are congruent so the
/// normalised integral is an average over cells.
fn oscillation(values: &[f64], ny: usize, prefix: &Prefix, r: CellRect) -> f64 {
    let [x0, x1, y0, y1] = r;
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mean = prefix.sum(r) / n;
    let mut acc = 0.0;
    for ix in x0..x1 {
        for &v in &values[ix * ny + y0..ix * ny + y1] {
            acc += (v - mean).abs();
        }
    }
    acc / n
}

/// Larger oscillation wins; ties go to the lexicographically smaller rectangle.
fn better(a: (f64, CellRect), b: (f64, CellRect)) -> (f64, CellRect) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

fn dyadic_intervals(n: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    let mut len = 1;
    while len <= n {
        out.extend((0..n / len).map(|i| [i * len, (i + 1) * len]));
        len *= 2;
    }
    out
}

fn family_rects(family: &RectFamily, nx: usize, ny: usize) -> Vec<CellRect> {
    let (dx, dy) = (dyadic_intervals(nx), dyadic_intervals(ny));
    let mut rects: Vec<CellRect> = dx
        .iter()
        .flat_map(|a| dy.iter().map(move |b| [a[0], a[1], b[0], b[1]]))
        .collect();
    if let RectFamily::Sampled { count, seed } = *family {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            [a.min(b), a.max(b) + 1]
        };
        for _ in 0..count {
            let [x0, x1] = draw(nx);
            let [y0, y1] = draw(ny);
            rects.push([x0, x1, y0, y1]);
        }
    }
    rects
}

/// Largest mean oscillation over the family together with the maximising
/// cell rectangle `[x0, x1, y0, y1]`.
pub fn bmo_norm_argmax(b: &GridFunction, family: &RectFamily) -> Result<(f64, [usize; 4])> {
    let [nx, ny] = b.grid().dims();
    let values = b.values();
    let prefix = Prefix::new(values, nx, ny);
    let start = (0.0, [0, 1, 0, 1]);
    let best = match family {
        RectFamily::AllAligned => {
            if nx > ALL_ALIGNED_LIMIT || ny > ALL_ALIGNED_LIMIT {
                return Err(Error::ScanBudgetExceeded {
                    nx,
                    ny,
                    limit: ALL_ALIGNED_LIMIT,
                });
            }
            (0..nx)
                .into_par_iter()
                .map(|x0| {
                    let mut best = start;
                    for x1 in x0 + 1..=nx {
                        for y0 in 0..ny {
                            for y1 in y0 + 1..=ny {
                                let r = [x0, x1, y0, y1];
                                best = better(best, (oscillation(values, ny, &prefix, r), r));
                            }
                        }
                    }
                    best
                })
                .reduce(|| start, better)
        }
        _ => family_rects(family, nx, ny)
            .into_par_iter()
            .map(|r| (oscillation(values, ny, &prefix, r), r))
            .reduce(|| start, better),
    };
    Ok(best)
}

/// `max_{R in family} |R|^{-1} \int_R |b - b_R|`.
pub fn bmo_norm(b: &GridFunction, family: &RectFamily) -> Result<f64> {
    Ok(bmo_norm_argmax(b, family)?.0)
}

/// One-parameter BMO of a sequence of cell values: exact scan over all
/// intervals of whole cells.
pub fn bmo_1d(v: &[f64]) -> f64 {
    let n = v.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, x) in v.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x;
    }
    let mut best = 0.0f64;
    for a in 0..n {
        for b in a + 2..=n {
            let len = (b - a) as f64;
            let mean = (prefix[b] - prefix[a]) / len;
            let osc = v[a..b].iter().map(|x| (x - mean).abs()).sum::<f64>() / len;
            best = best.max(osc);
        }
    }
    best
}

/// Worst one-parameter BMO norm of `b(x, .)` over `x`, plus that of
/// `b(., y)` over `y`.
pub fn bmo_slicewise(b: &GridFunction) -> f64 {
    let [nx, ny] = b.grid().dims();
    let values = b.values();
    let in_y = (0..nx)
        .into_par_iter()
        .map(|ix| bmo_1d(&values[ix * ny..(ix + 1) * ny]))
        .reduce(|| 0.0, f64::max);
    let in_x = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let col: Vec<f64> = (0..nx).map(|ix| values[ix * ny + iy]).collect();
            bmo_1d(&col)
        })
        .reduce(|| 0.0, f64::max);
    in_y + in_x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoRow {
    pub function_id: String,
    pub family: String,
    pub bmo: f64,
    pub slicewise: f64,
    /// `bmo / slicewise`, absent when either vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmoReport {
    pub rows: Vec<BmoRow>,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

impl BmoReport {
    /// `max_ratio / min_ratio` over the rows that have a ratio.
    pub fn spread(&self) -> Option<f64> {
        Some(self.max_ratio? / self.min_ratio?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("function_id,family,bmo,slicewise,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.function_id, r.family, r.bmo, r.slicewise, ratio
            );
        }
        out
    }
}

pub(crate) fn ratio_range(ratios: impl Iterator<Item = f64>) -> (Option<f64>, Option<f64>) {
    ratios.fold((None, None), |(lo, hi): (Option<f64>, Option<f64>), r| {
        (Some(lo.map_or(r, |l| l.min(r))), Some(hi.map_or(r, |h| h.max(r))))
    })
}

/// Compares the two estimators over a list of `(id, function)` pairs.
pub fn bmo_equivalence_report(functions: &[(String, GridFunction)], family: &RectFamily) -> Result<BmoReport> {
    let rows = functions
        .iter()
        .map(|(id, b)| {
            let bmo = bmo_norm(b, family)?;
            let slicewise = bmo_slicewise(b);
            Ok(BmoRow {
                function_id: id.clone(),
                family: family.name().to_string(),
                bmo,
                slicewise,
                ratio: (bmo > 0.0 && slicewise > 0.0).then(|| bmo / slicewise),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (min_ratio, max_ratio) = ratio_range(rows.iter().filter_map(|r| r.ratio));
    Ok(BmoReport {
        rows,
        min_ratio,
        max_ratio,
    })
}
