//! Rectangle atoms of `h^1(R x R)` and atomic decompositions.
//!
//! An atom is a mean-zero function supported on a rectangle `R` with
//! `|a| <= 1/|R|`. A decomposition `f = sum_i c_i a_i` certifies
//! `||f||_{h^1} <= sum_i |c_i|`; the infimum itself is never computed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction, Rect, DEFAULT_MAX_CELLS};
use crate::patch::PatchSum;

/// Multiplicative slack on the size bounds.
pub const ATOM_TOL: f64 = 1e-9;

/// Cancellation threshold relative to `||a||_inf |R|`.
pub const CANCELLATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub rect: Rect,
    pub func: GridFunction,
}

/// An atom measured in `L^q` instead of `L^inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct QAtom {
    pub rect: Rect,
    pub func: GridFunction,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    /// `L^1` mass of the function outside `rect`.
    pub support_excess: f64,
    /// `||a||_q / |R|^{1/q - 1} - 1`; positive values exceed the bound.
    pub size_slack: f64,
    /// `|integral(a)| / (||a||_q |R|^{1 - 1/q})`.
    pub cancellation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Halves split by a vertical line (`x < center` versus `x > center`).
    SplitX,
    SplitY,
}

/// Mass of `f` on cells that are not contained in `rect`.
fn mass_outside(f: &GridFunction, rect: &Rect) -> f64 {
    let g = f.grid();
    let tol = 1e-9 * rect.ix.length().max(rect.iy.length());
    let [hx, hy] = g.cell();
    let [ox, oy] = g.origin();
    let mut excess = 0.0;
    for ix in 0..g.nx() {
        let (x0, x1) = (ox + ix as f64 * hx, ox + (ix + 1) as f64 * hx);
        let x_in = x0 >= rect.ix.lo() - tol && x1 <= rect.ix.hi() + tol;
        for iy in 0..g.ny() {
            let v = f.value(ix, iy);
            if v == 0.0 {
                continue;
            }
            let (y0, y1) = (oy + iy as f64 * hy, oy + (iy + 1) as f64 * hy);
            let y_in = y0 >= rect.iy.lo() - tol && y1 <= rect.iy.hi() + tol;
            if !(x_in && y_in) {
                excess += v.abs() * g.cell_area();
            }
        }
    }
    excess
}

fn validate_q(rect: &Rect, func: &GridFunction, q: f64, tol: f64) -> ValidationReport {
    let area = rect.area();
    let support_excess = mass_outside(func, rect);
    let norm = func.lq_norm(q);
    let bound = if q.is_infinite() {
        1.0 / area
    } else {
        area.powf(1.0 / q - 1.0)
    };
    let size_slack = norm / bound - 1.0;
    let natural = if q.is_infinite() {
        norm * area
    } else {
        norm * area.powf(1.0 - 1.0 / q)
    };
    let cancellation = if natural > 0.0 {
        func.integral().abs() / natural
    } else {
        0.0
    };
    ValidationReport {
        passed: support_excess == 0.0 && size_slack <= tol && cancellation <= CANCELLATION_TOL,
        support_excess,
        size_slack,
        cancellation,
    }
}

impl Atom {
    pub fn new(rect: Rect, func: GridFunction) -> Self {
        Self { rect, func }
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        validate_atom(self, tol)
    }
}

impl QAtom {
    pub fn validate(&self, tol: f64) -> ValidationReport {
        validate_q(&self.rect, &self.func, self.q, tol)
    }
}

/// Checks support containment, the `L^inf` bound and cancellation.
pub fn validate_atom(a: &Atom, tol: f64) -> ValidationReport {
    validate_q(&a.rect, &a.func, f64::INFINITY, tol)
}

fn check_subcells(n: usize, power_of_two: bool) -> Result<()> {
    if n < 2 || (power_of_two && !n.is_power_of_two()) {
        return Err(Error::InvalidArgument(format!(
            "subcell count {n} must be {}",
            if power_of_two { "a power of two >= 2" } else { ">= 2" }
        )));
    }
    Ok(())
}

/// `+1/|R|` on one half of `rect`, `-1/|R|` on the other, on an
/// `n x n` subdivision.
pub fn make_haar_atom(rect: &Rect, n_subcells: usize, orientation: Orientation) -> Result<Atom> {
    check_subcells(n_subcells, true)?;
    let n = n_subcells;
    let grid = Grid2D::covering(rect, [n, n])?;
    let h = 1.0 / rect.area();
    let mut values = Vec::with_capacity(n * n);
    for ix in 0..n {
        for iy in 0..n {
            let k = match orientation {
                Orientation::SplitX => ix,
                Orientation::SplitY => iy,
            };
            values.push(if k < n / 2 { -h } else { h });
        }
    }
    Ok(Atom::new(*rect, GridFunction::new(grid, values)?))
}

/// Seeded random atom: uniform values, centred, then scaled so the sup
/// bound is attained.
pub fn random_atom(rect: &Rect, n_subcells: usize, seed: u64) -> Result<Atom> {
    check_subcells(n_subcells, false)?;
    let n = n_subcells;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1.0 / (rect.area() * peak);
    values.iter_mut().for_each(|v| *v *= scale);
    let grid = Grid2D::covering(rect, [n, n])?;
    Ok(Atom::new(*rect, GridFunction::new(grid, values)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTerm {
    pub coeff: f64,
    #[serde(flatten)]
    pub atom: Atom,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtomicDecomposition {
    pub terms: Vec<DecompositionTerm>,
}

impl AtomicDecomposition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(coeff: f64, atom: Atom) -> Self {
        Self {
            terms: vec![DecompositionTerm { coeff, atom }],
        }
    }

    pub fn push(&mut self, coeff: f64, atom: Atom) {
        self.terms.push(DecompositionTerm { coeff, atom });
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn concat(mut self, other: AtomicDecomposition) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// `sum |c_i|`.
    pub fn mass(&self) -> f64 {
        h1_upper_bound(self)
    }

    pub fn to_patch_sum(&self) -> PatchSum {
        let mut s = PatchSum::new();
        for t in &self.terms {
            s.push(t.coeff, t.atom.func.clone());
        }
        s
    }

    /// Validates every atom; returns the index and report of the first failure.
    pub fn first_invalid(&self, tol: f64) -> Option<(usize, ValidationReport)> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (i, validate_atom(&t.atom, tol)))
            .find(|(_, r)| !r.passed)
    }
}

/// Coefficient mass, an upper bound on the `h^1` norm of the sum.
pub fn h1_upper_bound(d: &AtomicDecomposition) -> f64 {
    d.terms.iter().map(|t| t.coeff.abs()).sum()
}

/// `sum_i c_i a_i` as a single grid function.
pub fn reconstruct_decomposition(d: &AtomicDecomposition) -> Result<GridFunction> {
    reconstruct_decomposition_within(d, DEFAULT_MAX_CELLS)
}

pub fn reconstruct_decomposition_within(d: &AtomicDecomposition, max_cells: usize) -> Result<GridFunction> {
    d.to_patch_sum().to_grid(max_cells)
}

/// Writes a mean-zero `pi_fg` supported in `containing_rect` as
/// `coeff * a` with `a` a 2-atom: `coeff = ||pi_fg||_2 |R|^{1/2}`.
pub fn two_atom_from_pi(pi_fg: &GridFunction, containing_rect: &Rect) -> Result<(f64, QAtom)> {
    let norm = pi_fg.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroFunction);
    }
    if mass_outside(pi_fg, containing_rect) > 0.0 {
        return Err(Error::PreconditionViolated(
            "function is not supported in the containing rectangle".into(),
        ));
    }
    let coeff = norm * containing_rect.area().sqrt();
    let integral = pi_fg.integral();
    if integral.abs() > CANCELLATION_TOL * coeff {
        return Err(Error::MeanNotZero { integral, scale: coeff });
    }
    let atom = QAtom {
        rect: *containing_rect,
        func: pi_fg.scaled(1.0 / coeff),
        q: 2.0,
    };
    Ok((coeff, atom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{indicator, Interval};

    fn unit() -> Rect {
        Rect::from_bounds(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn haar_atom_is_extremal() {
        for o in [Orientation::SplitX, Orientation::SplitY] {
            let a = make_haar_atom(&unit(), 8, o).unwrap();
            assert_eq!(a.func.integral(), 0.0);
            assert_eq!(a.func.linf_norm(), 1.0);
            assert_eq!(a.func.l2_norm(), 1.0);
            let r = validate_atom(&a, ATOM_TOL);
            assert!(r.passed);
            assert_eq!(r.cancellation, 0.0);
            assert_eq!(r.size_slack, 0.0);
        }
        let wide = Rect::from_bounds(0.0, 4.0, 0.0, 0.5).unwrap();
        let a = make_haar_atom(&wide, 4, Orientation::SplitY).unwrap();
        assert!((a.func.l2_norm() - wide.area().powf(-0.5)).abs() < 1e-15);
        assert!(make_haar_atom(&unit(), 6, Orientation::SplitX).is_err());
    }

    #[test]
    fn validation_catches_each_failure() {
        let c = GridFunction::constant_on(&unit(), 1.0);
        let r = validate_atom(&Atom::new(unit(), c), ATOM_TOL);
        assert!(!r.passed);
        assert_eq!(r.cancellation, 1.0);

        let mut a = make_haar_atom(&unit(), 4, Orientation::SplitX).unwrap();
        a.func = a.func.scaled(2.0);
        let r = validate_atom(&a, ATOM_TOL);
        assert!(!r.passed);
        assert!((r.size_slack - 1.0).abs() < 1e-15);

        let a = make_haar_atom(&unit(), 4, Orientation::SplitX).unwrap();
        let small = Rect::new(Interval::new(0.25, 0.25).unwrap(), Interval::new(0.5, 0.5).unwrap());
        let r = validate_atom(&Atom::new(small, a.func.scaled(0.5)), ATOM_TOL);
        assert!(!r.passed);
        assert!(r.support_excess > 0.0);
    }

    #[test]
    fn random_atoms_are_valid_and_deterministic() {
        let rect = Rect::from_bounds(-1.0, 2.0, 0.5, 1.0).unwrap();
        for seed in 0..20 {
            let a = random_atom(&rect, 8, seed).unwrap();
            assert!(validate_atom(&a, ATOM_TOL).passed, "seed {seed}");
            assert!(a.func.integral().abs() < 1e-14);
            assert_eq!(a, random_atom(&rect, 8, seed).unwrap());
        }
        assert_ne!(random_atom(&rect, 8, 1).unwrap(), random_atom(&rect, 8, 2).unwrap());
        assert!(random_atom(&rect, 1, 0).is_err());
    }

    #[test]
    fn upper_bound_is_coefficient_mass() {
        let a = make_haar_atom(&unit(), 2, Orientation::SplitX).unwrap();
        let b = make_haar_atom(&unit(), 2, Orientation::SplitY).unwrap();
        assert_eq!(h1_upper_bound(&AtomicDecomposition::new()), 0.0);
        assert_eq!(h1_upper_bound(&AtomicDecomposition::single(1.0, a.clone())), 1.0);
        let mut d = AtomicDecomposition::new();
        d.push(0.5, a);
        d.push(-0.25, b);
        assert_eq!(d.mass(), 0.75);
    }

    #[test]
    fn reconstruction_is_linear() {
        let a = make_haar_atom(&unit(), 4, Orientation::SplitX).unwrap();
        let shifted = Rect::from_bounds(1.0, 3.0, 0.0, 1.0).unwrap();
        let b = random_atom(&shifted, 4, 7).unwrap();
        let empty = reconstruct_decomposition(&AtomicDecomposition::new()).unwrap();
        assert!(empty.is_zero());
        let single = reconstruct_decomposition(&AtomicDecomposition::single(2.0, a.clone())).unwrap();
        assert_eq!(single.restrict(&unit()).unwrap(), a.func.scaled(2.0));
        let mut d = AtomicDecomposition::single(2.0, a.clone());
        d.push(-3.0, b.clone());
        let r = reconstruct_decomposition(&d).unwrap();
        assert_eq!(r.restrict(&unit()).unwrap(), a.func.scaled(2.0));
        let rb = r.restrict(&shifted).unwrap();
        let expected = b.func.scaled(-3.0).resample(rb.grid()).unwrap();
        assert_eq!(rb, expected);
    }

    #[test]
    fn two_atom_normalisation() {
        let grid = Grid2D::new([0.0, 0.0], [0.5, 0.5], [2, 2]).unwrap();
        let pi = GridFunction::new(grid, vec![0.3, -0.3, -0.3, 0.3]).unwrap();
        let (coeff, atom) = two_atom_from_pi(&pi, &unit()).unwrap();
        assert!((coeff - 0.3).abs() < 1e-15);
        assert!((atom.func.l2_norm() - 1.0).abs() < 1e-15);
        assert!(atom.validate(ATOM_TOL).passed);
        let back = atom.func.scaled(coeff);
        for (x, y) in back.values().iter().zip(pi.values()) {
            assert!((x - y).abs() <= 1e-15 * y.abs());
        }
        assert_eq!(
            two_atom_from_pi(&GridFunction::zeros(grid), &unit()),
            Err(Error::ZeroFunction)
        );
        let biased = indicator(&grid, &unit()).unwrap();
        assert!(matches!(
            two_atom_from_pi(&biased, &unit()),
            Err(Error::MeanNotZero { .. })
        ));
    }

    #[test]
    fn decomposition_json_schema() {
        let a = make_haar_atom(&unit(), 2, Orientation::SplitX).unwrap();
        let d = AtomicDecomposition::single(0.5, a);
        let v: serde_json::Value = serde_json::to_value(&d).unwrap();
        let t = &v["terms"][0];
        assert_eq!(t["coeff"], 0.5);
        assert_eq!(t["rect"]["cx"], 0.5);
        assert_eq!(t["func"]["dims"][0], 2);
        let back: AtomicDecomposition = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }
}
