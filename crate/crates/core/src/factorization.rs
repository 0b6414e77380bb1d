//! Weak factorization of rectangle atoms through the bilinear form
//! `Pi(g, h) = h H_1H_2 g - g H_1H_2 h`.
//!
//! [`approximate_atom`] pairs an atom `a` on `R` with the indicator of a far
//! translate `R~` so that `Pi(f, g)` reproduces `a` up to an error of order
//! `1/M`. [`decompose_error`] writes that error as a short atomic sum of mass
//! `O(log M / M)`, and [`weak_factorize`] iterates the two steps on the
//! resulting atoms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{Atom, AtomicDecomposition};
use crate::error::{Error, Result};
use crate::grid::{align_within, sub_within, Grid2D, GridFunction, Rect, DEFAULT_MAX_CELLS, LATTICE_TOL};
use crate::patch::PatchSum;
use crate::singular::{apply_h1h2, apply_h1h2_onto, eval_h1h2_point};

/// `Pi(g, h)` on the common grid of `g` and `h`.
pub fn pi_form(g: &GridFunction, h: &GridFunction) -> Result<GridFunction> {
    pi_form_within(g, h, DEFAULT_MAX_CELLS)
}

pub fn pi_form_within(g: &GridFunction, h: &GridFunction, max_cells: usize) -> Result<GridFunction> {
    let (g, h) = align_within(g, h, max_cells)?;
    let (hg, hh) = (apply_h1h2(&g), apply_h1h2(&h));
    let left: Vec<f64> = h.values().iter().zip(hg.values()).map(|(a, b)| a * b).collect();
    let right: Vec<f64> = g.values().iter().zip(hh.values()).map(|(a, b)| a * b).collect();
    let grid = *g.grid();
    sub_within(
        &GridFunction::from_parts(grid, left),
        &GridFunction::from_parts(grid, right),
        max_cells,
    )
}

/// The two products making up `Pi(g, h)`, each on its own small grid:
/// `(h * H_1H_2 g` on `h`'s grid, `g * H_1H_2 h` on `g`'s grid`)`.
///
/// `Pi(g, h)` is the first minus the second. Both grids must share a cell
/// size and lattice; far-apart supports then never need a common grid.
pub fn pi_form_parts(g: &GridFunction, h: &GridFunction) -> Result<(GridFunction, GridFunction)> {
    let hg = apply_h1h2_onto(g, h.grid())?;
    let hh = apply_h1h2_onto(h, g.grid())?;
    let left = h.values().iter().zip(hg.values()).map(|(a, b)| a * b).collect();
    let right = g.values().iter().zip(hh.values()).map(|(a, b)| a * b).collect();
    Ok((
        GridFunction::from_parts(*h.grid(), left),
        GridFunction::from_parts(*g.grid(), right),
    ))
}

/// Adds `coeff * Pi(g, h)` to `sum`, by parts when the grids allow it.
fn push_pi(sum: &mut PatchSum, coeff: f64, g: &GridFunction, h: &GridFunction, max_cells: usize) -> Result<()> {
    match pi_form_parts(g, h) {
        Ok((left, right)) => {
            sum.push(coeff, left);
            sum.push(-coeff, right);
        }
        Err(Error::IncompatibleGrids(_)) => sum.push(coeff, pi_form_within(g, h, max_cells)?),
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Smallest even `M >= 2` with `ln(M) / M < eps`.
pub fn choose_m(eps: f64) -> Result<u64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
    }
    let ratio = |m: u64| (m as f64).ln() / m as f64;
    if ratio(2) < eps {
        return Ok(2);
    }
    // ln(M)/M decreases for M >= 3, so bisect over even M >= 4.
    let (mut lo, mut hi) = (1u64, 2u64);
    while ratio(2 * hi) >= eps {
        lo = hi;
        hi *= 2;
        if hi > 1 << 52 {
            return Err(Error::InvalidArgument(format!("epsilon {eps} is too small")));
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ratio(2 * mid) < eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(2 * hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    pub m: u64,
    pub eps: f64,
    pub rect: Rect,
    pub shifted_rect: Rect,
    /// `1` on `shifted_rect`.
    pub f_ind: GridFunction,
    /// The atom divided by `point_value`.
    pub g_scaled: GridFunction,
    /// `a - Pi(f_ind, g_scaled)` on a grid covering both rectangles.
    pub error: GridFunction,
    /// The error on `rect`.
    pub w1: GridFunction,
    /// The error on `shifted_rect`.
    pub w2: GridFunction,
    /// `H_1H_2 f_ind` at the center of `rect`.
    pub point_value: f64,
    /// `||f_ind||_2 ||g_scaled||_2`.
    pub c_eps: f64,
}

impl ApproxResult {
    pub fn error_l2(&self) -> f64 {
        (self.w1.l2_norm().powi(2) + self.w2.l2_norm().powi(2)).sqrt()
    }
}

struct ApproxParts {
    rect: Rect,
    shifted_rect: Rect,
    f_ind: GridFunction,
    g_scaled: GridFunction,
    w1: GridFunction,
    w2: GridFunction,
    point_value: f64,
    c_eps: f64,
}

/// The atom's function on a grid whose extent is exactly the atom's rectangle.
fn func_on_rect(a: &Atom) -> Result<GridFunction> {
    grid_on_rect(&a.func, &a.rect)
}

fn grid_on_rect(f: &GridFunction, rect: &Rect) -> Result<GridFunction> {
    let cell = f.grid().cell();
    let mut dims = [0usize; 2];
    for (d, (side, c)) in dims
        .iter_mut()
        .zip([rect.ix.length(), rect.iy.length()].into_iter().zip(cell))
    {
        let t = side / c;
        let k = t.round();
        if k < 1.0 || (t - k).abs() > LATTICE_TOL * t.max(1.0) {
            return Err(Error::MisalignedRect { edge: side });
        }
        *d = k as usize;
    }
    let target = Grid2D::new([rect.ix.lo(), rect.iy.lo()], cell, dims)?;
    f.resample(&target)
}

fn approx_parts(a: &Atom, m: u64) -> Result<ApproxParts> {
    if m < 1 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    let func = func_on_rect(a)?;
    let rect = a.rect;
    let (lx, ly) = rect.sides();
    let mf = m as f64;
    let shifted_rect = rect.translate(mf * lx, mf * ly);
    let src = func.grid();
    let f_grid = Grid2D::new(
        [src.origin()[0] + mf * lx, src.origin()[1] + mf * ly],
        src.cell(),
        src.dims(),
    )?;
    let f_ind = GridFunction::from_parts(f_grid, vec![1.0; f_grid.n_cells()]);
    let point_value = eval_h1h2_point(&GridFunction::constant_on(&shifted_rect, 1.0), rect.center())?;
    let g_scaled = func.scaled(1.0 / point_value);
    // Pi(f, g) = g H f - f H g: the first product lives on R, the second on R~.
    let (on_r, on_shift) = pi_form_parts(&f_ind, &g_scaled)?;
    let w1 = GridFunction::from_parts(
        *func.grid(),
        func.values().iter().zip(on_r.values()).map(|(x, y)| x - y).collect(),
    );
    let w2 = on_shift;
    let c_eps = f_ind.l2_norm() * g_scaled.l2_norm();
    Ok(ApproxParts {
        rect,
        shifted_rect,
        f_ind,
        g_scaled,
        w1,
        w2,
        point_value,
        c_eps,
    })
}

/// Approximates `a` by `Pi(1_{R~}, a / H_1H_2 1_{R~}(x_R))` with `M = choose_m(eps)`.
pub fn approximate_atom(a: &Atom, eps: f64) -> Result<ApproxResult> {
    approximate_atom_with_m(a, eps, choose_m(eps)?)
}

/// As [`approximate_atom`] with the shift factor `M` given explicitly.
pub fn approximate_atom_with_m(a: &Atom, eps: f64, m: u64) -> Result<ApproxResult> {
    let p = approx_parts(a, m)?;
    let mut error = PatchSum::new();
    error.push(1.0, p.w1.clone());
    error.push(1.0, p.w2.clone());
    let error = error.to_grid(DEFAULT_MAX_CELLS)?;
    Ok(ApproxResult {
        m,
        eps,
        rect: p.rect,
        shifted_rect: p.shifted_rect,
        f_ind: p.f_ind,
        g_scaled: p.g_scaled,
        error,
        w1: p.w1,
        w2: p.w2,
        point_value: p.point_value,
        c_eps: p.c_eps,
    })
}

/// One emitted atom of the error decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// 1 for the chain based on `R`, 2 for the chain based on `R~`.
    pub j: u8,
    /// Chain step; `i0 + 1` is the tail.
    pub i: u32,
    pub coeff: f64,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionTrace {
    pub i0: u32,
    /// `2^i R` for `i = 0..=i0`.
    pub chain_r: Vec<Rect>,
    /// `2^i R~` for `i = 0..=i0`.
    pub chain_r_tilde: Vec<Rect>,
    pub tail_rect: Rect,
    /// Integrals of the two restrictions `f_1`, `f_2`.
    pub integrals: [f64; 2],
    /// `||w||_inf M |R|`.
    pub bound_constant: f64,
    pub steps: Vec<TraceStep>,
}

fn restrict_to(w: &GridFunction, rect: &Rect) -> Result<GridFunction> {
    grid_on_rect(w, rect)
}

fn l1(f: &GridFunction) -> f64 {
    f.values().iter().map(|v| v.abs()).sum::<f64>() * f.grid().cell_area()
}

/// Atomic decomposition of a mean-zero `w` supported on `R u R~`.
pub fn decompose_error(
    w: &GridFunction,
    r: &Rect,
    r_tilde: &Rect,
    m: u64,
) -> Result<(AtomicDecomposition, DecompositionTrace)> {
    let disjoint = r.ix.hi() <= r_tilde.ix.lo() + LATTICE_TOL * r.ix.length()
        || r_tilde.ix.hi() <= r.ix.lo() + LATTICE_TOL * r.ix.length()
        || r.iy.hi() <= r_tilde.iy.lo() + LATTICE_TOL * r.iy.length()
        || r_tilde.iy.hi() <= r.iy.lo() + LATTICE_TOL * r.iy.length();
    if !disjoint {
        return Err(Error::PreconditionViolated("R and R~ overlap".into()));
    }
    let f1 = restrict_to(w, r)?;
    let f2 = restrict_to(w, r_tilde)?;
    let total = l1(w);
    if total - l1(&f1) - l1(&f2) > 1e-12 * total {
        return Err(Error::PreconditionViolated("w is not supported on R u R~".into()));
    }
    let integral = w.integral();
    if integral.abs() > 1e-12 * total {
        return Err(Error::PreconditionViolated(format!(
            "w is not mean-zero: integral {integral:e} against L^1 norm {total:e}"
        )));
    }
    decompose_pieces(&f1, &f2, r, r_tilde, m, DEFAULT_MAX_CELLS)
}

fn decompose_pieces(
    f1: &GridFunction,
    f2: &GridFunction,
    r: &Rect,
    r_tilde: &Rect,
    m: u64,
    max_cells: usize,
) -> Result<(AtomicDecomposition, DecompositionTrace)> {
    if (r.sides().0 - r_tilde.sides().0).abs() > LATTICE_TOL * r.sides().0
        || (r.sides().1 - r_tilde.sides().1).abs() > LATTICE_TOL * r.sides().1
    {
        return Err(Error::PreconditionViolated("R and R~ must have equal sides".into()));
    }
    let mut i0 = 1u32;
    while !r.dilate(2f64.powi(i0 as i32)).contains(r_tilde) {
        i0 += 1;
        if i0 > 60 {
            return Err(Error::PreconditionViolated("R~ is too far from R".into()));
        }
    }
    let (cr, ct) = (r.center(), r_tilde.center());
    let scale = 2f64.powi(i0 as i32 + 1);
    let tail_rect = Rect::centered(
        (0.5 * (cr.0 + ct.0), 0.5 * (cr.1 + ct.1)),
        (scale * r.sides().0, scale * r.sides().1),
    )?;
    let chain = |base: &Rect| -> Vec<Rect> { (0..=i0).map(|i| base.dilate(2f64.powi(i as i32))).collect() };
    let chain_r = chain(r);
    let chain_r_tilde = chain(r_tilde);
    let bound_constant = f1.linf_norm().max(f2.linf_norm()) * m as f64 * r.area();

    let mut decomposition = AtomicDecomposition::new();
    let mut steps = Vec::new();
    let mut emit = |j: u8, i: u32, rect: Rect, func: GridFunction| -> Result<()> {
        let func = grid_on_rect(&func, &rect)?.coarsen();
        let peak = func.linf_norm();
        if peak == 0.0 {
            return Ok(());
        }
        let coeff = peak * rect.area();
        let atom = Atom::new(rect, func.scaled(1.0 / coeff));
        decomposition.push(coeff, atom);
        steps.push(TraceStep { j, i, coeff, rect });
        Ok(())
    };

    let mut integrals = [0.0; 2];
    for (j, (fj, rects)) in [(f1, &chain_r), (f2, &chain_r_tilde)].into_iter().enumerate() {
        let mass = fj.integral();
        integrals[j] = mass;
        let mut prev = fj.clone();
        for i in 1..=i0 {
            let rect = rects[i as usize];
            let next = GridFunction::constant_on(&rect, mass / rect.area());
            let mut diff = PatchSum::new();
            diff.push(1.0, prev);
            diff.push(-1.0, next.clone());
            emit(j as u8 + 1, i, rect, diff.to_grid(max_cells)?)?;
            prev = next;
        }
        let mut tail = PatchSum::new();
        tail.push(1.0, prev);
        tail.push(-1.0, GridFunction::constant_on(&tail_rect, mass / tail_rect.area()));
        emit(j as u8 + 1, i0 + 1, tail_rect, tail.to_grid(max_cells)?)?;
    }

    let trace = DecompositionTrace {
        i0,
        chain_r,
        chain_r_tilde,
        tail_rect,
        integrals,
        bound_constant,
        steps,
    };
    Ok((decomposition, trace))
}

/// How `eps` evolves across levels of [`weak_factorize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSchedule {
    Fixed,
    /// `eps / 2^(k-1)` at level `k`.
    Halving,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorizeOptions {
    pub eps: f64,
    pub k_max: usize,
    pub mass_tol: f64,
    pub schedule: EpsSchedule,
    /// Uses this `M` at every level instead of `choose_m`.
    pub m_override: Option<u64>,
    pub max_cells: usize,
    pub verify: Verification,
}

/// How [`weak_factorize`] measures the telescoping identity after each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    Off,
    /// `sum |c| ||a - Pi(f, g) - decomposition||_2` over processed atoms: an
    /// upper bound on the global error, computed atom by atom.
    LocalBound,
    /// The global `L^2` norm of `input - terms - residual`, evaluated on the
    /// exact common partition of all pieces. Cost grows quickly with `k_max`.
    Exact,
}

impl FactorizeOptions {
    pub fn new(eps: f64, k_max: usize) -> Self {
        Self {
            eps,
            k_max,
            mass_tol: 0.0,
            schedule: EpsSchedule::Fixed,
            m_override: None,
            max_cells: DEFAULT_MAX_CELLS,
            verify: Verification::LocalBound,
        }
    }

    fn level_m(&self, k: usize) -> Result<(f64, u64)> {
        let eps = match self.schedule {
            EpsSchedule::Fixed => self.eps,
            EpsSchedule::Halving => self.eps / 2f64.powi(k as i32 - 1),
        };
        let m = match self.m_override {
            Some(m) => m,
            None => choose_m(eps)?,
        };
        Ok((eps, m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationTerm {
    /// Level, starting at 1.
    pub k: usize,
    /// Index of the atom within its level.
    pub j: usize,
    pub coeff: f64,
    pub g: GridFunction,
    pub h: GridFunction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasuredConstants {
    /// `history[k+1] / history[k]`.
    pub rho: Vec<f64>,
    /// Largest `||g||_2 ||h||_2` over all terms.
    pub c_eps_max: f64,
    /// `sum |coeff| ||g||_2 ||h||_2` over all terms.
    pub pair_norm_total: f64,
    /// Largest `M * ||a - Pi(f, g)||_2 * |R|^{1/2}` over approximated atoms.
    pub error_constant: f64,
    /// Largest `mass(decomposition) / (|coeff| ln M / M)` over levels.
    pub decomposition_constant: f64,
    /// Relative `L^2` telescoping error after each level, measured as chosen
    /// by [`FactorizeOptions::verify`] (empty when off).
    pub reconstruction_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "M")]
    pub m: Vec<u64>,
    pub eps: Vec<f64>,
    pub converged: bool,
    pub measured_constants: MeasuredConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factorization {
    pub terms: Vec<FactorizationTerm>,
    pub residual: AtomicDecomposition,
    /// `history[k]` is the coefficient mass of the decomposition left after
    /// `k` levels; `history[0]` is the input mass.
    pub history: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl Factorization {
    pub fn levels(&self) -> usize {
        self.history.len() - 1
    }

    /// `sum coeff Pi(g, h) + residual` as a lazily summed collection.
    pub fn to_patch_sum(&self, max_cells: usize) -> Result<PatchSum> {
        let mut sum = self.residual.to_patch_sum();
        for t in &self.terms {
            push_pi(&mut sum, t.coeff, &t.g, &t.h, max_cells)?;
        }
        Ok(sum)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }
}

struct LevelItem {
    term_g: GridFunction,
    term_h: GridFunction,
    c_eps: f64,
    error_constant: f64,
    decomposition: AtomicDecomposition,
    /// `||a - Pi(f, g) - decomposition||_2`, when requested.
    defect: f64,
}

fn process_atom(atom: &Atom, m: u64, max_cells: usize, local_check: bool) -> Result<LevelItem> {
    let p = approx_parts(atom, m)?;
    let err = (p.w1.l2_norm().powi(2) + p.w2.l2_norm().powi(2)).sqrt();
    let (decomposition, _) = decompose_pieces(&p.w1, &p.w2, &p.rect, &p.shifted_rect, m, max_cells)?;
    let defect = if local_check {
        let mut sum = decomposition.to_patch_sum();
        push_pi(&mut sum, 1.0, &p.f_ind, &p.g_scaled, max_cells)?;
        sum.push(-1.0, atom.func.clone());
        sum.l2_norm()?
    } else {
        0.0
    };
    Ok(LevelItem {
        term_g: p.f_ind,
        term_h: p.g_scaled,
        c_eps: p.c_eps,
        error_constant: m as f64 * err * p.rect.area().sqrt(),
        decomposition,
        defect,
    })
}

fn relative_residual(input: &PatchSum, scale: f64, f: &Factorization, max_cells: usize) -> Result<f64> {
    let mut diff = f.to_patch_sum(max_cells)?;
    for (c, g) in input.patches() {
        diff.push(-c, g.clone());
    }
    Ok(diff.l2_norm()? / scale)
}

/// Iterated weak factorization of the function represented by `d`.
///
/// Every level replaces each atom `c a` of the current decomposition by the
/// term `c Pi(f, g)` from [`approximate_atom`] plus `c` times the atomic
/// decomposition of its error. The invariant
/// `input = sum terms + residual` holds exactly after every level.
pub fn weak_factorize(d: &AtomicDecomposition, opts: &FactorizeOptions) -> Result<Factorization> {
    let input = d.to_patch_sum();
    let input_norm = match opts.verify {
        Verification::Off => 0.0,
        _ => input.l2_norm()?,
    };
    let local_check = opts.verify == Verification::LocalBound;
    let mut defect_bound = 0.0;
    let mut f = Factorization {
        terms: Vec::new(),
        residual: d.clone(),
        history: vec![d.mass()],
        diagnostics: Diagnostics {
            m: Vec::new(),
            eps: Vec::new(),
            converged: true,
            measured_constants: MeasuredConstants::default(),
        },
    };
    for k in 1..=opts.k_max {
        if f.residual.mass() < opts.mass_tol || f.residual.is_empty() {
            break;
        }
        let (eps, m) = opts.level_m(k)?;
        let items: Vec<Result<LevelItem>> = f
            .residual
            .terms
            .par_iter()
            .map(|t| process_atom(&t.atom, m, opts.max_cells, local_check))
            .collect();
        let mut next = AtomicDecomposition::new();
        let level_mass = f.residual.mass();
        let mut next_mass_unscaled = 0.0f64;
        let consts = &mut f.diagnostics.measured_constants;
        for (j, (term, item)) in f.residual.terms.iter().zip(items).enumerate() {
            let item = item?;
            let c = term.coeff;
            consts.c_eps_max = consts.c_eps_max.max(item.c_eps);
            consts.pair_norm_total += c.abs() * item.c_eps;
            consts.error_constant = consts.error_constant.max(item.error_constant);
            next_mass_unscaled += c.abs() * item.decomposition.mass();
            defect_bound += c.abs() * item.defect;
            for dt in item.decomposition.terms {
                next.push(c * dt.coeff, dt.atom);
            }
            f.terms.push(FactorizationTerm {
                k,
                j,
                coeff: c,
                g: item.term_g,
                h: item.term_h,
            });
        }
        if m > 1 && level_mass > 0.0 {
            let norm = level_mass * (m as f64).ln() / m as f64;
            consts.decomposition_constant = consts.decomposition_constant.max(next_mass_unscaled / norm);
        }
        f.residual = next;
        let mass = f.residual.mass();
        consts.rho.push(mass / level_mass);
        f.history.push(mass);
        f.diagnostics.m.push(m);
        f.diagnostics.eps.push(eps);
        let rel = match opts.verify {
            Verification::Off => None,
            _ if input_norm == 0.0 => Some(0.0),
            Verification::LocalBound => Some(defect_bound / input_norm),
            Verification::Exact => Some(relative_residual(&input, input_norm, &f, opts.max_cells)?),
        };
        f.diagnostics.measured_constants.reconstruction_errors.extend(rel);
    }
    f.diagnostics.converged = f.history.windows(2).all(|w| w[1] < w[0]);
    Ok(f)
}

/// `sum coeff Pi(g, h) + reconstruct(residual)` on one grid.
pub fn reconstruct_factorization(f: &Factorization) -> Result<GridFunction> {
    reconstruct_factorization_within(f, DEFAULT_MAX_CELLS)
}

pub fn reconstruct_factorization_within(f: &Factorization, max_cells: usize) -> Result<GridFunction> {
    f.to_patch_sum(max_cells)?.to_grid(max_cells)
}
