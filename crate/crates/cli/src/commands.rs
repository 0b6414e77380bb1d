use std::fmt::Write as _;

use hfactor::atoms::{make_haar_atom, random_atom, Atom, AtomicDecomposition, Orientation, ATOM_TOL};
use hfactor::commutator::{aux1_identity_check, duality_check, two_sided_experiment, NormOptions};
use hfactor::factorization::{approximate_atom_with_m, choose_m, decompose_error, weak_factorize, FactorizeOptions};
use hfactor::norms::{bmo_equivalence_report, bmo_norm, bmo_slicewise, RectFamily};
use hfactor::symbols::symbol_family;
use hfactor::{Error, GridFunction, Rect};
use serde_json::{json, Value};

/// Tolerance of the exact discrete identities checked before output.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance of the telescoping reconstruction.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Resource(String),
    Validation(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Resource(_) => 3,
            Failure::Validation(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Resource(m) | Failure::Validation(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::CellBudgetExceeded { .. } | Error::ScanBudgetExceeded { .. } => Failure::Resource(e.to_string()),
            Error::InvalidArgument(_) | Error::MisalignedRect { .. } | Error::OutOfExtent => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// A finished table: CSV text, its JSON form, and a gnuplot script body.
pub struct Report {
    pub csv: String,
    pub json: Value,
    pub plot: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    Haar,
    Random,
}

pub fn unit_square() -> Rect {
    Rect::from_bounds(0.0, 1.0, 0.0, 1.0).expect("unit square")
}

pub fn seeded_atom(kind: AtomKind, n: usize, seed: u64) -> CmdResult<Atom> {
    let r = unit_square();
    Ok(match kind {
        AtomKind::Haar => make_haar_atom(&r, n, Orientation::SplitX)?,
        AtomKind::Random => random_atom(&r, n, seed)?,
    })
}

fn check(cond: bool, what: impl FnOnce() -> String) -> CmdResult<()> {
    if cond {
        Ok(())
    } else {
        Err(Failure::Validation(what()))
    }
}

pub struct ApproxConfig {
    pub m_list: Vec<u64>,
    pub grid_n: usize,
    pub seed: u64,
    pub epsilon: f64,
}

pub fn approx_atom(cfg: &ApproxConfig) -> CmdResult<Report> {
    let mut csv = String::from("atom,M,point_value,closed_form,error_scaled,c_eps_over_m2,mass_scaled,atoms\n");
    let mut rows = Vec::new();
    for (name, kind) in [("haar", AtomKind::Haar), ("random", AtomKind::Random)] {
        let atom = seeded_atom(kind, cfg.grid_n, cfg.seed)?;
        for &m in &cfg.m_list {
            let r = approximate_atom_with_m(&atom, cfg.epsilon, m)?;
            let mf = m as f64;
            let closed = ((2.0 * mf + 1.0) / (2.0 * mf - 1.0)).ln().powi(2);
            check((r.point_value - closed).abs() <= IDENTITY_TOL * closed, || {
                format!("point value {} differs from closed form {closed}", r.point_value)
            })?;
            let scale = r.w1.l2_norm().max(r.w2.l2_norm()) * r.rect.area();
            check(
                r.error.integral().abs() <= IDENTITY_TOL * scale.max(f64::MIN_POSITIVE),
                || format!("error of M={m} is not mean-zero: {:e}", r.error.integral()),
            )?;
            let (d, _) = decompose_error(&r.error, &r.rect, &r.shifted_rect, m)?;
            if let Some((i, rep)) = d.first_invalid(ATOM_TOL) {
                return Err(Failure::Validation(format!("emitted atom {i} is invalid: {rep:?}")));
            }
            let error_scaled = mf * r.error_l2() * r.rect.area().sqrt();
            let c_eps_over_m2 = r.c_eps / (mf * mf);
            let mass_scaled = if m > 1 { d.mass() * mf / mf.ln() } else { f64::NAN };
            let _ = writeln!(
                csv,
                "{name},{m},{},{closed},{error_scaled},{c_eps_over_m2},{mass_scaled},{}",
                r.point_value,
                d.len()
            );
            rows.push(json!({
                "atom": name, "M": m, "point_value": r.point_value, "closed_form": closed,
                "error_scaled": error_scaled, "c_eps_over_m2": c_eps_over_m2,
                "mass_scaled": mass_scaled, "atoms": d.len(),
            }));
        }
    }
    let plot = "set logscale x 2\nset xlabel 'M'\nset datafile separator ','\nset key autotitle columnhead\n\
                plot DATA using 2:5 with linespoints title 'M |R|^{1/2} ||a - Pi||_2', \\\n     \
                DATA using 2:6 with linespoints title 'c_eps / M^2', \\\n     \
                DATA using 2:7 with linespoints title 'mass M / ln M'\n"
        .to_string();
    Ok(Report {
        csv,
        json: json!({ "rows": rows }),
        plot,
    })
}

pub struct FactorizeConfig {
    pub epsilon: f64,
    pub k_max: usize,
    pub m: Option<u64>,
    pub grid_n: usize,
    pub seed: u64,
    pub atom: AtomKind,
    pub max_cells: usize,
}

pub fn factorize(cfg: &FactorizeConfig) -> CmdResult<Report> {
    if cfg.m.is_none() {
        choose_m(cfg.epsilon)?;
    }
    let atom = seeded_atom(cfg.atom, cfg.grid_n, cfg.seed)?;
    let input = AtomicDecomposition::single(1.0, atom);
    let mut opts = FactorizeOptions::new(cfg.epsilon, cfg.k_max);
    opts.m_override = cfg.m;
    opts.max_cells = cfg.max_cells;
    let f = weak_factorize(&input, &opts)?;
    let mc = &f.diagnostics.measured_constants;
    for (k, e) in mc.reconstruction_errors.iter().enumerate() {
        check(*e <= RECONSTRUCTION_TOL, || {
            format!(
                "telescoping error {e:e} at level {} exceeds {RECONSTRUCTION_TOL:e}",
                k + 1
            )
        })?;
    }
    if let Some((i, rep)) = f.residual.first_invalid(ATOM_TOL) {
        return Err(Failure::Validation(format!("residual atom {i} is invalid: {rep:?}")));
    }
    let mut csv = String::from("k,M,eps,mass,rho,reconstruction_error,terms\n");
    let _ = writeln!(csv, "0,,,{},,0,0", f.history[0]);
    for k in 1..f.history.len() {
        let terms = f.terms.iter().filter(|t| t.k == k).count();
        let _ = writeln!(
            csv,
            "{k},{},{},{},{},{:e},{terms}",
            f.diagnostics.m[k - 1],
            f.diagnostics.eps[k - 1],
            f.history[k],
            mc.rho[k - 1],
            mc.reconstruction_errors[k - 1],
        );
    }
    let _ = writeln!(
        csv,
        "# pair_norm_total={} c_eps_max={} converged={}",
        mc.pair_norm_total, mc.c_eps_max, f.diagnostics.converged
    );
    let json = json!({
        "history": f.history,
        "pair_norm_total": mc.pair_norm_total,
        "factorization": serde_json::to_value(&f).map_err(|e| Failure::Validation(e.to_string()))?,
    });
    let plot = "set logscale y\nset xlabel 'level k'\nset ylabel 'residual mass'\nset datafile separator ','\n\
                set datafile commentschars '#'\nplot DATA using 1:4 every ::1 with linespoints title 'mass of E_k'\n"
        .to_string();
    Ok(Report { csv, json, plot })
}

pub struct SymbolConfig {
    pub family: String,
    pub grid_n: usize,
    pub seed: u64,
    pub rect_family: RectFamily,
}

fn symbols(cfg: &SymbolConfig) -> CmdResult<Vec<(String, GridFunction)>> {
    Ok(symbol_family(&cfg.family, cfg.grid_n)?
        .into_iter()
        .map(|s| (s.id, s.func))
        .collect())
}

pub fn commutator(cfg: &SymbolConfig) -> CmdResult<Report> {
    let family = symbols(cfg)?;
    let grid = *family[0].1.grid();
    // The exact identities are checked against a fixed pair of test functions.
    let f = GridFunction::from_fn(grid, |x, y| (3.0 * x + 1.0).sin() * (2.0 * y).cos())?;
    let g = GridFunction::from_fn(grid, |x, y| x * x - y + 0.25)?;
    for (id, b) in &family {
        let scale = b.l2_norm() * f.l2_norm() * g.l2_norm();
        let d = duality_check(b, &f, &g)?;
        check(d.abs_diff <= IDENTITY_TOL * scale.max(f64::MIN_POSITIVE), || {
            format!("duality identity fails for {id}: {:e}", d.abs_diff)
        })?;
        let dev = aux1_identity_check(b, &f)?;
        let natural = b.linf_norm() * f.linf_norm() * (grid.nx() as f64).powi(2);
        check(dev <= IDENTITY_TOL * natural.max(f64::MIN_POSITIVE), || {
            format!("commutator splitting identity fails for {id}: {dev:e}")
        })?;
    }
    let opts = NormOptions {
        seed: cfg.seed,
        ..NormOptions::default()
    };
    let report = two_sided_experiment(&family, &grid, &cfg.rect_family, &opts)?;
    for r in &report.rows {
        check(r.ratio.is_finite() && r.ratio > 0.0, || {
            format!("ratio for {} is {}", r.b_id, r.ratio)
        })?;
    }
    let mut csv = report.to_csv();
    for (id, why) in &report.skipped {
        let _ = writeln!(csv, "# skipped {id}: {why}");
    }
    if let (Some(lo), Some(hi)) = (report.min_ratio, report.max_ratio) {
        let _ = writeln!(csv, "# min_ratio={lo} max_ratio={hi} spread={}", hi / lo);
    }
    let json = serde_json::to_value(&report).map_err(|e| Failure::Validation(e.to_string()))?;
    let plot = "set datafile separator ','\nset datafile commentschars '#'\nset style data histograms\n\
                set style fill solid\nset ylabel '||[b,H_1H_2]|| / bmo(b)'\n\
                plot DATA using 5:xtic(1) title 'ratio'\n"
        .to_string();
    Ok(Report { csv, json, plot })
}

pub fn bmo(cfg: &SymbolConfig) -> CmdResult<Report> {
    let family = symbols(cfg)?;
    let report = bmo_equivalence_report(&family, &cfg.rect_family)?;
    for ((id, b), row) in family.iter().zip(&report.rows) {
        let constant = b.values().iter().all(|&v| v == b.values()[0]);
        if constant {
            check(row.bmo == 0.0 && row.slicewise == 0.0, || {
                format!("{id} is constant but oscillates")
            })?;
        }
        let doubled = b.scaled(-2.0);
        let (b2, s2) = (bmo_norm(&doubled, &cfg.rect_family)?, bmo_slicewise(&doubled));
        check(
            (b2 - 2.0 * row.bmo).abs() <= IDENTITY_TOL * b2.max(1.0)
                && (s2 - 2.0 * row.slicewise).abs() <= IDENTITY_TOL * s2.max(1.0),
            || format!("{id}: estimators are not absolutely homogeneous"),
        )?;
    }
    let mut csv = report.to_csv();
    if let (Some(lo), Some(hi)) = (report.min_ratio, report.max_ratio) {
        let _ = writeln!(csv, "# min_ratio={lo} max_ratio={hi} spread={}", hi / lo);
    }
    let json = serde_json::to_value(&report).map_err(|e| Failure::Validation(e.to_string()))?;
    let plot = "set datafile separator ','\nset datafile commentschars '#'\nset style data histograms\n\
                set style fill solid\nset ylabel 'bmo / slicewise'\nplot DATA using 5:xtic(1) title 'ratio'\n"
        .to_string();
    Ok(Report { csv, json, plot })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: Error| Failure::from(e).exit_code();
        assert_eq!(code(Error::InvalidArgument("x".into())), 2);
        assert_eq!(code(Error::CellBudgetExceeded { needed: 2, max: 1 }), 3);
        assert_eq!(
            code(Error::ScanBudgetExceeded {
                nx: 64,
                ny: 64,
                limit: 48
            }),
            3
        );
        assert_eq!(
            code(Error::MeanNotZero {
                integral: 1.0,
                scale: 1.0
            }),
            4
        );
        assert_eq!(code(Error::PreconditionViolated("x".into())), 4);
    }

    #[test]
    fn failed_checks_are_validation_failures() {
        assert!(check(true, || unreachable!()).is_ok());
        assert_eq!(check(false, || "broken".into()).unwrap_err().exit_code(), 4);
    }
}
