//! Named, versioned families of test symbols on the unit square.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridFunction};

pub const STANDARD_V1: &str = "standard-v1";

/// Seed of the random-smooth member; part of the family's definition.
const SMOOTH_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    pub id: String,
    pub func: GridFunction,
}

fn checker(block: usize) -> impl Fn(f64, f64) -> f64 {
    move |x, y| {
        let s = (x.floor() as i64 / block as i64) + (y.floor() as i64 / block as i64);
        if s % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// The members of `name` sampled at the cell centres of an `n x n` grid on
/// `[0, 1]^2`. Identifiers are stable across releases of a given family.
pub fn symbol_family(name: &str, n: usize) -> Result<Vec<Symbol>> {
    if name != STANDARD_V1 {
        return Err(Error::InvalidArgument(format!("unknown symbol family {name:?}")));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("symbol grids need n >= 4, got {n}")));
    }
    let grid = Grid2D::new([0.0, 0.0], [1.0 / n as f64, 1.0 / n as f64], [n, n])?;
    let nf = n as f64;
    let h = 1.0 / nf;
    let mut rng = ChaCha8Rng::seed_from_u64(SMOOTH_SEED);
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0..3) as f64,
                rng.random_range(0..3) as f64,
                rng.random_range(0.0..TAU),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let mut out = Vec::new();
    let mut add = |id: &str, f: &dyn Fn(f64, f64) -> f64| -> Result<()> {
        out.push(Symbol {
            id: id.to_string(),
            func: GridFunction::from_fn(grid, f)?,
        });
        Ok(())
    };
    add("constant", &|_, _| 1.0)?;
    for block in [1usize, 2, 4] {
        let c = checker(block);
        add(&format!("checker-{block}"), &|x, y| c(x * nf, y * nf))?;
    }
    add("sign-x", &|x, _| (x - 0.5).signum())?;
    add("log-x", &|x, _| ((x - 0.5).abs() + 0.5 * h).ln())?;
    add("log-radial", &|x, y| ((x - 0.5).abs() + (y - 0.5).abs() + 0.5 * h).ln())?;
    add("random-smooth", &|x, y| {
        modes
            .iter()
            .map(|&(p, q, phase, amp)| amp * (TAU * (p * x + q * y) + phase).cos())
            .sum::<f64>()
            + (TAU * x).sin()
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_is_deterministic_and_named() {
        let a = symbol_family(STANDARD_V1, 8).unwrap();
        let b = symbol_family(STANDARD_V1, 8).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = a.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(
            ids,
            [
                "constant",
                "checker-1",
                "checker-2",
                "checker-4",
                "sign-x",
                "log-x",
                "log-radial",
                "random-smooth"
            ]
        );
        assert!(symbol_family("nope", 8).is_err());
    }

    #[test]
    fn checker_alternates_per_cell() {
        let f = &symbol_family(STANDARD_V1, 4).unwrap()[1].func;
        assert_eq!(f.value(0, 0), 1.0);
        assert_eq!(f.value(0, 1), -1.0);
        assert_eq!(f.value(1, 1), 1.0);
    }
}
