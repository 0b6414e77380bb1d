//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::excessive_precision)]

use hfactor::{Grid2D, GridFunction};
use nalgebra::DMatrix;
use proptest::prelude::*;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (v, err) = gk15(f, a, b);
    // Below roundoff the error estimate is noise; stop splitting there.
    if err <= tol.max(50.0 * f64::EPSILON * v.abs()) || depth == 0 {
        return v;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 60)
}

/// `\int_0^1 \int_0^1 du dv / (v - u + d)` by quadrature, `d >= 1`.
///
/// With `t = v - u` the pair integral is `\int_{-1}^{1} (1 - |t|) / (t + d) dt`,
/// whose integrand stays bounded even for adjacent cells.
pub fn cell_pair_quadrature(d: i64) -> f64 {
    let d = d as f64;
    let k = |t: f64| (1.0 - t.abs()) / (t + d);
    integrate(k, -1.0, 0.0, 1e-15) + integrate(k, 0.0, 1.0, 1e-15)
}

/// The same integral by nested quadrature in the original variables, for
/// cells that are not adjacent.
pub fn cell_pair_nested(d: i64) -> f64 {
    let d = d as f64;
    integrate(|u| integrate(|v| 1.0 / (v - u + d), 0.0, 1.0, 1e-15), 0.0, 1.0, 1e-14)
}

/// Averaged cell-pair matrix of the 1D Hilbert transform on a uniform lattice
/// of `n` cells, from quadrature. The diagonal is the principal value, which
/// vanishes by antisymmetry of the kernel.
pub fn hilbert_matrix_quadrature(n: usize) -> DMatrix<f64> {
    let pair: Vec<f64> = (0..n as i64)
        .map(|d| if d == 0 { 0.0 } else { cell_pair_quadrature(d) })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let d = j as i64 - i as i64;
        d.signum() as f64 * pair[d.unsigned_abs() as usize]
    })
}

/// Dense `H_1 H_2` on row-major cell values of an `nx x ny` grid.
pub fn h1h2_dense(nx: usize, ny: usize) -> DMatrix<f64> {
    hilbert_matrix_quadrature(nx).kronecker(&hilbert_matrix_quadrature(ny))
}

/// Largest singular value of `[b, H_1H_2]` from a dense SVD.
pub fn commutator_norm_dense(b: &GridFunction) -> f64 {
    let g = b.grid();
    let a = h1h2_dense(g.nx(), g.ny());
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(b.values()));
    let c = &d * &a - &a * &d;
    c.singular_values().max()
}

/// `||v||_2` of a row-major value vector.
pub fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn unit_grid(nx: usize, ny: usize) -> Grid2D {
    Grid2D::new([0.0, 0.0], [1.0 / nx as f64, 1.0 / ny as f64], [nx, ny]).unwrap()
}

/// Random grid function on `grid` with values in `[-1, 1]`.
pub fn values_on(grid: Grid2D) -> impl Strategy<Value = GridFunction> {
    proptest::collection::vec(-1.0f64..1.0, grid.n_cells()).prop_map(move |v| GridFunction::new(grid, v).unwrap())
}

/// A random small grid and `k` random functions on it.
pub fn functions(k: usize) -> impl Strategy<Value = Vec<GridFunction>> {
    (1usize..7, 1usize..7).prop_flat_map(move |(nx, ny)| {
        let g = Grid2D::new([-0.5, 0.25], [0.5, 0.75], [nx, ny]).unwrap();
        proptest::collection::vec(values_on(g), k)
    })
}
