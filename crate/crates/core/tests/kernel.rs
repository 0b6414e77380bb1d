mod common;

use common::*;
use hfactor::grid::Grid2D;
use hfactor::singular::{apply_h1, apply_h1h2, apply_h1h2_onto, apply_h2, eval_h1h2_point, phi, HilbertMatrix1D};
use hfactor::{GridFunction, Rect};

#[test]
fn phi_matches_quadrature() {
    for d in 1..=40i64 {
        let q = cell_pair_quadrature(d);
        assert!(
            (phi(d) - q).abs() <= 1e-10 * q.abs().max(1.0),
            "d={d}: {} vs {q}",
            phi(d)
        );
        assert_eq!(phi(-d), -phi(d));
    }
    for d in 2..=10i64 {
        let q = cell_pair_nested(d);
        assert!((phi(d) - q).abs() <= 1e-10 * q.abs(), "nested d={d}");
    }
    assert_eq!(phi(0), 0.0);
}

#[test]
fn phi_is_continuous_across_series_switch() {
    // The closed form and the asymptotic series must agree where they meet.
    let closed = |d: f64| (d + 1.0) * (1.0 / d).ln_1p() + (d - 1.0) * (-1.0 / d).ln_1p();
    for d in 28..40 {
        assert!((phi(d) - closed(d as f64)).abs() < 1e-14, "d={d}");
    }
    let big = 1_000_000i64;
    assert!((phi(big) - 1.0 / big as f64).abs() < 1e-18);
}

#[test]
fn h1h2_matches_dense_quadrature_operator() {
    let (nx, ny) = (6, 5);
    let g = Grid2D::new([0.1, -2.0], [0.3, 0.7], [nx, ny]).unwrap();
    let f = GridFunction::from_fn(g, |x, y| (2.0 * x).sin() + x * y - 0.4).unwrap();
    let dense = h1h2_dense(nx, ny);
    let expect = &dense * nalgebra::DVector::from_column_slice(f.values());
    let got = apply_h1h2(&f);
    let scale = vnorm(f.values());
    assert!(max_abs_diff(got.values(), expect.as_slice()) <= 1e-8 * scale);
}

#[test]
fn spot_value_matches_physical_quadrature() {
    // f is the indicator of one cell; the average of H1H2 f over a separated
    // cell is a product of two physical-coordinate double integrals.
    let (hx, hy) = (0.3, 0.125);
    let g = Grid2D::new([1.0, -1.0], [hx, hy], [7, 9]).unwrap();
    let (src, dst) = ((1usize, 2usize), (5usize, 7usize));
    let mut v = vec![0.0; g.n_cells()];
    v[src.0 * 9 + src.1] = 1.0;
    let f = GridFunction::new(g, v).unwrap();
    let got = apply_h1h2(&f).value(dst.0, dst.1);
    let pair = |o: f64, h: f64, i: usize, j: usize| {
        let (xa, ya) = (o + i as f64 * h, o + j as f64 * h);
        let inner = |x: f64| integrate(|y| 1.0 / (y - x), ya, ya + h, 1e-15);
        integrate(inner, xa, xa + h, 1e-14) / h
    };
    let expect = pair(1.0, hx, dst.0, src.0) * pair(-1.0, hy, dst.1, src.1);
    assert!((got - expect).abs() <= 1e-10 * expect.abs(), "{got} vs {expect}");
}

#[test]
fn one_dimensional_matrix_is_antisymmetric_and_toeplitz() {
    let h = HilbertMatrix1D::build(12, 0.5).unwrap();
    for i in 0..12 {
        for j in 0..12 {
            assert_eq!(h.get(i, j), -h.get(j, i));
            assert_eq!(h.get(i, j), 0.5 * phi(j as i64 - i as i64));
        }
    }
    let v: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
    let w: Vec<f64> = (0..12)
        .map(|i| (0..12).map(|j| phi(j as i64 - i as i64) * v[j]).sum())
        .collect();
    assert!(max_abs_diff(&h.apply(&v), &w) < 1e-14);
}

#[test]
fn h1h2_is_the_composition_of_axis_transforms() {
    let g = unit_grid(5, 7);
    let f = GridFunction::from_fn(g, |x, y| x * x - y.cos()).unwrap();
    let a = apply_h1h2(&f);
    let b = apply_h1(&apply_h2(&f));
    let c = apply_h2(&apply_h1(&f));
    assert!(max_abs_diff(a.values(), b.values()) < 1e-14);
    assert!(max_abs_diff(a.values(), c.values()) < 1e-14);
}

#[test]
fn cross_grid_transform_agrees_with_common_grid() {
    let big = Grid2D::new([0.0, 0.0], [0.25, 0.5], [12, 10]).unwrap();
    let src = Grid2D::new([0.5, 1.0], [0.25, 0.5], [3, 2]).unwrap();
    let dst = Grid2D::new([2.0, 3.0], [0.25, 0.5], [4, 3]).unwrap();
    let f = GridFunction::from_fn(src, |x, y| x + 2.0 * y).unwrap();
    let onto = apply_h1h2_onto(&f, &dst).unwrap();
    let full = apply_h1h2(&f.resample(&big).unwrap()).restrict(&dst.extent()).unwrap();
    assert!(max_abs_diff(onto.values(), full.resample(&dst).unwrap().values()) < 1e-14);
}

#[test]
fn point_value_matches_closed_form_and_quadrature() {
    for (m, side) in [(4u64, (1.0, 1.0)), (8, (0.5, 2.0)), (16, (3.0, 0.25)), (32, (1.0, 1.0))] {
        let mf = m as f64;
        let r = Rect::centered((0.3, -0.7), side).unwrap();
        let shifted = r.translate(mf * side.0, mf * side.1);
        let ind = GridFunction::constant_on(&shifted, 1.0);
        let got = eval_h1h2_point(&ind, r.center()).unwrap();
        let closed = ((2.0 * mf + 1.0) / (2.0 * mf - 1.0)).ln().powi(2);
        assert!((got - closed).abs() <= 1e-12 * closed, "M={m}");
        let c = r.center();
        let qx = integrate(|y| 1.0 / (y - c.0), shifted.ix.lo(), shifted.ix.hi(), 1e-15);
        let qy = integrate(|y| 1.0 / (y - c.1), shifted.iy.lo(), shifted.iy.hi(), 1e-15);
        assert!((got - qx * qy).abs() <= 1e-10 * closed);
        if m >= 8 {
            let ratio = got * mf * mf;
            assert!((1.0..1.2).contains(&ratio), "M={m}: {ratio}");
        }
    }
}

#[test]
fn point_value_of_general_function_matches_quadrature() {
    let g = Grid2D::new([2.0, 1.0], [0.5, 0.25], [3, 4]).unwrap();
    let f = GridFunction::from_fn(g, |x, y| x - 3.0 * y).unwrap();
    let p = (0.6, -0.3);
    let got = eval_h1h2_point(&f, p).unwrap();
    let mut expect = 0.0;
    for ix in 0..3 {
        for iy in 0..4 {
            let (x0, y0) = (2.0 + 0.5 * ix as f64, 1.0 + 0.25 * iy as f64);
            let qx = integrate(|y| 1.0 / (y - p.0), x0, x0 + 0.5, 1e-15);
            let qy = integrate(|y| 1.0 / (y - p.1), y0, y0 + 0.25, 1e-15);
            expect += f.value(ix, iy) * qx * qy;
        }
    }
    assert!((got - expect).abs() <= 1e-10 * expect.abs());
    assert!(eval_h1h2_point(&f, (2.2, -5.0)).is_err());
}
