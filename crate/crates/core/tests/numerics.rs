use std::f64::consts::PI;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use proptest::prelude::*;

use nodal_core::coeffs::{select_waveset, solve_perturbation, Perturbation};
use nodal_core::dd::DoubleDouble;
use nodal_core::field::{chebyshev_u, FieldHandle, FieldKind};
use nodal_core::roots::{bisect, safeguarded_newton};
use nodal_core::solution::adaptive_simpson;

fn canonical() -> Perturbation {
    solve_perturbation(&select_waveset(6).unwrap()).unwrap()
}

fn exact(d: DoubleDouble) -> BigRational {
    BigRational::from_float(d.hi).unwrap() + BigRational::from_float(d.lo).unwrap()
}

fn rel_err(got: DoubleDouble, want: &BigRational) -> f64 {
    ((exact(got) - want).abs() / want.abs()).to_f64().unwrap()
}

#[test]
fn chebyshev_matches_trigonometric_form() {
    for &theta in &[0.3_f64, 1.1, 2.0, 2.9] {
        let c = theta.cos();
        let table = chebyshev_u(c, 14);
        for (n, &(u, du, _)) in table.iter().enumerate() {
            let m = (n + 1) as f64;
            let want = (m * theta).sin() / theta.sin();
            assert!((u - want).abs() < 1e-12, "U_{n}({c})");
            // d/dc = (d/dθ) / (−sin θ)
            let dtheta = (m * (m * theta).cos() * theta.sin() - (m * theta).sin() * theta.cos()) / theta.sin().powi(2);
            assert!(
                (du - dtheta / -theta.sin()).abs() < 1e-9 * (1.0 + du.abs()),
                "U'_{n}({c})"
            );
        }
    }
}

#[test]
fn chebyshev_at_one_is_n_plus_one() {
    for (n, &(u, du, _)) in chebyshev_u(1.0, 20).iter().enumerate() {
        let m = (n + 1) as f64;
        assert_eq!(u, m);
        assert!((du - m * (m * m - 1.0) / 3.0).abs() < 1e-9 * du.max(1.0));
    }
}

#[test]
fn roots_of_cos_minus_identity() {
    let want = 0.739_085_133_215_160_6;
    let b = bisect(|x| x.cos() - x, 0.0, 1.0, 1e-14).unwrap();
    assert!((b - want).abs() < 1e-13);
    let n = safeguarded_newton(|x| (x.cos() - x, -x.sin() - 1.0), 0.0, 1.0, 0.0, 1e-15).unwrap();
    assert!((n - want).abs() < 1e-15);
    assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
}

#[test]
fn newton_survives_a_flat_start() {
    // derivative vanishes at the start point
    let r = safeguarded_newton(|x| (x * x * x - 0.5, 3.0 * x * x), 0.0, 1.0, 0.0, 1e-15).unwrap();
    assert!((r - 0.5_f64.cbrt()).abs() < 1e-14);
}

#[test]
fn simpson_integrates_known_integrals() {
    let cases: [(fn(f64) -> f64, f64, f64, f64); 3] = [
        (f64::sin, 0.0, PI, 2.0),
        (|x| x.exp(), 0.0, 1.0, std::f64::consts::E - 1.0),
        (|x| (1.0 - x * x).max(0.0).sqrt(), -1.0, 1.0, PI / 2.0),
    ];
    for (f, a, b, want) in cases {
        let got = adaptive_simpson(&f, a, b, 1e-12);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }
    let poly = |x: f64| 3.0 * x * x;
    assert!((adaptive_simpson(&poly, 0.0, 2.0, 1e-14) - 8.0).abs() < 1e-14);
}

/// Fourth-order central differences of the value and first derivatives.
fn fd_check(f: &FieldHandle, x: f64, y: f64) {
    let h = 1e-3;
    let j = f.eval(x, y).unwrap();
    let d = |g: &dyn Fn(f64, f64) -> f64, ex: f64, ey: f64| {
        (-g(x + 2.0 * h * ex, y + 2.0 * h * ey) + 8.0 * g(x + h * ex, y + h * ey) - 8.0 * g(x - h * ex, y - h * ey)
            + g(x - 2.0 * h * ex, y - 2.0 * h * ey))
            / (12.0 * h)
    };
    let val = |a: f64, b: f64| f.eval(a, b).unwrap().value;
    let dx = |a: f64, b: f64| f.eval(a, b).unwrap().dx;
    let dy = |a: f64, b: f64| f.eval(a, b).unwrap().dy;
    let scale = 1.0 + j.max_abs();
    let pairs = [
        (j.dx, d(&val, 1.0, 0.0)),
        (j.dy, d(&val, 0.0, 1.0)),
        (j.dxx, d(&dx, 1.0, 0.0)),
        (j.dxy, d(&dx, 0.0, 1.0)),
        (j.dyy, d(&dy, 0.0, 1.0)),
    ];
    for (i, (a, b)) in pairs.iter().enumerate() {
        assert!(
            (a - b).abs() < 1e-8 * scale,
            "{:?} entry {i} at ({x}, {y}): {a} vs {b}",
            f.kind()
        );
    }
}

#[test]
fn jets_agree_with_finite_differences() {
    let p = canonical();
    let pts = [(0.3, 0.2), (-1.7, 1.1), (2.5, -2.4), (1.0, 3.4), (4.2, 0.7)];
    for kind in [FieldKind::W, FieldKind::Psi, FieldKind::V, FieldKind::G, FieldKind::U] {
        let f = FieldHandle::new(kind, 2f64.powi(-42), &p);
        for &(x, y) in &pts {
            fd_check(&f, x, y);
        }
    }
}

#[test]
fn antiderivative_differentiates_to_v() {
    let p = canonical();
    let eps = 2f64.powi(-42);
    let u = FieldHandle::new(FieldKind::U, eps, &p);
    let v = FieldHandle::new(FieldKind::V, eps, &p);
    for &(x, y) in &[(0.4, 0.1), (2.2, -1.3), (-3.0, 2.5)] {
        let a = u.eval(x, y).unwrap();
        let b = v.eval(x, y).unwrap();
        assert!((a.dx - b.value).abs() < 1e-13 * (1.0 + b.value.abs()));
        assert!((a.dxx - b.dx).abs() < 1e-12 * (1.0 + b.dx.abs()));
        assert!((a.dxy - b.dy).abs() < 1e-12 * (1.0 + b.dy.abs()));
    }
}

proptest! {
    #[test]
    fn double_double_arithmetic_is_exact_to_106_bits(
        a in -1e6f64..1e6, b in -1e6f64..1e6, c in 1e-3f64..1e3,
    ) {
        let (x, y) = (DoubleDouble::from_f64(a) / DoubleDouble::from_f64(c), DoubleDouble::from_f64(b));
        let (ex, ey) = (exact(x), exact(y));
        let tol = 1e-30;
        let sum = &ex + &ey;
        if !num_traits::Zero::is_zero(&sum) {
            prop_assert!(rel_err(x + y, &sum) < tol);
        }
        prop_assert!(rel_err(x * y, &(&ex * &ey)) < tol || a == 0.0 || b == 0.0);
        if b != 0.0 {
            prop_assert!(rel_err(x / y, &(&ex / &ey)) < tol || a == 0.0);
        }
    }

    #[test]
    fn double_double_sqrt_squares_back(a in 1e-8f64..1e8) {
        let r = DoubleDouble::from_f64(a).sqrt();
        let back = exact(r) * exact(r);
        let want = BigRational::from_float(a).unwrap();
        prop_assert!(((back - &want).abs() / want).to_f64().unwrap() < 1e-30);
    }
}
