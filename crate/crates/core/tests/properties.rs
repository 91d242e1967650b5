use std::f64::consts::PI;
use std::sync::OnceLock;

use proptest::prelude::*;

use nodal_core::coeffs::{select_waveset, solve_perturbation, Perturbation};
use nodal_core::field::{FieldHandle, FieldKind, SQRT3};
use nodal_core::figures::marching_squares;
use nodal_core::manifest::{Dec, RunConfig};
use nodal_core::nodal::{trace, TraceResult, Y_TOP};
use nodal_core::solution::{assemble, SolutionU, SourceH};
use nodal_core::verify::{flood_fill, CheckResult, Comparison};

const EPS: f64 = 2.273_736_754_432_320_6e-13;

struct Fixture {
    p: Perturbation,
    trace: TraceResult,
    sol: SolutionU,
    h: SourceH,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let p = solve_perturbation(&select_waveset(6).unwrap()).unwrap();
        let trace = trace(EPS, &p, 600).unwrap();
        let (sol, h) = assemble(&trace, EPS, &p).unwrap();
        Fixture { p, trace, sol, h }
    })
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn v_is_even_in_y_and_odd_about_verticals(x in -2.0 * PI..2.0 * PI, y in -Y_TOP..Y_TOP, k in -1i32..=1, t in 0.0..PI) {
        let v = FieldHandle::new(FieldKind::V, EPS, &fixture().p);
        let a = v.value(x, y).unwrap();
        let b = v.value(x, -y).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        let c = k as f64 * PI;
        let l = v.value(c - t, y).unwrap();
        let r = v.value(c + t, y).unwrap();
        prop_assert!((l + r).abs() <= 1e-12 * (1.0 + l.abs()));
    }

    #[test]
    fn v_solves_helmholtz(x in -2.0 * PI..2.0 * PI, y in -Y_TOP..Y_TOP) {
        let j = FieldHandle::new(FieldKind::V, EPS, &fixture().p).eval(x, y).unwrap();
        prop_assert!((j.dxx + j.dyy + 4.0 * j.value).abs() <= 1e-11 * (1.0 + j.value.abs()));
    }

    #[test]
    fn u_is_symmetric_and_nonnegative(tx in -0.999f64..0.999, ty in -0.999f64..0.999) {
        let f = fixture();
        let y = ty * f.sol.domain.s;
        let m = f.sol.domain.mu_at(y).unwrap().unwrap();
        let x = tx * m;
        let u = f.sol.u_given_mu(x, y, m).unwrap();
        let scale = 1e-12 * (1.0 + u.abs());
        prop_assert!((u - f.sol.u_given_mu(-x, y, m).unwrap()).abs() <= scale);
        prop_assert!((u - f.sol.u_given_mu(x, -y, m).unwrap()).abs() <= scale);
        prop_assert!(u >= -1e-12);
    }

    #[test]
    fn h_is_even(y in 0.0f64..Y_TOP) {
        let h = &fixture().h;
        prop_assert_eq!(h.eval(y), h.eval(-y));
    }

    #[test]
    fn mu_decreases(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let f = fixture();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let mu = &f.trace.mu;
        prop_assert!(mu.interpolate(hi * f.trace.s).unwrap() < mu.interpolate(lo * f.trace.s).unwrap());
    }
}

proptest! {
    #![proptest_config(cases(512))]

    #[test]
    fn dec_round_trips(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let text = serde_json::to_string(&Dec(v)).unwrap();
        let back: Dec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.0.to_bits(), v.to_bits());
    }

    #[test]
    fn loosening_a_tolerance_keeps_a_pass(worst in 0.0f64..1.0, tol in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let tight = CheckResult::new("c", worst, Comparison::AtMost, tol, None);
        let loose = CheckResult::new("c", worst, Comparison::AtMost, tol + extra, None);
        prop_assert!(!tight.pass || loose.pass);
        let tight = CheckResult::new("c", worst, Comparison::Above, tol, None);
        let loose = CheckResult::new("c", worst, Comparison::Above, tol - extra, None);
        prop_assert!(!tight.pass || loose.pass);
    }

    #[test]
    fn flood_fill_is_invariant_under_transpose_and_negation(
        signs in proptest::collection::vec(prop_oneof![Just(-1i8), Just(0i8), Just(1i8)], 48),
    ) {
        let (nx, ny) = (8, 6);
        let c = flood_fill(&signs, nx, ny);
        let t: Vec<i8> = (0..nx * ny).map(|i| signs[(i % ny) * nx + i / ny]).collect();
        let ct = flood_fill(&t, ny, nx);
        prop_assert_eq!(c.count(), ct.count());
        prop_assert_eq!(c.interfaces.len(), ct.interfaces.len());
        let neg: Vec<i8> = signs.iter().map(|s| -s).collect();
        let cn = flood_fill(&neg, nx, ny);
        prop_assert_eq!(c.count(), cn.count());
        prop_assert_eq!(c.interfaces.len(), cn.interfaces.len());
    }

    #[test]
    fn marching_squares_lands_on_linear_zero_sets(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -0.5f64..0.5) {
        prop_assume!(a.abs() + b.abs() > 0.1);
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let ys = xs.clone();
        let vals: Vec<f64> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| a * x + b * y + c)).collect();
        for seg in marching_squares(&xs, &ys, &vals) {
            for (x, y) in seg {
                prop_assert!((a * x + b * y + c).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn domain_stops_short_of_the_rhombus_corner_by_the_neck() {
    let f = fixture();
    let m0 = f.sol.domain.mu_at(0.0).unwrap().unwrap();
    let gap = 2.0 * PI - m0;
    assert!(gap > 0.0 && (gap / (2.0 * EPS).sqrt() - 1.0).abs() < 0.1, "gap {gap}");
    assert!(f.sol.domain.mu_at(f.trace.s + 1e-9).unwrap().is_none());
    let y = 1.0;
    let m = f.sol.domain.mu_at(y).unwrap().unwrap();
    assert!((m - (2.0 * PI - SQRT3 * y)).abs() < 1e-3);
}

#[test]
fn default_config_is_valid() {
    RunConfig::default().validate().unwrap();
    let mut c = RunConfig::default();
    c.grid = 10;
    assert!(c.validate().is_err());
    let mut c = RunConfig::default();
    c.start_k = 7;
    assert!(c.validate().is_err());
}
