//! Coefficient solve against an exact rational elimination of the same
//! floating-point matrix.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use nodal_core::coeffs::{assemble_matrix, select_waveset, solve_perturbation, RHS, WAVE_COUNT};
use nodal_core::linalg::{equilibrate, equilibrated_determinant};

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite entry")
}

/// Gaussian elimination over the rationals; returns the determinant and the
/// solution of `a z = b`.
fn rational_solve(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> (BigRational, Vec<BigRational>) {
    let n = a.len();
    let mut det = BigRational::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).expect("nonsingular");
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col].clone();
        for r in col + 1..n {
            let f = a[r][col].clone() / a[col][col].clone();
            for c in col..n {
                let t = f.clone() * a[col][c].clone();
                a[r][c] -= t;
            }
            let t = f * b[col].clone();
            b[r] -= t;
        }
    }
    let mut z = vec![BigRational::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r].clone();
        for c in r + 1..n {
            acc -= a[r][c].clone() * z[c].clone();
        }
        z[r] = acc / a[r][r].clone();
    }
    (det, z)
}

fn relative(a: &BigRational, b: f64) -> f64 {
    let d = (a.clone() - exact(b)).abs() / a.abs();
    d.to_f64().unwrap_or(f64::INFINITY)
}

#[test]
fn canonical_waveset() {
    assert_eq!(select_waveset(6).unwrap().k, [6, 8, 10, 12, 14]);
}

#[test]
fn determinant_matches_rational_elimination() {
    let ws = select_waveset(6).unwrap();
    let m = assemble_matrix(&ws).unwrap();
    let a = DMatrix::from_fn(WAVE_COUNT, WAVE_COUNT, |i, j| m.entries[i][j]);
    let rows: Vec<Vec<BigRational>> = (0..WAVE_COUNT)
        .map(|i| (0..WAVE_COUNT).map(|j| exact(a[(i, j)])).collect())
        .collect();
    let (det, _) = rational_solve(rows, vec![BigRational::zero(); WAVE_COUNT]);
    assert!(!det.is_zero());

    let eq = equilibrate(&a);
    let scale = eq
        .row_scales
        .iter()
        .chain(eq.col_scales.iter())
        .fold(BigRational::one(), |acc, &s| acc * exact(s));
    let expected = det * scale;
    let got = equilibrated_determinant(&a);
    assert!(
        relative(&expected, got) < 1e-12,
        "det {got} vs {}",
        expected.to_f64().unwrap()
    );
}

#[test]
fn solution_matches_rational_elimination() {
    let ws = select_waveset(6).unwrap();
    let m = assemble_matrix(&ws).unwrap();
    let rows: Vec<Vec<BigRational>> = m
        .entries
        .iter()
        .map(|r| r.iter().map(|&e| exact(e)).collect())
        .collect();
    let rhs: Vec<BigRational> = RHS
        .iter()
        .map(|&r| BigRational::from_integer(BigInt::from(r as i64)))
        .collect();
    let (_, z) = rational_solve(rows, rhs);
    let p = solve_perturbation(&ws).unwrap();
    for (zj, dj) in z.iter().zip(p.d_f64()) {
        assert!(relative(zj, dj) < 1e-9, "{dj} vs {}", zj.to_f64().unwrap());
    }
}

#[test]
fn alternative_start_gives_valid_construction() {
    let ws = select_waveset(8).unwrap();
    assert_eq!(ws.k[0], 8);
    let p = solve_perturbation(&ws).unwrap();
    assert!(p.max_residual() <= 1e-9);
}

#[test]
fn odd_or_small_start_is_rejected() {
    assert!(select_waveset(7).is_err());
    assert!(select_waveset(4).is_err());
}
