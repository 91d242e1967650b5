//! Small dense linear algebra: Ruiz equilibration and full-pivot solves.

use nalgebra::{DMatrix, DVector};

/// `D_r A D_c` together with the diagonal scalings.
#[derive(Clone, Debug)]
pub struct Equilibration {
    pub scaled: DMatrix<f64>,
    pub row_scales: Vec<f64>,
    pub col_scales: Vec<f64>,
}

fn row_max(a: &DMatrix<f64>, i: usize) -> f64 {
    a.row(i).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn col_max(a: &DMatrix<f64>, j: usize) -> f64 {
    a.column(j).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Iterative infinity-norm scaling (Ruiz). On return every column of the
/// scaled matrix has max magnitude exactly 1 and every row has max
/// magnitude 1 up to the convergence tolerance.
pub fn equilibrate(a: &DMatrix<f64>) -> Equilibration {
    let (n, m) = a.shape();
    let mut scaled = a.clone();
    let mut row_scales = vec![1.0; n];
    let mut col_scales = vec![1.0; m];
    for _ in 0..200 {
        let mut worst = 0.0_f64;
        for i in 0..n {
            let r = row_max(&scaled, i);
            if r > 0.0 {
                let f = 1.0 / r.sqrt();
                scaled.row_mut(i).scale_mut(f);
                row_scales[i] *= f;
                worst = worst.max((1.0 - r).abs());
            }
        }
        for j in 0..m {
            let c = col_max(&scaled, j);
            if c > 0.0 {
                let f = 1.0 / c.sqrt();
                scaled.column_mut(j).scale_mut(f);
                col_scales[j] *= f;
                worst = worst.max((1.0 - c).abs());
            }
        }
        if worst < 1e-12 {
            break;
        }
    }
    for j in 0..m {
        let c = col_max(&scaled, j);
        if c > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / c);
            col_scales[j] /= c;
        }
    }
    Equilibration {
        scaled,
        row_scales,
        col_scales,
    }
}

/// Determinant of the equilibrated matrix.
pub fn equilibrated_determinant(a: &DMatrix<f64>) -> f64 {
    equilibrate(a).scaled.full_piv_lu().determinant()
}

/// Full-pivot solve of `A x = b`. `None` when `A` is singular.
pub fn full_pivot_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().full_piv_lu().solve(b)
}
