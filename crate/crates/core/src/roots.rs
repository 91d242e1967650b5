//! Bracketed scalar root finding: bisection and safeguarded Newton.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa:e}, f(b) = {fb:e}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("non-finite function value {fx} at {x}")]
    NotFinite { x: f64, fx: f64 },
}

fn check_finite(x: f64, fx: f64) -> Result<f64, RootError> {
    if fx.is_finite() {
        Ok(fx)
    } else {
        Err(RootError::NotFinite { x, fx })
    }
}

/// Bisection on a sign-changing bracket until its width is below `xtol`.
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64, RootError>
where
    F: FnMut(f64) -> f64,
{
    let mut fa = check_finite(a, f(a))?;
    let fb = check_finite(b, f(b))?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange { a, b, fa, fb });
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= xtol || m == a || m == b {
            return Ok(m);
        }
        let fm = check_finite(m, f(m))?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Newton iteration kept inside a sign-changing bracket.
///
/// `f` returns the value and the derivative. A Newton step that leaves the
/// bracket, or fails to halve the previous step twice, is replaced by a
/// bisection step. Stops when the step or the bracket falls below `xtol`,
/// or the function vanishes exactly.
pub fn safeguarded_newton<F>(mut f: F, a: f64, b: f64, guess: f64, xtol: f64) -> Result<f64, RootError>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (mut lo, mut hi) = if a < b { (a, b) } else { (b, a) };
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    check_finite(lo, flo)?;
    check_finite(hi, fhi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(RootError::NoSignChange {
            a: lo,
            b: hi,
            fa: flo,
            fb: fhi,
        });
    }
    let lo_sign = flo.signum();
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut last_step = hi - lo;
    let mut stalls = 0;
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        check_finite(x, fx)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let newton_ok = dfx != 0.0 && newton > lo && newton < hi;
        if newton_ok && (newton - x).abs() > 0.5 * last_step {
            stalls += 1;
        }
        let next = if newton_ok && stalls < 2 {
            newton
        } else {
            stalls = 0;
            0.5 * (lo + hi)
        };
        let step = (next - x).abs();
        last_step = step;
        x = next;
        if step <= xtol || hi - lo <= xtol {
            return Ok(x);
        }
    }
    Ok(x)
}
