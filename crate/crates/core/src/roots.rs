//! Scalar root finding and one-dimensional optimization.

use crate::error::{Error, Result};

/// Stopping rule for [`bisect_decreasing`].
#[derive(Debug, Clone, Copy)]
pub struct BisectionTol {
    /// Accept when `|g(x)|` falls below this.
    pub residual: f64,
    /// Accept when the bracket is narrower than this.
    pub width: f64,
}

/// Root of a strictly decreasing `g` on `(-inf, hi]` with `g(hi) < 0`.
///
/// The lower end of the bracket starts at `hi - step` and moves geometrically
/// left until `g` changes sign; at most `max_expansions` doublings are tried.
/// Bisection then continues until both tolerances are met.
pub fn bisect_decreasing<G>(mut g: G, hi: f64, step: f64, max_expansions: usize, tol: BisectionTol) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
{
    let mut upper = hi;
    let mut g_upper = g(upper)?;
    let mut width = step;
    let mut lower = hi - width;
    let mut g_lower = g(lower)?;
    let mut expansions = 0;
    while g_lower < 0.0 {
        if expansions >= max_expansions {
            return Err(Error::RootNotBracketed { reached: lower });
        }
        upper = lower;
        g_upper = g_lower;
        width *= 2.0;
        lower = hi - width;
        g_lower = g(lower)?;
        expansions += 1;
    }
    if g_lower == 0.0 {
        return Ok(lower);
    }
    if g_upper == 0.0 {
        return Ok(upper);
    }
    // Invariant: g(lower) > 0 > g(upper).
    let mut best = (lower, g_lower.abs());
    for _ in 0..400 {
        let mid = 0.5 * (lower + upper);
        if mid <= lower || mid >= upper {
            break;
        }
        let gm = g(mid)?;
        if gm.abs() < best.1 {
            best = (mid, gm.abs());
        }
        if gm > 0.0 {
            lower = mid;
        } else if gm < 0.0 {
            upper = mid;
        } else {
            return Ok(mid);
        }
        if upper - lower < tol.width && best.1 < tol.residual {
            break;
        }
    }
    Ok(0.5 * (lower + upper))
}

/// Maximizes a unimodal `f` on `[a, b]` by golden-section search.
///
/// Returns `(argmax, max)`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Principal branch `W_0(x)` of the Lambert W function for `x >= -1/e`.
pub fn lambert_w0(x: f64) -> f64 {
    let branch = -(-1f64).exp();
    assert!(x >= branch, "lambert_w0 is real only for x >= -1/e");
    if x == 0.0 {
        return 0.0;
    }
    // Initial guess: branch-point series near -1/e, log form for large x.
    let mut w = if x < -0.25 {
        let p = (2.0 * (std::f64::consts::E * x + 1.0)).sqrt();
        -1.0 + p - p * p / 3.0
    } else if x < 3.0 {
        0.5 * x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    // Halley iteration.
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    w
}
