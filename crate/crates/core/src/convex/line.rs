//! One-dimensional root finding for monotone functions.

/// Root of `f` on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs
/// (or `f` is monotone and the root is bracketed). Bisection to `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    let rising = flo < 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of an increasing function `df` on the open interval `(lo, hi)` using
/// Newton steps with a bisection safeguard. `d2f` is the derivative of `df`.
/// Returns `lo` or `hi` when `df` does not change sign inside.
pub fn increasing_root(
    df: impl Fn(f64) -> f64,
    d2f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = df(x);
        if g == 0.0 {
            return x;
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let h = d2f(x);
        let mut next = if h > 0.0 { x - g / h } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + x.abs()) {
            return next;
        }
        x = next;
    }
    x
}
