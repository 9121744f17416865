//! Bracketed Newton iteration for monotone branches.

/// Residual tolerance a branch inverse must meet.
pub const ROOT_TOL: f64 = 1e-13;
/// Newton/bisection step budget per solve.
pub const MAX_ITER: usize = 60;

/// Solves `g(y) = target` on `[lo, hi]` for monotone `g`.
///
/// `g` returns value and derivative. Newton steps that leave the bracket or
/// stall fall back to bisection. Returns `None` when the residual after
/// `MAX_ITER` steps exceeds `ROOT_TOL` or the target is not bracketed.
pub fn solve_monotone<G>(g: G, target: f64, lo: f64, hi: f64) -> Option<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    let f = |y: f64| {
        let (v, d) = g(y);
        (v - target, d)
    };
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        // Targets a hair outside the image come from rounding at the ends.
        return if flo.abs() <= ROOT_TOL && flo.abs() <= fhi.abs() {
            Some(lo)
        } else if fhi.abs() <= ROOT_TOL {
            Some(hi)
        } else {
            None
        };
    }
    // Orient so that f(a) < 0 < f(b).
    let (mut a, mut b) = if flo < 0.0 { (lo, hi) } else { (hi, lo) };
    let mut y = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, y);
    for _ in 0..MAX_ITER {
        let (fy, dy) = f(y);
        if fy.abs() < best.0 {
            best = (fy.abs(), y);
        }
        if fy == 0.0 {
            return Some(y);
        }
        if fy < 0.0 {
            a = y;
        } else {
            b = y;
        }
        let newton = y - fy / dy;
        let (min, max) = if a < b { (a, b) } else { (b, a) };
        let next = if dy != 0.0 && newton > min && newton < max {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - y).abs() <= f64::EPSILON * y.abs().max(1e-300) || max - min <= f64::EPSILON {
            let (fn_, _) = f(next);
            if fn_.abs() < best.0 {
                best = (fn_.abs(), next);
            }
            break;
        }
        y = next;
    }
    (best.0 <= ROOT_TOL).then_some(best.1)
}
