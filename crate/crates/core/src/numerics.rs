//! Small numerical building blocks shared by the modules.

use crate::scalar::{lit, Real};

/// Adaptive Simpson quadrature on [a, b] with absolute tolerance `tol`.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let m = (a + b) * lit(0.5);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / lit(6.0) * (fa + lit::<T>(4.0) * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let m = (a + b) * lit(0.5);
    let lm = (a + m) * lit(0.5);
    let rm = (m + b) * lit(0.5);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / lit(6.0) * (fa + lit::<T>(4.0) * flm + fm);
    let right = (b - m) / lit(6.0) * (fm + lit::<T>(4.0) * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= lit::<T>(15.0) * tol || m <= a || m >= b {
        return left + right + delta / lit(15.0);
    }
    let half = tol * lit(0.5);
    simpson_step(f, a, m, fa, flm, fm, left, half, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, half, depth - 1)
}

/// Composite adaptive Simpson over `pieces` equal sub-intervals.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T, pieces: usize) -> T {
    let n = pieces.max(1);
    let w = (b - a) / T::from_usize(n).unwrap();
    let t = tol / T::from_usize(n).unwrap();
    (0..n)
        .map(|i| {
            let lo = a + w * T::from_usize(i).unwrap();
            adaptive_simpson(f, lo, lo + w, t)
        })
        .sum()
}

/// Bisection for a root of `f` in [lo, hi] where `f(lo)` and `f(hi)` have opposite signs.
/// Runs until the bracket stops shrinking in floating point.
pub fn bisect<T: Real, F: FnMut(T) -> T>(mut f: F, mut lo: T, mut hi: T) -> T {
    let flo = f(lo);
    if flo == T::zero() {
        return lo;
    }
    let lo_neg = flo < T::zero();
    for _ in 0..400 {
        let mid = lo + (hi - lo) * lit(0.5);
        if mid <= lo.min(hi) || mid >= lo.max(hi) || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) * lit(0.5)
}

/// Golden-section search for a minimum of a unimodal `f` on [a, b]. Returns (argmin, min).
pub fn golden_min<T: Real, F: FnMut(T) -> T>(mut f: F, mut a: T, mut b: T, tol: T) -> (T, T) {
    let inv_phi: T = lit(0.618_033_988_749_894_8);
    let mut x1 = b - (b - a) * inv_phi;
    let mut x2 = a + (b - a) * inv_phi;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while (b - a).abs() > tol && iter < 300 {
        // ties go left so plateaus resolve to the leftmost point
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - (b - a) * inv_phi;
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + (b - a) * inv_phi;
            f2 = f(x2);
        }
        iter += 1;
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimum of `f` on [a, b]: dense sampling followed by golden refinement around the best node.
/// Endpoints always compete; ties resolve to the leftmost point.
pub fn dense_min<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, samples: usize, tol: T) -> (T, T) {
    if b <= a {
        return (a, f(a));
    }
    let n = samples.max(4);
    let step = (b - a) / T::from_usize(n).unwrap();
    let mut best = (a, f(a));
    let mut best_i = 0;
    for i in 1..=n {
        let x = if i == n {
            b
        } else {
            a + step * T::from_usize(i).unwrap()
        };
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let lo = if best_i == 0 {
        a
    } else {
        a + step * T::from_usize(best_i - 1).unwrap()
    };
    let hi = if best_i >= n {
        b
    } else {
        (a + step * T::from_usize(best_i + 1).unwrap()).min(b)
    };
    let refined = golden_min(f, lo, hi, tol);
    if refined.1 < best.1 {
        refined
    } else {
        best
    }
}

/// Maximum counterpart of [`dense_min`].
pub fn dense_max<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, samples: usize, tol: T) -> (T, T) {
    let (x, v) = dense_min(&|x| -f(x), a, b, samples, tol);
    (x, -v)
}

/// Complementary error function.
pub fn erfc<T: Real>(x: T) -> T {
    lit(libm::erfc(x.f64()))
}

/// Solve a small dense linear system by Gaussian elimination with partial pivoting.
pub fn solve_dense<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() <= T::min_positive_value() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - factor * v;
            }
            let v = b[col];
            b[row] = b[row] - factor * v;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s = s - a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian() {
        let f = |x: f64| (-x * x).exp();
        let v = integrate(&f, -10.0, 10.0, 1e-13, 8);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x: f64| x * x - 2.0, 0.0, 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_min() {
        let (x, v) = golden_min(|x: f64| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dense_min_prefers_endpoint() {
        let (x, _) = dense_min(&|x: f64| x, 0.0, 1.0, 100, 1e-12);
        assert_eq!(x, 0.0);
    }

    #[test]
    fn dense_solver() {
        let a = vec![vec![2.0_f64, 1.0], vec![1.0, 3.0]];
        let x = solve_dense(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }
}
