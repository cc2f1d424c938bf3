//! Characteristic-equation analysis in the moving frame.

use crate::birth_laws::BirthLaw;
use crate::error::{Error, Result};
use crate::kernels::{invert_tail, Kernel, Side};
use crate::numerics::{bisect, golden_min};
use crate::scalar::{lit, Real};

/// Moving-frame parameters together with the two rates of the birth law that the
/// spectral formulas consume: `g'(0)` and `|g|_Lip`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec<T> {
    pub d: usize,
    pub c: T,
    pub nu: Vec<T>,
    pub h: T,
    pub kernel: Kernel<T>,
    pub gprime0: T,
    pub lip: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootReport<T> {
    pub lambda1: T,
    pub lambda2: T,
    /// 1 when the two roots merge (critical speed), else 0.
    pub j_c: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport<T> {
    pub lambda: Vec<T>,
    pub p_lambda: T,
    pub q_lambda: T,
    pub e_value: T,
    pub gamma_lambda: T,
    pub eps_h: T,
    pub a_lambda: T,
    pub roots: Option<RootReport<T>>,
    pub critical_speeds: Option<(T, T)>,
}

impl<T: Real> FrameSpec<T> {
    pub fn new(
        d: usize,
        c: T,
        nu: Vec<T>,
        h: T,
        kernel: Kernel<T>,
        law: &BirthLaw<T>,
    ) -> Result<Self> {
        Self::with_rates(d, c, nu, h, kernel, law.gprime0(), law.global_lipschitz())
    }

    pub fn with_rates(
        d: usize,
        c: T,
        nu: Vec<T>,
        h: T,
        kernel: Kernel<T>,
        gprime0: T,
        lip: T,
    ) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Domain(format!("dimension must be 1 or 2, got {d}")));
        }
        if nu.len() != d {
            return Err(Error::Domain(format!(
                "direction has {} components for d = {d}",
                nu.len()
            )));
        }
        let norm = nu.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if (norm - T::one()).abs() > lit(1e-12) {
            return Err(Error::Domain(format!("|nu| = {norm} is not 1")));
        }
        if !(h > T::zero()) {
            return Err(Error::Domain(format!("delay h must be positive, got {h}")));
        }
        if kernel.dim() != d {
            return Err(Error::Domain(format!(
                "kernel dimension {} does not match d = {d}",
                kernel.dim()
            )));
        }
        if !c.is_finite() {
            return Err(Error::Domain("speed must be finite".into()));
        }
        Ok(FrameSpec {
            d,
            c,
            nu,
            h,
            kernel,
            gprime0,
            lip,
        })
    }

    /// Planar 1D frame along e1.
    pub fn line(c: T, h: T, kernel: Kernel<T>, law: &BirthLaw<T>) -> Result<Self> {
        Self::new(1, c, vec![T::one()], h, kernel, law)
    }

    pub fn with_speed(&self, c: T) -> Self {
        let mut f = self.clone();
        f.c = c;
        f
    }

    fn along(&self, lambda: T) -> Vec<T> {
        self.nu.iter().map(|n| *n * lambda).collect()
    }

    fn dot_nu(&self, lambda: &[T]) -> T {
        self.nu.iter().zip(lambda).map(|(a, b)| *a * *b).sum()
    }

    fn check_len(&self, lambda: &[T]) -> Result<()> {
        if lambda.len() != self.d {
            return Err(Error::Domain(format!(
                "lambda has {} components for d = {}",
                lambda.len(),
                self.d
            )));
        }
        Ok(())
    }
}

/// `(p_λ, q_λ)`.
pub fn pq<T: Real>(frame: &FrameSpec<T>, lambda: &[T]) -> Result<(T, T)> {
    frame.check_len(lambda)?;
    let sq: T = lambda.iter().map(|v| *v * *v).sum();
    let ln = frame.dot_nu(lambda);
    let p = sq - frame.c * ln - T::one();
    let q = frame.lip * (-ln * frame.c * frame.h).exp() * frame.kernel.mgf(lambda)?;
    Ok((p, q))
}

/// `E_c(λ)` for scalar λ along ν.
pub fn char_eval<T: Real>(frame: &FrameSpec<T>, lambda: T) -> Result<T> {
    let l = frame.along(lambda);
    let m = frame.kernel.mgf(&l)?;
    Ok(lambda * lambda - frame.c * lambda - T::one()
        + frame.gprime0 * (-lambda * frame.c * frame.h).exp() * m)
}

fn char_eval_or_inf<T: Real>(frame: &FrameSpec<T>, lambda: T) -> T {
    char_eval(frame, lambda).unwrap_or(T::infinity())
}

/// Search interval for real roots: outside |λ| > |c| + 2 the quadratic part is already positive.
fn scan_interval<T: Real>(c: T, window: (T, T), lo_clip: T, hi_clip: T) -> (T, T) {
    let big = c.abs() + lit(2.0);
    let (wa, wb) = window;
    let w = if wa.is_finite() && wb.is_finite() {
        (wb - wa) * lit(1e-12)
    } else {
        T::zero()
    };
    let (wa, wb) = (wa + w, wb - w);
    (wa.max(-big).max(lo_clip), wb.min(big).min(hi_clip))
}

/// Real roots of `E_c`. E_c is convex (log-convex moment times exponential plus a parabola),
/// so there are at most two, both on the same side of zero since `E_c(0) > 0`.
pub fn char_roots<T: Real>(frame: &FrameSpec<T>) -> Result<RootReport<T>> {
    let window = frame.kernel.window_along(&frame.nu);
    roots_of(
        |x| char_eval_or_inf(frame, x),
        frame.c,
        frame.gprime0,
        window,
    )
}

/// Root search shared by the continuum and grid characteristic functions.
pub fn roots_of<T: Real, F: Fn(T) -> T>(
    f: F,
    c: T,
    gprime0: T,
    window: (T, T),
) -> Result<RootReport<T>> {
    let (a, b) = scan_interval(c, window, T::neg_infinity(), T::infinity());
    let n = 10_000;
    let step = (b - a) / T::from_usize(n).unwrap();
    let mut best_i = 0;
    let mut best = T::infinity();
    for i in 0..=n {
        let v = f(a + step * T::from_usize(i).unwrap());
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = a + step * T::from_usize(best_i.saturating_sub(1)).unwrap();
    let hi = (a + step * T::from_usize(best_i + 1).unwrap()).min(b);
    let (xm, em) = golden_min(&f, lo, hi, lit(1e-15));
    let (xm, em) = if em <= best {
        (xm, em)
    } else {
        (a + step * T::from_usize(best_i).unwrap(), best)
    };
    let scale = T::one() + xm * xm + (c * xm).abs() + gprime0.abs();
    let tol = scale * lit(64.0) * T::epsilon();
    if em > tol {
        return Err(Error::NotAdmissible { c: c.f64() });
    }
    let (l1, l2) = if em >= -tol {
        (xm, xm)
    } else {
        (bisect(&f, a, xm), bisect(&f, xm, b))
    };
    if l1 < T::zero() && l2 > T::zero() {
        return Err(Error::Domain("characteristic roots straddle zero".into()));
    }
    let merged = (l2 - l1).abs() < lit::<T>(1e-6) * (T::one() + l1.abs());
    Ok(RootReport {
        lambda1: l1,
        lambda2: l2,
        j_c: if merged { 1 } else { 0 },
    })
}

impl<T: Real> RootReport<T> {
    /// The root closest to zero: the slowest decay toward the trivial equilibrium.
    pub fn leading(&self) -> T {
        if self.lambda1.abs() <= self.lambda2.abs() {
            self.lambda1
        } else {
            self.lambda2
        }
    }
}

/// Minimum over positive (`positive = true`) or negative admissible λ.
fn side_min<T: Real, F: Fn(T) -> T>(f: F, c: T, window: (T, T), positive: bool) -> T {
    let reach = (c.abs() + (c * c + lit(4.0)).sqrt()) * lit(0.5) + lit(1e-9);
    let (a, b) = if positive {
        scan_interval(c, window, T::zero(), reach)
    } else {
        scan_interval(c, window, -reach, T::zero())
    };
    if !(b > a) {
        return T::infinity();
    }
    // coarse pass guards against a flat infinite plateau near an open window edge
    let n = 64;
    let step = (b - a) / T::from_usize(n).unwrap();
    let mut best_i = 0;
    let mut best = T::infinity();
    for i in 0..=n {
        let v = f(a + step * T::from_usize(i).unwrap());
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = a + step * T::from_usize(best_i.saturating_sub(1)).unwrap();
    let hi = (a + step * T::from_usize(best_i + 1).unwrap()).min(b);
    let (_, v) = golden_min(&f, lo, hi, lit(1e-10));
    v.min(best)
}

/// `(c*⁻, c*⁺)`: the speeds at which `E_c` acquires a double real root on the negative and
/// positive side respectively.
pub fn critical_speeds<T: Real>(frame: &FrameSpec<T>) -> Result<(T, T)> {
    if !(frame.gprime0 > T::one()) {
        return Err(Error::Domain(format!(
            "critical speeds need g'(0) > 1, got {}",
            frame.gprime0
        )));
    }
    let window = frame.kernel.window_along(&frame.nu);
    critical_speeds_of(|c, l| char_eval_or_inf(&frame.with_speed(c), l), window)
}

/// Critical speeds of a two-argument characteristic function `e(c, λ)`.
pub fn critical_speeds_of<T: Real, E: Fn(T, T) -> T>(e: E, window: (T, T)) -> Result<(T, T)> {
    let plus = |c: T| side_min(|l| e(c, l), c, window, true);
    let minus = |c: T| side_min(|l| e(c, l), c, window, false);
    let mut bound: T = lit(50.0);
    for _ in 0..4 {
        // the positive-side minimum decreases with c, the negative-side one increases
        let pos = plus(-bound) > T::zero() && plus(bound) <= T::zero();
        let neg = minus(bound) > T::zero() && minus(-bound) <= T::zero();
        if pos && neg {
            let c_plus = bisect_flag(|c| plus(c) <= T::zero(), -bound, bound);
            let c_minus = bisect_flag(|c| minus(c) > T::zero(), -bound, bound);
            return Ok((c_minus, c_plus));
        }
        bound = bound * lit(2.0);
    }
    Err(Error::ScanRange {
        lo: -bound.f64() / 2.0,
        hi: bound.f64() / 2.0,
    })
}

/// Bisection on a monotone predicate. When the predicate holds at `hi` the returned point satisfies
/// it; otherwise the last point where it fails is returned.
fn bisect_flag<T: Real, F: Fn(T) -> bool>(pred: F, mut lo: T, mut hi: T) -> T {
    let flips_true_at_hi = pred(hi);
    for _ in 0..400 {
        let mid = lo + (hi - lo) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) == flips_true_at_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if flips_true_at_hi {
        hi
    } else {
        lo
    }
}

/// Root of the strictly increasing map `x ↦ x + a + b e^{k x}` with `b ≥ 0`, bracketed as
/// `[-a - b e^{-k a}, -a]` for `k ≥ 0`.
fn increasing_root<T: Real>(a: T, b: T, k: T) -> T {
    let f = |x: T| x + a + b * (k * x).exp();
    if b == T::zero() {
        return -a;
    }
    let hi = -a;
    let lo = -a - b * (-k * a).exp();
    bisect(f, lo, hi)
}

/// `γ_λ`, the real root of `γ + p_λ + q_λ e^{hγ} = 0`.
pub fn gamma_lambda<T: Real>(frame: &FrameSpec<T>, lambda: &[T]) -> Result<T> {
    let (p, q) = pq(frame, lambda)?;
    Ok(increasing_root(p, q, frame.h))
}

/// `ε_h = 1/(1 + h q_λ e^{h γ_λ})`.
pub fn eps_h<T: Real>(frame: &FrameSpec<T>, lambda: &[T]) -> Result<T> {
    let (_, q) = pq(frame, lambda)?;
    let g = gamma_lambda(frame, lambda)?;
    Ok(T::one() / (T::one() + frame.h * q * (frame.h * g).exp()))
}

/// `A_λ = ((1 + h q_λ e^{γ_λ h})/(4π))^{d/2}`.
pub fn a_lambda<T: Real>(frame: &FrameSpec<T>, lambda: &[T]) -> Result<T> {
    let (_, q) = pq(frame, lambda)?;
    let g = gamma_lambda(frame, lambda)?;
    let base = (T::one() + frame.h * q * (g * frame.h).exp()) / (lit::<T>(4.0) * T::PI());
    Ok(base.powf(T::from_usize(frame.d).unwrap() * lit(0.5)))
}

/// `q̂_λ(ζ) = |g|_Lip e^{-λ·ν c h} (2π)^d |FT(e^{-λ·y} K)(ζ)|`, so that `q̂_λ(0) = q_λ`.
pub fn q_hat<T: Real>(frame: &FrameSpec<T>, lambda: &[T], zeta: &[T]) -> Result<T> {
    frame.check_len(lambda)?;
    frame.check_len(zeta)?;
    let two_pi_d = (lit::<T>(2.0) * T::PI()).powi(frame.d as i32);
    let ln = frame.dot_nu(lambda);
    Ok(frame.lip
        * (-ln * frame.c * frame.h).exp()
        * two_pi_d
        * frame.kernel.weighted_fourier_magnitude(lambda, zeta)?)
}

/// `l_λ(ζ)`, the real root of `l = -|ζ|² + p_λ + q̂_λ(ζ) e^{-h l}`.
pub fn l_lambda<T: Real>(frame: &FrameSpec<T>, lambda: &[T], zeta: &[T]) -> Result<T> {
    let (p, _) = pq(frame, lambda)?;
    let qh = q_hat(frame, lambda, zeta)?;
    let z2: T = zeta.iter().map(|v| *v * *v).sum();
    // substitute l = -x: x + (p - |ζ|²) + q̂ e^{h x} = 0
    Ok(-increasing_root(p - z2, qh, frame.h))
}

/// Lower and upper bounds `(-ε_h|ζ|² - γ_λ, -log(1 + h ε_h |ζ|²)/h - γ_λ)` for `l_λ(ζ)`.
pub fn l_lambda_bounds<T: Real>(frame: &FrameSpec<T>, lambda: &[T], zeta: &[T]) -> Result<(T, T)> {
    let g = gamma_lambda(frame, lambda)?;
    let e = eps_h(frame, lambda)?;
    let z2: T = zeta.iter().map(|v| *v * *v).sum();
    let lower = -e * z2 - g;
    let upper = -(frame.h * e * z2).ln_1p() / frame.h - g;
    Ok((lower, upper))
}

/// Largest `γ* < min(cap, 1)` with `ρ e^{γ* h} ≤ (1 - γ*)(1 - 1e-9)`.
pub fn gamma_star<T: Real>(rho: T, h: T, cap: T) -> Option<T> {
    if !(rho < T::one()) || !(cap > T::zero()) || rho < T::zero() {
        return None;
    }
    let margin = T::one() - lit::<T>(1e-9);
    let ok = |g: T| rho * (g * h).exp() <= (T::one() - g) * margin;
    if !ok(T::zero()) {
        return None;
    }
    let mut lo = T::zero();
    let mut hi = cap.min(T::one());
    while hi - lo > lit(1e-12) {
        let mid = (lo + hi) * lit(0.5);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > T::zero() {
        Some(lo)
    } else {
        None
    }
}

fn delta_ineq<T: Real>(rho: T, h: T, d: usize, delta: T, t: T) -> T {
    let half_d = T::from_usize(d).unwrap() * lit(0.5);
    rho * ((t + delta) / (t + delta - h)).powf(half_d) + half_d / (t + delta)
}

/// Smallest `δ* > max(1 + h, 2h)` on a 1e-3 grid (refined by bisection) such that
/// `ρ(t+δ)^{d/2}/(t+δ-h)^{d/2} + d/(2(t+δ)) < 1` for all `t ≥ -h`.
pub fn delta_star<T: Real>(rho: T, h: T, d: usize) -> Result<T> {
    if !(rho < T::one()) || rho < T::zero() {
        return Err(Error::NoSolution(format!(
            "delta* needs 0 <= rho < 1, got {rho}"
        )));
    }
    let base = (T::one() + h).max(lit::<T>(2.0) * h);
    let holds = |delta: T| delta_ineq(rho, h, d, delta, -h) < T::one();
    let step: T = lit(1e-3);
    // bracket by doubling, then walk the 1e-3 grid inside the last bracket
    let mut k_hi: u64 = 1;
    while !holds(base + step * T::from_u64(k_hi).unwrap()) {
        k_hi *= 2;
        if k_hi > 1 << 40 {
            return Err(Error::NoSolution("delta* search diverged".into()));
        }
    }
    let mut k_lo = k_hi / 2;
    // invariant: grid point k_lo fails (or is the excluded base), k_hi holds
    while k_hi - k_lo > 1 {
        let mid = (k_lo + k_hi) / 2;
        if holds(base + step * T::from_u64(mid).unwrap()) {
            k_hi = mid;
        } else {
            k_lo = mid;
        }
    }
    let mut delta = base + step * T::from_u64(k_hi).unwrap();
    if k_lo >= 1 {
        let lo = base + step * T::from_u64(k_lo).unwrap();
        let hi = delta;
        let f = |x: T| delta_ineq(rho, h, d, x, -h) - T::one();
        let root = bisect(f, lo, hi);
        // keep strictly inside the admissible side
        let mut cand = root;
        while !holds(cand) && cand < hi {
            cand = cand + (hi - lo) * lit(1e-9);
        }
        delta = cand.min(hi);
    }
    // both terms decrease in t; confirm on a grid anyway
    for i in 0..=1000 {
        let t = -h + (delta * lit(100.0)) * T::from_usize(i).unwrap() / lit(1000.0);
        if !(delta_ineq(rho, h, d, delta, t) < T::one()) {
            return Err(Error::NoSolution(format!(
                "delta* = {delta} fails at t = {t}"
            )));
        }
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontSide {
    /// `c ≥ c*⁺`: the profile approaches κ at +∞ (uses z⁺).
    Plus,
    /// `c ≤ c*⁻`: the profile approaches κ at −∞ (uses z⁻).
    Minus,
}

/// `b_γ` from `g'(0) ∫_{b - z - ch}^{∞} K = γ e^{-γh}` (plus side) or the left-tail analogue.
pub fn b_gamma<T: Real>(z_edge: T, side: FrontSide, frame: &FrameSpec<T>, gamma: T) -> Result<T> {
    let level = gamma * (-gamma * frame.h).exp() / frame.gprime0;
    let ch = frame.c * frame.h;
    let k = &frame.kernel;
    if level == T::zero() {
        return match k.compact_support() {
            Some((lo, hi)) => Ok(match side {
                FrontSide::Plus => hi + z_edge + ch,
                FrontSide::Minus => lo + z_edge + ch,
            }),
            None => Err(Error::Level {
                level: 0.0,
                reason: "kernel without compact support never has a zero tail".into(),
            }),
        };
    }
    let tail_side = match side {
        FrontSide::Plus => Side::Right,
        FrontSide::Minus => Side::Left,
    };
    Ok(invert_tail(k, level, tail_side)? + z_edge + ch)
}

/// Full report at a weight λ; roots and critical speeds are included when defined.
pub fn report<T: Real>(frame: &FrameSpec<T>, lambda: &[T]) -> Result<SpectralReport<T>> {
    let (p, q) = pq(frame, lambda)?;
    let scalar = frame.dot_nu(lambda);
    Ok(SpectralReport {
        lambda: lambda.to_vec(),
        p_lambda: p,
        q_lambda: q,
        e_value: char_eval(frame, scalar)?,
        gamma_lambda: gamma_lambda(frame, lambda)?,
        eps_h: eps_h(frame, lambda)?,
        a_lambda: a_lambda(frame, lambda)?,
        roots: char_roots(frame).ok(),
        critical_speeds: critical_speeds(frame).ok(),
    })
}


#[cfg(test)]
mod speed_tests {
    use super::*;
    use std::time::Instant;

    #[test]
    fn asymmetric_pair() {
        let t0 = Instant::now();
        let k = Kernel::shifted_heat(5.0_f64).unwrap();
        let f = FrameSpec::with_rates(1, 0.0, vec![1.0], 2.0, k, 2.0, 2.0).unwrap();
        let (lo, hi) = critical_speeds(&f).unwrap();
        println!("{lo} {hi} {:?}", t0.elapsed());
        assert!((lo - 0.70486).abs() < 1e-4 && (hi - 2.69637).abs() < 1e-4);
    }

    #[test]
    fn kpp_limit() {
        let k = Kernel::gaussian(0.0_f64, 1e-6).unwrap();
        let f = FrameSpec::with_rates(1, 0.0, vec![1.0], 1e-6, k, 2.0, 2.0).unwrap();
        let (lo, hi) = critical_speeds(&f).unwrap();
        println!("{lo} {hi}");
        assert!((hi - 2.0).abs() < 1e-2 && (lo + hi).abs() < 1e-8);
        let r = char_roots(&f.with_speed(3.0)).unwrap();
        println!("{r:?}");
    }
}
