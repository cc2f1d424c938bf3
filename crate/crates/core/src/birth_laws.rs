//! Birth nonlinearities g, their equilibria and Lipschitz data.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::numerics::{bisect, dense_max, dense_min};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum BirthForm<T> {
    /// `p u e^{-u}`
    Nicholson { p: T },
    /// `p u / (1 + u^n)`
    MackeyGlass { p: T, n: T },
    /// `r u - u^2`, clipped at zero for `u > r`
    KppQuadratic { r: T },
    /// `slope * u`
    Linear { slope: T },
    /// Linear interpolation of `(u, g)` samples with `u` increasing and `u[0] = 0`.
    Tabulated { u: Vec<T>, g: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthLaw<T> {
    form: BirthForm<T>,
    domain_cap: T,
    scale: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawReport<T> {
    pub gprime0: T,
    pub kappa: T,
    pub zeta2: T,
    pub big_m: T,
    pub small_m: T,
    pub interval: (T, T),
    pub rho: T,
    pub attractor_g: bool,
    /// Every cobweb seed settled within 1e-6 of κ (diagnostic only).
    pub cobweb_converged: bool,
}

#[derive(Debug, Clone)]
pub struct Envelopes<T> {
    pub upper: BirthLaw<T>,
    pub lower: BirthLaw<T>,
    /// Positive fixed point of the upper envelope (M_g).
    pub upper_fixed: T,
    /// Positive fixed point of the lower envelope (min of g on [κ, cap]).
    pub lower_fixed: T,
}

const ENVELOPE_NODES: usize = 1 << 20;

impl<T: Real> BirthLaw<T> {
    pub fn nicholson(p: T) -> Result<Self> {
        if !(p > T::zero()) {
            return Err(Error::Domain(format!("nicholson needs p > 0, got {p}")));
        }
        let kappa = if p > T::one() { p.ln() } else { T::one() };
        Ok(Self::with_cap(
            BirthForm::Nicholson { p },
            kappa * lit(10.0),
        ))
    }

    pub fn mackey_glass(p: T, n: T) -> Result<Self> {
        if !(p > T::zero()) || !(n > T::zero()) {
            return Err(Error::Domain("mackey_glass needs p > 0 and n > 0".into()));
        }
        let kappa = if p > T::one() {
            (p - T::one()).powf(T::one() / n)
        } else {
            T::one()
        };
        Ok(Self::with_cap(
            BirthForm::MackeyGlass { p, n },
            kappa * lit(10.0),
        ))
    }

    pub fn kpp_quadratic(r: T) -> Result<Self> {
        if !(r > T::zero()) {
            return Err(Error::Domain(format!("kpp_quadratic needs r > 0, got {r}")));
        }
        let kappa = if r > T::one() { r - T::one() } else { T::one() };
        Ok(Self::with_cap(
            BirthForm::KppQuadratic { r },
            kappa * lit(10.0),
        ))
    }

    pub fn linear(slope: T) -> Result<Self> {
        if !slope.is_finite() {
            return Err(Error::Domain("linear slope must be finite".into()));
        }
        Ok(Self::with_cap(BirthForm::Linear { slope }, T::infinity()))
    }

    /// Tabulated law; the cap is the last sample position.
    pub fn tabulated(u: Vec<T>, g: Vec<T>) -> Result<Self> {
        if u.len() < 2 || u.len() != g.len() {
            return Err(Error::Domain(
                "tabulated law needs >= 2 matching (u, g) samples".into(),
            ));
        }
        if u[0] != T::zero() || g[0] != T::zero() {
            return Err(Error::Domain("tabulated law must start at (0, 0)".into()));
        }
        if u.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "tabulated law positions must be increasing".into(),
            ));
        }
        let cap = u[u.len() - 1];
        Ok(Self::with_cap(BirthForm::Tabulated { u, g }, cap))
    }

    fn with_cap(form: BirthForm<T>, cap: T) -> Self {
        BirthLaw {
            form,
            domain_cap: cap,
            scale: T::one(),
        }
    }

    pub fn with_domain_cap(mut self, cap: T) -> Result<Self> {
        if !(cap > T::zero()) {
            return Err(Error::Domain("domain_cap must be positive".into()));
        }
        if let BirthForm::Tabulated { .. } = self.form {
            return Err(Error::Domain(
                "tabulated laws take their cap from the samples".into(),
            ));
        }
        self.domain_cap = cap;
        Ok(self)
    }

    /// The law multiplied by a constant factor.
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        out.scale = out.scale * factor;
        out
    }

    pub fn form(&self) -> &BirthForm<T> {
        &self.form
    }

    pub fn domain_cap(&self) -> T {
        self.domain_cap
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.form, BirthForm::Tabulated { .. })
    }

    fn raw(&self, u: T) -> T {
        match &self.form {
            BirthForm::Nicholson { p } => *p * u * (-u).exp(),
            BirthForm::MackeyGlass { p, n } => *p * u / (T::one() + u.powf(*n)),
            BirthForm::KppQuadratic { r } => (*r * u - u * u).max(T::zero()),
            BirthForm::Linear { slope } => *slope * u,
            BirthForm::Tabulated { u: us, g } => {
                let i = segment(us, u);
                let t = (u - us[i]) / (us[i + 1] - us[i]);
                g[i] + (g[i + 1] - g[i]) * t
            }
        }
    }

    fn raw_derivative(&self, u: T) -> T {
        match &self.form {
            BirthForm::Nicholson { p } => *p * (-u).exp() * (T::one() - u),
            BirthForm::MackeyGlass { p, n } => {
                let un = u.powf(*n);
                let den = T::one() + un;
                *p * (T::one() + (T::one() - *n) * un) / (den * den)
            }
            BirthForm::KppQuadratic { r } => {
                if u <= *r {
                    *r - lit::<T>(2.0) * u
                } else {
                    T::zero()
                }
            }
            BirthForm::Linear { slope } => *slope,
            BirthForm::Tabulated { u: us, g } => {
                let i = segment(us, u);
                (g[i + 1] - g[i]) / (us[i + 1] - us[i])
            }
        }
    }

    /// g(u), extended linearly below zero and constantly above the cap.
    pub fn eval(&self, u: T) -> T {
        let v = if u < T::zero() {
            self.gprime0_raw() * u
        } else if u > self.domain_cap {
            self.raw(self.domain_cap)
        } else {
            self.raw(u)
        };
        v * self.scale
    }

    /// g'(u) for the extended law (right derivative at kinks).
    pub fn derivative(&self, u: T) -> T {
        let v = if u < T::zero() {
            self.gprime0_raw()
        } else if u >= self.domain_cap {
            T::zero()
        } else {
            self.raw_derivative(u)
        };
        v * self.scale
    }

    fn gprime0_raw(&self) -> T {
        match &self.form {
            BirthForm::Tabulated { u, g } => (g[1] - g[0]) / (u[1] - u[0]),
            _ => self.raw_derivative(T::zero()),
        }
    }

    pub fn gprime0(&self) -> T {
        self.gprime0_raw() * self.scale
    }

    /// |g|_Lip over the whole extended line.
    pub fn global_lipschitz(&self) -> T {
        let cap = if self.domain_cap.is_finite() {
            self.domain_cap
        } else {
            T::one()
        };
        self.lipschitz_on(T::zero(), cap).max(self.gprime0().abs())
    }

    /// sup |g(x) - g(y)| / |x - y| over [a, b].
    pub fn lipschitz_on(&self, a: T, b: T) -> T {
        if !(b > a) {
            return T::zero();
        }
        let mut best = T::zero();
        if a < T::zero() {
            best = best.max(self.gprime0().abs());
        }
        let lo = a.max(T::zero());
        let hi = b.min(self.domain_cap);
        if hi > lo {
            let sampled = match &self.form {
                BirthForm::Tabulated { u, .. } => {
                    let mut m = T::zero();
                    for i in 0..u.len() - 1 {
                        if u[i + 1] > lo && u[i] < hi {
                            m = m.max(self.derivative(u[i]).abs());
                        }
                    }
                    m
                }
                _ => {
                    let f = |x: T| self.derivative(x).abs();
                    let (_, v) = dense_max(&f, lo, hi, 4096, (hi - lo) * lit(1e-13));
                    // the difference quotient over the whole interval is a valid lower bound too
                    let q = ((self.eval(hi) - self.eval(lo)) / (hi - lo)).abs();
                    v.max(q)
                }
            };
            best = best.max(sampled);
        }
        best
    }

    /// Equilibria, extremal values and Lipschitz data.
    pub fn analyze(&self) -> Result<LawReport<T>> {
        let g0 = self.gprime0();
        if !(g0 > T::one()) {
            return Err(Error::NotMonostable(format!("g'(0) = {g0} must exceed 1")));
        }
        let cap = if self.domain_cap.is_finite() {
            self.domain_cap
        } else {
            return Err(Error::NotMonostable(
                "unbounded law has no positive equilibrium".into(),
            ));
        };
        let f = |u: T| self.eval(u) - u;
        let n = 20_000;
        let start = cap * lit(1e-7);
        let step = (cap - start) / T::from_usize(n).unwrap();
        let mut roots = Vec::new();
        let mut prev_u = start;
        let mut prev = f(start);
        for i in 1..=n {
            let u = start + step * T::from_usize(i).unwrap();
            let v = f(u);
            if v == T::zero() {
                roots.push(u);
            } else if prev != T::zero() && (v < T::zero()) != (prev < T::zero()) {
                roots.push(bisect(f, prev_u, u));
            }
            prev_u = u;
            prev = v;
        }
        // above the cap g is constant; a root there would need g(cap) >= cap
        if self.eval(cap) > cap {
            return Err(Error::NotMonostable(
                "g(cap) exceeds cap; no equilibrium below the cap".into(),
            ));
        }
        roots.dedup_by(|a, b| (*a - *b).abs() <= step);
        if roots.len() != 1 {
            return Err(Error::NotMonostable(format!(
                "found {} positive fixed points, expected exactly one",
                roots.len()
            )));
        }
        let kappa = roots[0];
        let tol = lit::<T>(1e-12);
        let g = |u: T| self.eval(u);
        let (_, zeta2) = dense_max(&g, T::zero(), cap, 20_000, cap * tol);
        let (_, big_m) = dense_max(&g, T::zero(), kappa, 8192, kappa * tol);
        let big_m = big_m.max(kappa);
        let (_, small_m) = dense_min(&g, kappa, big_m, 8192, big_m * tol);
        let small_m = small_m.min(kappa);
        let rho = self.lipschitz_on(small_m, big_m);

        let g2 = |u: T| self.eval(self.eval(u)) - u;
        let m = 20_000;
        let s0 = zeta2 * lit(1e-7);
        let ds = (zeta2 - s0) / T::from_usize(m).unwrap();
        let mut sign_changes = 0;
        let mut last = g2(s0);
        for i in 1..=m {
            let v = g2(s0 + ds * T::from_usize(i).unwrap());
            if v != T::zero() && last != T::zero() && (v < T::zero()) != (last < T::zero()) {
                sign_changes += 1;
            }
            if v != T::zero() {
                last = v;
            }
        }
        // a fixed point sitting exactly at ζ₂ shows up as a touch, not a crossing
        if g2(zeta2).abs() <= lit::<T>(1e-9) * (T::one() + zeta2) && last > T::zero() {
            sign_changes += 1;
        }
        let mut cobweb_converged = true;
        for i in 1..=64 {
            let mut x = zeta2 * T::from_usize(i).unwrap() / lit(64.0);
            for _ in 0..10_000 {
                x = self.eval(x);
            }
            if (x - kappa).abs() > lit(1e-6) {
                cobweb_converged = false;
            }
        }
        Ok(LawReport {
            gprime0: g0,
            kappa,
            zeta2,
            big_m,
            small_m,
            interval: (small_m, big_m),
            rho,
            attractor_g: sign_changes == 1,
            cobweb_converged,
        })
    }

    /// Monotone envelopes: running max from 0, and running min up to `cap`.
    pub fn envelopes(&self, cap: T) -> Result<Envelopes<T>> {
        let report = self.analyze()?;
        if cap < report.big_m {
            return Err(Error::Domain(format!(
                "envelope cap {cap} is below M_g = {}",
                report.big_m
            )));
        }
        let top = self.domain_cap.max(cap);
        let n = ENVELOPE_NODES;
        let du = top / T::from_usize(n).unwrap();
        let us: Vec<T> = (0..=n).map(|i| du * T::from_usize(i).unwrap()).collect();
        let mut upper = Vec::with_capacity(n + 1);
        let mut run = T::zero();
        for &u in &us {
            run = run.max(self.eval(u));
            upper.push(run);
        }
        let m = (cap / du).ceil().to_usize().unwrap().min(n);
        let lu: Vec<T> = (0..m).map(|i| us[i]).chain(std::iter::once(cap)).collect();
        let mut lower = vec![T::zero(); lu.len()];
        let mut run = self.eval(cap);
        for i in (0..lu.len()).rev() {
            run = run.min(self.eval(lu[i]));
            lower[i] = run;
        }
        // chords of a curved g (and maxima between nodes) miss by up to |g''| du²/2
        let gs: Vec<T> = us.iter().map(|u| self.eval(*u)).collect();
        let margin = gs
            .windows(3)
            .map(|w| (w[0] - w[1] - w[1] + w[2]).abs())
            .fold(T::zero(), T::max)
            * lit(0.6);
        let upper: Vec<T> = upper
            .into_iter()
            .enumerate()
            .map(|(i, v)| if i == 0 { v } else { v + margin })
            .collect();
        let lower: Vec<T> = lower.into_iter().map(|v| (v - margin).max(T::zero())).collect();
        let upper_law = BirthLaw::tabulated(us, upper)?;
        let lower_law = BirthLaw::tabulated(lu, lower)?;
        let (_, lower_fixed) = dense_min(
            &|u: T| self.eval(u),
            report.kappa,
            cap,
            8192,
            cap * lit(1e-12),
        );
        Ok(Envelopes {
            upper: upper_law,
            lower: lower_law,
            upper_fixed: report.big_m,
            lower_fixed: lower_fixed.min(report.kappa),
        })
    }
}

/// Index i with us[i] <= u <= us[i+1], clamped to the table.
fn segment<T: Real>(us: &[T], u: T) -> usize {
    let n = us.len();
    if u <= us[0] {
        return 0;
    }
    if u >= us[n - 1] {
        return n - 2;
    }
    match us.binary_search_by(|x| x.partial_cmp(&u).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    }
}

/// The normalized system of the Nicholson equation with decay rate `delta`:
/// time `t' = δ t`, space `x' = √δ x`, delay `h' = δ h`, birth law `nicholson(p/δ)`.
pub fn nicholson_normalize<T: Real>(
    p: T,
    delta: T,
    h: T,
    kernel: &Kernel<T>,
) -> Result<(BirthLaw<T>, T, Kernel<T>)> {
    if !(p > T::zero()) || !(delta > T::zero()) || !(h > T::zero()) {
        return Err(Error::Domain("p, delta and h must be positive".into()));
    }
    Ok((
        BirthLaw::nicholson(p / delta)?,
        delta * h,
        kernel.rescaled(delta.sqrt()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_extension_below_zero() {
        let g = BirthLaw::nicholson(3.0).unwrap();
        assert_eq!(g.eval(-0.5), -1.5);
        let cap = g.domain_cap();
        assert_eq!(g.eval(cap + 5.0), g.eval(cap));
    }

    #[test]
    fn kpp_quadratic_fixed_point() {
        let g = BirthLaw::kpp_quadratic(2.0_f64).unwrap();
        let r = g.analyze().unwrap();
        assert!((r.kappa - 1.0).abs() < 1e-12);
        assert!(r.attractor_g);
    }

    #[test]
    fn linear_law_is_not_monostable() {
        assert!(matches!(
            BirthLaw::linear(2.0).unwrap().analyze(),
            Err(Error::NotMonostable(_))
        ));
    }

    #[test]
    fn sub_threshold_law_is_rejected() {
        assert!(BirthLaw::nicholson(0.9).unwrap().analyze().is_err());
    }

    #[test]
    fn scaled_law() {
        let g = BirthLaw::nicholson(2.0).unwrap().scaled(0.5);
        assert!((g.eval(1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(g.gprime0(), 1.0);
    }

    #[test]
    fn mackey_glass_kappa() {
        let g = BirthLaw::mackey_glass(2.0_f64, 4.0).unwrap();
        let r = g.analyze().unwrap();
        assert!((r.kappa - 1.0).abs() < 1e-10);
    }
}
