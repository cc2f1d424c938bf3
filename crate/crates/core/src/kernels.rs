//! Dispersal kernels and their exponential moments.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, bisect, erfc};
use crate::scalar::{lit, Real};

/// Shape of a kernel. Analytic forms are normalized to unit integral; the owning
/// [`Kernel`] multiplies by its mass.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm<T> {
    Gaussian {
        shift: T,
        variance: T,
    },
    Uniform {
        lo: T,
        hi: T,
    },
    Laplace {
        shift: T,
        scale: T,
    },
    TensorProduct(Vec<Kernel<T>>),
    /// Linear interpolation of `density` on `origin + i*spacing`; zero outside.
    Tabulated {
        origin: T,
        spacing: T,
        density: Vec<T>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    form: KernelForm<T>,
    mass: T,
}

/// Point samples of a 1D kernel on a uniform grid.
#[derive(Debug, Clone)]
pub struct KernelSamples<T> {
    pub nodes: Vec<T>,
    /// Pointwise density before renormalization.
    pub raw: Vec<T>,
    /// Samples rescaled so that `sum * spacing == mass`.
    pub values: Vec<T>,
    pub raw_mass: T,
    pub scale: T,
}

/// Uniform 1D sampling grid `lo, lo+spacing, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid<T> {
    pub lo: T,
    pub hi: T,
    pub spacing: T,
}

impl<T: Real> Kernel<T> {
    pub fn gaussian(shift: T, variance: T) -> Result<Self> {
        Self::gaussian_with_mass(shift, variance, T::one())
    }

    pub fn gaussian_with_mass(shift: T, variance: T, mass: T) -> Result<Self> {
        if !(variance > T::zero()) || !shift.is_finite() {
            return Err(Error::Domain(format!(
                "gaussian needs variance > 0, got {variance}"
            )));
        }
        Self::with_mass(KernelForm::Gaussian { shift, variance }, mass)
    }

    pub fn uniform(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Domain(format!(
                "uniform needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Self::with_mass(KernelForm::Uniform { lo, hi }, T::one())
    }

    pub fn laplace(shift: T, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::Domain(format!(
                "laplace needs scale > 0, got {scale}"
            )));
        }
        Self::with_mass(KernelForm::Laplace { shift, scale }, T::one())
    }

    /// Tensor product of 1D factors; total mass is the product of factor masses.
    pub fn tensor(factors: Vec<Kernel<T>>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::Domain(
                "tensor product needs at least two factors".into(),
            ));
        }
        if factors.iter().any(|f| f.dim() != 1) {
            return Err(Error::Domain("tensor factors must be 1D kernels".into()));
        }
        let mass = factors.iter().fold(T::one(), |m, f| m * f.mass);
        Ok(Kernel {
            form: KernelForm::TensorProduct(factors),
            mass,
        })
    }

    /// Tabulated kernel; the density is rescaled so the interpolant integrates to `mass`.
    pub fn tabulated(origin: T, spacing: T, density: Vec<T>, mass: T) -> Result<Self> {
        if density.len() < 2 || !(spacing > T::zero()) {
            return Err(Error::Domain(
                "tabulated kernel needs >= 2 samples and spacing > 0".into(),
            ));
        }
        if density.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(Error::Domain(
                "tabulated kernel must be finite and non-negative".into(),
            ));
        }
        let n = density.len();
        let trap = (density.iter().copied().sum::<T>() - (density[0] + density[n - 1]) * lit(0.5))
            * spacing;
        if !(trap > T::zero()) {
            return Err(Error::Domain("tabulated kernel has zero mass".into()));
        }
        let density = density.into_iter().map(|v| v * mass / trap).collect();
        Self::with_mass(
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            },
            mass,
        )
    }

    /// Tabulated kernel from (position, density) pairs on a uniform grid.
    pub fn from_pairs(pairs: &[(T, T)], mass: T) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::Domain("tabulated kernel needs >= 2 samples".into()));
        }
        let spacing = pairs[1].0 - pairs[0].0;
        for w in pairs.windows(2) {
            let s = w[1].0 - w[0].0;
            if (s - spacing).abs() > lit::<T>(1e-9) * spacing.abs().max(T::one()) {
                return Err(Error::Domain(
                    "tabulated kernel positions must be uniform".into(),
                ));
            }
        }
        Self::tabulated(
            pairs[0].0,
            spacing,
            pairs.iter().map(|p| p.1).collect(),
            mass,
        )
    }

    fn with_mass(form: KernelForm<T>, mass: T) -> Result<Self> {
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::Domain(format!(
                "kernel mass must be positive, got {mass}"
            )));
        }
        Ok(Kernel { form, mass })
    }

    /// The example kernel `e^{-(s+rho)^2/4}/sqrt(4 pi)` (heat-kernel reading, unit mass).
    pub fn shifted_heat(rho: T) -> Result<Self> {
        Self::gaussian(-rho, lit(2.0))
    }

    /// The same kernel read literally as `e^{-(s+rho)^2}/sqrt(4 pi)`, whose mass is 1/2.
    pub fn shifted_heat_literal(rho: T) -> Result<Self> {
        Self::gaussian_with_mass(-rho, lit(0.5), lit(0.5))
    }

    pub fn form(&self) -> &KernelForm<T> {
        &self.form
    }

    pub fn mass(&self) -> T {
        self.mass
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            KernelForm::TensorProduct(f) => f.len(),
            _ => 1,
        }
    }

    /// Factor along `axis` (the kernel itself when 1D).
    pub fn factor(&self, axis: usize) -> &Kernel<T> {
        match &self.form {
            KernelForm::TensorProduct(f) => &f[axis],
            _ => self,
        }
    }

    /// Space rescaling x' = s x, preserving mass and tensor structure.
    pub fn rescaled(&self, s: T) -> Self {
        let form = match &self.form {
            KernelForm::Gaussian { shift, variance } => KernelForm::Gaussian {
                shift: *shift * s,
                variance: *variance * s * s,
            },
            KernelForm::Uniform { lo, hi } => KernelForm::Uniform {
                lo: *lo * s,
                hi: *hi * s,
            },
            KernelForm::Laplace { shift, scale } => KernelForm::Laplace {
                shift: *shift * s,
                scale: *scale * s,
            },
            KernelForm::TensorProduct(f) => {
                KernelForm::TensorProduct(f.iter().map(|k| k.rescaled(s)).collect())
            }
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => KernelForm::Tabulated {
                origin: *origin * s,
                spacing: *spacing * s,
                density: density.iter().map(|v| *v / s).collect(),
            },
        };
        Kernel {
            form,
            mass: self.mass,
        }
    }

    /// Density of a 1D kernel (tensor kernels: first factor times the masses of the rest).
    pub fn density1(&self, y: T) -> T {
        let m = self.mass;
        match &self.form {
            KernelForm::Gaussian { shift, variance } => {
                let d = y - *shift;
                m * (-(d * d) / (lit::<T>(2.0) * *variance)).exp()
                    / (lit::<T>(2.0) * T::PI() * *variance).sqrt()
            }
            KernelForm::Uniform { lo, hi } => {
                let w = *hi - *lo;
                if y > *lo && y < *hi {
                    m / w
                } else if y == *lo || y == *hi {
                    m / w * lit(0.5)
                } else {
                    T::zero()
                }
            }
            KernelForm::Laplace { shift, scale } => {
                m * (-(y - *shift).abs() / *scale).exp() / (lit::<T>(2.0) * *scale)
            }
            KernelForm::TensorProduct(f) => {
                let rest = f[1..].iter().fold(T::one(), |a, k| a * k.mass);
                f[0].density1(y) * rest
            }
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => interp(*origin, *spacing, density, y),
        }
    }

    /// Density at a point of R^d.
    pub fn density(&self, y: &[T]) -> T {
        match &self.form {
            KernelForm::TensorProduct(f) => f
                .iter()
                .zip(y)
                .fold(T::one(), |a, (k, yi)| a * k.density1(*yi)),
            _ => self.density1(y[0]),
        }
    }

    /// Open interval of admissible exponents for a 1D kernel.
    pub fn window(&self) -> (T, T) {
        match &self.form {
            KernelForm::Laplace { scale, .. } => (-T::one() / *scale, T::one() / *scale),
            KernelForm::TensorProduct(f) => f[0].window(),
            _ => (T::neg_infinity(), T::infinity()),
        }
    }

    /// Admissible window for scalar λ in the exponent λ·ν.
    pub fn window_along(&self, nu: &[T]) -> (T, T) {
        let mut lo = T::neg_infinity();
        let mut hi = T::infinity();
        for (axis, &n) in nu.iter().enumerate().take(self.dim()) {
            if n == T::zero() {
                continue;
            }
            let (a, b) = self.factor(axis).window();
            let (l, h) = if n > T::zero() {
                (a / n, b / n)
            } else {
                (b / n, a / n)
            };
            lo = lo.max(l);
            hi = hi.min(h);
        }
        (lo, hi)
    }

    fn check_window(&self, lambda: T) -> Result<()> {
        let (a, b) = self.window();
        if lambda > a && lambda < b && lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "lambda = {lambda} lies outside the admissibility window ({a}, {b})"
            )))
        }
    }

    /// `∫ K(y) e^{-λ·y} dy`.
    pub fn mgf(&self, lambda: &[T]) -> Result<T> {
        match &self.form {
            KernelForm::TensorProduct(f) => {
                if lambda.len() != f.len() {
                    return Err(Error::Domain(format!(
                        "lambda has {} components, kernel dimension is {}",
                        lambda.len(),
                        f.len()
                    )));
                }
                f.iter()
                    .zip(lambda)
                    .try_fold(T::one(), |a, (k, l)| Ok(a * k.mgf1(*l)?))
            }
            _ => self.mgf1(lambda[0]),
        }
    }

    /// Scalar moment generating function of a 1D kernel.
    pub fn mgf1(&self, lambda: T) -> Result<T> {
        if let KernelForm::TensorProduct(_) = self.form {
            let mut l = vec![T::zero(); self.dim()];
            l[0] = lambda;
            return self.mgf(&l);
        }
        self.check_window(lambda)?;
        let m = self.mass;
        Ok(match &self.form {
            KernelForm::Gaussian { shift, variance } => {
                m * (-lambda * *shift + lambda * lambda * *variance * lit(0.5)).exp()
            }
            KernelForm::Uniform { lo, hi } => {
                let x = lambda * (*hi - *lo);
                let ratio = if x == T::zero() {
                    T::one()
                } else {
                    -(-x).exp_m1() / x
                };
                m * (-lambda * *lo).exp() * ratio
            }
            KernelForm::Laplace { shift, scale } => {
                m * (-lambda * *shift).exp() / (T::one() - *scale * *scale * lambda * lambda)
            }
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => {
                let max_step: T = lit(0.25);
                if lambda.abs() * *spacing > max_step {
                    return Err(Error::Resolution(format!(
                        "tabulated spacing {spacing} cannot resolve e^(-{lambda} y)"
                    )));
                }
                tabulated_transform(*origin, *spacing, density, Complex::new(lambda, T::zero())).re
            }
            KernelForm::TensorProduct(_) => unreachable!(),
        })
    }

    /// `|(2π)^{-d} ∫ e^{-iζ·y} e^{-λ·y} K(y) dy|`.
    pub fn weighted_fourier_magnitude(&self, lambda: &[T], zeta: &[T]) -> Result<T> {
        match &self.form {
            KernelForm::TensorProduct(f) => {
                if lambda.len() != f.len() || zeta.len() != f.len() {
                    return Err(Error::Domain("lambda/zeta dimension mismatch".into()));
                }
                let mut acc = T::one();
                for ((k, l), z) in f.iter().zip(lambda).zip(zeta) {
                    acc = acc * k.weighted_fourier_magnitude(&[*l], &[*z])?;
                }
                Ok(acc)
            }
            _ => {
                let lambda = lambda[0];
                let zeta = zeta[0];
                self.check_window(lambda)?;
                let s = Complex::new(lambda, zeta);
                let two_pi = lit::<T>(2.0) * T::PI();
                let m = self.mass;
                let v = match &self.form {
                    KernelForm::Gaussian { shift, variance } => {
                        let e = -s * *shift + s * s * *variance * lit::<T>(0.5);
                        e.exp().norm() * m
                    }
                    KernelForm::Uniform { lo, hi } => {
                        let w = *hi - *lo;
                        let x = s * w;
                        let ratio = if x.norm() < lit(1e-6) {
                            Complex::new(T::one(), T::zero()) - x * lit::<T>(0.5)
                                + x * x / lit::<T>(6.0)
                        } else {
                            (Complex::new(T::one(), T::zero()) - (-x).exp()) / x
                        };
                        ((-s * *lo).exp() * ratio).norm() * m
                    }
                    KernelForm::Laplace { shift, scale } => {
                        let den = Complex::new(T::one(), T::zero()) - s * s * (*scale * *scale);
                        ((-s * *shift).exp() / den).norm() * m
                    }
                    KernelForm::Tabulated {
                        origin,
                        spacing,
                        density,
                    } => {
                        if lambda.abs() * *spacing > lit(0.25) {
                            return Err(Error::Resolution(format!(
                                "tabulated spacing {spacing} cannot resolve e^(-{lambda} y)"
                            )));
                        }
                        tabulated_transform(*origin, *spacing, density, s).norm()
                    }
                    KernelForm::TensorProduct(_) => unreachable!(),
                };
                Ok(v / two_pi)
            }
        }
    }

    /// `∫_a^∞ K` (right) or `∫_{-∞}^a K` (left) for the marginal along the first axis.
    pub fn tail_mass(&self, a: T, side: Side) -> T {
        let right = match &self.form {
            KernelForm::Gaussian { shift, variance } => {
                let z = (a - *shift) / (lit::<T>(2.0) * *variance).sqrt();
                match side {
                    Side::Right => return self.mass * erfc(z) * lit(0.5),
                    Side::Left => return self.mass * erfc(-z) * lit(0.5),
                }
            }
            KernelForm::Uniform { lo, hi } => {
                let frac = ((*hi - a) / (*hi - *lo)).max(T::zero()).min(T::one());
                self.mass * frac
            }
            KernelForm::Laplace { shift, scale } => {
                let d = (a - *shift) / *scale;
                let half: T = lit(0.5);
                let left = if d >= T::zero() {
                    T::one() - half * (-d).exp()
                } else {
                    half * d.exp()
                };
                match side {
                    Side::Right => {
                        let r = if d >= T::zero() {
                            half * (-d).exp()
                        } else {
                            T::one() - half * d.exp()
                        };
                        return self.mass * r;
                    }
                    Side::Left => return self.mass * left,
                }
            }
            KernelForm::TensorProduct(f) => {
                let rest = f[1..].iter().fold(T::one(), |acc, k| acc * k.mass);
                return f[0].tail_mass(a, side) * rest;
            }
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => {
                let total = self.mass;
                let left = tabulated_cdf(*origin, *spacing, density, a);
                match side {
                    Side::Right => return (total - left).max(T::zero()),
                    Side::Left => return left,
                }
            }
        };
        match side {
            Side::Right => right,
            Side::Left => (self.mass - right).max(T::zero()),
        }
    }

    /// Closed support interval of the first-axis marginal when compact.
    pub fn compact_support(&self) -> Option<(T, T)> {
        match &self.form {
            KernelForm::Uniform { lo, hi } => Some((*lo, *hi)),
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => {
                let first = density.iter().position(|v| *v > T::zero())?;
                let last = density.iter().rposition(|v| *v > T::zero())?;
                let lo = *origin + *spacing * T::from_usize(first.saturating_sub(1)).unwrap();
                let hi =
                    *origin + *spacing * T::from_usize((last + 1).min(density.len() - 1)).unwrap();
                Some((lo, hi))
            }
            KernelForm::TensorProduct(f) => f[0].compact_support(),
            _ => None,
        }
    }

    /// Interval outside which `K(y) e^{-λ y}` carries relative mass below `tol`.
    pub fn weighted_support(&self, lambda: T, tol: T) -> (T, T) {
        match &self.form {
            KernelForm::Gaussian { shift, variance } => {
                let centre = *shift - lambda * *variance;
                let half = (lit::<T>(2.0) * *variance * (-tol.ln()).max(T::one())).sqrt()
                    + variance.sqrt();
                (centre - half, centre + half)
            }
            KernelForm::Uniform { lo, hi } => (*lo, *hi),
            KernelForm::Laplace { shift, scale } => {
                let l = -tol.ln() + T::one();
                let left_rate = T::one() / *scale - lambda;
                let right_rate = T::one() / *scale + lambda;
                (*shift - l / left_rate, *shift + l / right_rate)
            }
            KernelForm::TensorProduct(f) => f[0].weighted_support(lambda, tol),
            KernelForm::Tabulated {
                origin,
                spacing,
                density,
            } => {
                let n = T::from_usize(density.len() - 1).unwrap();
                (*origin, *origin + *spacing * n)
            }
        }
    }

    /// Pointwise samples on a uniform grid, renormalized to the kernel mass.
    pub fn sample(&self, grid: &SampleGrid<T>) -> Result<KernelSamples<T>> {
        if !(grid.spacing > T::zero()) || !(grid.hi > grid.lo) {
            return Err(Error::Domain(
                "sampling grid needs spacing > 0 and lo < hi".into(),
            ));
        }
        let span = (grid.hi - grid.lo) / grid.spacing;
        let n = span.round();
        if (span - n).abs() > lit(1e-6) {
            return Err(Error::Domain(
                "sampling spacing must divide the grid extent".into(),
            ));
        }
        let n = n.to_usize().unwrap() + 1;
        let half = grid.spacing * lit(0.5);
        let missing = self.tail_mass(grid.lo - half, Side::Left)
            + self.tail_mass(grid.hi + half, Side::Right);
        if missing > lit(1e-8) {
            return Err(Error::Truncation {
                missing: missing.f64(),
            });
        }
        let nodes: Vec<T> = (0..n)
            .map(|i| grid.lo + grid.spacing * T::from_usize(i).unwrap())
            .collect();
        let raw: Vec<T> = nodes.iter().map(|y| self.density1(*y)).collect();
        let raw_mass = raw.iter().copied().sum::<T>() * grid.spacing;
        let scale = self.mass / raw_mass;
        let values = raw.iter().map(|v| *v * scale).collect();
        Ok(KernelSamples {
            nodes,
            raw,
            values,
            raw_mass,
            scale,
        })
    }
}

fn interp<T: Real>(origin: T, spacing: T, density: &[T], y: T) -> T {
    let x = (y - origin) / spacing;
    if x < T::zero() {
        return T::zero();
    }
    let i = x.floor().to_usize().unwrap_or(usize::MAX);
    if i + 1 >= density.len() {
        return if i + 1 == density.len() && x == x.floor() {
            density[i]
        } else {
            T::zero()
        };
    }
    let f = x - x.floor();
    density[i] * (T::one() - f) + density[i + 1] * f
}

fn tabulated_cdf<T: Real>(origin: T, spacing: T, density: &[T], a: T) -> T {
    let mut acc = T::zero();
    for i in 0..density.len() - 1 {
        let y0 = origin + spacing * T::from_usize(i).unwrap();
        let y1 = y0 + spacing;
        if a <= y0 {
            break;
        }
        if a >= y1 {
            acc = acc + (density[i] + density[i + 1]) * spacing * lit(0.5);
        } else {
            let t = (a - y0) / spacing;
            let end = density[i] + (density[i + 1] - density[i]) * t;
            acc = acc + (density[i] + end) * (a - y0) * lit(0.5);
        }
    }
    acc
}

/// `∫ e^{-s y} K(y) dy` for the piecewise-linear interpolant, segment by segment.
fn tabulated_transform<T: Real>(origin: T, spacing: T, density: &[T], s: Complex<T>) -> Complex<T> {
    let tol: T = lit(1e-14);
    let mut re = T::zero();
    let mut im = T::zero();
    for i in 0..density.len() - 1 {
        let y0 = origin + spacing * T::from_usize(i).unwrap();
        let (d0, d1) = (density[i], density[i + 1]);
        if d0 == T::zero() && d1 == T::zero() {
            continue;
        }
        let f = |y: T| {
            let t = (y - y0) / spacing;
            d0 + (d1 - d0) * t
        };
        let e = |y: T| (-s * y).exp();
        re = re + adaptive_simpson(&|y: T| f(y) * e(y).re, y0, y0 + spacing, tol);
        if s.im != T::zero() {
            im = im + adaptive_simpson(&|y: T| f(y) * e(y).im, y0, y0 + spacing, tol);
        }
    }
    Complex::new(re, im)
}

/// Invert the right tail: smallest `a` with `tail_mass(a, Right) <= level`.
pub(crate) fn invert_tail<T: Real>(k: &Kernel<T>, level: T, side: Side) -> Result<T> {
    if !(level > T::zero()) || level >= k.mass() {
        return Err(Error::Level {
            level: level.f64(),
            reason: format!("must lie in (0, {})", k.mass()),
        });
    }
    let f = |a: T| k.tail_mass(a, side) - level;
    let mut lo = -T::one();
    let mut hi = T::one();
    // right tail decreases in a, left tail increases
    let sign = if side == Side::Right {
        T::one()
    } else {
        -T::one()
    };
    let mut guard = 0;
    while sign * f(lo) < T::zero() && guard < 200 {
        lo = lo * lit(2.0);
        guard += 1;
    }
    while sign * f(hi) > T::zero() && guard < 400 {
        hi = hi * lit(2.0);
        guard += 1;
    }
    Ok(bisect(f, lo, hi))
}
