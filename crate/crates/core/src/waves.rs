//! Traveling-wave profiles by relaxation from tuned seeds, their residual, alignment and type.

use crate::birth_laws::BirthLaw;
use crate::error::{Error, Result};
use crate::evolve::{
    grid_char_roots, kernel_weights, DelayHistory, Equation, Field, Fill, Grid, LineWeights,
    Simulator,
};
use crate::numerics::{bisect, golden_min};
use crate::scalar::{lit, Real};
use crate::spectral::FrameSpec;

/// Which end of the line carries the zero limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `φ(−∞) = 0`, the case `c ≥ c*⁺`.
    ZeroAtMinus,
    /// `φ(+∞) = 0`, the case `c ≤ c*⁻`.
    ZeroAtPlus,
}

impl Orientation {
    pub fn of_rate<T: Real>(lambda1: T) -> Self {
        if lambda1 > T::zero() {
            Orientation::ZeroAtMinus
        } else {
            Orientation::ZeroAtPlus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveClass {
    MonotoneFront,
    OscillatoryFront,
    SemiWavefront,
}

impl WaveClass {
    pub fn name(&self) -> &'static str {
        match self {
            WaveClass::MonotoneFront => "monotone_front",
            WaveClass::OscillatoryFront => "oscillatory_front",
            WaveClass::SemiWavefront => "semi_wavefront",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile<T> {
    pub samples: Field<T>,
    pub c: T,
    pub lambda1: T,
    pub j_c: u8,
    /// Leading tail coefficient `A` in `φ ≈ A |z|^{j_c} e^{λ₁ z}`.
    pub amplitude: T,
    pub orientation: Orientation,
    pub kappa: T,
    /// Sup of the profile-equation residual (see [`profile_residual`]).
    pub residual: T,
    /// Pseudo-time steps used.
    pub steps: usize,
}

impl<T: Real> WaveProfile<T> {
    pub fn grid(&self) -> &Grid<T> {
        &self.samples.grid
    }

    pub fn nodes(&self) -> Vec<T> {
        self.samples.grid.axes[0].nodes()
    }

    /// Cubic interpolation, constant beyond the ends.
    pub fn eval(&self, z: T) -> T {
        cubic_at(&self.samples, z)
    }

    /// Delay history constant in time, as a datum on the profile's grid.
    pub fn history(&self, h: T, m: usize) -> Result<DelayHistory<T>> {
        DelayHistory::constant(self.samples.clone(), h, m)
    }
}

/// Four-point Lagrange interpolation on a 1D field, clamped to the end values outside.
pub fn cubic_at<T: Real>(f: &Field<T>, z: T) -> T {
    let ax = &f.grid.axes[0];
    let v = &f.values;
    let n = v.len();
    if z <= ax.lo {
        return v[0];
    }
    if z >= ax.hi() {
        return v[n - 1];
    }
    if n < 4 {
        return f.at(&[z]);
    }
    let s = (z - ax.lo) / ax.spacing;
    let i = s.floor().to_usize().unwrap().clamp(1, n - 3);
    let x = s - T::from_usize(i).unwrap();
    let (a, b, c, d) = (v[i - 1], v[i], v[i + 1], v[i + 2]);
    let one = T::one();
    let two: T = lit(2.0);
    let six: T = lit(6.0);
    -a * x * (x - one) * (x - two) / six + b * (x + one) * (x - one) * (x - two) / two
        - c * (x + one) * x * (x - two) / two
        + d * (x + one) * x * (x - one) / six
}

/// Seed `min(κ, A |z|^{j_c} e^{λ₁ z})`, mirrored for `λ₁ < 0`, made monotone by a running maximum
/// from the zero end (the `|z|` factor is used on the decaying side only), constant over the delay.
pub fn seed_datum<T: Real>(
    lambda1: T,
    j_c: u8,
    amplitude: T,
    grid: &Grid<T>,
    kappa: T,
    h: T,
    m: usize,
) -> Result<DelayHistory<T>> {
    let field = seed_field(lambda1, j_c, amplitude, grid, kappa)?;
    DelayHistory::constant(field, h, m)
}

pub fn seed_field<T: Real>(
    lambda1: T,
    j_c: u8,
    amplitude: T,
    grid: &Grid<T>,
    kappa: T,
) -> Result<Field<T>> {
    if grid.dim() != 1 {
        return Err(Error::Config("seeds live on a 1D grid".into()));
    }
    if lambda1 == T::zero()
        || !lambda1.is_finite()
        || !(amplitude > T::zero())
        || !(kappa > T::zero())
    {
        return Err(Error::Domain("seed needs λ₁ ≠ 0, A > 0 and κ > 0".into()));
    }
    let raw = |z: T| {
        let decaying = z * lambda1 < T::zero();
        let poly = if j_c == 1 && decaying {
            z.abs()
        } else {
            T::one()
        };
        amplitude * poly * (lambda1 * z).exp()
    };
    let ax = &grid.axes[0];
    let mut values: Vec<T> = (0..ax.n).map(|i| raw(ax.node(i))).collect();
    let mut run = T::zero();
    if lambda1 > T::zero() {
        for v in values.iter_mut() {
            run = run.max(*v);
            *v = run.min(kappa);
        }
    } else {
        for v in values.iter_mut().rev() {
            run = run.max(*v);
            *v = run.min(kappa);
        }
    }
    Field::new(grid.clone(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions<T> {
    pub dz: T,
    /// Domain `[lo, hi]`; `None` picks `40/|λ₁| + 10|c|h` on the zero side and `10 + 10|c|h`
    /// on the plateau side.
    pub extent: Option<(T, T)>,
    pub pseudo_dt: T,
    /// Stationarity threshold on `‖u⁺ − u‖_∞` per pseudo step.
    pub tol: T,
    /// Consecutive steps below `tol` required.
    pub consecutive: usize,
    pub max_steps: usize,
    /// Seed amplitude (relative to κ).
    pub seed_amplitude: T,
}

impl<T: Real> Default for ProfileOptions<T> {
    fn default() -> Self {
        ProfileOptions {
            dz: lit(0.05),
            extent: None,
            pseudo_dt: T::one(),
            tol: lit(1e-7),
            consecutive: 3,
            max_steps: 200_000,
            seed_amplitude: lit(0.5),
        }
    }
}

/// Relaxes a seed to a stationary solution of the discrete moving-frame equation.
///
/// The zero side uses the fill `Exponential(λ₁)` (or `WeightedLinear(λ₁)` at a double root), the
/// plateau side `Value(κ)`, with λ₁ taken from the grid characteristic function at the same
/// spacing so that the discrete tail is consistent with the stencil. The result is translated so
/// that `φ(0) = κ/2` (by moving the grid origin, which leaves the samples untouched).
pub fn compute_profile<T: Real>(
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
    opts: &ProfileOptions<T>,
) -> Result<WaveProfile<T>> {
    if frame.d != 1 {
        return Err(Error::Config(
            "profiles are computed along ν on a line (use the 1D frame)".into(),
        ));
    }
    let kappa = law.analyze()?.kappa;
    let roots = grid_char_roots(frame, opts.dz)?;
    let lambda1 = roots.leading();
    let j_c = roots.j_c;
    let orientation = Orientation::of_rate(lambda1);
    let (lo, hi) = match opts.extent {
        Some(e) => e,
        None => {
            let adv = lit::<T>(10.0) * (frame.c * frame.h).abs();
            let tail = lit::<T>(40.0) / lambda1.abs() + adv;
            let plateau = (lit::<T>(12.0) / plateau_rate(frame, law, kappa, orientation)?)
                .max(lit(10.0))
                + adv;
            let snap = |x: T| (x / opts.dz).ceil() * opts.dz;
            match orientation {
                Orientation::ZeroAtMinus => (-snap(tail), snap(plateau)),
                Orientation::ZeroAtPlus => (-snap(plateau), snap(tail)),
            }
        }
    };
    let zero_fill = if j_c == 1 {
        Fill::WeightedLinear(lambda1)
    } else {
        Fill::Exponential(lambda1)
    };
    let (fill_lo, fill_hi) = match orientation {
        Orientation::ZeroAtMinus => (zero_fill, Fill::Value(kappa)),
        Orientation::ZeroAtPlus => (Fill::Value(kappa), zero_fill),
    };
    let grid = Grid::line(lo, hi, opts.dz, fill_lo, fill_hi)?;
    let seed = seed_field(lambda1, j_c, opts.seed_amplitude * kappa, &grid, kappa)?;
    let mut sim = Simulator::pseudo_time(Equation::nonlinear(frame, law), seed, opts.pseudo_dt)?;
    let mut calm = 0;
    let mut steps = 0;
    let mut increments = Vec::new();
    let mut prev = sim.values().to_vec();
    while calm < opts.consecutive {
        if steps >= opts.max_steps {
            let tail = increments
                .iter()
                .rev()
                .take(5)
                .map(|v: &T| v.f64())
                .collect();
            let history = increments
                .iter()
                .step_by((increments.len() / 50).max(1))
                .map(|v: &T| v.f64())
                .collect();
            return Err(Error::NonConvergence {
                horizon: (opts.pseudo_dt * T::from_usize(steps).unwrap()).f64(),
                tail,
                history,
            });
        }
        sim.step()?;
        steps += 1;
        let cur = sim.values();
        let inc = cur
            .iter()
            .zip(&prev)
            .fold(T::zero(), |a, (x, y)| a.max((*x - *y).abs()));
        increments.push(inc);
        prev.copy_from_slice(cur);
        if inc < opts.tol {
            calm += 1;
        } else {
            calm = 0;
        }
    }
    let mut field = sim.state();
    let mid = crate::evolve::level_position(&field, kappa * lit(0.5));
    if mid.is_nan() {
        return Err(Error::NoSolution(
            "relaxed state has no κ/2 crossing".into(),
        ));
    }
    let ax = &mut field.grid.axes[0];
    ax.lo = ax.lo - mid;
    let mut profile = WaveProfile {
        samples: field,
        c: frame.c,
        lambda1,
        j_c,
        amplitude: T::zero(),
        orientation,
        kappa,
        residual: T::zero(),
        steps,
    };
    profile.amplitude = tail_amplitude(&profile);
    profile.residual = profile_residual(&profile, frame, law)?;
    Ok(profile)
}

/// Slowest real decay rate of `φ - κ` on the plateau side, from the linearization at κ with
/// `g'(κ)` clipped at zero (an oscillating approach is damped at least as fast).
fn plateau_rate<T: Real>(
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
    kappa: T,
    orientation: Orientation,
) -> Result<T> {
    let mut lin = frame.clone();
    lin.gprime0 = law.derivative(kappa).max(T::zero());
    let dir = match orientation {
        Orientation::ZeroAtMinus => -T::one(),
        Orientation::ZeroAtPlus => T::one(),
    };
    let e = |x: T| crate::spectral::char_eval(&lin, dir * x).unwrap_or(T::infinity());
    let mut hi = T::one();
    while !(e(hi) > T::zero()) {
        hi = hi * lit(2.0);
        if hi > lit(1e6) {
            return Err(Error::NoSolution("no decay rate toward κ".into()));
        }
    }
    Ok(bisect(&e, T::zero(), hi))
}

/// Median of `φ(z) / (|z|^{j_c} e^{λ₁ z})` over the outer 20% on the zero side.
fn tail_amplitude<T: Real>(p: &WaveProfile<T>) -> T {
    let z = p.nodes();
    let n = z.len();
    let w = (n / 5).max(1);
    let range: Vec<usize> = match p.orientation {
        Orientation::ZeroAtMinus => (2..w + 2).collect(),
        Orientation::ZeroAtPlus => (n - w - 2..n - 2).collect(),
    };
    let mut r: Vec<T> = range
        .into_iter()
        .filter(|&i| i < n)
        .map(|i| {
            let poly = if p.j_c == 1 { z[i].abs() } else { T::one() };
            p.samples.values[i] / (poly * (p.lambda1 * z[i]).exp())
        })
        .collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if r.is_empty() {
        T::zero()
    } else {
        r[r.len() / 2]
    }
}

fn convolve_line<T: Real>(lw: &LineWeights<T>, ext: &[T], pad_lo: usize, n: usize) -> Vec<T> {
    let base = pad_lo as isize - lw.jlo;
    (0..n)
        .map(|i| {
            let top = i as isize + base;
            lw.w.iter()
                .enumerate()
                .map(|(q, w)| *w * ext[(top - q as isize) as usize])
                .sum()
        })
        .collect()
}

/// `sup |φ'' − cφ' − φ + ∫K(y) g(φ(z − ch − y)) dy|` with fourth-order centred derivatives and the
/// sampled-kernel quadrature, over nodes at least two cells from either boundary. Being higher
/// order than the relaxation scheme, it measures the discretization error of the profile itself.
pub fn profile_residual<T: Real>(
    profile: &WaveProfile<T>,
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
) -> Result<T> {
    Ok(residual_field(&profile.samples, frame, law)?
        .iter()
        .fold(T::zero(), |a, v| a.max(v.abs())))
}

/// Pointwise profile-equation residual at interior nodes `2..n-2`.
pub fn residual_field<T: Real>(
    phi: &Field<T>,
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
) -> Result<Vec<T>> {
    if phi.grid.dim() != 1 {
        return Err(Error::Config("profile residual needs a 1D field".into()));
    }
    let ax = &phi.grid.axes[0];
    let n = ax.n;
    if n < 5 {
        return Err(Error::Resolution(
            "profile needs at least five nodes".into(),
        ));
    }
    let eq = Equation::nonlinear(frame, law);
    let lw = kernel_weights(&eq, &phi.grid)?.remove(0);
    let pad_lo = lw.jhi().max(0) as usize;
    let pad_hi = (-lw.jlo).max(0) as usize;
    let u = &phi.values;
    let dz = ax.spacing;
    let mut ext = vec![T::zero(); n + pad_lo + pad_hi];
    for k in 0..pad_lo {
        ext[pad_lo - 1 - k] = ax.fill_lo.extend(u[0], u[1], k + 1, -T::one(), dz);
    }
    ext[pad_lo..pad_lo + n].copy_from_slice(u);
    for k in 0..pad_hi {
        ext[pad_lo + n + k] = ax.fill_hi.extend(u[n - 1], u[n - 2], k + 1, T::one(), dz);
    }
    for v in ext.iter_mut() {
        *v = law.eval(*v);
    }
    let conv = convolve_line(&lw, &ext, pad_lo, n);
    let twelve: T = lit(12.0);
    let (c16, c30, c8) = (lit::<T>(16.0), lit::<T>(30.0), lit::<T>(8.0));
    Ok((2..n - 2)
        .map(|i| {
            let d2 = (-u[i - 2] + c16 * u[i - 1] - c30 * u[i] + c16 * u[i + 1] - u[i + 2])
                / (twelve * dz * dz);
            let d1 = (u[i - 2] - c8 * u[i - 1] + c8 * u[i + 1] - u[i + 2]) / (twelve * dz);
            d2 - frame.c * d1 - u[i] + conv[i]
        })
        .collect())
}

/// Shift `s` minimizing `sup_z |a(z) − b(z + s)|` over the common interior, and that distance.
pub fn align<T: Real>(a: &WaveProfile<T>, b: &WaveProfile<T>) -> (T, T) {
    let half = a.kappa * lit(0.5);
    let la = crate::evolve::level_position(&a.samples, half);
    let lb = crate::evolve::level_position(&b.samples, half);
    let s0 = if la.is_nan() || lb.is_nan() {
        T::zero()
    } else {
        lb - la
    };
    let dz = a.samples.grid.axes[0].spacing;
    let dist = |s: T| sup_distance(a, b, s);
    let width = lit::<T>(4.0) * dz.max(b.samples.grid.axes[0].spacing);
    // coarse scan then golden refinement
    let mut best = (s0, dist(s0));
    for k in -40..=40 {
        let s = s0 + width * T::from_i32(k).unwrap() / lit(40.0);
        let d = dist(s);
        if d < best.1 {
            best = (s, d);
        }
    }
    let step = width / lit(40.0);
    let (s, d) = golden_min(dist, best.0 - step, best.0 + step, dz * lit(1e-7));
    if d < best.1 {
        (s, d)
    } else {
        best
    }
}

/// `sup_z |a(z) − b(z + s)|` over nodes of `a` whose image lies inside `b`, two cells in.
pub fn sup_distance<T: Real>(a: &WaveProfile<T>, b: &WaveProfile<T>, s: T) -> T {
    let ax = &a.samples.grid.axes[0];
    let bx = &b.samples.grid.axes[0];
    let margin_b = bx.spacing * lit(2.0);
    let mut worst = T::zero();
    for i in 2..ax.n.saturating_sub(2) {
        let z = ax.node(i);
        let zb = z + s;
        if zb < bx.lo + margin_b || zb > bx.hi() - margin_b {
            continue;
        }
        worst = worst.max((a.samples.values[i] - cubic_at(&b.samples, zb)).abs());
    }
    worst
}

/// Wave type from the plateau-side behaviour of the profile.
pub fn classify<T: Real>(profile: &WaveProfile<T>, law: &BirthLaw<T>) -> WaveClass {
    let _ = law;
    let v = &profile.samples.values;
    let n = v.len();
    let scale = v
        .iter()
        .fold(T::zero(), |a, x| a.max(x.abs()))
        .max(T::min_positive_value());
    let tiny = scale * lit(1e-12);
    let rising = v.windows(2).all(|w| w[1] - w[0] >= -tiny);
    let falling = v.windows(2).all(|w| w[1] - w[0] <= tiny);
    if rising || falling {
        return WaveClass::MonotoneFront;
    }
    // plateau side: the end away from zero, split into two halves to see if the band shrinks
    let w = (n / 5).max(4);
    let trail: Vec<T> = match profile.orientation {
        Orientation::ZeroAtMinus => v[n - w..].to_vec(),
        Orientation::ZeroAtPlus => v[..w].iter().rev().copied().collect(),
    };
    let band = |s: &[T]| {
        let (lo, hi) = s
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(a, b), x| {
                (a.min(*x), b.max(*x))
            });
        hi - lo
    };
    let (near, far) = trail.split_at(trail.len() / 2);
    let kappa = profile.kappa;
    let crossings = v
        .windows(2)
        .filter(|w| (w[0] - kappa) * (w[1] - kappa) < T::zero())
        .count();
    if band(far) < lit(1e-4) && band(far) <= band(near) && crossings >= 1 {
        WaveClass::OscillatoryFront
    } else {
        WaveClass::SemiWavefront
    }
}
