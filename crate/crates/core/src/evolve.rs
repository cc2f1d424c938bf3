//! Time integration of the delayed non-local equation in the moving frame, its linear
//! comparison equation, the wave operator and the scalar delay ODE.
//!
//! Space: second-order centred differences on a uniform tensor grid, with ghost values supplied
//! by per-side [`Fill`] rules. Time: θ-scheme in 1D (Crank–Nicolson by default, with backward-Euler
//! start-up half steps), Peaceman–Rachford splitting in 2D. The delayed non-local term is taken
//! from the stored history with the trapezoid weights `θ F(t+Δt-h) + (1-θ) F(t-h)`, so `Δt = h/m`
//! never needs interpolation.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::birth_laws::BirthLaw;
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelForm};
use crate::scalar::{lit, Real};
use crate::spectral::{critical_speeds_of, roots_of, FrameSpec, RootReport};

/// Extension rule beyond one side of an axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill<T> {
    /// Constant asymptotic state.
    Value(T),
    /// Copy of the edge node (zero flux).
    Edge,
    /// `u(edge) e^{rate (z - z_edge)}`.
    Exponential(T),
    /// Linear extrapolation of `e^{-rate (z - z_edge)} u`, the shape of a critical tail `|z| e^{rate z}`.
    WeightedLinear(T),
    /// Exterior frozen to what `Exponential(rate)` (or `WeightedLinear(rate)` when `linear`)
    /// produces from the given edge and inner values: a reference field's tail held fixed.
    Pinned {
        edge: T,
        inner: T,
        rate: T,
        linear: bool,
    },
}

impl<T: Real> Fill<T> {
    /// Ghost one cell outside: `a0 * edge + a1 * inner + b`. `outward` is -1 on the low side.
    fn ghost(&self, outward: T, dz: T) -> (T, T, T) {
        match *self {
            Fill::Value(v) => (T::zero(), T::zero(), v),
            Fill::Edge => (T::one(), T::zero(), T::zero()),
            Fill::Exponential(r) => ((r * outward * dz).exp(), T::zero(), T::zero()),
            Fill::WeightedLinear(r) => {
                let e = (r * outward * dz).exp();
                (lit::<T>(2.0) * e, -e * e, T::zero())
            }
            Fill::Pinned { .. } => (
                T::zero(),
                T::zero(),
                self.extend(T::zero(), T::zero(), 1, outward, dz),
            ),
        }
    }

    /// Value `k >= 1` cells outside.
    pub(crate) fn extend(&self, edge: T, inner: T, k: usize, outward: T, dz: T) -> T {
        let kk = T::from_usize(k).unwrap();
        match *self {
            Fill::Value(v) => v,
            Fill::Edge => edge,
            Fill::Exponential(r) => edge * (r * outward * dz * kk).exp(),
            Fill::WeightedLinear(r) => {
                let e = (r * outward * dz).exp();
                (r * outward * dz * kk).exp() * (edge + kk * (edge - inner * e))
            }
            Fill::Pinned {
                edge,
                inner,
                rate,
                linear,
            } => {
                let rule = if linear {
                    Fill::WeightedLinear(rate)
                } else {
                    Fill::Exponential(rate)
                };
                rule.extend(edge, inner, k, outward, dz)
            }
        }
    }

    /// Pins a free tail rule to the given edge values; `Value` and `Pinned` are kept.
    pub fn pinned(&self, edge: T, inner: T) -> Self {
        match *self {
            Fill::Edge => Fill::Value(edge),
            Fill::Exponential(rate) => Fill::Pinned {
                edge,
                inner,
                rate,
                linear: false,
            },
            Fill::WeightedLinear(rate) => Fill::Pinned {
                edge,
                inner,
                rate,
                linear: true,
            },
            other => other,
        }
    }

    /// Rule obeyed by the difference of two fields that share this rule.
    pub fn difference(&self) -> Self {
        match *self {
            Fill::Value(_) | Fill::Pinned { .. } => Fill::Value(T::zero()),
            other => other,
        }
    }

    /// Rule for `e^{-λ z} w` when `w` follows this rule.
    pub fn conjugate(&self, lambda: T) -> Self {
        match *self {
            Fill::Value(_) | Fill::Pinned { .. } => Fill::Value(T::zero()),
            Fill::Edge => Fill::Exponential(-lambda),
            Fill::Exponential(r) => Fill::Exponential(r - lambda),
            Fill::WeightedLinear(r) => Fill::WeightedLinear(r - lambda),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    pub lo: T,
    pub spacing: T,
    pub n: usize,
    pub fill_lo: Fill<T>,
    pub fill_hi: Fill<T>,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, spacing: T, fill_lo: Fill<T>, fill_hi: Fill<T>) -> Result<Self> {
        if !(spacing > T::zero()) || !(hi > lo) {
            return Err(Error::Config(format!(
                "axis needs lo < hi and spacing > 0 (got {lo}, {hi}, {spacing})"
            )));
        }
        let cells = (hi - lo) / spacing;
        let r = cells.round();
        if (cells - r).abs() > lit::<T>(1e-9) * (T::one() + r) {
            return Err(Error::Config(format!(
                "spacing {spacing} does not divide [{lo}, {hi}]"
            )));
        }
        for f in [fill_lo, fill_hi] {
            let ok = match f {
                Fill::Value(v) | Fill::Exponential(v) | Fill::WeightedLinear(v) => v.is_finite(),
                Fill::Pinned {
                    edge, inner, rate, ..
                } => edge.is_finite() && inner.is_finite() && rate.is_finite(),
                Fill::Edge => true,
            };
            if !ok {
                return Err(Error::Config("boundary fill must be finite".into()));
            }
        }
        Ok(Axis {
            lo,
            spacing,
            n: r.to_usize().unwrap() + 1,
            fill_lo,
            fill_hi,
        })
    }

    pub fn node(&self, i: usize) -> T {
        self.lo + self.spacing * T::from_usize(i).unwrap()
    }

    pub fn hi(&self) -> T {
        self.node(self.n - 1)
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn with_fills(&self, fill_lo: Fill<T>, fill_hi: Fill<T>) -> Self {
        Axis {
            fill_lo,
            fill_hi,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub axes: Vec<Axis<T>>,
}

impl<T: Real> Grid<T> {
    pub fn line(lo: T, hi: T, dz: T, fill_lo: Fill<T>, fill_hi: Fill<T>) -> Result<Self> {
        Ok(Grid {
            axes: vec![Axis::new(lo, hi, dz, fill_lo, fill_hi)?],
        })
    }

    pub fn plane(a0: Axis<T>, a1: Axis<T>) -> Self {
        Grid { axes: vec![a0, a1] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.axes.iter().fold(T::one(), |a, x| a * x.spacing)
    }

    /// Coordinates of a flat index (last axis fastest).
    pub fn point(&self, idx: usize) -> Vec<T> {
        match self.axes.len() {
            1 => vec![self.axes[0].node(idx)],
            _ => {
                let n1 = self.axes[1].n;
                vec![self.axes[0].node(idx / n1), self.axes[1].node(idx % n1)]
            }
        }
    }

    /// Fills rewritten for `e^{-λ·z}` times a difference of fields on this grid.
    pub fn conjugate(&self, lambda: &[T]) -> Self {
        Grid {
            axes: self
                .axes
                .iter()
                .zip(lambda)
                .map(|(a, l)| a.with_fills(a.fill_lo.conjugate(*l), a.fill_hi.conjugate(*l)))
                .collect(),
        }
    }

    /// 1D grid whose free tail fills are frozen to the edge values of `f`, so that `f`'s exterior
    /// no longer moves with the solution.
    pub fn pinned_to(f: &Field<T>) -> Self {
        let ax = &f.grid.axes[0];
        let v = &f.values;
        let n = v.len();
        let (i_lo, i_hi) = if n > 1 { (1, n - 2) } else { (0, 0) };
        Grid {
            axes: vec![ax.with_fills(
                ax.fill_lo.pinned(v[0], v[i_lo]),
                ax.fill_hi.pinned(v[n - 1], v[i_hi]),
            )],
        }
    }

    pub fn difference(&self) -> Self {
        Grid {
            axes: self
                .axes
                .iter()
                .map(|a| a.with_fills(a.fill_lo.difference(), a.fill_hi.difference()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub grid: Grid<T>,
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("field values must be finite".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: &Grid<T>, v: T) -> Self {
        Field {
            values: vec![v; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn<F: Fn(&[T]) -> T>(grid: &Grid<T>, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn sup_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |a, v| a.min(*v))
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |a, v| a.max(*v))
    }

    fn weight(&self, idx: usize, lambda: &[T]) -> T {
        let z = self.grid.point(idx);
        (-z.iter().zip(lambda).map(|(a, b)| *a * *b).sum::<T>()).exp()
    }

    /// `sup_z e^{-λ·z} |u(z)|`.
    pub fn weighted_sup(&self, lambda: &[T]) -> T {
        (0..self.values.len()).fold(T::zero(), |a, i| {
            a.max(self.weight(i, lambda) * self.values[i].abs())
        })
    }

    /// `∫ e^{-λ·z} |u(z)| dz` by the rectangle rule.
    pub fn weighted_l1(&self, lambda: &[T]) -> T {
        (0..self.values.len())
            .map(|i| self.weight(i, lambda) * self.values[i].abs())
            .sum::<T>()
            * self.grid.cell_volume()
    }

    pub fn sub(&self, other: &Field<T>) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }

    /// Value at a point by multilinear interpolation (clamped to the grid).
    pub fn at(&self, z: &[T]) -> T {
        let locate = |a: &Axis<T>, x: T| {
            let s = ((x - a.lo) / a.spacing)
                .max(T::zero())
                .min(T::from_usize(a.n - 1).unwrap());
            let i = s.floor().to_usize().unwrap().min(a.n.saturating_sub(2));
            (i, s - T::from_usize(i).unwrap())
        };
        match self.grid.dim() {
            1 => {
                let (i, f) = locate(&self.grid.axes[0], z[0]);
                if self.grid.axes[0].n == 1 {
                    return self.values[0];
                }
                self.values[i] * (T::one() - f) + self.values[i + 1] * f
            }
            _ => {
                let (i, fi) = locate(&self.grid.axes[0], z[0]);
                let (j, fj) = locate(&self.grid.axes[1], z[1]);
                let n1 = self.grid.axes[1].n;
                let v = |a: usize, b: usize| self.values[a * n1 + b];
                let one = T::one();
                v(i, j) * (one - fi) * (one - fj)
                    + v(i + 1, j) * fi * (one - fj)
                    + v(i, j + 1) * (one - fi) * fj
                    + v(i + 1, j + 1) * fi * fj
            }
        }
    }
}

/// States on `[t-h, t]` at spacing `Δt = h/m`; `slots[0]` is the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayHistory<T> {
    pub h: T,
    pub m: usize,
    pub slots: Vec<Field<T>>,
}

impl<T: Real> DelayHistory<T> {
    pub fn constant(field: Field<T>, h: T, m: usize) -> Result<Self> {
        Self::check(h, m)?;
        Ok(DelayHistory {
            h,
            m,
            slots: vec![field; m + 1],
        })
    }

    /// `f(s, z)` for `s ∈ [-h, 0]`.
    pub fn from_fn<F: Fn(T, &[T]) -> T>(grid: &Grid<T>, h: T, m: usize, f: F) -> Result<Self> {
        Self::check(h, m)?;
        let dt = h / T::from_usize(m).unwrap();
        let slots = (0..=m)
            .map(|k| {
                let s = -h + dt * T::from_usize(k).unwrap();
                Field::from_fn(grid, |z| f(s, z))
            })
            .collect();
        Ok(DelayHistory { h, m, slots })
    }

    fn check(h: T, m: usize) -> Result<()> {
        if m == 0 || !(h > T::zero()) {
            return Err(Error::Config(format!(
                "history needs h > 0 and m >= 1 (got h={h}, m={m})"
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> T {
        self.h / T::from_usize(self.m).unwrap()
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.slots[0].grid
    }

    pub fn latest(&self) -> &Field<T> {
        &self.slots[self.m]
    }

    /// `max_{s∈[-h,0]} ∫ e^{-λ·z}|u(s,z)| dz`.
    pub fn weighted_l1(&self, lambda: &[T]) -> T {
        self.slots
            .iter()
            .fold(T::zero(), |a, f| a.max(f.weighted_l1(lambda)))
    }

    pub fn weighted_sup(&self, lambda: &[T]) -> T {
        self.slots
            .iter()
            .fold(T::zero(), |a, f| a.max(f.weighted_sup(lambda)))
    }

    pub fn map<F: Fn(&Field<T>) -> Field<T>>(&self, f: F) -> Self {
        DelayHistory {
            h: self.h,
            m: self.m,
            slots: self.slots.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reaction<T> {
    Law(BirthLaw<T>),
    Linear(T),
}

impl<T: Real> Reaction<T> {
    #[inline]
    fn apply(&self, u: T) -> T {
        match self {
            Reaction::Law(g) => g.eval(u),
            Reaction::Linear(s) => *s * u,
        }
    }
}

/// `u_t = Δu − cν·∇u − u + K∗[R(u)](t−h, z−chν)`, optionally conjugated by `e^{-λ·z}`.
///
/// With `weight = Some(λ)` the unknown is `e^{-λ·z}` times a solution of the unweighted problem;
/// stencils and kernel weights are the exact conjugates of the unweighted ones, so the discrete
/// problem approximates `ṙ = Δr + (2λ−cν)·∇r + p_λ r + [ξ_λK ∗ R(r)](t−h, z−chν) e^{−λ·νch}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation<T> {
    pub frame: FrameSpec<T>,
    pub reaction: Reaction<T>,
    pub weight: Option<Vec<T>>,
}

impl<T: Real> Equation<T> {
    pub fn nonlinear(frame: &FrameSpec<T>, law: &BirthLaw<T>) -> Self {
        Equation {
            frame: frame.clone(),
            reaction: Reaction::Law(law.clone()),
            weight: None,
        }
    }

    /// Unweighted linear problem with `R(u) = slope u`.
    pub fn linear(frame: &FrameSpec<T>, slope: T) -> Self {
        Equation {
            frame: frame.clone(),
            reaction: Reaction::Linear(slope),
            weight: None,
        }
    }

    /// Linear comparison equation at weight λ with multiplier `|g|_Lip`.
    pub fn comparison(frame: &FrameSpec<T>, lambda: &[T]) -> Self {
        Equation {
            frame: frame.clone(),
            reaction: Reaction::Linear(frame.lip),
            weight: Some(lambda.to_vec()),
        }
    }

    fn lambda_axis(&self, axis: usize) -> T {
        self.weight.as_ref().map(|w| w[axis]).unwrap_or(T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convolution {
    Direct,
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    pub conv: Convolution,
    /// 0.5 is Crank–Nicolson, 1 is backward Euler (1D only).
    pub theta: T,
    /// Leading steps replaced by two backward-Euler half steps.
    pub startup: usize,
    pub blowup: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            conv: Convolution::Direct,
            theta: lit(0.5),
            startup: 2,
            blowup: lit(1e6),
        }
    }
}

/// Default `m` with `Δt <= min(Δz²/4, h/20)`.
pub fn default_steps<T: Real>(h: T, dz: T) -> usize {
    let dt = (dz * dz / lit(4.0)).min(h / lit(20.0));
    (h / dt).ceil().to_usize().unwrap().max(1)
}

/// Sampled kernel weights along one axis: `w[j - jlo] ≈ K(j Δz − shift) Δz`, renormalized to the
/// factor mass, times `e^{-λ j Δz}` when weighted.
#[derive(Debug, Clone)]
pub struct LineWeights<T> {
    pub jlo: isize,
    pub w: Vec<T>,
}

impl<T: Real> LineWeights<T> {
    pub fn jhi(&self) -> isize {
        self.jlo + self.w.len() as isize - 1
    }

    pub fn sum(&self) -> T {
        self.w.iter().copied().sum()
    }
}

fn line_weights<T: Real>(k: &Kernel<T>, shift: T, dz: T, lambda: T) -> Result<LineWeights<T>> {
    let tol: T = lit(1e-17);
    let (a0, b0) = k.weighted_support(T::zero(), tol);
    let (a1, b1) = k.weighted_support(lambda, tol);
    let (a, b) = (a0.min(a1), b0.max(b1));
    let jlo = ((a + shift) / dz).floor().to_isize().unwrap();
    let jhi = ((b + shift) / dz).ceil().to_isize().unwrap();
    if jhi - jlo > 2_000_000 {
        return Err(Error::Resolution(
            "kernel support spans too many grid cells".into(),
        ));
    }
    let nodes: Vec<T> = (jlo..=jhi)
        .map(|j| T::from_isize(j).unwrap() * dz)
        .collect();
    let raw: Vec<T> = nodes.iter().map(|s| k.density1(*s - shift) * dz).collect();
    let total: T = raw.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Resolution(format!(
            "grid spacing {dz} does not resolve the kernel"
        )));
    }
    let scale = k.mass() / total;
    let w = raw
        .iter()
        .zip(&nodes)
        .map(|(v, s)| *v * scale * (-lambda * *s).exp())
        .collect();
    Ok(LineWeights { jlo, w })
}

/// Per-axis kernel weights for an equation on a grid.
pub fn kernel_weights<T: Real>(eq: &Equation<T>, grid: &Grid<T>) -> Result<Vec<LineWeights<T>>> {
    let f = &eq.frame;
    let d = grid.dim();
    if d != f.d {
        return Err(Error::Config(format!(
            "grid dimension {d} does not match frame d = {}",
            f.d
        )));
    }
    if d == 2 && !matches!(f.kernel.form(), KernelForm::TensorProduct(_)) {
        return Err(Error::Config(
            "planar runs need a tensor-product kernel".into(),
        ));
    }
    (0..d)
        .map(|i| {
            let shift = f.c * f.h * f.nu[i];
            line_weights(
                f.kernel.factor(i),
                shift,
                grid.axes[i].spacing,
                eq.lambda_axis(i),
            )
        })
        .collect()
}

/// Grid characteristic function along e1 for a 1D frame: the value of the discrete nonlinear
/// operator linearized at 0 on `e^{λz}`, divided by `e^{λz}`.
pub fn grid_char_eval<T: Real>(frame: &FrameSpec<T>, dz: T, lambda: T) -> Result<T> {
    if frame.d != 1 {
        return Err(Error::Domain(
            "grid characteristic is defined for d = 1".into(),
        ));
    }
    let lw = line_weights(&frame.kernel, frame.c * frame.h, dz, T::zero())?;
    let moment: T =
        lw.w.iter()
            .enumerate()
            .map(|(i, w)| *w * (-lambda * T::from_isize(lw.jlo + i as isize).unwrap() * dz).exp())
            .sum();
    let inv = T::one() / (dz * dz);
    let adv = frame.c / (lit::<T>(2.0) * dz);
    let e = (lambda * dz).exp();
    Ok((inv + adv) / e + (inv - adv) * e - lit::<T>(2.0) * inv - T::one() + frame.gprime0 * moment)
}

/// Critical speeds of the grid characteristic function.
pub fn grid_critical_speeds<T: Real>(frame: &FrameSpec<T>, dz: T) -> Result<(T, T)> {
    let window = frame.kernel.window_along(&frame.nu);
    critical_speeds_of(
        |c, l| grid_char_eval(&frame.with_speed(c), dz, l).unwrap_or(T::infinity()),
        window,
    )
}

/// Real roots of the grid characteristic function at the frame's speed.
pub fn grid_char_roots<T: Real>(frame: &FrameSpec<T>, dz: T) -> Result<RootReport<T>> {
    let window = frame.kernel.window_along(&frame.nu);
    roots_of(
        |l| grid_char_eval(frame, dz, l).unwrap_or(T::infinity()),
        frame.c,
        frame.gprime0,
        window,
    )
}

/// Tridiagonal operator along one axis: `(T x)_i = a_i x_{i-1} + b_i x_i + c_i x_{i+1}` plus the
/// boundary constants `s_lo`, `s_hi` on the end rows.
#[derive(Debug, Clone)]
struct AxisOp<T> {
    a: Vec<T>,
    b: Vec<T>,
    c: Vec<T>,
    s_lo: T,
    s_hi: T,
}

impl<T: Real> AxisOp<T> {
    fn new(axis: &Axis<T>, drift: T, diag_extra: T, lambda: T) -> Self {
        let n = axis.n;
        let dz = axis.spacing;
        let inv = T::one() / (dz * dz);
        let adv = drift / (lit::<T>(2.0) * dz);
        let e = (lambda * dz).exp();
        // conjugated by e^{λz}: x_{i±1} picks up e^{±λΔz}
        let lower = (inv - adv) / e;
        let upper = (inv + adv) * e;
        let diag = -lit::<T>(2.0) * inv + diag_extra;
        let mut a = vec![lower; n];
        let mut b = vec![diag; n];
        let mut c = vec![upper; n];
        a[0] = T::zero();
        c[n - 1] = T::zero();
        let (g0, g1, gb) = axis.fill_lo.ghost(-T::one(), dz);
        b[0] = b[0] + lower * g0;
        let (h0, h1, hb) = axis.fill_hi.ghost(T::one(), dz);
        b[n - 1] = b[n - 1] + upper * h0;
        if n > 1 {
            c[0] = c[0] + lower * g1;
            a[n - 1] = a[n - 1] + upper * h1;
        }
        AxisOp {
            a,
            b,
            c,
            s_lo: lower * gb,
            s_hi: upper * hb,
        }
    }

    /// `out = x + τ (T x + s)` on one line.
    fn explicit(&self, x: &[T], tau: T, out: &mut [T]) {
        let n = x.len();
        for i in 0..n {
            let mut v = self.b[i] * x[i];
            if i > 0 {
                v = v + self.a[i] * x[i - 1];
            }
            if i + 1 < n {
                v = v + self.c[i] * x[i + 1];
            }
            if i == 0 {
                v = v + self.s_lo;
            }
            if i == n - 1 {
                v = v + self.s_hi;
            }
            out[i] = x[i] + tau * v;
        }
    }

    fn factor(&self, tau: T) -> Thomas<T> {
        let n = self.b.len();
        let mut cp = vec![T::zero(); n];
        let mut inv = vec![T::zero(); n];
        let mut lower = vec![T::zero(); n];
        for i in 0..n {
            let a = -tau * self.a[i];
            let b = T::one() - tau * self.b[i];
            let c = -tau * self.c[i];
            let denom = if i == 0 { b } else { b - a * cp[i - 1] };
            inv[i] = T::one() / denom;
            cp[i] = c * inv[i];
            lower[i] = a;
        }
        Thomas { cp, inv, lower }
    }
}

#[derive(Debug, Clone)]
struct Thomas<T> {
    cp: Vec<T>,
    inv: Vec<T>,
    lower: Vec<T>,
}

impl<T: Real> Thomas<T> {
    fn solve(&self, x: &mut [T]) {
        let n = x.len();
        x[0] = x[0] * self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - self.lower[i] * x[i - 1]) * self.inv[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] = x[i] - self.cp[i] * x[i + 1];
        }
    }
}

struct FftLine<T: Real> {
    size: usize,
    spectrum: Vec<Complex<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

/// Convolution along one axis of the extended array.
struct ConvLine<T: Real> {
    weights: LineWeights<T>,
    pad_lo: usize,
    pad_hi: usize,
    fft: Option<FftLine<T>>,
}

impl<T: Real> ConvLine<T> {
    fn new(weights: LineWeights<T>, n: usize, mode: Convolution) -> Self {
        let pad_lo = weights.jhi().max(0) as usize;
        let pad_hi = (-weights.jlo).max(0) as usize;
        let fft = match mode {
            Convolution::Direct => None,
            Convolution::Fft => {
                let len = n + pad_lo + pad_hi;
                let size = (len + weights.w.len() - 1).next_power_of_two();
                let mut planner = FftPlanner::new();
                let forward = planner.plan_fft_forward(size);
                let inverse = planner.plan_fft_inverse(size);
                let mut spectrum = vec![Complex::new(T::zero(), T::zero()); size];
                for (i, w) in weights.w.iter().enumerate() {
                    spectrum[i] = Complex::new(*w, T::zero());
                }
                forward.process(&mut spectrum);
                Some(FftLine {
                    size,
                    spectrum,
                    forward,
                    inverse,
                })
            }
        };
        ConvLine {
            weights,
            pad_lo,
            pad_hi,
            fft,
        }
    }

    /// `out_i = Σ_j w_j g[i + pad_lo − j]` for `i < out.len()`.
    fn apply(&self, g: &[T], out: &mut [T]) {
        let jlo = self.weights.jlo;
        let base = self.pad_lo as isize - jlo;
        match &self.fft {
            None => {
                let w = &self.weights.w;
                let k = w.len();
                for (i, o) in out.iter_mut().enumerate() {
                    // g index for weight index q is i + base - q
                    let top = i as isize + base;
                    let mut acc = T::zero();
                    for q in 0..k {
                        acc = acc + w[q] * g[(top - q as isize) as usize];
                    }
                    *o = acc;
                }
            }
            Some(f) => {
                let mut buf = vec![Complex::new(T::zero(), T::zero()); f.size];
                for (i, v) in g.iter().enumerate() {
                    buf[i] = Complex::new(*v, T::zero());
                }
                f.forward.process(&mut buf);
                for (b, s) in buf.iter_mut().zip(&f.spectrum) {
                    *b = *b * *s;
                }
                f.inverse.process(&mut buf);
                let norm = T::one() / T::from_usize(f.size).unwrap();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = buf[(i as isize + base) as usize].re * norm;
                }
            }
        }
    }
}

/// Evaluates `K ∗ [R(u)](z − chν)` on the grid using the axis fills for the extension.
struct Source<T: Real> {
    grid: Grid<T>,
    lines: Vec<ConvLine<T>>,
    reaction: Reaction<T>,
}

impl<T: Real> Source<T> {
    fn new(eq: &Equation<T>, grid: &Grid<T>, mode: Convolution) -> Result<Self> {
        let weights = kernel_weights(eq, grid)?;
        let lines = weights
            .into_iter()
            .zip(&grid.axes)
            .map(|(w, a)| ConvLine::new(w, a.n, mode))
            .collect();
        Ok(Source {
            grid: grid.clone(),
            lines,
            reaction: eq.reaction.clone(),
        })
    }

    fn extend_line(axis: &Axis<T>, u: &[T], pad_lo: usize, pad_hi: usize, out: &mut [T]) {
        let n = u.len();
        let inner_lo = if n > 1 { u[1] } else { u[0] };
        let inner_hi = if n > 1 { u[n - 2] } else { u[0] };
        for k in 0..pad_lo {
            out[pad_lo - 1 - k] =
                axis.fill_lo
                    .extend(u[0], inner_lo, k + 1, -T::one(), axis.spacing);
        }
        out[pad_lo..pad_lo + n].copy_from_slice(u);
        for k in 0..pad_hi {
            out[pad_lo + n + k] =
                axis.fill_hi
                    .extend(u[n - 1], inner_hi, k + 1, T::one(), axis.spacing);
        }
    }

    fn eval(&self, u: &[T], out: &mut [T]) {
        match self.grid.dim() {
            1 => {
                let ax = &self.grid.axes[0];
                let line = &self.lines[0];
                let mut ext = vec![T::zero(); ax.n + line.pad_lo + line.pad_hi];
                Self::extend_line(ax, u, line.pad_lo, line.pad_hi, &mut ext);
                for v in ext.iter_mut() {
                    *v = self.reaction.apply(*v);
                }
                const CHUNK: usize = 512;
                out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, o)| {
                    let off = c * CHUNK;
                    line.apply(&ext[off..], o);
                });
            }
            _ => self.eval_plane(u, out),
        }
    }

    fn eval_plane(&self, u: &[T], out: &mut [T]) {
        let (a0, a1) = (&self.grid.axes[0], &self.grid.axes[1]);
        let (l0, l1) = (&self.lines[0], &self.lines[1]);
        let (n0, n1) = (a0.n, a1.n);
        let e1 = n1 + l1.pad_lo + l1.pad_hi;
        let e0 = n0 + l0.pad_lo + l0.pad_hi;
        // extend rows along axis 1, then columns along axis 0
        let mut rows = vec![T::zero(); n0 * e1];
        rows.par_chunks_mut(e1).enumerate().for_each(|(i, r)| {
            Self::extend_line(a1, &u[i * n1..(i + 1) * n1], l1.pad_lo, l1.pad_hi, r);
        });
        let mut ext = vec![T::zero(); e0 * e1];
        let mut col = vec![T::zero(); n0];
        let mut col_ext = vec![T::zero(); e0];
        for j in 0..e1 {
            for i in 0..n0 {
                col[i] = rows[i * e1 + j];
            }
            Self::extend_line(a0, &col, l0.pad_lo, l0.pad_hi, &mut col_ext);
            for i in 0..e0 {
                ext[i * e1 + j] = col_ext[i];
            }
        }
        ext.par_iter_mut()
            .for_each(|v| *v = self.reaction.apply(*v));
        let mut mid = vec![T::zero(); e0 * n1];
        mid.par_chunks_mut(n1).enumerate().for_each(|(i, o)| {
            l1.apply(&ext[i * e1..(i + 1) * e1], o);
        });
        let mut t = transpose(&mid, e0, n1);
        let mut res = vec![T::zero(); n1 * n0];
        res.par_chunks_mut(n0).enumerate().for_each(|(j, o)| {
            l0.apply(&t[j * e0..(j + 1) * e0], o);
        });
        t.clear();
        let back = transpose(&res, n1, n0);
        out.copy_from_slice(&back);
    }
}

fn transpose<T: Real>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

/// Time stepper owning its state and history.
pub struct Simulator<T: Real> {
    eq: Equation<T>,
    grid: Grid<T>,
    dt: T,
    m: usize,
    opts: SolverOptions<T>,
    ops: Vec<AxisOp<T>>,
    main: Vec<Thomas<T>>,
    half: Vec<Thomas<T>>,
    source: Source<T>,
    states: VecDeque<Vec<T>>,
    sources: VecDeque<Vec<T>>,
    t0: T,
    steps: u64,
    min_seen: T,
}

impl<T: Real> Simulator<T> {
    pub fn new(eq: Equation<T>, datum: DelayHistory<T>, opts: SolverOptions<T>) -> Result<Self> {
        Self::starting_at(eq, datum, opts, T::zero())
    }

    pub fn starting_at(
        eq: Equation<T>,
        datum: DelayHistory<T>,
        opts: SolverOptions<T>,
        t0: T,
    ) -> Result<Self> {
        let f = &eq.frame;
        if (datum.h - f.h).abs() > lit::<T>(1e-12) * f.h {
            return Err(Error::Config(format!(
                "history covers h = {} but the frame has h = {}",
                datum.h, f.h
            )));
        }
        Self::build(eq, datum, opts, t0)
    }

    /// Backward-Euler relaxation `(I − Δt A) u⁺ = u + Δt K∗[R(u)]` with a free step `Δt`. Its
    /// fixed points are the discrete stationary solutions; the trajectory is not the delayed dynamics.
    pub fn pseudo_time(eq: Equation<T>, start: Field<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::Config(format!(
                "pseudo-time step must be positive, got {dt}"
            )));
        }
        let datum = DelayHistory {
            h: dt,
            m: 1,
            slots: vec![start.clone(), start],
        };
        let opts = SolverOptions {
            theta: T::one(),
            startup: 0,
            ..SolverOptions::default()
        };
        if eq.frame.d != 1 {
            return Err(Error::Config(
                "pseudo-time relaxation is one-dimensional".into(),
            ));
        }
        Self::build(eq, datum, opts, T::zero())
    }

    fn build(
        eq: Equation<T>,
        datum: DelayHistory<T>,
        opts: SolverOptions<T>,
        t0: T,
    ) -> Result<Self> {
        let f = &eq.frame;
        if !(opts.theta >= T::zero() && opts.theta <= T::one()) {
            return Err(Error::Config(format!(
                "theta must lie in [0, 1], got {}",
                opts.theta
            )));
        }
        let grid = datum.grid().clone();
        let d = grid.dim();
        if d == 2 && opts.theta != lit(0.5) {
            return Err(Error::Config(
                "planar runs use the Crank–Nicolson splitting (theta = 0.5)".into(),
            ));
        }
        let dt = datum.dt();
        let share = -T::one() / T::from_usize(d).unwrap();
        let ops: Vec<AxisOp<T>> = (0..d)
            .map(|i| AxisOp::new(&grid.axes[i], -f.c * f.nu[i], share, eq.lambda_axis(i)))
            .collect();
        let (main, half): (Vec<_>, Vec<_>) = if d == 1 {
            (
                vec![ops[0].factor(opts.theta * dt)],
                vec![ops[0].factor(dt * lit(0.5))],
            )
        } else {
            let m: Vec<_> = ops.iter().map(|o| o.factor(dt * lit(0.5))).collect();
            (m.clone(), m)
        };
        let source = Source::new(&eq, &grid, opts.conv)?;
        let mut states = VecDeque::with_capacity(datum.m + 1);
        let mut sources = VecDeque::with_capacity(datum.m + 1);
        let mut min_seen = T::infinity();
        for slot in &datum.slots {
            if slot.grid != grid {
                return Err(Error::Config(
                    "history slots live on different grids".into(),
                ));
            }
            let mut s = vec![T::zero(); grid.len()];
            source.eval(&slot.values, &mut s);
            min_seen = min_seen.min(slot.min());
            states.push_back(slot.values.clone());
            sources.push_back(s);
        }
        Ok(Simulator {
            eq,
            grid,
            dt,
            m: datum.m,
            opts,
            ops,
            main,
            half,
            source,
            states,
            sources,
            t0,
            steps: 0,
            min_seen,
        })
    }

    pub fn time(&self) -> T {
        self.t0 + self.dt * T::from_u64(self.steps).unwrap()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn equation(&self) -> &Equation<T> {
        &self.eq
    }

    pub fn values(&self) -> &[T] {
        &self.states[self.m]
    }

    pub fn state(&self) -> Field<T> {
        Field {
            grid: self.grid.clone(),
            values: self.states[self.m].clone(),
        }
    }

    /// Lowest value seen in any stored or computed state.
    pub fn min_seen(&self) -> T {
        self.min_seen
    }

    pub fn history(&self) -> DelayHistory<T> {
        DelayHistory {
            h: self.eq.frame.h,
            m: self.m,
            slots: self
                .states
                .iter()
                .map(|v| Field {
                    grid: self.grid.clone(),
                    values: v.clone(),
                })
                .collect(),
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let next = if self.grid.dim() == 1 {
            self.step_line()
        } else {
            self.step_plane()
        };
        if let Some(bad) = next
            .iter()
            .find(|v| !v.is_finite() || v.abs() > self.opts.blowup)
        {
            let a = &self.grid.axes[0];
            let t = self.time() + self.dt;
            let f = &self.eq.frame;
            return Err(Error::Instability {
                t: t.f64(),
                diagnostic: format!(
                    "value {bad} exceeds {}; dt/dz^2 = {}, |c| dt/dz = {}, theta = {}",
                    self.opts.blowup,
                    self.dt / (a.spacing * a.spacing),
                    f.c.abs() * self.dt / a.spacing,
                    self.opts.theta
                ),
            });
        }
        self.min_seen = next.iter().fold(self.min_seen, |a, v| a.min(*v));
        let mut s = self.sources.pop_front().unwrap();
        self.source.eval(&next, &mut s);
        self.states.pop_front();
        self.states.push_back(next);
        self.sources.push_back(s);
        self.steps += 1;
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Steps until the clock reaches `t` (rounded to the nearest step).
    pub fn advance_to(&mut self, t: T) -> Result<()> {
        let target = ((t - self.t0) / self.dt).round().to_u64().unwrap_or(0);
        while self.steps < target {
            self.step()?;
        }
        Ok(())
    }

    fn step_line(&self) -> Vec<T> {
        let dt = self.dt;
        let u = &self.states[self.m];
        let f_old = &self.sources[0];
        let f_new = &self.sources[1];
        let op = &self.ops[0];
        let n = u.len();
        if (self.steps as usize) < self.opts.startup {
            let tau = dt * lit(0.5);
            let mut v = u.clone();
            for i in 0..n {
                v[i] = v[i] + tau * (f_old[i] + f_new[i]) * lit(0.5);
            }
            v[0] = v[0] + tau * op.s_lo;
            v[n - 1] = v[n - 1] + tau * op.s_hi;
            self.half[0].solve(&mut v);
            for i in 0..n {
                v[i] = v[i] + tau * f_new[i];
            }
            v[0] = v[0] + tau * op.s_lo;
            v[n - 1] = v[n - 1] + tau * op.s_hi;
            self.half[0].solve(&mut v);
            return v;
        }
        let theta = self.opts.theta;
        let mut rhs = vec![T::zero(); n];
        op.explicit(u, (T::one() - theta) * dt, &mut rhs);
        // explicit() added (1-θ)Δt s; the implicit side contributes θΔt s
        rhs[0] = rhs[0] + theta * dt * op.s_lo;
        rhs[n - 1] = rhs[n - 1] + theta * dt * op.s_hi;
        for i in 0..n {
            rhs[i] = rhs[i] + dt * (theta * f_new[i] + (T::one() - theta) * f_old[i]);
        }
        self.main[0].solve(&mut rhs);
        rhs
    }

    fn step_plane(&self) -> Vec<T> {
        let tau = self.dt * lit(0.5);
        let (n0, n1) = (self.grid.axes[0].n, self.grid.axes[1].n);
        let u = &self.states[self.m];
        let f_old = &self.sources[0];
        let f_new = &self.sources[1];
        let (op0, op1) = (&self.ops[0], &self.ops[1]);
        // (I − τA0) u* = (I + τA1) u + τ F(t−h)
        let mut r = vec![T::zero(); n0 * n1];
        r.par_chunks_mut(n1).enumerate().for_each(|(i, o)| {
            op1.explicit(&u[i * n1..(i + 1) * n1], tau, o);
        });
        for (k, v) in r.iter_mut().enumerate() {
            *v = *v + tau * f_old[k];
        }
        let mut rt = transpose(&r, n0, n1);
        rt.par_chunks_mut(n0).for_each(|col| {
            col[0] = col[0] + tau * op0.s_lo;
            col[n0 - 1] = col[n0 - 1] + tau * op0.s_hi;
            self.main[0].solve(col);
        });
        // (I − τA1) u⁺ = (I + τA0) u* + τ F(t+Δt−h)
        let mut st = vec![T::zero(); n0 * n1];
        st.par_chunks_mut(n0).enumerate().for_each(|(j, o)| {
            op0.explicit(&rt[j * n0..(j + 1) * n0], tau, o);
        });
        let mut s = transpose(&st, n1, n0);
        for (k, v) in s.iter_mut().enumerate() {
            *v = *v + tau * f_new[k];
        }
        s.par_chunks_mut(n1).for_each(|row| {
            row[0] = row[0] + tau * op1.s_lo;
            row[n1 - 1] = row[n1 - 1] + tau * op1.s_hi;
            self.main[1].solve(row);
        });
        s
    }

    /// `K ∗ [R(u)](z − chν)` for an arbitrary field on this grid.
    pub fn source_of(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); u.len()];
        self.source.eval(u, &mut out);
        out
    }

    /// `Δu − cν·∇u − u` (conjugated when weighted), with the grid fills.
    pub fn linear_part(&self, u: &[T]) -> Vec<T> {
        linear_part(&self.ops, &self.grid, u)
    }
}

fn linear_part<T: Real>(ops: &[AxisOp<T>], grid: &Grid<T>, u: &[T]) -> Vec<T> {
    let one = T::one();
    match grid.dim() {
        1 => {
            let mut out = vec![T::zero(); u.len()];
            ops[0].explicit(u, one, &mut out);
            out.iter_mut().zip(u).for_each(|(o, x)| *o = *o - *x);
            out
        }
        _ => {
            let (n0, n1) = (grid.axes[0].n, grid.axes[1].n);
            let mut a1 = vec![T::zero(); u.len()];
            for i in 0..n0 {
                ops[1].explicit(&u[i * n1..(i + 1) * n1], one, &mut a1[i * n1..(i + 1) * n1]);
            }
            let ut = transpose(u, n0, n1);
            let mut a0t = vec![T::zero(); u.len()];
            for j in 0..n1 {
                ops[0].explicit(
                    &ut[j * n0..(j + 1) * n0],
                    one,
                    &mut a0t[j * n0..(j + 1) * n0],
                );
            }
            let a0 = transpose(&a0t, n1, n0);
            (0..u.len()).map(|k| a1[k] + a0[k] - u[k] - u[k]).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Probe<T> {
    Sup,
    Min,
    Max,
    WeightedSup(Vec<T>),
    WeightedL1(Vec<T>),
    /// Interpolated value at a point.
    Point(Vec<T>),
    /// Leftmost crossing of the level along axis 0 (1D), NaN when absent.
    Level(T),
    /// `sup |u − ref|`.
    DiffSup(Field<T>),
    /// `sup e^{-λ·z}|u − ref|`.
    WeightedDiffSup(Field<T>, Vec<T>),
}

impl<T: Real> Probe<T> {
    pub fn measure(&self, f: &Field<T>) -> T {
        match self {
            Probe::Sup => f.sup_abs(),
            Probe::Min => f.min(),
            Probe::Max => f.max(),
            Probe::WeightedSup(l) => f.weighted_sup(l),
            Probe::WeightedL1(l) => f.weighted_l1(l),
            Probe::Point(z) => f.at(z),
            Probe::Level(beta) => level_position(f, *beta),
            Probe::DiffSup(r) => f.sub(r).sup_abs(),
            Probe::WeightedDiffSup(r, l) => f.sub(r).weighted_sup(l),
        }
    }
}

/// Leftmost `z` where a 1D field crosses `beta`, by linear interpolation.
pub fn level_position<T: Real>(f: &Field<T>, beta: T) -> T {
    let ax = &f.grid.axes[0];
    let v = &f.values;
    for i in 0..v.len().saturating_sub(1) {
        let (a, b) = (v[i] - beta, v[i + 1] - beta);
        if a == T::zero() {
            return ax.node(i);
        }
        if (a < T::zero()) != (b < T::zero()) {
            return ax.node(i) + ax.spacing * a / (a - b);
        }
    }
    T::nan()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec<T> {
    pub probes: Vec<(String, Probe<T>)>,
    /// Steps between samples (a sample is always taken at t = 0 and at the horizon).
    pub every: usize,
    pub snapshots: bool,
}

impl<T: Real> ProbeSpec<T> {
    pub fn new(every: usize) -> Self {
        ProbeSpec {
            probes: Vec::new(),
            every: every.max(1),
            snapshots: false,
        }
    }

    pub fn with(mut self, name: &str, p: Probe<T>) -> Self {
        self.probes.push((name.to_string(), p));
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta<T> {
    pub dt: T,
    pub m: usize,
    pub grid: Grid<T>,
    pub scheme: String,
    pub min_value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub series: Vec<(String, Vec<T>)>,
    pub snapshots: Vec<Field<T>>,
    pub meta: SolverMeta<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn series(&self, name: &str) -> Option<&[T]> {
        self.series
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }
}

fn scheme_name<T: Real>(grid: &Grid<T>, opts: &SolverOptions<T>) -> String {
    let conv = match opts.conv {
        Convolution::Direct => "direct",
        Convolution::Fft => "fft",
    };
    if grid.dim() == 1 {
        format!("theta={} startup={} conv={conv}", opts.theta, opts.startup)
    } else {
        format!("peaceman-rachford conv={conv}")
    }
}

/// Runs a simulator to the horizon, sampling probes.
pub fn run<T: Real>(
    sim: &mut Simulator<T>,
    horizon: T,
    probes: &ProbeSpec<T>,
) -> Result<Trajectory<T>> {
    let mut times = Vec::new();
    let mut series: Vec<(String, Vec<T>)> = probes
        .probes
        .iter()
        .map(|(n, _)| (n.clone(), Vec::new()))
        .collect();
    let mut snapshots = Vec::new();
    let total = ((horizon - sim.time()) / sim.dt())
        .round()
        .to_usize()
        .unwrap_or(0);
    for k in 0..=total {
        if k > 0 {
            sim.step()?;
        }
        if k % probes.every == 0 || k == total {
            let f = sim.state();
            times.push(sim.time());
            for ((_, p), (_, s)) in probes.probes.iter().zip(series.iter_mut()) {
                s.push(p.measure(&f));
            }
            if probes.snapshots {
                snapshots.push(f);
            }
        }
    }
    Ok(Trajectory {
        times,
        series,
        snapshots,
        meta: SolverMeta {
            dt: sim.dt(),
            m: sim.m(),
            grid: sim.grid().clone(),
            scheme: scheme_name(sim.grid(), &sim.opts),
            min_value: sim.min_seen(),
        },
    })
}

/// Integrates the moving-frame equation from `datum` up to `horizon`.
pub fn simulate<T: Real>(
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
    datum: DelayHistory<T>,
    horizon: T,
    probes: &ProbeSpec<T>,
    opts: SolverOptions<T>,
) -> Result<Trajectory<T>> {
    if datum.slots.iter().any(|s| s.min() < T::zero()) {
        return Err(Error::Domain("datum must be non-negative".into()));
    }
    let mut sim = Simulator::new(Equation::nonlinear(frame, law), datum, opts)?;
    run(&mut sim, horizon, probes)
}

/// Integrates the linear comparison equation for `e^{-λ·z} r` from a non-negative datum.
pub fn linear_comparison<T: Real>(
    frame: &FrameSpec<T>,
    lambda: &[T],
    r_datum: DelayHistory<T>,
    horizon: T,
    probes: &ProbeSpec<T>,
    opts: SolverOptions<T>,
) -> Result<Trajectory<T>> {
    if r_datum.slots.iter().any(|s| s.min() < T::zero()) {
        return Err(Error::Domain(
            "comparison datum must be non-negative".into(),
        ));
    }
    let mut sim = Simulator::new(Equation::comparison(frame, lambda), r_datum, opts)?;
    run(&mut sim, horizon, probes)
}

/// `N w = w_t − w_zz + c w_z + w − ∫K(y) g(w(t−h, z−ch−y)) dy` at the last level of a slab of
/// fields spaced `h/m` apart (BDF2 in time). Needs at least `max(m, 2) + 1` levels.
pub fn wave_operator<T: Real>(
    frame: &FrameSpec<T>,
    law: &BirthLaw<T>,
    slab: &[Field<T>],
    m: usize,
    opts: Convolution,
) -> Result<Field<T>> {
    if m == 0 || slab.len() < m.max(2) + 1 {
        return Err(Error::Coverage(format!(
            "slab of {} levels does not cover one delay interval plus two steps (m = {m})",
            slab.len()
        )));
    }
    let grid = slab[0].grid.clone();
    let dt = frame.h / T::from_usize(m).unwrap();
    let eq = Equation::nonlinear(frame, law);
    let d = grid.dim();
    let share = -T::one() / T::from_usize(d).unwrap();
    let ops: Vec<AxisOp<T>> = (0..d)
        .map(|i| AxisOp::new(&grid.axes[i], -frame.c * frame.nu[i], share, T::zero()))
        .collect();
    let source = Source::new(&eq, &grid, opts)?;
    let n = slab.len() - 1;
    let now = &slab[n].values;
    let lin = linear_part(&ops, &grid, now);
    let mut f = vec![T::zero(); now.len()];
    source.eval(&slab[n - m].values, &mut f);
    let (w1, w2) = (&slab[n - 1].values, &slab[n - 2].values);
    let values = (0..now.len())
        .map(|i| {
            let wt =
                (lit::<T>(3.0) * now[i] - lit::<T>(4.0) * w1[i] + w2[i]) / (lit::<T>(2.0) * dt);
            wt - lin[i] - f[i]
        })
        .collect();
    Ok(Field { grid, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayOdeSolution<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    /// `y'` at each node.
    pub slopes: Vec<T>,
}

impl<T: Real> DelayOdeSolution<T> {
    pub fn last(&self) -> T {
        *self.values.last().unwrap()
    }

    /// Cubic Hermite interpolation between nodes, clamped to the computed range.
    pub fn at(&self, t: T) -> T {
        let n = self.values.len();
        if n == 1 {
            return self.values[0];
        }
        let dt = self.times[1] - self.times[0];
        let x = ((t - self.times[0]) / dt).max(T::zero());
        let k = x.floor().to_usize().unwrap_or(0).min(n - 2);
        let s = (x - T::from_usize(k).unwrap()).min(T::one());
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * dt, self.slopes[k + 1] * dt);
        let one = T::one();
        let (two, three): (T, T) = (lit(2.0), lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        (two * s3 - three * s2 + one) * y0
            + (s3 - two * s2 + s) * d0
            + (three * s2 - two * s3) * y1
            + (s3 - s2) * d1
    }
}

/// `y' = a y + G(y(t−h))` with constant history `y0` on `[−h, 0]`: method of steps with the classical
/// four-stage scheme and cubic Hermite interpolation of the delayed argument (`Δt = h/m`).
pub fn delay_ode_affine<T: Real, G: Fn(T) -> T>(
    a: T,
    g: G,
    y0: T,
    h: T,
    horizon: T,
    m: usize,
) -> DelayOdeSolution<T> {
    let m = m.max(1);
    let dt = h / T::from_usize(m).unwrap();
    let steps = (horizon / dt).round().to_usize().unwrap_or(0);
    // node k holds t = (k − m) Δt
    let mut y = vec![y0; m + 1];
    let mut dy = vec![T::zero(); m + 1];
    let half: T = lit(0.5);
    let rhs = |yv: T, delayed: T| a * yv + g(delayed);
    dy[m] = rhs(y0, y0);
    for n in 0..steps {
        let k = n + m;
        // delayed values at t_n − h, t_n − h + Δt/2, t_n − h + Δt
        let (ya, yb) = (y[k - m], y[k - m + 1]);
        // the history is constant, so the left derivative at t = 0 is zero
        let fa = if k - m < m { T::zero() } else { dy[k - m] };
        let fb = if k - m + 1 <= m {
            T::zero()
        } else {
            dy[k - m + 1]
        };
        let mid = (ya + yb) * half + dt * (fa - fb) / lit(8.0);
        let yk = y[k];
        let k1 = rhs(yk, ya);
        let k2 = rhs(yk + dt * half * k1, mid);
        let k3 = rhs(yk + dt * half * k2, mid);
        let k4 = rhs(yk + dt * k3, yb);
        let next = yk + dt / lit(6.0) * (k1 + lit::<T>(2.0) * k2 + lit::<T>(2.0) * k3 + k4);
        y.push(next);
        dy.push(rhs(next, yb));
    }
    let times = (0..y.len() - m)
        .map(|i| dt * T::from_usize(i).unwrap())
        .collect();
    DelayOdeSolution {
        times,
        values: y[m..].to_vec(),
        slopes: dy[m..].to_vec(),
    }
}

/// `β' = −β + g(β(t−h))` with constant history `β0`.
pub fn delay_ode<T: Real, G: Fn(T) -> T>(
    g: G,
    beta0: T,
    h: T,
    horizon: T,
    m: usize,
) -> DelayOdeSolution<T> {
    delay_ode_affine(-T::one(), g, beta0, h, horizon, m)
}
