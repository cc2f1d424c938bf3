//! Experiment harnesses for the stability statements: decay fits, bound domination, sub/super
//! solution signs, squeezing into the attracting band, persistence and speed selection.
//!
//! Everything here runs in `f64`; the generic core is instantiated once.

use crate::birth_laws::BirthLaw;
use crate::error::{Error, Result};
use crate::evolve::{
    delay_ode, grid_char_eval, grid_char_roots, level_position, wave_operator, Convolution,
    DelayHistory, Equation, Field, Grid, Simulator, SolverOptions,
};
use crate::kernels::{Kernel, Side};
use crate::numerics::{dense_max, solve_dense};
use crate::spectral::{self, b_gamma, FrameSpec, FrontSide};
use crate::waves::{Orientation, WaveProfile};

/// `value ≈ C t^{-α} e^{-γ t}` fitted in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub window: (f64, f64),
    /// Root-mean-square misfit of `log value`.
    pub residual: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    Full,
    /// γ fixed (0 for a pure power law).
    PinGamma(f64),
    /// α fixed (0 for a pure exponential).
    PinAlpha(f64),
}

/// Least squares on `log v = log C − α log t − γ t` over samples with `t` in the window.
pub fn decay_fit(t: &[f64], v: &[f64], window: (f64, f64), model: FitModel) -> Result<DecayFit> {
    if !(window.0 < window.1) {
        return Err(Error::Domain(format!(
            "fit window [{}, {}] is empty",
            window.0, window.1
        )));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 20 {
        return Err(Error::Domain(format!(
            "fit needs at least 20 samples in the window, got {}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(t, v)| !(*v > 0.0) || !(*t > 0.0)) {
        return Err(Error::Domain(format!("non-positive sample {v} at t = {t}")));
    }
    // columns: 1, −log t, −t; pinned terms move to the left-hand side
    let rows: Vec<(Vec<f64>, f64)> = pts
        .iter()
        .map(|&(t, v)| {
            let y = v.ln();
            match model {
                FitModel::Full => (vec![1.0, -t.ln(), -t], y),
                FitModel::PinGamma(g) => (vec![1.0, -t.ln()], y + g * t),
                FitModel::PinAlpha(a) => (vec![1.0, -t], y + a * t.ln()),
            }
        })
        .collect();
    let k = rows[0].0.len();
    // scale columns for conditioning
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            rows.iter()
                .fold(0.0_f64, |a, (x, _)| a.max(x[j].abs()))
                .max(1e-300)
        })
        .collect();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (x, y) in &rows {
        for i in 0..k {
            let xi = x[i] / scale[i];
            atb[i] += xi * y;
            for j in 0..k {
                ata[i][j] += xi * x[j] / scale[j];
            }
        }
    }
    let sol = solve_dense(ata, atb).ok_or_else(|| Error::Domain("degenerate fit window".into()))?;
    let coef: Vec<f64> = sol.iter().zip(&scale).map(|(s, c)| s / c).collect();
    let (logc, alpha, gamma) = match model {
        FitModel::Full => (coef[0], coef[1], coef[2]),
        FitModel::PinGamma(g) => (coef[0], coef[1], g),
        FitModel::PinAlpha(a) => (coef[0], a, coef[1]),
    };
    let ss: f64 = pts
        .iter()
        .map(|&(t, v)| {
            let pred = logc - alpha * t.ln() - gamma * t;
            (v.ln() - pred).powi(2)
        })
        .sum();
    Ok(DecayFit {
        c: logc.exp(),
        alpha,
        gamma,
        window,
        residual: (ss / pts.len() as f64).sqrt(),
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub theorem: String,
    pub hypotheses: Vec<Check>,
    /// Fraction of space-time samples where the bound held.
    pub domination: Option<f64>,
    pub fit: Option<DecayFit>,
    pub measurements: Vec<(String, f64)>,
    pub criteria: Vec<Check>,
    pub pass: bool,
}

impl StabilityVerdict {
    pub fn new(theorem: &str) -> Self {
        StabilityVerdict {
            theorem: theorem.to_string(),
            hypotheses: Vec::new(),
            domination: None,
            fit: None,
            measurements: Vec::new(),
            criteria: Vec::new(),
            pass: false,
        }
    }

    pub fn hypothesis(&mut self, name: &str, pass: bool, detail: String) -> bool {
        self.hypotheses.push(Check {
            name: name.into(),
            pass,
            detail,
        });
        pass
    }

    pub fn criterion(&mut self, name: &str, pass: bool, detail: String) -> bool {
        self.criteria.push(Check {
            name: name.into(),
            pass,
            detail,
        });
        pass
    }

    pub fn measure(&mut self, name: &str, v: f64) {
        self.measurements.push((name.into(), v));
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.measurements
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    fn finish(mut self) -> Self {
        self.pass = self.hypotheses_hold()
            && !self.criteria.is_empty()
            && self.criteria.iter().all(|c| c.pass);
        self
    }

    /// Flat `key = value` text.
    pub fn report(&self) -> String {
        let mut out = format!("theorem = {}\npass = {}\n", self.theorem, self.pass);
        for h in &self.hypotheses {
            out += &format!("hypothesis.{} = {} ({})\n", h.name, h.pass, h.detail);
        }
        for c in &self.criteria {
            out += &format!("criterion.{} = {} ({})\n", c.name, c.pass, c.detail);
        }
        if let Some(d) = self.domination {
            out += &format!("domination_fraction = {d:.6}\n");
        }
        if let Some(f) = &self.fit {
            out += &format!(
                "fit.c = {:.6e}\nfit.alpha = {:.6}\nfit.gamma = {:.6}\nfit.window = [{:.4}, {:.4}]\nfit.residual = {:.3e}\n",
                f.c, f.alpha, f.gamma, f.window.0, f.window.1, f.residual
            );
        }
        for (k, v) in &self.measurements {
            out += &format!("{k} = {v:.10e}\n");
        }
        out
    }
}

/// Time series recorded by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl Series {
    fn new(name: &str) -> Self {
        Series {
            name: name.into(),
            t: Vec::new(),
            v: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, v: f64) {
        self.t.push(t);
        self.v.push(v);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub verdict: StabilityVerdict,
    pub series: Vec<Series>,
}

impl Experiment {
    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }
}

/// Shared knobs for the time-dependent experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub solver: SolverOptions<f64>,
    /// Steps between samples.
    pub every: usize,
    /// Fit window as fractions of the horizon.
    pub window: (f64, f64),
    /// Steps per delay for runs that build their own history.
    pub m: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            solver: SolverOptions::default(),
            every: 10,
            window: (0.4, 0.95),
            m: 20,
        }
    }
}

fn weights(grid: &Grid<f64>, lambda: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let z = grid.point(i);
            (-z.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp()
        })
        .collect()
}

fn steps_to(horizon: f64, dt: f64) -> usize {
    (horizon / dt).round() as usize
}

fn window_of(horizon: f64, w: (f64, f64)) -> (f64, f64) {
    (w.0 * horizon, w.1 * horizon)
}

/// Threshold after which the comparison bound is asserted: `max(2h, h(d+1)/2)`.
pub fn bound_threshold(h: f64, d: usize) -> f64 {
    (2.0 * h).max(h * (d as f64 + 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    pub run: RunOptions,
    /// Allowed `|α − d/2|`.
    pub alpha_tol: f64,
    /// Allowed relative error of the fitted γ against `γ_λ`.
    pub gamma_rel_tol: f64,
    /// Relative round-off slack in the pointwise domination test.
    pub rel_tol: f64,
    /// Fit model; `None` pins γ at 0 when `|γ_λ| < 1e-6` and α at `d/2` otherwise.
    pub model: Option<FitModel>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            run: RunOptions::default(),
            alpha_tol: 0.15,
            gamma_rel_tol: 0.15,
            rel_tol: 1e-9,
            model: None,
        }
    }
}

/// Two nonlinear runs and the linear comparison run from `e^{-λ·z}|u₀ − ψ₀|`, advanced in lockstep.
///
/// Checks pointwise `e^{-λ·z}|u − ψ| ≤ r̄` (with `r̄ = e^{-λ·z} r`), the bound
/// `sup r̄ ≤ A_λ ‖r₀‖ t^{-d/2} e^{-γ_λ t}`, both for `t > max(2h, h(d+1)/2)`, and fits the weighted sup.
pub fn comparison_experiment(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    u0: &DelayHistory<f64>,
    psi0: &DelayHistory<f64>,
    lambda: &[f64],
    horizon: f64,
    opts: &CompareOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("comparison");
    let d = frame.d;
    let grid = u0.grid().clone();
    if psi0.grid() != &grid || u0.m != psi0.m {
        return Err(Error::Config(
            "u0 and psi0 must share grid and delay resolution".into(),
        ));
    }
    let nonneg = u0.slots.iter().chain(&psi0.slots).all(|s| s.min() >= 0.0);
    v.hypothesis(
        "nonnegative_data",
        nonneg,
        "u0, psi0 >= 0 on the grid".into(),
    );
    let gamma = spectral::gamma_lambda(frame, lambda)?;
    let a_l = spectral::a_lambda(frame, lambda)?;
    let rgrid = grid.difference().conjugate(lambda);
    let w = weights(&grid, lambda);
    let r0 = DelayHistory {
        h: u0.h,
        m: u0.m,
        slots: u0
            .slots
            .iter()
            .zip(&psi0.slots)
            .map(|(a, b)| Field {
                grid: rgrid.clone(),
                values: a
                    .values
                    .iter()
                    .zip(&b.values)
                    .zip(&w)
                    .map(|((x, y), w)| w * (x - y).abs())
                    .collect(),
            })
            .collect(),
    };
    let norm0 = r0
        .slots
        .iter()
        .map(|s| s.values.iter().sum::<f64>())
        .fold(0.0_f64, f64::max)
        * grid.cell_volume();
    v.hypothesis(
        "weighted_l1_finite",
        norm0.is_finite(),
        format!("|r0|_(L1,h,lambda) = {norm0:.6e}"),
    );
    v.measure("gamma_lambda", gamma);
    v.measure("a_lambda", a_l);
    v.measure("r0_norm", norm0);
    let mut su = Simulator::new(Equation::nonlinear(frame, law), u0.clone(), opts.run.solver)?;
    let mut sp = Simulator::new(
        Equation::nonlinear(frame, law),
        psi0.clone(),
        opts.run.solver,
    )?;
    let mut sr = Simulator::new(Equation::comparison(frame, lambda), r0, opts.run.solver)?;
    let thr = bound_threshold(frame.h, d);
    let total = steps_to(horizon, su.dt());
    let mut s_diff = Series::new("sup_weighted_diff");
    let mut s_r = Series::new("sup_comparison");
    let mut s_bound = Series::new("theorem_bound");
    let (mut good, mut seen) = (0u64, 0u64);
    let (mut bound_good, mut bound_seen) = (0u64, 0u64);
    let mut worst_excess = 0.0_f64;
    let mut min_r = f64::INFINITY;
    for k in 1..=total {
        su.step()?;
        sp.step()?;
        sr.step()?;
        if k % opts.run.every != 0 && k != total {
            continue;
        }
        let t = su.time();
        let (uu, pp, rr) = (su.values(), sp.values(), sr.values());
        let rsup = rr.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        min_r = min_r.min(rr.iter().fold(f64::INFINITY, |a, x| a.min(*x)));
        let mut dsup = 0.0_f64;
        let mut ok = 0u64;
        for i in 0..uu.len() {
            let dw = w[i] * (uu[i] - pp[i]).abs();
            dsup = dsup.max(dw);
            let slack = rr[i] * (1.0 + opts.rel_tol) + opts.rel_tol * rsup + 1e-300;
            if dw <= slack {
                ok += 1;
            } else {
                worst_excess = worst_excess.max((dw - rr[i]) / rsup.max(1e-300));
            }
        }
        let bound = a_l * norm0 * t.powf(-(d as f64) / 2.0) * (-gamma * t).exp();
        s_diff.push(t, dsup);
        s_r.push(t, rsup);
        s_bound.push(t, bound);
        if t > thr {
            good += ok;
            seen += uu.len() as u64;
            bound_seen += 1;
            if rsup <= bound * (1.0 + opts.rel_tol) {
                bound_good += 1;
            }
        }
    }
    let frac = if seen == 0 {
        1.0
    } else {
        good as f64 / seen as f64
    };
    v.domination = Some(frac);
    v.measure("domination_worst_relative_excess", worst_excess);
    v.measure("comparison_min_value", min_r);
    let bfrac = if bound_seen == 0 {
        1.0
    } else {
        bound_good as f64 / bound_seen as f64
    };
    v.measure("theorem_bound_fraction", bfrac);
    v.criterion(
        "pointwise_domination",
        frac >= 0.999,
        format!("fraction {frac:.6}"),
    );
    v.criterion(
        "theorem_bound",
        bfrac >= 0.999,
        format!("fraction {bfrac:.6}"),
    );
    let half_d = d as f64 / 2.0;
    if norm0 > 0.0 {
        let win = window_of(horizon, opts.run.window);
        let model = opts.model.unwrap_or(if gamma.abs() < 1e-6 {
            FitModel::PinGamma(0.0)
        } else {
            FitModel::PinAlpha(half_d)
        });
        let fit = decay_fit(&s_diff.t, &s_diff.v, win, model)?;
        if matches!(model, FitModel::PinGamma(_)) {
            let ok = (fit.alpha - half_d).abs() <= opts.alpha_tol;
            v.criterion(
                "rate",
                ok,
                format!("alpha {:.4} vs d/2 = {half_d}", fit.alpha),
            );
        } else {
            let rel = (fit.gamma - gamma).abs() / gamma.abs();
            v.criterion(
                "rate",
                rel <= opts.gamma_rel_tol,
                format!("gamma {:.5} vs {gamma:.5}", fit.gamma),
            );
        }
        v.fit = Some(fit);
    } else {
        v.criterion("rate", true, "zero perturbation".into());
    }
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s_diff, s_r, s_bound],
    })
}

/// Innermost `z` beyond which the profile stays within `tol` of κ, if any.
pub fn plateau_edge(profile: &WaveProfile<f64>, tol: f64) -> Option<f64> {
    let z = profile.nodes();
    let v = &profile.samples.values;
    let n = v.len();
    let inside = |i: usize| (v[i] - profile.kappa).abs() <= tol;
    match profile.orientation {
        Orientation::ZeroAtMinus => {
            if !inside(n - 1) {
                return None;
            }
            let mut i = n - 1;
            while i > 0 && inside(i - 1) {
                i -= 1;
            }
            Some(z[i])
        }
        Orientation::ZeroAtPlus => {
            if !inside(0) {
                return None;
            }
            let mut i = 0;
            while i + 1 < n && inside(i + 1) {
                i += 1;
            }
            Some(z[i])
        }
    }
}

/// The grid-consistent value of `E_c(λ)` at the profile spacing.
fn grid_e(frame: &FrameSpec<f64>, profile: &WaveProfile<f64>, lambda: f64) -> Result<f64> {
    grid_char_eval(frame, profile.grid().axes[0].spacing, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOptions {
    pub run: RunOptions,
    /// Smallness constant `C_ε ∈ (0, 1/2]`.
    pub c_eps: f64,
    /// Centre and half-width of the cosine-squared bump.
    pub bump: (f64, f64),
    /// Slack on the algebraic envelope.
    pub slack: f64,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            run: RunOptions::default(),
            c_eps: 0.1,
            bump: (0.0, 2.0),
            slack: 0.05,
        }
    }
}

fn bump(z: f64, centre: f64, half: f64) -> f64 {
    let x = (z - centre) / half;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    }
}

/// Perturbs a profile by a bump scaled so that both its `η_λ`-weighted L¹ norm and its sup norm are
/// at most `ε C_ε`, then checks the envelope of the matching case.
pub fn local_stability_experiment(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    profile: &WaveProfile<f64>,
    lambda: f64,
    eps: f64,
    horizon: f64,
    opts: &LocalOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("local_stability");
    let kappa = profile.kappa;
    v.hypothesis(
        "eps_below_kappa",
        eps > 0.0 && eps < kappa,
        format!("eps = {eps}, kappa = {kappa}"),
    );
    let rho_eps = law.lipschitz_on((kappa - eps).max(0.0), kappa + eps);
    let rho_ok = v.hypothesis(
        "rho_eps_below_one",
        rho_eps < 1.0,
        format!("rho_eps = {rho_eps:.6}"),
    );
    let z_eps = plateau_edge(profile, eps / 2.0);
    let z_ok = v.hypothesis(
        "plateau_within_eps_half",
        z_eps.is_some(),
        format!(
            "z_eps = {}",
            z_eps.map(|z| format!("{z:.4}")).unwrap_or("none".into())
        ),
    );
    v.hypothesis(
        "c_eps_range",
        opts.c_eps > 0.0 && opts.c_eps <= 0.5,
        format!("C_eps = {}", opts.c_eps),
    );
    let e_val = grid_e(frame, profile, lambda)?;
    let critical = e_val.abs() < 1e-6;
    v.hypothesis(
        "e_c_nonpositive",
        e_val < 1e-6,
        format!("grid E_c(lambda) = {e_val:.3e}"),
    );
    v.measure("rho_eps", rho_eps);
    v.measure("e_c", e_val);
    if !(rho_ok && z_ok) || e_val >= 1e-6 {
        return Ok(Experiment {
            verdict: v.finish(),
            series: vec![],
        });
    }
    let grid = Grid::pinned_to(&profile.samples);
    let dz = grid.axes[0].spacing;
    let (centre, half) = opts.bump;
    let eta = |z: f64| (lambda * z).exp().min(1.0);
    let shape: Vec<f64> = profile
        .nodes()
        .iter()
        .map(|z| bump(*z, centre, half))
        .collect();
    let l1: f64 = profile
        .nodes()
        .iter()
        .zip(&shape)
        .map(|(z, b)| eta(*z) * b)
        .sum::<f64>()
        * dz;
    let sup = shape.iter().fold(0.0_f64, |a, b| a.max(*b));
    let amp = eps * opts.c_eps / l1.max(sup).max(1e-300);
    let pert: Vec<f64> = profile
        .samples
        .values
        .iter()
        .zip(&shape)
        .map(|(p, b)| p + amp * b)
        .collect();
    let u0 = Field::new(grid.clone(), pert)?;
    let phi = Field {
        grid: grid.clone(),
        values: profile.samples.values.clone(),
    };
    let hist = DelayHistory::constant(u0, frame.h, opts.run.m)?;
    let mut sim = Simulator::new(Equation::nonlinear(frame, law), hist, opts.run.solver)?;
    let total = steps_to(horizon, sim.dt());
    let mut s = Series::new("sup_diff");
    s.push(0.0, sup_diff(sim.values(), &phi.values));
    for k in 1..=total {
        sim.step()?;
        if k % opts.run.every == 0 || k == total {
            s.push(sim.time(), sup_diff(sim.values(), &phi.values));
        }
    }
    if critical {
        let delta = spectral::delta_star(rho_eps, frame.h, frame.d)?;
        v.measure("delta_star", delta);
        let half_d = frame.d as f64 / 2.0;
        let worst =
            s.t.iter()
                .zip(&s.v)
                .map(|(t, d)| d * (t + delta).powf(half_d) / (eps / 2.0))
                .fold(0.0, f64::max);
        v.measure("envelope_ratio", worst);
        v.criterion(
            "algebraic_envelope",
            worst <= 1.0 + opts.slack,
            format!("max ratio {worst:.4}"),
        );
    } else {
        let gl = spectral::gamma_lambda(frame, &[lambda])?;
        let gs = spectral::gamma_star(rho_eps, frame.h, gl).unwrap_or(0.0);
        v.measure("gamma_star", gs);
        let worst =
            s.t.iter()
                .zip(&s.v)
                .map(|(t, d)| d / (eps / 2.0 * (-gs * t).exp()))
                .fold(0.0, f64::max);
        v.measure("envelope_ratio", worst);
        v.criterion(
            "exponential_envelope",
            gs > 0.0 && worst <= 1.0,
            format!("gamma* {gs:.5}, max ratio {worst:.4}"),
        );
    }
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s],
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOptions {
    pub run: RunOptions,
    /// `z₀` of condition (IC): data must stay above `σ > 0` beyond it.
    pub ic_z0: f64,
    /// Band margin for the squeeze check.
    pub squeeze_eps: f64,
    /// Required fraction of γ* for the exponential case.
    pub rate_factor: f64,
    pub alpha_band: (f64, f64),
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions {
            run: RunOptions::default(),
            ic_z0: 0.0,
            squeeze_eps: 0.05,
            rate_factor: 0.8,
            alpha_band: (0.35, 0.65),
        }
    }
}

/// Condition (IC): the smallest value of the datum beyond `z0` on the plateau side.
pub fn ic_sigma(datum: &DelayHistory<f64>, orientation: Orientation, z0: f64) -> f64 {
    let ax = &datum.grid().axes[0];
    let mut sigma = f64::INFINITY;
    for s in &datum.slots {
        for i in 0..ax.n {
            let z = ax.node(i);
            let beyond = match orientation {
                Orientation::ZeroAtMinus => z >= z0,
                Orientation::ZeroAtPlus => z <= -z0,
            };
            if beyond {
                sigma = sigma.min(s.values[i]);
            }
        }
    }
    sigma
}

/// Tracks the entry time into `[m_g − ε, M_g + ε]` over the quadrant `{t ≥ T, ±z ≥ T}`.
#[derive(Debug, Clone)]
pub struct BandTracker {
    lo: f64,
    hi: f64,
    orientation: Orientation,
    entry: f64,
    reach: f64,
}

impl BandTracker {
    pub fn new(lo: f64, hi: f64, orientation: Orientation, grid: &Grid<f64>) -> Self {
        let ax = &grid.axes[0];
        let reach = match orientation {
            Orientation::ZeroAtMinus => ax.hi(),
            Orientation::ZeroAtPlus => -ax.lo,
        };
        BandTracker {
            lo,
            hi,
            orientation,
            entry: f64::NEG_INFINITY,
            reach,
        }
    }

    pub fn observe(&mut self, t: f64, f: &Field<f64>) {
        let ax = &f.grid.axes[0];
        let mut worst = f64::NEG_INFINITY;
        for (i, u) in f.values.iter().enumerate() {
            if *u < self.lo || *u > self.hi {
                let z = ax.node(i);
                let reach = match self.orientation {
                    Orientation::ZeroAtMinus => z,
                    Orientation::ZeroAtPlus => -z,
                };
                worst = worst.max(reach);
            }
        }
        // the pair (t, worst) rules out every T ≤ min(t, worst)
        self.entry = self.entry.max(t.min(worst));
    }

    /// Entry time, or `None` when the band is not entered inside the grid.
    pub fn entry(&self) -> Option<f64> {
        let e = self.entry.max(0.0);
        if e < self.reach {
            Some(e)
        } else {
            None
        }
    }
}

/// Global stability run against a profile, on the profile grid with its tail pinned.
pub fn global_stability_experiment(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    profile: &WaveProfile<f64>,
    lambda: f64,
    datum: &DelayHistory<f64>,
    horizon: f64,
    opts: &GlobalOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("global_stability");
    v.hypothesis("line", frame.d == 1, format!("d = {}", frame.d));
    let rep = law.analyze()?;
    v.hypothesis(
        "rho_below_one",
        rep.rho < 1.0,
        format!("rho = {:.6}", rep.rho),
    );
    let sigma = ic_sigma(datum, profile.orientation, opts.ic_z0);
    let bounded = datum
        .slots
        .iter()
        .all(|s| s.values.iter().all(|x| x.is_finite() && *x >= 0.0));
    v.hypothesis(
        "ic",
        sigma > 0.0 && bounded,
        format!("sigma = {sigma:.4e} beyond z0 = {}", opts.ic_z0),
    );
    let side_ok = match profile.orientation {
        Orientation::ZeroAtMinus => lambda >= profile.lambda1 - 1e-12,
        Orientation::ZeroAtPlus => lambda <= profile.lambda1 + 1e-12,
    };
    v.hypothesis(
        "lambda_side",
        side_ok,
        format!("lambda = {lambda:.6}, lambda1 = {:.6}", profile.lambda1),
    );
    let e_val = grid_e(frame, profile, lambda)?;
    v.hypothesis(
        "e_c_nonpositive",
        e_val < 1e-6,
        format!("grid E_c(lambda) = {e_val:.3e}"),
    );
    let critical = e_val.abs() < 1e-6;
    if datum.grid().axes[0].n != profile.grid().axes[0].n {
        return Err(Error::Config("datum must live on the profile grid".into()));
    }
    let w = weights(profile.grid(), &[lambda]);
    let wl1 = datum
        .slots
        .iter()
        .map(|s| {
            s.values
                .iter()
                .zip(&profile.samples.values)
                .zip(&w)
                .map(|((a, b), w)| w * (a - b).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        * profile.grid().axes[0].spacing;
    v.hypothesis(
        "weighted_l1",
        wl1.is_finite(),
        format!("|u0 - phi|_(L1,h,lambda) = {wl1:.4e}"),
    );
    v.measure("rho", rep.rho);
    v.measure("e_c", e_val);
    v.measure("ic_sigma", sigma);
    if !v.hypotheses_hold() {
        return Ok(Experiment {
            verdict: v.finish(),
            series: vec![],
        });
    }
    let grid = Grid::pinned_to(&profile.samples);
    let hist = DelayHistory {
        h: datum.h,
        m: datum.m,
        slots: datum
            .slots
            .iter()
            .map(|s| Field {
                grid: grid.clone(),
                values: s.values.clone(),
            })
            .collect(),
    };
    let phi = profile.samples.values.clone();
    let mut sim = Simulator::new(Equation::nonlinear(frame, law), hist, opts.run.solver)?;
    let mut band = BandTracker::new(
        rep.small_m - opts.squeeze_eps,
        rep.big_m + opts.squeeze_eps,
        profile.orientation,
        &grid,
    );
    let total = steps_to(horizon, sim.dt());
    let mut s = Series::new("sup_diff");
    for k in 1..=total {
        sim.step()?;
        if k % opts.run.every == 0 || k == total {
            let t = sim.time();
            s.push(t, sup_diff(sim.values(), &phi));
            band.observe(t, &sim.state());
        }
    }
    v.measure("min_value", sim.min_seen());
    match band.entry() {
        Some(te) => v.measure("squeeze_entry_time", te),
        None => v.measure("squeeze_entry_time", f64::NAN),
    }
    let win = window_of(horizon, opts.run.window);
    if critical {
        let fit = decay_fit(&s.t, &s.v, win, FitModel::PinGamma(0.0))?;
        let (a, b) = opts.alpha_band;
        v.criterion(
            "algebraic_rate",
            fit.alpha >= a && fit.alpha <= b,
            format!("alpha {:.4} in [{a}, {b}]", fit.alpha),
        );
        v.fit = Some(fit);
    } else {
        let gl = spectral::gamma_lambda(frame, &[lambda])?;
        let root = spectral::gamma_star(rep.rho, frame.h, 1.0).unwrap_or(0.0);
        let admissible = root.min(gl);
        v.measure("gamma_lambda", gl);
        v.measure("gamma_star", root);
        v.measure("gamma_star_admissible", admissible);
        let fit = decay_fit(&s.t, &s.v, win, FitModel::PinAlpha(0.0))?;
        let need = opts.rate_factor * root;
        v.criterion(
            "exponential_rate",
            fit.gamma >= need,
            format!("rate {:.5} >= {need:.5}", fit.gamma),
        );
        v.fit = Some(fit);
    }
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s],
    })
}

/// Largest `γ* ≤ cap` such that (gg1) and (gg) hold on `[κ−δ, κ+δ] × [0, q] × [0, γ*]`, sampled 200×200
/// in `(u, q)` for each trial γ.
pub fn sttg_gamma_star(
    law: &BirthLaw<f64>,
    kappa: f64,
    delta: f64,
    q_up: f64,
    q_low: f64,
    h: f64,
    cap: f64,
) -> f64 {
    let holds = |gamma: f64| {
        let n = 200;
        for i in 0..=n {
            let u = kappa - delta + 2.0 * delta * i as f64 / n as f64;
            for j in 0..=n {
                let f = j as f64 / n as f64;
                let ql = q_low * f;
                let qu = q_up * f;
                let e = (gamma * h).exp();
                if law.eval(u) - law.eval((u - ql * e).max(0.0)) > ql * (1.0 - 2.0 * gamma) + 1e-15
                {
                    return false;
                }
                if law.eval(u) - law.eval(u + qu * e) < -qu * (1.0 - 2.0 * gamma) - 1e-15 {
                    return false;
                }
            }
        }
        true
    };
    if !holds(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, cap.min(0.5));
    if holds(hi) {
        return hi;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSuperOptions {
    /// Half-width `δ*` of the box around κ.
    pub delta: f64,
    /// Delay steps for the slab.
    pub m: usize,
    /// Time at which the operator is evaluated.
    pub t_eval: f64,
}

impl Default for SubSuperOptions {
    fn default() -> Self {
        SubSuperOptions {
            delta: 0.2,
            m: 20,
            t_eval: 2.0,
        }
    }
}

/// Evaluates the wave operator on `u± = φ ± q e^{−γt} η_λ(z − b)` over one delay slab.
#[allow(clippy::too_many_arguments)]
pub fn subsuper_check(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    profile: &WaveProfile<f64>,
    q: f64,
    gamma: f64,
    lambda: f64,
    b: f64,
    sign: f64,
    opts: &SubSuperOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new(if sign > 0.0 {
        "supersolution"
    } else {
        "subsolution"
    });
    let kappa = profile.kappa;
    let rep = law.analyze()?;
    let dz = profile.grid().axes[0].spacing;
    let monotone = {
        let n = 4000;
        let top = kappa + opts.delta + q * (gamma * frame.h).exp();
        (0..n).all(|i| {
            let a = top * i as f64 / n as f64;
            let b2 = top * (i + 1) as f64 / n as f64;
            law.eval(b2) >= law.eval(a) - 1e-14
        })
    };
    v.hypothesis(
        "monotone_law",
        monotone,
        "g non-decreasing on the probed range".into(),
    );
    let gs = sttg_gamma_star(law, kappa, opts.delta, q, q, frame.h, 0.5);
    v.measure("gamma_star_boxes", gs);
    v.hypothesis(
        "gamma_in_boxes",
        gamma <= gs,
        format!("gamma = {gamma}, boxes allow up to {gs:.5}"),
    );
    // (E) in the form the super/sub-solution computation needs: γ + p_λ + e^{γh} q_λ ≤ 0
    let (p, qq) = spectral::pq(frame, &[lambda])?;
    let e_cond = gamma + p + (gamma * frame.h).exp() * qq;
    v.measure("e_condition", e_cond);
    v.hypothesis(
        "exponent_condition",
        e_cond <= 0.0,
        format!("gamma + p + e^(gamma h) q = {e_cond:.4e}"),
    );
    let side = match profile.orientation {
        Orientation::ZeroAtMinus => FrontSide::Plus,
        Orientation::ZeroAtPlus => FrontSide::Minus,
    };
    let z_edge = plateau_edge(profile, opts.delta);
    v.hypothesis(
        "plateau_edge",
        z_edge.is_some(),
        format!("z_edge = {:?}", z_edge),
    );
    let Some(z_edge) = z_edge else {
        return Ok(Experiment {
            verdict: v.finish(),
            series: vec![],
        });
    };
    let bg = if gamma > 0.0 {
        b_gamma(z_edge, side, frame, gamma)?
    } else {
        b_gamma(z_edge, side, frame, 0.0).unwrap_or(f64::NAN)
    };
    v.measure("b_gamma", bg);
    let b_ok = match side {
        FrontSide::Plus => b >= bg,
        FrontSide::Minus => b <= bg,
    };
    v.hypothesis(
        "b_beyond_b_gamma",
        b_ok,
        format!("b = {b:.4}, b_gamma = {bg:.4}"),
    );
    let _ = rep;
    let grid = profile.grid().clone();
    let mirror = matches!(profile.orientation, Orientation::ZeroAtPlus);
    let eta = |z: f64| {
        let x = if mirror { -(z - b) } else { z - b };
        (lambda.abs() * x).exp().min(1.0)
    };
    let dt = frame.h / opts.m as f64;
    let levels = opts.m.max(2) + 1;
    let candidate = |qv: f64, t: f64| {
        let vals = profile
            .nodes()
            .iter()
            .zip(&profile.samples.values)
            .map(|(z, p)| p + sign * qv * (-gamma * t).exp() * eta(*z))
            .collect();
        Field {
            grid: grid.clone(),
            values: vals,
        }
    };
    let slab = |qv: f64| -> Vec<Field<f64>> {
        (0..levels)
            .map(|k| candidate(qv, opts.t_eval - (levels - 1 - k) as f64 * dt))
            .collect()
    };
    let kappa_slab: Vec<Field<f64>> = (0..levels)
        .map(|_| Field::constant(&grid.difference(), kappa))
        .collect();
    let k_res = wave_operator(frame, law, &kappa_slab, opts.m, Convolution::Direct)?;
    let phi_res = wave_operator(frame, law, &slab(0.0), opts.m, Convolution::Direct)?;
    let res = wave_operator(frame, law, &slab(q), opts.m, Convolution::Direct)?;
    // nodes whose stencil or kernel reach touches the boundary are excluded
    let reach = frame.kernel.weighted_support(0.0, 1e-17);
    let margin = reach.1.max(-reach.0) + (frame.c * frame.h).abs() + 2.0 * dz;
    let ax = &grid.axes[0];
    let interior = |z: f64| z >= ax.lo + margin && z <= ax.hi() - margin;
    let interior_max = |f: &Field<f64>| {
        f.values
            .iter()
            .enumerate()
            .filter(|(i, _)| interior(ax.node(*i)))
            .fold(0.0_f64, |a, (_, x)| a.max(x.abs()))
    };
    let disc = interior_max(&k_res).max(interior_max(&phi_res));
    let tol = 10.0 * disc;
    v.measure("discretization_error", disc);
    let (mut good, mut seen) = (0u64, 0u64);
    let mut worst = 0.0_f64;
    for (i, r) in res.values.iter().enumerate() {
        let z = ax.node(i);
        if !interior(z) || (z - b).abs() <= dz * 1.000_001 {
            continue;
        }
        seen += 1;
        if sign * r >= -tol {
            good += 1;
        } else {
            worst = worst.max(-sign * r);
        }
    }
    let frac = if seen == 0 {
        0.0
    } else {
        good as f64 / seen as f64
    };
    v.domination = Some(frac);
    v.measure("worst_violation", worst);
    v.measure("nodes_checked", seen as f64);
    v.criterion(
        "sign_condition",
        frac >= 0.999,
        format!("fraction {frac:.6} over {seen} nodes, tol {tol:.2e}"),
    );
    // kink: u₊ loses slope across b (left derivative of η is λ, right is 0)
    let hq = 1e-6;
    let left = (eta(b) - eta(b - hq)) / hq;
    let right = (eta(b + hq) - eta(b)) / hq;
    let jump = sign * q * (-gamma * opts.t_eval).exp() * (right - left);
    v.measure("kink_jump", jump);
    v.criterion(
        "kink",
        if mirror { jump > 0.0 } else { jump < 0.0 } == (sign > 0.0) || q == 0.0,
        format!("slope jump {jump:.4e}"),
    );
    let mut s = Series::new("residual");
    for (i, r) in res.values.iter().enumerate() {
        s.push(ax.node(i), *r);
    }
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeOptions {
    pub run: RunOptions,
    pub eps: f64,
}

impl Default for SqueezeOptions {
    fn default() -> Self {
        SqueezeOptions {
            run: RunOptions::default(),
            eps: 0.05,
        }
    }
}

/// Entry into `[m_g − ε, M_g + ε]` on the quadrant, with the homogeneous upper envelope as a cross-check.
pub fn squeeze_experiment(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    datum: &DelayHistory<f64>,
    orientation: Orientation,
    horizon: f64,
    opts: &SqueezeOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("squeeze");
    let rep = law.analyze()?;
    v.hypothesis(
        "rho_below_one",
        rep.rho < 1.0,
        format!("rho = {:.6}", rep.rho),
    );
    v.hypothesis(
        "eps_below_m_g",
        opts.eps > 0.0 && opts.eps < rep.small_m,
        format!("eps = {}", opts.eps),
    );
    let sup0 = datum.slots.iter().fold(0.0_f64, |a, s| a.max(s.max()));
    let inf0 = datum
        .slots
        .iter()
        .fold(f64::INFINITY, |a, s| a.min(s.min()));
    v.hypothesis(
        "nonnegative_bounded",
        inf0 >= 0.0 && sup0.is_finite(),
        format!("datum in [{inf0:.4}, {sup0:.4}]"),
    );
    let grid = datum.grid().clone();
    let mut sim = Simulator::new(
        Equation::nonlinear(frame, law),
        datum.clone(),
        opts.run.solver,
    )?;
    let mut band = BandTracker::new(
        rep.small_m - opts.eps,
        rep.big_m + opts.eps,
        orientation,
        &grid,
    );
    let env = law.envelopes(sup0.max(rep.big_m))?;
    let m_ode = 200;
    let upper = delay_ode(|x| env.upper.eval(x), sup0, frame.h, horizon, m_ode);
    let total = steps_to(horizon, sim.dt());
    let mut s_sup = Series::new("sup_u");
    let mut s_env = Series::new("upper_envelope");
    let mut excess = f64::NEG_INFINITY;
    band.observe(0.0, &datum.slots[datum.m]);
    for k in 1..=total {
        sim.step()?;
        if k % opts.run.every == 0 || k == total {
            let t = sim.time();
            let f = sim.state();
            band.observe(t, &f);
            let su = f.max();
            let ue = upper.at(t);
            excess = excess.max(su - ue);
            s_sup.push(t, su);
            s_env.push(t, ue);
        }
    }
    let entry = band.entry();
    v.measure("m_g", rep.small_m);
    v.measure("big_m_g", rep.big_m);
    v.measure("entry_time", entry.unwrap_or(f64::NAN));
    v.measure("upper_envelope_excess", excess);
    v.criterion(
        "band_entered",
        entry.is_some_and(|e| e < horizon),
        format!("entry {:?}", entry),
    );
    v.criterion(
        "upper_envelope",
        excess <= 1e-6,
        format!("max(sup u - u_bar) = {excess:.3e}"),
    );
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s_sup, s_env],
    })
}

/// Constants of the persistence estimate at weight `λ'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceConstants {
    pub theta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub d2: f64,
    pub kernel_norm: f64,
}

/// `θ = e^{2h|d₂'|}[1 + h e^{−d₂'h} |g|_Lip ‖K'‖₁]`, `θ₁ = e^{|d₂'|h}/√π`, `θ₂ = 2|g|_Lip‖K'‖₁e^{2|d₂'|h}/√π`,
/// with `d₂' = p_{λ'}` and `K'` the shifted kernel weighted by `e^{−λ'·y}`.
pub fn persistence_constants(
    frame: &FrameSpec<f64>,
    lambda: &[f64],
) -> Result<PersistenceConstants> {
    let (p, q) = spectral::pq(frame, lambda)?;
    let kn = q / frame.lip;
    let h = frame.h;
    let sp = std::f64::consts::PI.sqrt();
    Ok(PersistenceConstants {
        theta: (2.0 * h * p.abs()).exp() * (1.0 + h * (-p * h).exp() * frame.lip * kn),
        theta1: (p.abs() * h).exp() / sp,
        theta2: 2.0 * frame.lip * kn * (2.0 * p.abs() * h).exp() / sp,
        d2: p,
        kernel_norm: kn,
    })
}

fn weighted_derivative_l1(f: &Field<f64>, w: &[f64]) -> f64 {
    let ax = &f.grid.axes[0];
    let v = &f.values;
    let dz = ax.spacing;
    (1..v.len() - 1)
        .map(|i| w[i] * ((v[i + 1] - v[i - 1]) / (2.0 * dz)).abs())
        .sum::<f64>()
        * dz
}

/// Weighted L¹ and L^∞ norms of the delay segments `u_{kh}` against `θ^{k+1}‖u₀‖`, and the
/// derivative estimate on the first delay interval.
pub fn persistence_check(
    frame: &FrameSpec<f64>,
    law: &BirthLaw<f64>,
    u0: &DelayHistory<f64>,
    lambda: f64,
    k_max: usize,
    solver: SolverOptions<f64>,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("persistence");
    let lam = frame.nu.iter().map(|n| n * lambda).collect::<Vec<_>>();
    let pc = persistence_constants(frame, &lam)?;
    v.measure("theta", pc.theta);
    v.measure("theta1", pc.theta1);
    v.measure("theta2", pc.theta2);
    let grid = u0.grid().clone();
    v.hypothesis("line", grid.dim() == 1, "checked on a line".into());
    let w = weights(&grid, &lam);
    let norm1 = |f: &Field<f64>| {
        f.values
            .iter()
            .zip(&w)
            .map(|(a, b)| a.abs() * b)
            .sum::<f64>()
            * grid.cell_volume()
    };
    let norm_inf = |f: &Field<f64>| {
        f.values
            .iter()
            .zip(&w)
            .fold(0.0_f64, |a, (x, b)| a.max(x.abs() * b))
    };
    let n1_0 = u0.slots.iter().map(norm1).fold(0.0, f64::max);
    let ni_0 = u0.slots.iter().map(norm_inf).fold(0.0, f64::max);
    v.measure("norm_l1_0", n1_0);
    v.measure("norm_inf_0", ni_0);
    let mut sim = Simulator::new(Equation::nonlinear(frame, law), u0.clone(), solver)?;
    let m = u0.m;
    let mut s1 = Series::new("segment_norm_l1");
    let mut si = Series::new("segment_norm_inf");
    let mut ok = true;
    let mut worst = 0.0_f64;
    let mut deriv_ok = true;
    let mut deriv_worst = 0.0_f64;
    for k in 1..=k_max {
        // the segment [kh − h, kh] starts at the last state of the previous one
        let start = sim.state();
        let (mut seg1, mut segi) = (norm1(&start), norm_inf(&start));
        for _ in 0..m {
            sim.step()?;
            let f = sim.state();
            seg1 = seg1.max(norm1(&f));
            segi = segi.max(norm_inf(&f));
            if k == 1 {
                let t = sim.time();
                let dn = weighted_derivative_l1(&f, &w);
                let bound = (pc.theta1 / t.sqrt() + t.sqrt() * pc.theta2) * n1_0;
                deriv_worst = deriv_worst.max(dn / bound.max(1e-300));
                deriv_ok &= dn <= bound;
            }
        }
        s1.push(k as f64 * frame.h, seg1);
        si.push(k as f64 * frame.h, segi);
        let b = pc.theta.powi(k as i32 + 1);
        let r = (seg1 / (b * n1_0).max(1e-300)).max(segi / (b * ni_0).max(1e-300));
        worst = worst.max(r);
        ok &= seg1 <= b * n1_0 && segi <= b * ni_0;
    }
    v.measure("worst_ratio", worst);
    v.measure("derivative_worst_ratio", deriv_worst);
    v.criterion(
        "segment_bound",
        ok,
        format!("max measured/bound {worst:.3e}"),
    );
    v.criterion(
        "derivative_bound",
        deriv_ok,
        format!("max measured/bound {deriv_worst:.3e}"),
    );
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s1, si],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedOptions {
    pub run: RunOptions,
    pub dz: f64,
    /// Margin ahead of the front and behind it.
    pub margin: f64,
    pub tolerance: f64,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            run: RunOptions {
                every: 20,
                ..RunOptions::default()
            },
            dz: 0.05,
            margin: 30.0,
            tolerance: 0.03,
        }
    }
}

/// Static-frame run from `min(κ, A e^{λ₁(c) x})`; the β level set should travel with speed `−c`.
pub fn speed_selection_experiment(
    law: &BirthLaw<f64>,
    kernel: &Kernel<f64>,
    h: f64,
    c: f64,
    beta: f64,
    horizon: f64,
    opts: &SpeedOptions,
) -> Result<Experiment> {
    let mut v = StabilityVerdict::new("speed_selection");
    let kappa = law.analyze()?.kappa;
    if !v.hypothesis(
        "beta_range",
        beta > 0.0 && beta < kappa,
        format!("beta = {beta}, kappa = {kappa}"),
    ) {
        return Ok(Experiment {
            verdict: v.finish(),
            series: vec![],
        });
    }
    let moving = FrameSpec::line(c, h, kernel.clone(), law)?;
    let roots = grid_char_roots(&moving, opts.dz)?;
    let l1 = roots.leading();
    v.measure("lambda1", l1);
    v.measure("j_c", roots.j_c as f64);
    let orientation = Orientation::of_rate(l1);
    let travel = c.abs() * horizon;
    let (lo, hi) = match orientation {
        Orientation::ZeroAtMinus => (-(travel + opts.margin), opts.margin),
        Orientation::ZeroAtPlus => (-opts.margin, travel + opts.margin),
    };
    let snap = |x: f64| (x / opts.dz).round() * opts.dz;
    let zero_fill = if roots.j_c == 1 {
        crate::evolve::Fill::WeightedLinear(l1)
    } else {
        crate::evolve::Fill::Exponential(l1)
    };
    let (fl, fh) = match orientation {
        Orientation::ZeroAtMinus => (zero_fill, crate::evolve::Fill::Value(kappa)),
        Orientation::ZeroAtPlus => (crate::evolve::Fill::Value(kappa), zero_fill),
    };
    let grid = Grid::line(snap(lo), snap(hi), opts.dz, fl, fh)?;
    let seed = crate::waves::seed_field(l1, roots.j_c, 0.5 * kappa, &grid, kappa)?;
    let hist = DelayHistory::constant(seed, h, opts.run.m)?;
    let stat = FrameSpec::line(0.0, h, kernel.clone(), law)?;
    let mut sim = Simulator::new(Equation::nonlinear(&stat, law), hist, opts.run.solver)?;
    let total = steps_to(horizon, sim.dt());
    let mut s = Series::new("level_position");
    let mut first = None;
    for k in 0..=total {
        if k > 0 {
            sim.step()?;
        }
        if k % opts.run.every == 0 || k == total {
            let f = sim.state();
            let pos = match orientation {
                Orientation::ZeroAtMinus => level_position(&f, beta),
                Orientation::ZeroAtPlus => last_crossing(&f, beta),
            };
            if !pos.is_nan() {
                first.get_or_insert(sim.time());
                s.push(sim.time(), pos);
            }
        }
    }
    let (a, b) = window_of(horizon, opts.run.window);
    let pts: Vec<(f64, f64)> =
        s.t.iter()
            .zip(&s.v)
            .filter(|(t, _)| **t >= a && **t <= b)
            .map(|(t, x)| (*t, *x))
            .collect();
    if pts.len() < 3 {
        return Err(Error::Coverage(
            "level set not tracked over the fit window".into(),
        ));
    }
    let n = pts.len() as f64;
    let (st, sx) = pts.iter().fold((0.0, 0.0), |(p, q), (t, x)| (p + t, q + x));
    let (mt, mx) = (st / n, sx / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(p, q), (t, x)| {
        (p + (t - mt) * (x - mx), q + (t - mt).powi(2))
    });
    let slope = num / den;
    let speed = -slope;
    let rel = (speed - c).abs() / c.abs();
    // |c + m(t)/t|·t = |ct + m(t)|
    let drift: Vec<f64> = pts.iter().map(|(t, x)| (c * t + x).abs()).collect();
    let d_first = drift[0];
    let d_max = drift.iter().fold(0.0_f64, |a, x| a.max(*x));
    let d_last = *drift.last().unwrap();
    v.measure("fitted_speed", speed);
    v.measure("relative_error", rel);
    v.measure("offset_first", d_first);
    v.measure("offset_last", d_last);
    v.measure("offset_max", d_max);
    v.measure("first_seen", first.unwrap_or(f64::NAN));
    v.criterion(
        "speed",
        rel <= opts.tolerance,
        format!("speed {speed:.5} vs {c:.5}"),
    );
    let bounded = d_max <= 2.0 * d_first + 2.0 + 0.02 * c.abs() * b;
    v.criterion(
        "offset_bounded",
        bounded,
        format!("|ct + m(t)| in window: first {d_first:.3}, max {d_max:.3}"),
    );
    Ok(Experiment {
        verdict: v.finish(),
        series: vec![s],
    })
}

fn last_crossing(f: &Field<f64>, beta: f64) -> f64 {
    let ax = &f.grid.axes[0];
    let v = &f.values;
    for i in (0..v.len() - 1).rev() {
        let (a, b) = (v[i] - beta, v[i + 1] - beta);
        if (a < 0.0) != (b < 0.0) {
            return ax.node(i) + ax.spacing * a / (a - b);
        }
    }
    f64::NAN
}

/// `b` with `g'(0) ∫_{b − z − ch}^∞ K = level` via the kernel tail (exposed for reporting).
pub fn tail_point(kernel: &Kernel<f64>, level: f64, side: Side) -> Result<f64> {
    crate::kernels::invert_tail(kernel, level, side)
}

/// Maximum of a profile (overshoot diagnostic).
pub fn overshoot(profile: &WaveProfile<f64>) -> f64 {
    let ax = &profile.grid().axes[0];
    let f = |z: f64| profile.eval(z);
    dense_max(&f, ax.lo, ax.hi(), ax.n, 1e-9).1 - profile.kappa
}
