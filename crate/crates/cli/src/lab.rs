//! Subcommands: build the model from a validated config, run it, write artifacts.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use semiwave::evolve::{
    grid_char_roots, grid_critical_speeds, run as run_sim, Axis, Convolution, DelayHistory,
    Equation, Field, Fill, Grid, Probe, ProbeSpec, Simulator, SolverOptions, Trajectory,
};
use semiwave::spectral::{self, FrameSpec};
use semiwave::stability_lab::{
    comparison_experiment, global_stability_experiment, local_stability_experiment,
    speed_selection_experiment, CompareOptions, Experiment, GlobalOptions, LocalOptions,
    RunOptions, SpeedOptions,
};
use semiwave::waves::{classify, compute_profile, seed_field, ProfileOptions, WaveProfile};
use semiwave::{BirthLaw, Kernel};

use crate::config::{
    Branch, ConfigError, ConvolutionKind, ExperimentConfig, Initial, ProbeConfig, SpeedSpec,
    StabilityKind,
};
use crate::output::{num, KvReport, OutDir};

#[derive(Debug)]
pub enum CliError {
    Config(Vec<ConfigError>),
    Usage(String),
    Io(std::io::Error),
    Model(semiwave::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(errs) => {
                writeln!(f, "invalid configuration ({} problems):", errs.len())?;
                for e in errs {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<semiwave::Error> for CliError {
    fn from(e: semiwave::Error) -> Self {
        CliError::Model(e)
    }
}

impl CliError {
    /// 2 for anything the user can fix in the config or command line, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use semiwave::Error as E;
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Model(E::Domain(_) | E::Config(_) | E::NotAdmissible { .. } | E::NotMonostable(_)) => 2,
            CliError::Model(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Profile,
    Simulate,
    Compare,
    Stability,
    Speedsel,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Profile => "profile",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Stability => "stability",
            Command::Speedsel => "speedsel",
            Command::Report => "report",
        }
    }
}

/// `Some(pass)` for commands that issue a verdict.
pub type Verdict = Option<bool>;

pub struct Lab {
    pub cfg: ExperimentConfig,
    pub kernel: Kernel<f64>,
    pub law: BirthLaw<f64>,
    pub kappa: f64,
    pub verbose: bool,
}

fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    } else {
        0.0
    }
}

impl Lab {
    pub fn new(cfg: ExperimentConfig, verbose: bool) -> CliResult<Self> {
        let kernel = cfg.kernel.build(cfg.frame.d)?;
        let law = cfg.birth.build()?;
        let kappa = law.analyze()?.kappa;
        Ok(Lab {
            cfg,
            kernel,
            law,
            kappa,
            verbose,
        })
    }

    fn log(&self, msg: impl fmt::Display) {
        if self.verbose {
            eprintln!("[semiwave] {msg}");
        }
    }

    fn base_frame(&self) -> CliResult<FrameSpec<f64>> {
        let f = &self.cfg.frame;
        Ok(FrameSpec::new(
            f.d,
            0.0,
            f.nu.clone(),
            f.h_delay,
            self.kernel.clone(),
            &self.law,
        )?)
    }

    /// Resolved speed; `grid_dz` selects the critical speeds of the discrete scheme at that spacing.
    pub fn speed(&self, grid_dz: Option<f64>) -> CliResult<f64> {
        match self.cfg.frame.c_speed {
            SpeedSpec::Value(c) => Ok(c),
            SpeedSpec::Critical { branch, offset } => {
                let base = self.base_frame()?;
                let (lo, hi) = match grid_dz {
                    Some(dz) if base.d == 1 => grid_critical_speeds(&base, dz)?,
                    _ => spectral::critical_speeds(&base)?,
                };
                Ok(offset
                    + match branch {
                        Branch::Lower => lo,
                        Branch::Upper => hi,
                    })
            }
        }
    }

    pub fn frame(&self, grid_dz: Option<f64>) -> CliResult<FrameSpec<f64>> {
        Ok(self.base_frame()?.with_speed(self.speed(grid_dz)?))
    }

    fn solver(&self) -> SolverOptions<f64> {
        let g = &self.cfg.grid;
        SolverOptions {
            conv: match g.convolution {
                ConvolutionKind::Direct => Convolution::Direct,
                ConvolutionKind::Fft => Convolution::Fft,
            },
            theta: g.theta,
            startup: g.startup_steps,
            ..SolverOptions::default()
        }
    }

    fn run_options(&self) -> RunOptions {
        RunOptions {
            solver: self.solver(),
            every: self.cfg.experiment.sample_every,
            window: self.cfg.experiment.fit_window,
            m: self.cfg.grid.m_per_delay,
        }
    }

    fn need_line(&self, what: &str) -> CliResult<()> {
        if self.cfg.frame.d != 1 {
            return Err(CliError::Usage(format!("{what} needs frame.d = 1")));
        }
        Ok(())
    }

    fn profile(&self) -> CliResult<(FrameSpec<f64>, WaveProfile<f64>)> {
        self.need_line("a wave profile")?;
        let g = &self.cfg.grid;
        let frame = self.frame(Some(g.dz))?;
        let opts = ProfileOptions {
            dz: g.dz,
            extent: g.z_min.zip(g.z_max),
            tol: self.cfg.experiment.profile_tol,
            pseudo_dt: self.cfg.experiment.pseudo_dt,
            ..ProfileOptions::default()
        };
        self.log(format!("relaxing the profile at c = {}", frame.c));
        let p = compute_profile(&frame, &self.law, &opts)?;
        self.log(format!("profile converged after {} steps, residual {:e}", p.steps, p.residual));
        Ok((frame, p))
    }

    /// λ₁ at a double root, the midpoint of the two grid roots otherwise, unless configured.
    fn stability_lambda(&self, frame: &FrameSpec<f64>, p: &WaveProfile<f64>) -> CliResult<f64> {
        if let Some(l) = self.cfg.experiment.lambda {
            return Ok(l);
        }
        if p.j_c == 1 {
            return Ok(p.lambda1);
        }
        let r = grid_char_roots(frame, self.cfg.grid.dz)?;
        Ok(0.5 * (r.lambda1 + r.lambda2))
    }

    /// Seeded uniform draws in `[0, 1)`, one per node.
    fn draws(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        (0..n).map(|_| rng.gen::<f64>()).collect()
    }

    /// `κ (amplitude + noise U) bump(z)`: the perturbation shape before any weight.
    fn perturbation(&self, z: &[f64]) -> Vec<f64> {
        let e = &self.cfg.experiment;
        let u = self.draws(z.len());
        z.iter()
            .zip(u)
            .map(|(z, u)| self.kappa * (e.amplitude_kappa + e.noise_kappa * u) * self.bump_at(*z))
            .collect()
    }

    fn bump_at(&self, z: f64) -> f64 {
        let e = &self.cfg.experiment;
        bump((z - e.bump_center_z) / e.bump_width_z)
    }

    /// Profile plus the weighted perturbation.
    fn perturbed_profile(&self, p: &WaveProfile<f64>, weight: impl Fn(f64) -> f64) -> CliResult<Field<f64>> {
        let z = p.nodes();
        let v: Vec<f64> = self
            .perturbation(&z)
            .iter()
            .zip(&z)
            .zip(&p.samples.values)
            .map(|((d, z), u)| u + weight(*z) * d)
            .collect();
        Ok(Field::new(p.grid().clone(), v)?)
    }

    fn default_extent(&self, frame: &FrameSpec<f64>) -> (f64, f64) {
        let g = &self.cfg.grid;
        if let (Some(a), Some(b)) = (g.z_min, g.z_max) {
            return (a, b);
        }
        let adv = 10.0 * (frame.c * frame.h).abs();
        let half = match spectral::char_roots(frame) {
            Ok(r) => 40.0 / r.leading().abs() + adv,
            Err(_) => 50.0 + adv,
        };
        let half = (half / g.dz).ceil() * g.dz;
        (-half, half)
    }

    fn probes(&self, frame: &FrameSpec<f64>) -> ProbeSpec<f64> {
        let e = &self.cfg.experiment;
        let along = |l: f64| frame.nu.iter().map(|n| n * l).collect::<Vec<f64>>();
        let mut spec = ProbeSpec::new(e.sample_every);
        for p in &e.probes {
            let probe = match *p {
                ProbeConfig::Sup => Probe::Sup,
                ProbeConfig::Min => Probe::Min,
                ProbeConfig::Max => Probe::Max,
                ProbeConfig::Level(b) => Probe::Level(b),
                ProbeConfig::Point(z) => {
                    let mut x = vec![0.0; frame.d];
                    x[0] = z;
                    Probe::Point(x)
                }
                ProbeConfig::WeightedSup(l) => Probe::WeightedSup(along(l)),
                ProbeConfig::WeightedL1(l) => Probe::WeightedL1(along(l)),
            };
            spec = spec.with(&p.to_string(), probe);
        }
        if e.snapshots {
            spec = spec.with_snapshots();
        }
        spec
    }

    pub fn spectrum(&self, out: &OutDir) -> CliResult<Verdict> {
        let frame = self.frame(None)?;
        let roots = spectral::char_roots(&frame).ok();
        let lam = self
            .cfg
            .experiment
            .lambda
            .or(roots.map(|r| r.leading()))
            .unwrap_or(0.0);
        let lv: Vec<f64> = frame.nu.iter().map(|n| n * lam).collect();
        let rep = spectral::report(&frame, &lv)?;

        let mut kv = KvReport::new();
        kv.push("c_speed", num(frame.c));
        kv.push("speed_spec", self.cfg.frame.c_speed);
        kv.push("d", frame.d);
        kv.push("h_delay", num(frame.h));
        kv.push("gprime0", num(frame.gprime0));
        kv.push("lipschitz", num(frame.lip));
        kv.push("kappa", num(self.kappa));
        match spectral::critical_speeds(&frame) {
            Ok((lo, hi)) => {
                kv.push("critical_speed_lower", num(lo));
                kv.push("critical_speed_upper", num(hi));
            }
            Err(e) => kv.push("critical_speeds", format!("unavailable ({e})")),
        }
        match roots {
            Some(r) => {
                kv.push("admissible", true);
                kv.push("lambda1", num(r.lambda1));
                kv.push("lambda2", num(r.lambda2));
                kv.push("j_c", r.j_c);
            }
            None => kv.push("admissible", false),
        }
        kv.push("lambda", num(lam));
        kv.push("p_lambda", num(rep.p_lambda));
        kv.push("q_lambda", num(rep.q_lambda));
        kv.push("e_value", num(rep.e_value));
        kv.push("gamma_lambda", num(rep.gamma_lambda));
        kv.push("eps_h", num(rep.eps_h));
        kv.push("a_lambda", num(rep.a_lambda));
        out.write("spectrum.txt", &kv.text())?;

        let e = &self.cfg.experiment;
        let reach = frame.c.abs() + 2.0;
        let (a, b) = match (e.lambda_min, e.lambda_max, roots) {
            (Some(a), Some(b), _) => (a, b),
            (_, _, Some(r)) => {
                let m = r.lambda1.abs().max(r.lambda2.abs());
                if r.lambda1 > 0.0 {
                    (0.0, 2.0 * m)
                } else {
                    (-2.0 * m, 0.0)
                }
            }
            _ => (-reach, reach),
        };
        let n = e.lambda_samples;
        let mut rows = Vec::new();
        for i in 0..n {
            let l = a + (b - a) * i as f64 / (n - 1) as f64;
            let lv: Vec<f64> = frame.nu.iter().map(|v| v * l).collect();
            if let (Ok(ev), Ok(g)) = (
                spectral::char_eval(&frame, l),
                spectral::gamma_lambda(&frame, &lv),
            ) {
                rows.push(vec![num(l), num(ev), num(g)]);
            }
        }
        out.csv("spectrum.csv", &["lambda", "e_c", "gamma_lambda"], rows)?;
        out.plot("spectrum.gp", "spectrum.csv", &[2, 3], false)?;
        Ok(None)
    }

    pub fn profile_cmd(&self, out: &OutDir) -> CliResult<Verdict> {
        let (frame, p) = self.profile()?;
        let rows = p
            .nodes()
            .into_iter()
            .zip(&p.samples.values)
            .map(|(z, v)| vec![num(z), num(*v)]);
        out.csv("profile.csv", &["z", "phi"], rows)?;
        out.plot("profile.gp", "profile.csv", &[2], false)?;
        let mut kv = KvReport::new();
        kv.push("c_speed", num(frame.c));
        kv.push("speed_spec", self.cfg.frame.c_speed);
        kv.push("lambda1", num(p.lambda1));
        kv.push("j_c", p.j_c);
        kv.push("tail_amplitude", num(p.amplitude));
        kv.push("orientation", format!("{:?}", p.orientation));
        kv.push("kappa", num(p.kappa));
        kv.push("residual", num(p.residual));
        kv.push("classification", classify(&p, &self.law).name());
        kv.push("pseudo_steps", p.steps);
        kv.push("dz", num(self.cfg.grid.dz));
        out.write("profile.txt", &kv.text())?;
        Ok(None)
    }

    fn simulate_datum(&self, frame: &FrameSpec<f64>) -> CliResult<DelayHistory<f64>> {
        let g = &self.cfg.grid;
        let e = &self.cfg.experiment;
        let (h, m) = (frame.h, g.m_per_delay);
        if e.initial == Initial::ProfileBump {
            let (_, p) = self.profile()?;
            let f = self.perturbed_profile(&p, |_| 1.0)?;
            return Ok(DelayHistory::constant(f, h, m)?);
        }
        let (lo, hi) = self.default_extent(frame);
        let a0 = Axis::new(lo, hi, g.dz, Fill::Edge, Fill::Edge)?;
        let grid = if frame.d == 1 {
            Grid { axes: vec![a0] }
        } else {
            let w = g.y_half_width;
            Grid::plane(a0, Axis::new(-w, w, g.dz, Fill::Edge, Fill::Edge)?)
        };
        let a = e.amplitude_kappa * self.kappa;
        let z = grid.axes[0].nodes();
        let noise: Vec<f64> = self
            .draws(z.len())
            .iter()
            .zip(&z)
            .map(|(u, z)| self.kappa * e.noise_kappa * u * self.bump_at(*z))
            .collect();
        let base: Vec<f64> = match e.initial {
            Initial::Step => z.iter().map(|z| if *z >= e.bump_center_z { a } else { 0.0 }).collect(),
            Initial::Bump => z.iter().map(|z| a * self.bump_at(*z)).collect(),
            Initial::Seed => {
                let r = spectral::char_roots(frame)?;
                let line = Grid::line(lo, hi, g.dz, Fill::Edge, Fill::Edge)?;
                seed_field(r.leading(), r.j_c, a, &line, self.kappa)?.values
            }
            Initial::ProfileBump => unreachable!(),
        };
        let n0 = z.len();
        let v: Vec<f64> = (0..grid.len()).map(|i| base[i % n0] + noise[i % n0]).collect();
        Ok(DelayHistory::constant(Field::new(grid, v)?, h, m)?)
    }

    pub fn simulate(&self, out: &OutDir) -> CliResult<Verdict> {
        let frame = self.frame(None)?;
        let datum = self.simulate_datum(&frame)?;
        let probes = self.probes(&frame);
        let mut sim = Simulator::new(Equation::nonlinear(&frame, &self.law), datum, self.solver())?;
        self.log(format!(
            "simulating to t = {} with dt = {}",
            self.cfg.experiment.horizon_t,
            sim.dt()
        ));
        let traj = run_sim(&mut sim, self.cfg.experiment.horizon_t, &probes)?;
        self.write_trajectory(out, &frame, &traj)?;
        Ok(None)
    }

    fn write_trajectory(&self, out: &OutDir, frame: &FrameSpec<f64>, traj: &Trajectory<f64>) -> CliResult<()> {
        let mut rows = Vec::new();
        for (k, t) in traj.times.iter().enumerate() {
            for (name, s) in &traj.series {
                rows.push(vec![num(*t), name.clone(), num(s[k])]);
            }
        }
        out.csv("trajectory.csv", &["t", "probe_name", "value"], rows)?;
        let names: Vec<String> = traj.series.iter().map(|(n, _)| n.clone()).collect();
        out.plot_long("trajectory.gp", "trajectory.csv", &names)?;
        if !traj.snapshots.is_empty() {
            let mut rows = Vec::new();
            for (t, f) in traj.times.iter().zip(&traj.snapshots) {
                for (i, u) in f.values.iter().enumerate() {
                    let mut r = vec![num(*t)];
                    r.extend(f.grid.point(i).into_iter().map(num));
                    r.push(num(*u));
                    rows.push(r);
                }
            }
            let header: &[&str] = if frame.d == 1 { &["t", "z", "u"] } else { &["t", "z", "y", "u"] };
            out.csv("snapshots.csv", header, rows)?;
        }
        let mut kv = KvReport::new();
        kv.push("c_speed", num(frame.c));
        kv.push("scheme", &traj.meta.scheme);
        kv.push("dt", num(traj.meta.dt));
        kv.push("m_per_delay", traj.meta.m);
        kv.push("nodes", traj.meta.grid.len());
        kv.push("min_value", num(traj.meta.min_value));
        kv.push("t_final", num(*traj.times.last().unwrap_or(&0.0)));
        for (name, s) in &traj.series {
            kv.push(&format!("final.{name}"), num(*s.last().unwrap_or(&f64::NAN)));
        }
        out.write("simulate.txt", &kv.text())?;
        Ok(())
    }

    fn write_experiment(&self, out: &OutDir, name: &str, header: &KvReport, ex: &Experiment) -> CliResult<Verdict> {
        let mut text = header.text();
        text += &ex.verdict.report();
        out.write(&format!("{name}.txt"), &text)?;
        for s in &ex.series {
            let file = format!("{}.csv", s.name);
            let rows = s.t.iter().zip(&s.v).map(|(t, v)| vec![num(*t), num(*v)]);
            out.csv(&file, &["t", &s.name], rows)?;
            let positive = s.v.iter().all(|v| *v > 0.0);
            out.plot(&format!("{}.gp", s.name), &file, &[2], positive)?;
        }
        Ok(Some(ex.verdict.pass))
    }

    pub fn compare(&self, out: &OutDir) -> CliResult<Verdict> {
        let (frame, p) = self.profile()?;
        // the tail rate keeps e^{-λz}|u - ψ| well conditioned on long domains
        let lam = self.cfg.experiment.lambda.unwrap_or(p.lambda1);
        let grid = Grid::pinned_to(&p.samples);
        let (h, m) = (frame.h, self.cfg.grid.m_per_delay);
        let psi = DelayHistory::constant(Field::new(grid.clone(), p.samples.values.clone())?, h, m)?;
        let pert = self.perturbed_profile(&p, |z| (lam * z).exp())?;
        let u = DelayHistory::constant(Field::new(grid, pert.values)?, h, m)?;
        let opts = CompareOptions {
            run: self.run_options(),
            ..CompareOptions::default()
        };
        self.log("running the comparison experiment");
        let ex = comparison_experiment(&frame, &self.law, &u, &psi, &[lam], self.cfg.experiment.horizon_t, &opts)?;
        let mut kv = KvReport::new();
        kv.push("experiment", "compare");
        kv.push("c_speed", num(frame.c));
        kv.push("lambda", num(lam));
        kv.push("horizon_t", num(self.cfg.experiment.horizon_t));
        self.write_experiment(out, "compare", &kv, &ex)
    }

    pub fn stability(&self, out: &OutDir) -> CliResult<Verdict> {
        let (frame, p) = self.profile()?;
        let lam = self.stability_lambda(&frame, &p)?;
        let e = &self.cfg.experiment;
        let run = self.run_options();
        let ex = match e.stability {
            StabilityKind::Global => {
                let f = self.perturbed_profile(&p, |_| 1.0)?;
                let datum = DelayHistory::constant(f, frame.h, run.m)?;
                let opts = GlobalOptions {
                    run,
                    ..GlobalOptions::default()
                };
                self.log("running the global stability experiment");
                global_stability_experiment(&frame, &self.law, &p, lam, &datum, e.horizon_t, &opts)?
            }
            StabilityKind::Local => {
                let opts = LocalOptions {
                    run,
                    bump: (e.bump_center_z, e.bump_width_z),
                    ..LocalOptions::default()
                };
                self.log("running the local stability experiment");
                local_stability_experiment(&frame, &self.law, &p, lam, e.eps, e.horizon_t, &opts)?
            }
        };
        let mut kv = KvReport::new();
        kv.push("experiment", "stability");
        kv.push("c_speed", num(frame.c));
        kv.push("lambda", num(lam));
        kv.push("horizon_t", num(e.horizon_t));
        self.write_experiment(out, "stability", &kv, &ex)
    }

    pub fn speedsel(&self, out: &OutDir) -> CliResult<Verdict> {
        self.need_line("speed selection")?;
        let c = self.speed(None)?;
        let e = &self.cfg.experiment;
        let beta = e.beta_level.unwrap_or(0.5 * self.kappa);
        let opts = SpeedOptions {
            run: self.run_options(),
            dz: self.cfg.grid.dz,
            ..SpeedOptions::default()
        };
        self.log("running the speed selection experiment");
        let ex = speed_selection_experiment(&self.law, &self.kernel, self.cfg.frame.h_delay, c, beta, e.horizon_t, &opts)?;
        let mut kv = KvReport::new();
        kv.push("experiment", "speedsel");
        kv.push("c_speed", num(c));
        kv.push("beta_level", num(beta));
        kv.push("horizon_t", num(e.horizon_t));
        self.write_experiment(out, "speedsel", &kv, &ex)
    }

    fn dispatch(&self, cmd: Command, out: &OutDir) -> CliResult<Verdict> {
        match cmd {
            Command::Spectrum => self.spectrum(out),
            Command::Profile => self.profile_cmd(out),
            Command::Simulate => self.simulate(out),
            Command::Compare => self.compare(out),
            Command::Stability => self.stability(out),
            Command::Speedsel => self.speedsel(out),
            Command::Report => self.report(out),
        }
    }

    /// Every other command, concurrently, each in its own subdirectory, plus a summary.
    pub fn report(&self, out: &OutDir) -> CliResult<Verdict> {
        let mut cmds = vec![Command::Spectrum, Command::Simulate];
        if self.cfg.frame.d == 1 {
            cmds.extend([Command::Profile, Command::Compare, Command::Stability, Command::Speedsel]);
        }
        let results: Vec<(Command, CliResult<Verdict>)> = cmds
            .par_iter()
            .map(|&c| {
                let r = out.sub(c.name()).map_err(CliError::from).and_then(|d| {
                    let r = self.dispatch(c, &d);
                    finish_dir(&d, &r)?;
                    r
                });
                (c, r)
            })
            .collect();
        let mut kv = KvReport::new();
        let mut worst = 0;
        let mut pass = true;
        for (c, r) in &results {
            let line = match r {
                Ok(None) => "done".to_string(),
                Ok(Some(true)) => "pass".to_string(),
                Ok(Some(false)) => {
                    pass = false;
                    "fail".to_string()
                }
                Err(e) => {
                    worst = worst.max(e.exit_code());
                    format!("error ({})", e.to_string().trim_end())
                }
            };
            kv.push(c.name(), line);
        }
        out.write("summary.txt", &kv.text())?;
        if worst > 0 {
            let e = results.into_iter().find_map(|(_, r)| r.err().filter(|e| e.exit_code() == worst));
            return Err(e.expect("a failing command was recorded"));
        }
        Ok(Some(pass))
    }

    pub fn run(&self, cmd: Command, out: &OutDir) -> CliResult<Verdict> {
        let r = self.dispatch(cmd, out);
        finish_dir(out, &r)?;
        r
    }
}

/// Writes the diagnostic for a numerical failure, then the manifest.
fn finish_dir(out: &OutDir, r: &CliResult<Verdict>) -> CliResult<()> {
    if let Err(e) = r {
        if e.exit_code() == 3 {
            out.write("diagnostic.txt", &format!("{e}\n"))?;
        }
    }
    out.manifest()?;
    Ok(())
}
