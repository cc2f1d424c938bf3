//! Experiment configuration: TOML in, validated structs out, normalized TOML back.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use semiwave::{BirthLaw, Kernel};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm {
    Gaussian { shift_z: f64, variance_z2: f64 },
    Uniform { lo_z: f64, hi_z: f64 },
    Laplace { shift_z: f64, scale_z: f64 },
    ShiftedHeat { rho: f64 },
    ShiftedHeatLiteral { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    pub form: KernelForm,
    /// Variance of the centred Gaussian factor along the second axis when `d = 2`.
    pub transverse_variance_z2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BirthBlock {
    Nicholson { p: f64 },
    MackeyGlass { p: f64, n: f64 },
    KppQuadratic { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    Lower,
    Upper,
}

/// A literal speed, or a critical speed plus an offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedSpec {
    Value(f64),
    Critical { branch: Branch, offset: f64 },
}

impl fmt::Display for SpeedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpeedSpec::Value(c) => write!(f, "{c}"),
            SpeedSpec::Critical { branch, offset } => {
                let name = match branch {
                    Branch::Upper => "critical",
                    Branch::Lower => "critical_lower",
                };
                if offset == 0.0 {
                    write!(f, "{name}")
                } else if offset > 0.0 {
                    write!(f, "{name}+{offset}")
                } else {
                    write!(f, "{name}{offset}")
                }
            }
        }
    }
}

impl FromStr for SpeedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (branch, rest) = if let Some(r) = s.strip_prefix("critical_lower") {
            (Branch::Lower, r)
        } else if let Some(r) = s.strip_prefix("critical") {
            (Branch::Upper, r)
        } else {
            return s
                .parse::<f64>()
                .ok()
                .filter(|c| c.is_finite())
                .map(SpeedSpec::Value)
                .ok_or_else(|| format!("`{s}` is neither a number nor critical[+-offset]"));
        };
        let rest = rest.trim();
        let offset = if rest.is_empty() {
            0.0
        } else {
            let (sign, num) = match rest.split_at(1) {
                ("+", n) => (1.0, n),
                ("-", n) => (-1.0, n),
                _ => return Err(format!("expected +offset or -offset after the critical speed in `{s}`")),
            };
            let v: f64 = num
                .trim()
                .parse()
                .map_err(|_| format!("bad offset `{}` in `{s}`", num.trim()))?;
            if !v.is_finite() {
                return Err(format!("bad offset in `{s}`"));
            }
            sign * v
        };
        Ok(SpeedSpec::Critical { branch, offset })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBlock {
    pub d: usize,
    pub c_speed: SpeedSpec,
    pub nu: Vec<f64>,
    pub h_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionKind {
    Direct,
    Fft,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBlock {
    pub dz: f64,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    pub y_half_width: f64,
    pub m_per_delay: usize,
    pub theta: f64,
    pub startup_steps: usize,
    pub convolution: ConvolutionKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeConfig {
    Sup,
    Min,
    Max,
    Level(f64),
    Point(f64),
    WeightedSup(f64),
    WeightedL1(f64),
}

impl fmt::Display for ProbeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeConfig::Sup => write!(f, "sup"),
            ProbeConfig::Min => write!(f, "min"),
            ProbeConfig::Max => write!(f, "max"),
            ProbeConfig::Level(b) => write!(f, "level:{b}"),
            ProbeConfig::Point(z) => write!(f, "point:{z}"),
            ProbeConfig::WeightedSup(l) => write!(f, "weighted_sup:{l}"),
            ProbeConfig::WeightedL1(l) => write!(f, "weighted_l1:{l}"),
        }
    }
}

impl FromStr for ProbeConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = || -> Result<f64, String> {
            arg.ok_or_else(|| format!("probe `{name}` needs a value, as in `{name}:0.5`"))?
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad value in probe `{s}`"))
        };
        let p = match name {
            "sup" => ProbeConfig::Sup,
            "min" => ProbeConfig::Min,
            "max" => ProbeConfig::Max,
            "level" => ProbeConfig::Level(num()?),
            "point" => ProbeConfig::Point(num()?),
            "weighted_sup" => ProbeConfig::WeightedSup(num()?),
            "weighted_l1" => ProbeConfig::WeightedL1(num()?),
            _ => return Err(format!("unknown probe `{name}`")),
        };
        if arg.is_some() && matches!(p, ProbeConfig::Sup | ProbeConfig::Min | ProbeConfig::Max) {
            return Err(format!("probe `{name}` takes no value"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Step,
    Bump,
    Seed,
    ProfileBump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityKind {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBlock {
    pub name: Option<String>,
    pub horizon_t: f64,
    pub sample_every: usize,
    pub probes: Vec<ProbeConfig>,
    pub snapshots: bool,
    pub initial: Initial,
    /// Perturbation size in units of κ.
    pub amplitude_kappa: f64,
    pub bump_center_z: f64,
    pub bump_width_z: f64,
    /// Seeded uniform noise inside the bump, in units of κ.
    pub noise_kappa: f64,
    pub lambda: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda_samples: usize,
    pub beta_level: Option<f64>,
    pub eps: f64,
    pub stability: StabilityKind,
    pub profile_tol: f64,
    pub pseudo_dt: f64,
    pub fit_window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub kernel: KernelBlock,
    pub birth: BirthBlock,
    pub frame: FrameBlock,
    pub grid: GridBlock,
    pub experiment: ExperimentBlock,
}

const INITIALS: [(&str, Initial); 4] = [
    ("step", Initial::Step),
    ("bump", Initial::Bump),
    ("seed", Initial::Seed),
    ("profile_bump", Initial::ProfileBump),
];

const STABILITY: [(&str, StabilityKind); 2] =
    [("global", StabilityKind::Global), ("local", StabilityKind::Local)];

const CONVOLUTIONS: [(&str, ConvolutionKind); 2] =
    [("direct", ConvolutionKind::Direct), ("fft", ConvolutionKind::Fft)];

fn name_of<T: PartialEq + Copy>(table: &[(&'static str, T)], v: T) -> &'static str {
    table.iter().find(|(_, x)| *x == v).unwrap().0
}

/// One table of the document; remembers which keys were read so the rest can be reported.
struct Section<'a> {
    path: String,
    table: Option<&'a Table>,
    known: Vec<&'static str>,
    lenient: bool,
    errors: Vec<ConfigError>,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: Option<&'a Table>) -> Self {
        Section {
            path: path.to_string(),
            table,
            known: Vec::new(),
            lenient: false,
            errors: Vec::new(),
        }
    }

    fn key_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn err(&mut self, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: self.key_path(key),
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.table.and_then(|t| t.get(key))
    }

    fn f64_opt(&mut self, key: &'static str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(x) if x.is_finite() => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            v => {
                self.err(key, format!("expected a finite number, got {v}"));
                None
            }
        }
    }

    fn f64_or(&mut self, key: &'static str, default: f64) -> f64 {
        self.f64_opt(key).unwrap_or(default)
    }

    fn f64_req(&mut self, key: &'static str) -> f64 {
        let present = self.table.is_some_and(|t| t.contains_key(key));
        let v = self.f64_opt(key);
        if !present {
            self.err(key, "missing value");
        }
        v.unwrap_or(f64::NAN)
    }

    fn require(&mut self, key: &str, v: f64, ok: bool, rule: &str) {
        if !v.is_nan() && !ok {
            self.err(key, format!("{v} is out of range: must be {rule}"));
        }
    }

    fn usize_or(&mut self, key: &'static str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(v) => {
                self.err(key, format!("expected a non-negative integer, got {v}"));
                default
            }
        }
    }

    fn bool_or(&mut self, key: &'static str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.err(key, format!("expected true or false, got {v}"));
                default
            }
        }
    }

    fn str_opt(&mut self, key: &'static str) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            v => {
                self.err(key, format!("expected a string, got {v}"));
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &'static str, table: &[(&'static str, T)], default: T) -> T {
        let Some(s) = self.str_opt(key) else {
            return default;
        };
        match table.iter().find(|(n, _)| *n == s) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
                self.err(key, format!("unknown value `{s}`, expected one of {names:?}"));
                default
            }
        }
    }

    fn f64_list(&mut self, key: &'static str) -> Option<Vec<f64>> {
        let v = self.raw(key)?;
        let parsed = v.as_array().and_then(|a| {
            a.iter()
                .map(|x| match x {
                    Value::Float(f) if f.is_finite() => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect::<Option<Vec<f64>>>()
        });
        if parsed.is_none() {
            self.err(key, format!("expected an array of numbers, got {v}"));
        }
        parsed
    }

    fn str_list(&mut self, key: &'static str) -> Option<Vec<&'a str>> {
        let v = self.raw(key)?;
        let parsed = v
            .as_array()
            .and_then(|a| a.iter().map(|x| x.as_str()).collect::<Option<Vec<&str>>>());
        if parsed.is_none() {
            self.err(key, format!("expected an array of strings, got {v}"));
        }
        parsed
    }

    fn finish(mut self, out: &mut Vec<ConfigError>) {
        if let (Some(t), false) = (self.table, self.lenient) {
            for k in t.keys() {
                if !self.known.contains(&k.as_str()) {
                    let p = self.key_path(k);
                    self.errors.push(ConfigError {
                        path: p,
                        message: "unknown key".into(),
                    });
                }
            }
        }
        out.append(&mut self.errors);
    }
}

fn block<'a>(root: &'a Table, name: &str, required: bool, errors: &mut Vec<ConfigError>) -> Option<&'a Table> {
    match root.get(name) {
        Some(Value::Table(t)) => Some(t),
        Some(v) => {
            errors.push(ConfigError {
                path: name.into(),
                message: format!("expected a table, got {v}"),
            });
            None
        }
        None => {
            if required {
                errors.push(ConfigError {
                    path: name.into(),
                    message: "missing block".into(),
                });
            }
            None
        }
    }
}

fn parse_kernel(t: Option<&Table>, errors: &mut Vec<ConfigError>) -> KernelBlock {
    let mut s = Section::new("kernel", t);
    let form = s.str_opt("form").unwrap_or("gaussian");
    let form = match form {
        "gaussian" => {
            let shift_z = s.f64_or("shift_z", 0.0);
            let variance_z2 = s.f64_or("variance_z2", 1.0);
            s.require("variance_z2", variance_z2, variance_z2 > 0.0, "> 0");
            KernelForm::Gaussian { shift_z, variance_z2 }
        }
        "uniform" => {
            let lo_z = s.f64_req("lo_z");
            let hi_z = s.f64_req("hi_z");
            s.require("hi_z", hi_z, !(hi_z <= lo_z), "> kernel.lo_z");
            KernelForm::Uniform { lo_z, hi_z }
        }
        "laplace" => {
            let shift_z = s.f64_or("shift_z", 0.0);
            let scale_z = s.f64_or("scale_z", 1.0);
            s.require("scale_z", scale_z, scale_z > 0.0, "> 0");
            KernelForm::Laplace { shift_z, scale_z }
        }
        "shifted_heat" | "shifted_heat_literal" => {
            let rho = s.f64_req("rho");
            s.require("rho", rho, rho > 0.0, "> 0");
            if form == "shifted_heat" {
                KernelForm::ShiftedHeat { rho }
            } else {
                KernelForm::ShiftedHeatLiteral { rho }
            }
        }
        other => {
            s.err(
                "form",
                format!("unknown kernel `{other}`, expected gaussian, uniform, laplace, shifted_heat or shifted_heat_literal"),
            );
            s.lenient = true;
            KernelForm::Gaussian {
                shift_z: 0.0,
                variance_z2: 1.0,
            }
        }
    };
    let transverse_variance_z2 = s.f64_or("transverse_variance_z2", 1.0);
    s.require(
        "transverse_variance_z2",
        transverse_variance_z2,
        transverse_variance_z2 > 0.0,
        "> 0",
    );
    s.finish(errors);
    KernelBlock {
        form,
        transverse_variance_z2,
    }
}

fn parse_birth(t: Option<&Table>, errors: &mut Vec<ConfigError>) -> BirthBlock {
    let mut s = Section::new("birth", t);
    let law = s.str_opt("law").unwrap_or("nicholson");
    let b = match law {
        "nicholson" => {
            let p = s.f64_req("p");
            s.require("p", p, p > 1.0, "> 1");
            BirthBlock::Nicholson { p }
        }
        "mackey_glass" => {
            let p = s.f64_req("p");
            let n = s.f64_req("n");
            s.require("p", p, p > 1.0, "> 1");
            s.require("n", n, n > 0.0, "> 0");
            BirthBlock::MackeyGlass { p, n }
        }
        "kpp_quadratic" => {
            let r = s.f64_req("r");
            s.require("r", r, r > 1.0, "> 1");
            BirthBlock::KppQuadratic { r }
        }
        other => {
            s.err(
                "law",
                format!("unknown law `{other}`, expected nicholson, mackey_glass or kpp_quadratic"),
            );
            s.lenient = true;
            BirthBlock::Nicholson { p: 2.0 }
        }
    };
    s.finish(errors);
    b
}

fn parse_frame(t: Option<&Table>, errors: &mut Vec<ConfigError>) -> FrameBlock {
    let mut s = Section::new("frame", t);
    let d = s.usize_or("d", 1);
    if d != 1 && d != 2 {
        s.err("d", format!("{d} is out of range: must be 1 or 2"));
    }
    let c_speed = match s.raw("c_speed") {
        None => SpeedSpec::Critical {
            branch: Branch::Upper,
            offset: 0.5,
        },
        Some(Value::Float(c)) if c.is_finite() => SpeedSpec::Value(*c),
        Some(Value::Integer(c)) => SpeedSpec::Value(*c as f64),
        Some(Value::String(x)) => match x.parse() {
            Ok(v) => v,
            Err(e) => {
                s.err("c_speed", e);
                SpeedSpec::Value(0.0)
            }
        },
        Some(v) => {
            s.err("c_speed", format!("expected a number or \"critical+offset\", got {v}"));
            SpeedSpec::Value(0.0)
        }
    };
    let nu = s.f64_list("nu").unwrap_or_else(|| {
        let mut e = vec![0.0; d.clamp(1, 2)];
        e[0] = 1.0;
        e
    });
    if (d == 1 || d == 2) && nu.len() != d {
        s.err("nu", format!("has {} components but frame.d = {d}", nu.len()));
    } else {
        let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            s.err("nu", format!("|nu| = {norm}, must be a unit vector"));
        }
    }
    let h_delay = s.f64_or("h_delay", 1.0);
    s.require("h_delay", h_delay, h_delay > 0.0, "> 0");
    s.finish(errors);
    FrameBlock {
        d,
        c_speed,
        nu,
        h_delay,
    }
}

fn parse_grid(t: Option<&Table>, errors: &mut Vec<ConfigError>) -> GridBlock {
    let mut s = Section::new("grid", t);
    let dz = s.f64_or("dz", 0.05);
    s.require("dz", dz, dz > 0.0, "> 0");
    let z_min = s.f64_opt("z_min");
    let z_max = s.f64_opt("z_max");
    match (z_min, z_max) {
        (Some(a), Some(b)) if !(a < b) => s.err("z_max", format!("{b} must exceed grid.z_min = {a}")),
        (Some(_), None) => s.err("z_max", "missing value (z_min and z_max come together)"),
        (None, Some(_)) => s.err("z_min", "missing value (z_min and z_max come together)"),
        _ => {}
    }
    let y_half_width = s.f64_or("y_half_width", 16.0);
    s.require("y_half_width", y_half_width, y_half_width > 0.0, "> 0");
    let m_per_delay = s.usize_or("m_per_delay", 20);
    if m_per_delay == 0 {
        s.err("m_per_delay", "0 is out of range: must be >= 1");
    }
    let theta = s.f64_or("theta", 0.5);
    s.require("theta", theta, (0.0..=1.0).contains(&theta), "in [0, 1]");
    let startup_steps = s.usize_or("startup_steps", 2);
    let convolution = s.choice("convolution", &CONVOLUTIONS, ConvolutionKind::Direct);
    s.finish(errors);
    GridBlock {
        dz,
        z_min,
        z_max,
        y_half_width,
        m_per_delay,
        theta,
        startup_steps,
        convolution,
    }
}

fn parse_experiment(t: Option<&Table>, errors: &mut Vec<ConfigError>) -> ExperimentBlock {
    let mut s = Section::new("experiment", t);
    let name = s.str_opt("name").map(str::to_string);
    if let Some(n) = &name {
        if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            s.err("name", format!("`{n}` must be non-empty and use only letters, digits, `_` and `-`"));
        }
    }
    let horizon_t = s.f64_or("horizon_t", 50.0);
    s.require("horizon_t", horizon_t, horizon_t > 0.0, "> 0");
    let sample_every = s.usize_or("sample_every", 10);
    if sample_every == 0 {
        s.err("sample_every", "0 is out of range: must be >= 1");
    }
    let probes = match s.str_list("probes") {
        None => vec![ProbeConfig::Sup, ProbeConfig::Min, ProbeConfig::Max],
        Some(list) => {
            let mut out = Vec::new();
            for (i, p) in list.iter().enumerate() {
                match p.parse() {
                    Ok(p) => out.push(p),
                    Err(e) => s.err(&format!("probes[{i}]"), e),
                }
            }
            out
        }
    };
    let snapshots = s.bool_or("snapshots", false);
    let initial = s.choice("initial", &INITIALS, Initial::ProfileBump);
    let amplitude_kappa = s.f64_or("amplitude_kappa", 0.3);
    s.require("amplitude_kappa", amplitude_kappa, amplitude_kappa >= 0.0, ">= 0");
    let bump_center_z = s.f64_or("bump_center_z", 0.0);
    let bump_width_z = s.f64_or("bump_width_z", 3.0);
    s.require("bump_width_z", bump_width_z, bump_width_z > 0.0, "> 0");
    let noise_kappa = s.f64_or("noise_kappa", 0.0);
    s.require("noise_kappa", noise_kappa, noise_kappa >= 0.0, ">= 0");
    let lambda = s.f64_opt("lambda");
    let lambda_min = s.f64_opt("lambda_min");
    let lambda_max = s.f64_opt("lambda_max");
    if let (Some(a), Some(b)) = (lambda_min, lambda_max) {
        if !(a < b) {
            s.err("lambda_max", format!("{b} must exceed experiment.lambda_min = {a}"));
        }
    }
    let lambda_samples = s.usize_or("lambda_samples", 201);
    if lambda_samples < 2 {
        s.err("lambda_samples", format!("{lambda_samples} is out of range: must be >= 2"));
    }
    let beta_level = s.f64_opt("beta_level");
    if let Some(b) = beta_level {
        s.require("beta_level", b, b > 0.0, "> 0");
    }
    let eps = s.f64_or("eps", 0.1);
    s.require("eps", eps, eps > 0.0, "> 0");
    let stability = s.choice("stability", &STABILITY, StabilityKind::Global);
    let profile_tol = s.f64_or("profile_tol", 1e-9);
    s.require("profile_tol", profile_tol, profile_tol > 0.0, "> 0");
    let pseudo_dt = s.f64_or("pseudo_dt", 5.0);
    s.require("pseudo_dt", pseudo_dt, pseudo_dt > 0.0, "> 0");
    let fit_window = match s.f64_list("fit_window") {
        None => (0.4, 0.95),
        Some(w) if w.len() == 2 && 0.0 <= w[0] && w[0] < w[1] && w[1] <= 1.0 => (w[0], w[1]),
        Some(w) => {
            s.err("fit_window", format!("{w:?} must be two fractions 0 <= a < b <= 1"));
            (0.4, 0.95)
        }
    };
    s.finish(errors);
    ExperimentBlock {
        name,
        horizon_t,
        sample_every,
        probes,
        snapshots,
        initial,
        amplitude_kappa,
        bump_center_z,
        bump_width_z,
        noise_kappa,
        lambda,
        lambda_min,
        lambda_max,
        lambda_samples,
        beta_level,
        eps,
        stability,
        profile_tol,
        pseudo_dt,
        fit_window,
    }
}

impl KernelBlock {
    /// The kernel along the first axis.
    pub fn line_kernel(&self) -> semiwave::Result<Kernel<f64>> {
        match self.form {
            KernelForm::Gaussian { shift_z, variance_z2 } => Kernel::gaussian(shift_z, variance_z2),
            KernelForm::Uniform { lo_z, hi_z } => Kernel::uniform(lo_z, hi_z),
            KernelForm::Laplace { shift_z, scale_z } => Kernel::laplace(shift_z, scale_z),
            KernelForm::ShiftedHeat { rho } => Kernel::shifted_heat(rho),
            KernelForm::ShiftedHeatLiteral { rho } => Kernel::shifted_heat_literal(rho),
        }
    }

    pub fn build(&self, d: usize) -> semiwave::Result<Kernel<f64>> {
        let k = self.line_kernel()?;
        if d == 1 {
            Ok(k)
        } else {
            Kernel::tensor(vec![k, Kernel::gaussian(0.0, self.transverse_variance_z2)?])
        }
    }
}

impl BirthBlock {
    pub fn build(&self) -> semiwave::Result<BirthLaw<f64>> {
        match *self {
            BirthBlock::Nicholson { p } => BirthLaw::nicholson(p),
            BirthBlock::MackeyGlass { p, n } => BirthLaw::mackey_glass(p, n),
            BirthBlock::KppQuadratic { r } => BirthLaw::kpp_quadratic(r),
        }
    }
}

/// Parses and validates a configuration document, reporting every problem found.
pub fn parse_str(text: &str) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        vec![ConfigError {
            path: "<document>".into(),
            message: e.message().to_string(),
        }]
    })?;
    let mut errors = Vec::new();
    let kt = block(&root, "kernel", true, &mut errors);
    let bt = block(&root, "birth", true, &mut errors);
    let ft = block(&root, "frame", true, &mut errors);
    let gt = block(&root, "grid", false, &mut errors);
    let et = block(&root, "experiment", false, &mut errors);

    let mut top = Section::new("", Some(&root));
    let seed = match top.raw("seed") {
        None => 0,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(v) => {
            top.err("seed", format!("expected a non-negative integer, got {v}"));
            0
        }
    };
    for k in ["kernel", "birth", "frame", "grid", "experiment"] {
        top.known.push(k);
    }
    top.finish(&mut errors);

    let n_before = errors.len();
    let kernel = parse_kernel(kt, &mut errors);
    let birth = parse_birth(bt, &mut errors);
    let frame = parse_frame(ft, &mut errors);
    let grid = parse_grid(gt, &mut errors);
    let experiment = parse_experiment(et, &mut errors);

    // cross-checks against the model constructors, only once the fields themselves are sound
    if errors.len() == n_before && kt.is_some() && bt.is_some() && ft.is_some() {
        if let Err(e) = kernel.build(frame.d) {
            errors.push(ConfigError {
                path: "kernel".into(),
                message: e.to_string(),
            });
        }
        match birth.build().and_then(|l| l.analyze()) {
            Ok(rep) => {
                if let Some(b) = experiment.beta_level {
                    if !(b < rep.kappa) {
                        errors.push(ConfigError {
                            path: "experiment.beta_level".into(),
                            message: format!("{b} is out of range: must be below kappa = {}", rep.kappa),
                        });
                    }
                }
            }
            Err(e) => errors.push(ConfigError {
                path: "birth".into(),
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(ExperimentConfig {
            seed,
            kernel,
            birth,
            frame,
            grid,
            experiment,
        })
    } else {
        Err(errors)
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigError {
            path: path.display().to_string(),
            message: e.to_string(),
        }]
    })?;
    parse_str(&text)
}

fn put(t: &mut Table, k: &str, v: impl Into<Value>) {
    t.insert(k.to_string(), v.into());
}

impl ExperimentConfig {
    /// Normalized document with every default written out.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        put(&mut root, "seed", self.seed as i64);

        let mut k = Table::new();
        match self.kernel.form {
            KernelForm::Gaussian { shift_z, variance_z2 } => {
                put(&mut k, "form", "gaussian");
                put(&mut k, "shift_z", shift_z);
                put(&mut k, "variance_z2", variance_z2);
            }
            KernelForm::Uniform { lo_z, hi_z } => {
                put(&mut k, "form", "uniform");
                put(&mut k, "lo_z", lo_z);
                put(&mut k, "hi_z", hi_z);
            }
            KernelForm::Laplace { shift_z, scale_z } => {
                put(&mut k, "form", "laplace");
                put(&mut k, "shift_z", shift_z);
                put(&mut k, "scale_z", scale_z);
            }
            KernelForm::ShiftedHeat { rho } => {
                put(&mut k, "form", "shifted_heat");
                put(&mut k, "rho", rho);
            }
            KernelForm::ShiftedHeatLiteral { rho } => {
                put(&mut k, "form", "shifted_heat_literal");
                put(&mut k, "rho", rho);
            }
        }
        put(&mut k, "transverse_variance_z2", self.kernel.transverse_variance_z2);
        put(&mut root, "kernel", k);

        let mut b = Table::new();
        match self.birth {
            BirthBlock::Nicholson { p } => {
                put(&mut b, "law", "nicholson");
                put(&mut b, "p", p);
            }
            BirthBlock::MackeyGlass { p, n } => {
                put(&mut b, "law", "mackey_glass");
                put(&mut b, "p", p);
                put(&mut b, "n", n);
            }
            BirthBlock::KppQuadratic { r } => {
                put(&mut b, "law", "kpp_quadratic");
                put(&mut b, "r", r);
            }
        }
        put(&mut root, "birth", b);

        let mut f = Table::new();
        put(&mut f, "d", self.frame.d as i64);
        match self.frame.c_speed {
            SpeedSpec::Value(c) => put(&mut f, "c_speed", c),
            s => put(&mut f, "c_speed", s.to_string()),
        }
        put(&mut f, "nu", Value::Array(self.frame.nu.iter().map(|v| Value::Float(*v)).collect()));
        put(&mut f, "h_delay", self.frame.h_delay);
        put(&mut root, "frame", f);

        let g = &self.grid;
        let mut gt = Table::new();
        put(&mut gt, "dz", g.dz);
        if let (Some(a), Some(b)) = (g.z_min, g.z_max) {
            put(&mut gt, "z_min", a);
            put(&mut gt, "z_max", b);
        }
        put(&mut gt, "y_half_width", g.y_half_width);
        put(&mut gt, "m_per_delay", g.m_per_delay as i64);
        put(&mut gt, "theta", g.theta);
        put(&mut gt, "startup_steps", g.startup_steps as i64);
        put(&mut gt, "convolution", name_of(&CONVOLUTIONS, g.convolution));
        put(&mut root, "grid", gt);

        let e = &self.experiment;
        let mut et = Table::new();
        if let Some(n) = &e.name {
            put(&mut et, "name", n.as_str());
        }
        put(&mut et, "horizon_t", e.horizon_t);
        put(&mut et, "sample_every", e.sample_every as i64);
        put(
            &mut et,
            "probes",
            Value::Array(e.probes.iter().map(|p| Value::String(p.to_string())).collect()),
        );
        put(&mut et, "snapshots", e.snapshots);
        put(&mut et, "initial", name_of(&INITIALS, e.initial));
        put(&mut et, "amplitude_kappa", e.amplitude_kappa);
        put(&mut et, "bump_center_z", e.bump_center_z);
        put(&mut et, "bump_width_z", e.bump_width_z);
        put(&mut et, "noise_kappa", e.noise_kappa);
        for (key, v) in [
            ("lambda", e.lambda),
            ("lambda_min", e.lambda_min),
            ("lambda_max", e.lambda_max),
            ("beta_level", e.beta_level),
        ] {
            if let Some(v) = v {
                put(&mut et, key, v);
            }
        }
        put(&mut et, "lambda_samples", e.lambda_samples as i64);
        put(&mut et, "eps", e.eps);
        put(&mut et, "stability", name_of(&STABILITY, e.stability));
        put(&mut et, "profile_tol", e.profile_tol);
        put(&mut et, "pseudo_dt", e.pseudo_dt);
        put(
            &mut et,
            "fit_window",
            Value::Array(vec![Value::Float(e.fit_window.0), Value::Float(e.fit_window.1)]),
        );
        put(&mut root, "experiment", et);

        toml::to_string(&root).expect("tables of plain values always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[kernel]\n[birth]\np = 2.0\n[frame]\n";

    #[test]
    fn minimal_document_fills_defaults() {
        let c = parse_str(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.kernel.form, KernelForm::Gaussian { shift_z: 0.0, variance_z2: 1.0 });
        assert_eq!(c.frame.d, 1);
        assert_eq!(c.frame.nu, vec![1.0]);
        assert_eq!(c.grid.dz, 0.05);
        assert_eq!(c.grid.m_per_delay, 20);
        assert_eq!(c.experiment.fit_window, (0.4, 0.95));
        assert_eq!(c.experiment.probes.len(), 3);
    }

    #[test]
    fn speed_grammar() {
        assert_eq!("1.5".parse::<SpeedSpec>(), Ok(SpeedSpec::Value(1.5)));
        assert_eq!(
            "critical+0.5".parse::<SpeedSpec>(),
            Ok(SpeedSpec::Critical { branch: Branch::Upper, offset: 0.5 })
        );
        assert_eq!(
            "critical_lower - 0.25".parse::<SpeedSpec>(),
            Ok(SpeedSpec::Critical { branch: Branch::Lower, offset: -0.25 })
        );
        assert!("critical*2".parse::<SpeedSpec>().is_err());
        assert!("fast".parse::<SpeedSpec>().is_err());
        for s in ["critical", "critical+0.5", "critical_lower-1.25", "2.5"] {
            assert_eq!(s.parse::<SpeedSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn probe_grammar() {
        assert_eq!("level:0.5".parse::<ProbeConfig>(), Ok(ProbeConfig::Level(0.5)));
        assert!("level".parse::<ProbeConfig>().is_err());
        assert!("sup:1".parse::<ProbeConfig>().is_err());
        assert!("median".parse::<ProbeConfig>().is_err());
        for s in ["sup", "point:-3", "weighted_l1:0.75"] {
            assert_eq!(s.parse::<ProbeConfig>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn negative_delay_is_a_single_error() {
        let e = parse_str("[kernel]\n[birth]\np = 2.0\n[frame]\nh_delay = -1.0\n").unwrap_err();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].path, "frame.h_delay");
    }

    #[test]
    fn every_error_is_collected() {
        let text = "seeds = 3\n[kernel]\nform = \"gaussian\"\nvariance_z2 = 0\ncolour = 1\n[frame]\nd = 3\n[grid]\ndz = \"fine\"\n[experiment]\nprobes = [\"sup\", \"nope\"]\n";
        let e = parse_str(text).unwrap_err();
        let paths: Vec<&str> = e.iter().map(|e| e.path.as_str()).collect();
        for p in [
            "birth",
            "seeds",
            "kernel.variance_z2",
            "kernel.colour",
            "frame.d",
            "grid.dz",
            "experiment.probes[1]",
        ] {
            assert!(paths.contains(&p), "{p} missing from {paths:?}");
        }
    }

    #[test]
    fn constructor_errors_name_the_block() {
        let e = parse_str("[kernel]\n[birth]\np = 2.0\n[frame]\n[experiment]\nbeta_level = 5.0\n").unwrap_err();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].path, "experiment.beta_level");
    }

    #[test]
    fn normalization_is_idempotent() {
        let c = parse_str(MINIMAL).unwrap();
        let once = c.to_toml();
        let c2 = parse_str(&once).unwrap();
        assert_eq!(c, c2);
        assert_eq!(once, c2.to_toml());
    }
}
