use proptest::prelude::*;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semiwave::evolve::{DelayHistory, Field, Fill, Grid};
use semiwave::spectral::FrameSpec;
use semiwave::stability_lab::*;
use semiwave::waves::{Orientation, WaveProfile};
use semiwave::{BirthLaw, Kernel};
use statrs::distribution::Normal;

fn line(lo: f64, hi: f64, dz: f64) -> Grid<f64> {
    Grid::line(lo, hi, dz, Fill::Edge, Fill::Edge).unwrap()
}

fn tanh_profile(orientation: Orientation) -> WaveProfile<f64> {
    let grid = line(-20.0, 20.0, 0.1);
    let sgn = if orientation == Orientation::ZeroAtMinus { 1.0 } else { -1.0 };
    let samples = Field::from_fn(&grid, |z| 0.5 * (1.0 + (sgn * z[0]).tanh()));
    WaveProfile {
        samples,
        c: 2.0,
        lambda1: sgn * 2.0,
        j_c: 0,
        amplitude: 1.0,
        orientation,
        kappa: 1.0,
        residual: 0.0,
        steps: 0,
    }
}

#[test]
fn noisy_replicates_center_on_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let t: Vec<f64> = (0..=400).map(|i| 5.0 + 95.0 * i as f64 / 400.0).collect();
    let (mut sa, mut sg) = (Vec::new(), Vec::new());
    for _ in 0..40 {
        let v: Vec<f64> = t
            .iter()
            .map(|t| 3.0 * t.powf(-0.5) * (-0.1 * t).exp() * noise.sample(&mut rng).exp())
            .collect();
        let f = decay_fit(&t, &v, (5.0, 100.0), FitModel::Full).unwrap();
        assert!(f.residual < 0.03 && f.samples == 401);
        sa.push(f.alpha);
        sg.push(f.gamma);
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    assert!((mean(&sa) - 0.5).abs() < 0.01, "alpha {}", mean(&sa));
    assert!((mean(&sg) - 0.1).abs() < 5e-4, "gamma {}", mean(&sg));

    let v: Vec<f64> = t.iter().map(|t| 2.0 * (-0.25 * t).exp()).collect();
    let f = decay_fit(&t, &v, (5.0, 100.0), FitModel::PinAlpha(0.0)).unwrap();
    assert!((f.gamma - 0.25).abs() < 1e-10 && (f.c - 2.0).abs() < 1e-9 && f.alpha == 0.0);
}

#[test]
fn fit_input_errors() {
    let t: Vec<f64> = (1..=100).map(|i| i as f64).collect();
    let v = vec![1.0; 100];
    assert!(decay_fit(&t, &v, (50.0, 10.0), FitModel::Full).is_err());
    assert!(decay_fit(&t, &v, (1.0, 10.0), FitModel::Full).is_err());
    let f = decay_fit(&t, &v, (1.0, 100.0), FitModel::Full).unwrap();
    assert!(f.alpha.abs() < 1e-10 && f.gamma.abs() < 1e-10);
}

#[test]
fn verdict_report_lists_everything() {
    let mut v = StabilityVerdict::new("local");
    assert!(v.hypothesis("admissible", true, "c = 2".into()));
    assert!(!v.criterion("decay", false, "alpha 0.1".into()));
    v.measure("gamma", 0.25);
    assert!(v.hypotheses_hold() && !v.pass);
    assert_eq!(v.get("gamma"), Some(0.25));
    assert_eq!(v.get("nope"), None);
    let r = v.report();
    assert!(r.starts_with("theorem = local\npass = false\n"));
    assert!(r.contains("hypothesis.admissible = true (c = 2)"));
    assert!(r.contains("criterion.decay = false (alpha 0.1)"));
    assert!(r.contains("gamma = 2.5000000000e-1"));
    assert!(r.lines().all(|l| l.contains(" = ")));
}

#[test]
fn thresholds_and_constants() {
    assert_eq!(bound_threshold(1.0, 1), 2.0);
    assert_eq!(bound_threshold(2.0, 2), 4.0);
    assert_eq!(bound_threshold(1.0, 4), 2.5);

    let law = BirthLaw::nicholson(2.0).unwrap();
    let c: f64 = 3.0;
    let f = FrameSpec::line(c, 1.0, Kernel::gaussian(0.0, 1.0).unwrap(), &law).unwrap();
    let lam: f64 = 0.5;
    let p = lam * lam - c * lam - 1.0;
    let kn = (lam * lam / 2.0 - lam * c).exp();
    let k = persistence_constants(&f, &[lam]).unwrap();
    assert!((k.d2 - p).abs() < 1e-14);
    assert!((k.kernel_norm - kn).abs() < 1e-12);
    let sp = std::f64::consts::PI.sqrt();
    assert!((k.theta - (2.0 * p.abs()).exp() * (1.0 + (-p).exp() * 2.0 * kn)).abs() < 1e-10 * k.theta);
    assert!((k.theta1 - p.abs().exp() / sp).abs() < 1e-12);
    assert!((k.theta2 - 4.0 * kn * (2.0 * p.abs()).exp() / sp).abs() < 1e-10 * k.theta2);
}

#[test]
fn profile_diagnostics() {
    let p = tanh_profile(Orientation::ZeroAtMinus);
    let e = plateau_edge(&p, 1e-6).unwrap();
    let exact = (1.0f64 / 1e-6 - 1.0).ln() / 2.0;
    assert!(e >= exact && e < exact + 0.1 + 1e-9, "{e} vs {exact}");
    let q = tanh_profile(Orientation::ZeroAtPlus);
    let e = plateau_edge(&q, 1e-6).unwrap();
    assert!(e <= -exact && e > -exact - 0.1 - 1e-9);
    let mut short = p.clone();
    short.samples.values.iter_mut().for_each(|v| *v *= 0.9);
    assert!(plateau_edge(&short, 1e-3).is_none());
    assert!(overshoot(&p).abs() < 1e-9, "{}", overshoot(&p));
}

#[test]
fn band_tracking_and_datum_floor() {
    let grid = line(-10.0, 10.0, 0.5);
    let mut b = BandTracker::new(0.9, 1.1, Orientation::ZeroAtMinus, &grid);
    b.observe(1.0, &Field::from_fn(&grid, |z| if z[0] < 4.0 { 0.5 } else { 1.0 }));
    assert_eq!(b.entry(), Some(1.0));
    b.observe(6.0, &Field::from_fn(&grid, |z| if z[0] < 4.0 { 0.5 } else { 1.0 }));
    assert_eq!(b.entry(), Some(3.5));
    b.observe(20.0, &Field::constant(&grid, 2.0));
    assert_eq!(b.entry(), None);

    let f = Field::from_fn(&grid, |z| 1.0 + 0.1 * z[0]);
    let d = DelayHistory::constant(f, 1.0, 4).unwrap();
    assert!((ic_sigma(&d, Orientation::ZeroAtMinus, 2.0) - 1.2).abs() < 1e-12);
    assert!((ic_sigma(&d, Orientation::ZeroAtPlus, 2.0) - 0.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn exact_model_is_recovered(c in 0.1..10.0f64, a in 0.0..2.0f64, g in 0.0..0.5f64) {
        let t: Vec<f64> = (0..=100).map(|i| 1.0 + 0.5 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| c * t.powf(-a) * (-g * t).exp()).collect();
        let f = decay_fit(&t, &v, (1.0, 51.0), FitModel::Full).unwrap();
        prop_assert!((f.alpha - a).abs() < 1e-8 && (f.gamma - g).abs() < 1e-9);
        prop_assert!((f.c / c - 1.0).abs() < 1e-8 && f.residual < 1e-9);
    }

    #[test]
    fn band_entry_never_decreases(levels in proptest::collection::vec(0.0..2.0f64, 1..12)) {
        let grid = line(-5.0, 5.0, 0.5);
        let mut b = BandTracker::new(0.8, 1.2, Orientation::ZeroAtPlus, &grid);
        let mut last = 0.0;
        for (k, l) in levels.iter().enumerate() {
            b.observe(k as f64, &Field::from_fn(&grid, |z| if z[0] > 0.0 { 0.0 } else { *l }));
            let e = b.entry().unwrap_or(f64::INFINITY);
            prop_assert!(e >= last);
            last = e;
        }
    }
}

#[test]
fn comparison_rate_between_roots() {
    use semiwave::evolve::grid_char_roots;
    use semiwave::evolve::grid_critical_speeds;
    use semiwave::waves::{compute_profile, ProfileOptions};

    let law = BirthLaw::nicholson(1.8f64.exp()).unwrap();
    let base = FrameSpec::line(0.0, 1.0, Kernel::gaussian(0.0, 1.0).unwrap(), &law).unwrap();
    let (_, cp) = grid_critical_speeds(&base, 0.05).unwrap();
    let frame = base.with_speed(cp + 0.5);
    let r = grid_char_roots(&frame, 0.05).unwrap();
    let lam = 0.5 * (r.lambda1 + r.lambda2);
    let full = compute_profile(
        &frame,
        &law,
        &ProfileOptions { extent: Some((-80.0, 60.0)), tol: 1e-13, pseudo_dt: 5.0, ..ProfileOptions::default() },
    )
    .unwrap();
    // e^{-λz}|u - ψ| carries a round-off floor of order e^{(λ - λ₁)|z|} ε, so the run is cropped to z >= -20
    let zs = full.nodes();
    let i0 = zs.iter().position(|z| *z >= -20.0).unwrap();
    let ax = &full.samples.grid.axes[0];
    let sub = Grid::line(zs[i0], ax.hi(), ax.spacing, ax.fill_lo, ax.fill_hi).unwrap();
    let cropped = Field::new(sub, full.samples.values[i0..].to_vec()).unwrap();
    let grid = Grid::pinned_to(&cropped);
    let psi = DelayHistory::constant(Field::new(grid.clone(), cropped.values.clone()).unwrap(), 1.0, 20).unwrap();
    let pert: Vec<f64> = grid.axes[0]
        .nodes()
        .iter()
        .zip(&cropped.values)
        .map(|(z, v)| {
            let x = (z + 8.0) / 3.0;
            let b = if x.abs() < 1.0 { (0.5 * std::f64::consts::PI * x).cos().powi(2) } else { 0.0 };
            v + 0.5 * (lam * z).exp() * b
        })
        .collect();
    let u = DelayHistory::constant(Field::new(grid, pert).unwrap(), 1.0, 20).unwrap();
    let ex = comparison_experiment(&frame, &law, &u, &psi, &[lam], 20.0, &CompareOptions::default()).unwrap();
    let v = &ex.verdict;
    let gl = v.get("gamma_lambda").unwrap();
    let fit = v.fit.as_ref().unwrap();
    assert!((fit.gamma - gl).abs() <= 0.15 * gl, "fitted {} vs gamma_lambda {gl}", fit.gamma);
    assert!(v.hypotheses_hold());
}
