use proptest::prelude::*;
use semiwave::evolve::*;
use semiwave::spectral::{self, FrameSpec};
use semiwave::{BirthLaw, Kernel};

fn g01() -> Kernel<f64> {
    Kernel::gaussian(0.0, 1.0).unwrap()
}

fn nich(lp: f64) -> BirthLaw<f64> {
    BirthLaw::nicholson(lp.exp()).unwrap()
}

/// `y' = a y + G(y(t−h))`, constant history `y0`: exact on the first interval, then variation of
/// constants with Simpson's rule on a fine grid.
fn steps_oracle(a: f64, g: impl Fn(f64) -> f64, y0: f64, h: f64, t_end: f64) -> f64 {
    let m = 4000;
    let d = h / m as f64;
    let n = (t_end / d).round() as usize;
    let g0 = g(y0);
    let mut y: Vec<f64> = (0..=m).map(|j| -g0 / a + (y0 + g0 / a) * (a * j as f64 * d).exp()).collect();
    let (e1, e2) = ((a * d).exp(), (2.0 * a * d).exp());
    for j in m + 1..=n {
        let gv = |k: usize| if k < m { g0 } else { g(y[k - m]) };
        let next = y[j - 2] * e2 + d / 3.0 * (e2 * gv(j - 2) + 4.0 * e1 * gv(j - 1) + gv(j));
        y.push(next);
    }
    y[n]
}

fn flat_run(eq: Equation<f64>, a: f64, m: usize, t: f64) -> Field<f64> {
    let grid = Grid::line(-1.0, 1.0, 0.5, Fill::Edge, Fill::Edge).unwrap();
    let datum = DelayHistory::constant(Field::constant(&grid, a), 1.0, m).unwrap();
    let opts = SolverOptions { startup: 0, ..SolverOptions::default() };
    let mut sim = Simulator::new(eq, datum, opts).unwrap();
    sim.advance_to(t).unwrap();
    sim.state()
}

#[test]
fn equilibria_are_preserved() {
    let law = nich(1.8);
    let kappa = law.analyze().unwrap().kappa;
    let frame = FrameSpec::line(1.3, 1.0, g01(), &law).unwrap();
    for (level, tol) in [(0.0, 1e-13), (kappa, 1e-10)] {
        let grid = Grid::line(-10.0, 10.0, 0.1, Fill::Value(level), Fill::Value(level)).unwrap();
        let datum = DelayHistory::constant(Field::constant(&grid, level), 1.0, 20).unwrap();
        let tr = simulate(&frame, &law, datum, 10.0, &ProbeSpec::new(20).with("sup", Probe::DiffSup(Field::constant(&grid, level))), SolverOptions::default()).unwrap();
        assert!(tr.series("sup").unwrap().iter().all(|v| *v <= tol));
    }
}

#[test]
fn flat_datum_follows_the_delay_ode() {
    let law = nich(1.8);
    let frame = FrameSpec::line(0.7, 1.0, g01(), &law).unwrap();
    let u = flat_run(Equation::nonlinear(&frame, &law), 0.4, 1000, 5.0);
    let oracle = steps_oracle(-1.0, |v| law.eval(v), 0.4, 1.0, 5.0);
    assert!(u.values.iter().all(|v| (v - oracle).abs() < 1e-6), "{} vs {oracle}", u.values[2]);
}

#[test]
fn flat_comparison_datum_follows_its_delay_ode() {
    let law = nich(1.8);
    let frame = FrameSpec::line(0.7, 1.0, g01(), &law).unwrap();
    let (p, q) = spectral::pq(&frame, &[0.0]).unwrap();
    let r = flat_run(Equation::comparison(&frame, &[0.0]), 1.0, 1000, 5.0);
    let oracle = steps_oracle(p, |v| q * v, 1.0, 1.0, 5.0);
    assert!(r.values.iter().all(|v| (v - oracle).abs() < 1e-6 * oracle.max(1.0)), "{} vs {oracle}", r.values[2]);

    let grid = Grid::line(-1.0, 1.0, 0.5, Fill::Edge, Fill::Edge).unwrap();
    let zero = DelayHistory::constant(Field::constant(&grid, 0.0), 1.0, 10).unwrap();
    let tr = linear_comparison(&frame, &[0.0], zero, 3.0, &ProbeSpec::new(5).with("sup", Probe::Sup), SolverOptions::default()).unwrap();
    assert!(tr.series("sup").unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn comparison_decays_below_the_stated_bound() {
    let law = nich(1.8);
    let base = FrameSpec::line(0.0, 1.0, g01(), &law).unwrap();
    let (_, cp) = spectral::critical_speeds(&base).unwrap();
    let frame = base.with_speed(cp + 0.5);
    let roots = spectral::char_roots(&frame).unwrap();
    let lam = 0.5 * (roots.lambda1 + roots.lambda2);
    let gamma = spectral::gamma_lambda(&frame, &[lam]).unwrap();
    let a = spectral::a_lambda(&frame, &[lam]).unwrap();
    let grid = Grid::line(-60.0, 30.0, 0.1, Fill::Value(0.0), Fill::Value(0.0)).unwrap();
    let s2: f64 = 0.05;
    let datum = DelayHistory::from_fn(&grid, 1.0, 20, |_, z: &[f64]| (-(z[0] * z[0]) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()).unwrap();
    let norm = datum.weighted_l1(&[0.0]);
    let tr = linear_comparison(&frame, &[lam], datum, 20.0, &ProbeSpec::new(10).with("sup", Probe::Sup), SolverOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for (t, v) in tr.times.iter().zip(tr.series("sup").unwrap()) {
        if *t >= 3.0 {
            worst = worst.max(v * t.sqrt() * (gamma * t).exp() / (a * norm));
        }
    }
    assert!(worst <= 1.1, "ratio {worst}");
    assert!(tr.meta.min_value >= -1e-10);
}

#[test]
fn wave_operator_vanishes_on_equilibria() {
    let law = nich(1.8);
    let kappa = law.analyze().unwrap().kappa;
    let frame = FrameSpec::line(1.1, 1.0, g01(), &law).unwrap();
    for (level, tol) in [(kappa, 1e-10), (0.0, 1e-13)] {
        let grid = Grid::line(-5.0, 5.0, 0.1, Fill::Value(level), Fill::Value(level)).unwrap();
        let slab = vec![Field::constant(&grid, level); 21];
        let n = wave_operator(&frame, &law, &slab, 20, Convolution::Direct).unwrap();
        assert!(n.sup_abs() <= tol);
    }
    let grid = Grid::line(-5.0, 5.0, 0.1, Fill::Edge, Fill::Edge).unwrap();
    assert!(wave_operator(&frame, &law, &vec![Field::constant(&grid, 0.0); 5], 20, Convolution::Direct).is_err());
}

#[test]
fn delay_ode_examples() {
    let law = nich(1.5);
    let kappa = law.analyze().unwrap().kappa;
    let s = delay_ode(|b| law.eval(b), kappa, 1.0, 10.0, 50);
    assert!(s.values.iter().all(|v| (v - kappa).abs() < 1e-12));

    // β' = −β + k β(t−1): slowest mode e^{st} with s = −1 + k e^{−s}
    let k = 0.6;
    let s_root = {
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid + 1.0 - k * (-mid).exp() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let sol = delay_ode(|b| k * b, 1.0, 1.0, 30.0, 100);
    let (a, b) = (sol.at(20.0), sol.at(30.0));
    assert!(((b / a).ln() / 10.0 - s_root).abs() < 1e-6);

    let mono = nich(1.0);
    let sol = delay_ode(|b| mono.eval(b), 0.2, 1.0, 50.0, 50);
    assert!(sol.values.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    assert!((sol.last() - 1.0).abs() < 1e-6);
}

fn small_grid() -> Grid<f64> {
    Grid::line(-10.0, 10.0, 0.2, Fill::Value(0.0), Fill::Value(0.0)).unwrap()
}

fn bumps() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-6.0..6.0f64, 0.0..3.0f64, 0.5..2.0f64), 1..4)
}

fn datum_of(b: &[(f64, f64, f64)], scale: f64) -> DelayHistory<f64> {
    let b = b.to_vec();
    DelayHistory::from_fn(&small_grid(), 1.0, 10, move |s, z: &[f64]| {
        scale * (1.0 + 0.2 * s) * b.iter().map(|(c, a, w)| a * (-((z[0] - c) / w).powi(2)).exp()).sum::<f64>()
    })
    .unwrap()
}

fn end_state(frame: &FrameSpec<f64>, law: &BirthLaw<f64>, d: DelayHistory<f64>) -> Field<f64> {
    let mut sim = Simulator::new(Equation::nonlinear(frame, law), d, SolverOptions::default()).unwrap();
    sim.advance_to(3.0).unwrap();
    assert!(sim.min_seen() >= -1e-10);
    sim.state()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solutions_stay_nonnegative(b in bumps(), c in -2.0..2.0f64, lp in 0.5..2.5f64) {
        let law = nich(lp);
        let frame = FrameSpec::line(c, 1.0, g01(), &law).unwrap();
        let u = end_state(&frame, &law, datum_of(&b, 1.0));
        prop_assert!(u.min() >= -1e-10);
    }

    #[test]
    fn ordered_data_stay_ordered(b in bumps(), c in -2.0..2.0f64, lp in 0.2..1.0f64, f in 0.3..1.0f64) {
        let law = nich(lp);
        let frame = FrameSpec::line(c, 1.0, g01(), &law).unwrap();
        let lo = end_state(&frame, &law, datum_of(&b, f));
        let hi = end_state(&frame, &law, datum_of(&b, 1.0));
        prop_assert!(lo.values.iter().zip(&hi.values).all(|(a, b)| *a <= b + 1e-9));
    }

    #[test]
    fn dominated_kernel_and_law_stay_below(b in bumps(), mass in 0.5..1.0f64, lp in 0.2..1.0f64, dp in 0.0..0.5f64) {
        let (l1, l2) = (nich(lp), nich(lp + dp));
        let f1 = FrameSpec::line(0.5, 1.0, Kernel::gaussian_with_mass(0.0, 1.0, mass).unwrap(), &l1).unwrap();
        let f2 = FrameSpec::line(0.5, 1.0, g01(), &l2).unwrap();
        let v1 = end_state(&f1, &l1, datum_of(&b, 1.0));
        let v2 = end_state(&f2, &l2, datum_of(&b, 1.0));
        prop_assert!(v1.values.iter().zip(&v2.values).all(|(a, b)| *a <= b + 1e-9));
    }

    #[test]
    fn fft_equals_direct(b in bumps(), c in -2.0..2.0f64) {
        let law = nich(1.8);
        let frame = FrameSpec::line(c, 1.0, g01(), &law).unwrap();
        let grid = Grid::line(-3.2, 3.1, 0.1, Fill::Value(0.0), Fill::Value(0.0)).unwrap();
        let b2 = b.clone();
        let d = DelayHistory::from_fn(&grid, 1.0, 10, move |_, z: &[f64]| b2.iter().map(|(c, a, w)| a * (-((z[0] - c) / w).powi(2)).exp()).sum::<f64>()).unwrap();
        let run = |conv| {
            let mut s = Simulator::new(Equation::nonlinear(&frame, &law), d.clone(), SolverOptions { conv, ..SolverOptions::default() }).unwrap();
            s.advance(15).unwrap();
            s.state()
        };
        prop_assert!(run(Convolution::Direct).sub(&run(Convolution::Fft)).sup_abs() <= 1e-10);
    }
}
