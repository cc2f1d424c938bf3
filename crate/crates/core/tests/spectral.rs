use proptest::prelude::*;
use semiwave::spectral::{self, FrameSpec, FrontSide};
use semiwave::{Error, Kernel, Side};
use statrs::function::erf::erfc_inv;
use std::f64::consts::PI;

fn frame(c: f64, h: f64, k: Kernel<f64>, g0: f64) -> FrameSpec<f64> {
    FrameSpec::with_rates(1, c, vec![1.0], h, k, g0, g0).unwrap()
}

fn g01() -> Kernel<f64> {
    Kernel::gaussian(0.0, 1.0).unwrap()
}

fn kpp(c: f64) -> FrameSpec<f64> {
    frame(c, 1e-6, Kernel::gaussian(0.0, 1e-6).unwrap(), 2.0)
}

/// Plain bisection on an increasing map, run to exhaustion.
fn bisect_oracle(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (-1.0, 1.0);
    while f(lo) > 0.0 {
        lo *= 2.0;
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn min_e(f: &FrameSpec<f64>, lo: f64, hi: f64) -> f64 {
    (0..=20_000).map(|i| lo + (hi - lo) * i as f64 / 20_000.0).map(|l| spectral::char_eval(f, l).unwrap()).fold(f64::INFINITY, f64::min)
}

#[test]
fn pq_examples() {
    let f = frame(0.7, 1.0, g01(), 3.0);
    let (p, q) = spectral::pq(&f, &[0.0]).unwrap();
    assert_eq!(p, -1.0);
    assert!((q - 3.0).abs() < 1e-14);
    let (p, _) = spectral::pq(&frame(2.0, 1.0, g01(), 2.0), &[1.0]).unwrap();
    assert_eq!(p, -2.0);
    let k = Kernel::gaussian(-5.0, 2.0).unwrap();
    let f = frame(1.0, 2.0, k.clone(), 2.0);
    let (_, q) = spectral::pq(&f, &[0.5]).unwrap();
    let mgf = {
        let n = 200_000;
        let (a, b) = (-40.0, 30.0);
        let hh = (b - a) / n as f64;
        let dens = |y: f64| (-(y + 5.0_f64).powi(2) / 4.0).exp() / (4.0 * PI).sqrt() * (-y / 2.0).exp();
        (1..n).map(|i| dens(a + i as f64 * hh) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>() * hh / 3.0
    };
    assert!((q - 2.0 * (-1.0f64).exp() * mgf).abs() < 1e-9 * q);
}

#[test]
fn char_eval_examples() {
    let f = frame(1.3, 1.0, g01(), 2.5);
    assert!((spectral::char_eval(&f, 0.0).unwrap() - 1.5).abs() < 1e-14);
    let (lo, hi) = spectral::critical_speeds(&f).unwrap();
    let gap = f.with_speed(0.5 * (lo + hi));
    assert!(min_e(&gap, -6.0, 6.0) > 0.0);
    let e = spectral::char_eval(&kpp(2.0), 1.0).unwrap();
    assert!(e.abs() < 1e-5, "{e}");
}

#[test]
fn root_examples() {
    let f = frame(0.0, 1.0, g01(), 2.0);
    let (_, cp) = spectral::critical_speeds(&f).unwrap();
    let r = spectral::char_roots(&f.with_speed(cp)).unwrap();
    assert_eq!(r.j_c, 1);
    assert!((r.lambda2 - r.lambda1).abs() < 1e-6 * (1.0 + r.lambda1.abs()));

    let a = spectral::char_roots(&f.with_speed(cp + 0.8)).unwrap();
    let b = spectral::char_roots(&f.with_speed(-cp - 0.8)).unwrap();
    assert!((a.lambda1 + b.lambda2).abs() < 1e-8 && (a.lambda2 + b.lambda1).abs() < 1e-8);
    assert!(a.lambda1 > 0.0 && b.lambda2 < 0.0);

    let r = spectral::char_roots(&kpp(3.0)).unwrap();
    assert!((r.lambda1 - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-4);
    assert!((r.lambda2 - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-4);
}

#[test]
fn gap_speed_has_no_roots() {
    let f = frame(0.0, 1.0, g01(), 2.0);
    assert!(spectral::char_roots(&f).is_err());
}

#[test]
fn critical_speed_examples() {
    let f = frame(0.0, 2.0, Kernel::shifted_heat(5.0).unwrap(), 2.0);
    let (lo, hi) = spectral::critical_speeds(&f).unwrap();
    assert!(lo < hi);
    let mut m = [lo.abs(), hi.abs()];
    m.sort_by(f64::total_cmp);
    assert!((m[0] - 0.7).abs() < 0.1 && (m[1] - 2.7).abs() < 0.1);
    let (lo, hi) = spectral::critical_speeds(&frame(0.0, 1.0, Kernel::gaussian(0.0, 0.4).unwrap(), 3.0)).unwrap();
    assert!((lo + hi).abs() < 1e-8);
    let (_, hi) = spectral::critical_speeds(&kpp(0.0)).unwrap();
    assert!((hi - 2.0).abs() < 1e-2);
}

#[test]
fn critical_speed_is_tangency() {
    let f = frame(0.0, 1.0, g01(), 2.0);
    let (_, cp) = spectral::critical_speeds(&f).unwrap();
    assert!(min_e(&f.with_speed(cp), 0.01, 4.0).abs() < 1e-6);
    assert!(min_e(&f.with_speed(cp - 1e-3), 0.01, 4.0) > 0.0);
}

#[test]
fn gamma_examples() {
    let f = frame(0.0, 1.0, g01(), 2.0);
    let (_, cp) = spectral::critical_speeds(&f).unwrap();
    let f = f.with_speed(cp + 0.5);
    let r = spectral::char_roots(&f).unwrap();
    assert!(spectral::gamma_lambda(&f, &[r.lambda1]).unwrap().abs() < 1e-10);

    let tiny = f.with_speed(0.3);
    let tiny = FrameSpec { h: 1e-9, ..tiny };
    let (p, q) = spectral::pq(&tiny, &[0.4]).unwrap();
    assert!((spectral::gamma_lambda(&tiny, &[0.4]).unwrap() + p + q).abs() < 1e-6);

    let g = frame(1.1, 0.7, Kernel::laplace(0.4, 0.5).unwrap(), 2.6);
    let (p, q) = spectral::pq(&g, &[0.9]).unwrap();
    let oracle = bisect_oracle(|x| x + p + q * (0.7 * x).exp());
    assert!((spectral::gamma_lambda(&g, &[0.9]).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn a_lambda_examples() {
    let f = frame(0.0, 1.0, g01(), 1.0);
    assert!((spectral::a_lambda(&f, &[0.0]).unwrap() - (1.0 / (2.0 * PI)).sqrt()).abs() < 1e-14);
    let k = Kernel::tensor(vec![g01(), g01()]).unwrap();
    let f2 = FrameSpec::with_rates(2, 0.0, vec![1.0, 0.0], 1.0, k, 1.0, 1.0).unwrap();
    assert!((spectral::a_lambda(&f2, &[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-14);
    let g = frame(1.1, 0.7, Kernel::laplace(0.4, 0.5).unwrap(), 2.6);
    let a = spectral::a_lambda(&g, &[0.9]).unwrap();
    let e = spectral::eps_h(&g, &[0.9]).unwrap();
    assert!((a * (4.0 * PI * e).sqrt() - 1.0).abs() < 1e-12);
}

#[test]
fn l_lambda_examples() {
    let f = frame(1.5, 1.0, g01(), 2.0);
    let g = spectral::gamma_lambda(&f, &[0.6]).unwrap();
    assert!((spectral::l_lambda(&f, &[0.6], &[0.0]).unwrap() + g).abs() < 1e-12);
    let (p, _) = spectral::pq(&f, &[0.6]).unwrap();
    let far = spectral::l_lambda(&f, &[0.6], &[100.0]).unwrap();
    assert!((far - (p - 1e4)).abs() < 1e-3 * 1e4);
}

#[test]
fn gamma_star_examples() {
    let g = spectral::gamma_star(0.0, 1.0, f64::INFINITY).unwrap();
    assert!((g - 1.0).abs() < 1e-8);
    assert!(spectral::gamma_star(1.0, 1.0, f64::INFINITY).is_none());
    let g = spectral::gamma_star(0.5, 1.0, f64::INFINITY).unwrap();
    let oracle = bisect_oracle(|x| 0.5 * x.exp() - (1.0 - x));
    assert!((g - oracle).abs() < 1e-8);
}

#[test]
fn delta_star_examples() {
    assert!((spectral::delta_star::<f64>(0.0, 1.0, 1).unwrap() - 2.001).abs() < 1e-9);
    let d = spectral::delta_star(0.99, 1.0, 1).unwrap();
    for i in 0..=2000 {
        let t = -1.0 + 0.05 * i as f64;
        assert!(0.99 * ((t + d) / (t + d - 1.0)).sqrt() + 0.5 / (t + d) < 1.0);
    }
    for rho in [0.0, 0.3, 0.8] {
        assert!(spectral::delta_star(rho, 1.0, 2).unwrap() >= spectral::delta_star(rho, 1.0, 1).unwrap());
    }
    assert!(matches!(spectral::delta_star::<f64>(1.0, 1.0, 1), Err(Error::NoSolution(_))));
}

#[test]
fn b_gamma_examples() {
    let f = frame(0.0, 1.0, Kernel::uniform(-1.0, 1.0).unwrap(), 2.0);
    assert!((spectral::b_gamma(0.0, FrontSide::Plus, &f, 0.0).unwrap() - 1.0).abs() < 1e-12);

    let h = 0.1;
    let gamma = bisect_oracle(|x| if x < 0.0 { x } else { x * (-h * x).exp() - 1.0 });
    let f = frame(0.0, h, g01(), 2.0);
    assert!(spectral::b_gamma(0.0, FrontSide::Plus, &f, gamma).unwrap().abs() < 1e-9);

    let f = frame(0.0, 2.0, Kernel::gaussian(-5.0, 2.0).unwrap(), 2.0);
    let level = 0.1 * (-0.2f64).exp() / 2.0;
    let oracle = -5.0 + 2.0 * erfc_inv(2.0 * level);
    let b = spectral::b_gamma(0.0, FrontSide::Plus, &f, 0.1).unwrap();
    assert!((b - oracle).abs() < 1e-8, "{b} vs {oracle}");
    assert!((f.kernel.tail_mass(b, Side::Right) - level).abs() < 1e-12);
}

#[test]
fn b_gamma_rejects_unattainable_level() {
    let f = frame(0.0, 1.0, g01(), 2.0);
    assert!(spectral::b_gamma(0.0, FrontSide::Plus, &f, 0.0).is_err());
}

fn any_frame() -> impl Strategy<Value = (FrameSpec<f64>, f64)> {
    (-3.0..3.0f64, 0.1..3.0f64, -2.0..2.0f64, 0.2..2.0f64, 1.2..5.0f64, -1.5..1.5f64)
        .prop_map(|(c, h, m, v, g0, l)| (frame(c, h, Kernel::gaussian(m, v).unwrap(), g0), l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn delay_exponent_solves_its_equation((f, l) in any_frame()) {
        let (p, q) = spectral::pq(&f, &[l]).unwrap();
        let g = spectral::gamma_lambda(&f, &[l]).unwrap();
        prop_assert!((g + p + q * (f.h * g).exp()).abs() < 1e-12 * (1.0 + p.abs() + q));
        let e = spectral::char_eval(&f, l).unwrap();
        if e.abs() < 1e-10 {
            prop_assert!(g.abs() < 1e-8);
        } else {
            prop_assert_eq!(g.signum(), -e.signum());
        }
    }

    #[test]
    fn upper_sandwich_and_monotone_symbol((f, l) in any_frame()) {
        let mut prev = f64::INFINITY;
        for j in 0..512 {
            let z = 6.0 * j as f64 / 511.0;
            let v = spectral::l_lambda(&f, &[l], &[z]).unwrap();
            let (_, up) = spectral::l_lambda_bounds(&f, &[l], &[z]).unwrap();
            prop_assert!(up - v >= -1e-10);
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn roots_are_roots(c in 0.0..3.0f64, h in 0.2..2.0f64, g0 in 1.5..4.0f64) {
        let base = frame(0.0, h, g01(), g0);
        let (_, cp) = spectral::critical_speeds(&base).unwrap();
        let f = base.with_speed(cp + 0.1 + c);
        let r = spectral::char_roots(&f).unwrap();
        prop_assert!(spectral::char_eval(&f, r.lambda1).unwrap().abs() < 1e-10);
        prop_assert!(spectral::char_eval(&f, r.lambda2).unwrap().abs() < 1e-10);
        for i in 1..20 {
            let x = r.lambda1 + (r.lambda2 - r.lambda1) * i as f64 / 20.0;
            prop_assert!(spectral::char_eval(&f, x).unwrap() < 0.0);
        }
    }
}
