//! Acceptance criteria 1-10, one PASS/FAIL line each.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nsreg::cutoff::{Psi2, TestFunction};
use nsreg::detector::{alpha_sequence, beta, bootstrap_schedule, detect_quadrature, detect_singular_set, e_sweep, mu, next_alpha, EpsilonConfig, ProbeGrid};
use nsreg::energy::{battery, energy_quadrature, psi2_bounds_hold, run_battery, sobolev_check, TestKind};
use nsreg::field::{dist, norm2, point_from_slice, rescale, scaled, BoxDomain, ScaleTransform, ScalarField, ZERO};
use nsreg::generators::{rotation_triple, taylor_green_triple, FieldKind, FieldSpec};
use nsreg::harness::{decay_iteration, random_family, sweep_constant, HarnessContext, LemmaId, SweepParams};
use nsreg::pressure::{
    cz_ratio, interior_probes, mean_value_check, newtonian_potential_oracle, offset_relative_error, oscillation, same_ball_h_mean,
    OracleConfig, PressureConfig, PressureDecomposition,
};
use nsreg::quadrature::{Ball, QuadratureConfig};
use nsreg::quantities::{compute_quantities, Quantity};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dom() -> BoxDomain {
    BoxDomain::cube(6, 8.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s < 1e-14 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t <= limit {
        Ok(())
    } else {
        Err(format!("runtime {t:?} over {limit:?}"))
    }
}

fn c1_analytic_values() -> Outcome {
    let start = Instant::now();
    let t = rotation_triple(1.0, dom()).unwrap().velocity_only();
    let b = Ball::new(6, ZERO, 1.0).unwrap();
    let (a_ex, e_ex) = (PI.powi(3) / 24.0, PI.powi(3) / 3.0);
    let q = compute_quantities(&t, None, &b, &QuadratureConfig::tensor(16, 8)).unwrap();
    let (ta, te) = (rel(q.v(Quantity::A), a_ex), rel(q.v(Quantity::E), e_ex));
    let q = compute_quantities(&t, None, &b, &QuadratureConfig::monte_carlo(2_000_000, 7)).unwrap();
    let (ma, me) = (rel(q.v(Quantity::A), a_ex), rel(q.v(Quantity::E), e_ex));
    within(start, Duration::from_secs(30))?;
    check(
        ta.max(te) <= 1e-6 && ma.max(me) <= 1e-2,
        format!("tensor rel err A {ta:.1e} E {te:.1e}; MC A {ma:.1e} E {me:.1e}"),
    )
}

fn c2_scaling() -> Outcome {
    let start = Instant::now();
    let quad = QuadratureConfig::tensor(12, 6);
    let pcfg = PressureConfig::with_grid(8);
    let offset = point_from_slice(&[0.3, -0.2, 0.1, 0.0, 0.2, -0.1]);
    let mut worst_poly: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for kind in FieldKind::ALL {
        let t = FieldSpec::new(kind).build().unwrap();
        let polynomial = matches!(kind, FieldKind::Constant | FieldKind::Rotation);
        let x0 = if kind == FieldKind::SingularRotation { ZERO } else { offset };
        let ball = Ball::new(6, x0, 1.0).unwrap();
        let base = compute_quantities(&t, Some(same_ball_h_mean(&t, &ball, &pcfg).unwrap()), &ball, &quad).unwrap();
        for lambda in [0.5, 2.0, 4.0] {
            let s = rescale(&t, ScaleTransform::new(lambda).unwrap());
            let sb = Ball::new(6, scaled(&x0, 1.0 / lambda), 1.0 / lambda).unwrap();
            let q = compute_quantities(&s, Some(same_ball_h_mean(&s, &sb, &pcfg).unwrap()), &sb, &quad).unwrap();
            for k in Quantity::ALL {
                let e = rel(base.v(k), q.v(k));
                if polynomial {
                    worst_poly = worst_poly.max(e);
                } else {
                    worst = worst.max(e);
                }
            }
        }
    }
    within(start, Duration::from_secs(120))?;
    check(worst_poly <= 1e-6 && worst <= 2e-2, format!("max rel diff polynomial {worst_poly:.1e}, others {worst:.1e}"))
}

fn c3_psi2() -> Outcome {
    let start = Instant::now();
    let (r, rho) = (0.3, 1.0);
    let x1 = point_from_slice(&[0.1, 0.0, -0.2, 0.0, 0.05, 0.0]);
    let psi = Psi2::new(6, x1, r);
    let pts = interior_probes(6, &x1, 1.5, 100, 3);
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for x in &pts {
        let mut fd = 0.0;
        for a in 0..6 {
            let at = |s: f64| {
                let mut y = *x;
                y[a] += s;
                psi.value(&y)
            };
            fd += (-at(2.0 * h) + 16.0 * at(h) - 30.0 * at(0.0) + 16.0 * at(-h) - at(-2.0 * h)) / (12.0 * h * h);
        }
        worst = worst.max(rel(fd, psi.laplacian(x)));
    }
    let inside = interior_probes(6, &x1, rho, 2000, 4);
    let bounds = psi2_bounds_hold(&x1, r, rho, &inside);
    within(start, Duration::from_secs(5))?;
    check(worst <= 1e-6 && bounds, format!("FD rel err {worst:.1e}; bound on B(x1, rho) {bounds}"))
}

fn c4_energy() -> Outcome {
    let start = Instant::now();
    let x0 = point_from_slice(&[0.2, -0.1, 0.0, 0.1, 0.0, 0.0]);
    let entries = battery(6, &x0, 1.0, 20, 11);
    let with_psi2 = entries.iter().filter(|e| e.kind == TestKind::Psi1Psi2).count();
    let mut detail = Vec::new();
    let mut ok = with_psi2 > 0;
    for (name, t) in [("taylor-green", taylor_green_triple(1, dom()).unwrap()), ("rotation", rotation_triple(1.0, dom()).unwrap())] {
        let res = run_battery(&t, &entries, 0.0, &energy_quadrature()).unwrap();
        ok &= res.max_abs_residual <= 2e-2;
        detail.push(format!("{name} max |residual| {:.1e}", res.max_abs_residual));
    }
    within(start, Duration::from_secs(180))?;
    check(ok, format!("{} ({with_psi2} of 20 with psi2)", detail.join(", ")))
}

fn c5_pressure() -> Outcome {
    let start = Instant::now();
    let t = taylor_green_triple(1, dom()).unwrap();
    let x0 = point_from_slice(&[0.3, -0.2, 0.0, 0.0, 0.0, 0.0]);
    let r = 1.0;
    let dec = PressureDecomposition::new(&t, &x0, r, &PressureConfig::with_grid(16)).unwrap();
    let p = t.p.as_ref().unwrap();
    let probes = interior_probes(6, &x0, 2.0 * r / 3.0, 200, 5);
    let (mut num, mut den) = (0.0, 0.0);
    for x in &probes {
        num += (dec.p_tilde.eval(x) + dec.h.eval(x) - p.eval(x)).powi(2);
        den += p.eval(x).powi(2);
    }
    let identity = (num / den).sqrt();

    let region = dec.h.region().clone();
    let osc = oscillation(&dec.h, &region, 400, 6);
    let mut mean_dev: f64 = 0.0;
    let mut sph = QuadratureConfig::tensor(8, 6);
    sph.seed = 1;
    for (i, x) in interior_probes(6, &x0, r / 3.0, 20, 8).iter().enumerate() {
        let room = 2.0 * r / 3.0 - dist(x, &x0, 6);
        let s = room * (0.3 + 0.6 * (i as f64 / 19.0));
        mean_dev = mean_dev.max(mean_value_check(&dec.h, &region, x, s, osc, &sph).unwrap());
    }

    let oracle_pts = interior_probes(6, &x0, 2.0 * r / 3.0, 20, 9);
    let spectral: Vec<f64> = oracle_pts.iter().map(|x| dec.p_tilde.eval(x)).collect();
    let oracle: Vec<f64> = oracle_pts
        .iter()
        .map(|x| newtonian_potential_oracle(&t, &dec.eta, &dec.u_mean, x, &OracleConfig::default()).unwrap())
        .collect();
    let oracle_err = offset_relative_error(&spectral, &oracle);
    within(start, Duration::from_secs(600))?;
    check(
        identity <= 2e-2 && mean_dev <= 2e-2 && oracle_err <= 5e-2,
        format!("identity {identity:.1e}, mean-value {mean_dev:.1e}, oracle {oracle_err:.1e}"),
    )
}

fn c6_detector() -> Outcome {
    let start = Instant::now();
    let cfg = EpsilonConfig::default();
    let quad = detect_quadrature();
    let grid = ProbeGrid::default();
    // Amplitude chosen so that E = a^2 pi^3 = 10 eps0.
    let spec = FieldSpec { amplitude: Some((0.1 / PI.powi(3)).sqrt()), ..FieldSpec::new(FieldKind::SingularRotation) };
    let fixture = spec.build().unwrap();
    let est = detect_singular_set(&fixture, &grid, &cfg, &quad).unwrap();
    let at_origin = est.flagged.len() == 1 && norm2(&point_from_slice(&est.flagged[0].point), 6) == 0.0;
    let sweep = e_sweep(fixture.u.as_ref(), &ZERO, &cfg, &quad).unwrap();
    let es: Vec<f64> = sweep.reports.iter().map(|r| r.v(Quantity::E)).collect();
    let flat = es.iter().all(|e| rel(*e, es[0]) < 1e-6 && rel(*e, 0.1) < 1e-6);
    let fit = est.dimension_fit;
    let tg = taylor_green_triple(1, dom()).unwrap();
    let tg_est = detect_singular_set(&tg, &grid, &cfg, &quad).unwrap();
    within(start, Duration::from_secs(900))?;
    check(
        at_origin && flat && fit.is_some_and(|d| d <= 0.5) && tg_est.flagged.is_empty() && tg_est.inconclusive == 0,
        format!(
            "fixture: {} of {} flagged, E {:.4} on {} radii, dimension fit {:?}; Taylor-Green: {} flagged",
            est.flagged.len(),
            est.probes,
            es[0],
            es.len(),
            fit,
            tg_est.flagged.len()
        ),
    )
}

fn c7_schedule() -> Outcome {
    let start = Instant::now();
    let a = alpha_sequence(0.5, 200);
    let fixed = next_alpha(2.0) == 2.0;
    let b = beta(0.1);
    let s = bootstrap_schedule(0.5, 0.1).unwrap();
    let mu_ok = s.alpha.iter().zip(&s.mu).all(|(a, m)| (m - a / (10.0 + a)).abs() <= 1e-15 && *m == mu(*a));
    within(start, Duration::from_secs(1))?;
    check(
        a[200] >= 2.0 - 1e-4 && fixed && (b - 52.0 / 11.0).abs() < 1e-12 && b > 4.5 && mu_ok,
        format!("alpha_200 {:.8}, fixed point {fixed}, beta(0.1) {b:.5}, mu {mu_ok}", a[200]),
    )
}

fn c8_decay() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut holds = true;
    let mut worst: f64 = 0.0;
    for phi0 in [0.5, 1.0, 10.0] {
        for theta in [0.125, 0.25, 0.5] {
            for n1 in [0.0, 1.0, 10.0] {
                for rho0 in [0.1, 1.0, 2.0] {
                    let t = decay_iteration(phi0, theta, n1, rho0, 100).unwrap();
                    holds &= t.holds;
                    worst = worst.max((t.fitted_alpha0.unwrap() - t.alpha0).abs());
                    cases += 1;
                }
            }
        }
    }
    within(start, Duration::from_secs(1))?;
    check(holds && cases == 81 && worst <= 1e-2, format!("{cases} cases, bound holds {holds}, max alpha0 fit error {worst:.1e}"))
}

fn c9_lemmas() -> Outcome {
    let start = Instant::now();
    let family = random_family(10, 6, 0.1, &dom()).unwrap();
    let ctx = HarnessContext::with_defaults(&family);
    let params = SweepParams::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for l in LemmaId::ALL {
        let s = sweep_constant(l, &ctx, &params).unwrap();
        ok &= s.all_finite() && s.dispersion <= 10.0 && s.cases.len() >= 60;
        detail.push(format!("{l} {:.2}", s.dispersion));
    }
    let quad = QuadratureConfig::tensor(8, 4);
    let (mut sob, mut cz): (f64, f64) = (0.0, 0.0);
    for t in &family {
        for c in &params.centers {
            let x0 = point_from_slice(c);
            for &rho in &params.scales {
                let ball = Ball::new(6, x0, rho).unwrap();
                sob = sob.max(sobolev_check(t, &ball, &quad).unwrap().ratio);
            }
            let dec = PressureDecomposition::new(t, &x0, 1.0, &PressureConfig::with_grid(8)).unwrap();
            cz = cz.max(cz_ratio(t, &dec, &quad).unwrap().ratio);
        }
    }
    ok &= sob <= 100.0 && cz <= 100.0;
    within(start, Duration::from_secs(1800))?;
    check(ok, format!("dispersion {}; Sobolev max {sob:.2e}, CZ max {cz:.2e}", detail.join(", ")))
}

fn run_cli(args: &[&str], out: &Path, workers: usize) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_nsreg"))
        .args(args)
        .args(["--reproducible", "--workers", &workers.to_string(), "--out"])
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success(), "nsreg {args:?} failed");
    std::fs::read(out).unwrap()
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 5\n[quadrature]\nmethod = \"monte_carlo\"\nsamples = 40000\n[pressure]\ngrid_n = 8\n[energy]\ncount = 6\n[sweep]\ncenter = [0.1, 0.0, 0.0, 0.0, 0.0, 0.0]\nr_max = 1.0\nlevels = 3\n[detect.grid]\ncenter = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]\nhalf_width = 1.0\nper_axis = 3\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let runs: [&[&str]; 4] = [
        &["sweep", "--config", cfg, "--field", "random_divfree:seed=3,amplitude=0.1"],
        &["sweep", "--config", cfg, "--field", "taylor_green6", "--format", "json"],
        &["check-energy", "--config", cfg, "--field", "rotation", "--format", "csv"],
        &["detect", "--config", cfg, "--field", "singular_rotation"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let reference = run_cli(args, &dir.path().join(format!("ref{i}")), 1);
        for w in [1, 4, 16] {
            let again = run_cli(args, &dir.path().join(format!("out{i}_{w}")), w);
            if again != reference {
                return Err(format!("{} differs with {w} workers", args[0]));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} reruns byte-identical to the single-worker reference"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("analytic quantity values", c1_analytic_values),
        ("natural-scaling invariance", c2_scaling),
        ("psi2 closed form", c3_psi2),
        ("energy identity", c4_energy),
        ("pressure decomposition", c5_pressure),
        ("detector discrimination", c6_detector),
        ("bootstrap schedule", c7_schedule),
        ("decay iteration", c8_decay),
        ("lemma constant sweeps", c9_lemmas),
        ("determinism", c10_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {} ({name}): {d} [{secs:.1} s]", i + 1),
            Err(d) => {
                println!("FAIL criterion {} ({name}): {d} [{secs:.1} s]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
