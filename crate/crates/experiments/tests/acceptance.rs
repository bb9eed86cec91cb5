//! Acceptance report: one PASS/FAIL line per criterion. Exits non-zero on any FAIL.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use nmqfi_core::dynamics::{solve_u_with, BranchCut, SolverOptions};
use nmqfi_core::gaussian::*;
use nmqfi_core::metrology::*;
use nmqfi_core::quadrature::Quadrature;
use nmqfi_core::spectral::*;
use nmqfi_core::C64;
use nmqfi_experiments::config::parse_config;
use nmqfi_experiments::output::Cell;
use nmqfi_experiments::scenarios::{compute, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ideal_scaling() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in [0.5, 1f64.asinh(), 10f64.asinh()] {
        let sq = SqueezingParam::new(r).unwrap();
        let p = SpectralParams::reference(10.0).unwrap().with_eta(0.0).unwrap();
        let opts = SolverOptions {
            h: 0.05,
            ..SolverOptions::new(&p)
        };
        let s = qfi_series_with(&p, sq, 10.0, &opts, 1).map_err(|e| e.to_string())?;
        let n = sq.mean_photons();
        for t in [1.0, 10.0] {
            let k = s.t.iter().position(|&x| (x - t).abs() < 1e-9).ok_or("grid misses t")?;
            worst = worst.max(rel(s.f_total[k], 4.0 * (n * n + 2.0 * n) * t * t));
        }
    }
    ensure(worst <= 1e-8, format!("max rel err {worst:.2e} (tol 1e-8)"))
}

/// Fidelity of two displacement-free single-mode Gaussian states.
fn fidelity(s1: &DMatrix<C64>, s2: &DMatrix<C64>) -> f64 {
    let big = (s1 + s2).determinant().re;
    let small = (s1.determinant().re - 1.0) * (s2.determinant().re - 1.0);
    2.0 / ((big + small).sqrt() - small.sqrt())
}

fn qfi_cross_validation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = DVector::zeros(2);
    let mut pure_err: f64 = 0.0;
    let mut regularized = true;
    for _ in 0..20 {
        let r = SqueezingParam::new(rng.gen_range(0.1..3.0)).unwrap();
        let u = C64::from_polar(1.0, rng.gen_range(0.0..6.0));
        let v = C64::new(0.0, -rng.gen_range(0.1..20.0)) * u;
        let s = dissipative_covariance(r, u).unwrap();
        let ds = dissipative_covariance_derivative(r, u, v);
        let pure = qfi_pure(s.covariance(), &z, &ds, &z).map_err(|e| e.to_string())?;
        let general = qfi_general(s.covariance(), &z, &ds, &z).map_err(|e| e.to_string())?;
        regularized &= general.regularized;
        pure_err = pure_err.max(rel(general.value, pure));
    }
    let h = 1e-4;
    let mut fd_err: f64 = 0.0;
    for _ in 0..20 {
        let r = SqueezingParam::new(rng.gen_range(0.1..2.0)).unwrap();
        let u = C64::from_polar(rng.gen_range(0.1..0.95), rng.gen_range(0.0..std::f64::consts::TAU));
        let v = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let lo = dissipative_covariance(r, u - 0.5 * h * v).unwrap();
        let hi = dissipative_covariance(r, u + 0.5 * h * v).unwrap();
        let oracle = 8.0 * (1.0 - fidelity(lo.covariance(), hi.covariance()).sqrt()) / (h * h);
        let s = dissipative_covariance(r, u).unwrap();
        let ds = dissipative_covariance_derivative(r, u, v);
        let got = qfi_general(s.covariance(), &z, &ds, &z)
            .map_err(|e| e.to_string())?
            .value;
        fd_err = fd_err.max(rel(got, oracle));
    }
    ensure(
        pure_err <= 1e-6 && regularized && fd_err <= 1e-4,
        format!("pure-state rel err {pure_err:.2e} (tol 1e-6, pseudo-inverse used: {regularized}); fidelity oracle rel err {fd_err:.2e} (tol 1e-4)"),
    )
}

fn markov_optimum() -> Outcome {
    let (n_bar, zeta) = (200.0, 0.37);
    let opt = bma_optimum(n_bar, zeta).map_err(|e| e.to_string())?;
    let x = opt.t_star * zeta;
    let c = opt.f_max * zeta * zeta / n_bar;
    ensure(
        (x - 0.7968).abs() <= 1e-4 && rel(c, 0.3237) <= 5e-3,
        format!("t*ζ = {x:.6} (0.7968 ± 1e-4), max F = {c:.5} n̄/ζ² (0.3237 ± 0.5%)"),
    )
}

fn bound_state_threshold_check() -> Outcome {
    let p = SpectralParams::reference(10.0).unwrap();
    let formula = bound_state_threshold(&p);
    let exists = |wc: f64| find_bound_state(&p.with_omega_c(wc).unwrap()).map(|b| b.is_some());
    let (mut lo, mut hi) = (3.0, 12.0);
    if exists(lo).map_err(|e| e.to_string())? || !exists(hi).map_err(|e| e.to_string())? {
        return Err("existence flag does not bracket the threshold".into());
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if exists(mid).map_err(|e| e.to_string())? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let flip = 0.5 * (lo + hi);
    let e_b = find_bound_state(&p)
        .map_err(|e| e.to_string())?
        .ok_or("no bound state at ω_c = 10")?
        .energy;
    let ev = discretized_spectrum(&p, 2000, 50.0 * p.omega_c()).map_err(|e| e.to_string())?;
    let lowest = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let gap = (lowest - e_b).abs();
    ensure(
        (flip - formula).abs() <= 1e-3 && (formula - 6.770).abs() < 1e-3 && gap <= 1e-3,
        format!("flag flips at {flip:.5}, formula {formula:.5}; discretized lowest {lowest:.5} vs E_b {e_b:.5} (gap {gap:.1e}, tol 1e-3)"),
    )
}

fn figure1b() -> Outcome {
    let t = 2000.0;
    let mut msgs = Vec::new();
    let mut ok = true;
    for wc in [3.0, 4.0, 5.0, 8.0, 9.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        let opts = SolverOptions {
            sensitivity: false,
            ..SolverOptions::new(&p)
        };
        let solver = solve_u_with(&p, t, &opts).map_err(|e| format!("ω_c={wc}: {e}"))?;
        let a = solver.u.last().unwrap().norm();
        let b = BranchCut::new(&p)
            .and_then(|c| c.evaluate(t))
            .map_err(|e| format!("ω_c={wc}: {e}"))?
            .0
            .norm();
        let z = find_bound_state(&p).unwrap().map_or(0.0, |bs| bs.residue);
        let paths_agree = (a - b).abs() <= 0.03 * a.max(b) || a.max(b) < 1e-2;
        let matches = if z > 0.0 { rel(a, z) <= 0.02 } else { a < 1e-2 };
        ok &= paths_agree && matches;
        msgs.push(format!("ω_c={wc}: |u|={a:.4e} asym={b:.4e} Z={z:.4}"));
    }
    ensure(ok, msgs.join("; "))
}

fn figure1d() -> Outcome {
    let r = SqueezingParam::from_mean_photons(200.0).unwrap();
    let mut ok = true;
    let mut msgs = Vec::new();
    for wc in [8.0, 9.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        let s = qfi_series_with(&p, r, 500.0, &SolverOptions::new(&p), 10).map_err(|e| e.to_string())?;
        let fit = fit_final_decade(&s.t, &s.f_plus).map_err(|e| e.to_string())?;
        let expect = qfi_boundstate_largen(200.0, s.bound_state.as_ref(), 1.0, None).map_err(|e| e.to_string())?;
        let ratio = fit.t2_coefficient / expect;
        ok &= (ratio - 1.0).abs() <= 0.05;
        msgs.push(format!("ω_c={wc}: ratio {ratio:.4} (slope {:.3})", fit.exponent));
    }
    ensure(ok, msgs.join("; "))
}

fn figure2_positivity() -> Outcome {
    let cfg = parse_config("").map_err(|e| e.to_string())?;
    let mut worst_a = f64::INFINITY;
    let mut worst_b = f64::INFINITY;
    let col = |c: &Cell| match *c {
        Cell::F(x) => x,
        Cell::I(i) => i as f64,
    };
    let a = compute(&cfg, Scenario::Figure2a);
    for t in &a.tables {
        for row in &t.rows {
            worst_a = worst_a.min(col(&row[4]));
        }
    }
    let b = compute(&cfg, Scenario::Figure2b);
    for t in &b.tables {
        for row in &t.rows {
            worst_b = worst_b.min(col(&row[3]));
        }
    }
    let converged = a.points.iter().chain(&b.points).all(|p| p.converged);
    ensure(
        converged && worst_a > 0.0 && worst_b > 0.0,
        format!("min max δF⁺ = {worst_a:.4e}, min ΔF⁺ = {worst_b:.4e}, all points converged: {converged}"),
    )
}

fn residue_identity() -> Outcome {
    let d = 1e-4;
    let mut worst: f64 = 0.0;
    for (eta, s, wc, kappa) in [
        (0.05, 0.5, 8.0, 0.2),
        (0.05, 0.5, 10.0, 0.2),
        (0.1, 0.5, 5.0, 0.1),
        (0.05, 1.0, 20.0, 0.3),
        (0.2, 1.5, 4.0, 0.2),
    ] {
        let p = SpectralParams::new(eta, s, wc, 1.0, kappa).unwrap();
        let bound = |k: f64| {
            find_bound_state(&p.with_kappa(k).unwrap())
                .map_err(|e| e.to_string())?
                .ok_or_else(|| "no bound state".to_string())
        };
        let z = bound(kappa)?.residue;
        let slope = (bound(kappa + d)?.energy - bound(kappa - d)?.energy) / (2.0 * d);
        worst = worst.max(rel(slope, z));
    }
    ensure(
        worst <= 1e-4,
        format!("max rel gap {worst:.2e} over 5 points (tol 1e-4)"),
    )
}

fn direct_kernel(p: &SpectralParams, x: f64) -> C64 {
    let q = Quadrature {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_segments: 50_000,
    };
    let wc = p.omega_c();
    let f = |w: f64| C64::from_polar(j_omega(p, w).unwrap(), -w * x);
    let head = q
        .integrate(|y: f64| f(y * y) * (2.0 * y), 0.0, wc.sqrt())
        .unwrap()
        .value;
    let mut tail = C64::new(0.0, 0.0);
    for k in 1..60 {
        tail += q.integrate(f, k as f64 * wc, (k + 1) as f64 * wc).unwrap().value;
    }
    head + tail
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = Vec::new();

    let valid = |s: &GaussianState| {
        let scale = 1.0 + max_abs(s.covariance());
        s.hermiticity_defect() <= 1e-12 * scale && s.is_physical(1e-9 * scale)
    };
    let mut physical = true;
    for _ in 0..32 {
        let r = SqueezingParam::new(rng.gen_range(0.0..3.0)).unwrap();
        let t = rng.gen_range(0.0..50.0);
        let u = C64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..6.3));
        let tmsv = make_tmsv(r);
        let evolved = ideal_evolve(&tmsv, 1.0, 0.2, t).unwrap();
        let (plus, minus) = mode_split(&evolved).unwrap();
        let rejoined = mode_join(&plus, &minus).unwrap();
        let mixed = dissipative_covariance(r, u).unwrap();
        physical &= [&tmsv, &evolved, &plus, &minus, &rejoined, &mixed]
            .iter()
            .all(|s| valid(s));
    }
    if !physical {
        failures.push("physicality".to_string());
    }

    let mut additivity: f64 = 0.0;
    let z4 = DVector::zeros(4);
    for _ in 0..32 {
        let r = SqueezingParam::new(rng.gen_range(0.1..2.5)).unwrap();
        let mut draw = || {
            (
                C64::from_polar(rng.gen_range(0.05..0.99), rng.gen_range(0.0..6.3)),
                C64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            )
        };
        let ((up, vp), (um, vm)) = (draw(), draw());
        let joint = mode_join(
            &dissipative_covariance(r, up).unwrap(),
            &dissipative_covariance(r, um).unwrap(),
        )
        .unwrap();
        let dj = join_blocks(
            &dissipative_covariance_derivative(r, up, vp),
            &dissipative_covariance_derivative(r, um, vm),
        )
        .unwrap();
        let total = qfi_general(joint.covariance(), &z4, &dj, &z4).unwrap().value;
        let parts = qfi_plus(r, up, vp).unwrap() + qfi_plus(r, um, vm).unwrap();
        additivity = additivity.max(rel(total, parts));
    }
    if additivity > 1e-10 {
        failures.push(format!("additivity {additivity:.1e}"));
    }

    let mut kernel: f64 = 0.0;
    for wc in [3.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        for x in [0.0, 0.3, 1.0, 4.0, 12.5, 30.0, 50.0] {
            kernel = kernel.max((kernel_mu(&p, x) - direct_kernel(&p, x)).norm() / kernel_mu(&p, x).norm());
        }
    }
    if kernel > 1e-8 {
        failures.push(format!("kernel {kernel:.1e}"));
    }

    let mut halving = true;
    for wc in [3.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        let opts = SolverOptions::new(&p);
        let tr = solve_u_with(&p, 100.0, &opts).map_err(|e| e.to_string())?;
        halving &= tr.meta.diff_u <= opts.tol && tr.meta.diff_v <= opts.tol;
    }
    if !halving {
        failures.push("step halving".to_string());
    }

    let msg = format!("physical: {physical}; additivity {additivity:.1e} (tol 1e-10); kernel {kernel:.1e} (tol 1e-8); halving below tol: {halving}");
    ensure(failures.is_empty(), msg)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ideal scaling 4(n̄²+2n̄)t²", ideal_scaling),
        ("QFI formula cross-validation", qfi_cross_validation),
        ("Markovian optimum", markov_optimum),
        ("bound-state threshold", bound_state_threshold_check),
        ("long-time |u| against Z", figure1b),
        ("bound-state t² asymptote", figure1d),
        ("non-Markovian advantage positivity", figure2_positivity),
        ("∂κE_b = Z", residue_identity),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("PASS  {name}: {msg} [{secs:.1} s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name}: {msg} [{secs:.1} s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
