//! Cross-checks against independent computations.

use nalgebra::{DMatrix, DVector};
use nmqfi_core::dynamics::{solve_u_with, u_bma, BranchCut, SolverOptions};
use nmqfi_core::gaussian::{char_fn, make_tmsv, qfi_general, qfi_pure, SqueezingParam};
use nmqfi_core::metrology::{dissipative_covariance, dissipative_covariance_derivative, qfi_plus};
use nmqfi_core::quadrature::Quadrature;
use nmqfi_core::spectral::*;
use nmqfi_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn factorial_ratio_sqrt(big: usize, small: usize) -> f64 {
    // sqrt(small! / big!)
    (small + 1..=big).map(|k| 1.0 / (k as f64).sqrt()).product()
}

fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let (mut l0, mut l1) = (1.0, 1.0 + alpha - x);
    if n == 0 {
        return l0;
    }
    for k in 1..n {
        let kf = k as f64;
        let l2 = ((2.0 * kf + 1.0 + alpha - x) * l1 - (kf + alpha) * l0) / (kf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// `⟨m|D(β)|n⟩` for the displacement `exp(βa† − β*a)`.
fn displacement_element(m: usize, n: usize, beta: C64) -> C64 {
    let x = beta.norm_sqr();
    let g = (-0.5 * x).exp();
    if m >= n {
        let k = m - n;
        beta.powu(k as u32) * (g * factorial_ratio_sqrt(m, n) * laguerre(n, k as f64, x))
    } else {
        let k = n - m;
        (-beta.conj()).powu(k as u32) * (g * factorial_ratio_sqrt(n, m) * laguerre(m, k as f64, x))
    }
}

#[test]
fn characteristic_function_against_fock_space() {
    let r: f64 = 0.3;
    let cut = 30;
    let coeffs: Vec<f64> = (0..cut).map(|n| (-r.tanh()).powi(n as i32) / r.cosh()).collect();
    let state = make_tmsv(SqueezingParam::new(r).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let a1 = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let a2 = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        // exp(−i(α a† + α* a)) = D(−iα) on each mode.
        let (b1, b2) = (C64::new(0.0, -1.0) * a1, C64::new(0.0, -1.0) * a2);
        let mut chi = C64::new(0.0, 0.0);
        for n in 0..cut {
            for k in 0..cut {
                chi += coeffs[n] * coeffs[k] * displacement_element(n, k, b1) * displacement_element(n, k, b2);
            }
        }
        let gamma = DVector::from_vec(vec![a1, a2, a1.conj(), a2.conj()]);
        let got = char_fn(&state, &gamma).unwrap();
        assert!((got - chi).norm() < 1e-10, "{got} vs {chi}");
    }
}

/// Fidelity of two displacement-free single-mode Gaussian states.
fn fidelity(s1: &DMatrix<C64>, s2: &DMatrix<C64>) -> f64 {
    let big = (s1 + s2).determinant().re;
    let small = (s1.determinant().re - 1.0) * (s2.determinant().re - 1.0);
    2.0 / ((big + small).sqrt() - small.sqrt())
}

#[test]
fn mixed_state_qfi_against_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-4;
    for _ in 0..20 {
        let r = SqueezingParam::new(rng.gen_range(0.1..2.0)).unwrap();
        let u = C64::from_polar(rng.gen_range(0.1..0.95), rng.gen_range(0.0..std::f64::consts::TAU));
        let v = C64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let lo = dissipative_covariance(r, u - 0.5 * h * v).unwrap();
        let hi = dissipative_covariance(r, u + 0.5 * h * v).unwrap();
        let f = fidelity(lo.covariance(), hi.covariance());
        let oracle = 8.0 * (1.0 - f.sqrt()) / (h * h);
        let got = qfi_plus(r, u, v).unwrap();
        assert!((got - oracle).abs() < 1e-4 * oracle, "{got} vs {oracle}");
    }
}

#[test]
fn single_mode_closed_form_agrees() {
    // F = ½Tr[(σ⁻¹σ')²]/(1 + P²) + 2P'²/(1 − P⁴) with purity P = 1/√det σ.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let r = SqueezingParam::new(rng.gen_range(0.1..3.0)).unwrap();
        let u = C64::from_polar(rng.gen_range(0.05..0.99), rng.gen_range(0.0..6.0));
        let v = C64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let s = dissipative_covariance(r, u).unwrap();
        let ds = dissipative_covariance_derivative(r, u, v);
        let sig = s.covariance();
        let inv = sig.clone().try_inverse().unwrap();
        let a = &inv * &ds;
        let det = sig.determinant().re;
        let ddet = (det * (&inv * &ds).trace()).re;
        let p = det.powf(-0.5);
        let dp = -0.5 * det.powf(-1.5) * ddet;
        let expect = 0.5 * (&a * &a).trace().re / (1.0 + p * p) + 2.0 * dp * dp / (1.0 - p.powi(4));
        let got = qfi_general(sig, &DVector::zeros(2), &ds, &DVector::zeros(2)).unwrap();
        assert!((got.value - expect).abs() < 1e-9 * expect, "{} vs {expect}", got.value);
    }
}

#[test]
fn general_and_pure_formulas_agree_on_pure_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let r = SqueezingParam::new(rng.gen_range(0.1..3.0)).unwrap();
        let u = C64::from_polar(1.0, rng.gen_range(0.0..6.0));
        let t = rng.gen_range(0.1..20.0);
        let v = C64::new(0.0, -t) * u;
        let s = dissipative_covariance(r, u).unwrap();
        let ds = dissipative_covariance_derivative(r, u, v);
        let z = DVector::zeros(2);
        let pure = qfi_pure(s.covariance(), &z, &ds, &z).unwrap();
        let general = qfi_general(s.covariance(), &z, &ds, &z).unwrap();
        assert!((pure - general.value).abs() < 1e-6 * pure);
    }
}

fn direct_kernel(p: &SpectralParams, x: f64) -> C64 {
    let q = Quadrature {
        abs_tol: 1e-14,
        rel_tol: 1e-11,
        max_segments: 50_000,
    };
    let wc = p.omega_c();
    let f = |w: f64| C64::from_polar(j_omega(p, w).unwrap(), -w * x);
    // ω = y² removes the square-root endpoint behavior.
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

#[test]
fn kernel_closed_form_against_quadrature() {
    for wc in [3.0, 5.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        for x in [0.0, 0.05, 0.3, 1.0, 4.0, 12.5, 30.0, 50.0] {
            let a = kernel_mu(&p, x);
            let b = direct_kernel(&p, x);
            assert!((a - b).norm() < 1e-8 * a.norm(), "wc {wc} x {x}: {a} vs {b}");
        }
    }
}

#[test]
fn lamb_shift_below_band_against_plain_quadrature() {
    let p = SpectralParams::reference(3.0).unwrap();
    let q = Quadrature {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_segments: 10_000,
    };
    for e in [-0.01, -0.5, -3.0, -20.0] {
        let lam = 50.0 * 3.0;
        let head = q
            .integrate(
                |y: f64| 2.0 * j_omega(&p, y * y).unwrap() / (e - y * y) * 2.0 * y,
                0.0,
                1.0,
            )
            .unwrap()
            .value;
        let tail = q
            .integrate(|w: f64| 2.0 * j_omega(&p, w).unwrap() / (e - w), 1.0, lam)
            .unwrap()
            .value;
        let got = lamb_shift(&p, e).unwrap();
        assert!((got - head - tail).abs() < 1e-8 * got.abs(), "E = {e}");
    }
}

#[test]
fn principal_value_against_symmetric_folding() {
    // P∫₀^Λ f(ω)/(E−ω) dω = ∫₀^E [f(E−x) − f(E+x)]/x dx + ∫_{2E}^Λ f(ω)/(E−ω) dω.
    let q = Quadrature {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_segments: 10_000,
    };
    for wc in [3.0, 5.0] {
        let p = SpectralParams::reference(wc).unwrap();
        let lam = 50.0 * wc;
        for e in [0.3, 1.2, 4.0] {
            let j = |w: f64| 2.0 * j_omega(&p, w).unwrap();
            let folded = q
                .integrate(|x: f64| if x == 0.0 { 0.0 } else { (j(e - x) - j(e + x)) / x }, 0.0, e)
                .unwrap()
                .value;
            let rest = q
                .integrate(|w: f64| j(w) / (e - w), 2.0 * e, wc.max(2.0 * e))
                .unwrap()
                .value
                + q.integrate(|w: f64| j(w) / (e - w), wc.max(2.0 * e), lam)
                    .unwrap()
                    .value;
            let got = lamb_shift(&p, e).unwrap();
            assert!(
                (got - folded - rest).abs() < 1e-8 * (1.0 + got.abs()),
                "wc {wc} E {e}: {got}"
            );
        }
    }
}

#[test]
fn dense_and_secular_spectra_agree() {
    for wc in [3.0, 10.0] {
        let p = SpectralParams::reference(wc).unwrap();
        let h = single_excitation_hamiltonian(&p, 60, 10.0 * wc).unwrap();
        let mut dense: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        let secular = discretized_spectrum(&p, 60, 10.0 * wc).unwrap();
        assert_eq!(dense.len(), secular.len());
        for (a, b) in dense.iter().zip(&secular) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
        assert!(secular.iter().any(|&x| (x - p.omega_minus()).abs() < 1e-14));
    }
}

#[test]
fn residue_is_bound_energy_slope() {
    let d = 1e-4;
    for (eta, s, wc, kappa) in [
        (0.05, 0.5, 8.0, 0.2),
        (0.05, 0.5, 10.0, 0.2),
        (0.1, 0.5, 5.0, 0.1),
        (0.05, 1.0, 20.0, 0.3),
        (0.2, 1.5, 4.0, 0.2),
    ] {
        let p = SpectralParams::new(eta, s, wc, 1.0, kappa).unwrap();
        let z = find_bound_state(&p).unwrap().unwrap().residue;
        let e = |k: f64| find_bound_state(&p.with_kappa(k).unwrap()).unwrap().unwrap().energy;
        let slope = (e(kappa + d) - e(kappa - d)) / (2.0 * d);
        assert!((slope - z).abs() < 1e-4 * z, "{slope} vs {z}");
    }
}

#[test]
fn residue_derivative_against_finite_difference() {
    let p = SpectralParams::reference(10.0).unwrap();
    let d = 1e-4;
    let bs = find_bound_state(&p).unwrap().unwrap();
    let z = |k: f64| find_bound_state(&p.with_kappa(k).unwrap()).unwrap().unwrap().residue;
    let fd = (z(0.2 + d) - z(0.2 - d)) / (2.0 * d);
    let got = residue_kappa_derivative(&p, &bs).unwrap();
    assert!((got - fd).abs() < 1e-5 * fd.abs(), "{got} vs {fd}");
}

fn fd_sensitivity_gap(p: &SpectralParams, t_max: f64) -> (f64, f64) {
    let d = 1e-4;
    let o = SolverOptions {
        h: 0.025,
        tol: 1.0,
        sensitivity: true,
        max_refinements: 0,
        richardson: true,
    };
    let base = solve_u_with(p, t_max, &o).unwrap();
    let hi = solve_u_with(&p.with_kappa(p.kappa() + d).unwrap(), t_max, &o).unwrap();
    let lo = solve_u_with(&p.with_kappa(p.kappa() - d).unwrap(), t_max, &o).unwrap();
    let v = base.v.unwrap();
    let mut gap: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (k, vk) in v.iter().enumerate() {
        gap = gap.max(((hi.u[k] - lo.u[k]) / (2.0 * d) - vk).norm());
        scale = scale.max(vk.norm());
    }
    (gap, scale)
}

#[test]
fn sensitivity_against_finite_difference() {
    // Without a bound state v stays small and the absolute gap is tested.
    let (gap, _) = fd_sensitivity_gap(&SpectralParams::reference(3.0).unwrap(), 50.0);
    assert!(gap < 1e-5, "gap {gap}");
    // With one, |v| grows like t; the finite difference carries an O(δ²t³)
    // truncation error, so the gap is measured relative to max |v|.
    let (gap, scale) = fd_sensitivity_gap(&SpectralParams::reference(10.0).unwrap(), 50.0);
    assert!(gap / scale < 1e-5, "gap {gap} scale {scale}");
}

#[test]
fn markov_limit_tracks_exact_solution_at_weak_coupling() {
    let p = SpectralParams::new(0.005, 0.5, 3.0, 1.0, 0.2).unwrap();
    let zeta = markov_rate(&p);
    let t_max = 5.0 / zeta;
    let o = SolverOptions {
        sensitivity: false,
        ..SolverOptions::new(&p)
    };
    let traj = solve_u_with(&p, t_max, &o).unwrap();
    for (t, u) in traj.t.iter().zip(&traj.u) {
        let m = u_bma(&p, *t).unwrap();
        assert!((m - u).norm() < 0.05, "t = {t}");
    }
}

#[test]
fn branch_cut_sum_rule_and_early_agreement() {
    let p = SpectralParams::reference(8.0).unwrap();
    let cut = BranchCut::new(&p).unwrap();
    let (u0, v0) = cut.evaluate(0.0).unwrap();
    assert!((u0 - 1.0).norm() < 0.05);
    assert!(v0.norm() < 1e-4);
    let traj = solve_u_with(&p, 20.0, &SolverOptions::new(&p)).unwrap();
    for k in (0..traj.len()).step_by(40) {
        let (ua, va) = cut.evaluate(traj.t[k]).unwrap();
        assert!((ua - traj.u[k]).norm() < 1e-4, "t = {}", traj.t[k]);
        assert!((va - traj.v.as_ref().unwrap()[k]).norm() < 1e-3 * (1.0 + traj.t[k]));
    }
}
