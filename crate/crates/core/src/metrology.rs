//! Fisher information of the probe about the coupling κ: the dissipative
//! center-of-mass covariance, exact and reference curves, and the
//! Born–Markov optimum.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::dynamics::{solve_u_with, BranchCut, DecoherenceTrajectory, SolverMeta, SolverOptions};
use crate::error::{Error, Result};
use crate::gaussian::{qfi_general, qfi_pure, GaussianState, SqueezingParam};
use crate::roots::{golden_section_max, lambert_w0};
use crate::spectral::{find_bound_state, markov_rate, BoundState, SpectralParams};

fn check_u(u: C64) -> Result<()> {
    if !(u.norm() <= 1.0 + 1e-6) {
        return Err(Error::InvalidParameter {
            name: "u",
            value: u.norm(),
            reason: "|u| must not exceed 1",
        });
    }
    Ok(())
}

/// Center-of-mass covariance after decoherence with amplitude `u`:
/// diagonal `1 + 2|u|² sinh²r`, off-diagonal `−sinh(2r) u²` and its conjugate.
pub fn dissipative_covariance(r: SqueezingParam, u: C64) -> Result<GaussianState> {
    check_u(u)?;
    let r = r.r();
    let diag = C64::new(1.0 + 2.0 * u.norm_sqr() * r.sinh().powi(2), 0.0);
    let off = -(2.0 * r).sinh() * u * u;
    let sigma = DMatrix::from_row_slice(2, 2, &[diag, off, off.conj(), diag]);
    GaussianState::new(DVector::zeros(2), sigma)
}

/// `∂σ₊/∂κ` by the chain rule through `u`, with `v = ∂u/∂κ`.
pub fn dissipative_covariance_derivative(r: SqueezingParam, u: C64, v: C64) -> DMatrix<C64> {
    let r = r.r();
    let diag = C64::new(4.0 * r.sinh().powi(2) * (u.conj() * v).re, 0.0);
    let off = -2.0 * (2.0 * r).sinh() * u * v;
    DMatrix::from_row_slice(2, 2, &[diag, off, off.conj(), diag])
}

/// Fisher information of the center-of-mass mode.
///
/// Pure states use the pure-state formula; mixed states use the general one.
pub fn qfi_plus(r: SqueezingParam, u: C64, v: C64) -> Result<f64> {
    let state = dissipative_covariance(r, u)?;
    let ds = dissipative_covariance_derivative(r, u, v);
    let zero = DVector::zeros(2);
    if state.is_pure() {
        qfi_pure(state.covariance(), &zero, &ds, &zero)
    } else {
        Ok(qfi_general(state.covariance(), &zero, &ds, &zero)?.value)
    }
}

/// Relative-motion mode: `2 sinh²(2r) t²`.
pub fn qfi_minus_ideal(r: SqueezingParam, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be non-negative",
        });
    }
    Ok(2.0 * (2.0 * r.r()).sinh().powi(2) * t * t)
}

/// Large-n̄ Born–Markov curve `n̄t²[coth(ζt) − 1] = 2n̄t²/(e^{2ζt} − 1)`.
pub fn qfi_bma_largen(n_bar: f64, zeta: f64, t: f64) -> Result<f64> {
    if !(zeta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "zeta",
            value: zeta,
            reason: "decay rate must be positive",
        });
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be positive",
        });
    }
    Ok(bma_curve(n_bar, zeta, t))
}

fn bma_curve(n_bar: f64, zeta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let x = 2.0 * zeta * t;
    if x > 700.0 {
        return 0.0;
    }
    2.0 * n_bar * t * t / x.exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmaOptimum {
    pub t_star: f64,
    pub f_max: f64,
}

/// Maximum of the large-n̄ Born–Markov curve by golden-section search on `(0, 20/ζ)`.
pub fn bma_optimum(n_bar: f64, zeta: f64) -> Result<BmaOptimum> {
    qfi_bma_largen(n_bar, zeta, 1.0)?;
    let (t_star, f_max) = golden_section_max(|t| bma_curve(n_bar, zeta, t), 0.0, 20.0 / zeta, 1e-12 / zeta);
    Ok(BmaOptimum { t_star, f_max })
}

/// Closed form: `ζt* = 1 + W₀(−2/e²)/2`, `F_max = 2x e^{−2x} n̄/ζ²` with `x = ζt*`.
pub fn bma_optimum_closed_form(n_bar: f64, zeta: f64) -> BmaOptimum {
    let x = 1.0 + 0.5 * lambert_w0(-2.0 * (-2f64).exp());
    BmaOptimum {
        t_star: x / zeta,
        f_max: 2.0 * x * (-2.0 * x).exp() * n_bar / (zeta * zeta),
    }
}

/// Bound-state asymptote `2Z²/(1 − Z²) (∂E_b/∂κ)² n̄t²`.
///
/// `de_b` defaults to the identity `∂E_b/∂κ = Z`.
pub fn qfi_boundstate_largen(n_bar: f64, bs: Option<&BoundState>, t: f64, de_b: Option<f64>) -> Result<f64> {
    let bs = bs.ok_or(Error::NoBoundState)?;
    let z = bs.residue;
    let de = de_b.unwrap_or(z);
    Ok(2.0 * z * z / (1.0 - z * z) * de * de * n_bar * t * t)
}

/// Fisher-information time series of the dissipative probe.
#[derive(Debug, Clone)]
pub struct QfiSeries {
    pub t: Vec<f64>,
    pub f_plus: Vec<f64>,
    pub f_minus: Vec<f64>,
    pub f_total: Vec<f64>,
    /// Large-n̄ Born–Markov reference.
    pub f_plus_bma: Vec<f64>,
    /// Bound-state asymptote (zeros when there is no bound state).
    pub f_plus_asym: Vec<f64>,
    pub u: Vec<C64>,
    pub params: SpectralParams,
    pub squeezing: SqueezingParam,
    pub bound_state: Option<BoundState>,
    pub trajectory_meta: SolverMeta,
}

/// Solves for `u`, `v` and evaluates every curve on the solver grid.
pub fn qfi_series(p: &SpectralParams, r: SqueezingParam, t_max: f64, h: f64, tol: f64) -> Result<QfiSeries> {
    let opts = SolverOptions {
        h,
        tol,
        ..SolverOptions::new(p)
    };
    qfi_series_with(p, r, t_max, &opts, 1)
}

/// As [`qfi_series`], keeping every `stride`-th grid point.
pub fn qfi_series_with(
    p: &SpectralParams,
    r: SqueezingParam,
    t_max: f64,
    opts: &SolverOptions,
    stride: usize,
) -> Result<QfiSeries> {
    let opts = SolverOptions {
        sensitivity: true,
        ..*opts
    };
    let traj = solve_u_with(p, t_max, &opts)?;
    series_from_trajectory(p, r, &traj, stride)
}

pub fn series_from_trajectory(
    p: &SpectralParams,
    r: SqueezingParam,
    traj: &DecoherenceTrajectory,
    stride: usize,
) -> Result<QfiSeries> {
    let v = traj.v.as_ref().ok_or(Error::InvalidParameter {
        name: "sensitivity",
        value: 0.0,
        reason: "trajectory carries no kappa-sensitivity",
    })?;
    let stride = stride.max(1);
    let n_bar = r.mean_photons();
    let zeta = markov_rate(p);
    let bound_state = find_bound_state(p)?;
    let idx: Vec<usize> = (0..traj.len()).step_by(stride).collect();
    let mut out = QfiSeries {
        t: Vec::with_capacity(idx.len()),
        f_plus: Vec::with_capacity(idx.len()),
        f_minus: Vec::with_capacity(idx.len()),
        f_total: Vec::with_capacity(idx.len()),
        f_plus_bma: Vec::with_capacity(idx.len()),
        f_plus_asym: Vec::with_capacity(idx.len()),
        u: Vec::with_capacity(idx.len()),
        params: *p,
        squeezing: r,
        bound_state,
        trajectory_meta: traj.meta.clone(),
    };
    for &k in &idx {
        let t = traj.t[k];
        let fp = qfi_plus(r, traj.u[k], v[k])?;
        let fm = qfi_minus_ideal(r, t)?;
        out.t.push(t);
        out.f_plus.push(fp);
        out.f_minus.push(fm);
        out.f_total.push(fp + fm);
        out.f_plus_bma
            .push(if zeta > 0.0 { bma_curve(n_bar, zeta, t) } else { 0.0 });
        out.f_plus_asym.push(match &bound_state {
            Some(bs) => qfi_boundstate_largen(n_bar, Some(bs), t, None)?,
            None => 0.0,
        });
        out.u.push(traj.u[k]);
    }
    Ok(out)
}

/// Center-of-mass Fisher information from the long-time evaluator at time `t`.
pub fn qfi_plus_asymptotic(cut: &BranchCut, r: SqueezingParam, t: f64) -> Result<f64> {
    let (u, v) = cut.evaluate(t)?;
    qfi_plus(r, u, v)
}

/// Least-squares power law `f ≈ c t^k` over the final decade `[t_end/10, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    /// Free-slope exponent `k`.
    pub exponent: f64,
    /// Prefactor with the exponent pinned to 2.
    pub t2_coefficient: f64,
    pub points: usize,
}

pub fn fit_final_decade(t: &[f64], f: &[f64]) -> Result<PowerFit> {
    if t.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            found: f.len(),
        });
    }
    let t_end = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(f)
        .filter(|(&ti, &fi)| ti >= 0.1 * t_end && ti > 0.0 && fi > 0.0)
        .map(|(&ti, &fi)| (ti.ln(), fi.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(PowerFit {
        exponent: sxy / sxx,
        t2_coefficient: (my - 2.0 * mx).exp(),
        points: pts.len(),
    })
}
