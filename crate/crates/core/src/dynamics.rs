//! Decoherence function `u(t)` of the center-of-mass mode and its
//! κ-sensitivity `v = ∂u/∂κ`.
//!
//! The exact path integrates `u̇ + iω₊u + 2∫₀ᵗ μ(t−τ)u(τ)dτ = 0` with a
//! product-integration trapezoid rule: the memory integral is done exactly for
//! the closed-form kernel against piecewise-linear `u`, and the local step is
//! the implicit trapezoid, which is linear in the unknown and solved in closed
//! form. The march runs in a rotating frame (at `ω₊`, or at the bound-state
//! energy when one exists), which makes free evolution exact and keeps the
//! persistent long-time component stationary. The κ-sensitivity is marched
//! alongside with the same weights, so `v` is the exact κ-derivative of the
//! discrete `u`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::spectral::{
    find_bound_state, kernel_mu, lamb_shift, markov_rate, residue_kappa_derivative, BoundState, SpectralParams,
};

/// `|u|` above this is reported as an instability.
pub const INSTABILITY_LIMIT: f64 = 1.0 + 1e-6;

/// Identifier of the memory kernel used by the solver.
pub const KERNEL_ID: &str = "ohmic-closed-form";

/// Default march step: fine enough for the kernel decay and for the phase.
pub fn default_step(p: &SpectralParams) -> f64 {
    (0.5 / p.omega_c()).min(0.05).min(0.05 / p.omega_plus())
}

/// Default self-convergence tolerance (scaled max norm).
pub const DEFAULT_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Output grid step; the march uses this step and its halves.
    pub h: f64,
    /// Bound on the scaled max-norm difference between steps `h` and `h/2`.
    pub tol: f64,
    /// Also integrate the κ-sensitivity.
    pub sensitivity: bool,
    /// Number of additional step halvings tried before giving up.
    pub max_refinements: usize,
    /// Return the Richardson combination `(4u_{h/2} − u_h)/3` instead of `u_{h/2}`.
    pub richardson: bool,
}

impl SolverOptions {
    pub fn new(p: &SpectralParams) -> Self {
        Self {
            h: default_step(p),
            tol: DEFAULT_TOL,
            sensitivity: true,
            max_refinements: 2,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    /// Output grid step.
    pub h: f64,
    /// Finest march step used.
    pub finest_h: f64,
    pub tol: f64,
    /// Scaled max-norm difference of `u` between the last two steps.
    pub diff_u: f64,
    /// Same for `v` (0 when the sensitivity was not integrated).
    pub diff_v: f64,
    pub refinements: usize,
    pub richardson: bool,
    pub kernel: &'static str,
}

/// `u` and `v = ∂u/∂κ` on a uniform grid `t_i = i·h`.
#[derive(Debug, Clone)]
pub struct DecoherenceTrajectory {
    pub t: Vec<f64>,
    pub u: Vec<C64>,
    pub v: Option<Vec<C64>>,
    pub meta: SolverMeta,
}

impl DecoherenceTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Solves for `u` and `v` on `[0, t_max]` with the given step and tolerance.
pub fn solve_u(p: &SpectralParams, t_max: f64, h: f64, tol: f64) -> Result<DecoherenceTrajectory> {
    let opts = SolverOptions {
        h,
        tol,
        ..SolverOptions::new(p)
    };
    solve_u_with(p, t_max, &opts)
}

pub fn solve_u_with(p: &SpectralParams, t_max: f64, opts: &SolverOptions) -> Result<DecoherenceTrajectory> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_max",
            value: t_max,
            reason: "final time must be positive",
        });
    }
    if !(opts.h > 0.0) || opts.h > t_max {
        return Err(Error::InvalidParameter {
            name: "h",
            value: opts.h,
            reason: "step must be positive and not exceed t_max",
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: opts.tol,
            reason: "tolerance must be positive",
        });
    }
    let n = (t_max / opts.h - 1e-9).ceil().max(1.0) as usize;
    let h = t_max / n as f64;

    let frame = frame_frequency(p)?;
    let mut coarse = march(p, frame, h, n, opts.sensitivity)?;
    let mut level_h = h;
    let mut refinements = 0;
    loop {
        let fine = march(p, frame, level_h / 2.0, 2 * coarse.len_steps(), opts.sensitivity)?;
        let diff_u = scaled_diff(&coarse.u, &fine.u);
        let diff_v = match (&coarse.v, &fine.v) {
            (Some(a), Some(b)) => scaled_diff(a, b),
            _ => 0.0,
        };
        let diff = diff_u.max(diff_v);
        if diff <= opts.tol {
            let stride = (level_h / h).round() as usize;
            let pick = |c: &[C64], f: &[C64]| -> Vec<C64> {
                (0..=n)
                    .map(|i| {
                        let (a, b) = (c[i * stride], f[2 * i * stride]);
                        if opts.richardson {
                            (4.0 * b - a) / 3.0
                        } else {
                            b
                        }
                    })
                    .collect()
            };
            let u = pick(&coarse.u, &fine.u);
            let v = match (&coarse.v, &fine.v) {
                (Some(a), Some(b)) => Some(pick(a, b)),
                _ => None,
            };
            let t = (0..=n).map(|i| i as f64 * h).collect();
            for (i, z) in u.iter().enumerate() {
                if z.norm() > INSTABILITY_LIMIT {
                    return Err(Error::SolverInstability {
                        t: i as f64 * h,
                        modulus: z.norm(),
                    });
                }
            }
            return Ok(DecoherenceTrajectory {
                t,
                u,
                v,
                meta: SolverMeta {
                    h,
                    finest_h: level_h / 2.0,
                    tol: opts.tol,
                    diff_u,
                    diff_v,
                    refinements,
                    richardson: opts.richardson,
                    kernel: KERNEL_ID,
                },
            });
        }
        if refinements >= opts.max_refinements {
            return Err(Error::SolverNonConvergence {
                h: level_h,
                diff,
                tol: opts.tol,
            });
        }
        refinements += 1;
        level_h /= 2.0;
        coarse = fine;
    }
}

fn scaled_diff(coarse: &[C64], fine: &[C64]) -> f64 {
    let mut num: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for (i, a) in coarse.iter().enumerate() {
        let b = fine[2 * i];
        num = num.max((a - b).norm());
        scale = scale.max(a.norm()).max(b.norm());
    }
    num / scale
}

struct March {
    u: Vec<C64>,
    v: Option<Vec<C64>>,
}

impl March {
    fn len_steps(&self) -> usize {
        self.u.len() - 1
    }
}

/// Cell moments of a kernel `k`: `A_m = ∫ k`, `B_m = ∫ k(x)(x − mh)/h` over `[mh, (m+1)h]`.
fn kernel_moments<K: Fn(f64) -> C64>(k: K, omega_c: f64, h: f64, n: usize) -> (Vec<C64>, Vec<C64>) {
    let (xg, wg) = gauss_legendre(10);
    // Cells near the origin sit close to the kernel's pole at x = i/ω_c.
    let near = ((h * omega_c / 0.25).ceil() as usize).max(1);
    let mut a = vec![C64::new(0.0, 0.0); n];
    let mut b = vec![C64::new(0.0, 0.0); n];
    for m in 0..n {
        let sub = if m < 4 { near } else { 1 };
        let width = h / sub as f64;
        let x0 = m as f64 * h;
        for q in 0..sub {
            let lo = x0 + q as f64 * width;
            let (c, hw) = (lo + 0.5 * width, 0.5 * width);
            for (x, w) in xg.iter().zip(&wg) {
                let x = c + hw * x;
                let f = k(x) * (w * hw);
                a[m] += f;
                b[m] += f * ((x - x0) / h);
            }
        }
    }
    (a, b)
}

/// Product-trapezoid weights from cell moments: `W_0 = A_0 − B_0`,
/// `W_k = A_k − B_k + B_{k−1}`; the `x_0` weight at step `m` is `B_{m−1}`.
/// Returned reversed (`rev[n − k] = W_k`) so history sums read forwards.
fn product_weights(a: &[C64], b: &[C64]) -> (C64, Soa) {
    let n = a.len();
    let mut rev = Soa::zeros(n + 1);
    rev.set(n, a[0] - b[0]);
    for k in 1..n {
        rev.set(n - k, a[k] - b[k] + b[k - 1]);
    }
    (a[0] - b[0], rev)
}

/// Split real/imaginary storage for the history sums.
struct Soa {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Soa {
    fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }
    fn set(&mut self, i: usize, z: C64) {
        self.re[i] = z.re;
        self.im[i] = z.im;
    }
    fn get(&self, i: usize) -> C64 {
        C64::new(self.re[i], self.im[i])
    }
}

const LANES: usize = 8;

/// `Σ w_k x_k` over equal-length slices with a fixed summation order.
fn cdot(wr: &[f64], wi: &[f64], xr: &[f64], xi: &[f64]) -> C64 {
    let mut sr = [0.0; LANES];
    let mut si = [0.0; LANES];
    let n = wr.len() / LANES * LANES;
    for (((a, b), c), d) in wr[..n]
        .chunks_exact(LANES)
        .zip(wi[..n].chunks_exact(LANES))
        .zip(xr[..n].chunks_exact(LANES))
        .zip(xi[..n].chunks_exact(LANES))
    {
        for l in 0..LANES {
            sr[l] += a[l] * c[l] - b[l] * d[l];
            si[l] += a[l] * d[l] + b[l] * c[l];
        }
    }
    let mut re = 0.0;
    let mut im = 0.0;
    for l in 0..LANES {
        re += sr[l];
        im += si[l];
    }
    for k in n..wr.len() {
        re += wr[k] * xr[k] - wi[k] * xi[k];
        im += wr[k] * xi[k] + wi[k] * xr[k];
    }
    C64::new(re, im)
}

/// Two dot products sharing one weight vector.
#[allow(clippy::too_many_arguments)]
fn cdot2(wr: &[f64], wi: &[f64], xr: &[f64], xi: &[f64], yr: &[f64], yi: &[f64]) -> (C64, C64) {
    let mut s = [[0.0; LANES]; 4];
    let n = wr.len() / LANES * LANES;
    for k in (0..n).step_by(LANES) {
        let (a, b) = (&wr[k..k + LANES], &wi[k..k + LANES]);
        let (c, d) = (&xr[k..k + LANES], &xi[k..k + LANES]);
        let (e, f) = (&yr[k..k + LANES], &yi[k..k + LANES]);
        for l in 0..LANES {
            s[0][l] += a[l] * c[l] - b[l] * d[l];
            s[1][l] += a[l] * d[l] + b[l] * c[l];
            s[2][l] += a[l] * e[l] - b[l] * f[l];
            s[3][l] += a[l] * f[l] + b[l] * e[l];
        }
    }
    let mut t = [0.0; 4];
    for (acc, lanes) in t.iter_mut().zip(&s) {
        for v in lanes {
            *acc += v;
        }
    }
    for k in n..wr.len() {
        t[0] += wr[k] * xr[k] - wi[k] * xi[k];
        t[1] += wr[k] * xi[k] + wi[k] * xr[k];
        t[2] += wr[k] * yr[k] - wi[k] * yi[k];
        t[3] += wr[k] * yi[k] + wi[k] * yr[k];
    }
    (C64::new(t[0], t[1]), C64::new(t[2], t[3]))
}

/// Frame frequency for the march: the bound-state energy when there is one,
/// so the persistent component is nearly stationary, otherwise `ω₊`.
fn frame_frequency(p: &SpectralParams) -> Result<f64> {
    Ok(match find_bound_state(p)? {
        Some(bs) => bs.energy,
        None => p.omega_plus(),
    })
}

/// Marches `w = e^{iΩt}u`, which obeys `ẇ = −i(ω₊ − Ω)w − 2∫₀ᵗ k(t−τ)w(τ)dτ`
/// with `k(x) = μ(x)e^{iΩx}`. `Ω` is held fixed under ∂κ, so `y = e^{iΩt}v`
/// obeys the same equation with the extra source `−iw`.
fn march(p: &SpectralParams, frame: f64, h: f64, n: usize, sensitivity: bool) -> Result<March> {
    let i = C64::new(0.0, 1.0);
    let detune = p.omega_plus() - frame;
    let k = |x: f64| kernel_mu(p, x) * C64::from_polar(1.0, frame * x);
    let (a, b) = kernel_moments(k, p.omega_c(), h, n);
    let (w0, rev) = product_weights(&a, &b);
    let den = 1.0 + 0.5 * h * (i * detune + 2.0 * w0);

    let mut w = Soa::zeros(n + 1);
    let mut y = Soa::zeros(if sensitivity { n + 1 } else { 0 });
    w.set(0, C64::new(1.0, 0.0));
    let mut fw = -i * detune - 2.0 * w0;
    let mut fy = -i;
    for m in 1..=n {
        // History: H_m = Σ_{j=1}^{m−1} W_{m−j} x_j + B_{m−1} x_0.
        let (lo, hi) = (n - m + 1, n);
        let (hw, hy) = if sensitivity {
            let (hw, hy) = cdot2(
                &rev.re[lo..hi],
                &rev.im[lo..hi],
                &w.re[1..m],
                &w.im[1..m],
                &y.re[1..m],
                &y.im[1..m],
            );
            (hw + b[m - 1] * w.get(0), hy + b[m - 1] * y.get(0))
        } else {
            let hw = cdot(&rev.re[lo..hi], &rev.im[lo..hi], &w.re[1..m], &w.im[1..m]);
            (hw + b[m - 1] * w.get(0), C64::new(0.0, 0.0))
        };
        let wn = (w.get(m - 1) + 0.5 * h * fw - h * hw) / den;
        if !(wn.norm() <= INSTABILITY_LIMIT) {
            return Err(Error::SolverInstability {
                t: m as f64 * h,
                modulus: wn.norm(),
            });
        }
        w.set(m, wn);
        fw = -i * detune * wn - 2.0 * (w0 * wn + hw);
        if sensitivity {
            let yn = (y.get(m - 1) + 0.5 * h * fy - 0.5 * h * i * wn - h * hy) / den;
            y.set(m, yn);
            fy = -i * detune * yn - i * wn - 2.0 * (w0 * yn + hy);
        }
    }
    let rot = |m: usize| C64::from_polar(1.0, -frame * m as f64 * h);
    let u = (0..=n).map(|m| rot(m) * w.get(m)).collect();
    let v = sensitivity.then(|| (0..=n).map(|m| rot(m) * y.get(m)).collect());
    Ok(March { u, v })
}

/// Born–Markov decoherence function `e^{−[ζ + i(ω₊ + Δ(ω₊))]t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovDecay {
    pub zeta: f64,
    pub shift: f64,
    pub omega_plus: f64,
}

impl MarkovDecay {
    pub fn new(p: &SpectralParams) -> Result<Self> {
        Ok(Self {
            zeta: markov_rate(p),
            shift: lamb_shift(p, p.omega_plus())?,
            omega_plus: p.omega_plus(),
        })
    }

    pub fn u(&self, t: f64) -> C64 {
        (-C64::new(self.zeta, self.omega_plus + self.shift) * t).exp()
    }
}

pub fn u_bma(p: &SpectralParams, t: f64) -> Result<C64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be non-negative",
        });
    }
    Ok(MarkovDecay::new(p)?.u(t))
}

/// Long-time evaluator: bound-state pole plus the branch-cut integral
/// `∫ 2J(E) e^{−iEt} / ([E − ω₊ − Δ(E)]² + [2πJ(E)]²) dE`.
///
/// `Δ(E)` is tabulated once on a grid uniform in `w = E^{1/q}` and
/// interpolated with four-point Lagrange stencils; the integral itself is done
/// in `w` with Gauss–Legendre panels no wider than half an oscillation period.
#[derive(Debug, Clone)]
pub struct BranchCut {
    params: SpectralParams,
    bound: Option<BoundState>,
    residue_derivative: f64,
    q: f64,
    w_max: f64,
    dw_table: f64,
    shift_table: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Absolute tolerance on the panel-halving error estimate.
    pub tol: f64,
}

const BRANCH_CUT_EXTENT: f64 = 40.0;
const SHIFT_TABLE_SIZE: usize = 4000;
const MIN_PANELS: usize = 2000;

impl BranchCut {
    pub fn new(p: &SpectralParams) -> Result<Self> {
        let bound = find_bound_state(p)?;
        let residue_derivative = match &bound {
            Some(bs) => residue_kappa_derivative(p, bs)?,
            None => 0.0,
        };
        let q = (1.0 / p.s()).max(2.0);
        let w_max = (BRANCH_CUT_EXTENT * p.omega_c()).powf(1.0 / q);
        let dw_table = w_max / SHIFT_TABLE_SIZE as f64;
        let mut shift_table = Vec::with_capacity(SHIFT_TABLE_SIZE + 3);
        for k in 0..SHIFT_TABLE_SIZE + 3 {
            let e = (k as f64 * dw_table).powf(q);
            shift_table.push(lamb_shift(p, e)?);
        }
        let (nodes, weights) = gauss_legendre(20);
        Ok(Self {
            params: *p,
            bound,
            residue_derivative,
            q,
            w_max,
            dw_table,
            shift_table,
            nodes,
            weights,
            tol: 1e-7,
        })
    }

    pub fn bound_state(&self) -> Option<BoundState> {
        self.bound
    }

    /// `∂Z/∂κ` (zero without a bound state).
    pub fn residue_derivative(&self) -> f64 {
        self.residue_derivative
    }

    fn shift(&self, w: f64) -> f64 {
        let x = w / self.dw_table;
        let k = (x.floor() as usize).clamp(1, SHIFT_TABLE_SIZE);
        let s = x - k as f64;
        let f = &self.shift_table[k - 1..k + 3];
        // Lagrange weights at nodes −1, 0, 1, 2.
        let c0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let c1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let c2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let c3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        c0 * f[0] + c1 * f[1] + c2 * f[2] + c3 * f[3]
    }

    /// Integrand pair `(ρ, ∂ρ/∂κ)` times the Jacobian, at `w`.
    fn density(&self, w: f64) -> (f64, f64) {
        if w <= 0.0 {
            return (0.0, 0.0);
        }
        let p = &self.params;
        let e = w.powf(self.q);
        let jac = self.q * e / w;
        let j = p.j(e);
        let detune = e - p.omega_plus() - self.shift(w);
        let gamma = 2.0 * std::f64::consts::PI * j;
        let d = detune * detune + gamma * gamma;
        (2.0 * j / d * jac, 4.0 * j * detune / (d * d) * jac)
    }

    fn panel_edges(&self, t: f64, split: usize) -> Vec<f64> {
        let dw_cap = self.w_max / MIN_PANELS as f64;
        let mut edges = vec![0.0];
        let mut w = 0.0;
        while w < self.w_max {
            // Local frequency of e^{−i w^q t} in w is q w^{q−1} t.
            let probe = w + 0.5 * dw_cap;
            let freq = self.q * probe.powf(self.q - 1.0) * t;
            let dw = if freq > 0.0 {
                dw_cap.min(std::f64::consts::PI / freq)
            } else {
                dw_cap
            };
            w = (w + dw).min(self.w_max);
            edges.push(w);
        }
        if split > 1 {
            let mut fine = Vec::with_capacity(edges.len() * split);
            for pair in edges.windows(2) {
                for k in 0..split {
                    fine.push(pair[0] + (pair[1] - pair[0]) * k as f64 / split as f64);
                }
            }
            fine.push(self.w_max);
            edges = fine;
        }
        edges
    }

    fn cut_integrals(&self, t: f64, split: usize) -> (C64, C64) {
        let mut iu = C64::new(0.0, 0.0);
        let mut iv = C64::new(0.0, 0.0);
        for pair in self.panel_edges(t, split).windows(2) {
            let c = 0.5 * (pair[0] + pair[1]);
            let hw = 0.5 * (pair[1] - pair[0]);
            for (x, wt) in self.nodes.iter().zip(&self.weights) {
                let w = c + hw * x;
                let (r, dr) = self.density(w);
                let phase = C64::from_polar(1.0, -w.powf(self.q) * t);
                iu += phase * (r * wt * hw);
                iv += phase * (dr * wt * hw);
            }
        }
        (iu, iv)
    }

    /// Returns `(u, ∂u/∂κ)` at time `t`.
    pub fn evaluate(&self, t: f64) -> Result<(C64, C64)> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter {
                name: "t",
                value: t,
                reason: "time must be finite and non-negative",
            });
        }
        let (u1, v1) = self.cut_integrals(t, 1);
        let (u2, v2) = self.cut_integrals(t, 2);
        let error = (u1 - u2).norm().max((v1 - v2).norm() / (1.0 + t));
        if error > self.tol {
            // The panel error grows roughly like t²; aim for a tenth of the tolerance.
            let suggested_t_max = t * (0.1 * self.tol / error).sqrt();
            return Err(Error::OscillatoryQuadrature {
                t,
                error,
                suggested_t_max,
            });
        }
        let (mut u, mut v) = (u2, v2);
        if let Some(bs) = &self.bound {
            let pole = C64::from_polar(1.0, -bs.energy * t);
            let z = bs.residue;
            u += z * pole;
            v += C64::new(self.residue_derivative, -t * z * z) * pole;
        }
        Ok((u, v))
    }
}

pub fn u_asymptotic(p: &SpectralParams, t: f64) -> Result<C64> {
    Ok(BranchCut::new(p)?.evaluate(t)?.0)
}

/// Instantaneous frequency `Ω = −Im(u̇/u)` and rate `γ = −Re(u̇/u)`.
///
/// Points where `|u| < RATE_FLOOR` are flagged and carry NaN.
#[derive(Debug, Clone)]
pub struct Rates {
    pub omega: Vec<f64>,
    pub gamma: Vec<f64>,
    pub defined: Vec<bool>,
}

pub const RATE_FLOOR: f64 = 1e-8;

pub fn rates_from_u(traj: &DecoherenceTrajectory) -> Result<Rates> {
    let n = traj.u.len();
    if n < 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: n });
    }
    let h = traj.t[1] - traj.t[0];
    let u = &traj.u;
    let mut out = Rates {
        omega: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        defined: Vec::with_capacity(n),
    };
    for k in 0..n {
        let du = if k == 0 {
            (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * u[k] - 4.0 * u[k - 1] + u[k - 2]) / (2.0 * h)
        } else {
            (u[k + 1] - u[k - 1]) / (2.0 * h)
        };
        if u[k].norm() < RATE_FLOOR {
            out.omega.push(f64::NAN);
            out.gamma.push(f64::NAN);
            out.defined.push(false);
        } else {
            let q = du / u[k];
            out.omega.push(-q.im);
            out.gamma.push(-q.re);
            out.defined.push(true);
        }
    }
    Ok(out)
}
