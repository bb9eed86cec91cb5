//! Ohmic-family environment: spectral density, memory kernel, Born–Markov
//! rate and Lamb shift, the bound state below the band, and the discretized
//! single-excitation spectrum.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quadrature::{QuadValue, Quadrature};
use crate::roots::{bisect_decreasing, BisectionTol};

/// Frequency integrals are truncated at `CUTOFF_FACTOR · ω_c`.
pub const CUTOFF_FACTOR: f64 = 50.0;

/// Largest admissible spectral weight beyond the truncation cutoff.
pub const TAIL_TOL: f64 = 1e-12;

/// Environment `J(ω) = η ω^s ω_c^{1−s} e^{−ω/ω_c}` plus the probe's `ω₀` and `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    eta: f64,
    s: f64,
    omega_c: f64,
    omega0: f64,
    kappa: f64,
}

impl SpectralParams {
    pub fn new(eta: f64, s: f64, omega_c: f64, omega0: f64, kappa: f64) -> Result<Self> {
        let bad = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(eta >= 0.0) || !eta.is_finite() {
            return bad("eta", eta, "coupling must be finite and non-negative");
        }
        if !(s > 0.0) || !s.is_finite() {
            return bad("s", s, "Ohmicity must be positive");
        }
        if !(omega_c > 0.0) || !omega_c.is_finite() {
            return bad("omega_c", omega_c, "cutoff frequency must be positive");
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return bad("omega0", omega0, "probe frequency must be positive");
        }
        if !kappa.is_finite() || kappa.abs() >= omega0 {
            return bad("kappa", kappa, "|kappa| must be below omega0");
        }
        let p = Self {
            eta,
            s,
            omega_c,
            omega0,
            kappa,
        };
        let bound = p.tail_bound();
        if bound > TAIL_TOL {
            return Err(Error::TailTooLarge { bound });
        }
        Ok(p)
    }

    /// `η = 0.05, s = 0.5, ω₀ = 1, κ = 0.2` at the given cutoff.
    pub fn reference(omega_c: f64) -> Result<Self> {
        Self::new(0.05, 0.5, omega_c, 1.0, 0.2)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn omega_c(&self) -> f64 {
        self.omega_c
    }
    pub fn omega0(&self) -> f64 {
        self.omega0
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Center-of-mass frequency `ω₊ = ω₀ + κ`.
    pub fn omega_plus(&self) -> f64 {
        self.omega0 + self.kappa
    }

    /// Relative-motion frequency `ω₋ = ω₀ − κ`.
    pub fn omega_minus(&self) -> f64 {
        self.omega0 - self.kappa
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.eta, self.s, self.omega_c, self.omega0, kappa)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Self::new(eta, self.s, self.omega_c, self.omega0, self.kappa)
    }

    pub fn with_omega_c(&self, omega_c: f64) -> Result<Self> {
        Self::new(self.eta, self.s, omega_c, self.omega0, self.kappa)
    }

    /// Truncation point `Λ` of all frequency integrals.
    pub fn cutoff(&self) -> f64 {
        CUTOFF_FACTOR * self.omega_c
    }

    /// Upper bound on `∫_Λ^∞ J(ω) dω`.
    pub fn tail_bound(&self) -> f64 {
        if self.eta == 0.0 {
            return 0.0;
        }
        let a = self.s + 1.0;
        self.eta * self.omega_c * self.omega_c * gamma(a) * gamma_ur(a, CUTOFF_FACTOR)
    }

    pub(crate) fn j(&self, omega: f64) -> f64 {
        if omega <= 0.0 || self.eta == 0.0 {
            return 0.0;
        }
        self.eta * (omega / self.omega_c).powf(self.s) * self.omega_c * (-omega / self.omega_c).exp()
    }

    fn j_prime(&self, omega: f64) -> f64 {
        self.j(omega) * (self.s / omega - 1.0 / self.omega_c)
    }
}

/// Spectral density `J(ω)`.
pub fn j_omega(p: &SpectralParams, omega: f64) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega",
            value: omega,
            reason: "spectral density is defined for omega >= 0",
        });
    }
    Ok(p.j(omega))
}

/// Memory kernel `μ(x) = ∫₀^∞ J(ω) e^{−iωx} dω = η Γ(s+1) ω_c² (1 + i ω_c x)^{−(s+1)}`.
pub fn kernel_mu(p: &SpectralParams, x: f64) -> C64 {
    let base = C64::new(1.0, p.omega_c * x);
    let amp = p.eta * gamma(p.s + 1.0) * p.omega_c * p.omega_c;
    amp * base.powf(-(p.s + 1.0))
}

/// Born–Markov decay rate `ζ = 2π J(ω₊)`.
pub fn markov_rate(p: &SpectralParams) -> f64 {
    2.0 * std::f64::consts::PI * p.j(p.omega_plus())
}

fn spectral_quadrature() -> Quadrature {
    Quadrature {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_segments: 4000,
    }
}

/// Integrates `f` over `[0, Λ]`, split at `ω_c` and at `breaks`.
///
/// The first panel is mapped by `ω = b·y^q` with `q = max(2, 1/s)` so that the
/// `ω^s` endpoint behavior of `J` becomes smooth.
pub(crate) fn band_integral<T, F>(p: &SpectralParams, breaks: &[f64], mut f: F) -> Result<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let lambda = p.cutoff();
    let mut points = vec![0.0, p.omega_c, lambda];
    points.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < lambda));
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * lambda);

    let quad = spectral_quadrature();
    let q = (1.0 / p.s).max(2.0);
    let first = points[1];
    let mut total = quad
        .integrate(
            |y: f64| {
                let yq1 = y.powf(q - 1.0);
                f(first * yq1 * y) * (first * q * yq1)
            },
            0.0,
            1.0,
        )?
        .value;
    for w in points[1..].windows(2) {
        total += quad.integrate(&mut f, w[0], w[1])?.value;
    }
    Ok(total)
}

/// Environment-induced shift `Δ(E) = 2 P∫₀^∞ J(ω)/(E − ω) dω`.
///
/// For `0 < E < Λ` the principal value is taken by subtracting `J(E)`:
/// `2[∫ (J(ω) − J(E))/(E − ω) dω + J(E) ln(E/(Λ − E))]`.
pub fn lamb_shift(p: &SpectralParams, energy: f64) -> Result<f64> {
    if !energy.is_finite() {
        return Err(Error::InvalidParameter {
            name: "E",
            value: energy,
            reason: "energy must be finite",
        });
    }
    if p.eta == 0.0 {
        return Ok(0.0);
    }
    let lambda = p.cutoff();
    if energy <= 0.0 || energy >= lambda {
        let brk = [energy.abs()];
        let v = band_integral(p, &brk, |w| p.j(w) / (energy - w))?;
        return Ok(2.0 * v);
    }
    let je = p.j(energy);
    let jpe = p.j_prime(energy);
    let regular = band_integral(p, &[energy], |w| {
        let gap = energy - w;
        if gap == 0.0 {
            -jpe
        } else {
            (p.j(w) - je) / gap
        }
    })?;
    Ok(2.0 * (regular + je * (energy / (lambda - energy)).ln()))
}

/// Pole function `Y(E) = ω₊ − ∫ 2J(ω)/(ω − E) dω` for `E ≤ 0`.
pub fn y_function(p: &SpectralParams, energy: f64) -> Result<f64> {
    if energy > 0.0 {
        return Err(Error::InvalidParameter {
            name: "E",
            value: energy,
            reason: "Y(E) is evaluated below the band, E <= 0",
        });
    }
    Ok(p.omega_plus() + lamb_shift(p, energy)?)
}

/// Closed form `Y(0) = ω₊ − 2 η ω_c Γ(s)`.
pub fn y_at_zero(p: &SpectralParams) -> f64 {
    p.omega_plus() - 2.0 * p.eta * p.omega_c * gamma(p.s)
}

/// Cutoff `ω_c* = ω₊ / (2ηΓ(s))` above which a bound state forms.
pub fn bound_state_threshold(p: &SpectralParams) -> f64 {
    p.omega_plus() / (2.0 * p.eta * gamma(p.s))
}

/// Isolated eigenstate below the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundState {
    /// Eigenenergy `E_b < 0`.
    pub energy: f64,
    /// Residue weight `Z = [1 + ∫ 2J/(E_b − ω)² dω]⁻¹`.
    pub residue: f64,
}

pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;
pub const ROOT_WIDTH_TOL: f64 = 1e-12;

/// Finds the bound state, if `Y(0) < 0`, by bisection on `Y(E) − E`.
pub fn find_bound_state(p: &SpectralParams) -> Result<Option<BoundState>> {
    if p.eta == 0.0 || y_function(p, 0.0)? >= 0.0 {
        return Ok(None);
    }
    let tol = BisectionTol {
        residual: ROOT_RESIDUAL_TOL,
        width: ROOT_WIDTH_TOL,
    };
    let g = |e: f64| Ok(y_function(p, e)? - e);
    let energy = bisect_decreasing(g, 0.0, p.omega_plus().max(1.0), 200, tol)?;
    let residue = residue_at(p, energy)?;
    Ok(Some(BoundState { energy, residue }))
}

fn residue_at(p: &SpectralParams, energy: f64) -> Result<f64> {
    let s2 = band_integral(p, &[-energy], |w| 2.0 * p.j(w) / (energy - w).powi(2))?;
    Ok(1.0 / (1.0 + s2))
}

/// `∂Z/∂κ = 2Z³ ∫ 2J(ω)/(E_b − ω)³ dω`, using `∂E_b/∂κ = Z`.
pub fn residue_kappa_derivative(p: &SpectralParams, bs: &BoundState) -> Result<f64> {
    let e = bs.energy;
    let s3 = band_integral(p, &[-e], |w| 2.0 * p.j(w) / (e - w).powi(3))?;
    Ok(2.0 * bs.residue.powi(3) * s3)
}

/// Uniform environment grid: mode frequencies at cell midpoints and squared
/// couplings equal to the spectral weight `∫_cell J(ω) dω`.
#[derive(Debug, Clone)]
pub struct EnvironmentGrid {
    pub frequencies: Vec<f64>,
    pub couplings_sq: Vec<f64>,
}

pub fn environment_grid(p: &SpectralParams, n_modes: usize, omega_max: f64) -> Result<EnvironmentGrid> {
    if n_modes < 2 {
        return Err(Error::InvalidParameter {
            name: "n_modes",
            value: n_modes as f64,
            reason: "at least two environment modes are required",
        });
    }
    if !(omega_max > p.omega_plus()) {
        return Err(Error::InvalidParameter {
            name: "omega_max",
            value: omega_max,
            reason: "grid must extend beyond omega_plus",
        });
    }
    let dw = omega_max / n_modes as f64;
    let quad = Quadrature::new(1e-16, 1e-12);
    let q = (1.0 / p.s).max(2.0);
    let mut frequencies = Vec::with_capacity(n_modes);
    let mut couplings_sq = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let (a, b) = (k as f64 * dw, (k + 1) as f64 * dw);
        let weight = if k == 0 {
            quad.integrate(|y: f64| p.j(b * y.powf(q)) * b * q * y.powf(q - 1.0), 0.0, 1.0)?
        } else {
            quad.integrate(|w| p.j(w), a, b)?
        };
        frequencies.push(0.5 * (a + b));
        couplings_sq.push(weight.value);
    }
    Ok(EnvironmentGrid {
        frequencies,
        couplings_sq,
    })
}

/// Dense single-excitation Hamiltonian in the basis `(a₁†, a₂†, b₁†, …, b_n†)|0⟩`.
pub fn single_excitation_hamiltonian(p: &SpectralParams, n_modes: usize, omega_max: f64) -> Result<DMatrix<f64>> {
    let grid = environment_grid(p, n_modes, omega_max)?;
    let dim = n_modes + 2;
    let mut h = DMatrix::zeros(dim, dim);
    h[(0, 0)] = p.omega0;
    h[(1, 1)] = p.omega0;
    h[(0, 1)] = p.kappa;
    h[(1, 0)] = p.kappa;
    for (k, (&w, &g2)) in grid.frequencies.iter().zip(&grid.couplings_sq).enumerate() {
        let g = g2.sqrt();
        h[(k + 2, k + 2)] = w;
        for l in 0..2 {
            h[(l, k + 2)] = g;
            h[(k + 2, l)] = g;
        }
    }
    Ok(h)
}

/// Squared couplings below this are treated as decoupled environment modes.
const DEFLATION_TOL: f64 = 1e-30;

/// Sorted eigenvalues of the single-excitation Hamiltonian.
///
/// The relative-motion mode `a₋` decouples exactly and contributes `ω₋`. The
/// remaining arrowhead block (center-of-mass mode coupled to every bath mode
/// with strength `√2 g_k`) is diagonalized through its secular equation
/// `λ − ω₊ − Σ 2g_k²/(λ − ω_k) = 0`, which has exactly one root between
/// consecutive bath frequencies and one outside each end.
pub fn discretized_spectrum(p: &SpectralParams, n_modes: usize, omega_max: f64) -> Result<Vec<f64>> {
    let grid = environment_grid(p, n_modes, omega_max)?;
    let mut eigenvalues = Vec::with_capacity(n_modes + 2);
    eigenvalues.push(p.omega_minus());

    let mut poles = Vec::with_capacity(n_modes);
    let mut weights = Vec::with_capacity(n_modes);
    for (&w, &g2) in grid.frequencies.iter().zip(&grid.couplings_sq) {
        if 2.0 * g2 > DEFLATION_TOL {
            poles.push(w);
            weights.push(2.0 * g2);
        } else {
            eigenvalues.push(w);
        }
    }
    let wp = p.omega_plus();
    let secular = |lam: f64| -> f64 {
        let mut acc = 0.0;
        for (&w, &c) in poles.iter().zip(&weights) {
            acc += c / (lam - w);
        }
        lam - wp - acc
    };

    if poles.is_empty() {
        eigenvalues.push(wp);
    } else {
        // Below the lowest pole.
        let first = poles[0];
        let mut step = 1.0;
        while secular(first - step) > 0.0 {
            step *= 2.0;
        }
        eigenvalues.push(bisect_increasing(&secular, first - step, first));
        for w in poles.windows(2) {
            eigenvalues.push(bisect_increasing(&secular, w[0], w[1]));
        }
        // Above the highest pole.
        let last = *poles.last().unwrap();
        let mut step = (wp - last).max(0.0) + 1.0;
        while secular(last + step) < 0.0 {
            step *= 2.0;
        }
        eigenvalues.push(bisect_increasing(&secular, last, last + step));
    }
    eigenvalues.sort_by(f64::total_cmp);
    Ok(eigenvalues)
}

/// Root of a function increasing from −∞ to +∞ on the open interval `(lo, hi)`.
fn bisect_increasing<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let v = f(mid);
        if v < 0.0 {
            lo = mid;
        } else if v > 0.0 {
            hi = mid;
        } else {
            return mid;
        }
    }
}
