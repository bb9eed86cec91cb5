//! One- and two-mode Gaussian states in the complex `(a, a†)` representation
//! and the quantum Fisher information functionals over `(d, σ)`.
//!
//! Ordering convention: for `n` modes the operator vector is
//! `Â = (a_1, …, a_n, a_1†, …, a_n†)`, the displacement is `d_i = ⟨Â_i⟩` and
//! the covariance is `σ_ij = ⟨{ΔÂ_i, ΔÂ_j†}⟩`, so the vacuum has `σ = I`.
//! Matrices are vectorized by stacking columns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for the pseudo-inverse of `M = σ*⊗σ − K⊗K`.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-10;

/// Largest symplectic defect `‖(σK)² − I‖ / (1 + ‖σ‖)` still treated as pure.
pub const PURITY_TOL: f64 = 1e-9;

/// Squeezing magnitude `r ≥ 0` of a two-mode squeezed vacuum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingParam(f64);

impl SqueezingParam {
    pub fn new(r: f64) -> Result<Self> {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter {
                name: "r",
                value: r,
                reason: "squeezing must be finite and non-negative",
            });
        }
        Ok(Self(r))
    }

    /// The squeezing that gives a two-mode state with `n_bar = 2 sinh² r`.
    pub fn from_mean_photons(n_bar: f64) -> Result<Self> {
        if !n_bar.is_finite() || n_bar < 0.0 {
            return Err(Error::InvalidParameter {
                name: "n_bar",
                value: n_bar,
                reason: "mean boson number must be finite and non-negative",
            });
        }
        Self::new((0.5 * n_bar).sqrt().asinh())
    }

    pub fn r(self) -> f64 {
        self.0
    }

    /// Mean boson number of the two-mode squeezed vacuum, `2 sinh² r`.
    pub fn mean_photons(self) -> f64 {
        2.0 * self.0.sinh().powi(2)
    }
}

/// First and second moments of a Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    d: DVector<C64>,
    sigma: DMatrix<C64>,
}

impl GaussianState {
    /// Builds a state from its moments, checking shapes and Hermiticity.
    pub fn new(d: DVector<C64>, sigma: DMatrix<C64>) -> Result<Self> {
        let dim = d.len();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: dim,
            });
        }
        if sigma.nrows() != dim || sigma.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: sigma.nrows(),
            });
        }
        let state = Self {
            n_modes: dim / 2,
            d,
            sigma,
        };
        let herm = state.hermiticity_defect();
        if herm > 1e-9 * (1.0 + max_abs(&state.sigma)) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: herm,
                reason: "covariance matrix must be Hermitian",
            });
        }
        Ok(state)
    }

    pub fn vacuum(n_modes: usize) -> Self {
        let dim = 2 * n_modes;
        Self {
            n_modes,
            d: DVector::zeros(dim),
            sigma: DMatrix::identity(dim, dim),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn displacement(&self) -> &DVector<C64> {
        &self.d
    }

    pub fn covariance(&self) -> &DMatrix<C64> {
        &self.sigma
    }

    /// `max |σ − σ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.sigma - self.sigma.adjoint()))
    }

    /// `max |σ − X σ* X|` where `X` swaps annihilation and creation blocks.
    pub fn conjugation_defect(&self) -> f64 {
        let x = swap_matrix(self.n_modes);
        max_abs(&(&self.sigma - &x * self.sigma.conjugate() * &x))
    }

    /// Smallest eigenvalue of `σ + K`; non-negative for physical states.
    pub fn min_physical_eigenvalue(&self) -> f64 {
        let h = &self.sigma + k_matrix(self.n_modes);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.min_physical_eigenvalue() >= -tol * (1.0 + max_abs(&self.sigma))
    }

    /// `det σ − 1`, zero exactly for pure states.
    pub fn purity_defect(&self) -> f64 {
        self.sigma.determinant().re - 1.0
    }

    /// Scale-free purity test: pure states satisfy `(σK)² = I`.
    pub fn is_pure(&self) -> bool {
        symplectic_defect(&self.sigma) <= PURITY_TOL
    }
}

/// `‖(σK)² − I‖ / (1 + ‖σ‖)` in the max-entry norm.
///
/// Unlike `det σ − 1` this stays at roundoff level for strongly squeezed
/// multimode states.
pub fn symplectic_defect(sigma: &DMatrix<C64>) -> f64 {
    let dim = sigma.nrows();
    let k = k_matrix(dim / 2);
    let sk = sigma * &k;
    let d = &sk * &sk - DMatrix::identity(dim, dim);
    max_abs(&d) / (1.0 + max_abs(sigma))
}

/// Largest entry modulus of a complex matrix.
pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `K = diag(1, …, 1, −1, …, −1)` for `n_modes` modes.
pub fn k_matrix(n_modes: usize) -> DMatrix<C64> {
    let dim = 2 * n_modes;
    DMatrix::from_fn(dim, dim, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if i < n_modes {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

fn swap_matrix(n_modes: usize) -> DMatrix<C64> {
    let dim = 2 * n_modes;
    DMatrix::from_fn(dim, dim, |i, j| {
        if (i + n_modes) % dim == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Two-mode squeezed vacuum `exp(r a₁a₂ − r a₁†a₂†)|0,0⟩`.
pub fn make_tmsv(r: SqueezingParam) -> GaussianState {
    let c = C64::new((2.0 * r.r()).cosh(), 0.0);
    let s = C64::new(-(2.0 * r.r()).sinh(), 0.0);
    let mut sigma = DMatrix::identity(4, 4) * c;
    // ⟨{a₁, a₂}⟩ = ⟨{a₂, a₁}⟩ = −sinh 2r and the conjugates.
    sigma[(0, 3)] = s;
    sigma[(3, 0)] = s;
    sigma[(1, 2)] = s;
    sigma[(2, 1)] = s;
    GaussianState {
        n_modes: 2,
        d: DVector::zeros(4),
        sigma,
    }
}

fn require_two_modes(state: &GaussianState) -> Result<()> {
    if state.n_modes != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: state.n_modes,
        });
    }
    Ok(())
}

/// The mode map `a± = (a₁ ± a₂)/√2` acting on `(a₁, a₂, a₁†, a₂†)`.
fn center_relative_map() -> DMatrix<C64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let u = [[h, h], [h, -h]];
    DMatrix::from_fn(4, 4, |i, j| {
        if (i < 2) == (j < 2) {
            C64::new(u[i % 2][j % 2], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Splits a two-mode state into its center-of-mass (`+`) and relative-motion
/// (`−`) single-mode marginals.
///
/// Fails with [`Error::NonProductState`] if the `+`/`−` cross-correlations do
/// not vanish, since per-mode Fisher informations would then not add up.
pub fn mode_split(state: &GaussianState) -> Result<(GaussianState, GaussianState)> {
    require_two_modes(state)?;
    let t = center_relative_map();
    let d = &t * &state.d;
    let sigma = &t * &state.sigma * t.adjoint();

    let plus = [0usize, 2];
    let minus = [1usize, 3];
    let mut cross: f64 = 0.0;
    for &i in &plus {
        for &j in &minus {
            cross = cross.max(sigma[(i, j)].norm()).max(sigma[(j, i)].norm());
        }
    }
    if cross > 1e-10 * (1.0 + max_abs(&sigma)) {
        return Err(Error::NonProductState { cross_norm: cross });
    }
    let block = |idx: [usize; 2]| GaussianState {
        n_modes: 1,
        d: DVector::from_fn(2, |i, _| d[idx[i]]),
        sigma: DMatrix::from_fn(2, 2, |i, j| sigma[(idx[i], idx[j])]),
    };
    Ok((block(plus), block(minus)))
}

/// Lab-basis 4×4 matrix from uncorrelated `+` and `−` 2×2 blocks.
///
/// Works for covariances and for their parameter derivatives alike.
pub fn join_blocks(plus: &DMatrix<C64>, minus: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    for b in [plus, minus] {
        if b.nrows() != 2 || b.ncols() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: b.nrows().max(b.ncols()),
            });
        }
    }
    let mut pm = DMatrix::zeros(4, 4);
    for (blk, idx) in [(plus, [0usize, 2]), (minus, [1usize, 3])] {
        for i in 0..2 {
            for j in 0..2 {
                pm[(idx[i], idx[j])] = blk[(i, j)];
            }
        }
    }
    let t = center_relative_map();
    Ok(t.adjoint() * pm * t)
}

/// Inverse of [`mode_split`] for displacement-free single-mode states.
pub fn mode_join(plus: &GaussianState, minus: &GaussianState) -> Result<GaussianState> {
    GaussianState::new(DVector::zeros(4), join_blocks(&plus.sigma, &minus.sigma)?)
}

/// Free evolution under `ω₀ Σ a_l†a_l + κ(a₁†a₂ + h.c.)` for time `t`.
pub fn ideal_evolve(state: &GaussianState, omega0: f64, kappa: f64, t: f64) -> Result<GaussianState> {
    require_two_modes(state)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "evolution time must be non-negative",
        });
    }
    let t_map = center_relative_map();
    let phase = |w: f64| C64::new(0.0, -w * t).exp();
    let (pp, pm) = (phase(omega0 + kappa), phase(omega0 - kappa));
    // Heisenberg map in the (a+, a-, a+†, a-†) basis.
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![pp, pm, pp.conj(), pm.conj()]));
    let r = t_map.adjoint() * diag * &t_map;
    Ok(GaussianState {
        n_modes: 2,
        d: &r * &state.d,
        sigma: &r * &state.sigma * r.adjoint(),
    })
}

/// Gaussian characteristic function `χ(γ) = Tr[ρ exp(−i Â†γ)]`
/// `= exp(−¼ γ†σγ − i d†γ)` for `γ = (γ₁, …, γ₁*, …)`.
pub fn char_fn(state: &GaussianState, gamma: &DVector<C64>) -> Result<C64> {
    if gamma.len() != 2 * state.n_modes {
        return Err(Error::DimensionMismatch {
            expected: 2 * state.n_modes,
            found: gamma.len(),
        });
    }
    let quad = (gamma.adjoint() * &state.sigma * gamma)[(0, 0)];
    let lin = (state.d.adjoint() * gamma)[(0, 0)];
    Ok((-0.25 * quad - C64::new(0.0, 1.0) * lin).exp())
}

/// Fisher information value from the mixed-state formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiValue {
    pub value: f64,
    /// True when `M` was ill-conditioned and its pseudo-inverse was used.
    pub regularized: bool,
}

fn check_qfi_shapes(sigma: &DMatrix<C64>, d: &DVector<C64>, dsigma: &DMatrix<C64>, dd: &DVector<C64>) -> Result<usize> {
    let dim = sigma.nrows();
    if dim == 0 || !dim.is_multiple_of(2) || sigma.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: dim,
        });
    }
    for found in [d.len(), dsigma.nrows(), dsigma.ncols(), dd.len()] {
        if found != dim {
            return Err(Error::DimensionMismatch { expected: dim, found });
        }
    }
    Ok(dim)
}

fn displacement_term(sigma_inv: &DMatrix<C64>, dd: &DVector<C64>) -> f64 {
    2.0 * (dd.adjoint() * sigma_inv * dd)[(0, 0)].re
}

/// Quantum Fisher information of a general Gaussian state,
/// `½ vec(∂σ)† M⁻¹ vec(∂σ) + 2 ∂d† σ⁻¹ ∂d` with `M = σ*⊗σ − K⊗K`.
///
/// `M` is inverted through its Hermitian eigendecomposition; eigenvalues
/// below `PSEUDO_INVERSE_CUTOFF · ‖M‖` are dropped and the result flagged.
pub fn qfi_general(
    sigma: &DMatrix<C64>,
    d: &DVector<C64>,
    dsigma: &DMatrix<C64>,
    dd: &DVector<C64>,
) -> Result<QfiValue> {
    let dim = check_qfi_shapes(sigma, d, dsigma, dd)?;
    let sigma_inv = sigma.clone().try_inverse().ok_or(Error::SingularCovariance)?;
    let k = k_matrix(dim / 2);
    let m = sigma.conjugate().kronecker(sigma) - k.kronecker(&k);
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let x = DVector::from_column_slice(dsigma.as_slice());
    let eig = SymmetricEigen::new(m.clone());
    let scale = eig.eigenvalues.amax();
    let regularized = eig.eigenvalues.iter().any(|l| l.abs() <= PSEUDO_INVERSE_CUTOFF * scale);

    let quad = if regularized {
        let coeffs = eig.eigenvectors.adjoint() * &x;
        eig.eigenvalues
            .iter()
            .zip(coeffs.iter())
            .filter(|(l, _)| l.abs() > PSEUDO_INVERSE_CUTOFF * scale)
            .map(|(l, c)| c.norm_sqr() / l)
            .sum()
    } else {
        // Near-pure states make M ill-conditioned; a pivoted solve keeps the
        // quadratic form accurate where the eigenvector route loses digits.
        let y = m.full_piv_lu().solve(&x).ok_or(Error::SingularCovariance)?;
        x.dotc(&y).re
    };
    Ok(QfiValue {
        value: 0.5 * quad + displacement_term(&sigma_inv, dd),
        regularized,
    })
}

/// Quantum Fisher information of a pure Gaussian state,
/// `¼ Tr(σ⁻¹∂σ σ⁻¹∂σ) + 2 ∂d† σ⁻¹ ∂d`.
pub fn qfi_pure(sigma: &DMatrix<C64>, d: &DVector<C64>, dsigma: &DMatrix<C64>, dd: &DVector<C64>) -> Result<f64> {
    check_qfi_shapes(sigma, d, dsigma, dd)?;
    let defect = symplectic_defect(sigma);
    if defect > PURITY_TOL {
        return Err(Error::NotPure { defect });
    }
    let sigma_inv = sigma.clone().try_inverse().ok_or(Error::SingularCovariance)?;
    let a = &sigma_inv * dsigma;
    let tr = (&a * &a).trace().re;
    Ok(0.25 * tr + displacement_term(&sigma_inv, dd))
}
