//! Two-mode Gaussian covariance-matrix algebra.
//!
//! Quadratures are ordered qqpp, `x = (q_A, q_B, p_A, p_B)`, with
//! `q = (a + a†)/√2` so the vacuum variance is 1/2 and a coherent state |α⟩
//! has mean `(√2 Re α, √2 Im α)`. The symplectic form is `Ω = [[0, I], [−I, 0]]`.

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector4};
use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};
use crate::scalar_capacity::{ea_symplectic_occupations, ChannelParams};

const SYMMETRY_TOL: f64 = 1e-12;
const BONA_FIDE_TOL: f64 = 1e-9;
const PURE_TOL: f64 = 1e-9;
const STRUCTURE_TOL: f64 = 1e-12;

/// The 4×4 symplectic form in qqpp ordering.
pub fn omega() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 2)] = 1.0;
    m[(1, 3)] = 1.0;
    m[(2, 0)] = -1.0;
    m[(3, 1)] = -1.0;
    m
}

/// arccoth(x) = ½ ln((x+1)/(x−1)), defined here for x > 1 + 10⁻¹².
pub fn arccoth(x: f64) -> Result<f64> {
    if !(x > 1.0 + 1e-12) {
        return Err(domain(format!("arccoth({x}) outside the branch x > 1")));
    }
    Ok(0.5 * (2.0 / (x - 1.0)).ln_1p())
}

// arccoth(2λ) written through the occupation ν = λ − 1/2.
fn arccoth_occ(nu: f64) -> f64 {
    0.5 * (1.0 / nu).ln_1p()
}

/// Covariance matrix and mean vector of a two-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCM {
    sigma: Matrix4<f64>,
    mean: Vector4<f64>,
}

impl TwoModeCM {
    /// Validates symmetry and the uncertainty principle.
    pub fn new(sigma: Matrix4<f64>, mean: Vector4<f64>) -> Result<Self> {
        let asym = (sigma - sigma.transpose()).amax();
        if asym > SYMMETRY_TOL {
            return Err(Error::NonPhysicalCm(format!("asymmetry {asym:e}")));
        }
        if !sigma.iter().chain(mean.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonPhysicalCm("non-finite entry".into()));
        }
        let lam = symplectic_eigenvalues_numeric(&sigma)?;
        if lam[1] < 0.5 - BONA_FIDE_TOL {
            return Err(Error::NonPhysicalCm(format!("symplectic eigenvalue {} < 1/2", lam[1])));
        }
        Ok(Self { sigma, mean })
    }

    /// Zero-mean state.
    pub fn centered(sigma: Matrix4<f64>) -> Result<Self> {
        Self::new(sigma, Vector4::zeros())
    }

    pub fn sigma(&self) -> &Matrix4<f64> {
        &self.sigma
    }

    pub fn mean(&self) -> &Vector4<f64> {
        &self.mean
    }

    /// (w₁₁, w₁₂, w₂₂) if the matrix has the TMSV-through-loss pattern
    /// `[[w11, w12, 0, 0], [w12, w22, 0, 0], [0, 0, w11, −w12], [0, 0, −w12, w22]]`.
    pub fn block_entries(&self) -> Result<(f64, f64, f64)> {
        let s = &self.sigma;
        let (w11, w12, w22) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        let mut expected = Matrix4::zeros();
        expected[(0, 0)] = w11;
        expected[(1, 1)] = w22;
        expected[(2, 2)] = w11;
        expected[(3, 3)] = w22;
        expected[(0, 1)] = w12;
        expected[(1, 0)] = w12;
        expected[(2, 3)] = -w12;
        expected[(3, 2)] = -w12;
        let dev = (s - expected).amax();
        if dev > STRUCTURE_TOL * (1.0 + s.amax()) {
            return Err(Error::UnsupportedStructure(format!("deviation {dev:e} from the two-block pattern")));
        }
        Ok((w11, w12, w22))
    }

    /// Row-major entries, for serialization.
    pub fn sigma_row_major(&self) -> Vec<f64> {
        (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| self.sigma[(i, j)]).collect()
    }
}

/// Symplectic eigenvalues and the symplectic matrix that diagonalizes a CM:
/// Σ = S (D ⊕ D) Sᵀ with D = diag(λ₁, λ₂).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticSpectrum {
    pub lambdas: [f64; 2],
    pub s_matrix: Matrix4<f64>,
}

/// Gibbs matrix G with ρ ∝ exp(−½ x̂ᵀ G x̂); 2×2 for one mode, 4×4 for two.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsMatrix {
    pub g: DMatrix<f64>,
}

/// CM of the two-mode squeezed vacuum with n̄_S photons per mode.
pub fn tmsv_cm(nbar_s: f64) -> Result<TwoModeCM> {
    if !(nbar_s >= 0.0) || !nbar_s.is_finite() {
        return Err(domain(format!("nbar_S = {nbar_s} must be finite and >= 0")));
    }
    let a = nbar_s + 0.5;
    let c = (nbar_s * (nbar_s + 1.0)).sqrt();
    let sigma = Matrix4::new(a, c, 0.0, 0.0, c, a, 0.0, 0.0, 0.0, 0.0, a, -c, 0.0, 0.0, -c, a);
    Ok(TwoModeCM { sigma, mean: Vector4::zeros() })
}

/// Sends mode A through the thermal-loss channel: Σ ↦ XΣXᵀ + Y, μ ↦ Xμ.
pub fn thermal_loss_apply(cm: &TwoModeCM, ch: &ChannelParams) -> TwoModeCM {
    let t = ch.eta().sqrt();
    let x = Matrix4::from_diagonal(&Vector4::new(t, 1.0, t, 1.0));
    let y0 = (1.0 - ch.eta()) * (ch.nbar_b() + 0.5);
    let y = Matrix4::from_diagonal(&Vector4::new(y0, 0.0, y0, 0.0));
    let mut sigma = x * cm.sigma * x.transpose() + y;
    sigma = (sigma + sigma.transpose()) * 0.5;
    TwoModeCM { sigma, mean: x * cm.mean }
}

/// Phase rotation of mode B by `phi` (a passive symplectic map).
pub fn phase_rotate_mode_b(cm: &TwoModeCM, phi: f64) -> TwoModeCM {
    let (c, s) = (phi.cos(), phi.sin());
    let mut r = Matrix4::identity();
    r[(1, 1)] = c;
    r[(1, 3)] = -s;
    r[(3, 1)] = s;
    r[(3, 3)] = c;
    let mut sigma = r * cm.sigma * r.transpose();
    sigma = (sigma + sigma.transpose()) * 0.5;
    TwoModeCM { sigma, mean: r * cm.mean }
}

/// Output state of TMSV through the channel, and the product of its marginals.
pub fn output_and_reference_cms(ch: &ChannelParams, nbar_s: f64) -> Result<(TwoModeCM, TwoModeCM)> {
    let rho = thermal_loss_apply(&tmsv_cm(nbar_s)?, ch);
    let mut sigma = rho.sigma;
    for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
        sigma[(i, j)] = 0.0;
    }
    Ok((rho, TwoModeCM { sigma, mean: Vector4::zeros() }))
}

/// Closed-form symplectic spectrum for the two-block pattern of
/// [`TwoModeCM::block_entries`].
pub fn symplectic_spectrum(cm: &TwoModeCM) -> Result<SymplecticSpectrum> {
    let (w11, w12, w22) = cm.block_entries()?;
    if w11 + w22 <= 2.0 * w12.abs() {
        return Err(Error::NonPhysicalCm(format!("w11 + w22 = {} <= 2|w12|", w11 + w22)));
    }
    let r = ((w11 + w22).powi(2) - 4.0 * w12 * w12).sqrt();
    let l1 = 0.5 * (r + (w11 - w22));
    let l2 = 0.5 * (r - (w11 - w22));
    let w = (w11 - 2.0 * w12 + w22).sqrt() / r.sqrt();
    let sp = 0.5 * (w + 1.0 / w);
    let sm = 0.5 * (w - 1.0 / w);
    let s_matrix = Matrix4::new(sp, sm, 0.0, 0.0, -sm, -sp, 0.0, 0.0, 0.0, 0.0, sp, -sm, 0.0, 0.0, sm, -sp);
    Ok(SymplecticSpectrum { lambdas: [l1, l2], s_matrix })
}

fn sym_sqrt_and_inv_sqrt(m: &Matrix4<f64>) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    let e = SymmetricEigen::new(*m);
    if e.eigenvalues.min() <= 0.0 {
        return Err(Error::NonPhysicalCm("covariance matrix is not positive definite".into()));
    }
    let d = e.eigenvalues.map(f64::sqrt);
    let di = d.map(|x| 1.0 / x);
    let v = &e.eigenvectors;
    Ok((v * Matrix4::from_diagonal(&d) * v.transpose(), v * Matrix4::from_diagonal(&di) * v.transpose()))
}

// H = Σ^{1/2} (−ΩΣΩ) Σ^{1/2} is symmetric positive definite with eigenvalues λ₁², λ₁², λ₂², λ₂².
fn williamson_kernel(sigma: &Matrix4<f64>) -> Result<(Matrix4<f64>, SymmetricEigen<f64, nalgebra::U4>)> {
    let (half, inv_half) = sym_sqrt_and_inv_sqrt(sigma)?;
    let om = omega();
    let mut h = -(half * om * sigma * om * half);
    h = (h + h.transpose()) * 0.5;
    Ok((inv_half, SymmetricEigen::new(h)))
}

/// Symplectic eigenvalues (λ₁ ≥ λ₂) of any positive-definite 4×4 CM, by the
/// standard eigenproblem. Second path for tests and for CMs outside the
/// two-block pattern.
pub fn symplectic_eigenvalues_numeric(sigma: &Matrix4<f64>) -> Result<[f64; 2]> {
    let (_, e) = williamson_kernel(sigma)?;
    let mut ev: Vec<f64> = e.eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok([0.5 * (ev[0] + ev[1]), 0.5 * (ev[2] + ev[3])])
}

/// G = −2 Ω S [arccoth(2D)]^{⊕2} Sᵀ Ω from the closed-form spectrum.
pub fn gibbs_matrix(cm: &TwoModeCM) -> Result<GibbsMatrix> {
    let sp = symplectic_spectrum(cm)?;
    let [l1, l2] = sp.lambdas;
    for l in [l1, l2] {
        if l <= 0.5 + PURE_TOL {
            return Err(Error::PureStateSingularity { lambda: l });
        }
    }
    let (a1, a2) = (arccoth_occ(l1 - 0.5), arccoth_occ(l2 - 0.5));
    let d = Matrix4::from_diagonal(&Vector4::new(a1, a2, a1, a2));
    let om = omega();
    let g = -2.0 * om * sp.s_matrix * d * sp.s_matrix.transpose() * om;
    let g = (g + g.transpose()) * 0.5;
    Ok(GibbsMatrix { g: DMatrix::from_iterator(4, 4, g.iter().copied()) })
}

/// Gibbs matrix of an arbitrary two-mode CM:
/// G = Σ^{−1/2} f(H) Σ^{−1/2} with f(μ) = 2√μ·arccoth(2√μ) and H as in
/// [`symplectic_eigenvalues_numeric`].
pub fn gibbs_matrix_numeric(sigma: &Matrix4<f64>) -> Result<GibbsMatrix> {
    let (inv_half, e) = williamson_kernel(sigma)?;
    let mut f = Vector4::zeros();
    for (i, &mu) in e.eigenvalues.iter().enumerate() {
        let lam = mu.max(0.0).sqrt();
        if lam <= 0.5 + PURE_TOL {
            return Err(Error::PureStateSingularity { lambda: lam });
        }
        f[i] = 2.0 * lam * arccoth_occ(lam - 0.5);
    }
    let v = &e.eigenvectors;
    let fh = v * Matrix4::from_diagonal(&f) * v.transpose();
    let g = inv_half * fh * inv_half;
    let g = (g + g.transpose()) * 0.5;
    Ok(GibbsMatrix { g: DMatrix::from_iterator(4, 4, g.iter().copied()) })
}

/// Single-mode thermal state (n̄ + ½)·I: G = 2·arccoth(2n̄ + 1)·I.
pub fn gibbs_matrix_thermal(nbar: f64) -> Result<GibbsMatrix> {
    if !(nbar > PURE_TOL) {
        return Err(Error::PureStateSingularity { lambda: nbar + 0.5 });
    }
    let g = Matrix2::identity() * (2.0 * arccoth_occ(nbar));
    Ok(GibbsMatrix { g: DMatrix::from_iterator(2, 2, g.iter().copied()) })
}

fn gibbs4(cm: &TwoModeCM) -> Result<Matrix4<f64>> {
    let g = match gibbs_matrix(cm) {
        Err(Error::UnsupportedStructure(_)) => gibbs_matrix_numeric(&cm.sigma)?,
        other => other?,
    };
    Ok(Matrix4::from_iterator(g.g.iter().copied()))
}

/// Quantum relative entropy variance V(ρ‖σ) of two Gaussian states, bits²:
///
/// V = ½Tr[(ΔΣ_ρ)²] + ⅛Tr[(ΔΩ)²] + δᵀ G_σ Σ_ρ G_σ δ,  Δ = G_ρ − G_σ, δ = μ_ρ − μ_σ.
///
/// CMs outside the two-block pattern (e.g. after a phase rotation) go through
/// [`gibbs_matrix_numeric`].
pub fn qre_variance_gaussian(rho: &TwoModeCM, sigma: &TwoModeCM) -> Result<f64> {
    let g_rho = gibbs4(rho)?;
    let g_sigma = gibbs4(sigma)?;
    let delta = g_rho - g_sigma;
    let om = omega();
    let ds = delta * rho.sigma;
    let dom = delta * om;
    let dmu = rho.mean - sigma.mean;
    let gd = g_sigma * dmu;
    let v = 0.5 * (ds * ds).trace() + 0.125 * (dom * dom).trace() + gd.dot(&(rho.sigma * gd));
    Ok(v / (LN_2 * LN_2))
}

/// Nine-term closed form of V(ρ‖σ) for the entanglement-assisted pair of
/// [`output_and_reference_cms`], bits².
///
/// With ν₁, ν₂ the symplectic occupations (λ − ½), t = w₁₁ + w₂₂ and
/// R = λ₁ + λ₂, the prefactors factor as
///
/// * r₃, r₄: 4λ² − 1 = 4ν(ν+1)
/// * A(w₁₁,w₁₂,w₂₂) = −4ν₁(ν₁+1)(R+t)/R, A(w₂₂,w₁₂,w₁₁) = −4ν₂(ν₂+1)(R+t)/R
/// * r₇: −4ν₂(ν₂+1)(t−R)/R,  r₈: −4ν₁(ν₁+1)(t−R)/R
///
/// which removes the cancellation of the raw forms when n̄_S is small, so
/// the closed form holds its accuracy for any n̄_S > 0.
pub fn ea_variance_closed(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    if !(nbar_s > 0.0) || !nbar_s.is_finite() {
        return Err(domain(format!("nbar_S = {nbar_s} must be finite and > 0")));
    }
    ch.require_noise()?;
    let s = nbar_s;
    let a = ch.n_t() + ch.eta() * s;
    let (ap, am) = ea_symplectic_occupations(ch, s)?;
    if !(am > 0.0) {
        return Err(Error::PureStateSingularity { lambda: am + 0.5 });
    }
    let w12sq = ch.eta() * s * (s + 1.0);
    let r = ap + am + 1.0;
    // t = w₁₁ + w₂₂; t − R = 4w₁₂²/(t + R) without cancellation.
    let t = a + s + 1.0;
    let t_minus_r = 4.0 * w12sq / (t + r);
    let (c11, c22, c1, c2) = (arccoth_occ(a), arccoth_occ(s), arccoth_occ(ap), arccoth_occ(am));
    let q1 = 4.0 * ap * (ap + 1.0);
    let q2 = 4.0 * am * (am + 1.0);
    let terms = [
        4.0 * a * (a + 1.0) * c11 * c11,
        4.0 * s * (s + 1.0) * c22 * c22,
        q1 * c1 * c1,
        q2 * c2 * c2,
        8.0 * w12sq * c11 * c22,
        -q1 * (r + t) / r * c11 * c1,
        -q2 * t_minus_r / r * c11 * c2,
        -q1 * t_minus_r / r * c22 * c1,
        -q2 * (r + t) / r * c22 * c2,
    ];
    Ok(terms.iter().sum::<f64>() / (LN_2 * LN_2))
}

/// Small-n̄_S expansion of [`ea_variance_closed`], bits². In nats²:
///
/// V ≈ s ln²s + ε s ln²((1+n_T)/n_T) − 2ε s ln s ln((1+n_T)/n_T)
///     − 2κ s ln s ln(κ s) + κ s ln²(κ s)
///
/// with ε = η/(1+n_T), κ = (1−η)(n̄_B+1)/(1+n_T) = 1 − ε. The error is
/// O((s ln s)²).
pub fn ea_variance_expansion(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    Ok(ea_variance_expansion_terms(ch, nbar_s)?.iter().sum())
}

/// The five terms of [`ea_variance_expansion`] separately, bits².
pub fn ea_variance_expansion_terms(ch: &ChannelParams, nbar_s: f64) -> Result<[f64; 5]> {
    if !(nbar_s > 0.0 && nbar_s < 1.0) {
        return Err(Error::ExpansionDomain { nbar_s });
    }
    ch.require_noise()?;
    let nt = ch.n_t();
    let eps = ch.eta() / (1.0 + nt);
    let kappa = 1.0 - eps;
    let s = nbar_s;
    let ls = s.ln();
    let lt = (1.0 / nt).ln_1p();
    let lk = (kappa * s).ln();
    let c = 1.0 / (LN_2 * LN_2);
    Ok([
        c * s * ls * ls,
        c * eps * s * lt * lt,
        c * -2.0 * eps * s * ls * lt,
        c * -2.0 * kappa * s * ls * lk,
        c * kappa * s * lk * lk,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ch(eta: f64, nb: f64) -> ChannelParams {
        ChannelParams::new(eta, nb).unwrap()
    }

    fn rotate_mode_b(cm: &TwoModeCM, phi: f64) -> TwoModeCM {
        phase_rotate_mode_b(cm, phi)
    }

    #[test]
    fn tmsv_is_pure() {
        assert_eq!(*tmsv_cm(0.0).unwrap().sigma(), Matrix4::identity() * 0.5);
        let sp = symplectic_spectrum(&tmsv_cm(0.3).unwrap()).unwrap();
        assert!((sp.lambdas[0] - 0.5).abs() < 1e-12 && (sp.lambdas[1] - 0.5).abs() < 1e-12);
        assert_relative_eq!(tmsv_cm(1.0).unwrap().sigma()[(0, 1)], 2f64.sqrt(), epsilon = 1e-15);
        assert!(tmsv_cm(-0.1).is_err());
        assert!(matches!(gibbs_matrix(&tmsv_cm(0.3).unwrap()), Err(Error::PureStateSingularity { .. })));
    }

    #[test]
    fn loss_channel_entries() {
        let vac = TwoModeCM::centered(Matrix4::identity() * 0.5).unwrap();
        let out = thermal_loss_apply(&vac, &ch(0.5, 1.0));
        assert_relative_eq!(out.sigma()[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.sigma()[(2, 2)], 1.0, epsilon = 1e-15);
        let near = thermal_loss_apply(&tmsv_cm(0.4).unwrap(), &ch(1.0 - 1e-12, 2.0));
        assert!((near.sigma() - tmsv_cm(0.4).unwrap().sigma()).amax() < 1e-11);
        let (rho, sigma) = output_and_reference_cms(&ch(0.6, 0.5), 0.2).unwrap();
        let (w11, w12, w22) = rho.block_entries().unwrap();
        // (n̄_B + ½)(1−η) + (n̄_S + ½)η = 1.0·0.4 + 0.7·0.6
        assert_relative_eq!(w11, 0.82, epsilon = 1e-15);
        assert_relative_eq!(w22, 0.7, epsilon = 1e-15);
        assert_relative_eq!(w12, (0.6f64 * 0.2 * 1.2).sqrt(), epsilon = 1e-15);
        let sp = symplectic_spectrum(&sigma).unwrap();
        assert_relative_eq!(sp.lambdas[0], 0.82, epsilon = 1e-15);
        assert_relative_eq!(sp.lambdas[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn zero_signal_reference_matches() {
        let (rho, sigma) = output_and_reference_cms(&ch(0.3, 1.0), 0.0).unwrap();
        assert_eq!(rho, sigma);
    }

    #[test]
    fn spectrum_invariants_at_reference_point() {
        let (rho, _) = output_and_reference_cms(&ch(0.6, 0.5), 0.2).unwrap();
        let sp = symplectic_spectrum(&rho).unwrap();
        let s = sp.s_matrix;
        let om = omega();
        assert!((s * om * s.transpose() - om).amax() < 1e-10);
        assert!((s.transpose() * om * s - om).amax() < 1e-10);
        let [l1, l2] = sp.lambdas;
        let d = Matrix4::from_diagonal(&Vector4::new(l1, l2, l1, l2));
        assert!((s * d * s.transpose() - rho.sigma()).amax() < 1e-10);
        assert_relative_eq!(l1 * l2, rho.sigma().determinant().sqrt(), max_relative = 1e-12);
        let num = symplectic_eigenvalues_numeric(rho.sigma()).unwrap();
        assert_relative_eq!(num[0], l1, max_relative = 1e-10);
        assert_relative_eq!(num[1], l2, max_relative = 1e-10);
    }

    #[test]
    fn thermal_product_spectrum() {
        let cm = TwoModeCM::centered(Matrix4::from_diagonal(&Vector4::new(0.9, 0.6, 0.9, 0.6))).unwrap();
        let sp = symplectic_spectrum(&cm).unwrap();
        assert_eq!(sp.lambdas, [0.9, 0.6]);
        assert_relative_eq!(sp.s_matrix[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_eq!(sp.s_matrix[(0, 1)], 0.0);
    }

    #[test]
    fn structure_and_physicality_checks() {
        let mut m = Matrix4::from_diagonal(&Vector4::new(1.0, 0.8, 1.0, 0.8));
        m[(0, 2)] = 0.01;
        m[(2, 0)] = 0.01;
        let cm = TwoModeCM::centered(m).unwrap();
        assert!(matches!(symplectic_spectrum(&cm), Err(Error::UnsupportedStructure(_))));
        let bad = Matrix4::from_diagonal(&Vector4::new(0.1, 0.5, 0.1, 0.5));
        assert!(matches!(TwoModeCM::centered(bad), Err(Error::NonPhysicalCm(_))));
    }

    #[test]
    fn gibbs_thermal_single_mode() {
        let g = gibbs_matrix_thermal(1.0).unwrap();
        assert_relative_eq!(g.g[(0, 0)], LN_2, epsilon = 1e-15);
        assert_eq!(g.g[(0, 1)], 0.0);
        assert_relative_eq!(arccoth(3.0).unwrap(), LN_2 / 2.0, epsilon = 1e-15);
        assert!(arccoth(1.0).is_err());
    }

    #[test]
    fn gibbs_paths_agree() {
        let (rho, sigma) = output_and_reference_cms(&ch(0.6, 0.5), 0.2).unwrap();
        for cm in [rho, sigma] {
            let a = gibbs_matrix(&cm).unwrap().g;
            let b = gibbs_matrix_numeric(cm.sigma()).unwrap().g;
            assert!((&a - &b).amax() < 1e-10, "{a} {b}");
        }
        // G commutes with Σ for a thermal product.
        let g = gibbs_matrix(&sigma).unwrap().g;
        let s = DMatrix::from_iterator(4, 4, sigma.sigma().iter().copied());
        assert!((&g * &s - &s * &g).amax() < 1e-14);
    }

    #[test]
    fn variance_identities() {
        let (rho, sigma) = output_and_reference_cms(&ch(0.6, 0.5), 0.2).unwrap();
        assert!(qre_variance_gaussian(&sigma, &sigma).unwrap().abs() < 1e-15);
        let v = qre_variance_gaussian(&rho, &sigma).unwrap();
        let closed = ea_variance_closed(&ch(0.6, 0.5), 0.2).unwrap();
        assert_relative_eq!(v, closed, max_relative = 1e-9);
        // Frozen against an independent 30-digit evaluation of the nine terms.
        assert_relative_eq!(closed, 2.452_783_263_577_945, max_relative = 1e-10);
        for phi in [std::f64::consts::PI / 7.0, std::f64::consts::PI / 3.0] {
            let vr = qre_variance_gaussian(&rotate_mode_b(&rho, phi), &sigma).unwrap();
            assert_relative_eq!(vr, v, max_relative = 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_extended_precision() {
        // 60-digit evaluation of the nine terms as written, at η = 0.6, n̄_B = 1.
        let c = ch(0.6, 1.0);
        for (s, want) in [
            (1e-12, 7.445_567_162_327_606_5e-10),
            (1e-9, 4.311_675_394_256_976e-7),
            (1e-8, 3.456_219_794_149_570_1e-6),
            (1e-6, 2.029_072_660_929_068_2e-4),
            (1e-4, 9.803_508_993_178_669e-3),
        ] {
            let got = ea_variance_closed(&c, s).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn closed_form_small_signal() {
        let c = ch(0.6, 1.0);
        assert!(ea_variance_closed(&c, 1e-8).unwrap() < 1e-5);
        assert!(ea_variance_closed(&c, 0.0).is_err());
        // V/(s log₂² s) creeps towards ε = η/(1+n_T) only logarithmically.
        let eps = 0.6 / 1.4;
        let s = 1e-12;
        let lead = ea_variance_closed(&c, s).unwrap() / (s * s.log2().powi(2));
        assert!((lead / eps - 1.0).abs() < 0.1, "{lead}");
    }

    #[test]
    fn expansion_tracks_closed_form() {
        let c = ch(0.6, 1.0);
        let r4 = ea_variance_expansion(&c, 1e-4).unwrap() / ea_variance_closed(&c, 1e-4).unwrap();
        let r6 = ea_variance_expansion(&c, 1e-6).unwrap() / ea_variance_closed(&c, 1e-6).unwrap();
        assert!((r4 - 1.0).abs() < 0.02, "{r4}");
        assert!((r6 - 1.0).abs() < 0.005, "{r6}");
        let t = ea_variance_expansion_terms(&c, 1e-6).unwrap();
        assert!(t[0] > 0.5 * ea_variance_closed(&c, 1e-6).unwrap());
        assert!(ea_variance_expansion(&c, 1.0).is_err());
    }
}
