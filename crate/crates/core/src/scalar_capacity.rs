//! Closed-form scalar quantities: photon budgets, Holevo and entanglement-assisted
//! capacities, their small-n̄_S expansions, covert constants and the structured
//! receiver rate.
//!
//! Every output is in bits (log₂). `n_T = (1−η)·n̄_B` is the thermal occupation
//! Bob sees when Alice is silent.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};

const G_SERIES_SWITCH: f64 = 1e-12;
const A_CLAMP_TOL: f64 = 1e-14;

/// Lossy thermal-noise bosonic channel: beamsplitter of transmissivity `eta`
/// mixing the signal with a thermal environment of mean photon number `nbar_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    eta: f64,
    nbar_b: f64,
}

impl ChannelParams {
    /// Requires 0 < η < 1 and n̄_B ≥ 0.
    pub fn new(eta: f64, nbar_b: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(domain(format!("eta = {eta} must lie strictly inside (0, 1)")));
        }
        if !(nbar_b >= 0.0) || !nbar_b.is_finite() {
            return Err(domain(format!("nbar_B = {nbar_b} must be finite and >= 0")));
        }
        Ok(Self { eta, nbar_b })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn nbar_b(&self) -> f64 {
        self.nbar_b
    }

    /// Bob's thermal occupation `(1−η)·n̄_B`.
    pub fn n_t(&self) -> f64 {
        (1.0 - self.eta) * self.nbar_b
    }

    pub(crate) fn require_noise(&self) -> Result<()> {
        if self.nbar_b > 0.0 {
            Ok(())
        } else {
            Err(Error::CovertnessImpossible)
        }
    }
}

/// Covertness parameter, blocklength and the resulting per-mode photon budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertBudget {
    pub delta: f64,
    pub n: u64,
    pub nbar_s: f64,
}

/// Constants of the square-root laws.
///
/// `L_*` multiply the first-order term, `K_*` the second-order (Φ⁻¹(ε)·n^{1/4}) term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovertConstants {
    pub c_cov: f64,
    pub c_rel_no_ea: f64,
    pub c_rel_ea: f64,
    pub l_no_ea: f64,
    pub k_no_ea: f64,
    pub l_ea: f64,
    pub k_ea: f64,
}

/// Design parameter of the structured (sum-frequency-generation style) receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    v: f64,
}

impl ReceiverParams {
    pub fn new(v: f64) -> Result<Self> {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(domain(format!("receiver parameter v = {v} must be >= 1")));
        }
        Ok(Self { v })
    }

    pub fn v(&self) -> f64 {
        self.v
    }
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

// Assumes x >= 0.
pub(crate) fn g_unchecked(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < G_SERIES_SWITCH {
        // (1+x)log(1+x) = x + O(x²)
        x * (1.0 / x).log2() + x / LN_2
    } else {
        x * log2_1p(1.0 / x) + log2_1p(x)
    }
}

/// Entropy of a thermal state with mean photon number `x`:
/// g(x) = (1+x)·log₂(1+x) − x·log₂x.
pub fn g_entropy(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(domain(format!("g(x) needs x >= 0, got {x}")));
    }
    Ok(g_unchecked(x))
}

fn check_nbar_s(nbar_s: f64) -> Result<()> {
    if !(nbar_s >= 0.0) || !nbar_s.is_finite() {
        return Err(domain(format!("nbar_S = {nbar_s} must be finite and >= 0")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(domain(format!("delta = {delta} must be finite and > 0")));
    }
    Ok(())
}

/// c_cov = √(2η n̄_B (1+η n̄_B)) / (1−η).
pub fn covert_constant(ch: &ChannelParams) -> Result<f64> {
    ch.require_noise()?;
    let (eta, nb) = (ch.eta, ch.nbar_b);
    Ok((2.0 * eta * nb * (1.0 + eta * nb)).sqrt() / (1.0 - eta))
}

/// Largest mean photon number per mode that keeps `n` uses δ-covert:
/// n̄_S = √δ·c_cov/√n.
pub fn photon_budget(ch: &ChannelParams, delta: f64, n: u64) -> Result<CovertBudget> {
    check_delta(delta)?;
    if n == 0 {
        return Err(domain("blocklength n must be >= 1"));
    }
    let c = covert_constant(ch)?;
    Ok(CovertBudget { delta, n, nbar_s: delta.sqrt() * c / (n as f64).sqrt() })
}

/// Holevo capacity with mean input photon number n̄_S:
/// g(η n̄_S + n_T) − g(n_T).
pub fn holevo_capacity(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    check_nbar_s(nbar_s)?;
    let nt = ch.n_t();
    Ok(g_unchecked(ch.eta * nbar_s + nt) - g_unchecked(nt))
}

/// First-order Taylor bound η n̄_S log₂(1 + 1/n_T) ≥ C_χ (g is concave).
pub fn holevo_capacity_taylor_upper(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    check_nbar_s(nbar_s)?;
    if ch.nbar_b == 0.0 {
        return Err(Error::DivergentLogarithm("log(1 + 1/((1-eta) nbar_B)) at nbar_B = 0"));
    }
    Ok(ch.eta * nbar_s * log2_1p(1.0 / ch.n_t()))
}

/// The two nontrivial symplectic occupations A₊ ≥ A₋ of the entanglement-assisted
/// output state (symplectic eigenvalues minus 1/2).
pub(crate) fn ea_symplectic_occupations(ch: &ChannelParams, nbar_s: f64) -> Result<(f64, f64)> {
    let (eta, s, nt) = (ch.eta, nbar_s, ch.n_t());
    let b = ((s + 1.0 + eta * s + nt).powi(2) - 4.0 * eta * s * (s + 1.0)).sqrt();
    let u = nt - (1.0 - eta) * s;
    let mut a_plus = (b - 1.0 + u) / 2.0;
    if a_plus < -A_CLAMP_TOL {
        return Err(Error::InternalConsistency(format!("A+ = {a_plus} is negative")));
    }
    a_plus = a_plus.max(0.0);
    let a_minus_direct = (b - 1.0 - u) / 2.0;
    if a_minus_direct < -A_CLAMP_TOL {
        return Err(Error::InternalConsistency(format!("A- = {a_minus_direct} is negative")));
    }
    // (A₋)(A₊+1) = n̄_S(n_T + 1 − η); this form has no cancellation at small n̄_S.
    let a_minus = s * (nt + 1.0 - eta) / (a_plus + 1.0);
    Ok((a_plus, a_minus))
}

/// Entanglement-assisted capacity with TMSV input of mean photon number n̄_S:
/// g(n̄_S) + g(η n̄_S + n_T) − g(A₊) − g(A₋).
pub fn ea_capacity(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    check_nbar_s(nbar_s)?;
    let (a_plus, a_minus) = ea_symplectic_occupations(ch, nbar_s)?;
    let nt = ch.n_t();
    Ok(g_unchecked(nbar_s) + g_unchecked(ch.eta * nbar_s + nt) - g_unchecked(a_plus) - g_unchecked(a_minus))
}

/// Small-n̄_S expansion of [`ea_capacity`], exact through order n̄_S:
///
/// C_EA ≈ −ε n̄_S log₂n̄_S + n̄_S [ε/ln2 + κ log₂κ + ε log₂((1+n_T)/n_T)]
///
/// with ε = η/(1+n_T) and κ = 1 − ε. Remaining error is O(n̄_S² log n̄_S).
pub fn ea_capacity_expansion(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    if !(nbar_s > 0.0 && nbar_s < 1.0) {
        return Err(Error::ExpansionDomain { nbar_s });
    }
    ch.require_noise()?;
    let nt = ch.n_t();
    let eps = ch.eta / (1.0 + nt);
    let kappa = 1.0 - eps;
    let s = nbar_s;
    Ok(-eps * s * s.log2() + s * (eps / LN_2 + kappa * kappa.log2() + eps * log2_1p(1.0 / nt)))
}

/// Leading small-n̄_S terms of the QPSK Holevo information and its variance,
/// for received displacement √η·a:
///
/// χ ≈ η n̄_S log₂(1+1/n_T),  V_χ ≈ η n̄_S (1+2n_T) log₂²(1+1/n_T).
pub fn qpsk_leading_moments(ch: &ChannelParams, nbar_s: f64) -> Result<(f64, f64)> {
    check_nbar_s(nbar_s)?;
    if ch.nbar_b == 0.0 {
        return Err(Error::DivergentLogarithm("log(1 + 1/n_T) at nbar_B = 0"));
    }
    let nt = ch.n_t();
    let lg = log2_1p(1.0 / nt);
    let c = ch.eta * lg;
    Ok((nbar_s * c, nbar_s * (1.0 + 2.0 * nt) * c * lg))
}

/// Coefficient of n̄_S in the QPSK variance V_χ.
pub fn qpsk_variance_leading_coefficient(ch: &ChannelParams) -> Result<f64> {
    Ok(qpsk_leading_moments(ch, 1.0)?.1)
}

/// Holevo-information variance of the Gaussian-modulated coherent-state ensemble
/// received through the channel (ensemble photon number m = η n̄_S on top of a
/// thermal background n_T), in bits²:
///
/// V_G = n_T(n_T+1)(a−b)² + m(2n_T+1)b² + m²b²
///
/// with a = ln((n_T+1)/n_T), b = ln((n_T+m+1)/(n_T+m)), converted by 1/ln²2.
pub fn gaussian_ensemble_variance(ch: &ChannelParams, nbar_s: f64) -> Result<f64> {
    check_nbar_s(nbar_s)?;
    let nt = ch.n_t();
    if nt == 0.0 {
        return Err(Error::DivergentLogarithm("ln((n_T+1)/n_T) at n_T = 0"));
    }
    let m = ch.eta * nbar_s;
    let a = (1.0 / nt).ln_1p();
    let b = (1.0 / (nt + m)).ln_1p();
    let v = nt * (nt + 1.0) * (a - b).powi(2) + m * (2.0 * nt + 1.0) * b * b + m * m * b * b;
    Ok(v / (LN_2 * LN_2))
}

/// Coefficient of n̄_S in [`gaussian_ensemble_variance`]: η(2n_T+1)log₂²((n_T+1)/n_T).
pub fn gaussian_ensemble_variance_leading_coefficient(ch: &ChannelParams) -> Result<f64> {
    let nt = ch.n_t();
    if nt == 0.0 {
        return Err(Error::DivergentLogarithm("ln((n_T+1)/n_T) at n_T = 0"));
    }
    let lg = log2_1p(1.0 / nt);
    Ok(ch.eta * (2.0 * nt + 1.0) * lg * lg)
}

/// Square-root-law constants for covertness parameter δ.
///
/// The `K` constants are the ones substituting the budget into the bound actually produces:
/// √(n·V(n̄_S(n))) = K·n^{1/4} (times log₂n with entanglement assistance).
pub fn covert_constants(ch: &ChannelParams, delta: f64) -> Result<CovertConstants> {
    check_delta(delta)?;
    let c_cov = covert_constant(ch)?;
    let nt = ch.n_t();
    let lg = log2_1p(1.0 / nt);
    let c_rel_no_ea = ch.eta * lg;
    let c_rel_ea = ch.eta / (2.0 * (1.0 + nt));
    let sd = delta.sqrt();
    Ok(CovertConstants {
        c_cov,
        c_rel_no_ea,
        c_rel_ea,
        l_no_ea: c_cov * c_rel_no_ea,
        k_no_ea: (c_cov * sd * (1.0 + 2.0 * nt) * c_rel_no_ea * lg).sqrt(),
        l_ea: c_cov * c_rel_ea,
        k_ea: (c_cov * sd * c_rel_ea / 2.0).sqrt(),
    })
}

fn receiver_gamma(ch: &ChannelParams) -> f64 {
    -(-2.0 * (1.0 + ch.n_t())).exp_m1()
}

/// Approximate rate of the structured entanglement-assisted receiver, bits/mode.
pub fn structured_receiver_rate(ch: &ChannelParams, nbar_s: f64, rp: &ReceiverParams) -> Result<f64> {
    ch.require_noise()?;
    let nt = ch.n_t();
    let gamma = receiver_gamma(ch);
    let v = rp.v;
    let w = 4.0 * (1.0 + nt) / (v * ch.eta * gamma + 4.0 * nt * (1.0 + nt));
    if !(nbar_s > 0.0) {
        return Err(domain(format!("nbar_S = {nbar_s} must be > 0")));
    }
    if nbar_s >= w {
        return Err(Error::ApproximationDomain { nbar_s, w });
    }
    let ratio = w / nbar_s;
    let bracket = ratio.log2() - (1.0 + ratio.ln()).log2() - g_unchecked(2.0 * nt * (1.0 + nt) / (v * ch.eta * gamma));
    Ok(ch.eta * nbar_s * gamma / (2.0 * (1.0 + nt)) * bracket)
}

/// Covert constant of the structured receiver, η γ c_cov / (4(1+n_T)).
pub fn structured_receiver_covert_constant(ch: &ChannelParams) -> Result<f64> {
    let c_cov = covert_constant(ch)?;
    Ok(ch.eta * receiver_gamma(ch) * c_cov / (4.0 * (1.0 + ch.n_t())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ch(eta: f64, nb: f64) -> ChannelParams {
        ChannelParams::new(eta, nb).unwrap()
    }

    #[test]
    fn g_values() {
        assert_eq!(g_entropy(0.0).unwrap(), 0.0);
        assert_relative_eq!(g_entropy(1.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(g_entropy(0.5).unwrap(), 1.5 * 1.5f64.log2() + 0.5, epsilon = 1e-15);
        assert!(g_entropy(-1e-3).is_err());
    }

    #[test]
    fn g_series_branch_is_continuous() {
        let below = g_unchecked(0.999_999e-12);
        let above = g_unchecked(1.000_001e-12);
        assert_relative_eq!(below, above, max_relative = 1e-5);
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelParams::new(0.0, 1.0).is_err());
        assert!(ChannelParams::new(1.0, 1.0).is_err());
        assert!(ChannelParams::new(0.5, -0.1).is_err());
        assert!(ChannelParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn covert_constant_values() {
        assert_relative_eq!(covert_constant(&ch(0.5, 1.0)).unwrap(), 2.449_489_742_783_178, epsilon = 1e-12);
        assert_relative_eq!(covert_constant(&ch(0.9, 1.0)).unwrap(), 18.493_242_008_906_93, epsilon = 1e-9);
        assert_eq!(covert_constant(&ch(0.5, 0.0)), Err(Error::CovertnessImpossible));
        assert!(covert_constant(&ch(0.5, 1e-300)).unwrap() > 0.0);
    }

    #[test]
    fn budget_values() {
        let c = ch(0.5, 1.0);
        assert_relative_eq!(photon_budget(&c, 1.0, 1_000_000).unwrap().nbar_s, 2.449_489_742_783_178e-3, epsilon = 1e-15);
        assert_relative_eq!(photon_budget(&c, 1.0, 1).unwrap().nbar_s, 2.449_489_742_783_178, epsilon = 1e-12);
        assert!(photon_budget(&c, 0.0, 10).is_err());
        assert!(photon_budget(&c, 1.0, 0).is_err());
        let a = photon_budget(&c, 1.0, 1000).unwrap().nbar_s;
        let b = photon_budget(&c, 1.0, 4000).unwrap().nbar_s;
        assert_relative_eq!(a / b, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn holevo_values() {
        let c = ch(0.6, 1.0);
        assert_eq!(holevo_capacity(&c, 0.0).unwrap(), 0.0);
        let want = g_unchecked(0.406) - g_unchecked(0.4);
        assert_relative_eq!(holevo_capacity(&c, 0.01).unwrap(), want, epsilon = 1e-15);
        assert_relative_eq!(holevo_capacity_taylor_upper(&c, 1e-3).unwrap(), 0.6e-3 * 3.5f64.log2(), max_relative = 1e-14);
        for s in [1e-3, 0.1] {
            assert!(holevo_capacity_taylor_upper(&c, s).unwrap() >= holevo_capacity(&c, s).unwrap());
        }
        assert!(holevo_capacity_taylor_upper(&ch(0.6, 0.0), 0.1).is_err());
    }

    #[test]
    fn ea_capacity_endpoints() {
        let c = ch(0.6, 1.0);
        assert!(ea_capacity(&c, 0.0).unwrap().abs() < 1e-15);
        // η → 1: A± → 0 so the value tends to 2 g(n̄_S).
        let near_one = ch(1.0 - 1e-9, 3.0);
        assert_relative_eq!(ea_capacity(&near_one, 0.4).unwrap(), 2.0 * g_unchecked(0.4), max_relative = 1e-6);
        // Frozen against an independent 30-digit evaluation.
        assert_relative_eq!(ea_capacity(&ch(0.6, 0.5), 0.2).unwrap(), 0.529_773_539_9, max_relative = 1e-9);
    }

    #[test]
    fn ea_expansion_tracks_capacity() {
        let c = ch(0.6, 1.0);
        let r4 = ea_capacity_expansion(&c, 1e-4).unwrap() / ea_capacity(&c, 1e-4).unwrap();
        let r6 = ea_capacity_expansion(&c, 1e-6).unwrap() / ea_capacity(&c, 1e-6).unwrap();
        assert!((r4 - 1.0).abs() < 1e-2, "{r4}");
        assert!((r6 - 1.0).abs() < 1e-3, "{r6}");
        assert!((r6 - 1.0).abs() < (r4 - 1.0).abs());
        assert!(ea_capacity_expansion(&c, 1.0).is_err());
        assert!(ea_capacity_expansion(&c, 0.0).is_err());
    }

    #[test]
    fn qpsk_leading_values() {
        let c = ch(0.6, 1.0);
        assert_eq!(qpsk_leading_moments(&c, 0.0).unwrap(), (0.0, 0.0));
        let (chi, v) = qpsk_leading_moments(&c, 1e-3).unwrap();
        assert_relative_eq!(chi, 1e-3 * 0.6 * 3.5f64.log2(), max_relative = 1e-14);
        assert_relative_eq!(v, 1e-3 * 0.6 * 1.8 * 3.5f64.log2().powi(2), max_relative = 1e-14);
        assert!(qpsk_leading_moments(&ch(0.6, 0.0), 1e-3).is_err());
    }

    #[test]
    fn gaussian_variance_values() {
        // n_T = 1.
        let c = ch(0.5, 2.0);
        assert!(gaussian_ensemble_variance(&c, 0.0).unwrap().abs() < 1e-15);
        let lead = gaussian_ensemble_variance_leading_coefficient(&c).unwrap() * 1e-3;
        let r = gaussian_ensemble_variance(&c, 1e-3).unwrap() / lead;
        assert!((r - 1.0).abs() < 1e-2, "{r}");
        let q = qpsk_variance_leading_coefficient(&c).unwrap();
        assert_relative_eq!(gaussian_ensemble_variance_leading_coefficient(&c).unwrap(), q, max_relative = 1e-12);
        assert!(gaussian_ensemble_variance(&ch(0.5, 0.0), 1e-3).is_err());
    }

    #[test]
    fn covert_constants_values() {
        let k = covert_constants(&ch(0.5, 1.0), 1.0).unwrap();
        assert_relative_eq!(k.c_rel_no_ea, 0.5 * 3f64.log2(), epsilon = 1e-15);
        assert_relative_eq!(k.l_no_ea, 2.449_489_742_783_178 * 0.5 * 3f64.log2(), max_relative = 1e-14);
        assert_relative_eq!(k.c_rel_ea, 1.0 / 6.0, epsilon = 1e-16);
        let k16 = covert_constants(&ch(0.5, 1.0), 16.0).unwrap();
        assert_relative_eq!(k16.k_no_ea / k.k_no_ea, 2.0, epsilon = 1e-14);
        assert_relative_eq!(k16.k_ea / k.k_ea, 2.0, epsilon = 1e-14);
        assert_eq!(k16.l_ea, k.l_ea);
        assert_eq!(k16.l_no_ea, k.l_no_ea);
    }

    #[test]
    fn structured_receiver() {
        let c = ch(0.5, 10.0);
        let rp = ReceiverParams::new(1.0).unwrap();
        assert!(ReceiverParams::new(0.5).is_err());
        let tiny = structured_receiver_rate(&c, 1e-300, &rp).unwrap();
        assert!(tiny.abs() < 1e-290);
        // At n̄_B = 10 the bracket only turns positive for small n̄_S; the v = 1
        // receiver is still negative at 1e-4 while v = 2, 4 are positive and
        // increase with v.
        let r: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&v| structured_receiver_rate(&c, 1e-4, &ReceiverParams::new(v).unwrap()).unwrap())
            .collect();
        assert!(r[0] < 0.0 && r[1] > 0.0 && r[2] > r[1], "{r:?}");
        let ratio = structured_receiver_rate(&c, 1e-12, &rp).unwrap() / ea_capacity(&c, 1e-12).unwrap();
        assert!(ratio > 0.25 && ratio < 0.5, "{ratio}");
        assert!(matches!(structured_receiver_rate(&c, 10.0, &rp), Err(Error::ApproximationDomain { .. })));
    }

    #[test]
    fn structured_receiver_constant() {
        let c = ch(0.5, 1.0);
        let gamma = 1.0 - (-3.0f64).exp();
        let want = 0.5 * gamma * covert_constant(&c).unwrap() / 6.0;
        assert_relative_eq!(structured_receiver_covert_constant(&c).unwrap(), want, max_relative = 1e-14);
        let big = ch(0.5, 100.0);
        let l_ea = covert_constants(&big, 1.0).unwrap().l_ea;
        let r = structured_receiver_covert_constant(&big).unwrap() / (l_ea / 2.0);
        assert!((r - 1.0).abs() < 0.05);
    }
}
