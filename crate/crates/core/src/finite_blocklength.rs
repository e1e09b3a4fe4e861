//! Finite-blocklength lower bounds on the number of covert bits.
//!
//! The generic normal-approximation bound takes first, second and fourth
//! moments of the relative-entropy random variable; the covert
//! specializations evaluate them at the photon budget n̄_S(n).

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Error, Result};
use crate::fock_oracle::{ea_moments_adaptive, qpsk_moments_adaptive, TruncationConfig};
use crate::scalar_capacity::{covert_constants, ea_capacity, photon_budget, qpsk_leading_moments, ChannelParams};
use crate::symplectic_gaussian::ea_variance_closed;

/// Berry-Esseen constant, upper end of its known range so the bound stays valid.
pub const C_BE: f64 = 0.4784;

/// n̄_S values at which the Q models are calibrated against the oracle.
pub const CALIBRATION_POINTS: [f64; 3] = [1e-3, 0.0031622776601683794, 1e-2];

/// Moments and target error of one application of the normal-approximation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// bits/use
    pub d: f64,
    /// bits²/use
    pub v: f64,
    /// bits⁴/use
    pub q: f64,
    pub epsilon: f64,
    pub n: u64,
}

impl BoundInputs {
    pub fn new(d: f64, v: f64, q: f64, epsilon: f64, n: u64) -> Result<Self> {
        let b = Self { d, v, q, epsilon, n };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(domain(format!("epsilon = {} must lie in (0, 1)", self.epsilon)));
        }
        if self.n == 0 {
            return Err(domain("blocklength n must be >= 1"));
        }
        if !self.d.is_finite() || !(self.v >= 0.0) || !(self.q >= 0.0) || !self.v.is_finite() || !self.q.is_finite() {
            return Err(domain(format!("moments must be finite with V, Q >= 0 (D = {}, V = {}, Q = {})", self.d, self.v, self.q)));
        }
        Ok(())
    }
}

/// Additive pieces of a message-size bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBoundTerms {
    pub first_order: f64,
    pub second_order: f64,
    pub remainder: f64,
}

/// Lower bound on log₂ of the message-set size. May be negative for small n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MBound {
    pub m_lower: f64,
    pub terms: MBoundTerms,
}

impl MBound {
    fn from_terms(first_order: f64, second_order: f64, remainder: f64) -> Self {
        Self { m_lower: first_order + second_order + remainder, terms: MBoundTerms { first_order, second_order, remainder } }
    }
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Φ⁻¹(p): Acklam's rational approximation polished by two Newton steps.
pub fn inv_gaussian_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("p = {p} must lie in (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // 1 − p is exact for p ≥ 1/2, so this keeps Φ⁻¹ antisymmetric.
    if p > 0.5 {
        return Ok(-inv_lower(1.0 - p));
    }
    Ok(inv_lower(p))
}

fn inv_lower(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let mut x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let pdf = gaussian_pdf(x);
        if pdf == 0.0 {
            break;
        }
        x -= (gaussian_cdf(x) - p) / pdf;
    }
    x
}

/// m ≥ nD + √(nV)·Φ⁻¹(ε) − C_n with
/// C_n = C_BE·Q^{3/4}/(√(2π)·V) + √V/√(2π) + log₂(4εn).
pub fn lemma1_bound(b: &BoundInputs) -> Result<MBound> {
    b.validate()?;
    let n = b.n as f64;
    let phi_inv = inv_gaussian_cdf(b.epsilon)?;
    if b.v == 0.0 && phi_inv != 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let second = if phi_inv == 0.0 { 0.0 } else { (n * b.v).sqrt() * phi_inv };
    let sqrt_2pi = (2.0 * PI).sqrt();
    let berry_esseen = if b.v > 0.0 {
        C_BE / sqrt_2pi * b.q.powf(0.75) / b.v
    } else if b.q == 0.0 {
        0.0
    } else {
        return Err(Error::DegenerateVariance);
    };
    let c_n = berry_esseen + b.v.sqrt() / sqrt_2pi + (4.0 * b.epsilon * n).log2();
    Ok(MBound::from_terms(n * b.d, second, -c_n))
}

/// Fourth-moment models Q ≈ q₀·n̄_S (QPSK) and Q ≈ q₁·n̄_S·ln⁴n̄_S (EA).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QCalibration {
    pub q0: f64,
    pub q1: f64,
}

impl QCalibration {
    /// Fits q₀ and q₁ against the Fock oracle at [`CALIBRATION_POINTS`].
    /// Each constant is the largest ratio over the points, so the model
    /// over-estimates Q (and thus C_n) across the calibrated range.
    pub fn from_oracle(ch: &ChannelParams, cfg: &TruncationConfig) -> Result<Self> {
        ch.require_noise()?;
        let mut q0 = 0.0f64;
        let mut q1 = 0.0f64;
        for &s in &CALIBRATION_POINTS {
            let qp = qpsk_moments_adaptive(ch, s, cfg)?.value.joint.q;
            q0 = q0.max(qp / s);
            let qe = ea_moments_adaptive(ch, s, cfg)?.value.q;
            q1 = q1.max(qe / (s * s.ln().powi(4)));
        }
        Ok(Self { q0, q1 })
    }

    pub fn q_no_ea(&self, nbar_s: f64) -> f64 {
        self.q0 * nbar_s
    }

    pub fn q_ea(&self, nbar_s: f64) -> f64 {
        self.q1 * nbar_s * nbar_s.ln().powi(4)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    Ok(())
}

/// Covert QPSK bound: L_noEA·√(δn) + K_noEA·Φ⁻¹(ε)·n^{1/4} plus the remainder
/// left by the normal-approximation bound at the leading-order moments.
pub fn m_bound_no_ea(ch: &ChannelParams, delta: f64, epsilon: f64, n: u64, cal: &QCalibration) -> Result<MBound> {
    check_epsilon(epsilon)?;
    let budget = photon_budget(ch, delta, n)?;
    let k = covert_constants(ch, delta)?;
    let s = budget.nbar_s;
    let (d, v) = qpsk_leading_moments(ch, s)?;
    let total = lemma1_bound(&BoundInputs::new(d, v, cal.q_no_ea(s), epsilon, n)?)?;
    let nf = n as f64;
    let first = k.l_no_ea * (delta * nf).sqrt();
    let second = k.k_no_ea * inv_gaussian_cdf(epsilon)? * nf.powf(0.25);
    Ok(MBound::from_terms(first, second, total.m_lower - first - second))
}

/// Entanglement-assisted bound: L_EA·√(δn)·log₂n + K_EA·Φ⁻¹(ε)·n^{1/4}·log₂n
/// plus the remainder, with the exact capacity and variance at n̄_S(n).
pub fn m_bound_ea(ch: &ChannelParams, delta: f64, epsilon: f64, n: u64, cal: &QCalibration) -> Result<MBound> {
    check_epsilon(epsilon)?;
    let budget = photon_budget(ch, delta, n)?;
    let k = covert_constants(ch, delta)?;
    let s = budget.nbar_s;
    let d = ea_capacity(ch, s)?;
    let v = ea_variance_closed(ch, s)?;
    let total = lemma1_bound(&BoundInputs::new(d, v, cal.q_ea(s), epsilon, n)?)?;
    let nf = n as f64;
    let log_n = nf.log2();
    let first = k.l_ea * (delta * nf).sqrt() * log_n;
    let second = k.k_ea * inv_gaussian_cdf(epsilon)? * nf.powf(0.25) * log_n;
    Ok(MBound::from_terms(first, second, total.m_lower - first - second))
}

/// n·C_EA(n̄_S(n)) / (√(δn)·log₂n), which tends to L_EA.
pub fn ea_capacity_regularized(ch: &ChannelParams, delta: f64, n: u64) -> Result<f64> {
    let s = photon_budget(ch, delta, n)?.nbar_s;
    let nf = n as f64;
    Ok(nf * ea_capacity(ch, s)? / ((delta * nf).sqrt() * nf.log2()))
}

/// n·V_EA(n̄_S(n)) / (√n·log₂²n), which tends to c_cov·√δ·c_rel,EA/2.
pub fn ea_variance_regularized(ch: &ChannelParams, delta: f64, n: u64) -> Result<f64> {
    let s = photon_budget(ch, delta, n)?.nbar_s;
    let nf = n as f64;
    Ok(nf * ea_variance_closed(ch, s)? / (nf.sqrt() * nf.log2().powi(2)))
}
