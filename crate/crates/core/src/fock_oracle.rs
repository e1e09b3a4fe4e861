//! Brute-force Fock-space oracle.
//!
//! Density operators are truncated to `K` levels per mode (photon numbers
//! `0..K`). Two-mode operators use the index `i·K + j` for `|i⟩_B |j⟩_R`.
//! Spectral work is done in nats and converted to bits on the way out.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{domain, Error, Result};
use crate::scalar_capacity::ChannelParams;

/// Eigenvalues at or below this are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-16;
const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const SUPPORT_TOL: f64 = 1e-10;

/// Truncation policy of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    /// Base K is the smallest with thermal tail (n̄/(1+n̄))^K below this.
    pub tail_tol: f64,
    /// Adaptive loop stops once consecutive results differ by less than this.
    pub conv_tol: f64,
    /// K increment of the adaptive loop.
    pub step: usize,
    /// Largest per-mode K for single-mode states.
    pub k_max_single: usize,
    /// Largest per-mode K for two-mode states (dimension K²).
    pub k_max_two_mode: usize,
    /// Largest tolerated trace loss of a channel output.
    pub leakage_bound: f64,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { tail_tol: 1e-12, conv_tol: 1e-8, step: 4, k_max_single: 120, k_max_two_mode: 48, leakage_bound: 1e-9 }
    }
}

/// Truncated Fock-basis Hermitian operator on one or two modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    levels: usize,
    modes: usize,
    matrix: DMatrix<Complex64>,
    trace_deficit: f64,
}

impl FockOperator {
    /// Wraps a Hermitian matrix of size `levels^modes`.
    pub fn new(matrix: DMatrix<Complex64>, levels: usize, modes: usize, trace_deficit: f64) -> Result<Self> {
        let dim = levels.pow(modes as u32);
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(domain(format!("matrix is {}x{}, expected {dim}x{dim}", matrix.nrows(), matrix.ncols())));
        }
        let herm = max_modulus(&(&matrix - matrix.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        Ok(Self { levels, modes, matrix, trace_deficit })
    }

    fn from_real(m: DMatrix<f64>, levels: usize, modes: usize, trace_deficit: f64) -> Self {
        Self { levels, modes, matrix: m.map(|x| Complex64::new(x, 0.0)), trace_deficit }
    }

    /// Total dimension `levels^modes`.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Fock levels per mode (K).
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// 1 − trace for density operators.
    pub fn trace_deficit(&self) -> f64 {
        self.trace_deficit
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    fn real_part(&self) -> Option<DMatrix<f64>> {
        if self.matrix.iter().all(|z| z.im == 0.0) {
            Some(self.matrix.map(|z| z.re))
        } else {
            None
        }
    }

    /// ⟨a†a⟩ for a single-mode operator.
    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim()).map(|k| k as f64 * self.matrix[(k, k)].re).sum()
    }

    /// Tensor product self ⊗ other of two single-mode operators.
    pub fn tensor(&self, other: &FockOperator) -> Result<FockOperator> {
        if self.modes != 1 || other.modes != 1 || self.levels != other.levels {
            return Err(domain("tensor product needs two single-mode operators with equal K"));
        }
        let m = self.matrix.kronecker(&other.matrix);
        let deficit = 1.0 - (1.0 - self.trace_deficit) * (1.0 - other.trace_deficit);
        Ok(FockOperator { levels: self.levels, modes: 2, matrix: m, trace_deficit: deficit })
    }

    /// Reduced states (Tr_R, Tr_B) of a two-mode operator.
    pub fn partial_traces(&self) -> Result<(FockOperator, FockOperator)> {
        if self.modes != 2 {
            return Err(domain("partial trace needs a two-mode operator"));
        }
        let k = self.levels;
        let mut b = DMatrix::<Complex64>::zeros(k, k);
        let mut r = DMatrix::<Complex64>::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    b[(i, j)] += self.matrix[(i * k + l, j * k + l)];
                    r[(i, j)] += self.matrix[(l * k + i, l * k + j)];
                }
            }
        }
        let d = self.trace_deficit;
        Ok((
            FockOperator { levels: k, modes: 1, matrix: b, trace_deficit: d },
            FockOperator { levels: k, modes: 1, matrix: r, trace_deficit: d },
        ))
    }
}

/// Single-mode superoperator acting on row-major vectorized K×K operators.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSuperop {
    levels: usize,
    matrix: DMatrix<f64>,
    env_tail: f64,
}

/// Relative-entropy moments, bits^k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelEntMoments {
    /// D(ρ‖σ), bits.
    pub d: f64,
    /// Second central moment, bits².
    pub v: f64,
    /// Third absolute central moment, bits³.
    pub t: f64,
    /// Fourth central moment, bits⁴.
    pub q: f64,
}

impl RelEntMoments {
    /// T² ≤ V·Q and V² ≤ Q, each with absolute slack.
    pub fn satisfies_moment_inequalities(&self, slack: f64) -> bool {
        self.t * self.t <= self.v * self.q + slack && self.v * self.v <= self.q + slack
    }

    fn from_nats(d: f64, v: f64, t: f64, q: f64) -> Self {
        Self { d: d / LN_2, v: v / LN_2.powi(2), t: t / LN_2.powi(3), q: q / LN_2.powi(4) }
    }
}

/// Holevo information and variance of the QPSK ensemble, plus the full
/// moments of the classical-quantum pair they come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpskMoments {
    /// χ, bits.
    pub chi: f64,
    /// V_χ, bits².
    pub v_chi: f64,
    /// Moments of ρ^{BR} against ρ^B ⊗ ρ^R for the cq state with a 4-level register.
    pub joint: RelEntMoments,
}

/// A converged oracle result and the truncation that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Converged<T> {
    pub value: T,
    /// Per-mode K of the reported value.
    pub levels: usize,
    /// Largest change between the last two truncations on the checked quantities.
    pub last_change: f64,
}

fn t_k(nbar: f64, k: usize) -> f64 {
    if nbar == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let r = nbar / (1.0 + nbar);
    r.powi(k as i32) / (1.0 + nbar)
}

fn thermal_tail(nbar: f64, k: usize) -> f64 {
    if nbar == 0.0 {
        0.0
    } else {
        (nbar / (1.0 + nbar)).powi(k as i32)
    }
}

/// Smallest K whose thermal tail (n̄/(1+n̄))^K is below `tol`.
pub fn thermal_tail_levels(nbar: f64, tol: f64) -> usize {
    if nbar <= 0.0 {
        return 1;
    }
    let k = (tol.ln() / (nbar / (1.0 + nbar)).ln()).ceil();
    (k as usize).max(1)
}

/// Thermal state with mean photon number `nbar`, truncated to K levels.
pub fn thermal_fock(nbar: f64, k: usize) -> Result<FockOperator> {
    if k == 0 {
        return Err(domain("K must be >= 1"));
    }
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(domain(format!("nbar = {nbar} must be finite and >= 0")));
    }
    let d = DVector::from_fn(k, |i, _| t_k(nbar, i));
    Ok(FockOperator::from_real(DMatrix::from_diagonal(&d), k, 1, thermal_tail(nbar, k)))
}

/// Largest entry modulus of a complex matrix.
pub fn max_modulus(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn annihilation(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { Complex64::new((j as f64).sqrt(), 0.0) } else { Complex64::new(0.0, 0.0) })
}

/// Displacement operator exp(α a† − α* a), built in K + ⌈8|α| + 8⌉ levels and
/// cut back to K.
pub fn displacement_operator(alpha: Complex64, k: usize) -> Result<FockOperator> {
    if k == 0 {
        return Err(domain("K must be >= 1"));
    }
    let limit = k as f64 / 4.0;
    if alpha.norm_sqr() > limit {
        return Err(Error::TruncationUnsafe { alpha_sq: alpha.norm_sqr(), limit });
    }
    let pad = (8.0 * alpha.norm() + 8.0).ceil() as usize;
    let n = k + pad;
    let a = annihilation(n);
    let gen = a.adjoint() * alpha - &a * alpha.conj();
    // gen is anti-Hermitian: gen = −iH with H = i·gen Hermitian.
    let h = gen * Complex64::new(0.0, 1.0);
    let (vals, vecs) = eigh(&h);
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new(0.0, -vals[j]).exp();
    }
    let full = scaled * vecs.adjoint();
    Ok(FockOperator { levels: k, modes: 1, matrix: full.view((0, 0), (k, k)).into_owned(), trace_deficit: 0.0 })
}

/// D(α) ρ_th(n̄) D(α)†.
pub fn displaced_thermal_fock(alpha: Complex64, nbar: f64, k: usize) -> Result<FockOperator> {
    let th = thermal_fock(nbar, k)?;
    if alpha == Complex64::new(0.0, 0.0) {
        return Ok(th);
    }
    let d = displacement_operator(alpha, k)?;
    let mut m = &d.matrix * &th.matrix * d.matrix.adjoint();
    m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let deficit = 1.0 - m.trace().re;
    Ok(FockOperator { levels: k, modes: 1, matrix: m, trace_deficit: deficit.max(0.0) })
}

/// Coherent state |α⟩⟨α| truncated to K levels.
pub fn coherent_fock(alpha: Complex64, k: usize) -> Result<FockOperator> {
    if k == 0 {
        return Err(domain("K must be >= 1"));
    }
    let mut v = DVector::<Complex64>::zeros(k);
    v[0] = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 1..k {
        v[n] = v[n - 1] * alpha / (n as f64).sqrt();
    }
    let m = &v * v.adjoint();
    let deficit = 1.0 - m.trace().re;
    Ok(FockOperator { levels: k, modes: 1, matrix: m, trace_deficit: deficit.max(0.0) })
}

/// Beamsplitter U_BS(η) on the N-photon subspace, `U[(p, m)] = ⟨p, N−p| U |m, N−m⟩`.
/// U_BS maps a† ↦ t a† + r b† and b† ↦ −r a† + t b†, i.e. U = exp(θ(a b† − a† b))
/// with cos θ = √η. The block generator is exponentiated through its
/// Hermitian eigendecomposition; its spectrum is evenly spaced, so this stays
/// accurate where closed-form alternating binomial sums lose digits.
pub fn beamsplitter_block(eta: f64, n: usize) -> DMatrix<f64> {
    let theta = eta.sqrt().acos();
    // H = i·G with G = −θ(a†b − a b†); (a†b)|p, N−p⟩ = √((p+1)(N−p)) |p+1, N−p−1⟩.
    let mut h = DMatrix::<Complex64>::zeros(n + 1, n + 1);
    for p in 0..n {
        let c = theta * (((p + 1) * (n - p)) as f64).sqrt();
        h[(p + 1, p)] = Complex64::new(0.0, -c);
        h[(p, p + 1)] = Complex64::new(0.0, c);
    }
    let (vals, vecs) = eigh(&h);
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new(0.0, -vals[j]).exp();
    }
    (scaled * vecs.adjoint()).map(|z| z.re)
}

/// Beamsplitter Fock amplitude ⟨p, q| U_BS(η) |m, k⟩ (zero unless p+q = m+k).
pub fn beamsplitter_element(eta: f64, m: usize, k: usize, p: usize, q: usize) -> f64 {
    if p + q != m + k {
        return 0.0;
    }
    beamsplitter_block(eta, m + k)[(p, m)]
}

/// Environment truncation for an environment of n̄_B photons.
pub fn env_levels(nbar_b: f64, cfg: &TruncationConfig) -> usize {
    thermal_tail_levels(nbar_b, cfg.tail_tol)
}

/// Thermal-loss channel as a K²×K² superoperator,
/// ρ ↦ Tr_env[U_BS (ρ ⊗ ρ_{n̄_B}) U_BS†], with the environment sum cut at `k_env`.
pub fn thermal_channel_superop(ch: &ChannelParams, k: usize, k_env: usize, cfg: &TruncationConfig) -> Result<ChannelSuperop> {
    if k == 0 || k_env == 0 {
        return Err(domain("K and K_env must be >= 1"));
    }
    let env_tail = thermal_tail(ch.nbar_b(), k_env);
    if env_tail > cfg.tail_tol {
        return Err(Error::Truncation { leakage: env_tail, bound: cfg.tail_tol });
    }
    let blocks: Vec<DMatrix<f64>> = (0..k + k_env).map(|n| beamsplitter_block(ch.eta(), n)).collect();
    let kk = k * k;
    let mut sup = DMatrix::<f64>::zeros(kk, kk);
    for e in 0..k_env {
        let w = t_k(ch.nbar_b(), e);
        if w == 0.0 {
            continue;
        }
        let sw = w.sqrt();
        // Kraus operator for (e in, q_env out): A[p, m] = √w ⟨p, q_env|U|m, e⟩ with m − p = q_env − e =: d.
        for d in -(e as isize)..(k as isize) {
            let c: Vec<(usize, f64)> = (0..k)
                .filter_map(|p| {
                    let m = p as isize + d;
                    (m >= 0 && (m as usize) < k).then(|| (p, sw * blocks[m as usize + e][(p, m as usize)]))
                })
                .collect();
            for &(p, cp) in &c {
                let mp = (p as isize + d) as usize;
                for &(q, cq) in &c {
                    let mq = (q as isize + d) as usize;
                    sup[(p * k + q, mp * k + mq)] += cp * cq;
                }
            }
        }
    }
    Ok(ChannelSuperop { levels: k, matrix: sup, env_tail })
}

impl ChannelSuperop {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Weight of the environment thermal distribution beyond K_env.
    pub fn env_tail(&self) -> f64 {
        self.env_tail
    }

    /// Applies the channel to a single-mode operator. Fails if the output
    /// loses more trace than the configured bound beyond what the input
    /// already lacked.
    pub fn apply(&self, rho: &FockOperator, cfg: &TruncationConfig) -> Result<FockOperator> {
        let k = self.levels;
        if rho.modes != 1 || rho.levels != k {
            return Err(domain("superoperator and state truncations differ"));
        }
        let vec_re = DVector::from_fn(k * k, |i, _| rho.matrix[(i / k, i % k)].re);
        let vec_im = DVector::from_fn(k * k, |i, _| rho.matrix[(i / k, i % k)].im);
        let out_re = &self.matrix * vec_re;
        let out_im = &self.matrix * vec_im;
        let m = DMatrix::from_fn(k, k, |i, j| Complex64::new(out_re[i * k + j], out_im[i * k + j]));
        let lost = rho.trace() - m.trace().re;
        if lost > cfg.leakage_bound {
            return Err(Error::Truncation { leakage: lost, bound: cfg.leakage_bound });
        }
        Ok(FockOperator { levels: k, modes: 1, matrix: m, trace_deficit: rho.trace_deficit + lost.max(0.0) })
    }

    /// Choi matrix Σ_{m,m'} 𝓔(|m⟩⟨m'|) ⊗ |m⟩⟨m'|.
    pub fn choi(&self) -> DMatrix<f64> {
        let k = self.levels;
        DMatrix::from_fn(k * k, k * k, |row, col| {
            let (p, m) = (row / k, row % k);
            let (q, mq) = (col / k, col % k);
            self.matrix[(p * k + q, m * k + mq)]
        })
    }
}

/// Two-mode squeezed vacuum Σ_k √t_k(n̄_S) |k⟩|k⟩, truncated to K levels per mode.
pub fn tmsv_fock(nbar_s: f64, k: usize) -> Result<FockOperator> {
    let th = thermal_fock(nbar_s, k)?;
    let mut psi = DVector::<f64>::zeros(k * k);
    for i in 0..k {
        psi[i * k + i] = th.matrix[(i, i)].re.sqrt();
    }
    let m = &psi * psi.transpose();
    Ok(FockOperator::from_real(m, k, 2, th.trace_deficit))
}

/// ρ^{BR}: the signal half of a TMSV sent through the channel.
pub fn ea_output_state_fock(ch: &ChannelParams, nbar_s: f64, k: usize, cfg: &TruncationConfig) -> Result<FockOperator> {
    if !(nbar_s >= 0.0) || !nbar_s.is_finite() {
        return Err(domain(format!("nbar_S = {nbar_s} must be finite and >= 0")));
    }
    let sup = thermal_channel_superop(ch, k, env_levels(ch.nbar_b(), cfg), cfg)?;
    let amp: Vec<f64> = (0..k).map(|i| t_k(nbar_s, i).sqrt()).collect();
    let kk = k * k;
    let mut m = DMatrix::<f64>::zeros(kk, kk);
    for p in 0..k {
        for q in 0..k {
            let row = p * k + q;
            for a in 0..k {
                for b in 0..k {
                    let w = amp[a] * amp[b];
                    if w != 0.0 {
                        m[(p * k + a, q * k + b)] = w * sup.matrix[(row, a * k + b)];
                    }
                }
            }
        }
    }
    let deficit = 1.0 - m.trace();
    let input_deficit = thermal_tail(nbar_s, k);
    if deficit - input_deficit > cfg.leakage_bound {
        return Err(Error::Truncation { leakage: deficit - input_deficit, bound: cfg.leakage_bound });
    }
    Ok(FockOperator::from_real(m, k, 2, deficit.max(0.0)))
}

fn entropy_nats(vals: &DVector<f64>) -> Result<f64> {
    let min = vals.min();
    if min < -PSD_TOL {
        return Err(Error::InvalidState(format!("eigenvalue {min:e} below zero")));
    }
    Ok(-vals.iter().filter(|&&x| x > EIGEN_FLOOR).map(|&x| x * x.ln()).sum::<f64>())
}

/// Von Neumann entropy, bits. Eigenvalues at or below 10⁻¹⁶ are dropped.
pub fn von_neumann_entropy(rho: &FockOperator) -> Result<f64> {
    let vals = match rho.real_part() {
        Some(m) => eigh(&m).0,
        None => eigh(&rho.matrix).0,
    };
    Ok(entropy_nats(&vals)? / LN_2)
}

struct Spectral<T: ComplexField<RealField = f64>> {
    vals: DVector<f64>,
    vecs: DMatrix<T>,
    // Eigenvalues read off a diagonal matrix, accurate far below the floor.
    exact: bool,
}

fn is_diagonal<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)].clone().modulus() == 0.0))
}

// Connected components of the graph with an edge wherever m[(i, j)] ≠ 0.
// Phase-covariant states split into photon-number-difference sectors, and
// decomposing those separately is both faster and better conditioned.
fn components<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if m[(i, j)].clone().modulus() != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

fn eigen_residual<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, vals: &DVector<f64>, vecs: &DMatrix<T>) -> f64 {
    if !vals.iter().all(|x| x.is_finite()) || !vecs.iter().all(|z| z.clone().modulus().is_finite()) {
        return f64::INFINITY;
    }
    let mut av = m * vecs;
    for (j, mut col) in av.column_iter_mut().enumerate() {
        col.axpy(T::from_real(-vals[j]), &vecs.column(j), T::one());
    }
    av.iter().map(|z| z.clone().modulus()).fold(0.0, f64::max)
}

// nalgebra's implicit QR can underflow to NaN, or deflate inaccurately, when
// a zero diagonal meets off-diagonals many decades below the largest entry
// (rank-one TMSV projectors hit this). Shifting by the largest modulus keeps
// the diagonal away from zero; whichever attempt has the smaller residual wins.
fn eigh_dense<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> (DVector<f64>, DMatrix<T>) {
    let n = m.nrows();
    let scale = m.iter().map(|z| z.clone().modulus()).fold(0.0, f64::max);
    let e = SymmetricEigen::new(m.clone());
    let plain = (e.eigenvalues, e.eigenvectors);
    let plain_res = eigen_residual(m, &plain.0, &plain.1);
    if plain_res <= 1e-14 * scale.max(f64::MIN_POSITIVE) * (n as f64).sqrt() {
        return plain;
    }
    let c = scale.max(f64::MIN_POSITIVE);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] += T::from_real(c);
    }
    let e = SymmetricEigen::new(shifted);
    let alt = (e.eigenvalues.map(|x| x - c), e.eigenvectors);
    if eigen_residual(m, &alt.0, &alt.1) < plain_res {
        alt
    } else {
        plain
    }
}

/// Hermitian eigendecomposition, one sparsity component at a time.
fn eigh<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> (DVector<f64>, DMatrix<T>) {
    let n = m.nrows();
    let groups = components(m);
    if groups.len() == 1 {
        return eigh_dense(m);
    }
    let mut vals = DVector::<f64>::zeros(n);
    let mut vecs = DMatrix::<T>::zeros(n, n);
    let mut col = 0;
    for g in &groups {
        let sub = DMatrix::from_fn(g.len(), g.len(), |i, j| m[(g[i], g[j])].clone());
        let (sv, sw) = if g.len() == 1 { (DVector::from_element(1, sub[(0, 0)].clone().real()), DMatrix::identity(1, 1)) } else { eigh_dense(&sub) };
        for j in 0..g.len() {
            vals[col + j] = sv[j];
            for (i, &gi) in g.iter().enumerate() {
                vecs[(gi, col + j)] = sw[(i, j)].clone();
            }
        }
        col += g.len();
    }
    (vals, vecs)
}

fn spectral<T: ComplexField<RealField = f64>>(m: &DMatrix<T>) -> Spectral<T> {
    let n = m.nrows();
    if is_diagonal(m) {
        return Spectral { vals: DVector::from_fn(n, |i, _| m[(i, i)].clone().real()), vecs: DMatrix::identity(n, n), exact: true };
    }
    let (vals, vecs) = eigh(m);
    Spectral { vals, vecs, exact: false }
}

fn apply_fn<T: ComplexField<RealField = f64>>(s: &Spectral<T>, f: impl Fn(f64) -> f64) -> DMatrix<T> {
    let mut scaled = s.vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= T::from_real(f(s.vals[j]));
    }
    scaled * s.vecs.adjoint()
}

// ⟨v_j|ρ|v_j⟩ for every column of `vecs`.
fn weights<T: ComplexField<RealField = f64>>(rho: &DMatrix<T>, vecs: &DMatrix<T>) -> Vec<f64> {
    let rv = rho * vecs;
    (0..vecs.ncols()).map(|j| vecs.column(j).dotc(&rv.column(j)).real()).collect()
}

// Returns (D, V, T, Q) in nats, central moments taken about `center` (D if None).
fn moments_nats<T: ComplexField<RealField = f64>>(
    rho: &DMatrix<T>,
    sigma: &DMatrix<T>,
    center: Option<f64>,
) -> Result<[f64; 4]> {
    if rho.shape() != sigma.shape() {
        return Err(domain("rho and sigma dimensions differ"));
    }
    let sr = spectral(rho);
    let ss = spectral(sigma);
    if sr.vals.min() < -PSD_TOL || ss.vals.min() < -PSD_TOL {
        return Err(Error::InvalidState("negative eigenvalue beyond tolerance".into()));
    }
    let sigma_floor = if ss.exact { 0.0 } else { EIGEN_FLOOR };
    let null: Vec<usize> = (0..ss.vals.len()).filter(|&j| ss.vals[j] <= sigma_floor).collect();
    if !null.is_empty() {
        let cols = DMatrix::from_columns(&null.iter().map(|&j| ss.vecs.column(j)).collect::<Vec<_>>());
        let weight: f64 = weights(rho, &cols).iter().sum();
        if weight > SUPPORT_TOL {
            return Err(Error::InfiniteRelativeEntropy { weight });
        }
    }
    let floor_ln = |x: f64| x.max(EIGEN_FLOOR).ln();
    let sigma_ln = |x: f64| if x > sigma_floor { x.ln() } else { EIGEN_FLOOR.ln() };
    let l = apply_fn(&sr, floor_ln) - apply_fn(&ss, sigma_ln);
    let d = (rho * &l).trace().real();
    let c = center.unwrap_or(d);
    let n = l.nrows();
    let mut shifted = l;
    for i in 0..n {
        shifted[(i, i)] -= T::from_real(c);
    }
    shifted = (&shifted + shifted.adjoint()) * T::from_real(0.5);
    let (xs, ws) = eigh(&shifted);
    let w = weights(rho, &ws);
    let mut out = [d, 0.0, 0.0, 0.0];
    for (j, &x) in xs.iter().enumerate() {
        let a = x.abs();
        out[1] += w[j] * a * a;
        out[2] += w[j] * a * a * a;
        out[3] += w[j] * a * a * a * a;
    }
    Ok(out)
}

fn moments_dispatch(rho: &FockOperator, sigma: &FockOperator, center: Option<f64>) -> Result<[f64; 4]> {
    if rho.dim() != sigma.dim() {
        return Err(domain("rho and sigma dimensions differ"));
    }
    match (rho.real_part(), sigma.real_part()) {
        (Some(r), Some(s)) => moments_nats(&r, &s, center),
        _ => moments_nats(&rho.matrix, &sigma.matrix, center),
    }
}

/// D, V, T, Q of ρ against σ through the spectrum of L = log ρ − log σ.
pub fn rel_ent_moments(rho: &FockOperator, sigma: &FockOperator) -> Result<RelEntMoments> {
    let [d, v, t, q] = moments_dispatch(rho, sigma, None)?;
    Ok(RelEntMoments::from_nats(d, v, t, q))
}

fn qpsk_states(ch: &ChannelParams, nbar_s: f64, k: usize) -> Result<(Vec<FockOperator>, FockOperator)> {
    if !(nbar_s >= 0.0) || !nbar_s.is_finite() {
        return Err(domain(format!("nbar_S = {nbar_s} must be finite and >= 0")));
    }
    let amp = (ch.eta() * nbar_s).sqrt();
    let nt = ch.n_t();
    let phases = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, -1.0)];
    let states = phases.iter().map(|&ph| displaced_thermal_fock(ph * amp, nt, k)).collect::<Result<Vec<_>>>()?;
    let mut avg = DMatrix::<Complex64>::zeros(k, k);
    for s in &states {
        avg += &s.matrix * Complex64::new(0.25, 0.0);
    }
    avg = (&avg + avg.adjoint()) * Complex64::new(0.5, 0.0);
    // The quarter-turn average only keeps coherences with (i − j) ≡ 0 mod 4, which are real.
    for j in 0..k {
        for i in 0..k {
            avg[(i, j)] = if (i + 4 * k - j) % 4 == 0 { Complex64::new(avg[(i, j)].re, 0.0) } else { Complex64::new(0.0, 0.0) };
        }
    }
    let deficit = 1.0 - avg.trace().re;
    Ok((states, FockOperator { levels: k, modes: 1, matrix: avg, trace_deficit: deficit.max(0.0) }))
}

/// QPSK ensemble {a, ja, −a, −ja}, a = √n̄_S, received as displaced thermal
/// states with amplitude √η·y over occupation n_T.
pub fn qpsk_ensemble_moments(ch: &ChannelParams, nbar_s: f64, k: usize) -> Result<QpskMoments> {
    let (states, avg) = qpsk_states(ch, nbar_s, k)?;
    let s_avg = von_neumann_entropy(&avg)? * LN_2;
    let mut s_each = 0.0;
    for s in &states {
        s_each += 0.25 * von_neumann_entropy(s)? * LN_2;
    }
    let chi = s_avg - s_each;
    let mut second = 0.0;
    let mut d_sum = 0.0;
    let mut joint = [0.0; 4];
    for s in &states {
        let [d, v, _, _] = moments_dispatch(s, &avg, None)?;
        second += 0.25 * (v + d * d);
        d_sum += 0.25 * d;
        let [_, vj, tj, qj] = moments_dispatch(s, &avg, Some(chi))?;
        joint[1] += 0.25 * vj;
        joint[2] += 0.25 * tj;
        joint[3] += 0.25 * qj;
    }
    joint[0] = d_sum;
    let v_chi = second - chi * chi;
    Ok(QpskMoments {
        chi: chi / LN_2,
        v_chi: v_chi / LN_2.powi(2),
        joint: RelEntMoments::from_nats(joint[0], joint[1], joint[2], joint[3]),
    })
}

/// Explicit classical-quantum pair (Σ_y ¼|y⟩⟨y| ⊗ ρ_y, ρ̄ ⊗ I/4) on a 4K-dimensional
/// space, register index major. Returned as plain matrices since the register
/// is not a Fock mode.
pub fn qpsk_joint_state(ch: &ChannelParams, nbar_s: f64, k: usize) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let (states, avg) = qpsk_states(ch, nbar_s, k)?;
    let n = 4 * k;
    let mut joint = DMatrix::<Complex64>::zeros(n, n);
    let mut prod = DMatrix::<Complex64>::zeros(n, n);
    for (y, s) in states.iter().enumerate() {
        joint.view_mut((y * k, y * k), (k, k)).copy_from(&(&s.matrix * Complex64::new(0.25, 0.0)));
        prod.view_mut((y * k, y * k), (k, k)).copy_from(&(&avg.matrix * Complex64::new(0.25, 0.0)));
    }
    Ok((joint, prod))
}

/// [`rel_ent_moments`] for plain Hermitian matrices.
pub fn rel_ent_moments_matrices(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>) -> Result<RelEntMoments> {
    let [d, v, t, q] = moments_nats(rho, sigma, None)?;
    Ok(RelEntMoments::from_nats(d, v, t, q))
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn adaptive<T: Copy>(
    k0: usize,
    k_max: usize,
    cfg: &TruncationConfig,
    eval: impl Fn(usize) -> Result<T>,
    checked: impl Fn(&T) -> Vec<f64>,
) -> Result<Converged<T>> {
    let mut k = k0.max(2);
    let mut prev = eval(k)?;
    let mut last_change = f64::INFINITY;
    while k + cfg.step <= k_max {
        let next = eval(k + cfg.step)?;
        last_change = max_change(&checked(&prev), &checked(&next));
        k += cfg.step;
        prev = next;
        if last_change < cfg.conv_tol {
            return Ok(Converged { value: prev, levels: k, last_change });
        }
    }
    Err(Error::NoConvergence { k_max, last_change })
}

/// Entanglement-assisted pair (ρ^{BR}, ρ^B ⊗ ρ^R) at K levels per mode.
pub fn ea_pair_fock(ch: &ChannelParams, nbar_s: f64, k: usize, cfg: &TruncationConfig) -> Result<(FockOperator, FockOperator)> {
    let rho = ea_output_state_fock(ch, nbar_s, k, cfg)?;
    let (b, r) = rho.partial_traces()?;
    let sigma = b.tensor(&r)?;
    Ok((rho, sigma))
}

/// Starting K for the entanglement-assisted pair.
pub fn ea_base_levels(ch: &ChannelParams, nbar_s: f64, cfg: &TruncationConfig) -> usize {
    let occ = (ch.eta() * nbar_s + ch.n_t()).max(nbar_s);
    thermal_tail_levels(occ, cfg.tail_tol)
}

/// Moments of ρ^{BR} against ρ^B ⊗ ρ^R with K grown in steps until D, V and Q
/// settle. T involves |x|³, which is not smooth in the truncated spectrum and
/// wanders at the 10⁻³ level, so it is reported but not part of the test.
pub fn ea_moments_adaptive(ch: &ChannelParams, nbar_s: f64, cfg: &TruncationConfig) -> Result<Converged<RelEntMoments>> {
    let k0 = ea_base_levels(ch, nbar_s, cfg);
    adaptive(
        k0,
        cfg.k_max_two_mode,
        cfg,
        |k| {
            let (rho, sigma) = ea_pair_fock(ch, nbar_s, k, cfg)?;
            rel_ent_moments(&rho, &sigma)
        },
        |m| vec![m.d, m.v, m.q],
    )
}

/// Starting K for the QPSK states: thermal tail at n_T, plus the displacement.
pub fn qpsk_base_levels(ch: &ChannelParams, nbar_s: f64, cfg: &TruncationConfig) -> usize {
    let alpha_sq = ch.eta() * nbar_s;
    let k = thermal_tail_levels(ch.n_t() + alpha_sq, cfg.tail_tol);
    k.max((4.0 * alpha_sq).ceil() as usize + 1)
}

/// [`qpsk_ensemble_moments`] with K grown until χ, V_χ and the joint Q settle.
pub fn qpsk_moments_adaptive(ch: &ChannelParams, nbar_s: f64, cfg: &TruncationConfig) -> Result<Converged<QpskMoments>> {
    let k0 = qpsk_base_levels(ch, nbar_s, cfg);
    adaptive(k0, cfg.k_max_single, cfg, |k| qpsk_ensemble_moments(ch, nbar_s, k), |m| vec![m.chi, m.v_chi, m.joint.q])
}

/// Single-mode von Neumann entropy of a thermal state with K grown until settled.
pub fn thermal_entropy_adaptive(nbar: f64, cfg: &TruncationConfig) -> Result<Converged<f64>> {
    let k0 = thermal_tail_levels(nbar, cfg.tail_tol);
    adaptive(k0, cfg.k_max_single, cfg, |k| von_neumann_entropy(&thermal_fock(nbar, k)?), |x| vec![*x])
}
