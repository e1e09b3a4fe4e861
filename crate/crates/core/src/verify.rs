//! Acceptance checks: closed forms against the Fock oracle, limit laws and
//! structural invariants. Shared by the `covert verify` command and the
//! acceptance test target.

use nalgebra::Matrix4;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::error::Result;
use crate::finite_blocklength::{ea_capacity_regularized, ea_variance_regularized};
use crate::fock_oracle::{ea_moments_adaptive, qpsk_moments_adaptive, Converged, RelEntMoments, TruncationConfig};
use crate::scalar_capacity::{
    covert_constants, ea_capacity, gaussian_ensemble_variance_leading_coefficient, qpsk_leading_moments,
    qpsk_variance_leading_coefficient, structured_receiver_covert_constant, ChannelParams,
};
use crate::symplectic_gaussian::{
    ea_variance_closed, omega, output_and_reference_cms, phase_rotate_mode_b, qre_variance_gaussian, symplectic_spectrum, tmsv_cm,
    TwoModeCM,
};

/// How much of the suite to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Criteria 1, 3, 7 and 8.
    Fast,
    /// Every criterion.
    Full,
}

impl Level {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Level::Fast => &[1, 3, 7, 8],
            Level::Full => &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        }
    }
}

/// One numeric comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn new(name: impl Into<String>, observed: f64, expected: f64, tolerance: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), observed, expected, tolerance: tolerance.into(), passed, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Self::new(name, f64::NAN, f64::NAN, "-", false).with_note(format!("error: {err}"))
    }

    /// |observed/expected − 1| ≤ tol.
    fn relative(name: impl Into<String>, observed: f64, expected: f64, tol: f64) -> Self {
        let gap = (observed / expected - 1.0).abs();
        Self::new(name, observed, expected, format!("rel {tol:e}"), gap <= tol)
    }

    /// observed ≤ limit.
    fn at_most(name: impl Into<String>, observed: f64, limit: f64, unit: &str) -> Self {
        let shown = if limit != 0.0 && limit.abs() < 1e-3 { format!("{limit:e}") } else { format!("{limit}") };
        Self::new(name, observed, limit, format!("<= {shown} {unit}").trim_end().to_string(), observed <= limit)
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub checks: Vec<Check>,
    pub elapsed_s: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

/// Outcome of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub level: Level,
    pub criteria: Vec<CriterionReport>,
    pub elapsed_s: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(CriterionReport::passed)
    }

    pub fn criterion(&self, id: u8) -> Option<&CriterionReport> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

/// Channel and signal of the EA spot check.
pub const EA_SPOT: (f64, f64, f64) = (0.6, 0.5, 0.2);
/// Channel of the QPSK checks.
pub const QPSK_CHANNEL: (f64, f64) = (0.6, 1.0);
/// Channel of the blocklength limit checks.
pub const LIMIT_CHANNEL: (f64, f64) = (0.5, 1.0);
/// Small-signal grid of the Q scaling checks.
pub const Q_GRID: [f64; 3] = [1e-3, 0.0031622776601683794, 1e-2];

const VARIANCE_GRID_ETA: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
const VARIANCE_GRID_NBAR_B: [f64; 5] = [0.1, 0.5, 1.0, 3.0, 10.0];
const VARIANCE_GRID_NBAR_S: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 1.0];

fn channel(p: (f64, f64)) -> ChannelParams {
    ChannelParams::new(p.0, p.1).expect("built-in channel parameters are valid")
}

/// State shared across criteria: the expensive oracle results and every
/// moment set produced so far.
pub struct Suite {
    cfg: TruncationConfig,
    ea_spot: Option<std::result::Result<Converged<RelEntMoments>, String>>,
    moments: Vec<(String, RelEntMoments)>,
}

impl Suite {
    pub fn new(cfg: TruncationConfig) -> Self {
        Self { cfg, ea_spot: None, moments: Vec::new() }
    }

    /// Every relative-entropy moment set computed so far, labelled.
    pub fn moments(&self) -> &[(String, RelEntMoments)] {
        &self.moments
    }

    fn ea_spot(&mut self) -> std::result::Result<Converged<RelEntMoments>, String> {
        if self.ea_spot.is_none() {
            let ch = channel((EA_SPOT.0, EA_SPOT.1));
            let r = ea_moments_adaptive(&ch, EA_SPOT.2, &self.cfg).map_err(|e| e.to_string());
            if let Ok(c) = &r {
                self.moments.push((format!("criterion 1: EA pair, nbar_S = {}", EA_SPOT.2), c.value));
            }
            self.ea_spot = Some(r);
        }
        self.ea_spot.clone().expect("just filled")
    }

    pub fn run(&mut self, level: Level) -> Report {
        let start = Instant::now();
        let criteria = level.criteria().iter().map(|&id| self.run_criterion(id)).collect();
        Report { level, criteria, elapsed_s: start.elapsed().as_secs_f64() }
    }

    pub fn run_criterion(&mut self, id: u8) -> CriterionReport {
        let start = Instant::now();
        let (title, checks) = match id {
            1 => ("EA capacity identity", self.c1()),
            2 => ("EA variance path equivalence", self.c2()),
            3 => ("QPSK Taylor endpoints", self.c3()),
            4 => ("Gaussian vs QPSK first term", self.c4()),
            5 => ("Scaling-law limits", self.c5()),
            6 => ("Q-moment scaling laws", self.c6()),
            7 => ("Structured-receiver halving", self.c7()),
            8 => ("Symplectic invariant suite", self.c8()),
            9 => ("Moment inequalities", self.c9()),
            10 => ("Fast verification budget", self.c10()),
            _ => ("unknown criterion", vec![Check::failed("lookup", format!("no criterion {id}"))]),
        };
        CriterionReport { id, title: title.to_string(), checks, elapsed_s: start.elapsed().as_secs_f64() }
    }

    fn c1(&mut self) -> Vec<Check> {
        let start = Instant::now();
        let ch = channel((EA_SPOT.0, EA_SPOT.1));
        let mut out = Vec::new();
        match (self.ea_spot(), ea_capacity(&ch, EA_SPOT.2)) {
            (Ok(m), Ok(c)) => {
                out.push(Check::relative("oracle D vs closed-form C_EA", m.value.d, c, 1e-5).with_note(format!("K = {}", m.levels)));
                out.push(Check::at_most("truncation change at accepted K", m.last_change, self.cfg.conv_tol, ""));
            }
            (Err(e), _) => out.push(Check::failed("oracle D vs closed-form C_EA", e)),
            (_, Err(e)) => out.push(Check::failed("oracle D vs closed-form C_EA", e)),
        }
        out.push(Check::at_most("runtime", start.elapsed().as_secs_f64(), 30.0, "s"));
        out
    }

    fn c2(&mut self) -> Vec<Check> {
        let start = Instant::now();
        let mut out = vec![match ea_variance_path_gap(output_and_reference_cms) {
            Ok(g) => Check::at_most("closed form vs general formula, 5x5x5 grid (max rel gap)", g, 1e-9, ""),
            Err(e) => Check::failed("closed form vs general formula, 5x5x5 grid", e),
        }];
        let ch = channel((EA_SPOT.0, EA_SPOT.1));
        match (self.ea_spot(), ea_variance_closed(&ch, EA_SPOT.2)) {
            (Ok(m), Ok(v)) => out.push(Check::relative("oracle V vs closed form", m.value.v, v, 1e-4)),
            (Err(e), _) => out.push(Check::failed("oracle V vs closed form", e)),
            (_, Err(e)) => out.push(Check::failed("oracle V vs closed form", e)),
        }
        out.push(Check::at_most("runtime", start.elapsed().as_secs_f64(), 120.0, "s"));
        out
    }

    fn c3(&mut self) -> Vec<Check> {
        let ch = channel(QPSK_CHANNEL);
        let mut gaps = Vec::new();
        for &s in &Q_GRID[..2] {
            let r = qpsk_moments_adaptive(&ch, s, &self.cfg).and_then(|m| Ok((m, qpsk_leading_moments(&ch, s)?)));
            match r {
                Ok((m, lead)) => {
                    self.moments.push((format!("criterion 3: QPSK joint, nbar_S = {s:e}"), m.value.joint));
                    gaps.push(((m.value.chi / lead.0 - 1.0).abs(), (m.value.v_chi / lead.1 - 1.0).abs(), m.value, lead));
                }
                Err(e) => return vec![Check::failed(format!("QPSK oracle at nbar_S = {s:e}"), e)],
            }
        }
        let (g_chi, g_v, m, lead) = gaps[0];
        vec![
            Check::relative("chi vs leading term at 1e-3", m.chi, lead.0, 0.05),
            Check::relative("V_chi vs leading term at 1e-3", m.v_chi, lead.1, 0.03),
            Check::new("chi gap shrinks toward 1e-3", g_chi, gaps[1].0, "< gap at 10^-2.5", g_chi < gaps[1].0),
            Check::new("V_chi gap shrinks toward 1e-3", g_v, gaps[1].1, "< gap at 10^-2.5", g_v < gaps[1].1),
        ]
    }

    fn c4(&mut self) -> Vec<Check> {
        let mut worst = 0.0f64;
        for &eta in &VARIANCE_GRID_ETA {
            for &nb in &VARIANCE_GRID_NBAR_B {
                let ch = channel((eta, nb));
                match (gaussian_ensemble_variance_leading_coefficient(&ch), qpsk_variance_leading_coefficient(&ch)) {
                    (Ok(a), Ok(b)) => worst = worst.max((a / b - 1.0).abs()),
                    (Err(e), _) | (_, Err(e)) => return vec![Check::failed("leading coefficients", e)],
                }
            }
        }
        let mut out = vec![Check::at_most("Gaussian vs QPSK V coefficient (max rel gap over 5x5 channels)", worst, 1e-12, "")];
        // The η convention: the oracle's χ/n̄_S must carry the factor η.
        let ch = channel(QPSK_CHANNEL);
        let s = 1e-4;
        match qpsk_moments_adaptive(&ch, s, &self.cfg).and_then(|m| Ok((m, qpsk_leading_moments(&ch, s)?))) {
            Ok((m, lead)) => out.push(
                Check::relative("oracle chi vs eta*nbar_S*log2(1+1/n_T) at 1e-4", m.value.chi, lead.0, 1e-3)
                    .with_note(format!("without the eta factor the ratio would be {:.4}", m.value.chi / (lead.0 / ch.eta()))),
            ),
            Err(e) => out.push(Check::failed("eta convention", e)),
        }
        out
    }

    fn c5(&mut self) -> Vec<Check> {
        let ch = channel(LIMIT_CHANNEL);
        let delta = 1.0;
        let ns = [100_000_000u64, 10_000_000_000, 1_000_000_000_000];
        let k = match covert_constants(&ch, delta) {
            Ok(k) => k,
            Err(e) => return vec![Check::failed("constants", e)],
        };
        let cap: Result<Vec<f64>> = ns.iter().map(|&n| ea_capacity_regularized(&ch, delta, n)).collect();
        let var: Result<Vec<f64>> = ns.iter().map(|&n| ea_variance_regularized(&ch, delta, n)).collect();
        let (cap, var) = match (cap, var) {
            (Ok(c), Ok(v)) => (c, v),
            (Err(e), _) | (_, Err(e)) => return vec![Check::failed("regularized sequences", e)],
        };
        let mut out = Vec::new();
        let mut push = |label: &str, seq: &[f64], target: f64, tol: f64, note: String| {
            let gaps: Vec<f64> = seq.iter().map(|x| (x / target - 1.0).abs()).collect();
            let mono = gaps[0] > gaps[1] && gaps[1] > gaps[2];
            out.push(Check::new(format!("{label}: gap decreases over n = 1e8, 1e10, 1e12"), gaps[2], gaps[1], "< previous gap", mono).with_note(note.clone()));
            out.push(Check::new(format!("{label}: terminal gap"), seq[2], target, format!("rel {tol}"), gaps[2] < tol).with_note(note));
        };
        push("C_EA sequence vs sqrt(delta)*L_EA", &cap, delta.sqrt() * k.l_ea, 0.05, format!("sequence {cap:?}"));
        push(
            "V_EA sequence vs c_cov*sqrt(delta)*c_rel_EA",
            &var,
            k.c_cov * delta.sqrt() * k.c_rel_ea,
            0.10,
            format!("sequence {var:?}; the sequence tends to half of this target"),
        );
        out
    }

    fn c6(&mut self) -> Vec<Check> {
        let ch_q = channel(QPSK_CHANNEL);
        let ch_e = channel((EA_SPOT.0, EA_SPOT.1));
        let mut qpsk = Vec::new();
        let mut ea = Vec::new();
        for &s in &Q_GRID {
            match qpsk_moments_adaptive(&ch_q, s, &self.cfg) {
                Ok(m) => {
                    self.moments.push((format!("criterion 6: QPSK joint, nbar_S = {s:e}"), m.value.joint));
                    qpsk.push(m.value.joint.q);
                }
                Err(e) => return vec![Check::failed(format!("QPSK oracle at {s:e}"), e)],
            }
            match ea_moments_adaptive(&ch_e, s, &self.cfg) {
                Ok(m) => {
                    self.moments.push((format!("criterion 6: EA pair, nbar_S = {s:e}"), m.value));
                    ea.push(m.value.q / (s * s.ln().powi(4)));
                }
                Err(e) => return vec![Check::failed(format!("EA oracle at {s:e}"), e)],
            }
        }
        let slope = log_log_slope(&Q_GRID, &qpsk);
        let variation = ea.iter().cloned().fold(f64::MIN, f64::max) / ea.iter().cloned().fold(f64::MAX, f64::min) - 1.0;
        vec![
            Check::new("QPSK Q log-log slope", slope, 1.0, "abs 0.15", (slope - 1.0).abs() <= 0.15).with_note(format!("Q = {qpsk:?}")),
            Check::at_most("EA Q/(nbar_S ln^4 nbar_S) variation", variation, 0.20, "").with_note(format!("ratios {ea:?}")),
        ]
    }

    fn c7(&mut self) -> Vec<Check> {
        let ch = channel((0.5, 100.0));
        match (structured_receiver_covert_constant(&ch), covert_constants(&ch, 1.0)) {
            (Ok(sr), Ok(k)) => {
                let r = sr / (k.l_ea / 2.0);
                vec![Check::new("structured constant / (L_EA/2)", r, 1.0, "in [0.95, 1.05]", (0.95..=1.05).contains(&r))]
            }
            (Err(e), _) | (_, Err(e)) => vec![Check::failed("structured constant", e)],
        }
    }

    fn c8(&mut self) -> Vec<Check> {
        let mut rng = StdRng::seed_from_u64(0x5eed_c0de);
        let om = omega();
        let mut sympl = 0.0f64;
        let mut recon = 0.0f64;
        let mut phase = 0.0f64;
        for i in 0..100 {
            let eta = rng.random_range(0.01..0.99);
            let nb = 10f64.powf(rng.random_range(-2.0..1.0));
            let s = 10f64.powf(rng.random_range(-4.0..0.0));
            let ch = channel((eta, nb));
            let step = output_and_reference_cms(&ch, s).and_then(|(rho, sigma)| {
                let sp = symplectic_spectrum(&rho)?;
                let sm = sp.s_matrix;
                let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(sp.lambdas[0], sp.lambdas[1], sp.lambdas[0], sp.lambdas[1]));
                let scale = rho.sigma().amax().max(1.0);
                let r = (sm * d * sm.transpose() - rho.sigma()).amax() / scale;
                let w = (sm * om * sm.transpose() - om).amax();
                let p = if i % 10 == 0 {
                    let v0 = qre_variance_gaussian(&rho, &sigma)?;
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let v1 = qre_variance_gaussian(&phase_rotate_mode_b(&rho, phi), &phase_rotate_mode_b(&sigma, phi))?;
                    (v1 / v0 - 1.0).abs()
                } else {
                    0.0
                };
                Ok((w, r, p))
            });
            match step {
                Ok((w, r, p)) => {
                    sympl = sympl.max(w);
                    recon = recon.max(r);
                    phase = phase.max(p);
                }
                Err(e) => return vec![Check::failed(format!("triple ({eta}, {nb}, {s})"), e)],
            }
        }
        let mut tmsv = 0.0f64;
        for s in [0.0, 1e-6, 0.3, 1.0, 10.0, 100.0] {
            match tmsv_cm(s).and_then(|cm| symplectic_spectrum(&cm)) {
                Ok(sp) => tmsv = tmsv.max((sp.lambdas[0] - 0.5).abs()).max((sp.lambdas[1] - 0.5).abs()),
                Err(e) => return vec![Check::failed("TMSV spectrum", e)],
            }
        }
        vec![
            Check::at_most("max |S Omega S^T - Omega| over 100 random triples", sympl, 1e-10, ""),
            Check::at_most("max relative CM reconstruction error", recon, 1e-10, ""),
            Check::at_most("max |lambda - 1/2| for TMSV", tmsv, 1e-12, ""),
            Check::at_most("max relative change of V under phase rotation", phase, 1e-9, ""),
        ]
    }

    fn c9(&mut self) -> Vec<Check> {
        if self.moments.is_empty() {
            return vec![Check::failed("moment inequalities", "no moments were produced by criteria 1-6")];
        }
        self.moments
            .iter()
            .map(|(label, m)| {
                let excess = (m.t * m.t - m.v * m.q).max(m.v * m.v - m.q);
                Check::new(format!("{label}: max(T^2 - VQ, V^2 - Q)"), excess, 0.0, "<= 1e-8", m.satisfies_moment_inequalities(1e-8))
            })
            .collect()
    }

    fn c10(&mut self) -> Vec<Check> {
        let report = Suite::new(self.cfg).run(Level::Fast);
        vec![
            Check::new("fast level passes", if report.passed() { 1.0 } else { 0.0 }, 1.0, "all checks", report.passed()),
            Check::at_most("fast level runtime", report.elapsed_s, 60.0, "s"),
        ]
    }
}

/// Largest relative gap between the closed-form EA variance and the general
/// Gaussian formula evaluated on the CM pair from `cms`, over a 5×5×5 grid.
pub fn ea_variance_path_gap(cms: impl Fn(&ChannelParams, f64) -> Result<(TwoModeCM, TwoModeCM)>) -> Result<f64> {
    let mut worst = 0.0f64;
    for &eta in &VARIANCE_GRID_ETA {
        for &nb in &VARIANCE_GRID_NBAR_B {
            let ch = channel((eta, nb));
            for &s in &VARIANCE_GRID_NBAR_S {
                let (rho, sigma) = cms(&ch, s)?;
                let general = qre_variance_gaussian(&rho, &sigma)?;
                let closed = ea_variance_closed(&ch, s)?;
                worst = worst.max((general / closed - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Runs a level with the default truncation policy.
pub fn run(level: Level) -> Report {
    Suite::new(TruncationConfig::default()).run(level)
}
