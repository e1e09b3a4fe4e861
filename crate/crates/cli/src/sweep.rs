use clap::ValueEnum;
use covert_core::finite_blocklength::{m_bound_ea, m_bound_no_ea};
use covert_core::scalar_capacity::{
    covert_constant, ea_capacity, ea_capacity_expansion, gaussian_ensemble_variance, holevo_capacity, holevo_capacity_taylor_upper,
    photon_budget, qpsk_leading_moments, structured_receiver_rate,
};
use covert_core::symplectic_gaussian::{ea_variance_closed, ea_variance_expansion};
use covert_core::{ChannelParams, QCalibration, ReceiverParams, TruncationConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    NbarS,
    Eta,
    NbarB,
    Delta,
    Epsilon,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::NbarS => "nbar_s",
            Axis::Eta => "eta",
            Axis::NbarB => "nbar_b",
            Axis::Delta => "delta",
            Axis::Epsilon => "epsilon",
        }
    }

    fn unit(self) -> &'static str {
        match self {
            Axis::N => "channel uses",
            Axis::NbarS | Axis::NbarB => "photons/mode",
            Axis::Eta | Axis::Delta | Axis::Epsilon => "1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    PhotonBudget,
    CovertConstant,
    HolevoCapacity,
    HolevoCapacityTaylorUpper,
    EaCapacity,
    EaCapacityExpansion,
    /// ea_capacity_expansion / ea_capacity
    EaExpansionRatio,
    EaVariance,
    EaVarianceExpansion,
    QpskChi,
    QpskVChi,
    GaussianVariance,
    StructuredRate,
    MBoundNoEa,
    MBoundEa,
}

impl Quantity {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }

    fn unit(self) -> &'static str {
        match self {
            Quantity::PhotonBudget => "photons/mode",
            Quantity::CovertConstant | Quantity::EaExpansionRatio => "1",
            Quantity::EaVariance | Quantity::EaVarianceExpansion | Quantity::QpskVChi | Quantity::GaussianVariance => "bits^2/mode",
            Quantity::MBoundNoEa | Quantity::MBoundEa => "bits",
            _ => "bits/mode",
        }
    }

    fn needs_calibration(self) -> bool {
        matches!(self, Quantity::MBoundNoEa | Quantity::MBoundEa)
    }
}

/// Inputs not on the sweep axis. `nbar_s = None` means "use the photon budget of (δ, n)".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fixed {
    pub eta: f64,
    pub nbar_b: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub n: Option<u64>,
    pub nbar_s: Option<f64>,
    /// Structured-receiver design parameter.
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub fixed: Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[value(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Parses `start:stop:count` into `count` points.
pub fn range_values(range: &str, spacing: Spacing) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("range '{range}' must be start:stop:count"));
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| format!("bad range start '{}'", parts[0]))?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| format!("bad range stop '{}'", parts[1]))?;
    let count: usize = parts[2].trim().parse().map_err(|_| format!("bad range count '{}'", parts[2]))?;
    if count == 0 {
        return Err("range count must be >= 1".into());
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let t = |i: usize| i as f64 / (count - 1) as f64;
    match spacing {
        Spacing::Linear => Ok((0..count).map(|i| start + (stop - start) * t(i)).collect()),
        Spacing::Log => {
            if !(start > 0.0 && stop > 0.0) {
                return Err("log spacing needs positive endpoints".into());
            }
            let (a, b) = (start.log10(), stop.log10());
            Ok((0..count).map(|i| 10f64.powf(a + (b - a) * t(i))).collect())
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    eta: f64,
    nbar_b: f64,
    delta: f64,
    epsilon: f64,
    n: f64,
    nbar_s: Option<f64>,
    v: f64,
}

impl SweepSpec {
    fn point(&self, x: f64) -> Point {
        let f = self.fixed;
        let mut p = Point { eta: f.eta, nbar_b: f.nbar_b, delta: f.delta, epsilon: f.epsilon, n: f.n.map_or(f64::NAN, |n| n as f64), nbar_s: f.nbar_s, v: f.v };
        match self.axis {
            Axis::N => p.n = x,
            Axis::NbarS => p.nbar_s = Some(x),
            Axis::Eta => p.eta = x,
            Axis::NbarB => p.nbar_b = x,
            Axis::Delta => p.delta = x,
            Axis::Epsilon => p.epsilon = x,
        }
        p
    }

    fn channel_varies(&self) -> bool {
        matches!(self.axis, Axis::Eta | Axis::NbarB)
    }
}

/// One evaluated row: a value (or None) per quantity, and the error flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub x: f64,
    pub values: Vec<Option<f64>>,
    pub flags: Vec<String>,
}

fn blocklength(n: f64) -> Result<u64, String> {
    let r = n.round();
    if !(r >= 1.0) || r > u64::MAX as f64 {
        return Err(format!("n = {n} is not a positive blocklength"));
    }
    Ok(r as u64)
}

fn eval(q: Quantity, p: &Point, cal: Option<&Result<QCalibration, String>>) -> Result<f64, String> {
    let ch = ChannelParams::new(p.eta, p.nbar_b).map_err(|e| e.to_string())?;
    let s = || -> Result<f64, String> {
        match p.nbar_s {
            Some(s) => Ok(s),
            None => Ok(photon_budget(&ch, p.delta, blocklength(p.n)?).map_err(|e| e.to_string())?.nbar_s),
        }
    };
    let cal = || -> Result<QCalibration, String> { cal.cloned().unwrap_or_else(|| Err("no calibration".into())) };
    let e = |r: covert_core::Result<f64>| r.map_err(|e| e.to_string());
    match q {
        Quantity::PhotonBudget => Ok(e(photon_budget(&ch, p.delta, blocklength(p.n)?).map(|b| b.nbar_s))?),
        Quantity::CovertConstant => e(covert_constant(&ch)),
        Quantity::HolevoCapacity => e(holevo_capacity(&ch, s()?)),
        Quantity::HolevoCapacityTaylorUpper => e(holevo_capacity_taylor_upper(&ch, s()?)),
        Quantity::EaCapacity => e(ea_capacity(&ch, s()?)),
        Quantity::EaCapacityExpansion => e(ea_capacity_expansion(&ch, s()?)),
        Quantity::EaExpansionRatio => {
            let s = s()?;
            Ok(e(ea_capacity_expansion(&ch, s))? / e(ea_capacity(&ch, s))?)
        }
        Quantity::EaVariance => e(ea_variance_closed(&ch, s()?)),
        Quantity::EaVarianceExpansion => e(ea_variance_expansion(&ch, s()?)),
        Quantity::QpskChi => e(qpsk_leading_moments(&ch, s()?).map(|m| m.0)),
        Quantity::QpskVChi => e(qpsk_leading_moments(&ch, s()?).map(|m| m.1)),
        Quantity::GaussianVariance => e(gaussian_ensemble_variance(&ch, s()?)),
        Quantity::StructuredRate => {
            let rp = ReceiverParams::new(p.v).map_err(|e| e.to_string())?;
            e(structured_receiver_rate(&ch, s()?, &rp))
        }
        Quantity::MBoundNoEa => e(m_bound_no_ea(&ch, p.delta, p.epsilon, blocklength(p.n)?, &cal()?).map(|m| m.m_lower)),
        Quantity::MBoundEa => e(m_bound_ea(&ch, p.delta, p.epsilon, blocklength(p.n)?, &cal()?).map(|m| m.m_lower)),
    }
}

/// Calibration per point: `given` when set, otherwise fitted from the oracle
/// once per distinct channel. All fits happen before any row is evaluated.
pub fn calibrations(spec: &SweepSpec, quantities: &[Quantity], given: Option<QCalibration>, cfg: &TruncationConfig) -> Vec<Option<Result<QCalibration, String>>> {
    let n = spec.values.len();
    if !quantities.iter().any(|q| q.needs_calibration()) {
        return vec![None; n];
    }
    if let Some(c) = given {
        return vec![Some(Ok(c)); n];
    }
    let fit = |eta: f64, nb: f64| {
        ChannelParams::new(eta, nb).and_then(|ch| QCalibration::from_oracle(&ch, cfg)).map_err(|e| format!("calibration: {e}"))
    };
    if spec.channel_varies() {
        spec.values.par_iter().map(|&x| {
            let p = spec.point(x);
            Some(fit(p.eta, p.nbar_b))
        }).collect()
    } else {
        let c = fit(spec.fixed.eta, spec.fixed.nbar_b);
        vec![Some(c); n]
    }
}

/// Evaluates every point (in parallel) and returns rows in input order.
pub fn run(spec: &SweepSpec, quantities: &[Quantity], cals: &[Option<Result<QCalibration, String>>]) -> Vec<Row> {
    spec.values
        .par_iter()
        .zip(cals.par_iter())
        .map(|(&x, cal)| {
            let p = spec.point(x);
            let mut flags = Vec::new();
            let values = quantities
                .iter()
                .map(|&q| match eval(q, &p, cal.as_ref()) {
                    Ok(v) if v.is_finite() => Some(v),
                    Ok(v) => {
                        flags.push(format!("{}: non-finite result {v}", q.name()));
                        None
                    }
                    Err(msg) => {
                        flags.push(format!("{}: {msg}", q.name()));
                        None
                    }
                })
                .collect();
            Row { x, values, flags }
        })
        .collect()
}

/// CSV with a header row, a units row, and one row per point.
pub fn write_csv<W: std::io::Write>(out: W, spec: &SweepSpec, quantities: &[Quantity], rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![spec.axis.name().to_string()];
    header.extend(quantities.iter().map(|q| q.name()));
    header.push("error_flags".into());
    w.write_record(&header)?;
    let mut units = vec![spec.axis.unit().to_string()];
    units.extend(quantities.iter().map(|q| q.unit().to_string()));
    units.push("-".into());
    w.write_record(&units)?;
    for r in rows {
        let x = if spec.axis == Axis::N { format!("{}", r.x.round() as u64) } else { fmt_f64(r.x) };
        let mut rec = vec![x];
        rec.extend(r.values.iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        rec.push(r.flags.join("; "));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
