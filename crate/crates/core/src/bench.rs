//! Monte-Carlo fidelity curves, high-fidelity times and the scaling-law fit.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse_synth::{minimize, Bounds, NelderMeadOptions};
use crate::qec_protocol::{CodeKind, Protocol, ProtocolOptions, DEFAULT_GATE_TIME};
use crate::quantum_engine::{qubit_fidelity, random_pure_target, NoiseChannelSpec};
use crate::rng::substream;

/// Fidelity threshold defining the high-fidelity time.
pub const THRESHOLD: f64 = 0.99;
pub const DEFAULT_SAMPLES: usize = 500;
pub const POINTS_PER_DECADE: usize = 25;

/// Tag mixed into baseline substreams so they never coincide with code runs.
const BASELINE_STREAM: u64 = 0xba5e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub code: CodeKind,
    pub sigmas: Vec<f64>,
    pub samples: usize,
    pub time_grid: Vec<f64>,
    pub seed: u64,
    pub gate_time: f64,
}

impl SweepConfig {
    /// 500 samples, the standard grid over `[1e-4, 1]` and the code's
    /// default σ list.
    pub fn new(code: CodeKind) -> Self {
        Self {
            code,
            sigmas: default_sigmas(code),
            samples: DEFAULT_SAMPLES,
            time_grid: log_grid(1e-4, 1.0, POINTS_PER_DECADE),
            seed: 0,
            gate_time: DEFAULT_GATE_TIME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Argument("samples must be ≥ 1".into()));
        }
        if self.time_grid.is_empty() {
            return Err(Error::Argument("empty time grid".into()));
        }
        if !self.time_grid.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(Error::Argument("time grid must be positive and finite".into()));
        }
        if self.time_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("time grid must be strictly increasing".into()));
        }
        if !self.sigmas.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(Error::Argument("σ values must be finite and ≥ 0".into()));
        }
        if !(self.gate_time.is_finite() && self.gate_time >= 0.0) {
            return Err(Error::Argument(format!("gate time {} must be ≥ 0", self.gate_time)));
        }
        Ok(())
    }

    pub fn protocol(&self) -> Result<Protocol> {
        Protocol::standard_with(
            self.code,
            ProtocolOptions {
                gate_time: self.gate_time,
                ..Default::default()
            },
        )
    }
}

pub fn default_sigmas(code: CodeKind) -> Vec<f64> {
    match code {
        CodeKind::FiveRC => vec![0.0, 0.005, 0.01, 0.015],
        CodeKind::FiveQC => vec![0.0, 0.001, 0.002, 0.003],
    }
}

/// `per_decade` log-spaced points per decade from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) * per_decade as f64).round() as usize;
    if n == 0 {
        return vec![lo];
    }
    (0..=n).map(|i| 10f64.powf(a + (b - a) * i as f64 / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub code: CodeKind,
    pub sigma: f64,
    pub points: Vec<CurvePoint>,
}

/// Kahan-Babuška summation in slice order.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Curve for the σ at `sigma_index` in `config.sigmas`. Sample `k` at time
/// index `j` draws from substream `(sigma_index, j, k)`.
pub fn fidelity_curve(config: &SweepConfig, sigma_index: usize) -> Result<FidelityCurve> {
    config.validate()?;
    let protocol = config.protocol()?;
    fidelity_curve_with(&protocol, config, sigma_index)
}

fn sample_fidelity(protocol: &Protocol, seed: u64, path: [u64; 3], t: f64, sigma: f64) -> Result<f64> {
    let mut rng = substream(seed, &path);
    let psi = random_pure_target(&mut rng);
    protocol.run(&psi, t, sigma, &mut rng)
}

/// Mean fidelity at a single time, allowing `t = 0`. Uses the same
/// substreams as the first point of a one-σ curve.
pub fn mean_fidelity(protocol: &Protocol, sigma: f64, t: f64, samples: usize, seed: u64) -> Result<CurvePoint> {
    if samples == 0 {
        return Err(Error::Argument("samples must be ≥ 1".into()));
    }
    if !(t.is_finite() && t >= 0.0) || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Argument(format!("need t ≥ 0 and σ ≥ 0, got t = {t}, σ = {sigma}")));
    }
    let values = (0..samples)
        .into_par_iter()
        .map(|k| sample_fidelity(protocol, seed, [0, 0, k as u64], t, sigma))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_err) = mean_and_se(&values);
    Ok(CurvePoint { t, mean, std_err })
}

pub fn fidelity_curve_with(protocol: &Protocol, config: &SweepConfig, sigma_index: usize) -> Result<FidelityCurve> {
    let sigma = *config
        .sigmas
        .get(sigma_index)
        .ok_or_else(|| Error::Argument(format!("σ index {sigma_index} out of range")))?;
    let jobs: Vec<(usize, usize)> = (0..config.time_grid.len())
        .flat_map(|j| (0..config.samples).map(move |k| (j, k)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(j, k)| {
            sample_fidelity(
                protocol,
                config.seed,
                [sigma_index as u64, j as u64, k as u64],
                config.time_grid[j],
                sigma,
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    let points = config
        .time_grid
        .iter()
        .zip(values.chunks(config.samples))
        .map(|(&t, chunk)| {
            let (mean, std_err) = mean_and_se(chunk);
            CurvePoint { t, mean, std_err }
        })
        .collect();
    Ok(FidelityCurve {
        code: config.code,
        sigma,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighFidelityTime {
    pub tau: f64,
    /// Standard error propagated through the local slope.
    pub std_err: f64,
    /// The curve never dropped below the threshold; `tau` is the last grid time.
    pub censored: bool,
}

/// First downward crossing of [`THRESHOLD`], linearly interpolated between
/// the bracketing grid points.
pub fn high_fidelity_time(points: &[CurvePoint]) -> HighFidelityTime {
    let Some(i) = points.iter().position(|p| p.mean < THRESHOLD) else {
        return HighFidelityTime {
            tau: points.last().map_or(0.0, |p| p.t),
            std_err: 0.0,
            censored: true,
        };
    };
    if i == 0 {
        return HighFidelityTime {
            tau: 0.0,
            std_err: 0.0,
            censored: false,
        };
    }
    let (a, b) = (points[i - 1], points[i]);
    let w = (a.mean - THRESHOLD) / (a.mean - b.mean);
    let slope = (a.mean - b.mean) / (b.t - a.t);
    let se = (1.0 - w) * a.std_err + w * b.std_err;
    HighFidelityTime {
        tau: a.t + w * (b.t - a.t),
        std_err: se / slope,
        censored: false,
    }
}

/// Closed-form Haar-averaged single-qubit fidelity under the code's
/// storage channel.
pub fn baseline_fidelity(kind: CodeKind, t: f64) -> f64 {
    match kind {
        CodeKind::FiveRC => (2.0 + (-t).exp()) / 3.0,
        CodeKind::FiveQC => (1.0 + (-t).exp()) / 2.0,
    }
}

pub fn analytic_baseline_tau(kind: CodeKind) -> f64 {
    match kind {
        CodeKind::FiveRC => -(3.0 * THRESHOLD - 2.0).ln(),
        CodeKind::FiveQC => -(2.0 * THRESHOLD - 1.0).ln(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub points: Vec<CurvePoint>,
    pub tau: HighFidelityTime,
}

/// Monte-Carlo single-qubit curve on `grid`: Haar-random pure states under the
/// code's paired channel.
pub fn baseline_curve(kind: CodeKind, grid: &[f64], samples: usize, seed: u64) -> Result<Baseline> {
    if samples == 0 {
        return Err(Error::Argument("samples must be ≥ 1".into()));
    }
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(j, &t)| {
            let spec = NoiseChannelSpec::new(kind.noise_kind(), t)?;
            let values: Vec<f64> = (0..samples)
                .map(|k| {
                    let mut rng = substream(seed, &[BASELINE_STREAM, j as u64, k as u64]);
                    let psi = random_pure_target(&mut rng);
                    qubit_fidelity(&spec.apply_to_qubit(&psi.density()), &psi)
                })
                .collect();
            let (mean, std_err) = mean_and_se(&values);
            Ok(CurvePoint { t, mean, std_err })
        })
        .collect::<Result<Vec<_>>>()?;
    let tau = high_fidelity_time(&points);
    Ok(Baseline { points, tau })
}

/// τ₁Q on the standard grid.
pub fn baseline_tau(kind: CodeKind, samples: usize, seed: u64) -> Result<HighFidelityTime> {
    Ok(baseline_curve(kind, &log_grid(1e-4, 1.0, POINTS_PER_DECADE), samples, seed)?.tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub tau0: f64,
    pub alpha: f64,
    /// `None` when `τ₀ ≤ 1`, i.e. the fitted ratio never exceeds one.
    pub sigma_th: Option<f64>,
    pub rms: f64,
}

/// `τ₀ (2 − exp(σ²/α))`.
pub fn scaling_law(tau0: f64, alpha: f64, sigma: f64) -> f64 {
    tau0 * (2.0 - (sigma * sigma / alpha).exp())
}

/// Least-squares fit of the scaling law to `(σ, ratio)` pairs.
pub fn fit_scaling(sigmas: &[f64], ratios: &[f64]) -> Result<ScalingFit> {
    if sigmas.len() != ratios.len() || sigmas.len() < 3 {
        return Err(Error::Argument("the fit needs ≥ 3 (σ, ratio) pairs".into()));
    }
    if !ratios.iter().all(|r| r.is_finite()) {
        return Err(Error::NonFinite(ratios.to_vec()));
    }
    let smax = sigmas.iter().copied().fold(0.0, f64::max);
    if smax <= 0.0 {
        return Err(Error::Argument("the fit needs a nonzero σ".into()));
    }
    let i0 = (0..sigmas.len())
        .min_by(|&a, &b| sigmas[a].total_cmp(&sigmas[b]))
        .expect("nonempty");
    let tau0 = ratios[i0];
    let alpha = smax * smax / std::f64::consts::LN_2;
    // α is fitted on a log scale so it stays positive.
    let sse = |x: &[f64]| -> f64 {
        let a = x[1].exp();
        sigmas
            .iter()
            .zip(ratios)
            .map(|(&s, &r)| (scaling_law(x[0], a, s) - r).powi(2))
            .sum()
    };
    let best = minimize(
        sse,
        &[tau0, alpha.ln()],
        &Bounds::new(vec![0.0, (alpha * 1e-4).ln()], vec![tau0.abs().max(1.0) * 100.0, (alpha * 1e4).ln()]),
        &NelderMeadOptions {
            initial_step: 0.01,
            ..Default::default()
        },
    )?;
    let (tau0, alpha) = (best.x[0], best.x[1].exp());
    let rms = (best.value / sigmas.len() as f64).sqrt();
    if !(tau0.is_finite() && alpha.is_finite() && rms.is_finite()) {
        return Err(Error::NonFinite(best.x));
    }
    let sigma_th = (tau0 > 1.0).then(|| (alpha * (2.0 - 1.0 / tau0).ln()).sqrt());
    Ok(ScalingFit {
        tau0,
        alpha,
        sigma_th,
        rms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub curve: Vec<CurvePoint>,
    pub tau: HighFidelityTime,
    pub ratio: f64,
    pub ratio_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub code: CodeKind,
    pub samples: usize,
    pub seed: u64,
    pub per_sigma: Vec<SigmaResult>,
    pub tau_1q: HighFidelityTime,
    pub fit: Option<ScalingFit>,
    /// Why the fit is missing, when it is.
    pub fit_error: Option<String>,
    /// σ where the raw ratios cross one, by linear interpolation.
    pub raw_sigma_th: Option<f64>,
}

impl SweepRecord {
    pub fn ratios(&self) -> Vec<f64> {
        self.per_sigma.iter().map(|s| s.ratio).collect()
    }
}

fn raw_crossing(sigmas: &[f64], ratios: &[f64]) -> Option<f64> {
    sigmas.windows(2).zip(ratios.windows(2)).find_map(|(s, r)| {
        (r[0] >= 1.0 && r[1] < 1.0).then(|| s[0] + (r[0] - 1.0) / (r[0] - r[1]) * (s[1] - s[0]))
    })
}

/// Curves for every σ, the baseline, the ratios and the scaling fit.
pub fn sweep_and_fit(config: &SweepConfig) -> Result<SweepRecord> {
    config.validate()?;
    if config.sigmas.len() < 3 {
        return Err(Error::Argument("a sweep needs ≥ 3 σ values".into()));
    }
    let protocol = config.protocol()?;
    let tau_1q = baseline_curve(config.code, &config.time_grid, config.samples, config.seed)?.tau;
    let mut per_sigma = Vec::with_capacity(config.sigmas.len());
    for i in 0..config.sigmas.len() {
        let curve = fidelity_curve_with(&protocol, config, i)?;
        let tau = high_fidelity_time(&curve.points);
        let ratio = tau.tau / tau_1q.tau;
        let ratio_err = ratio * ((tau.std_err / tau.tau).powi(2) + (tau_1q.std_err / tau_1q.tau).powi(2)).sqrt();
        per_sigma.push(SigmaResult {
            sigma: curve.sigma,
            curve: curve.points,
            tau,
            ratio,
            ratio_err: if ratio_err.is_finite() { ratio_err } else { 0.0 },
        });
    }
    let ratios: Vec<f64> = per_sigma.iter().map(|s| s.ratio).collect();
    let (fit, fit_error) = match fit_scaling(&config.sigmas, &ratios) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SweepRecord {
        code: config.code,
        samples: config.samples,
        seed: config.seed,
        per_sigma,
        tau_1q,
        fit,
        fit_error,
        raw_sigma_th: raw_crossing(&config.sigmas, &ratios),
    })
}

/// Nine significant digits.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn curve_csv(curves: &[FidelityCurve]) -> String {
    let mut s = String::from("t,mean_fidelity,std_err,sigma,code\n");
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt9(p.t),
                fmt9(p.mean),
                fmt9(p.std_err),
                fmt9(c.sigma),
                c.code
            );
        }
    }
    s
}

pub fn sweep_csv(record: &SweepRecord) -> String {
    let mut s = String::from("sigma,tau,tau_1q,ratio\n");
    for r in &record.per_sigma {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt9(r.sigma),
            fmt9(r.tau.tau),
            fmt9(record.tau_1q.tau),
            fmt9(r.ratio)
        );
    }
    s
}

/// All curves of a sweep in the curve CSV format.
pub fn sweep_curves_csv(record: &SweepRecord) -> String {
    let curves: Vec<FidelityCurve> = record
        .per_sigma
        .iter()
        .map(|r| FidelityCurve {
            code: record.code,
            sigma: r.sigma,
            points: r.curve.clone(),
        })
        .collect();
    curve_csv(&curves)
}

pub fn fit_json(fit: &ScalingFit) -> serde_json::Value {
    serde_json::json!({
        "tau0": fit.tau0,
        "alpha": fit.alpha,
        "sigma_th": fit.sigma_th,
        "rms": fit.rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn analytic_points(kind: CodeKind, grid: &[f64]) -> Vec<CurvePoint> {
        grid.iter()
            .map(|&t| CurvePoint {
                t,
                mean: baseline_fidelity(kind, t),
                std_err: 0.0,
            })
            .collect()
    }

    #[test]
    fn grid_shape() {
        let g = log_grid(1e-4, 1.0, 25);
        assert_eq!(g.len(), 101);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[100] - 1.0).abs() < 1e-12);
        assert!((g[25] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn tau_of_analytic_curves() {
        let g = log_grid(1e-4, 1.0, 25);
        let rc = high_fidelity_time(&analytic_points(CodeKind::FiveRC, &g));
        let qc = high_fidelity_time(&analytic_points(CodeKind::FiveQC, &g));
        assert!((rc.tau - 0.030459207484708574).abs() < 1e-4, "{}", rc.tau);
        assert!((qc.tau - 0.020202707317519466).abs() < 1e-4, "{}", qc.tau);
        assert!((analytic_baseline_tau(CodeKind::FiveRC) - 0.030459207484708574).abs() < 1e-15);
        assert!((analytic_baseline_tau(CodeKind::FiveQC) - 0.020202707317519466).abs() < 1e-15);
    }

    #[test]
    fn constant_curve_is_censored() {
        let g = log_grid(1e-4, 1.0, 25);
        let pts: Vec<_> = g.iter().map(|&t| CurvePoint { t, mean: 1.0, std_err: 0.0 }).collect();
        let h = high_fidelity_time(&pts);
        assert!(h.censored);
        assert_eq!(h.tau, 1.0);
        let low: Vec<_> = g.iter().map(|&t| CurvePoint { t, mean: 0.5, std_err: 0.0 }).collect();
        assert_eq!(high_fidelity_time(&low).tau, 0.0);
    }

    #[test]
    fn baseline_matches_closed_form() {
        for kind in [CodeKind::FiveRC, CodeKind::FiveQC] {
            let g = log_grid(1e-3, 1.0, 5);
            let b = baseline_curve(kind, &g, 2000, 3).unwrap();
            for p in &b.points {
                let exact = baseline_fidelity(kind, p.t);
                assert!((p.mean - exact).abs() <= 3.0 * p.std_err + 1e-12, "{kind} t={} {} vs {exact}", p.t, p.mean);
            }
            let tau = baseline_tau(kind, 2000, 3).unwrap();
            let exact = analytic_baseline_tau(kind);
            assert!((tau.tau - exact).abs() <= 3.0 * tau.std_err + 1e-4, "{kind}: {tau:?} vs {exact}");
            assert_eq!(tau, baseline_tau(kind, 2000, 3).unwrap());
        }
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let sig = [0.0, 0.005, 0.01, 0.015];
        let r: Vec<f64> = sig.iter().map(|&s| scaling_law(6.92, 5.4e-4, s)).collect();
        let f = fit_scaling(&sig, &r).unwrap();
        assert!((f.tau0 - 6.92).abs() < 1e-5, "{f:?}");
        assert!((f.alpha / 5.4e-4 - 1.0).abs() < 1e-4, "{f:?}");
        let th = (5.4e-4 * (2.0 - 1.0 / 6.92f64).ln()).sqrt();
        assert!((f.sigma_th.unwrap() - th).abs() < 1e-6);
        assert!(f.rms < 1e-6);
        assert!(fit_scaling(&sig[..2], &r[..2]).is_err());
    }

    #[test]
    fn raw_crossing_interpolates() {
        assert_eq!(raw_crossing(&[0.0, 1.0, 2.0], &[3.0, 2.0, 0.0]), Some(1.5));
        assert_eq!(raw_crossing(&[0.0, 1.0], &[3.0, 2.0]), None);
    }

    #[test]
    fn compensated_sum_is_accurate() {
        let v: Vec<f64> = std::iter::once(1e16).chain(std::iter::repeat_n(1.0, 1000)).chain(std::iter::once(-1e16)).collect();
        assert_eq!(compensated_sum(v), 1000.0);
    }

    #[test]
    fn config_validation() {
        let mut c = SweepConfig::new(CodeKind::FiveRC);
        assert!(c.validate().is_ok());
        c.time_grid = vec![0.1, 0.1];
        assert!(c.validate().is_err());
        c.time_grid = vec![0.1];
        c.samples = 0;
        assert!(c.validate().is_err());
    }
}
