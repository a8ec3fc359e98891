//! Incident-burst detection.
//!
//! A streaming peaks-over-threshold detector learns an upper quantile of
//! the incidents-per-minute series: excesses over an initial threshold `t`
//! are modelled with a Generalized Pareto Distribution fitted by the method
//! of moments, and the anomaly threshold `z_q` is the GPD tail quantile at
//! risk `q`. Runs of consecutive anomalous minutes become failure windows.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{FailureWindow, IncidentRecord, Minute};

/// Minimum number of excesses needed before the GPD tail is trusted.
pub const MIN_PEAKS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvtConfig {
    /// Target tail probability of the anomaly threshold.
    pub risk_q: f64,
    /// Fraction of the calibration sample above the peak threshold `t`.
    pub peak_frac: f64,
    /// Calibration sample length in minutes.
    pub calib_n: usize,
}

impl Default for EvtConfig {
    fn default() -> Self {
        Self {
            risk_q: 1e-3,
            peak_frac: 0.02,
            calib_n: 288,
        }
    }
}

impl EvtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.risk_q > 0.0 && self.risk_q < 1.0) {
            return Err(Error::Config(format!(
                "risk_q must be in (0,1), got {}",
                self.risk_q
            )));
        }
        if !(self.peak_frac > 0.0 && self.peak_frac < 1.0) {
            return Err(Error::Config(format!(
                "peak_frac must be in (0,1), got {}",
                self.peak_frac
            )));
        }
        if self.risk_q >= self.peak_frac {
            return Err(Error::Config(
                "risk_q must be smaller than peak_frac".into(),
            ));
        }
        if self.calib_n == 0 {
            return Err(Error::Config("calib_n must be positive".into()));
        }
        Ok(())
    }
}

/// Nearest-rank empirical quantile: the `ceil(p * n)`-th smallest value.
///
/// Always returns an element of `sample`, so scaling the sample by `c > 0`
/// scales the result by exactly `c`.
pub fn empirical_quantile(sample: &[f64], p: f64) -> f64 {
    assert!(!sample.is_empty(), "quantile of empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Generalized Pareto Distribution over excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gpd {
    pub shape: f64,
    pub scale: f64,
}

impl Gpd {
    /// Method-of-moments fit from the excess count, sum and sum of squares.
    fn from_moments(n: usize, sum: f64, sum_sq: f64) -> Option<Gpd> {
        if n < 2 {
            return None;
        }
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq - nf * mean * mean) / (nf - 1.0);
        if !(var > 0.0 && mean > 0.0) {
            return None;
        }
        let ratio = mean * mean / var;
        let g = Gpd {
            shape: 0.5 * (1.0 - ratio),
            scale: 0.5 * mean * (1.0 + ratio),
        };
        (g.shape.is_finite() && g.scale.is_finite() && g.scale > 0.0).then_some(g)
    }

    pub fn fit_moments(excesses: &[f64]) -> Option<Gpd> {
        let sum = excesses.iter().sum();
        let sum_sq = excesses.iter().map(|x| x * x).sum();
        Self::from_moments(excesses.len(), sum, sum_sq)
    }

    /// Tail quantile above threshold `t` for risk `q`, given `n` observations
    /// of which `n_peaks` exceeded `t`.
    pub fn tail_quantile(&self, t: f64, q: f64, n: usize, n_peaks: usize) -> f64 {
        let r = q * n as f64 / n_peaks as f64;
        if self.shape.abs() < 1e-12 {
            t - self.scale * r.ln()
        } else {
            t + self.scale / self.shape * (r.powf(-self.shape) - 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Anomalous,
}

/// Streaming peaks-over-threshold detector.
#[derive(Debug, Clone, PartialEq)]
pub struct EvtDetector {
    cfg: EvtConfig,
    t: f64,
    peaks: Vec<f64>,
    peak_sum: f64,
    peak_sum_sq: f64,
    z_q: f64,
    /// Empirical `(1 - risk_q)` quantile of the calibration sample, used
    /// until the tail holds enough excesses for a finite GPD fit.
    fallback_z: f64,
    gpd: Option<Gpd>,
    n_seen: usize,
    calibrated: bool,
}

impl EvtDetector {
    pub fn new(cfg: EvtConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            t: f64::NAN,
            peaks: Vec::new(),
            peak_sum: 0.0,
            peak_sum_sq: 0.0,
            z_q: f64::NAN,
            fallback_z: f64::NAN,
            gpd: None,
            n_seen: 0,
            calibrated: false,
        })
    }

    pub fn config(&self) -> &EvtConfig {
        &self.cfg
    }

    /// Learns `t` and the initial `z_q` from a sample of at least `calib_n`
    /// points. The whole sample is used.
    pub fn calibrate(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() < self.cfg.calib_n {
            return Err(Error::InvalidInput(format!(
                "calibration needs {} points, got {}",
                self.cfg.calib_n,
                sample.len()
            )));
        }
        if sample.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite calibration value".into()));
        }
        self.t = empirical_quantile(sample, 1.0 - self.cfg.peak_frac);
        self.fallback_z = empirical_quantile(sample, 1.0 - self.cfg.risk_q);
        self.peaks = sample
            .iter()
            .filter(|&&x| x > self.t)
            .map(|&x| x - self.t)
            .collect();
        self.peak_sum = self.peaks.iter().sum();
        self.peak_sum_sq = self.peaks.iter().map(|x| x * x).sum();
        self.n_seen = sample.len();
        self.calibrated = true;
        self.refit();
        Ok(())
    }

    fn refit(&mut self) {
        self.gpd = None;
        self.z_q = self.fallback_z;
        if self.peaks.len() < MIN_PEAKS {
            return;
        }
        if let Some(g) = Gpd::from_moments(self.peaks.len(), self.peak_sum, self.peak_sum_sq) {
            let z = g.tail_quantile(self.t, self.cfg.risk_q, self.n_seen, self.peaks.len());
            if z.is_finite() {
                self.gpd = Some(g);
                self.z_q = z.max(self.t);
            }
        }
    }

    /// Classifies `x` (anomalous iff `x > z_q`). Normal points update the
    /// model; anomalous points leave it untouched.
    pub fn observe(&mut self, x: f64) -> Result<Verdict> {
        if !self.calibrated {
            return Err(Error::InvalidInput("detector is not calibrated".into()));
        }
        if x.is_nan() {
            return Err(Error::InvalidInput("NaN observation".into()));
        }
        if x > self.z_q {
            return Ok(Verdict::Anomalous);
        }
        self.n_seen += 1;
        if x > self.t {
            let e = x - self.t;
            self.peaks.push(e);
            self.peak_sum += e;
            self.peak_sum_sq += e * e;
            self.refit();
        }
        Ok(Verdict::Normal)
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated
    }

    pub fn threshold(&self) -> f64 {
        self.z_q
    }

    pub fn peak_threshold(&self) -> f64 {
        self.t
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn gpd(&self) -> Option<Gpd> {
        self.gpd
    }

    /// Whether `z_q` currently comes from the empirical-quantile fallback.
    pub fn is_fallback(&self) -> bool {
        self.gpd.is_none()
    }

    pub fn n_seen(&self) -> usize {
        self.n_seen
    }
}

/// Zero-filled incident counts for every minute in `[start, end]`.
pub fn count_per_minute(
    records: &[IncidentRecord],
    start: Minute,
    end: Minute,
) -> Result<Vec<u64>> {
    if records.windows(2).any(|w| w[0].minute > w[1].minute) {
        return Err(Error::InvalidInput(
            "incident stream is not sorted by minute".into(),
        ));
    }
    if end < start {
        return Ok(Vec::new());
    }
    let mut counts = vec![0u64; (end - start + 1) as usize];
    for r in records {
        if (start..=end).contains(&r.minute) {
            counts[(r.minute - start) as usize] += 1;
        }
    }
    Ok(counts)
}

/// Maximal runs of `true` as windows; index 0 corresponds to `start`.
pub fn runs_to_windows(flags: impl IntoIterator<Item = bool>, start: Minute) -> Vec<FailureWindow> {
    let mut out = Vec::new();
    let mut open: Option<Minute> = None;
    let mut last = start;
    for (i, flag) in flags.into_iter().enumerate() {
        let m = start + i as Minute;
        last = m;
        match (flag, open) {
            (true, None) => open = Some(m),
            (false, Some(s)) => {
                out.push(FailureWindow {
                    start: s,
                    end: m - 1,
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push(FailureWindow {
            start: s,
            end: last,
        });
    }
    out
}

/// Streams `counts` (minute `start` first) through a calibrated detector.
pub fn detect_failures(
    counts: &[u64],
    start: Minute,
    detector: &mut EvtDetector,
) -> Result<Vec<FailureWindow>> {
    let mut flags = Vec::with_capacity(counts.len());
    for &c in counts {
        flags.push(detector.observe(c as f64)? == Verdict::Anomalous);
    }
    Ok(runs_to_windows(flags, start))
}

/// Fixed-threshold baseline: a minute is anomalous iff `count > threshold`.
pub fn fixed_threshold_detect(counts: &[u64], start: Minute, threshold: u64) -> Vec<FailureWindow> {
    runs_to_windows(counts.iter().map(|&c| c > threshold), start)
}

/// Calibrates on the first `calib_n` minutes of `counts` and detects over
/// the remainder. Returns the windows and the detector state afterwards.
pub fn detect_series(
    counts: &[u64],
    start: Minute,
    cfg: EvtConfig,
) -> Result<(Vec<FailureWindow>, EvtDetector)> {
    let mut det = EvtDetector::new(cfg)?;
    if counts.len() < cfg.calib_n {
        return Err(Error::InvalidInput(format!(
            "series has {} minutes, calibration needs {}",
            counts.len(),
            cfg.calib_n
        )));
    }
    let (calib, rest) = counts.split_at(cfg.calib_n);
    let sample: Vec<f64> = calib.iter().map(|&c| c as f64).collect();
    det.calibrate(&sample)?;
    let windows = detect_failures(rest, start + cfg.calib_n as Minute, &mut det)?;
    Ok((windows, det))
}

/// One detector per partition of the stream, run in parallel. Every
/// partition covers the same minute range `[start, end]`.
pub fn detect_partitioned<K, F>(
    records: &[IncidentRecord],
    start: Minute,
    end: Minute,
    cfg: EvtConfig,
    key: F,
) -> Result<BTreeMap<K, Vec<FailureWindow>>>
where
    K: Ord + Clone + Send + Sync,
    F: Fn(&IncidentRecord) -> K,
{
    let mut parts: BTreeMap<K, Vec<IncidentRecord>> = BTreeMap::new();
    for r in records {
        parts.entry(key(r)).or_default().push(*r);
    }
    let parts: Vec<(K, Vec<IncidentRecord>)> = parts.into_iter().collect();
    parts
        .into_par_iter()
        .map(|(k, recs)| {
            let counts = count_per_minute(&recs, start, end)?;
            let (w, _) = detect_series(&counts, start, cfg)?;
            Ok((k, w))
        })
        .collect()
}

/// Union of window lists, merging overlapping or touching windows.
pub fn merge_windows(lists: impl IntoIterator<Item = Vec<FailureWindow>>) -> Vec<FailureWindow> {
    let mut all: Vec<FailureWindow> = lists.into_iter().flatten().collect();
    all.sort();
    let mut out: Vec<FailureWindow> = Vec::new();
    for w in all {
        match out.last_mut() {
            Some(last) if w.start <= last.end.saturating_add(1) => last.end = last.end.max(w.end),
            _ => out.push(w),
        }
    }
    out
}
