//! Running estimates, relative error, and the summary record of a run.

use serde::de::Deserializer;
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const RUN_SCHEMA_VERSION: u32 = 1;
/// First checkpoint and geometric growth factor of the trace schedule.
pub const FIRST_CHECKPOINT: f64 = 100.0;
pub const CHECKPOINT_GROWTH: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nmc,
    DeepIs,
    Robust,
    IterRobust,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nmc => "nmc",
            Method::DeepIs => "deep_is",
            Method::Robust => "robust",
            Method::IterRobust => "iter_robust",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nmc" => Ok(Method::Nmc),
            "deep_is" => Ok(Method::DeepIs),
            "robust" => Ok(Method::Robust),
            "iter_robust" => Ok(Method::IterRobust),
            _ => Err(invalid("method", format!("unknown method `{s}`"))),
        }
    }
}

/// Checkpoint sample counts up to `n`: `⌈100 · 1.3^k⌉` below `n`, then `n`.
pub fn checkpoints(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut c = FIRST_CHECKPOINT;
    while (c.ceil() as u64) < n {
        let v = c.ceil() as u64;
        if out.last() != Some(&v) {
            out.push(v);
        }
        c *= CHECKPOINT_GROWTH;
    }
    if n > 0 {
        out.push(n);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub n: u64,
    pub estimate: f64,
    /// Mean of the squared terms.
    pub second_moment: f64,
    /// Sample standard deviation of the terms.
    pub std_dev: f64,
    pub re: Option<f64>,
}

/// `s / (√n · μ̂)`, undefined when `μ̂ = 0` or `n < 2`.
pub fn relative_error(p: &TracePoint) -> Option<f64> {
    re_from(p.n, p.estimate, p.std_dev)
}

fn re_from(n: u64, estimate: f64, std_dev: f64) -> Option<f64> {
    (n >= 2 && estimate > 0.0).then(|| std_dev / ((n as f64).sqrt() * estimate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrace {
    pub method: Method,
    pub points: Vec<TracePoint>,
}

impl EstimateTrace {
    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    /// First checkpoint with `n ≥ min_n`, a positive estimate and
    /// `RE ≤ target`.
    pub fn stop_at(&self, target_re: f64, min_n: u64) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.n >= min_n && p.re.is_some_and(|re| re <= target_re))
            .map(|p| p.n)
    }
}

/// Free-function form of [`EstimateTrace::stop_at`].
pub fn stop_at(trace: &EstimateTrace, target_re: f64, min_n: u64) -> Option<u64> {
    trace.stop_at(target_re, min_n)
}

impl Serialize for EstimateTrace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.points.len()))?;
        for p in &self.points {
            seq.serialize_element(&(p.n, p.estimate, p.re))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for EstimateTrace {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<(u64, f64, Option<f64>)> = Vec::deserialize(d)?;
        let points = rows
            .into_iter()
            .map(|(n, estimate, re)| {
                let std_dev = re.map_or(0.0, |r| r * (n as f64).sqrt() * estimate);
                let nf = n as f64;
                let var_pop = if n >= 2 { std_dev * std_dev * (nf - 1.0) / nf } else { 0.0 };
                TracePoint {
                    n,
                    estimate,
                    second_moment: var_pop + estimate * estimate,
                    std_dev,
                    re,
                }
            })
            .collect();
        Ok(Self {
            method: Method::Nmc,
            points,
        })
    }
}

/// Sequential Welford accumulator recording trace points at checkpoints.
#[derive(Debug, Clone)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
    sum_sq: f64,
    schedule: Vec<u64>,
    next: usize,
    trace: EstimateTrace,
}

impl Accumulator {
    pub fn new(method: Method, total: u64) -> Self {
        Self {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            sum_sq: 0.0,
            schedule: checkpoints(total),
            next: 0,
            trace: EstimateTrace {
                method,
                points: Vec::new(),
            },
        }
    }

    pub fn push(&mut self, term: f64) {
        self.n += 1;
        let delta = term - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (term - self.mean);
        self.sum_sq += term * term;
        if self.schedule.get(self.next) == Some(&self.n) {
            self.next += 1;
            let point = self.point();
            self.trace.points.push(point);
        }
    }

    pub fn point(&self) -> TracePoint {
        let std_dev = if self.n >= 2 {
            (self.m2.max(0.0) / (self.n - 1) as f64).sqrt()
        } else {
            0.0
        };
        TracePoint {
            n: self.n,
            estimate: self.mean,
            second_moment: if self.n > 0 { self.sum_sq / self.n as f64 } else { 0.0 },
            std_dev,
            re: re_from(self.n, self.mean, std_dev),
        }
    }

    pub fn finish(self) -> EstimateTrace {
        self.trace
    }
}

/// Outcome of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub method: Method,
    pub estimate: f64,
    /// `null` when undefined.
    pub re: Option<f64>,
    /// Estimation-stage draws.
    pub n: u64,
    pub seed: u64,
    pub trace: EstimateTrace,
    /// Set-learning draws spent before estimation.
    #[serde(default)]
    pub n1: u64,
    /// Decision threshold used by the surrogate set.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub dominating_points: Vec<Vec<f64>>,
    /// Estimation-stage draws needed to reach `target_re`.
    #[serde(default)]
    pub samples_to_target: Option<u64>,
    #[serde(default)]
    pub target_re: Option<f64>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl RunResult {
    pub fn from_trace(method: Method, seed: u64, trace: EstimateTrace) -> Self {
        let last = trace.last().copied().unwrap_or(TracePoint {
            n: 0,
            estimate: 0.0,
            second_moment: 0.0,
            std_dev: 0.0,
            re: None,
        });
        Self {
            schema_version: RUN_SCHEMA_VERSION,
            method,
            estimate: last.estimate,
            re: last.re,
            n: last.n,
            seed,
            trace,
            n1: 0,
            kappa: None,
            dominating_points: Vec::new(),
            samples_to_target: None,
            target_re: None,
            config: serde_json::Value::Null,
        }
    }

    /// Records the stopping count for `target_re`.
    pub fn with_target(mut self, target_re: f64, min_n: u64) -> Self {
        self.target_re = Some(target_re);
        self.samples_to_target = self.trace.stop_at(target_re, min_n);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut r: Self = serde_json::from_str(s)?;
        r.trace.method = r.method;
        Ok(r)
    }

    /// Trace as CSV with header `n,estimate,re`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("n,estimate,re\n");
        for p in &self.trace.points {
            let re = p.re.map_or(String::new(), |r| format!("{r:e}"));
            out.push_str(&format!("{},{:e},{}\n", p.n, p.estimate, re));
        }
        out
    }
}

/// `n_nmc / n_method`.
pub fn acc_rate(n_nmc: f64, n_method: f64) -> Result<f64> {
    if !(n_method > 0.0) {
        return Err(invalid("n_method", "must be positive"));
    }
    Ok(n_nmc / n_method)
}

/// `estimate / mu_ref`.
pub fn deg_conservativeness(estimate: f64, mu_ref: f64) -> Result<f64> {
    if !(mu_ref > 0.0) {
        return Err(invalid("mu_ref", "must be positive"));
    }
    Ok(estimate / mu_ref)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(terms: impl IntoIterator<Item = f64>, total: u64) -> EstimateTrace {
        let mut acc = Accumulator::new(Method::Nmc, total);
        for t in terms {
            acc.push(t);
        }
        acc.finish()
    }

    #[test]
    fn schedule() {
        assert_eq!(checkpoints(0), Vec::<u64>::new());
        assert_eq!(checkpoints(50), vec![50]);
        assert_eq!(&checkpoints(1000)[..4], &[100, 130, 169, 220]);
        assert_eq!(*checkpoints(1000).last().unwrap(), 1000);
        let c = checkpoints(10_000_000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn constant_terms_have_zero_re() {
        let t = run(std::iter::repeat_n(0.3, 500), 500);
        assert_eq!(t.last().unwrap().re, Some(0.0));
    }

    #[test]
    fn bernoulli_half() {
        let t = run((0..10_000).map(|i| (i % 2) as f64), 10_000);
        let p = t.last().unwrap();
        assert_eq!(p.estimate, 0.5);
        // sample sd uses n − 1, so s = 0.5·√(n/(n−1))
        let s = 0.5 * (10_000f64 / 9_999.0).sqrt();
        assert!((p.re.unwrap() - s / (100.0 * 0.5)).abs() < 1e-15);
        assert!((p.re.unwrap() - 0.01).abs() < 1e-6);
        assert!((relative_error(p).unwrap() - p.re.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn zero_terms_never_stop() {
        let t = run(std::iter::repeat_n(0.0, 1000), 1000);
        assert_eq!(t.last().unwrap().re, None);
        assert_eq!(t.stop_at(1.0, 0), None);
    }

    #[test]
    fn stop_respects_min_n() {
        let t = run((0..5000).map(|i| 1.0 + (i % 2) as f64), 5000);
        assert_eq!(t.stop_at(0.5, 0), Some(100));
        assert_eq!(t.stop_at(0.5, 1000), Some(checkpoints(5000).into_iter().find(|&c| c >= 1000).unwrap()));
    }

    #[test]
    fn ratios() {
        assert!((acc_rate(18_181_798.0, 418_983.0).unwrap() - 43.4).abs() < 0.05);
        assert!((acc_rate(431_210.0, 32_044.0).unwrap() - 13.46).abs() < 0.005);
        assert_eq!(acc_rate(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(deg_conservativeness(2.0, 2.0).unwrap(), 1.0);
        assert!(acc_rate(1.0, 0.0).is_err());
        assert!(deg_conservativeness(1.0, 0.0).is_err());
    }

    #[test]
    fn run_result_json() {
        let t = run((0..1000).map(|i| (i % 7 == 0) as u8 as f64), 1000);
        let r = RunResult::from_trace(Method::DeepIs, 5, t).with_target(0.2, 100);
        let s = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["method"], "deep_is");
        assert!(v["trace"][0].as_array().unwrap().len() == 3);
        let back = RunResult::from_json(&s).unwrap();
        assert_eq!(back.method, Method::DeepIs);
        assert_eq!(back.estimate, r.estimate);
        assert_eq!(back.trace.points.len(), r.trace.points.len());
        assert_eq!(back.samples_to_target, r.samples_to_target);
        let csv = r.trace_csv();
        assert!(csv.starts_with("n,estimate,re\n100,"));
    }

    #[test]
    fn zero_estimate_serialises_null_re() {
        let r = RunResult::from_trace(Method::Nmc, 0, run(std::iter::repeat_n(0.0, 200), 200));
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(v["re"].is_null());
    }

    proptest::proptest! {
        #[test]
        fn trace_is_well_formed(terms in proptest::collection::vec(0.0f64..50.0, 0..3000)) {
            let n = terms.len() as u64;
            let t = run(terms, n);
            for w in t.points.windows(2) {
                proptest::prop_assert!(w[0].n < w[1].n);
            }
            for p in &t.points {
                proptest::prop_assert!(p.estimate >= 0.0 && p.std_dev >= 0.0);
                proptest::prop_assert!(p.re.is_none_or(|r| r >= 0.0));
            }
            if n > 0 {
                proptest::prop_assert_eq!(t.points.last().unwrap().n, n);
            }
        }
    }
}
