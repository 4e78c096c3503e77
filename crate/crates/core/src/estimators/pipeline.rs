//! End-to-end runs: learn the dangerous set, extract dominating points,
//! then estimate.

use serde::{Deserialize, Serialize};

use crate::domset::{find_dominating_set, DominatingSet, DomsetOptions};
use crate::error::{invalid, Result};
use crate::estimators::proposal::{sample_mixture, MixtureProposal};
use crate::estimators::sampling::{estimate_deep_is, estimate_nmc, estimate_robust};
use crate::estimators::trace::{Method, RunResult};
use crate::hull::{build_hull, tune_kappa, MonotoneHull};
use crate::nature::GaussianNature;
use crate::par::{map_slice, Exec};
use crate::problems::SafetyProblem;
use crate::relunet::{train, LabeledDataset, ReluNet, TrainConfig};
use crate::rng::{streams, RngStream};

fn default_candidates() -> usize {
    10_000
}
fn default_target_re() -> f64 {
    0.1
}
fn default_min_n() -> u64 {
    1000
}
fn default_hidden() -> Vec<usize> {
    vec![16]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Set-learning draws across all batches.
    pub n1: usize,
    /// Estimation draws.
    pub n2: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub domset: DomsetOptions,
    /// Extra hull candidates, half from the nature and half from the
    /// preliminary proposal.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_target_re")]
    pub target_re: f64,
    #[serde(default = "default_min_n")]
    pub min_n: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl PipelineConfig {
    pub fn new(n1: usize, n2: u64) -> Self {
        Self {
            n1,
            n2,
            hidden: default_hidden(),
            train: TrainConfig::default(),
            domset: DomsetOptions::default(),
            candidates: default_candidates(),
            target_re: default_target_re(),
            min_n: default_min_n(),
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 {
            return Err(invalid("n1", "must be positive"));
        }
        if self.n2 == 0 {
            return Err(invalid("n2", "must be positive"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("arch", "need at least one hidden layer of positive width"));
        }
        if !(self.target_re > 0.0) {
            return Err(invalid("target_re", "must be positive"));
        }
        self.train.validate()?;
        self.domset.validate()
    }
}

/// Everything a run produced besides the estimate.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub result: RunResult,
    pub net: Option<ReluNet>,
    pub domset: Option<DominatingSet>,
    pub hull: Option<MonotoneHull>,
    pub data: Option<LabeledDataset>,
}

/// Batch sizes summing to `n1`; the first `n1 mod k` batches get one more.
pub fn batch_sizes(n1: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if n1 < k {
        return Err(invalid("n1", "must be at least k"));
    }
    Ok((0..k).map(|j| n1 / k + usize::from(j < n1 % k)).collect())
}

fn label(problem: &SafetyProblem, xs: Vec<Vec<f64>>, exec: Exec) -> Result<LabeledDataset> {
    let ys = map_slice(exec, &xs, |x| problem.is_dangerous(x));
    LabeledDataset::new(xs, ys)
}

fn fit(data: &LabeledDataset, d: usize, cfg: &PipelineConfig, seed: u64, round: u64) -> Result<ReluNet> {
    let mut widths = vec![d];
    widths.extend(&cfg.hidden);
    widths.push(1);
    let tc = TrainConfig {
        seed: RngStream::new(seed, streams::TRAIN).fork(round).stream,
        ..cfg.train.clone()
    };
    let (net, report) = train(data, &widths, &tc)?;
    log::info!(
        "round {round}: trained on {} examples ({} dangerous), accuracy {:.4}",
        report.examples,
        report.positives,
        report.accuracy
    );
    Ok(net)
}

fn proposal_for(nature: &GaussianNature, ds: &DominatingSet) -> Result<MixtureProposal> {
    if ds.is_empty() {
        log::warn!("no dominating points at kappa {}; proposing the nature itself", ds.kappa);
        Ok(MixtureProposal::at_mean(nature))
    } else {
        MixtureProposal::new(nature, ds.points.clone())
    }
}

fn stage1(problem: &SafetyProblem, n: usize, rng: RngStream, exec: Exec) -> Result<LabeledDataset> {
    let xs = problem.stage1_nature()?.sample(rng, n);
    label(problem, xs, exec)
}

/// Stage-1 draws and a classifier fitted to them, as in the first step of
/// every learned-set method.
pub fn train_stage1(problem: &SafetyProblem, cfg: &PipelineConfig, seed: u64) -> Result<(ReluNet, LabeledDataset)> {
    cfg.validate()?;
    let data = stage1(problem, cfg.n1, RngStream::new(seed, streams::STAGE1), cfg.exec)?;
    let net = fit(&data, problem.dim(), cfg, seed, 0)?;
    Ok((net, data))
}

/// Crude Monte Carlo with `n` draws.
pub fn run_nmc(problem: &SafetyProblem, n: u64, seed: u64, cfg: &PipelineConfig) -> RunResult {
    let ind = |x: &[f64]| problem.is_dangerous(x);
    estimate_nmc(&ind, &problem.nature, n, RngStream::new(seed, streams::NMC), cfg.exec)
        .with_target(cfg.target_re, cfg.min_n)
}

/// Learn the set, mix over its dominating points at `κ = 0`, and weight the
/// true indicator.
pub fn run_deep_is(problem: &SafetyProblem, cfg: &PipelineConfig, seed: u64) -> Result<PipelineOutput> {
    let (net, data) = train_stage1(problem, cfg, seed)?;
    let ds = find_dominating_set(&net, &problem.nature, 0.0, &cfg.domset)?;
    let prop = proposal_for(&problem.nature, &ds)?;
    let ind = |x: &[f64]| problem.is_dangerous(x);
    let mut result = estimate_deep_is(
        &ind,
        &prop,
        &problem.nature,
        cfg.n2,
        RngStream::new(seed, streams::ESTIMATE),
        cfg.exec,
    )?
    .with_target(cfg.target_re, cfg.min_n);
    result.n1 = cfg.n1 as u64;
    result.kappa = Some(0.0);
    Ok(PipelineOutput {
        result,
        net: Some(net),
        domset: Some(ds),
        hull: None,
        data: Some(data),
    })
}

/// Iterative scheme with a single batch.
pub fn run_robust(problem: &SafetyProblem, cfg: &PipelineConfig, seed: u64) -> Result<PipelineOutput> {
    robust_in_batches(problem, cfg, seed, 1, Method::Robust)
}

/// Collects set-learning draws in `k` batches, each after the first drawn
/// around the dominating points of the current preliminary set, then
/// estimates with the hull-tuned surrogate set.
pub fn run_iterative(problem: &SafetyProblem, cfg: &PipelineConfig, seed: u64, k: usize) -> Result<PipelineOutput> {
    robust_in_batches(problem, cfg, seed, k, Method::IterRobust)
}

fn robust_in_batches(
    problem: &SafetyProblem,
    cfg: &PipelineConfig,
    seed: u64,
    k: usize,
    method: Method,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let sizes = batch_sizes(cfg.n1, k)?;
    let nature = &problem.nature;
    let d = problem.dim();
    let mut data = stage1(problem, sizes[0], RngStream::new(seed, streams::STAGE1), cfg.exec)?;
    for (j, &size) in sizes.iter().enumerate().skip(1) {
        let net = fit(&data, d, cfg, seed, j as u64 - 1)?;
        let pre = find_dominating_set(&net, nature, 0.0, &cfg.domset)?;
        let rng = RngStream::new(seed, streams::AUGMENT).fork(j as u64);
        let xs = if pre.is_empty() {
            problem.stage1_nature()?.sample(rng, size)
        } else {
            sample_mixture(&MixtureProposal::new(nature, pre.points.clone())?, rng, size).0
        };
        log::info!("batch {j}: {size} draws around {} preliminary points", pre.len());
        data.extend(label(problem, xs, cfg.exec)?);
    }
    let net = fit(&data, d, cfg, seed, k as u64 - 1)?;

    let safe: Vec<Vec<f64>> = data
        .safe_inputs()
        .map(|x| problem.orient.apply(x))
        .filter(|y| y.iter().all(|v| *v >= 0.0))
        .collect();
    let hull = build_hull(&safe, d)?;

    let pre = find_dominating_set(&net, nature, 0.0, &cfg.domset)?;
    let mut candidates = data.inputs.clone();
    let crng = RngStream::new(seed, streams::CANDIDATES);
    let half = cfg.candidates / 2;
    candidates.extend(nature.sample(crng.fork(0), half));
    let pre_prop = proposal_for(nature, &pre)?;
    candidates.extend(sample_mixture(&pre_prop, crng.fork(1), cfg.candidates - half).0);
    let kappa = tune_kappa(&net, &hull, &problem.orient, &candidates, None)?;
    log::info!("tuned kappa {kappa:.6} from {} hull corners", hull.corners.len());

    let ds = find_dominating_set(&net, nature, kappa, &cfg.domset)?;
    let prop = proposal_for(nature, &ds)?;
    let mut result = estimate_robust(
        &net,
        kappa,
        &prop,
        nature,
        cfg.n2,
        RngStream::new(seed, streams::ESTIMATE),
        cfg.exec,
    )?
    .with_target(cfg.target_re, cfg.min_n);
    result.method = method;
    result.trace.method = method;
    result.n1 = cfg.n1 as u64;
    Ok(PipelineOutput {
        result,
        net: Some(net),
        domset: Some(ds),
        hull: Some(hull),
        data: Some(data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_halfspace_union, make_staircase};

    #[test]
    fn remainder_goes_to_first_batches() {
        assert_eq!(batch_sizes(100, 3).unwrap(), vec![34, 33, 33]);
        assert_eq!(batch_sizes(100, 1).unwrap(), vec![100]);
        assert_eq!(batch_sizes(7, 7).unwrap(), vec![1; 7]);
        assert!(batch_sizes(10, 0).is_err());
        assert!(batch_sizes(2, 3).is_err());
    }

    fn small_cfg() -> PipelineConfig {
        let mut c = PipelineConfig::new(1000, 20_000);
        c.hidden = vec![8];
        c.train.epochs = 60;
        c.candidates = 2000;
        c.domset.max_points = 10;
        c
    }

    #[test]
    fn single_batch_matches_robust() {
        let p = make_staircase(4.0).unwrap();
        let cfg = small_cfg();
        let a = run_robust(&p, &cfg, 3).unwrap();
        let b = run_iterative(&p, &cfg, 3, 1).unwrap();
        assert_eq!(a.result.estimate, b.result.estimate);
        assert_eq!(a.result.kappa, b.result.kappa);
        assert_eq!(a.result.method, Method::Robust);
        assert_eq!(b.result.method, Method::IterRobust);
    }

    #[test]
    fn deep_is_tracks_analytic_tail() {
        let p = make_halfspace_union(GaussianNature::standard(1).unwrap(), vec![vec![1.0]], vec![3.0]).unwrap();
        let out = run_deep_is(&p, &small_cfg(), 11).unwrap();
        let mu = p.analytic_mu.unwrap();
        let r = &out.result;
        let se = r.re.unwrap() * r.estimate;
        assert!((r.estimate - mu).abs() <= 4.0 * se, "{} vs {mu} (se {se})", r.estimate);
        assert!(!out.domset.unwrap().is_empty());
    }

    #[test]
    fn robust_covers_staircase() {
        let p = make_staircase(4.0).unwrap();
        let out = run_robust(&p, &small_cfg(), 5).unwrap();
        let mu = p.analytic_mu.unwrap();
        assert!(out.result.estimate >= 0.8 * mu, "{} vs {mu}", out.result.estimate);
        assert!(out.hull.is_some());
    }
}
