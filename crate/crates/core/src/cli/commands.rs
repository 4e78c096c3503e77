use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domset::{find_dominating_set, DominatingSet};
use crate::estimators::{
    acc_rate, deg_conservativeness, run_deep_is, run_iterative, run_nmc, run_robust, train_stage1, Method,
    PipelineOutput, RunResult,
};
use crate::nature::required_sample_size;
use crate::par::with_threads;
use crate::problems::{pilot_reference, SafetyProblem};
use crate::relunet::ReluNet;

use super::config::{AblationConfig, RunConfig};
use super::svg::trace_chart;
use super::CliError;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn envelope(kind: &str, config: &Value, body: impl Serialize) -> Result<String, CliError> {
    let body = serde_json::to_value(body).map_err(crate::Error::from)?;
    let mut map = serde_json::Map::new();
    map.insert("schema_version".into(), json!(ARTIFACT_SCHEMA_VERSION));
    map.insert("kind".into(), json!(kind));
    map.insert("config".into(), config.clone());
    map.insert(kind.into(), body);
    Ok(serde_json::to_string_pretty(&Value::Object(map)).map_err(crate::Error::from)?)
}

fn problem_of(cfg: &RunConfig) -> Result<SafetyProblem, CliError> {
    cfg.problem.build().map_err(|e| CliError::Config(format!("`problem`: {e}")))
}

fn write_common(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    write(out, "config.toml", &cfg.to_toml())
}

fn write_net(cfg: &Value, out: &Path, net: &ReluNet) -> Result<(), CliError> {
    let body: Value = serde_json::from_str(&net.to_json()?).map_err(crate::Error::from)?;
    write(out, "net.json", &envelope("net", cfg, body)?)
}

fn write_domset(cfg: &Value, out: &Path, ds: &DominatingSet) -> Result<(), CliError> {
    write(out, "domset.json", &envelope("domset", cfg, ds)?)
}

fn write_run(out: &Path, run: &RunResult) -> Result<(), CliError> {
    write(out, "run.json", &run.to_json()?)?;
    write(out, "trace.csv", &run.trace_csv())?;
    write(out, "trace.svg", &trace_chart(run))
}

/// Runs the configured method and writes its artifacts under `out`.
pub fn estimate(cfg: &RunConfig, out: &Path) -> Result<RunResult, CliError> {
    let problem = problem_of(cfg)?;
    let pcfg = cfg.pipeline();
    let resolved = cfg.to_json();
    let outcome: PipelineOutput = with_threads(cfg.threads.unwrap_or(0), || -> crate::Result<PipelineOutput> {
        match cfg.method {
            Method::Nmc => Ok(PipelineOutput {
                result: run_nmc(&problem, cfg.n2, cfg.seed, &pcfg),
                net: None,
                domset: None,
                hull: None,
                data: None,
            }),
            Method::DeepIs => run_deep_is(&problem, &pcfg, cfg.seed),
            Method::Robust => run_robust(&problem, &pcfg, cfg.seed),
            Method::IterRobust => run_iterative(&problem, &pcfg, cfg.seed, cfg.k.unwrap_or(1)),
        }
    })?;
    let mut run = outcome.result;
    run.config = resolved.clone();
    write_common(cfg, out)?;
    write_run(out, &run)?;
    if let Some(net) = &outcome.net {
        write_net(&resolved, out, net)?;
    }
    if let Some(ds) = &outcome.domset {
        write_domset(&resolved, out, ds)?;
    }
    log::info!(
        "{}: estimate {:e}, re {:?}, to target {:?}",
        run.method,
        run.estimate,
        run.re,
        run.samples_to_target
    );
    Ok(run)
}

/// Trains on stage-1 draws and writes `net.json` plus a training summary.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<ReluNet, CliError> {
    let problem = problem_of(cfg)?;
    let pcfg = cfg.pipeline();
    let (net, data) = with_threads(cfg.threads.unwrap_or(0), || train_stage1(&problem, &pcfg, cfg.seed))?;
    let resolved = cfg.to_json();
    write_common(cfg, out)?;
    write_net(&resolved, out, &net)?;
    let summary = json!({
        "examples": data.len(),
        "positives": data.positives(),
        "logistic_loss": crate::relunet::logistic_loss(&net, &data.inputs, &data.labels),
    });
    write(out, "train.json", &envelope("train", &resolved, summary)?)?;
    Ok(net)
}

/// Loads a network from `net.json` (either the artifact envelope or the
/// bare network form).
pub fn load_net(path: &Path) -> Result<ReluNet, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let body = v.get("net").cloned().unwrap_or(v);
    ReluNet::from_json(&body.to_string()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Dominating set of `{g ≥ kappa}` for a given or freshly trained network.
pub fn domset(cfg: &RunConfig, net: Option<&Path>, kappa: f64, out: &Path) -> Result<DominatingSet, CliError> {
    let problem = problem_of(cfg)?;
    let net = match net {
        Some(p) => load_net(p)?,
        None => train(cfg, out)?,
    };
    if net.input_dim() != problem.dim() {
        return Err(CliError::Config(format!(
            "`net`: input dimension {} but the problem has {}",
            net.input_dim(),
            problem.dim()
        )));
    }
    let ds = find_dominating_set(&net, &problem.nature, kappa, &cfg.domset_options())?;
    write_common(cfg, out)?;
    write_domset(&cfg.to_json(), out, &ds)?;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub gamma: f64,
    pub n_nmc: u64,
    /// Total Deep IS draws (set learning plus estimation) to reach the
    /// target; `None` when the target was not reached.
    pub n_deep_is: Option<u64>,
    pub acc_rate: Option<f64>,
    pub nmc_bounded: bool,
    pub mu_deep_is: f64,
}

/// Crude Monte Carlo draws to reach the target, or the Chebyshev bound
/// (flagged) when that exceeds the cap.
fn nmc_requirement(problem: &SafetyProblem, cfg: &RunConfig, mu_hint: f64, cap: u64) -> Result<(u64, bool), CliError> {
    let bound = if mu_hint > 0.0 && mu_hint < 1.0 {
        Some(required_sample_size(mu_hint, cfg.target_re.min(1.0), 1.0)?)
    } else {
        None
    };
    if let Some(b) = bound.filter(|b| *b > cap) {
        return Ok((b, true));
    }
    let draws = bound.map_or(cap, |b| (3 * b + cfg.min_n).min(cap));
    let run = run_nmc(problem, draws, cfg.seed, &cfg.pipeline());
    Ok(match run.samples_to_target {
        Some(n) => (n, false),
        None => (bound.unwrap_or(cap), true),
    })
}

/// Deep IS against crude Monte Carlo across the rarity sweep.
pub fn ablation_rows(cfg: &RunConfig) -> Result<Vec<AblationRow>, CliError> {
    let ab = cfg.ablation.clone().unwrap_or_default();
    let pcfg = cfg.pipeline();
    let mut rows = Vec::with_capacity(ab.gammas.len());
    for &gamma in &ab.gammas {
        let spec = cfg.problem.with_gamma(gamma).map_err(|e| CliError::Config(format!("`problem`: {e}")))?;
        let problem = spec.build().map_err(|e| CliError::Config(format!("`problem`: {e}")))?;
        let deep = with_threads(cfg.threads.unwrap_or(0), || run_deep_is(&problem, &pcfg, cfg.seed))?.result;
        let n_deep_is = deep.samples_to_target.map(|s| deep.n1 + s);
        let (n_nmc, nmc_bounded) = with_threads(cfg.threads.unwrap_or(0), || {
            nmc_requirement(&problem, cfg, deep.estimate, ab.nmc_cap)
        })?;
        let acc = match n_deep_is {
            Some(n) => Some(acc_rate(n_nmc as f64, n as f64)?),
            None => {
                log::warn!("gamma {gamma}: Deep IS did not reach the target within {} draws", cfg.n2);
                None
            }
        };
        log::info!("gamma {gamma}: nmc {n_nmc} (bounded {nmc_bounded}), deep_is {n_deep_is:?}, acc {acc:?}");
        rows.push(AblationRow {
            gamma,
            n_nmc,
            n_deep_is,
            acc_rate: acc,
            nmc_bounded,
            mu_deep_is: deep.estimate,
        });
    }
    Ok(rows)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("gamma,n_nmc,n_deep_is,acc_rate,nmc_bounded\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.gamma,
            r.n_nmc,
            opt(r.n_deep_is),
            opt(r.acc_rate),
            r.nmc_bounded
        ));
    }
    s
}

pub fn ablation(cfg: &RunConfig, out: &Path) -> Result<Vec<AblationRow>, CliError> {
    if cfg.method != Method::DeepIs {
        return Err(CliError::Config("`method`: the ablation compares deep_is with nmc".into()));
    }
    let rows = ablation_rows(cfg)?;
    let mut resolved = cfg.clone();
    resolved.ablation.get_or_insert_with(AblationConfig::default);
    write_common(&resolved, out)?;
    write(out, "ablation.csv", &ablation_csv(&rows))?;
    write(out, "ablation.json", &envelope("ablation", &resolved.to_json(), &rows)?)?;
    Ok(rows)
}

/// Where the reference probability for a report comes from.
#[derive(Debug, Clone, Default)]
pub struct ReferenceChoice {
    pub mu: Option<f64>,
    pub run: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub method: Method,
    pub dir: String,
    pub estimate: f64,
    pub re: Option<f64>,
    pub n_to_target: Option<u64>,
    pub deg_conservativeness: f64,
    pub acc_rate: Option<f64>,
}

pub fn load_run(dir: &Path) -> Result<RunResult, CliError> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunResult::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn reference_from_config(run: &RunResult) -> Option<f64> {
    let cfg: RunConfig = serde_json::from_value(run.config.clone()).ok()?;
    let problem = cfg.problem.build().ok()?;
    if let Some(mu) = problem.analytic_mu {
        return Some(mu);
    }
    let gamma = (problem.name == "classifier").then_some(problem.gamma);
    pilot_reference(&problem.name, gamma).map(|r| r.mu)
}

fn total_to_target(run: &RunResult) -> Option<u64> {
    run.samples_to_target.map(|s| run.n1 + s)
}

/// Comparison rows: conservativeness against the reference and
/// acceleration against the crude Monte Carlo requirement.
pub fn report_rows(dirs: &[PathBuf], reference: &ReferenceChoice) -> Result<Vec<ReportRow>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Config("`runs`: need at least one run directory".into()));
    }
    let runs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let mu_ref = match (reference.mu, &reference.run) {
        (Some(mu), _) => mu,
        (None, Some(dir)) => load_run(dir)?.estimate,
        (None, None) => reference_from_config(&runs[0])
            .ok_or_else(|| CliError::Config("`reference`: no analytic, pilot or designated reference".into()))?,
    };
    if !(mu_ref > 0.0 && mu_ref < 1.0) {
        return Err(CliError::Config(format!("`reference`: {mu_ref} is not a probability in (0, 1)")));
    }
    let nmc_baseline = runs
        .iter()
        .find(|r| r.method == Method::Nmc)
        .and_then(total_to_target);
    let mut rows = Vec::with_capacity(runs.len());
    for (run, dir) in runs.iter().zip(dirs) {
        let n = total_to_target(run);
        let n_nmc = match nmc_baseline {
            Some(b) => b,
            None => required_sample_size(mu_ref, run.target_re.unwrap_or(0.1).min(1.0), 1.0)?,
        };
        let acc = match n {
            Some(n) => Some(acc_rate(n_nmc as f64, n as f64)?),
            None => None,
        };
        rows.push(ReportRow {
            method: run.method,
            dir: dir.display().to_string(),
            estimate: run.estimate,
            re: run.re,
            n_to_target: n,
            deg_conservativeness: deg_conservativeness(run.estimate, mu_ref)?,
            acc_rate: acc,
        });
    }
    Ok(rows)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("method,dir,estimate,re,n_to_target,deg_conservativeness,acc_rate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:e},{},{},{},{}\n",
            r.method,
            r.dir,
            r.estimate,
            opt(r.re),
            opt(r.n_to_target),
            r.deg_conservativeness,
            opt(r.acc_rate)
        ));
    }
    s
}

pub fn report(dirs: &[PathBuf], reference: &ReferenceChoice, out: &Path) -> Result<Vec<ReportRow>, CliError> {
    let rows = report_rows(dirs, reference)?;
    write(out, "table.csv", &report_csv(&rows))?;
    Ok(rows)
}
