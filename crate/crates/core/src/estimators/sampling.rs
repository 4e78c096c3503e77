//! The crude and importance-sampling estimators.
//!
//! Terms are generated chunk by chunk (chunk `c` draws from `rng.fork(c)`)
//! and reduced in chunk order, so results do not depend on the worker
//! count.

use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Result};
use crate::estimators::proposal::MixtureProposal;
use crate::estimators::trace::{Accumulator, Method, RunResult};
use crate::nature::GaussianNature;
use crate::par::{chunk_ranges, map_slice, Exec};
use crate::relunet::ReluNet;
use crate::rng::RngStream;

/// Chunks materialised at once.
const CHUNKS_PER_WAVE: usize = 64;

/// Runs `term(rng, buf)` `n` times and accumulates the results.
pub fn accumulate_terms<F>(method: Method, n: u64, rng: RngStream, exec: Exec, term: F) -> Accumulator
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>) -> f64 + Sync + Send,
{
    let mut acc = Accumulator::new(method, n);
    let ranges = chunk_ranges(n as usize);
    let ids: Vec<usize> = (0..ranges.len()).collect();
    for wave in ids.chunks(CHUNKS_PER_WAVE) {
        let terms: Vec<Vec<f64>> = map_slice(exec, wave, |&c| {
            let mut r = rng.fork(c as u64).rng();
            let mut buf = Vec::new();
            ranges[c].clone().map(|_| term(&mut r, &mut buf)).collect()
        });
        for t in terms.into_iter().flatten() {
            acc.push(t);
        }
    }
    acc
}

/// `(1/n) Σ 1{X_i ∈ S}` with `X_i ~ nature`.
pub fn estimate_nmc(
    indicator: &(dyn Fn(&[f64]) -> bool + Sync),
    nature: &GaussianNature,
    n: u64,
    rng: RngStream,
    exec: Exec,
) -> RunResult {
    let d = nature.dim();
    let acc = accumulate_terms(Method::Nmc, n, rng, exec, |r, buf| {
        buf.resize(d, 0.0);
        nature.draw_into(r, buf);
        if indicator(buf) { 1.0 } else { 0.0 }
    });
    RunResult::from_trace(Method::Nmc, rng.seed, acc.finish())
}

fn weighted(
    method: Method,
    indicator: &(dyn Fn(&[f64]) -> bool + Sync),
    prop: &MixtureProposal,
    n: u64,
    rng: RngStream,
    exec: Exec,
) -> RunResult {
    let d = prop.dim();
    let nature = prop.nature();
    let acc = accumulate_terms(method, n, rng, exec, |r, buf| {
        buf.resize(d, 0.0);
        prop.draw_into(r, buf);
        if indicator(buf) {
            let u = nature.whiten(buf).expect("dimension fixed");
            prop.log_ratio_whitened(&u).exp()
        } else {
            0.0
        }
    });
    let mut res = RunResult::from_trace(method, rng.seed, acc.finish());
    res.dominating_points = prop.means().to_vec();
    res
}

/// `(1/n₂) Σ L(X̃_i) 1{X̃_i ∈ S}` with `X̃_i` from the mixture and the true
/// indicator.
pub fn estimate_deep_is(
    indicator: &(dyn Fn(&[f64]) -> bool + Sync),
    prop: &MixtureProposal,
    nature: &GaussianNature,
    n2: u64,
    rng: RngStream,
    exec: Exec,
) -> Result<RunResult> {
    check_dim(nature.dim(), prop.dim())?;
    Ok(weighted(Method::DeepIs, indicator, prop, n2, rng, exec))
}

/// As [`estimate_deep_is`] with the surrogate indicator `g(x) ≥ κ̂`.
pub fn estimate_robust(
    net: &ReluNet,
    kappa_hat: f64,
    prop: &MixtureProposal,
    nature: &GaussianNature,
    n2: u64,
    rng: RngStream,
    exec: Exec,
) -> Result<RunResult> {
    check_dim(nature.dim(), prop.dim())?;
    check_dim(nature.dim(), net.input_dim())?;
    let ind = |x: &[f64]| net.score(x) >= kappa_hat;
    let mut r = weighted(Method::Robust, &ind, prop, n2, rng, exec);
    r.kappa = Some(kappa_hat);
    Ok(r)
}
