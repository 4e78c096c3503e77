//! Misclassification of a fixed classifier under Gaussian input noise of
//! scale `1/γ`.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::hull::OrientMap;
use crate::nature::GaussianNature;
use crate::problems::SafetyProblem;
use crate::relunet::ReluNet;

pub const ABLATION_GAMMAS: [f64; 4] = [1.0, 3.33, 5.0, 8.0];

/// A 2-4-1 classifier whose positive class is a union of four slabs far
/// from the origin, together with the correctly classified input `0`.
///
/// Unit `i` computes `relu(aᵢᵀx − cᵢ + ½)` and the score is their sum minus
/// `½`, so the positive class begins where some `aᵢᵀx` reaches `cᵢ`.
pub fn reference_classifier() -> (ReluNet, Vec<f64>) {
    let dirs = [[1.0, 0.0], [-0.6, 0.8], [-0.6, -0.8], [0.3, -0.954]];
    let offsets = [2.2, 2.5, 2.8, 3.0];
    let w1 = dirs.iter().map(|d| d.to_vec()).collect();
    let b1 = offsets.iter().map(|c| 0.5 - c).collect();
    let net = ReluNet::from_parts(vec![(w1, b1), (vec![vec![1.0; 4]], vec![-0.5])]).expect("well-formed");
    (net, vec![0.0, 0.0])
}

fn class(net: &ReluNet, x: &[f64]) -> bool {
    net.score(x) >= 0.0
}

/// Nature `N(x0, γ⁻² I)`; dangerous iff the predicted class differs from
/// the class of `x0`.
pub fn make_perturbed_classifier(net: ReluNet, x0: Vec<f64>, gamma: f64) -> Result<SafetyProblem> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid("gamma", "must be positive"));
    }
    if x0.len() != net.input_dim() {
        return Err(invalid("x0", "dimension differs from the classifier input"));
    }
    let base = class(&net, &x0);
    if base {
        return Err(invalid("x0", "must be classified in the negative class"));
    }
    let d = x0.len();
    let nature = GaussianNature::diagonal(x0, &vec![1.0 / gamma; d])?;
    Ok(SafetyProblem {
        name: "classifier".into(),
        orient: OrientMap::identity(d),
        indicator: Arc::new(move |x: &[f64]| class(&net, x) != base),
        nature,
        analytic_mu: None,
        gamma,
        stage1_scale: gamma,
    })
}
