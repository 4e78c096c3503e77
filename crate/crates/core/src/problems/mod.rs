//! Benchmark safety problems behind one interface.

pub mod classifier;
pub mod cutin;
pub mod gauss;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::hull::OrientMap;
use crate::nature::GaussianNature;

pub use classifier::{make_perturbed_classifier, reference_classifier, ABLATION_GAMMAS};
pub use cutin::{idm_accel, simulate_cut_in, CutInParams, CutInState, IdmParams, CUT_IN_DIM};

/// Deterministic map `x ↦ 1{x ∈ S}`.
pub type Indicator = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct SafetyProblem {
    pub name: String,
    pub nature: GaussianNature,
    pub indicator: Indicator,
    pub analytic_mu: Option<f64>,
    /// Positive-orthant map under which danger is coordinatewise
    /// nondecreasing.
    pub orient: OrientMap,
    pub gamma: f64,
    /// Set-learning draws come from the nature with standard deviations
    /// scaled by this factor.
    pub stage1_scale: f64,
}

impl std::fmt::Debug for SafetyProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SafetyProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("analytic_mu", &self.analytic_mu)
            .field("gamma", &self.gamma)
            .field("stage1_scale", &self.stage1_scale)
            .finish()
    }
}

impl SafetyProblem {
    pub fn dim(&self) -> usize {
        self.nature.dim()
    }

    pub fn is_dangerous(&self, x: &[f64]) -> bool {
        (self.indicator)(x)
    }

    pub fn stage1_nature(&self) -> Result<GaussianNature> {
        self.nature.inflated(self.stage1_scale)
    }

    /// Orientation shifting `mean − radius·σ` to the origin.
    pub fn shifted_orient(nature: &GaussianNature, radius: f64) -> OrientMap {
        let sd = nature.std_devs();
        OrientMap {
            scale: vec![1.0; nature.dim()],
            shift: nature.mean().iter().zip(&sd).map(|(m, s)| radius * s - m).collect(),
        }
    }
}

/// `P(∪ {nᵢᵀX ≥ cᵢ})` for up to three half-spaces by inclusion–exclusion.
pub fn halfspace_union_probability(nature: &GaussianNature, normals: &[Vec<f64>], offsets: &[f64]) -> Option<f64> {
    let k = normals.len();
    if k == 0 || k > 3 {
        return None;
    }
    let cov = nature.cov();
    let mean = nature.mean();
    let quad = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            for j in 0..b.len() {
                s += a[i] * cov[(i, j)] * b[j];
            }
        }
        s
    };
    let sd: Vec<f64> = normals.iter().map(|n| quad(n, n).sqrt()).collect();
    let t: Vec<f64> = (0..k)
        .map(|i| (offsets[i] - normals[i].iter().zip(mean).map(|(a, m)| a * m).sum::<f64>()) / sd[i])
        .collect();
    let rho = |i: usize, j: usize| quad(&normals[i], &normals[j]) / (sd[i] * sd[j]);
    let mut p: f64 = t.iter().map(|&ti| gauss::upper_tail(ti)).sum();
    for i in 0..k {
        for j in i + 1..k {
            p -= gauss::bivariate_upper(t[i], t[j], rho(i, j));
        }
    }
    if k == 3 {
        p += gauss::trivariate_upper([t[0], t[1], t[2]], rho(0, 1), rho(0, 2), rho(1, 2))?;
    }
    Some(p.clamp(0.0, 1.0))
}

/// `S = ∪ {nᵢᵀx ≥ cᵢ}`.
pub fn make_halfspace_union(nature: GaussianNature, normals: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<SafetyProblem> {
    if normals.is_empty() {
        return Err(invalid("normals", "need at least one half-space"));
    }
    check_dim(normals.len(), offsets.len())?;
    for n in &normals {
        check_dim(nature.dim(), n.len())?;
        if n.iter().all(|v| *v == 0.0) {
            return Err(invalid("normals", "zero normal"));
        }
    }
    if normals.iter().flatten().chain(&offsets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("half-space parameters"));
    }
    let analytic_mu = halfspace_union_probability(&nature, &normals, &offsets);
    let orient = SafetyProblem::shifted_orient(&nature, 10.0);
    let ns = normals.clone();
    let cs = offsets.clone();
    Ok(SafetyProblem {
        name: "halfspace_union".into(),
        indicator: Arc::new(move |x: &[f64]| {
            ns.iter()
                .zip(&cs)
                .any(|(n, c)| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= *c)
        }),
        nature,
        analytic_mu,
        orient,
        gamma: 1.0,
        stage1_scale: DEFAULT_STAGE1_SCALE,
    })
}

/// Monotone two-dimensional set `{x₁ + x₂ ≥ c}` under a standard normal.
pub fn make_staircase(c: f64) -> Result<SafetyProblem> {
    let mut p = make_halfspace_union(GaussianNature::standard(2)?, vec![vec![1.0, 1.0]], vec![c])?;
    p.name = "staircase".into();
    Ok(p)
}

fn default_union_normals() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.0, 1.0]]
}
fn default_union_offsets() -> Vec<f64> {
    vec![3.9, 3.9]
}
/// Stage-1 inflation of the nature's covariance scale.
pub const DEFAULT_STAGE1_SCALE: f64 = 2.0;

fn default_stage1_scale() -> f64 {
    DEFAULT_STAGE1_SCALE
}
fn default_staircase_c() -> f64 {
    5.0
}
fn default_phases() -> usize {
    CutInParams::default().phases
}
fn one() -> f64 {
    1.0
}

/// Problem selection as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    HalfspaceUnion {
        #[serde(default)]
        mean: Option<Vec<f64>>,
        #[serde(default)]
        cov: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_union_normals")]
        normals: Vec<Vec<f64>>,
        #[serde(default = "default_union_offsets")]
        offsets: Vec<f64>,
        #[serde(default = "default_stage1_scale")]
        stage1_scale: f64,
    },
    Staircase {
        #[serde(default = "default_staircase_c")]
        c: f64,
        #[serde(default = "default_stage1_scale")]
        stage1_scale: f64,
    },
    CutIn {
        #[serde(default = "default_phases")]
        phases: usize,
        #[serde(default = "default_stage1_scale")]
        stage1_scale: f64,
    },
    Classifier {
        #[serde(default = "one")]
        gamma: f64,
        /// Defaults to `gamma`, i.e. unit-variance set-learning draws.
        #[serde(default)]
        stage1_scale: Option<f64>,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<SafetyProblem> {
        let mut p = match self {
            ProblemSpec::HalfspaceUnion {
                mean, cov, normals, offsets, ..
            } => {
                let d = normals.first().map_or(0, |n| n.len());
                let mean = mean.clone().unwrap_or_else(|| vec![0.0; d]);
                let nature = match cov {
                    Some(c) => GaussianNature::new(mean, c.clone())?,
                    None => GaussianNature::diagonal(mean, &vec![1.0; d])?,
                };
                make_halfspace_union(nature, normals.clone(), offsets.clone())?
            }
            ProblemSpec::Staircase { c, .. } => make_staircase(*c)?,
            ProblemSpec::CutIn { phases, .. } => cutin::make_cut_in(CutInParams {
                phases: *phases,
                ..CutInParams::default()
            })?,
            ProblemSpec::Classifier { gamma, .. } => {
                let (net, x0) = reference_classifier();
                make_perturbed_classifier(net, x0, *gamma)?
            }
        };
        p.stage1_scale = match self {
            ProblemSpec::HalfspaceUnion { stage1_scale, .. }
            | ProblemSpec::Staircase { stage1_scale, .. }
            | ProblemSpec::CutIn { stage1_scale, .. } => *stage1_scale,
            ProblemSpec::Classifier { gamma, stage1_scale } => stage1_scale.unwrap_or(*gamma),
        };
        if !(p.stage1_scale > 0.0 && p.stage1_scale.is_finite()) {
            return Err(invalid("stage1_scale", "must be positive"));
        }
        Ok(p)
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            ProblemSpec::Classifier { gamma, .. } => Some(*gamma),
            _ => None,
        }
    }

    /// Copy with the rarity parameter replaced.
    pub fn with_gamma(&self, g: f64) -> Result<Self> {
        match self {
            ProblemSpec::Classifier { stage1_scale, .. } => Ok(ProblemSpec::Classifier {
                gamma: g,
                stage1_scale: *stage1_scale,
            }),
            _ => Err(invalid("problem", "only the classifier problem has a rarity parameter")),
        }
    }
}

/// Pilot reference probabilities shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub problem: String,
    #[serde(default)]
    pub gamma: Option<f64>,
    pub mu: f64,
    pub std_err: f64,
    pub samples: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub schema_version: u32,
    pub references: Vec<Reference>,
}

pub const REFERENCES_JSON: &str = include_str!("../../data/references.json");

pub fn references() -> References {
    serde_json::from_str(REFERENCES_JSON).expect("bundled references parse")
}

/// Pilot reference for a problem, matching `gamma` when given.
pub fn pilot_reference(problem: &str, gamma: Option<f64>) -> Option<Reference> {
    references()
        .references
        .into_iter()
        .find(|r| r.problem == problem && (gamma.is_none() || r.gamma.zip(gamma).is_some_and(|(a, b)| (a - b).abs() < 1e-9)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_halfspace_tail() {
        let p = make_halfspace_union(GaussianNature::standard(1).unwrap(), vec![vec![1.0]], vec![3.0]).unwrap();
        assert!((p.analytic_mu.unwrap() - 1.3499e-3).abs() < 1e-7);
        assert!(p.is_dangerous(&[3.0]) && !p.is_dangerous(&[2.9]));
    }

    #[test]
    fn halfspace_through_mean() {
        let n = GaussianNature::new(vec![1.0, 2.0], vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let p = make_halfspace_union(n, vec![vec![0.3, -1.2]], vec![0.3 - 2.4]).unwrap();
        assert!((p.analytic_mu.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_disjoint_tails() {
        let p = make_halfspace_union(
            GaussianNature::standard(1).unwrap(),
            vec![vec![1.0], vec![-1.0]],
            vec![3.0, 3.0],
        )
        .unwrap();
        let want = 2.0 * gauss::upper_tail(3.0);
        assert!((p.analytic_mu.unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_normal() {
        assert!(make_halfspace_union(GaussianNature::standard(2).unwrap(), vec![vec![0.0, 0.0]], vec![1.0]).is_err());
        assert!(make_halfspace_union(GaussianNature::standard(2).unwrap(), vec![], vec![]).is_err());
    }

    #[test]
    fn three_orthogonal_halfspaces() {
        // independent coordinates: 1 − Π(1 − pᵢ)
        let p = make_halfspace_union(
            GaussianNature::standard(3).unwrap(),
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![1.0, 2.0, 0.5],
        )
        .unwrap();
        let want = 1.0 - [1.0, 2.0, 0.5].iter().map(|t| 1.0 - gauss::upper_tail(*t)).product::<f64>();
        assert!((p.analytic_mu.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn default_union_is_near_one_in_ten_thousand() {
        let spec: ProblemSpec = toml::from_str("name = \"halfspace_union\"").unwrap();
        let p = spec.build().unwrap();
        let mu = p.analytic_mu.unwrap();
        assert!(mu > 5e-5 && mu < 2e-4, "{mu}");
        assert_eq!(p.stage1_scale, 2.0);
    }

    #[test]
    fn staircase_orientation_is_monotone() {
        let p = make_staircase(5.0).unwrap();
        let inv = |y: &[f64]| -> Vec<f64> { y.iter().zip(&p.orient.shift).map(|(v, s)| v - s).collect() };
        for i in 0..40 {
            for j in 0..40 {
                let y = [i as f64 * 0.5, j as f64 * 0.5];
                let here = p.is_dangerous(&inv(&y));
                assert!(!here || p.is_dangerous(&inv(&[y[0] + 0.5, y[1]])));
                assert!(!here || p.is_dangerous(&inv(&[y[0], y[1] + 0.5])));
            }
        }
        assert_eq!(p.orient.apply(&[-10.0, -10.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn problem_config_round_trip_and_unknown_fields() {
        let s: ProblemSpec = toml::from_str("name = \"staircase\"\nc = 4.5").unwrap();
        assert_eq!(s, ProblemSpec::Staircase { c: 4.5, stage1_scale: 2.0 });
        assert!(toml::from_str::<ProblemSpec>("name = \"staircase\"\nbogus = 1").is_err());
        assert!(toml::from_str::<ProblemSpec>("name = \"nope\"").is_err());
        let c: ProblemSpec = toml::from_str("name = \"classifier\"\ngamma = 2.0").unwrap();
        assert_eq!(c.build().unwrap().stage1_scale, 2.0);
        assert!(s.with_gamma(2.0).is_err());
    }

    #[test]
    fn references_parse() {
        let r = references();
        assert!(r.references.iter().all(|x| x.mu > 0.0 && x.std_err > 0.0));
        assert!(pilot_reference("cut_in", None).is_some());
        assert!(pilot_reference("classifier", Some(1.0)).is_some());
    }

    #[test]
    fn pilot_rates_sit_in_their_windows() {
        let cut = pilot_reference("cut_in", None).unwrap();
        assert!((1e-5..=1e-3).contains(&cut.mu) && cut.samples >= 1_000_000);
        let cls = pilot_reference("classifier", Some(1.0)).unwrap();
        assert!(cls.mu > 1e-3 && cls.mu < 1e-1 && cls.samples >= 1_000_000);
    }
}
