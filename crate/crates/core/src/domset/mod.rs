//! Dominating points of a learned dangerous set `{g ≥ κ}`.
//!
//! Points are found one at a time: each is the minimum-rate point of the set
//! minus the half-spaces cut away by its predecessors.

pub mod bnb;
pub mod encoding;
pub mod oracle;

use serde::{Deserialize, Serialize};

pub use bnb::{solve_min_rate, MinRateOptions, MinRatePoint};
pub use encoding::{propagate_bounds, stable_status, BigMEncoding, SearchBox};
pub use oracle::{enumerate_dominating_oracle, ORACLE_MAX_HIDDEN};

use crate::error::{check_dim, invalid, Result};
use crate::nature::GaussianNature;
use crate::relunet::ReluNet;

pub const DOMSET_SCHEMA_VERSION: u32 = 1;

/// Half-space `normal · (x − anchor) ≤ −margin` excluding the region
/// dominated by `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub anchor: Vec<f64>,
    /// `Σ⁻¹ (anchor − mean)`.
    pub normal: Vec<f64>,
    pub margin: f64,
}

impl Cut {
    pub fn new(nature: &GaussianNature, anchor: Vec<f64>, margin: f64) -> Result<Self> {
        if !(margin > 0.0) {
            return Err(invalid("tau", "cut margin must be positive"));
        }
        let normal = nature.precision_times_displacement(&anchor)?;
        Ok(Self {
            anchor,
            normal,
            margin,
        })
    }

    /// `normal · (x − anchor)`; the cut holds iff this is `≤ −margin`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.normal
            .iter()
            .zip(x.iter().zip(&self.anchor))
            .map(|(n, (x, a))| n * (x - a))
            .sum()
    }

    pub fn satisfied(&self, x: &[f64]) -> bool {
        self.slack(x) <= -self.margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomsetStatus {
    /// The remaining feasible set is empty.
    Exhausted,
    /// Stopped at `max_points`.
    Capped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominatingSet {
    pub schema_version: u32,
    pub kappa: f64,
    pub status: DomsetStatus,
    pub max_points: usize,
    pub points: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    /// Indices of points lying on the search-box boundary.
    pub boundary_points: Vec<usize>,
    pub nodes: usize,
}

impl DominatingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomsetOptions {
    pub max_points: usize,
    pub tau: f64,
    pub gap: f64,
    /// Half-width of the search box in marginal standard deviations.
    pub box_radius: f64,
    pub max_nodes: usize,
}

impl Default for DomsetOptions {
    fn default() -> Self {
        Self {
            max_points: 100,
            tau: 1e-6,
            gap: 1e-6,
            box_radius: 10.0,
            max_nodes: 200_000,
        }
    }
}

impl DomsetOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_points == 0 {
            return Err(invalid("max_points", "must be at least 1"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid("tau", "must be positive"));
        }
        if !(self.gap >= 0.0) {
            return Err(invalid("gap", "must be nonnegative"));
        }
        if !(self.box_radius > 0.0) {
            return Err(invalid("box_radius", "must be positive"));
        }
        Ok(())
    }
}

/// Dominating points of `{g ≥ κ}` inside `mean ± box_radius · σ`.
pub fn find_dominating_set(
    net: &ReluNet,
    nature: &GaussianNature,
    kappa: f64,
    opts: &DomsetOptions,
) -> Result<DominatingSet> {
    opts.validate()?;
    let bx = SearchBox::around(nature, opts.box_radius)?;
    let enc = propagate_bounds(net, &bx)?;
    find_dominating_set_in(net, nature, kappa, &enc, opts)
}

/// As [`find_dominating_set`] over the box of a prepared encoding.
pub fn find_dominating_set_in(
    net: &ReluNet,
    nature: &GaussianNature,
    kappa: f64,
    enc: &BigMEncoding,
    opts: &DomsetOptions,
) -> Result<DominatingSet> {
    opts.validate()?;
    check_dim(nature.dim(), net.input_dim())?;
    let mm = MinRateOptions {
        gap: opts.gap,
        max_nodes: opts.max_nodes,
    };
    let mut cuts = Vec::new();
    let mut out = DominatingSet {
        schema_version: DOMSET_SCHEMA_VERSION,
        kappa,
        status: DomsetStatus::Exhausted,
        max_points: opts.max_points,
        points: Vec::new(),
        rates: Vec::new(),
        boundary_points: Vec::new(),
        nodes: 0,
    };
    while out.points.len() < opts.max_points {
        let Some(p) = solve_min_rate(net, nature, &cuts, kappa, enc, &mm)? else {
            return Ok(out);
        };
        out.nodes += p.nodes;
        if p.touches_box {
            log::warn!(
                "dominating point {} lies on the search-box boundary",
                out.points.len()
            );
            out.boundary_points.push(out.points.len());
        }
        log::debug!("dominating point {} at rate {:.6}", out.points.len(), p.rate);
        cuts.push(Cut::new(nature, p.x.clone(), opts.tau)?);
        out.points.push(p.x);
        out.rates.push(p.rate);
    }
    // Capped only if something remains beyond the last cut.
    if solve_min_rate(net, nature, &cuts, kappa, enc, &mm)?.is_some() {
        out.status = DomsetStatus::Capped;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn shifted_relu() -> ReluNet {
        // relu(x) − 3: dangerous iff x ≥ 3 on the box
        ReluNet::from_parts(vec![(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0]], vec![-3.0])]).unwrap()
    }

    /// `{x ≥ 3} ∪ {x ≤ −4}`.
    fn union_net() -> ReluNet {
        ReluNet::from_parts(vec![
            (vec![vec![1.0], vec![-1.0]], vec![-2.0, -3.0]),
            (vec![vec![1.0, 1.0]], vec![-1.0]),
        ])
        .unwrap()
    }

    fn std1() -> GaussianNature {
        GaussianNature::standard(1).unwrap()
    }

    fn enc_for(net: &ReluNet, nature: &GaussianNature) -> BigMEncoding {
        propagate_bounds(net, &SearchBox::around(nature, 10.0).unwrap()).unwrap()
    }

    #[test]
    fn union_net_describes_both_tails() {
        let net = union_net();
        for (x, inside) in [(3.0, true), (2.99, false), (-4.0, true), (-3.99, false), (0.0, false), (7.0, true)] {
            assert_eq!(net.score(&[x]) >= 0.0, inside, "x = {x}");
        }
    }

    #[test]
    fn nearest_point_of_half_line() {
        let net = shifted_relu();
        let n = std1();
        let p = solve_min_rate(&net, &n, &[], 0.0, &enc_for(&net, &n), &Default::default())
            .unwrap()
            .unwrap();
        assert!((p.x[0] - 3.0).abs() < 1e-8);
        assert!((p.rate - 9.0).abs() < 1e-7);
        assert!(!p.touches_box);
    }

    #[test]
    fn cut_moves_to_far_tail() {
        let net = union_net();
        let n = std1();
        let cut = Cut::new(&n, vec![3.0], 1e-6).unwrap();
        let p = solve_min_rate(&net, &n, &[cut], 0.0, &enc_for(&net, &n), &Default::default())
            .unwrap()
            .unwrap();
        assert!((p.x[0] + 4.0).abs() < 1e-8);
        assert!((p.rate - 16.0).abs() < 1e-7);
    }

    #[test]
    fn unreachable_threshold_is_empty() {
        let net = union_net();
        let n = std1();
        let enc = enc_for(&net, &n);
        assert!(solve_min_rate(&net, &n, &[], 1e9, &enc, &Default::default()).unwrap().is_none());
        let ds = find_dominating_set(&net, &n, 1e9, &Default::default()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.status, DomsetStatus::Exhausted);
        let bx = SearchBox::around(&n, 10.0).unwrap();
        assert!(enumerate_dominating_oracle(&net, &n, 1e9, &bx, 1e-6, 100).unwrap().is_empty());
    }

    #[test]
    fn half_line_has_one_point() {
        let ds = find_dominating_set(&shifted_relu(), &std1(), 0.0, &Default::default()).unwrap();
        assert_eq!(ds.status, DomsetStatus::Exhausted);
        assert_eq!(ds.len(), 1);
        assert!((ds.points[0][0] - 3.0).abs() < 1e-8);
        let bx = SearchBox::around(&std1(), 10.0).unwrap();
        let o = enumerate_dominating_oracle(&shifted_relu(), &std1(), 0.0, &bx, 1e-6, 100).unwrap();
        assert_eq!(o.len(), 1);
        assert!((o[0][0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn union_has_two_points_in_rate_order() {
        let ds = find_dominating_set(&union_net(), &std1(), 0.0, &Default::default()).unwrap();
        assert_eq!(ds.status, DomsetStatus::Exhausted);
        assert_eq!(ds.len(), 2);
        assert!((ds.points[0][0] - 3.0).abs() < 1e-8);
        assert!((ds.points[1][0] + 4.0).abs() < 1e-8);
        assert!((ds.rates[0] - 9.0).abs() < 1e-7 && (ds.rates[1] - 16.0).abs() < 1e-7);

        let bx = SearchBox::around(&std1(), 10.0).unwrap();
        let o = enumerate_dominating_oracle(&union_net(), &std1(), 0.0, &bx, 1e-6, 100).unwrap();
        assert_eq!(o.len(), 2);
        assert!((o[0][0] - 3.0).abs() < 1e-8 && (o[1][0] + 4.0).abs() < 1e-8);
    }

    #[test]
    fn capped_at_one() {
        let opts = DomsetOptions {
            max_points: 1,
            ..Default::default()
        };
        let ds = find_dominating_set(&union_net(), &std1(), 0.0, &opts).unwrap();
        assert_eq!(ds.status, DomsetStatus::Capped);
        assert_eq!(ds.points.len(), 1);
        assert!((ds.points[0][0] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn json_shape() {
        let ds = find_dominating_set(&shifted_relu(), &std1(), 0.0, &Default::default()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&ds).unwrap();
        assert_eq!(v["status"], "exhausted");
        for key in ["kappa", "points", "rates", "schema_version"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: DominatingSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn oracle_refuses_wide_nets() {
        let net = ReluNet::init(&[1, 17, 1], RngStream::new(0, 0)).unwrap();
        let bx = SearchBox::around(&std1(), 10.0).unwrap();
        assert!(matches!(
            enumerate_dominating_oracle(&net, &std1(), 0.0, &bx, 1e-6, 10),
            Err(crate::Error::TooManyNeurons { hidden: 17, .. })
        ));
    }

    fn random_case(seed: u64) -> (ReluNet, GaussianNature, f64) {
        use rand::Rng;
        let mut r = RngStream::new(seed, 99).rng();
        let d = r.random_range(1..=3usize);
        let widths = if r.random_bool(0.5) {
            vec![d, r.random_range(2..=8), 1]
        } else {
            vec![d, r.random_range(2..=5), r.random_range(2..=4), 1]
        };
        let net = ReluNet::init(&widths, RngStream::new(seed, 7)).unwrap();
        let nature = GaussianNature::diagonal(
            (0..d).map(|_| r.random_range(-0.5..0.5)).collect(),
            &(0..d).map(|_| r.random_range(0.5..2.0)).collect::<Vec<_>>(),
        )
        .unwrap();
        let enc = propagate_bounds(&net, &SearchBox::around(&nature, 10.0).unwrap()).unwrap();
        let kappa = enc.score_lower + r.random_range(0.55..1.05) * (enc.score_upper - enc.score_lower);
        (net, nature, kappa)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_oracle_and_is_sound(seed in 0u64..10_000) {
            let (net, nature, kappa) = random_case(seed);
            let opts = DomsetOptions { max_points: 6, ..Default::default() };
            let ds = find_dominating_set(&net, &nature, kappa, &opts).unwrap();
            let bx = SearchBox::around(&nature, 10.0).unwrap();
            let oracle = enumerate_dominating_oracle(&net, &nature, kappa, &bx, opts.tau, 6).unwrap();
            prop_assert_eq!(ds.len(), oracle.len());
            for a in &ds.points {
                let dist = oracle
                    .iter()
                    .map(|b| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(dist <= 1e-5, "seed {} dist {}", seed, dist);
            }
            for (j, x) in ds.points.iter().enumerate() {
                prop_assert!(net.score(x) >= kappa - 1e-8);
                prop_assert!((nature.rate(x).unwrap() - ds.rates[j]).abs() <= 1e-8);
                for earlier in &ds.points[..j] {
                    let cut = Cut::new(&nature, earlier.clone(), opts.tau).unwrap();
                    prop_assert!(cut.slack(x) <= -opts.tau + 1e-9);
                }
            }
        }
    }
}
