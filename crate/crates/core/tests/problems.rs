//! Benchmark problems against independent crude Monte Carlo, and the
//! orientation contract the hull relies on.

use rare_sampler::estimators::{estimate_nmc, run_robust, PipelineConfig};
use rare_sampler::hull::build_hull;
use rare_sampler::par::Exec;
use rare_sampler::problems::{
    cutin::make_cut_in, make_halfspace_union, make_staircase, pilot_reference, CutInParams, ProblemSpec, SafetyProblem,
};
use rare_sampler::{GaussianNature, RngStream};

fn crude(problem: &SafetyProblem, n: u64, seed: u64) -> (f64, f64) {
    let r = estimate_nmc(&*problem.indicator, &problem.nature, n, RngStream::new(seed, 77), Exec::Parallel);
    let se = (r.estimate * (1.0 - r.estimate) / n as f64).sqrt();
    (r.estimate, se)
}

fn assert_matches_crude(problem: &SafetyProblem, n: u64) {
    let mu = problem.analytic_mu.expect("analytic probability");
    let (est, _) = crude(problem, n, 1);
    let se = (mu * (1.0 - mu) / n as f64).sqrt();
    assert!((est - mu).abs() <= 4.0 * se, "{}: crude {est:e} vs analytic {mu:e} (se {se:e})", problem.name);
}

#[test]
fn analytic_single_tail_matches_crude() {
    let p = make_halfspace_union(GaussianNature::standard(1).unwrap(), vec![vec![1.0]], vec![3.0]).unwrap();
    assert_matches_crude(&p, 10_000_000);
}

#[test]
fn analytic_default_union_matches_crude() {
    let p = ProblemSpec::HalfspaceUnion {
        mean: None,
        cov: None,
        normals: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        offsets: vec![3.9, 3.9],
        stage1_scale: 2.0,
    }
    .build()
    .unwrap();
    assert_matches_crude(&p, 10_000_000);
}

#[test]
fn analytic_staircase_matches_crude() {
    assert_matches_crude(&make_staircase(5.0).unwrap(), 10_000_000);
}

#[test]
fn analytic_correlated_triple_union_matches_crude() {
    let nature = GaussianNature::new(
        vec![0.2, -0.1, 0.0],
        vec![vec![1.0, 0.3, -0.2], vec![0.3, 1.5, 0.4], vec![-0.2, 0.4, 0.8]],
    )
    .unwrap();
    let p = make_halfspace_union(
        nature,
        vec![vec![1.0, 0.5, 0.0], vec![0.0, 1.0, -0.3], vec![0.4, 0.0, 1.0]],
        vec![2.5, 2.8, 2.2],
    )
    .unwrap();
    assert_matches_crude(&p, 10_000_000);
}

fn assert_reference_holds(problem: &SafetyProblem, gamma: Option<f64>, n: u64) {
    let reference = pilot_reference(&problem.name, gamma).expect("bundled reference");
    let (est, se) = crude(problem, n, 2);
    let combined = (se * se + reference.std_err * reference.std_err).sqrt();
    assert!(
        (est - reference.mu).abs() <= 4.0 * combined,
        "{}: fresh {est:e} vs reference {:e} (combined se {combined:e})",
        problem.name,
        reference.mu
    );
}

#[test]
fn classifier_reference_reproduces() {
    let p = ProblemSpec::Classifier { gamma: 1.0, stage1_scale: None }.build().unwrap();
    assert_reference_holds(&p, Some(1.0), 200_000);
}

#[test]
fn cut_in_reference_reproduces() {
    let p = make_cut_in(CutInParams::default()).unwrap();
    assert_reference_holds(&p, None, 1_000_000);
}

/// Fraction of random axis lines (through draws of an inflated nature) on
/// which the indicator, read in oriented coordinates, ever switches from
/// dangerous back to safe.
fn violation_rate(problem: &SafetyProblem, coord: usize, lines: usize, seed: u64) -> f64 {
    let spread = problem.stage1_nature().unwrap();
    let mut rng = RngStream::new(seed, 31).rng();
    let mut base = vec![0.0; problem.dim()];
    let scale = problem.orient.scale[coord];
    let sd = problem.nature.std_devs()[coord];
    let mut bad = 0;
    for _ in 0..lines {
        spread.draw_into(&mut rng, &mut base);
        let mut seen = false;
        let mut broken = false;
        for step in 0..=80 {
            let y = -6.0 * sd + step as f64 * 0.15 * sd;
            let mut x = base.clone();
            x[coord] = problem.nature.mean()[coord] + y / scale;
            let inside = problem.is_dangerous(&x);
            broken |= seen && !inside;
            seen |= inside;
        }
        bad += broken as usize;
    }
    bad as f64 / lines as f64
}

#[test]
fn half_space_problems_are_orthogonally_monotone() {
    let staircase = make_staircase(5.0).unwrap();
    let union = make_halfspace_union(
        GaussianNature::standard(3).unwrap(),
        vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.0]],
        vec![3.0, 3.5],
    )
    .unwrap();
    for p in [&staircase, &union] {
        for coord in 0..p.dim() {
            assert_eq!(violation_rate(p, coord, 500, coord as u64), 0.0, "{} coord {coord}", p.name);
        }
    }
}

#[test]
fn cut_in_is_monotone_except_for_rare_reactions_of_the_rear_car() {
    let p = make_cut_in(CutInParams::default()).unwrap();
    for coord in 0..p.dim() {
        let rate = violation_rate(&p, coord, 300, 100 + coord as u64);
        if coord == 3 || coord == 4 {
            assert!(rate <= 0.02, "coord {coord}: {rate}");
        } else {
            assert_eq!(rate, 0.0, "coord {coord}");
        }
    }
}

#[test]
fn orientation_maps_the_search_box_into_the_orthant() {
    for p in [make_staircase(5.0).unwrap(), make_cut_in(CutInParams::default()).unwrap()] {
        let sd = p.nature.std_devs();
        let corner: Vec<f64> = p.nature.mean().iter().zip(&sd).map(|(m, s)| m - 10.0 * s).collect();
        assert!(p.orient.apply(&corner).iter().all(|v| v.abs() < 1e-9));
        let mut rng = RngStream::new(4, 4).rng();
        let mut x = vec![0.0; p.dim()];
        for _ in 0..1000 {
            p.nature.draw_into(&mut rng, &mut x);
            assert!(p.orient.apply(&x).iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn staircase_hull_has_no_false_negatives_on_a_grid() {
    let p = make_staircase(5.0).unwrap();
    let mut cfg = PipelineConfig::new(2000, 5000);
    cfg.candidates = 1000;
    cfg.domset.tau = 0.5;
    let out = run_robust(&p, &cfg, 3).unwrap();
    let net = out.net.unwrap();
    let kappa = out.result.kappa.unwrap();
    let hull = out.hull.unwrap();
    let data = out.data.unwrap();
    let safe: Vec<Vec<f64>> = data.safe_inputs().map(|x| p.orient.apply(x)).collect();
    assert_eq!(build_hull(&safe, 2).unwrap(), hull);
    let mut dangerous = 0;
    for i in 0..100 {
        for j in 0..100 {
            let x = [-4.0 + 12.0 * i as f64 / 99.0, -4.0 + 12.0 * j as f64 / 99.0];
            if p.is_dangerous(&x) {
                dangerous += 1;
                assert!(net.score(&x) >= kappa, "false negative at {x:?}");
            }
        }
    }
    assert!(dangerous > 1000);
}
