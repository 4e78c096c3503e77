//! Crude Monte Carlo pilots for problems without a closed-form probability.
//!
//! `cargo run --release --example pilot -- <problem> [gamma] [draws] [seed]`

use rare_sampler::estimators::estimate_nmc;
use rare_sampler::par::Exec;
use rare_sampler::problems::ProblemSpec;
use rare_sampler::rng::RngStream;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("cut_in");
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let draws: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_240_601);
    let spec: ProblemSpec = match name {
        "cut_in" => serde_json::from_str(r#"{"name":"cut_in"}"#),
        "classifier" => serde_json::from_value(serde_json::json!({"name": "classifier", "gamma": gamma})),
        other => panic!("no pilot for {other}"),
    }
    .expect("problem spec");
    let problem = spec.build().expect("problem");
    let ind = |x: &[f64]| problem.is_dangerous(x);
    let r = estimate_nmc(&ind, &problem.nature, draws, RngStream::new(seed, 0), Exec::default());
    let se = r.re.map(|re| re * r.estimate).unwrap_or(f64::NAN);
    println!(
        "{}",
        serde_json::json!({
            "problem": name,
            "gamma": problem.gamma,
            "mu": r.estimate,
            "std_err": se,
            "samples": r.n,
            "seed": seed,
        })
    );
}
