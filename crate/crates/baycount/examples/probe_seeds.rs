use baycount::gibbs::ChainConfig;
use baycount::model::Hyperparameters;
use baycount::selection::select_k;
use baycount::synthetic::{generate_scenario1, generate_scenario2};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (scenario, g, s, k0) = (args[0], args[1] as usize, args[2] as usize, args[3] as usize);
    for seed in &args[4..] {
        let truth = match scenario {
            1 => generate_scenario1(g, s, k0, *seed).unwrap(),
            _ => generate_scenario2(g, s, k0, *seed).unwrap(),
        };
        let cfg = ChainConfig {
            seed: *seed,
            crt_exact_head: Some(512),
            ..ChainConfig::default()
        };
        let start = std::time::Instant::now();
        let report = select_k(&truth.y, 2, 10, &Hyperparameters::default(), &cfg).unwrap();
        println!(
            "scenario {scenario} {g}x{s} K0={k0} seed {seed}: K_hat = {} ({:.0}s)",
            report.k_hat,
            start.elapsed().as_secs_f64()
        );
    }
}
