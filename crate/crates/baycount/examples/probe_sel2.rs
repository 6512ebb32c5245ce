use baycount::gibbs::ChainConfig;
use baycount::model::Hyperparameters;
use baycount::selection::select_k;
use baycount::synthetic::generate_scenario2;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (g, s, k0, seed) = (args[0] as usize, args[1] as usize, args[2] as usize, args[3]);
    let truth = generate_scenario2(g, s, k0, seed).unwrap();
    let cfg = ChainConfig {
        seed,
        crt_exact_head: Some(512),
        ..ChainConfig::default()
    };
    let start = std::time::Instant::now();
    let report = select_k(&truth.y, 2, 10, &Hyperparameters::default(), &cfg).unwrap();
    for (i, &k) in report.k_grid.iter().enumerate() {
        let d2 = if i == 0 || i + 1 == report.k_grid.len() {
            f64::NAN
        } else {
            report.delta2[i - 1]
        };
        println!("K={k} L={:.2} d2={:.2}", report.loglik_mean[i], d2);
    }
    println!(
        "seed {seed}: K_hat = {} ({:.0}s)",
        report.k_hat,
        start.elapsed().as_secs_f64()
    );
}
