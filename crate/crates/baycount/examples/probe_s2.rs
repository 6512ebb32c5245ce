use baycount::gibbs::{run_chain, ChainConfig};
use baycount::model::Hyperparameters;
use baycount::synthetic::generate_scenario2;

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (g, s, k0, k, iters, head) = (
        args[0] as usize, args[1] as usize, args[2] as usize,
        args[3] as usize, args[4] as usize, args[5],
    );
    let truth = generate_scenario2(g, s, k0, 7).unwrap();
    let total: u64 = truth.y.column_sums().iter().sum();
    eprintln!("total reads {total}");
    let cfg = ChainConfig {
        burn_in: iters / 2,
        total_iterations: iters,
        thin: 1,
        seed: 7,
        store_draws: false,
        crt_exact_head: if head == 0 { None } else { Some(head) },
    };
    let start = std::time::Instant::now();
    let out = run_chain(&truth.y, k, &Hyperparameters::default(), &cfg).unwrap();
    eprintln!(
        "K={k} iters={iters} head={head}: {:.2}s, loglik last {:.1}",
        start.elapsed().as_secs_f64(),
        out.loglik_trace.last().unwrap()
    );
}
