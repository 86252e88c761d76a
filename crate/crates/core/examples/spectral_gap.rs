//! How fast a link-failure network averages: r = lambda_2(E[W^2]) for
//! Metropolis weights on a random geometric graph, as the link formation
//! probability q grows.

use consensus_detect::network::{geometric_supergraph_with_edges, sample_weight, spectral_r, WeightModel};
use consensus_detect::RngSeed;

fn main() -> consensus_detect::Result<()> {
    let (graph, radius) = geometric_supergraph_with_edges(20, 60, 1.0, RngSeed::new(1, 0))?;
    println!("N = {}, M = {}, radius = {radius:.4}, connected = {}", graph.n(), graph.edge_count(), graph.is_connected());

    let w = sample_weight(&WeightModel::metropolis(graph.clone()), RngSeed::new(1, 1));
    w.check()?;
    println!("a realization with every link on is symmetric and doubly stochastic");

    println!("{:>6} {:>10} {:>10} {:>10}", "q", "r", "stderr", "1 - r");
    for q in [0.02, 0.05, 0.1, 0.2, 0.4, 0.75, 1.0] {
        let model = WeightModel::metropolis(graph.with_uniform_q(q)?);
        let (r, se) = spectral_r(&model, 4000, RngSeed::new(1, 2))?;
        println!("{q:>6} {r:>10.5} {se:>10.5} {:>10.5}", 1.0 - r);
    }
    Ok(())
}
