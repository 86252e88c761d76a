//! Monte Carlo decay rates on a fixed geometric network as the link
//! formation probability q grows: poor for sparse activity, then close to
//! C_tot. The last column is the theoretical lower bound for the estimated r.

use consensus_detect::montecarlo::{fit_decay_rate, run_experiment, ExperimentConfig};
use consensus_detect::network::{geometric_supergraph_with_edges, spectral_r, WeightModel};
use consensus_detect::observation::{derive_stats, ObservationModel};
use consensus_detect::theory::{theorem2_rate_bound, Theorem2Inputs};
use consensus_detect::RngSeed;
use nalgebra::DVector;

fn main() -> consensus_detect::Result<()> {
    let n = 10;
    let s = ObservationModel::random(n, 1.0, RngSeed::new(9, 0))?.covariance().clone();
    let model = ObservationModel::with_equal_priors(DVector::zeros(n), DVector::from_element(n, 1.0), s)?
        .rescaled_to_chernoff(0.009)?;
    let stats = derive_stats(&model)?;
    let graph = (0..)
        .map(|s| geometric_supergraph_with_edges(n, 20, 1.0, RngSeed::new(90, s)).map(|(g, _)| g))
        .find(|g| g.as_ref().map_or(true, |g| g.is_connected()))
        .unwrap()?;

    println!("C_tot = {:.4}", stats.c_tot);
    println!("{:>6} {:>8} {:>10} {:>10} {:>10}", "q", "1 - r", "rate", "stderr", "bound");
    for (i, q) in [0.01, 0.03, 0.1, 0.3, 0.75].into_iter().enumerate() {
        let weights = WeightModel::metropolis(graph.with_uniform_q(q)?);
        let (r, _) = spectral_r(&weights, 2000, RngSeed::new(3, 100 + i as u64))?;
        let cfg = ExperimentConfig::new(model.clone(), weights, 20_000, 500, RngSeed::new(3, i as u64))
            .with_checkpoints((25..=50).map(|j| j * 10).collect());
        let res = run_experiment(&cfg)?;
        let fits = res.curves.iter().map(|c| fit_decay_rate(c, (250, 500))).collect::<Result<Vec<_>, _>>()?;
        let rate = fits.iter().map(|f| f.fitted_rate).sum::<f64>() / n as f64;
        let se = fits.iter().map(|f| f.stderr).sum::<f64>() / n as f64;
        let (bound, _) = theorem2_rate_bound(&Theorem2Inputs::new(&stats, r)?)?;
        println!("{q:>6} {:>8.4} {rate:>10.5} {se:>10.5} {bound:>10.5}", 1.0 - r);
    }
    Ok(())
}
