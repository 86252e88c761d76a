//! A sensor attached to the network through one unreliable link. Its error
//! stays near that of a sensor working alone until the link is up often
//! enough; the necessary condition says when it cannot be optimal.

use consensus_detect::detectors::no_cooperation_error_probability;
use consensus_detect::montecarlo::{run_experiment, ExperimentConfig};
use consensus_detect::network::{connectivity_probability, pendant_supergraph, WeightModel};
use consensus_detect::observation::{derive_stats, ObservationModel};
use consensus_detect::theory::theorem3_necessary;
use consensus_detect::RngSeed;

fn main() -> consensus_detect::Result<()> {
    let n = 8;
    let pendant = n - 1;
    let model = ObservationModel::uncorrelated(1.0, &vec![10.0; n])?;
    let stats = derive_stats(&model)?;
    let c_i = stats.c_i.as_ref().unwrap()[pendant];
    let k = 200;
    println!("alone: {:.5}", no_cooperation_error_probability(&model, pendant, k)?);
    for q in [0.05, 0.2, 0.5, 0.9] {
        let graph = pendant_supergraph(n, pendant, 2, q, 0.8, 0.45, RngSeed::new(10, 0))?;
        let weights = WeightModel::metropolis(graph);
        let p_i = connectivity_probability(&weights, pendant)?;
        let mut cfg = ExperimentConfig::new(model.clone(), weights, 20_000, k, RngSeed::new(10, 1)).with_checkpoints(vec![k]);
        cfg.record_sensors = Some(vec![pendant]);
        let pt = run_experiment(&cfg)?.curves[0].points[0];
        println!(
            "q_pendant={q:<5} error {:.5} [{:.5}, {:.5}]  can be optimal: {}",
            pt.p_hat,
            pt.ci_low,
            pt.ci_high,
            theorem3_necessary(stats.c_tot, c_i, p_i)?
        );
    }
    Ok(())
}
