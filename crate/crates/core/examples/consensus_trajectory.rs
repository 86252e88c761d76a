//! One sample path of the running-consensus states under H0, on a
//! link-failure network. The states contract towards their average, which
//! drifts to m_eta0 < 0.

use consensus_detect::detectors::{ConsensusState, EtaSampler, Hypothesis};
use consensus_detect::network::{geometric_supergraph, Realization, WeightModel};
use consensus_detect::observation::{derive_stats, ObservationModel};
use consensus_detect::RngSeed;
use nalgebra::DVector;

fn main() -> consensus_detect::Result<()> {
    let model = ObservationModel::uncorrelated(1.0, &[2.0, 4.0, 1.0, 3.0, 2.5])?;
    let stats = derive_stats(&model)?;
    let graph = geometric_supergraph(5, 0.6, 0.3, RngSeed::new(5, 0))?;
    let weights = WeightModel::metropolis(graph);

    let seed = RngSeed::new(5, 1);
    let mut noise = seed.lane_rng(consensus_detect::gaussian::Lane::Noise);
    let mut links = seed.lane_rng(consensus_detect::gaussian::Lane::Links);
    let sampler = EtaSampler::new(&stats)?;
    let mut state = ConsensusState::initial(sampler.sample(Hypothesis::H0, &mut noise));
    let mut w = Realization::new(5);
    let mut scratch = DVector::zeros(5);

    println!("mean of eta under H0: {:?}", stats.m_eta0.as_slice());
    for k in 1..=200u64 {
        if k == 1 || k % 20 == 0 {
            let spread = state.x.max() - state.x.min();
            println!("k={k:>3} x={:>8.4?} spread={spread:.4} decisions={:?}", state.x.as_slice(), state.decisions().decisions);
        }
        weights.draw(&mut links, &mut w);
        let eta = sampler.sample(Hypothesis::H0, &mut noise);
        state.advance(&w, &eta, &mut scratch);
    }
    Ok(())
}
