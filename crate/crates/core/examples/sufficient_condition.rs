//! Lower bound on the decay rate for a generic random network, as a
//! function of r, next to the threshold on |log r| above which every sensor
//! is asymptotically optimal.

use consensus_detect::observation::{derive_stats, ObservationModel};
use consensus_detect::theory::{theorem2_rate_bound, theorem2_regime, Theorem2Inputs};
use consensus_detect::RngSeed;

fn main() -> consensus_detect::Result<()> {
    let model = ObservationModel::random(10, 1.0, RngSeed::new(7, 0))?.rescaled_to_chernoff(0.02)?;
    let stats = derive_stats(&model)?;
    let inp = Theorem2Inputs::new(&stats, 0.5)?;
    let t = inp.sufficient_threshold();
    println!("C_tot = {:.5}; optimal once |log r| >= {t:.4} (r <= {:.3e})", stats.c_tot, (-t).exp());
    println!("{:>10} {:>10} {:>12} {:>18}", "r", "|log r|", "bound", "regime");
    for e in [0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 1.2 * t] {
        let r = (-e).exp();
        let row = inp.with_r(r)?;
        let (bound, _) = theorem2_rate_bound(&row)?;
        println!("{r:>10.3e} {e:>10.4} {bound:>12.6} {:>18}", theorem2_regime(&row));
    }
    Ok(())
}
