//! Exact error decay rate under switching fusion as a function of the
//! fusion probability p, for N = 20 sensors with C_tot = 0.1.

use consensus_detect::theory::{exact_switching_fusion_alpha, phi_star, theorem1_optimality_threshold, SwitchingFusionSpec};

fn main() -> consensus_detect::Result<()> {
    let base = SwitchingFusionSpec::from_total(20, 0.1, 0.0)?;
    println!("optimal from p* = {:.4}", theorem1_optimality_threshold(&base));
    println!("{:>6} {:>10} {:>18} {:>16}", "p", "rate", "regime", "-log a(2000)/2000");
    for i in 0..=20 {
        let spec = base.with_p(i as f64 / 20.0)?;
        let (rate, regime) = phi_star(&spec);
        let finite = -exact_switching_fusion_alpha(&spec, 2000)? / 2000.0;
        println!("{:>6.2} {rate:>10.5} {regime:>18} {finite:>16.5}", spec.p());
    }
    Ok(())
}
