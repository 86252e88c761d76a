//! Observation models: the derived statistics of a random correlated model,
//! and the two reference detectors (fusion center, isolated sensors) for an
//! uncorrelated one.

use consensus_detect::detectors::{centralized_error_probability, no_cooperation_error_probability};
use consensus_detect::observation::{chernoff_no_cooperation, derive_stats, ObservationModel};
use consensus_detect::RngSeed;

fn main() -> consensus_detect::Result<()> {
    let model = ObservationModel::random(8, 1.0, RngSeed::new(2024, 0))?.rescaled_to_chernoff(0.05)?;
    let stats = derive_stats(&model)?;
    println!("N = {}", stats.n);
    println!("sigma_L^2 = {:.6}  C_tot = {:.6}", stats.sigma_l2, stats.c_tot);
    println!("||S_eta|| = {:.6}  m_bar = {:.6}  K = {:.4}", stats.s_eta_norm, stats.m_bar, stats.k);

    // isolated-sensor baselines need independent sensors
    let plain = ObservationModel::uncorrelated(1.0, &[2.0, 4.0, 8.0, 16.0])?;
    let plain_stats = derive_stats(&plain)?;
    println!("\nuncorrelated model, C_tot = {:.6}", plain_stats.c_tot);
    for i in 0..plain.n() {
        println!("sensor {}: Chernoff information alone {:.6}", i + 1, chernoff_no_cooperation(&plain, i)?);
    }
    println!("{:>5} {:>14} {:>14} {:>14}", "k", "centralized", "sensor 1 alone", "sensor 4 alone");
    for k in [1, 10, 50, 100, 200, 500] {
        println!(
            "{k:>5} {:>14.4e} {:>14.4e} {:>14.4e}",
            centralized_error_probability(&plain_stats, k)?,
            no_cooperation_error_probability(&plain, 0, k)?,
            no_cooperation_error_probability(&plain, 3, k)?
        );
    }
    Ok(())
}
