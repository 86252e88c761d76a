//! Gaussian tail probabilities, including far beyond where `Q(t)` underflows.

use consensus_detect::gaussian::{log_q_function, q_bounds, q_function};

fn main() -> consensus_detect::Result<()> {
    println!("{:>8} {:>14} {:>14} {:>14} {:>14}", "t", "Q(t)", "lower", "upper", "log Q(t)");
    for t in [0.5, 1.0, 2.0, 5.0, 10.0, 30.0, 40.0, 100.0] {
        let (lo, hi) = q_bounds(t)?;
        println!("{t:>8} {:>14.6e} {lo:>14.6e} {hi:>14.6e} {:>14.6}", q_function(t)?, log_q_function(t)?);
    }
    Ok(())
}
