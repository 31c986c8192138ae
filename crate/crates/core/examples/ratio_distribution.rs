//! Writes the approximate-to-PCA loading ratios for the first component over
//! simulated data sets as CSV on stdout.
//!
//! cargo run --release --example ratio_distribution -- [reps] [seed]

use sparsepc::linalg::PowerOptions;
use sparsepc::simulation::{ratio_distribution, SimSpec, DEFAULT_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1000);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(DEFAULT_SEED);
    let spec = SimSpec {
        reps,
        seed,
        ..SimSpec::default()
    };
    println!("replicate,variable,nonzero_loading,ratio");
    for r in ratio_distribution(&spec, &PowerOptions::default())? {
        println!("{},{},{},{}", r.replicate, r.variable + 1, r.in_support, r.ratio);
    }
    Ok(())
}
