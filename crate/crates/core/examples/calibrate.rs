//! Oracle calibration run for the fidelity thresholds.
//!
//! `cargo run --release -p qgrad-core --example calibrate -- [seed...]`

use std::time::Instant;

use qgrad::synth::{fidelity_sweep_seeds, Encoding, SynthConfig};

fn main() -> qgrad::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("seed")).collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    env_logger::init();
    let start = Instant::now();
    let report = fidelity_sweep_seeds(&SynthConfig::default(), &seeds, &Encoding::standard(), 0.05)?;
    for b in &report.baselines {
        println!(
            "seed {} oracle_recovery {:.4} less_fp_vs_oracle {:.4}",
            b.seed, b.oracle_planted_recovery, b.less_fp_spearman_vs_oracle
        );
    }
    println!("seed encoding rho_fp rho_oracle ovl_fp ovl_oracle zero_bin recovery max_dev");
    for r in &report.rows {
        println!(
            "{} {:<14} {:.4} {:.4} {:.4} {:.4} {} {:.4} {:.5}",
            r.seed,
            r.encoding,
            r.spearman_vs_less_fp,
            r.spearman_vs_oracle,
            r.overlap_vs_less_fp,
            r.overlap_vs_oracle,
            r.zero_bin_fraction.map_or("-".into(), |z| format!("{z:.4}")),
            r.planted_recovery,
            r.max_pair_deviation
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
