//! Solves one realization of the default scene and prints the outer-loop trace.

use rcc_core::channel::{generate_channels, SceneConfig};
use rcc_core::passive::passive_solve;
use rcc_core::pdd::{pdd_solve, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cfg = SceneConfig::default();
    let ch = generate_channels(&cfg, seed)?;
    let opts = SolverOptions {
        init_seed: seed,
        ..SolverOptions::default()
    };
    let out = if std::env::args().nth(2).as_deref() == Some("passive") {
        passive_solve(&ch, &cfg, &opts)?
    } else {
        pdd_solve(&ch, &cfg, &opts)?
    };
    print!("{}", out.trace.to_csv());
    eprintln!(
        "inner passes {} skipped {} converged {}",
        out.trace.inner_passes, out.trace.skipped_blocks, out.trace.converged
    );
    println!("{}", rcc_core::model::MetricsReport::csv_header(cfg.k()));
    println!("{}", out.report.csv_row());
    Ok(())
}
