//! Denoises a synthetic rank-3 cube under one of the noise cases and prints
//! the per-iteration trace.
//!
//! ```text
//! cargo run --release -p swlrtr --example synthetic -- 4
//! ```

use swlrtr::config::SolverConfig;
use swlrtr::metrics::mpsnr;
use swlrtr::noise::{add_case_noise, NoiseSpec};
use swlrtr::synthetic::low_rank_cube;

fn main() -> swlrtr::Result<()> {
    let case: u8 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let clean = low_rank_cube(32, 32, 16, 3, 7)?;
    let spec = NoiseSpec::case_scaled(case, clean.bands(), 11)?;
    let (noisy, injected) = add_case_noise(&clean, &spec)?;
    let before = mpsnr(&clean, &noisy)?;
    let out = swlrtr::solver::denoise(&noisy, &SolverConfig::default(), Some(&clean))?;
    print!("{}", out.diagnostics.to_csv());
    let after = mpsnr(&clean, &out.x)?;
    println!(
        "case {case}: noisy {before:.2} dB, denoised {after:.2} dB, gain {:.2} dB",
        after - before
    );
    let (mut hit, mut total) = (0, 0);
    for (i, &m) in injected.mask.iter().enumerate() {
        let jump = (noisy.data().as_slice()[i] - clean.data().as_slice()[i]).abs();
        if m != 0 && jump > 0.2 {
            total += 1;
            if out.s.data().as_slice()[i] != 0.0 {
                hit += 1;
            }
        }
    }
    println!("sparse support recall: {hit}/{total}");
    Ok(())
}
