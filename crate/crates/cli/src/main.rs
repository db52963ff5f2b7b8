mod args;
mod commands;
mod manifest;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::commands::{absolute_path, parse_size, replay, resolve_config, run, Failure, Outcome};
use crate::manifest::Invocation;

fn dispatch(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    let threads = cli.threads;
    match cli.command {
        Command::Synth(a) => run(
            &Invocation::Synth {
                rows: a.rows,
                cols: a.cols,
                bands: a.bands,
                rank: a.rank,
                seed: a.seed,
                out: absolute_path(&a.out),
            },
            None,
            threads,
        ),
        Command::Simulate(a) => run(
            &Invocation::Simulate {
                clean: absolute_path(&a.clean),
                case: a.case,
                seed: a.seed,
                unscaled: a.unscaled,
                out: absolute_path(&a.out),
            },
            None,
            threads,
        ),
        Command::Denoise(a) => {
            let cfg = resolve_config(&a.config)?;
            run(
                &Invocation::Denoise {
                    noisy: absolute_path(&a.noisy),
                    truth: a.truth.as_deref().map(absolute_path),
                    normalize: a.normalize,
                    out: absolute_path(&a.out),
                },
                Some(&cfg),
                threads,
            )
        }
        Command::Metrics(a) => run(
            &Invocation::Metrics {
                reference: absolute_path(&a.reference),
                test: absolute_path(&a.test),
                out: a.out.as_deref().map(absolute_path),
            },
            None,
            threads,
        ),
        Command::Bench(a) => {
            let sizes = a
                .sizes
                .iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_size(s))
                .collect::<Result<Vec<_>, _>>()?;
            if sizes.is_empty() {
                return Err(Failure::Usage(anyhow::anyhow!("--sizes needs at least one size")));
            }
            let cfg = resolve_config(&a.config)?;
            run(
                &Invocation::Bench {
                    sizes,
                    bands: a.bands,
                    case: a.case,
                    seed: a.seed,
                    out: a.out.as_deref().map(absolute_path),
                },
                Some(&cfg),
                threads,
            )
        }
        Command::Replay(a) => replay(&a.manifest, a.out.as_deref(), threads),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = dispatch(cli) {
        eprintln!("error: {:#}", failure.error());
        std::process::exit(failure.exit_code());
    }
}
