use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use swlrtr::config::SolverConfig;
use swlrtr::hsi_io::{normalize, read_cube, write_cube, write_cube_as, Dtype, HsiCube};
use swlrtr::metrics::evaluate;
use swlrtr::noise::{add_case_noise, NoiseSpec};
use swlrtr::solver::{denoise, StageTimes};
use swlrtr::synthetic::low_rank_cube;
use swlrtr::tensor::DenseTensor3;

use crate::args::ConfigArgs;
use crate::manifest::{sidecar, Invocation, RunManifest};

/// A failed command: bad input from the caller, or a failure while running.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<swlrtr::Error> for Failure {
    fn from(e: swlrtr::Error) -> Self {
        match e {
            swlrtr::Error::InvalidConfig(_) => Failure::Usage(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Inputs the caller named must be readable; anything else is a usage error.
fn read_input(path: &Path) -> Result<HsiCube, Failure> {
    read_cube(path).map_err(|e| usage(anyhow!(e)))
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Defaults, then the config file, then flags. Problems from every layer are
/// reported together.
pub fn resolve_config(args: &ConfigArgs) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig::default();
    let mut problems = Vec::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(anyhow!(e).context(format!("reading config {}", path.display()))))?;
        if let Err(swlrtr::Error::InvalidConfig(mut p)) = cfg.apply_text(&text) {
            problems.append(&mut p);
        }
    }
    for (key, value) in args.flag_pairs() {
        if let Err(e) = cfg.set(&key, &value) {
            problems.push(format!("--{key}: {e}"));
        }
    }
    // values that failed to parse were never applied, so the rest still validates
    if let Err(swlrtr::Error::InvalidConfig(mut p)) = cfg.validate() {
        problems.append(&mut p);
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(swlrtr::Error::InvalidConfig(problems).into())
    }
}

pub fn run(invocation: &Invocation, config: Option<&SolverConfig>, threads: Option<usize>) -> Outcome {
    let start = Instant::now();
    let mut manifest = RunManifest::new(invocation.clone(), config.cloned(), threads);
    let manifest_path = match invocation {
        Invocation::Synth {
            rows,
            cols,
            bands,
            rank,
            seed,
            out,
        } => {
            let cube = low_rank_cube(*rows, *cols, *bands, *rank, *seed).map_err(|e| usage(anyhow!(e)))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            write_cube(&cube, out)?;
            manifest.outputs.push(out.clone());
            Some(sidecar(out))
        }
        Invocation::Simulate {
            clean,
            case,
            seed,
            unscaled,
            out,
        } => {
            let clean = read_input(clean)?;
            let spec = if *unscaled {
                NoiseSpec::case(*case, *seed)
            } else {
                NoiseSpec::case_scaled(*case, clean.bands(), *seed)
            }
            .map_err(|e| usage(anyhow!(e)))?;
            let (noisy, injected) = add_case_noise(&clean, &spec).map_err(|e| usage(anyhow!(e)))?;
            create_dir(out)?;
            let noisy_path = out.join("noisy.cube");
            write_cube(&noisy, &noisy_path)?;
            let mask = DenseTensor3::from_vec(clean.dims(), injected.mask.iter().map(|&m| f64::from(m)).collect())?;
            let mask_path = out.join("mask.cube");
            write_cube_as(&HsiCube::new(mask), &mask_path, Dtype::F32)?;
            let noise_path = out.join("noise.json");
            write_text(
                &noise_path,
                &(serde_json::to_string_pretty(&injected).map_err(anyhow::Error::from)? + "\n"),
            )?;
            manifest.outputs.extend([noisy_path, mask_path, noise_path]);
            Some(out.join("manifest.json"))
        }
        Invocation::Denoise {
            noisy,
            truth,
            normalize: rescale,
            out,
        } => {
            let cfg = config.ok_or_else(|| anyhow!("denoise needs a configuration"))?;
            let input = read_input(noisy)?;
            let truth = truth.as_deref().map(read_input).transpose()?;
            cfg.validate_for(input.dims())?;
            let work = if *rescale { normalize(&input)? } else { input.clone() };
            let started = Instant::now();
            let result = denoise(&work, cfg, truth.as_ref().filter(|_| !*rescale))?;
            let runtime = started.elapsed().as_secs_f64();
            let (x, s) = if *rescale {
                let range = work.source_range().expect("normalized cube keeps its range");
                let span = range.max - range.min;
                (
                    HsiCube::new(result.x.data().map(|v| v * span + range.min)),
                    HsiCube::new(result.s.data().scale(span)),
                )
            } else {
                (result.x, result.s)
            };
            create_dir(out)?;
            let x_path = out.join("denoised.cube");
            let s_path = out.join("sparse.cube");
            let diag_path = out.join("diagnostics.csv");
            let cfg_path = out.join("config.txt");
            write_cube(&x, &x_path)?;
            write_cube(&s, &s_path)?;
            write_text(&diag_path, &result.diagnostics.to_csv())?;
            write_text(&cfg_path, &cfg.to_text())?;
            manifest.outputs.extend([x_path, s_path, diag_path, cfg_path]);
            if let Some(truth) = &truth {
                let mut report = evaluate(truth, &x)?;
                report.runtime_secs = Some(runtime);
                let metrics_path = out.join("metrics.csv");
                write_text(&metrics_path, &report.to_csv())?;
                eprintln!(
                    "MPSNR {:.3} dB, MSSIM {:.4}, ERGAS {:.3}, MSA {:.4}",
                    report.mpsnr, report.mssim, report.ergas, report.msa
                );
                manifest.outputs.push(metrics_path);
            }
            Some(out.join("manifest.json"))
        }
        Invocation::Metrics { reference, test, out } => {
            let reference = read_input(reference)?;
            let test = read_input(test)?;
            let report = evaluate(&reference, &test).map_err(|e| usage(anyhow!(e)))?;
            let csv = report.to_csv();
            match out {
                Some(path) => {
                    write_text(path, &csv)?;
                    manifest.outputs.push(path.clone());
                    Some(sidecar(path))
                }
                None => {
                    print!("{csv}");
                    None
                }
            }
        }
        Invocation::Bench {
            sizes,
            bands,
            case,
            seed,
            out,
        } => {
            let cfg = config.ok_or_else(|| anyhow!("bench needs a configuration"))?;
            let csv = bench(sizes, *bands, *case, *seed, cfg)?;
            match out {
                Some(path) => {
                    write_text(path, &csv)?;
                    manifest.outputs.push(path.clone());
                    Some(sidecar(path))
                }
                None => {
                    print!("{csv}");
                    None
                }
            }
        }
    };
    if let Some(path) = manifest_path {
        manifest.wall_time_secs = start.elapsed().as_secs_f64();
        manifest.write(&path)?;
    }
    Ok(())
}

fn bench(sizes: &[(usize, usize)], bands: usize, case: u8, seed: u64, cfg: &SolverConfig) -> Result<String, Failure> {
    let mut csv = String::from("rows,cols,bands,groups,iterations,subspace_s,matching_s,groups_s,cycles_s,total_s\n");
    for &(rows, cols) in sizes {
        let clean = low_rank_cube(rows, cols, bands, 3.min(bands), seed).map_err(|e| usage(anyhow!(e)))?;
        cfg.validate_for(clean.dims())?;
        let spec = NoiseSpec::case_scaled(case, bands, seed).map_err(|e| usage(anyhow!(e)))?;
        let (noisy, _) = add_case_noise(&clean, &spec)?;
        let started = Instant::now();
        let result = denoise(&noisy, cfg, None)?;
        let total = started.elapsed().as_secs_f64();
        let mut stages = StageTimes::default();
        for r in &result.diagnostics.iterations {
            stages.subspace += r.stages.subspace;
            stages.matching += r.stages.matching;
            stages.groups += r.stages.groups;
            stages.cycles += r.stages.cycles;
        }
        let groups = result.diagnostics.iterations.first().map_or(0, |r| r.groups);
        let _ = writeln!(
            csv,
            "{rows},{cols},{bands},{groups},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            result.diagnostics.iterations.len(),
            stages.subspace,
            stages.matching,
            stages.groups,
            stages.cycles,
            total
        );
    }
    Ok(csv)
}

/// `64` or `48x64`.
pub fn parse_size(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || usage(anyhow!("bad size {text:?}, expected N or ROWSxCOLS"));
    let parse = |s: &str| s.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match text.split_once('x') {
        Some((r, c)) => Ok((parse(r).ok_or_else(bad)?, parse(c).ok_or_else(bad)?)),
        None => parse(text).map(|n| (n, n)).ok_or_else(bad),
    }
}

pub fn replay(path: &Path, out: Option<&Path>, threads: Option<usize>) -> Outcome {
    let manifest =
        RunManifest::read(path).map_err(|e| usage(e.context(format!("reading manifest {}", path.display()))))?;
    let mut invocation = manifest.invocation;
    if let Some(dir) = out {
        invocation.redirect(&absolute(dir));
    }
    if let Some(cfg) = &manifest.config {
        cfg.validate()?;
    }
    run(&invocation, manifest.config.as_ref(), threads)
}

pub fn absolute_path(path: &Path) -> PathBuf {
    absolute(path)
}
