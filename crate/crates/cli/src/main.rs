//! `regionlets` binary.
//!
//! Exit codes: 0 success, 1 a check failed or training diverged, 2 usage or
//! I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use regionlets::geometry::{denormalize, generate_grid, ProjectiveTransform, RegionOfInterest};
use regionlets::Real;
use regionlets_cli::config::{parse_config, print_config};
use regionlets_cli::gradcheck::{self, GradcheckSettings};
use regionlets_cli::tensorfile::{Payload, TensorFile};
use toybench::{ablation_table, run_ablation, train, TrainConfig};

#[derive(Parser)]
#[command(name = "regionlets", version, about = "Learned-region feature extraction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Compare analytic sampling gradients against central differences.
    Gradcheck {
        /// Number of random cases.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Train the synthetic-shapes detector.
    Train {
        /// key = value file; defaults apply for omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the learned parameters as a tensor file.
        #[arg(long)]
        params_out: Option<PathBuf>,
        /// Write the per-epoch report as a tensor file.
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Train once per head mode on a shared seed and print the comparison.
    Ablation {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the printed table to a file.
        #[arg(long)]
        table_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Write the absolute sample coordinates for one window and transform
    /// as an `out-h x out-w x 2` tensor file.
    Dumpgrid {
        /// Eight comma-separated free transform entries, row-major.
        #[arg(long, default_value = "1,0,0,0,1,0,0,0")]
        theta: String,
        /// Window as x0,y0,w,h in feature-map pixels.
        #[arg(long, default_value = "0,0,5,5")]
        roi: String,
        #[arg(long, default_value_t = 5)]
        out_h: usize,
        #[arg(long, default_value_t = 5)]
        out_w: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Gradcheck {
            cases,
            seed,
            precision,
        } => cmd_gradcheck(cases, seed, precision),
        Command::Train {
            config,
            params_out,
            report_out,
            precision,
        } => {
            let cfg = load_config(config.as_deref())?;
            match precision {
                Precision::F64 => train_with::<f64>(&cfg, params_out.as_deref(), report_out.as_deref()),
                Precision::F32 => train_with::<f32>(&cfg, params_out.as_deref(), report_out.as_deref()),
            }
        }
        Command::Ablation {
            config,
            table_out,
            precision,
        } => {
            let cfg = load_config(config.as_deref())?;
            match precision {
                Precision::F64 => ablation_with::<f64>(&cfg, table_out.as_deref()),
                Precision::F32 => ablation_with::<f32>(&cfg, table_out.as_deref()),
            }
        }
        Command::Dumpgrid {
            theta,
            roi,
            out_h,
            out_w,
            out,
        } => cmd_dumpgrid(&theta, &roi, out_h, out_w, &out),
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text)
        }
    }
}

fn cmd_gradcheck(cases: usize, seed: u64, precision: Precision) -> Result<u8> {
    if cases == 0 {
        bail!("--cases must be positive");
    }
    let (settings, outcome) = match precision {
        Precision::F64 => {
            let s = GradcheckSettings::for_f64(cases, seed);
            let o = gradcheck::run::<f64>(&s)?;
            (s, o)
        }
        Precision::F32 => {
            let s = GradcheckSettings::for_f32(cases, seed);
            let o = gradcheck::run::<f32>(&s)?;
            (s, o)
        }
    };
    let floor = if settings.abs_tol > 0.0 {
        format!(" or abs <= {:.0e}", settings.abs_tol)
    } else {
        String::new()
    };
    println!(
        "{} cases in {:.2?}: max rel err {:.3e} (theta) {:.3e} (input), pass rel <= {:.0e}{}",
        outcome.cases,
        outcome.elapsed,
        outcome.max_theta_rel,
        outcome.max_input_rel,
        settings.rel_tol,
        floor,
    );
    if outcome.passed() {
        println!("gradcheck passed");
        Ok(0)
    } else {
        println!(
            "gradcheck FAILED: {} gradient components out of tolerance",
            outcome.failures
        );
        Ok(1)
    }
}

fn payload_of<T: Real>(data: Vec<T>) -> Payload {
    // the two scalar types the crate exposes
    if std::mem::size_of::<T>() == 4 {
        Payload::F32(data.iter().map(|v| v.into_f64() as f32).collect())
    } else {
        Payload::F64(data.iter().map(|v| v.into_f64()).collect())
    }
}

fn train_with<T: Real>(
    cfg: &TrainConfig,
    params_out: Option<&Path>,
    report_out: Option<&Path>,
) -> Result<u8> {
    print!("{}", print_config(cfg));
    let (report, mut model) = match train::<T>(cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("training failed: {e}");
            return Ok(1);
        }
    };
    for (i, (loss, acc)) in report
        .epoch_losses
        .iter()
        .zip(&report.epoch_accuracies)
        .enumerate()
    {
        println!("epoch {:>3}  loss {:>10.6}  accuracy {:.4}", i + 1, loss, acc);
    }
    println!("{}", report.summary());
    if let Some(path) = params_out {
        let values = model.parameter_values();
        let file = TensorFile {
            dims: vec![values.len() as u64],
            payload: payload_of(values.data().to_vec()),
        };
        file.write_to(path)?;
        println!("params -> {}", path.display());
    }
    if let Some(path) = report_out {
        let flat = report.to_flat();
        TensorFile::f64(vec![flat.len() as u64], flat)?.write_to(path)?;
        println!("report -> {}", path.display());
    }
    Ok(0)
}

fn ablation_with<T: Real>(cfg: &TrainConfig, table_out: Option<&Path>) -> Result<u8> {
    let rows = match run_ablation::<T>(cfg) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("ablation failed: {e}");
            return Ok(1);
        }
    };
    let table = ablation_table(&rows);
    print!("{table}");
    if let Some(path) = table_out {
        fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn parse_floats(text: &str, expect: usize, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != expect {
        bail!("{what}: expected {expect} comma-separated numbers, got {}", parts.len());
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .with_context(|| format!("{what}: bad number {p:?}"))
        })
        .collect()
}

fn cmd_dumpgrid(theta: &str, roi: &str, out_h: usize, out_w: usize, out: &Path) -> Result<u8> {
    if out_h == 0 || out_w == 0 {
        bail!("--out-h and --out-w must be positive");
    }
    let t = parse_floats(theta, 8, "--theta")?;
    let r = parse_floats(roi, 4, "--roi")?;
    let roi = RegionOfInterest::new(r[0], r[1], r[2], r[3])
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let transform = ProjectiveTransform::from_free([t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]]);
    let points = generate_grid(&transform, out_h, out_w);
    let mut data = Vec::with_capacity(points.len() * 2);
    let mut clamped = 0usize;
    for p in &points {
        let (x, y) = denormalize(p.xs, p.ys, &roi);
        data.push(x);
        data.push(y);
        clamped += p.clamped as usize;
    }
    TensorFile::f64(vec![out_h as u64, out_w as u64, 2], data)?.write_to(out)?;
    println!(
        "grid {}x{} -> {} ({} clamped divisors)",
        out_h,
        out_w,
        out.display(),
        clamped
    );
    Ok(0)
}
