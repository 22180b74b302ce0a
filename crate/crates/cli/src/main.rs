mod config;
mod csvio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cde_core::data::{gen_toy, load_csv, minmax_apply, minmax_fit_apply, minmax_invert, split, ToyKind};
use cde_core::model_io::{load_model, save_model, ModelFile};
use cde_core::sampler::sample_data;
use cde_core::tasks::{anomaly_detect, impute_missing, regression_mae, score_rows, ImputeConfig, ImputeInit};
use cde_core::train::train;
use cde_core::{Matrix, TrainConfig};

#[derive(Parser)]
#[command(name = "cde", version, about = "Compressed-domain density estimation pipeline")]
struct Cli {
    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 3-D manifold dataset as CSV.
    GenData {
        /// swiss_roll | s_curve | fishbowl
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder and latent density jointly; writes a model file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Flat key=value config file; flags override its entries.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-iteration loss curve CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Architecture preset name or dash-separated encoder widths.
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        lr_net: Option<f64>,
        #[arg(long)]
        lr_tensor: Option<f64>,
        #[arg(long)]
        lr_lambda: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        pretrain_epochs: Option<usize>,
        #[arg(long)]
        pretrain_lr: Option<f64>,
        #[arg(long)]
        eps_floor: Option<f64>,
        /// Fourier truncation K.
        #[arg(long)]
        k: Option<usize>,
        /// CPD rank F.
        #[arg(long)]
        f: Option<usize>,
        /// Latent dimensionality D.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long)]
        val_every: Option<usize>,
        /// Freeze an identity encoder/decoder and train only the density.
        #[arg(long)]
        identity_bypass: bool,
        /// Raw [-1, 1] weight init instead of width-scaled ranges.
        #[arg(long)]
        raw_init: bool,
    },
    /// Draw synthetic samples from a trained model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the latent draws for diagnostics.
        #[arg(long)]
        latent_out: Option<PathBuf>,
        /// Keep samples in normalized [0,1] units.
        #[arg(long)]
        normalized: bool,
    },
    /// Per-row latent log-likelihood scores.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill empty CSV cells by density ascent over the missing coordinates.
    Impute {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        step_size: f64,
        /// observed | zeros | mean (mean requires --train-data)
        #[arg(long, default_value = "observed")]
        init: String,
        /// Training CSV for column-mean initialization.
        #[arg(long)]
        train_data: Option<PathBuf>,
    },
    /// Score a labeled test set and report precision/recall/F1.
    EvalAnomaly {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Label column index; defaults to the last column.
        #[arg(long)]
        label_col: Option<usize>,
        /// Fraction of rows to flag; defaults to the labeled anomaly rate.
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mask a target column, impute it, and report the MAE.
    EvalRegression {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        step_size: f64,
        /// Training CSV for the mean initialization; defaults to the test data.
        #[arg(long)]
        train_data: Option<PathBuf>,
    },
    /// Print mixture weights and the spectrum decay diagnostic.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: thread pool already initialized");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), String>;

fn load_model_at(path: &std::path::Path) -> Result<ModelFile, String> {
    load_model(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_csv_at(path: &std::path::Path, label: Option<usize>) -> Result<cde_core::Dataset, String> {
    load_csv(path, label).map_err(|e| format!("{}: {e}", path.display()))
}

fn core_err(e: cde_core::Error) -> String {
    e.to_string()
}

fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> String + '_ {
    move |e| format!("{}: {e}", path.display())
}

fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::GenData { kind, n, noise, seed, out } => {
            let kind = ToyKind::parse(&kind).map_err(core_err)?;
            let ds = gen_toy(kind, n, noise, seed).map_err(core_err)?;
            csvio::write_matrix(&out, None, &ds.data).map_err(io_err(&out))?;
            println!("wrote {} rows to {}", ds.rows(), out.display());
            Ok(())
        }
        Command::Train {
            data, out, config, metrics, arch,
            mu, rho, lr_net, lr_tensor, lr_lambda, batch, max_iter, patience,
            pretrain_epochs, pretrain_lr, eps_floor, k, f, d, seed,
            val_fraction, val_every, identity_bypass, raw_init,
        } => {
            let mut cfg = TrainConfig::default();
            let mut arch_name = String::from("toy3d");
            if let Some(path) = config {
                let map = config::parse_config_file(&path)?;
                config::apply_config(&mut cfg, &mut arch_name, &map)?;
            }
            macro_rules! over {
                ($($flag:ident => $field:ident),*) => {
                    $(if let Some(v) = $flag { cfg.$field = v; })*
                };
            }
            over!(mu => mu, rho => rho, lr_net => lr_net, lr_tensor => lr_tensor,
                  lr_lambda => lr_lambda, batch => batch, max_iter => max_iter,
                  patience => patience, pretrain_epochs => pretrain_epochs,
                  pretrain_lr => pretrain_lr, eps_floor => eps_floor,
                  k => k_cutoff, f => rank, d => d_latent, seed => seed,
                  val_fraction => val_fraction, val_every => val_every);
            if identity_bypass {
                cfg.identity_bypass = true;
            }
            if raw_init {
                cfg.raw_init = true;
            }
            if let Some(a) = arch {
                arch_name = a;
            }

            let ds = load_csv_at(&data, None)?;
            let ds = minmax_fit_apply(ds);
            let (mins, maxs) = (ds.column_min.clone(), ds.column_max.clone());
            if cfg.identity_bypass {
                cfg.d_latent = ds.cols();
            } else {
                let (enc, dec) = config::build_arch(&arch_name)?;
                if enc[0].in_width != ds.cols() {
                    return Err(format!(
                        "architecture expects {} input columns, data has {}",
                        enc[0].in_width,
                        ds.cols()
                    ));
                }
                cfg.d_latent = enc.last().unwrap().out_width;
                cfg.encoder = enc;
                cfg.decoder = dec;
            }
            let parts = split(&ds, &[1.0 - cfg.val_fraction, cfg.val_fraction], cfg.seed)
                .map_err(core_err)?;
            let (net, dens, report) = train(&parts[0].data, &parts[1].data, &cfg).map_err(core_err)?;

            let mf = ModelFile {
                version: cde_core::model_io::VERSION,
                net,
                density: dens,
                column_min: mins,
                column_max: maxs,
                config: cfg,
            };
            save_model(&out, &mf).map_err(core_err)?;

            if let Some(mpath) = metrics {
                let vals: std::collections::BTreeMap<usize, f64> =
                    report.val_curve.iter().copied().collect();
                let mut lines = vec![String::from("iteration,rec,nll,frob,val")];
                for rec in &report.iterations {
                    let val = vals
                        .get(&rec.iteration)
                        .map(|v| v.to_string())
                        .unwrap_or_default();
                    lines.push(format!("{},{},{},{},{val}", rec.iteration, rec.rec, rec.nll, rec.frob));
                }
                csvio::write_lines(&mpath, &lines).map_err(io_err(&mpath))?;
            }
            println!(
                "trained to iteration {} ({:?}); best validation {:.6}; model {}",
                report.final_iteration,
                report.stopping,
                report.best_val,
                out.display()
            );
            Ok(())
        }
        Command::Sample { model, n, seed, out, latent_out, normalized } => {
            let mf = load_model_at(&model)?;
            let (z, mut x) = sample_data(&mf.net, &mf.density, n, seed).map_err(core_err)?;
            if !normalized {
                minmax_invert(&mut x, &mf.column_min, &mf.column_max);
            }
            csvio::write_matrix(&out, None, &x).map_err(io_err(&out))?;
            if let Some(lpath) = latent_out {
                csvio::write_matrix(&lpath, None, &z).map_err(io_err(&lpath))?;
            }
            println!("wrote {n} samples to {}", out.display());
            Ok(())
        }
        Command::Score { model, data, out } => {
            let mf = load_model_at(&model)?;
            let ds = load_csv_at(&data, None)?;
            let ds = minmax_apply(ds, &mf.column_min, &mf.column_max);
            let scores =
                score_rows(&mf.net, &mf.density, &ds.data, mf.config.eps_floor).map_err(core_err)?;
            let mut lines = vec![String::from("row,score")];
            for (i, s) in scores.iter().enumerate() {
                lines.push(format!("{i},{s}"));
            }
            csvio::write_lines(&out, &lines).map_err(io_err(&out))?;
            println!("scored {} rows to {}", scores.len(), out.display());
            Ok(())
        }
        Command::Impute { model, data, out, steps, step_size, init, train_data } => {
            let mf = load_model_at(&model)?;
            let text = std::fs::read_to_string(&data).map_err(io_err(&data))?;
            let (rows, header) = csvio::parse_missing_csv(&text)?;
            let n = rows[0].len();
            if n != mf.column_min.len() {
                return Err(format!(
                    "model expects {} columns, data has {n}",
                    mf.column_min.len()
                ));
            }
            let init = match init.as_str() {
                "observed" => ImputeInit::ObservedCopy,
                "zeros" => ImputeInit::Zeros,
                "mean" => {
                    let tpath = train_data
                        .ok_or("--init mean requires --train-data")?;
                    let tds = load_csv_at(&tpath, None)?;
                    let tds = minmax_apply(tds, &mf.column_min, &mf.column_max);
                    ImputeInit::TrainMean(column_means(&tds.data))
                }
                other => return Err(format!("unknown init {other}")),
            };
            let mut out_rows = Vec::with_capacity(rows.len());
            let mut filled = 0usize;
            for row in &rows {
                let mask: Vec<bool> = row.iter().map(Option::is_some).collect();
                if mask.iter().all(|&m| m) {
                    out_rows.push(row.iter().map(|v| v.unwrap()).collect::<Vec<f64>>());
                    continue;
                }
                // normalize observed cells with the stored training ranges
                let obs: Vec<f64> = row
                    .iter()
                    .enumerate()
                    .map(|(c, v)| match v {
                        Some(x) => norm_cell(*x, mf.column_min[c], mf.column_max[c]),
                        None => 0.0,
                    })
                    .collect();
                let icfg = ImputeConfig { steps, step_size, init: init.clone(), mask: mask.clone() };
                let done = impute_missing(&mf.net, &mf.density, &obs, &icfg, mf.config.eps_floor)
                    .map_err(core_err)?;
                let mut full = Vec::with_capacity(n);
                for c in 0..n {
                    match row[c] {
                        Some(x) => full.push(x),
                        None => full.push(denorm_cell(done[c], mf.column_min[c], mf.column_max[c])),
                    }
                }
                filled += 1;
                out_rows.push(full);
            }
            csvio::write_matrix(&out, header.as_deref(), &Matrix::from_rows(out_rows))
                .map_err(io_err(&out))?;
            println!("imputed {filled} incomplete rows to {}", out.display());
            Ok(())
        }
        Command::EvalAnomaly { model, data, label_col, ratio, out } => {
            let mf = load_model_at(&model)?;
            let probe = load_csv_at(&data, None)?;
            let lcol = label_col.unwrap_or(probe.cols() - 1);
            let ds = load_csv_at(&data, Some(lcol))?;
            let labels = ds.labels.clone().ok_or("label column missing")?;
            let ds = minmax_apply(ds, &mf.column_min, &mf.column_max);
            let ratio = match ratio {
                Some(r) => r,
                None => labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64,
            };
            let res = anomaly_detect(&mf.net, &mf.density, &ds.data, &labels, ratio, mf.config.eps_floor)
                .map_err(core_err)?;
            if let Some(opath) = out {
                let mut lines = vec![String::from("row,score,flag,label")];
                for i in 0..res.scores.len() {
                    lines.push(format!(
                        "{i},{},{},{}",
                        res.scores[i],
                        res.flags[i] as u8,
                        labels[i]
                    ));
                }
                csvio::write_lines(&opath, &lines).map_err(io_err(&opath))?;
            }
            println!(
                "precision={:.4} recall={:.4} f1={:.4} threshold={:.6}",
                res.precision, res.recall, res.f1, res.threshold
            );
            Ok(())
        }
        Command::EvalRegression { model, data, target, steps, step_size, train_data } => {
            let mf = load_model_at(&model)?;
            let ds = load_csv_at(&data, None)?;
            let ds = minmax_apply(ds, &mf.column_min, &mf.column_max);
            let means = match train_data {
                Some(tpath) => {
                    let tds = load_csv_at(&tpath, None)?;
                    let tds = minmax_apply(tds, &mf.column_min, &mf.column_max);
                    column_means(&tds.data)
                }
                None => column_means(&ds.data),
            };
            let mae = regression_mae(
                &mf.net,
                &mf.density,
                &ds.data,
                target,
                steps,
                step_size,
                &means,
                mf.config.eps_floor,
            )
            .map_err(core_err)?;
            println!("mae={mae:.6} (normalized units, column {target})");
            Ok(())
        }
        Command::Inspect { model } => {
            let mf = load_model_at(&model)?;
            let d = &mf.density;
            println!(
                "model: D={} K={} F={} | encoder {} layers, decoder {} layers",
                d.d_latent,
                d.k_cutoff,
                d.rank,
                mf.net.encoder.len(),
                mf.net.decoder.len()
            );
            println!("mixture weights:");
            for (f, l) in d.lambda.iter().enumerate() {
                let bar = "#".repeat((l * 60.0).round() as usize);
                println!("  {f:3}  {l:.4}  {bar}");
            }
            println!("spectrum decay (mean coefficient magnitude per harmonic):");
            for (dim, row) in d.decay_diagnostic().iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                println!("  dim {dim}: {}", cells.join(" "));
            }
            Ok(())
        }
    }
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let mut means = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (c, v) in m.row(r).iter().enumerate() {
            means[c] += v;
        }
    }
    for v in &mut means {
        *v /= m.rows as f64;
    }
    means
}

fn norm_cell(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((x - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

fn denorm_cell(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        min + x * (max - min)
    } else {
        min
    }
}
