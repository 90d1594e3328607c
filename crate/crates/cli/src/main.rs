use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sqim::dataset::{self, decode_dataset, encode_dataset, DatasetFile, DatasetKind};
use sqim::harness::{self, Axis, RunOptions, SweepSpec};
use sqim::io::{read_verified, write_with_checksum};
use sqim::pca::{fit_pca, PcaBasis};
use sqim::quantum::{
    measure_records, Gain, MeasurementSet, NoiseConvention, PortCount, SensingConfig,
};
use sqim::recon::{evaluate_records, export_for_neural, write_report_csv};
use sqim::svm::{accuracy, gamma_scale, train_multiclass, MulticlassModel, SvmParams};

#[derive(Parser)]
#[command(
    name = "sqim",
    version,
    about = "Squeezed-light image sensing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a raw dataset directory into train/validation/test files.
    Ingest {
        #[arg(long)]
        dataset: DatasetKind,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long = "n-s")]
        n_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit, crop and inspect PCA sensing bases
    #[command(subcommand)]
    Pca(PcaCommand),
    /// Project a dataset onto a basis and add measurement noise.
    Measure {
        #[command(flatten)]
        sensing: SensingArgs,
        #[arg(long)]
        g: Gain,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate the one-vs-one RBF SVM
    #[command(subcommand)]
    Svm(SvmCommand),
    /// Reconstruction metrics and measurement/truth export
    #[command(subcommand)]
    Recon(ReconCommand),
    /// Run experiment sweeps and summarize them as curves
    #[command(subcommand)]
    Sweep(SweepCommand),
}

#[derive(Subcommand)]
enum PcaCommand {
    /// Fit a k-component basis on a dataset file.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Restrict every component to its m largest-weight pixels.
    Crop {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the explained-variance table of a basis.
    Info {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct SensingArgs {
    #[arg(long)]
    basis: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = NoiseConvention::Quadrature)]
    convention: NoiseConvention,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum SvmCommand {
    /// Train a one-vs-one RBF SVM on a measurement file.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Kernel width; defaults to 1 / (k · feature variance).
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Stratified training subsample size (0 = all).
        #[arg(long, default_value_t = 0)]
        subsample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a measurement file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReconCommand {
    /// Reconstruction MSE and PSNR for each gain.
    Eval {
        #[command(flatten)]
        sensing: SensingArgs,
        #[arg(long = "g-list", value_delimiter = ',', required = true)]
        g_list: Vec<Gain>,
        /// Must match the photon budget the dataset was normalized to.
        #[arg(long = "n-s")]
        n_s: Option<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write a measurement file and its ground-truth file.
    Export {
        #[command(flatten)]
        sensing: SensingArgs,
        #[arg(long)]
        g: Gain,
        #[arg(long = "out-measure")]
        out_measure: PathBuf,
        #[arg(long = "out-truth")]
        out_truth: PathBuf,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Run every cell of a sweep spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seed-averaged curves along one axis of a finished sweep.
    Curves {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_dataset(path: &Path) -> Result<DatasetFile> {
    let bytes = read_verified(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(decode_dataset(&bytes)?)
}

fn load_basis(path: &Path) -> Result<PcaBasis> {
    let bytes = read_verified(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(PcaBasis::decode(&bytes)?)
}

fn load_measurements(path: &Path) -> Result<MeasurementSet> {
    let bytes = read_verified(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(MeasurementSet::decode(&bytes)?)
}

/// Port count of a basis: the widest cropped support, or full.
fn port_count(basis: &PcaBasis) -> PortCount {
    match basis.crop_mask() {
        None => PortCount::Full,
        Some(mask) => {
            let d = basis.dim();
            let widest = mask
                .chunks(d)
                .map(|col| col.iter().filter(|&&b| b).count())
                .max();
            PortCount::Ports(widest.unwrap_or(d))
        }
    }
}

fn sensing_config(
    basis: &PcaBasis,
    data: &DatasetFile,
    gain: Gain,
    args: &SensingArgs,
) -> SensingConfig {
    SensingConfig {
        k: basis.k(),
        m: port_count(basis),
        gain,
        n_s: data.photon_budget,
        convention: args.convention,
        seed: args.seed,
    }
}

fn ingest(kind: DatasetKind, dir: &Path, n_s: f64, seed: u64, out: &Path) -> Result<()> {
    let split = dataset::ingest(kind, dir, n_s, seed)?;
    fs::create_dir_all(out)?;
    for (name, records) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        if records.is_empty() {
            continue;
        }
        let path = out.join(format!("{name}.qds"));
        write_with_checksum(&path, &encode_dataset(records, n_s, seed)?)?;
        println!("{name}: {} images -> {}", records.len(), path.display());
    }
    Ok(())
}

fn pca(cmd: PcaCommand) -> Result<()> {
    match cmd {
        PcaCommand::Fit { input, k, out } => {
            let data = load_dataset(&input)?;
            let basis = fit_pca(&data.records, k)?;
            write_with_checksum(&out, &basis.encode())?;
            println!(
                "fit {k} components on {} images; explained variance {:.6}",
                data.records.len(),
                basis.explained_variance(k)?
            );
        }
        PcaCommand::Crop { input, m, out } => {
            let basis = load_basis(&input)?.crop(m)?;
            write_with_checksum(&out, &basis.encode())?;
        }
        PcaCommand::Info { input } => {
            let basis = load_basis(&input)?;
            println!(
                "d = {}, k = {}, ports = {}",
                basis.dim(),
                basis.k(),
                port_count(&basis)
            );
            println!("{:>4} {:>16} {:>10}", "k", "eigenvalue", "explained");
            for k in 1..=basis.k() {
                println!(
                    "{k:>4} {:>16.8e} {:>10.6}",
                    basis.eigenvalues()[k - 1],
                    basis.explained_variance(k)?
                );
            }
        }
    }
    Ok(())
}

fn measure(args: &SensingArgs, gain: Gain, out: &Path) -> Result<()> {
    let basis = load_basis(&args.basis)?;
    let data = load_dataset(&args.input)?;
    let config = sensing_config(&basis, &data, gain, args);
    let set = measure_records(&basis, &data.records, &config)?;
    write_with_checksum(out, &set.encode()?)?;
    Ok(())
}

fn svm(cmd: SvmCommand) -> Result<()> {
    match cmd {
        SvmCommand::Train {
            input,
            c,
            gamma,
            tol,
            subsample,
            seed,
            out,
        } => {
            let set = load_measurements(&input)?;
            let (features, labels) = if subsample > 0 && subsample < set.len() {
                let picked = dataset::stratified_subsample(&set.labels, subsample, seed);
                (
                    picked
                        .iter()
                        .map(|&i| set.features[i].clone())
                        .collect::<Vec<_>>(),
                    picked.iter().map(|&i| set.labels[i]).collect::<Vec<_>>(),
                )
            } else {
                (set.features.clone(), set.labels.clone())
            };
            let gamma = match gamma {
                Some(g) => g,
                None => gamma_scale(&features)?,
            };
            let params = SvmParams {
                c,
                tol,
                ..SvmParams::new(gamma)
            };
            let model = train_multiclass(&features, &labels, &params)?;
            write_with_checksum(&out, &model.encode())?;
            println!(
                "trained on {} samples: gamma {gamma:.6e}, {} support vectors",
                features.len(),
                model.support_vector_count()
            );
        }
        SvmCommand::Eval {
            model,
            input,
            report,
        } => {
            let model = MulticlassModel::decode(&read_verified(&model)?)?;
            let set = load_measurements(&input)?;
            let predicted = model.predict_batch(&set.features)?;
            let acc = accuracy(&predicted, &set.labels);
            fs::write(
                &report,
                format!("metric,value\naccuracy,{acc:?}\ncount,{}\n", set.len()),
            )?;
            println!("accuracy {:.4} on {} samples", acc, set.len());
        }
    }
    Ok(())
}

fn recon(cmd: ReconCommand) -> Result<()> {
    match cmd {
        ReconCommand::Eval {
            sensing,
            g_list,
            n_s,
            report,
        } => {
            let basis = load_basis(&sensing.basis)?;
            let data = load_dataset(&sensing.input)?;
            if let Some(n_s) = n_s {
                if n_s != data.photon_budget {
                    bail!(
                        "--n-s {n_s} does not match the dataset photon budget {}; re-ingest with --n-s {n_s}",
                        data.photon_budget
                    );
                }
            }
            let configs: Vec<SensingConfig> = g_list
                .iter()
                .map(|&g| sensing_config(&basis, &data, g, &sensing))
                .collect();
            let reports = evaluate_records(&basis, &data.records, &configs)?;
            write_report_csv(&reports, fs::File::create(&report)?)?;
            for r in &reports {
                println!(
                    "G = {:>5}: mean MSE {:.6e}, PSNR {:.3} dB",
                    r.gain.to_string(),
                    r.mean_mse,
                    r.mean_psnr
                );
            }
        }
        ReconCommand::Export {
            sensing,
            g,
            out_measure,
            out_truth,
        } => {
            let basis = load_basis(&sensing.basis)?;
            let data = load_dataset(&sensing.input)?;
            let config = sensing_config(&basis, &data, g, &sensing);
            let set = measure_records(&basis, &data.records, &config)?;
            export_for_neural(&set, &data.records, &out_measure, &out_truth)?;
        }
    }
    Ok(())
}

fn sweep(cmd: SweepCommand) -> Result<()> {
    match cmd {
        SweepCommand::Run { spec, out } => {
            let text =
                fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut spec_parsed = SweepSpec::parse(&text)?;
            if let Some(dir) = &spec_parsed.data_dir {
                if dir.is_relative() {
                    let base = spec.parent().unwrap_or(Path::new("."));
                    if !dir.exists() && base.join(dir).exists() {
                        spec_parsed.data_dir = Some(base.join(dir));
                    }
                }
            }
            let split = spec_parsed.load_data()?;
            fs::create_dir_all(&out)?;
            let opts = RunOptions {
                out_dir: Some(&out),
                basis: None,
            };
            let result = harness::run_sweep(&spec_parsed, &split, &opts)?;
            println!(
                "{} rows written to {}",
                result.rows.len(),
                out.join("results.csv").display()
            );
        }
        SweepCommand::Curves { input, axis, out } => {
            let result = harness::read_results(&input)?;
            let path = harness::write_curves(&result, axis, &out)?;
            println!("curves written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ingest {
            dataset,
            dir,
            n_s,
            seed,
            out,
        } => ingest(dataset, &dir, n_s, seed, &out),
        Command::Pca(cmd) => pca(cmd),
        Command::Measure { sensing, g, out } => measure(&sensing, g, &out),
        Command::Svm(cmd) => svm(cmd),
        Command::Recon(cmd) => recon(cmd),
        Command::Sweep(cmd) => sweep(cmd),
    }
}
