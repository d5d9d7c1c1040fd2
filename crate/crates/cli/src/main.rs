use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use otgen::encoders::{EncoderConfig, EncoderKind};
use otgen::graph::{derive_seed, load_graph, read_matrix_csv, sample_split, write_graph, SbmSpec};
use otgen::harness::{self, GraphSource, RunConfig, RunSeeds};
use otgen::ot::{cost_matrix, solve_uniform_transport, sinkhorn_uniform, DEFAULT_MAX_ARCS};
use otgen::spectral::depth_diagnostics;
use otgen::{Error, Result};

#[derive(Parser)]
#[command(name = "otgen", version, about = "Transport-based generalization bounds for graph node classifiers")]
struct Cli {
    /// Log progress to stderr (repeat for more detail). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Encoder {
    Sgc,
    Gcn,
    Raw,
}

impl From<Encoder> for EncoderKind {
    fn from(e: Encoder) -> Self {
        match e {
            Encoder::Sgc => EncoderKind::Sgc,
            Encoder::Gcn => EncoderKind::Gcn,
            Encoder::Raw => EncoderKind::Raw,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OtSolver {
    Exact,
    Sinkhorn,
}

#[derive(clap::Args)]
struct Training {
    #[arg(long, default_value_t = 0.3)]
    train_fraction: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Compute every bound for one trained encoder and classifier.
    Bound {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "sgc")]
        encoder: Encoder,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// 1, 2 or 4.
        #[arg(long, default_value_t = 2)]
        clf_layers: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma_quantile: f64,
        /// Fixed margin threshold instead of the quantile rule.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0.9)]
        percentile: f64,
        #[arg(long, default_value_t = 4)]
        permutations: usize,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the class-wise bound that reads test labels.
        #[arg(long, value_enum, default_value = "on")]
        oracle_labels: Switch,
        #[command(flatten)]
        training: Training,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transport diagnostics and depth envelopes across depths, as CSV.
    DepthSweep {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "sgc")]
        encoder: Encoder,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        training: Training,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank correlation of each bound column of a report CSV with the gap.
    Correlate {
        #[arg(long)]
        input: PathBuf,
        /// Columns to correlate; defaults to the three bounds.
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
    },
    /// Write a stochastic block model dataset with its manifest.
    GenSbm {
        #[arg(long, value_delimiter = ',', required = true)]
        blocks: Vec<usize>,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 16)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        feature_shift: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "sbm")]
        name: String,
    },
    /// W1 between two point clouds given as headerless CSV files.
    OtCheck {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        solver: OtSolver,
        /// Entropic regularization for the Sinkhorn solver.
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long)]
        force: bool,
        /// Write the exact plan as i,j,mass rows.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Run an experiment grid from a JSON config and write the CSV report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Bound {
            graph,
            encoder,
            depth,
            clf_layers,
            gamma_quantile,
            gamma,
            percentile,
            permutations,
            delta,
            seed,
            oracle_labels,
            training,
            out,
        } => {
            let cfg = RunConfig {
                graph: GraphSource::Manifest(graph),
                encoder: encoder.into(),
                depths: vec![depth],
                clf_layers: vec![clf_layers],
                seeds: vec![seed],
                train_fraction: training.train_fraction,
                gamma_quantile,
                gamma,
                percentile,
                permutations,
                delta,
                hidden: training.hidden,
                epochs: training.epochs,
                lr: training.lr,
                oracle_labels: oracle_labels == Switch::On,
                ..Default::default()
            };
            let exp = harness::run_experiment(&cfg)?;
            if let Some(f) = exp.failures.first() {
                return Err(Error::InvalidArgument(format!("{}: {}", f.run_id, f.message)));
            }
            let json = serde_json::to_string_pretty(&exp.records[0].report)? + "\n";
            write_or_print(out.as_deref(), &json)
        }
        Command::DepthSweep {
            graph,
            encoder,
            depths,
            permutations,
            seed,
            training,
            out,
        } => {
            let g = load_graph::<f64>(&graph)?;
            let seeds = RunSeeds::derive(seed, 0, 0);
            let split = sample_split(g.num_nodes(), training.train_fraction, seeds.split)?;
            let kind: EncoderKind = encoder.into();
            let cfg = EncoderConfig {
                kind,
                hidden: training.hidden,
                epochs: training.epochs,
                lr: training.lr,
                seed: derive_seed(seed, &[1]),
            };
            let rows = depth_diagnostics(&g, &cfg, &depths, &split, permutations, seeds.permutations, &Default::default())?;
            let envelope = if kind == EncoderKind::Gcn { "envelope_gcn" } else { "envelope_sgc" };
            let file = std::fs::File::create(&out).map_err(|e| io_err(&out, e))?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(["depth", "W_G", "W_C", "W_S", envelope, "rho_perp", "C1", "C2", "beta"])?;
            for r in rows {
                w.serialize((r.depth, r.w_g, r.w_c, r.w_s, r.envelope, r.rho_perp, r.c1, r.c2, r.beta))?;
            }
            w.flush().map_err(|e| io_err(&out, e))
        }
        Command::Correlate { input, fields } => {
            let rows = harness::read_rows(&input)?;
            let fields = if fields.is_empty() {
                vec!["bound_global".into(), "bound_classwise".into(), "bound_classwise_approx".into()]
            } else {
                fields
            };
            for f in fields {
                match harness::correlate(&rows, &f) {
                    Ok(c) => {
                        let rho = c.rho.map_or("undefined".to_string(), |r| format!("{r:.4}"));
                        println!("{f}\trho={rho}\tused={}\texcluded={}", c.used, c.excluded);
                    }
                    Err(e) => println!("{f}\trho=undefined\t({e})"),
                }
            }
            Ok(())
        }
        Command::GenSbm {
            blocks,
            p_in,
            p_out,
            feature_dim,
            feature_shift,
            seed,
            out_dir,
            name,
        } => {
            let spec = SbmSpec { blocks, p_in, p_out, feature_dim, feature_shift, seed };
            let g = spec.generate::<f64>()?;
            let manifest = write_graph(&g, &out_dir, &name)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::OtCheck {
            a,
            b,
            solver,
            epsilon,
            max_iters,
            force,
            plan,
        } => {
            let pa = read_matrix_csv::<f64>(&a)?;
            let pb = read_matrix_csv::<f64>(&b)?;
            if pa.nrows() == 0 || pb.nrows() == 0 {
                return Err(Error::InvalidArgument("empty point set".into()));
            }
            let cost = cost_matrix(pa.view(), pb.view())?;
            match solver {
                OtSolver::Exact => {
                    let limit = if force { usize::MAX } else { DEFAULT_MAX_ARCS };
                    let p = solve_uniform_transport(cost.view(), limit)?;
                    println!("{}", p.cost);
                    if let Some(path) = plan {
                        let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                        let mut w = csv::Writer::from_writer(file);
                        w.write_record(["i", "j", "mass"])?;
                        for &(i, j, units) in &p.entries {
                            w.serialize((i, j, p.mass(units)))?;
                        }
                        w.flush().map_err(|e| io_err(&path, e))?;
                    }
                }
                OtSolver::Sinkhorn => {
                    let r = sinkhorn_uniform(cost.view(), epsilon, max_iters, 1e-9);
                    if !r.converged {
                        log::warn!("sinkhorn did not converge: marginal error {}", r.marginal_error);
                    }
                    println!("{}", r.cost);
                }
            }
            Ok(())
        }
        Command::Run { config, out, workers } => {
            let text = std::fs::read_to_string(&config).map_err(|e| io_err(&config, e))?;
            let mut cfg: RunConfig = serde_json::from_str(&text)?;
            if let GraphSource::Manifest(p) = &mut cfg.graph {
                if p.is_relative() {
                    *p = config.parent().unwrap_or(Path::new(".")).join(&*p);
                }
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::InvalidArgument("no output path: pass --out or set \"output\"".into()))?;
            let exp = harness::run_experiment(&cfg)?;
            let sidecar = harness::emit_report(&exp.rows(), &out, &cfg)?;
            for f in &exp.failures {
                eprintln!("failed: {} ({})", f.run_id, f.message);
            }
            eprintln!(
                "{} records -> {} (config {})",
                exp.records.len(),
                out.display(),
                sidecar.display()
            );
            Ok(())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
