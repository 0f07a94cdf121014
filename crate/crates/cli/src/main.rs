use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use impression_audit::fixture::{cmd_fixture, FixtureKind};
use impression_audit::tools::{cmd_cat, cmd_cluster, cmd_frobenius, emb_inspect};
use impression_audit::{
    cmd_audit, cmd_probe, cmd_regress, with_threads, AnalysisOptions, AuditConfig, CliError,
    CliResult, OptionOverrides, ProbeConfig,
};
use impression_core::corpus::RatingScale;
use impression_core::stats::{CorrelationMethod, DMode};
use impression_core::structure::Linkage;

/// Audit vision-language embeddings for human-like facial impression biases.
#[derive(Parser)]
#[command(name = "impression-audit", version)]
struct Cli {
    /// Audit or probe configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-model and per-attribute work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Dendrogram linkage: average, complete or single.
    #[arg(long, global = true)]
    linkage: Option<Linkage>,
    /// Cohen's d variant: pooled or paired.
    #[arg(long = "d-mode", global = true)]
    d_mode: Option<DMode>,
    /// Correlation used against inter-rater reliability: spearman or pearson.
    #[arg(long = "irr-method", global = true)]
    irr_method: Option<CorrelationMethod>,
    /// Ridge penalty for subspace fits.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full audit of every model in --config.
    Audit,
    /// Regress model-human similarity on IRR and model scale.
    Regress {
        #[arg(long)]
        similarities: PathBuf,
        #[arg(long)]
        irr: PathBuf,
        #[arg(long)]
        meta: PathBuf,
    },
    /// Fit attribute subspaces and score generated images (--config).
    Probe,
    /// Correlated-attribute matrix for one model.
    Cat {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        /// Attribute prompt config; the built-in set when absent.
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
    /// Cluster a saved correlation matrix into a Newick dendrogram.
    Cluster {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Normalized Frobenius similarity of two saved correlation matrices.
    Frobenius { a: PathBuf, b: PathBuf },
    /// EMB1 embedding file utilities.
    Emb {
        #[command(subcommand)]
        command: EmbCommand,
    },
    /// Write a seeded synthetic fixture and a matching config.
    Fixture {
        #[arg(long, value_enum, default_value_t = FixtureKind::Corpus)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of models in a corpus fixture.
        #[arg(long, default_value_t = 1)]
        models: usize,
    },
}

#[derive(Subcommand)]
enum EmbCommand {
    /// Summarize an EMB1 file.
    Inspect { path: PathBuf },
}

impl Cli {
    fn overrides(&self) -> OptionOverrides {
        OptionOverrides {
            linkage: self.linkage,
            d_mode: self.d_mode,
            irr_method: self.irr_method,
            ridge_lambda: self.lambda,
        }
    }

    fn require_config(&self) -> CliResult<&Path> {
        self.config
            .as_deref()
            .ok_or_else(|| CliError::Input("this command needs --config <path>".into()))
    }

    fn require_out(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Input("this command needs --out <dir>".into()))
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Audit => {
            let mut config = AuditConfig::load(cli.require_config()?)?;
            config.options.apply(&cli.overrides());
            if let Some(out) = &cli.out {
                config.output_dir = Some(out.clone());
            }
            let report = with_threads(cli.threads, || cmd_audit(&config))??;
            for m in &report.models {
                println!(
                    "{}: mean similarity {:.4}, frobenius {:.4}",
                    m.model_id, m.mean_similarity, m.frobenius
                );
            }
            let out = config.output_dir.as_deref().expect("set before the audit ran");
            println!("reports written to {}", out.display());
        }
        Command::Regress {
            similarities,
            irr,
            meta,
        } => {
            let out = cli.require_out()?;
            let r = with_threads(cli.threads, || cmd_regress(similarities, irr, meta, out))??;
            println!("n = {}, adj R² = {:.4}, F = {:.4}", r.n, r.adj_r2, r.f_statistic);
            for c in &r.coefficients {
                println!("{:>14} {:>10.4} (p = {:.4})", c.name, c.coef, c.p);
            }
        }
        Command::Probe => {
            let mut config = ProbeConfig::load(cli.require_config()?)?;
            config.options.apply(&cli.overrides());
            if let Some(out) = &cli.out {
                config.output_dir = Some(out.clone());
            }
            let report = with_threads(cli.threads, || cmd_probe(&config))??;
            for m in &report.metrics {
                println!("{}: F1 {:.4}", m.attribute, m.f1);
            }
            for b in &report.differential_bias {
                println!("{}: d {:.4}, p {:.4}", b.attribute, b.d, b.p);
            }
        }
        Command::Cat {
            images,
            text,
            ratings,
            attributes,
        } => {
            let scale = match &cli.config {
                Some(p) => AuditConfig::load(p)?.options.scale,
                None => RatingScale::default(),
            };
            let c = with_threads(cli.threads, || {
                cmd_cat(images, text, ratings, attributes.as_deref(), scale, cli.out.as_deref())
            })??;
            if cli.out.is_none() {
                print!("{}", c.to_csv());
            }
        }
        Command::Cluster { matrix } => {
            let linkage = cli.linkage.unwrap_or(AnalysisOptions::default().linkage);
            let tree = cmd_cluster(matrix, linkage, cli.out.as_deref())?;
            println!("{tree}");
        }
        Command::Frobenius { a, b } => println!("{}", cmd_frobenius(a, b)?),
        Command::Emb {
            command: EmbCommand::Inspect { path },
        } => print_json(&emb_inspect(path)?)?,
        Command::Fixture { kind, seed, models } => {
            for p in cmd_fixture(*kind, *seed, *models, cli.require_out()?)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal error (panic)");
            ExitCode::from(4)
        }
    }
}
