use std::collections::HashSet;
use std::io::IsTerminal;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use sare_core::dataset::{self, EmbeddingStore, TextItem};
use sare_core::evaluate::write_evaluation;
use sare_core::gateway::Gateway;
use sare_core::kb::generate_descriptions;
use sare_core::service::{self, ServiceState};
use sare_core::synthetic::{self, SyntheticConfig};
use sare_core::{build_knowledge_bases, classify, evaluate, io, BackendSpec, EngineConfig, Error, KnowledgeBase, Result};

#[derive(Parser)]
#[command(name = "sare", version, about = "Adaptive retrieval/reasoning classifier")]
struct Cli {
    /// Reasoning backend: none, mock:<rules.json>, http[:<url>], chat:<url>.
    #[arg(long, global = true, default_value = "http")]
    backend: BackendSpec,

    /// More log output (repeatable). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the prototype, statistics, and experience libraries.
    BuildKb {
        #[arg(long)]
        support: PathBuf,
        /// Sample and description embeddings.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        kshot: usize,
        /// Test manifest; the build refuses support ids that appear in it.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        capacity: usize,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Generate category descriptions and a text manifest for the embedder.
    Describe {
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        support: PathBuf,
        /// Updated categories file.
        #[arg(long)]
        out: PathBuf,
        /// JSONL of {"id", "text"} to embed, one line per category.
        #[arg(long)]
        texts: PathBuf,
        /// Regenerate descriptions that already exist.
        #[arg(long)]
        overwrite: bool,
    },
    /// Classify one sample and print the prediction JSON.
    Classify {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long)]
        embeddings: PathBuf,
        /// Manifest to look up the sample's image ref.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Classify a labeled test set and write a metrics report.
    Evaluate {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Serve /classify, /stats and /healthz over HTTP.
    Serve {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write a seeded synthetic dataset and an oracle mock rules file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        categories: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 3)]
        kshot: usize,
        #[arg(long, default_value_t = 10)]
        test_per_category: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// Acceptance threshold; accepts inf and -inf.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Candidates kept from retrieval.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    e_max: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Evaluation worker threads.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Abort on backend errors instead of falling back to the top-1.
    #[arg(long)]
    fail_hard: bool,
    /// Prefix reasoning prompts with the learned self-belief.
    #[arg(long)]
    inject_self_belief: bool,
}

impl Tuning {
    fn config(&self) -> Result<EngineConfig> {
        let mut cfg = EngineConfig::default();
        let t = &mut cfg.trigger;
        t.theta = self.theta.unwrap_or(t.theta);
        t.eta = self.eta.unwrap_or(t.eta);
        t.alpha = self.alpha.unwrap_or(t.alpha);
        let f = &mut cfg.fusion;
        f.lambda = self.lambda.unwrap_or(f.lambda);
        f.kappa = self.kappa.unwrap_or(f.kappa);
        f.beta = self.beta.unwrap_or(f.beta);
        cfg.k_candidates = self.k.unwrap_or(cfg.k_candidates);
        cfg.e_max = self.e_max.unwrap_or(cfg.e_max);
        cfg.parallelism = self.parallelism.or(cfg.parallelism);
        cfg.fail_hard = self.fail_hard;
        cfg.inject_self_belief = self.inject_self_belief;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn gateway(spec: &BackendSpec, cfg: &EngineConfig) -> Result<Option<Gateway>> {
    Ok(spec.open()?.map(|b| cfg.gateway(b)))
}

fn require_gateway(spec: &BackendSpec, cfg: &EngineConfig, command: &str) -> Result<Gateway> {
    gateway(spec, cfg)?
        .ok_or_else(|| Error::InvalidConfig(format!("{command} needs a reasoning backend")))
}

fn print_json(value: &impl serde::Serialize) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("serializable");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildKb {
            support,
            embeddings,
            categories,
            out,
            kshot,
            test,
            capacity,
            tuning,
        } => {
            let mut cfg = tuning.config()?;
            cfg.k_shot = kshot;
            cfg.experience_capacity = capacity;
            cfg.validate()?;
            let gw = require_gateway(&cli.backend, &cfg, "build-kb")?;
            let store = EmbeddingStore::load(&embeddings)?;
            let cats = dataset::load_categories(&categories)?;
            let samples = dataset::load_samples(&support, &store)?;
            let test_ids: Option<HashSet<String>> = match &test {
                Some(p) => Some(
                    dataset::read_manifest(p)?
                        .into_iter()
                        .map(|e| e.sample_id)
                        .collect(),
                ),
                None => None,
            };
            let (kb, summary) =
                build_knowledge_bases(&samples, &cats, &store, &gw, &cfg, test_ids.as_ref())?;
            kb.save(&out)?;
            print_json(&summary);
        }
        Command::Describe {
            categories,
            support,
            out,
            texts,
            overwrite,
        } => {
            let cfg = EngineConfig::default();
            let gw = require_gateway(&cli.backend, &cfg, "describe")?;
            let cats = dataset::load_categories(&categories)?;
            let manifest = dataset::read_manifest(&support)?;
            let updated = generate_descriptions(&cats, &manifest, &gw, overwrite)?;
            let items: Vec<TextItem> = updated
                .iter()
                .map(|c| TextItem {
                    id: c.description_key(),
                    text: c.description.clone().unwrap_or_default(),
                })
                .collect();
            dataset::save_categories(&out, &updated)?;
            io::write_jsonl(&texts, &items)?;
            print_json(&json!({"categories": updated.len(), "texts": texts}));
        }
        Command::Classify {
            kb,
            sample,
            embeddings,
            manifest,
            tuning,
        } => {
            let cfg = tuning.config()?;
            let kb = KnowledgeBase::load(&kb)?;
            let store = EmbeddingStore::load(&embeddings)?;
            let entry = match &manifest {
                Some(p) => dataset::read_manifest(p)?
                    .into_iter()
                    .find(|e| e.sample_id == sample)
                    .ok_or_else(|| {
                        Error::format(p.display().to_string(), format!("no sample {sample}"))
                    })?,
                None => dataset::ManifestEntry {
                    sample_id: sample.clone(),
                    label: None,
                    image_ref: None,
                    embedding_ref: None,
                },
            };
            let record = dataset::resolve_samples(std::slice::from_ref(&entry), &store)?.remove(0);
            let gw = gateway(&cli.backend, &cfg)?;
            let pred = classify(&record, &kb, gw.as_ref(), &cfg)?;
            print_json(&pred);
        }
        Command::Evaluate {
            kb,
            test,
            embeddings,
            report,
            tuning,
        } => {
            let cfg = tuning.config()?;
            let kb = KnowledgeBase::load(&kb)?;
            let store = EmbeddingStore::load(&embeddings)?;
            let samples = dataset::load_samples(&test, &store)?;
            let gw = gateway(&cli.backend, &cfg)?;
            let eval = evaluate(&samples, &kb, gw.as_ref(), &cfg)?;
            let csv = write_evaluation(&report, &eval)?;
            let r = &eval.report;
            print_json(&json!({
                "report": report,
                "routes_csv": csv,
                "samples": r.samples,
                "errors": r.errors,
                "top1_accuracy": r.top1_accuracy,
                "trigger_rate": r.trigger_rate,
                "system1_accepted_accuracy": r.system1_accepted_accuracy,
            }));
        }
        Command::Serve {
            kb,
            port,
            host,
            tuning,
        } => {
            let cfg = tuning.config()?;
            let kb = KnowledgeBase::load(&kb)?;
            let gw = gateway(&cli.backend, &cfg)?;
            service::serve(ServiceState::new(kb, gw, cfg), SocketAddr::new(host, port))?;
        }
        Command::Synth {
            out,
            overlap,
            seed,
            categories,
            dim,
            kshot,
            test_per_category,
            noise,
        } => {
            let cfg = SyntheticConfig {
                n_categories: categories,
                dim,
                k_shot: kshot,
                test_per_category,
                overlap,
                noise,
                seed,
                ..Default::default()
            };
            let ds = synthetic::generate(&cfg)?;
            ds.write(&out)?;
            print_json(&json!({
                "out": out,
                "support": ds.support.len(),
                "test": ds.test.len(),
                "embeddings": ds.embeddings.len(),
            }));
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
