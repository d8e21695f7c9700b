mod server;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use babelbot_core::engine::FixtureCorpus;
use babelbot_core::gateway::{run_bench, BenchOptions, Gateway, GatewayConfig};
use babelbot_core::metrics::{
    build_report, load_interactions, load_translations, translation_qc, IpaParams, TokenF1Scorer,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "babelbot", version, about = "Multilingual robot command workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Bundled map name (office, open) or a map file.
    #[arg(long)]
    map: Option<String>,
    /// Directory for session logs and snapshots.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket gateway.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Address to listen on, e.g. 127.0.0.1:8080 (port 0 picks one).
        #[arg(long)]
        bind: Option<String>,
        /// Require this bearer token on every request.
        #[arg(long)]
        token: Option<String>,
        /// Use the offline mock instead of the configured model endpoint.
        #[arg(long)]
        mock_llm: bool,
    },
    /// Run a script of instructions (one per line) against the simulator.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        script: PathBuf,
        /// Decline every plan that asks for confirmation instead of approving.
        #[arg(long)]
        reject: bool,
        #[arg(long)]
        mock_llm: bool,
        /// Fixture corpus for the mock model.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Rebuild the metrics report from an interaction log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Where to write the CSV report; stdout otherwise.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Replay a fixture corpus through the full pipeline.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Answer from the fixtures (the only supported bench mode).
        #[arg(long)]
        mock_llm: bool,
        /// Simulated model latency per instruction, in virtual time.
        #[arg(long, default_value_t = 0)]
        latency_ms: u64,
        /// Wall-clock pause after each instruction.
        #[arg(long, default_value_t = 0)]
        pace_ms: u64,
        /// Stop after this many new instructions.
        #[arg(long)]
        stop_after: Option<usize>,
        #[arg(long, default_value = "bench")]
        session: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a translation dataset (JSONL with source, lang, hyp, ref).
    TranslateQc {
        #[arg(long)]
        dataset: PathBuf,
        /// Per-pair scores as CSV.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Per-language means as CSV; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            common,
            bind,
            token,
            mock_llm,
        } => {
            let mut config = load_config(&common)?;
            if let Some(b) = bind {
                config.bind = b;
            }
            if token.is_some() {
                config.token = token;
            }
            if mock_llm {
                config.mock_llm = true;
            }
            serve(config)
        }
        Command::Simulate {
            common,
            script,
            reject,
            mock_llm,
            fixtures,
        } => {
            let mut config = load_config(&common)?;
            config.realtime_factor = 0.0;
            if mock_llm {
                config.mock_llm = true;
            }
            if fixtures.is_some() {
                config.fixtures = fixtures;
            }
            simulate(config, &script, reject)
        }
        Command::Replay { log, report, json } => replay(&log, report.as_deref(), json.as_deref()),
        Command::Bench {
            common,
            fixtures,
            mock_llm,
            latency_ms,
            pace_ms,
            stop_after,
            session,
            report,
        } => {
            if !mock_llm {
                bail!("bench runs need --mock-llm");
            }
            let config = load_config(&common)?;
            let corpus = match &fixtures {
                Some(p) => FixtureCorpus::load(p).with_context(|| p.display().to_string())?,
                None => FixtureCorpus::bundled(),
            };
            let opts = BenchOptions {
                session_id: session,
                latency_ms,
                pace_ms,
                stop_after,
                seed: config.seed,
                ..BenchOptions::default()
            };
            bench(config, &corpus, &opts, report.as_deref())
        }
        Command::TranslateQc {
            dataset,
            records,
            out,
        } => translate_qc(&dataset, records.as_deref(), out.as_deref()),
    }
}

fn load_config(common: &Common) -> Result<GatewayConfig> {
    let mut config = match &common.config {
        Some(p) => GatewayConfig::load(p)?,
        None => GatewayConfig::default(),
    };
    config.apply_env();
    if let Some(m) = &common.map {
        config.map = m.clone();
    }
    if let Some(d) = &common.data_dir {
        config.data_dir = Some(d.clone());
    }
    Ok(config)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn serve(config: GatewayConfig) -> Result<()> {
    // Built outside the runtime: the model client owns a blocking HTTP
    // client that must not be created or dropped on an async thread.
    let gw = Gateway::new(config)?;
    let keep = gw.clone();
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&gw.config().bind)
            .await
            .with_context(|| format!("bind {}", gw.config().bind))?;
        let addr = listener.local_addr()?;
        println!("listening on {addr}");
        tracing::info!("gateway listening on {addr}");
        server::serve(gw, listener).await?;
        anyhow::Ok(())
    })?;
    drop(rt);
    drop(keep);
    Ok(())
}

fn simulate(config: GatewayConfig, script: &Path, reject: bool) -> Result<()> {
    let text = std::fs::read_to_string(script).with_context(|| script.display().to_string())?;
    let gw = Gateway::new(config)?;
    let id = gw.create_session(Some("simulate"))?.id;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let reply = gw.submit_command(&id, line)?;
        println!("> {line}");
        println!("[{}] {}", reply.language, reply.reply_text);
        if reply.needs_confirmation {
            let lex = gw
                .lexicons()
                .get(&reply.language)
                .or_else(|| gw.lexicons().english())
                .context("no confirmation lexicon")?;
            let answer = if reject {
                lex.canonical_negative()
            } else {
                lex.canonical_positive()
            };
            let out = gw.confirm(&id, answer)?;
            println!(">> {answer}");
            println!("[{}] {}", out.language, out.reply_text);
        }
    }
    let view = gw.state(&id)?;
    println!(
        "final pose: x = {:.3}, y = {:.3}, theta = {:.1} deg",
        view.pose.x,
        view.pose.y,
        view.pose.theta.to_degrees()
    );
    Ok(())
}

fn replay(log: &Path, report: Option<&Path>, json: Option<&Path>) -> Result<()> {
    let records = load_interactions(log)?;
    let r = build_report(&records, &TokenF1Scorer, &IpaParams::default())?;
    write_or_print(report, &r.to_csv()?)?;
    if let Some(j) = json {
        std::fs::write(j, r.to_json()).with_context(|| j.display().to_string())?;
    }
    Ok(())
}

fn bench(
    config: GatewayConfig,
    corpus: &FixtureCorpus,
    opts: &BenchOptions,
    report: Option<&Path>,
) -> Result<()> {
    let summary = run_bench(config, corpus, opts)?;
    eprintln!(
        "{} of {} instructions logged ({} resumed, {} run) in {:.2} s",
        summary.entries.len(),
        summary.total,
        summary.resumed,
        summary.ran,
        summary.elapsed_s
    );
    match summary.report {
        Some(r) => write_or_print(report, &r.to_csv()?),
        None => {
            eprintln!("run incomplete; rerun with the same data directory to continue");
            Ok(())
        }
    }
}

fn translate_qc(dataset: &Path, records: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let pairs = load_translations(dataset)?;
    let qc = translation_qc(&pairs)?;
    if let Some(p) = records {
        std::fs::write(p, qc.records_csv()?).with_context(|| p.display().to_string())?;
    }
    write_or_print(out, &qc.summary_csv()?)
}
