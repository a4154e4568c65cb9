use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apst_core::config::parse_threshold;
use apst_core::eval::{load_descriptions, obtain_store};
use apst_core::filter::{match_query_aps, MatchOutcome};
use apst_core::scorer::{generate_training_pairs, path_sentence_source, score_query, Label};
use apst_core::text::{format_sentence, SentenceSource};
use apst_core::{
    build_logical_ap_store, make_encoder, run_experiment, Ablation, ApstError, EncoderSpec, EvalMode, Graph,
    QueryTriple, Result, RunConfig, ScoringContext, TripleFormat,
};
use clap::{Args, Parser, Subcommand};

const ENCODER_URL_VAR: &str = "APST_ENCODER_URL";

#[derive(Parser)]
#[command(name = "apst", version, about = "Anchoring-path evidence for knowledge-graph completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Print relation, entity and triple counts of a triple file as JSON.
    Stats {
        /// Triple file; defaults to --train.
        graph: Option<PathBuf>,
    },
    /// Mine the logical anchoring-path store from the training graph.
    MineStore,
    /// Write (query sentence, path sentences, label) training records as JSON lines.
    ExportTrainPairs,
    /// Rank candidates and report MRR and Hit@1.
    Eval,
    /// Show the matched paths of one query and their scores.
    Explain {
        head: String,
        relation: String,
        tail: String,
    },
}

/// Every field mirrors a `RunConfig` key; a flag overrides the config file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML file with `RunConfig` keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    #[arg(long, global = true)]
    test: Option<PathBuf>,
    #[arg(long, global = true)]
    candidates: Option<PathBuf>,
    /// Detailed-tier descriptions (entity<TAB>text).
    #[arg(long, global = true)]
    descriptions: Option<PathBuf>,
    #[arg(long, global = true)]
    short_descriptions: Option<PathBuf>,
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    build_store: bool,
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<TripleFormat>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Minimum accuracy, or `none`.
    #[arg(long, global = true)]
    min_acc: Option<String>,
    /// Minimum recall, or `none`.
    #[arg(long, global = true)]
    min_rec: Option<String>,
    #[arg(long, global = true)]
    budget_l: Option<usize>,
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true)]
    negatives_per_positive: Option<usize>,
    #[arg(long, global = true)]
    candidates_per_query: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `builtin`, `remote` (uses APST_ENCODER_URL) or a service URL.
    #[arg(long, global = true)]
    encoder: Option<String>,
    /// SC, SA, DC or DA.
    #[arg(long, global = true)]
    ablation: Option<String>,
    /// transductive or inductive.
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    split_sides: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

fn parse_format(s: &str) -> std::result::Result<TripleFormat, String> {
    match s {
        "head-relation-tail" | "hrt" => Ok(TripleFormat::HeadRelationTail),
        "head-tail-relation" | "htr" => Ok(TripleFormat::HeadTailRelation),
        _ => Err(format!("unknown format `{s}` (hrt, htr)")),
    }
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ApstError::io(p, e))?;
                toml::from_str(&text).map_err(|e| ApstError::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = Some(v.clone());
                }
            )*};
        }
        set!(train, test, candidates, descriptions, short_descriptions, store, output, workers);
        macro_rules! put {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    c.$f = v;
                }
            )*};
        }
        put!(format, depth, budget_l, margin, negatives_per_positive, candidates_per_query, seed);
        c.build_store |= self.build_store;
        c.split_sides |= self.split_sides;
        if let Some(s) = &self.min_acc {
            c.min_acc = parse_threshold(s)?;
        }
        if let Some(s) = &self.min_rec {
            c.min_rec = parse_threshold(s)?;
        }
        if let Some(s) = &self.ablation {
            c.ablation = s.parse::<Ablation>()?;
        }
        if let Some(s) = &self.mode {
            c.mode = s.parse::<EvalMode>()?;
        }
        if let Some(s) = &self.encoder {
            c.encoder = EncoderSpec::from(s.clone());
        }
        if let EncoderSpec::Remote(url) = &c.encoder {
            if url.is_empty() || url == "remote" {
                let url = std::env::var(ENCODER_URL_VAR).map_err(|_| {
                    ApstError::Config(format!("--encoder remote needs a URL or {ENCODER_URL_VAR}"))
                })?;
                c.encoder = EncoderSpec::Remote(url);
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_external() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.opts.resolve()?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ApstError::Config(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Stats { graph } => stats(&cfg, graph),
        Command::MineStore => mine_store(&cfg),
        Command::ExportTrainPairs => export_pairs(&cfg),
        Command::Eval => eval(&cfg),
        Command::Explain { head, relation, tail } => explain(&cfg, &QueryTriple::new(head, relation, tail)),
    }
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("RunConfig serializes")
}

fn load_train(cfg: &RunConfig) -> Result<Graph> {
    let path = cfg.require(&cfg.train, "train")?;
    Graph::load(path, cfg.format)?.augment_inverses()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| ApstError::io(path, e))
}

fn stats(cfg: &RunConfig, graph: Option<PathBuf>) -> Result<()> {
    let path = match graph {
        Some(p) => p,
        None => cfg.require(&cfg.train, "train")?.clone(),
    };
    let g = Graph::load(&path, cfg.format)?;
    let s = g.stats();
    let out = serde_json::json!({
        "file": path,
        "relations": s.relations,
        "entities": s.entities,
        "triples": s.triples,
        "config": config_json(cfg),
    });
    println!("{out}");
    Ok(())
}

fn mine_store(cfg: &RunConfig) -> Result<()> {
    let out = cfg.require(&cfg.store, "store")?;
    let g = load_train(cfg)?;
    let (mut store, summary) = build_logical_ap_store(&g, cfg.depth, cfg.thresholds())?;
    store.provenance.config = Some(config_json(cfg));
    store.save(out)?;
    for r in &summary.relations {
        println!("{}\tcandidates={}\tkept={}\tdropped={}", r.relation, r.candidates, r.kept, r.dropped);
    }
    println!("total\tkept={}\tdropped={}", summary.kept(), summary.dropped());
    Ok(())
}

fn export_pairs(cfg: &RunConfig) -> Result<()> {
    let g = load_train(cfg)?;
    let store = obtain_store(cfg, &g)?;
    let descriptions = load_descriptions(cfg)?;
    let tier = cfg.ablation.tier();
    let sink: Box<dyn Write> = match &cfg.output {
        Some(p) => {
            let f = std::fs::File::create(p).map_err(|e| ApstError::io(p, e))?;
            // The pairs file keeps the plain record format its consumer expects;
            // the effective config goes into a sidecar next to it.
            let mut side = p.clone().into_os_string();
            side.push(".config.json");
            write_file(Path::new(&side), serde_json::to_string_pretty(&config_json(cfg))?.as_bytes())?;
            Box::new(f)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    let target = cfg.output.clone().unwrap_or_else(|| "<stdout>".into());
    let io = |e| ApstError::io(&target, e);
    let (mut pos, mut neg) = (0usize, 0usize);
    for ex in generate_training_pairs(&g, &store, cfg.pair_config())? {
        let ex = ex?;
        match ex.label {
            Label::Positive => pos += 1,
            Label::Negative => neg += 1,
        }
        serde_json::to_writer(&mut w, &ex.to_record(&g, &descriptions, tier))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    eprintln!("exported {pos} positive and {neg} negative examples");
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    let encoder = make_encoder(&cfg.encoder)?;
    let report = run_experiment(cfg, encoder.as_ref())?;
    if let Some(p) = &cfg.output {
        write_file(p, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    let m = report.aggregate;
    println!("MRR={:.3} Hit@1={:.3}", m.mrr, m.hit_at_1);
    if let Some(s) = &report.by_side {
        for (name, side) in [("head", &s.head), ("tail", &s.tail)] {
            if let Some(m) = side {
                println!("{name}: MRR={:.3} Hit@1={:.3} ({} queries)", m.mrr, m.hit_at_1, m.queries);
            }
        }
    }
    Ok(())
}

fn explain(cfg: &RunConfig, q: &QueryTriple) -> Result<()> {
    let g = load_train(cfg)?;
    let store = obtain_store(cfg, &g)?;
    let descriptions = load_descriptions(cfg)?;
    let encoder = make_encoder(&cfg.encoder)?;
    let ctx = ScoringContext {
        graph: &g,
        store: &store,
        encoder: encoder.as_ref(),
        descriptions: &descriptions,
        tier: cfg.ablation.tier(),
        params: cfg.match_params(),
    };
    let outcome = match_query_aps(&g, q, &store, ctx.params)?;
    let scored = score_query(&ctx, q)?;
    let query_sentence = format_sentence(&g, SentenceSource::Query(q), &descriptions, ctx.tier);
    println!("# config {}", config_json(cfg));
    println!("query    {} {} {}", q.head, q.relation, q.tail);
    println!("sentence {}", query_sentence.text);
    println!("score    {:.4}", scored.score);
    if matches!(outcome, MatchOutcome::NoEvidence) {
        println!("no evidence: the store has no chains for `{}`", q.relation);
        return Ok(());
    }
    if scored.path_scores.is_empty() {
        println!("no matching paths");
    }
    let best = scored.best_path.as_ref();
    for (i, (m, s)) in scored.path_scores.iter().enumerate() {
        let mark = if Some(m) == best { '*' } else { ' ' };
        let kind = serde_json::to_value(m.kind).expect("kind serializes");
        println!("{mark}[{}] {:<7} {s:.4}  {}", i + 1, kind.as_str().unwrap_or("?"), m.path.display(&g));
        println!(
            "         {}",
            format_sentence(&g, path_sentence_source(m), &descriptions, ctx.tier).text
        );
    }
    Ok(())
}
