mod error;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use error::CliError;
use qepnl::corpus::{self, Corpus, CorpusConfig, InputEncoding};
use qepnl::par::Execution;
use qepnl::pipeline::{self, HybridPolicy, Mode, PipelineConfig};
use qepnl::plan::{parse_explain_json, OperatorTree, SchemaSpec};
use qepnl::poem::{load_store, save_store, seed_default_catalog, PoemStore};
use qepnl::pool;
use qepnl::seq2seq::{load_model, save_model, train_with, ModelDims, Qep2SeqModel, TrainConfig};

#[derive(Parser)]
#[command(name = "qepnl", version, about = "Narrate relational query execution plans in natural language.")]
struct Cli {
    /// Operator store (JSON). Defaults to the built-in PostgreSQL catalog.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Named session whose hybrid-mode counts persist between runs.
    #[arg(long, global = true)]
    session: Option<String>,
    /// Directory holding session files.
    #[arg(long, global = true, default_value = ".qepnl-sessions")]
    session_dir: PathBuf,
    /// Run data-parallel work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run POOL statements.
    Pool {
        #[command(subcommand)]
        action: PoolAction,
    },
    /// Create or inspect an operator store.
    Store {
        #[command(subcommand)]
        action: StoreAction,
    },
    /// Narrate a plan.
    Translate(TranslateArgs),
    /// Build or inspect a training corpus.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Train a translator on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON with training fields and optional `dims`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Narrate a plan with a trained model.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        numbered: bool,
    },
    /// Accuracy, BLEU and loss of a model on a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Store, trees, corpus, training and evaluation in one run.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "pipeline-out")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PoolAction {
    /// Execute a script file (`-` for stdin). Changes are saved to `--store`.
    Exec { script: PathBuf },
    /// Read statements from stdin, one result per statement.
    Repl,
}

#[derive(Subcommand)]
enum StoreAction {
    /// Write the default catalog for a source.
    Seed {
        #[arg(long, default_value = "pg")]
        source: String,
        /// Output file; defaults to `--store`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the operators of a source.
    List {
        #[arg(long, default_value = "pg")]
        source: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rule,
    Neural,
    Hybrid,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_enum, default_value = "rule")]
    mode: ModeArg,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    numbered: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    OperatorsOnly,
    WithConditions,
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Build a corpus from plan files or from trees generated over a schema.
    Generate {
        /// Directory of EXPLAIN JSON files.
        #[arg(long, conflicts_with = "schema")]
        plans: Option<PathBuf>,
        /// Schema to generate trees from.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trees: usize,
        #[arg(long, default_value_t = 12)]
        budget: usize,
        #[arg(long, default_value_t = 3)]
        variants: usize,
        #[arg(long, value_enum, default_value = "with-conditions")]
        encoding: EncodingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Group count, expansion factor and mean Self-BLEU.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Deserialize, Default)]
struct TrainFile {
    #[serde(flatten)]
    train: TrainConfig,
    #[serde(default)]
    dims: ModelDims,
}

struct Ctx {
    store: Option<PathBuf>,
    seed: u64,
    session: Option<PathBuf>,
    exec: Execution,
}

impl Ctx {
    fn load_store(&self) -> Result<PoemStore, CliError> {
        match &self.store {
            None => Ok(PoemStore::seeded()),
            Some(p) => Ok(load_store(p)?),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::Read::read_to_string(&mut io::stdin(), &mut s).map_err(CliError::runtime)?;
        return Ok(s);
    }
    fs::read_to_string(path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn read_plan(path: &Path) -> Result<OperatorTree, CliError> {
    parse_explain_json(&read(path)?).map_err(|e| CliError::malformed(format!("{}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::from_jsonl(&read(path)?)?)
}

fn print_narrative(n: &qepnl::rules::Narrative, numbered: bool) {
    let mut out = io::stdout().lock();
    let text = if numbered { n.numbered() } else { n.to_string() };
    let _ = out.write_all(text.as_bytes());
}

fn pool_exec(ctx: &Ctx, script: &Path) -> Result<(), CliError> {
    let mut store = ctx.load_store()?;
    let results = pool::execute_script(&read(script)?, &mut store, ctx.seed)?;
    for r in results {
        println!("{r}");
    }
    if let Some(p) = &ctx.store {
        save_store(&store, p)?;
    }
    Ok(())
}

fn pool_repl(ctx: &Ctx) -> Result<(), CliError> {
    let mut store = ctx.load_store()?;
    let mut pending = String::new();
    for line in io::stdin().lock().lines() {
        let line = line.map_err(CliError::runtime)?;
        pending.push_str(&line);
        pending.push('\n');
        if !line.trim_end().ends_with(';') {
            continue;
        }
        match pool::execute_script(&pending, &mut store, ctx.seed) {
            Ok(results) => results.iter().for_each(|r| println!("{r}")),
            Err(e) => eprintln!("error: {e}"),
        }
        pending.clear();
    }
    if let Some(p) = &ctx.store {
        save_store(&store, p)?;
    }
    Ok(())
}

fn translate(ctx: &Ctx, args: &TranslateArgs) -> Result<(), CliError> {
    let store = ctx.load_store()?;
    let tree = read_plan(&args.plan)?;
    let mode = match args.mode {
        ModeArg::Rule => Mode::Rule,
        ModeArg::Neural => Mode::Neural,
        ModeArg::Hybrid => Mode::Hybrid,
    };
    if mode != Mode::Rule && args.model.is_none() {
        return Err(CliError::usage(format!("--mode {} requires --model", if mode == Mode::Neural { "neural" } else { "hybrid" })));
    }
    let model = args.model.as_deref().map(load_model).transpose()?;
    let mut policy = match &ctx.session {
        Some(p) => HybridPolicy::load(p)?,
        None => HybridPolicy::default(),
    };
    let n = pipeline::run_translate(&tree, &store, mode, model.as_ref(), args.beam, Some(&mut policy))?;
    if let Some(p) = &ctx.session {
        policy.save(p)?;
    }
    print_narrative(&n, args.numbered);
    Ok(())
}

fn plan_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

#[allow(clippy::too_many_arguments)]
fn corpus_generate(
    ctx: &Ctx,
    plans: Option<&Path>,
    schema: Option<&Path>,
    trees: usize,
    budget: usize,
    variants: usize,
    encoding: EncodingArg,
    out: &Path,
) -> Result<(), CliError> {
    let store = ctx.load_store()?;
    let forest: Vec<OperatorTree> = match (plans, schema) {
        (Some(dir), _) => plan_files(dir)?.iter().map(|p| read_plan(p)).collect::<Result<_, _>>()?,
        (None, Some(s)) => {
            let spec = SchemaSpec::from_json(&read(s)?)?;
            pipeline::generate_trees(&spec, trees, budget, ctx.seed)?
        }
        (None, None) => return Err(CliError::usage("corpus generate needs --plans or --schema")),
    };
    let config = CorpusConfig {
        variant_count: variants,
        encoding: match encoding {
            EncodingArg::OperatorsOnly => InputEncoding::OperatorsOnly,
            EncodingArg::WithConditions => InputEncoding::WithConditions,
        },
        ..CorpusConfig::default()
    };
    let c = corpus::build_corpus(ctx.exec, &forest, &store, ctx.seed, &config)?;
    write(out, &c.to_jsonl())?;
    eprintln!("wrote {} samples from {} acts to {}", c.len(), c.act_count, out.display());
    Ok(())
}

fn corpus_stats(ctx: &Ctx, path: &Path) -> Result<(), CliError> {
    let s = read_corpus(path)?.stats(ctx.exec);
    println!("groups: {}", s.groups);
    println!("samples: {}", s.samples);
    println!("expansion: {:.4}", s.expansion);
    println!("mean self-bleu: {:.4}", s.mean_self_bleu);
    println!("train/validation: {}/{}", s.train, s.validation);
    println!("vocabulary in/out: {}/{}", s.input_vocab, s.output_vocab);
    Ok(())
}

fn train(ctx: &Ctx, corpus_path: &Path, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let corpus = read_corpus(corpus_path)?;
    let file: TrainFile = match config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::malformed(format!("{}: {e}", p.display())))?,
        None => TrainFile::default(),
    };
    let (vin, vout) = pipeline::corpus_vocabs(&corpus);
    let samples = pipeline::encode_samples(&corpus.part(corpus::Split::Train), &vin, &vout);
    let mut model = Qep2SeqModel::new(vin, vout, file.dims, file.train.init_range, file.train.rng_seed);
    let report = train_with(&mut model, &samples, &file.train, |e, l| eprintln!("epoch {e}: loss {l:.4}"))?;
    save_model(&model, out)?;
    let _ = ctx;
    println!(
        "{}",
        serde_json::json!({
            "epochs": report.epochs(),
            "lossHistory": report.epoch_losses,
            "epochSeconds": report.epoch_seconds,
            "stoppedEarly": report.stopped_early,
        })
    );
    Ok(())
}

fn decode(ctx: &Ctx, model: &Path, plan: &Path, beam: Option<usize>, numbered: bool) -> Result<(), CliError> {
    let store = ctx.load_store()?;
    let tree = read_plan(plan)?;
    let model = load_model(model)?;
    let n = pipeline::run_translate(&tree, &store, Mode::Neural, Some(&model), beam, None)?;
    print_narrative(&n, numbered);
    Ok(())
}

fn eval(ctx: &Ctx, model: &Path, corpus_path: &Path, beam: Option<usize>) -> Result<(), CliError> {
    let model = load_model(model)?;
    let corpus = read_corpus(corpus_path)?;
    let r = pipeline::evaluate(&model, &corpus, beam, ctx.exec)?;
    println!("accuracy: {:.4}", r.validation_accuracy);
    println!("train accuracy: {:.4}", r.train_accuracy);
    println!("mean bleu: {:.2}", r.validation_bleu);
    println!("loss: {:.4}", r.validation_loss);
    println!("train loss: {:.4}", r.train_loss);
    println!("unbound tags: {}", r.unbound);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx {
        store: cli.store.clone(),
        seed: cli.seed,
        session: cli.session.as_ref().map(|s| cli.session_dir.join(format!("{s}.json"))),
        exec: if cli.sequential { Execution::Sequential } else { Execution::Parallel },
    };
    match &cli.command {
        Command::Pool { action: PoolAction::Exec { script } } => pool_exec(&ctx, script),
        Command::Pool { action: PoolAction::Repl } => pool_repl(&ctx),
        Command::Store { action: StoreAction::Seed { source, out } } => {
            let path = out.as_ref().or(ctx.store.as_ref()).ok_or_else(|| CliError::usage("store seed needs --out or --store"))?;
            let mut store = if path.exists() { load_store(path)? } else { PoemStore::new() };
            let n = seed_default_catalog(&mut store, source)?;
            save_store(&store, path)?;
            eprintln!("seeded {n} operators for {source} into {}", path.display());
            Ok(())
        }
        Command::Store { action: StoreAction::List { source } } => {
            let store = ctx.load_store()?;
            for op in store.operators(source) {
                println!("{}\t{}\t{}", op.name, op.op_type.as_str(), op.descriptions.join(" | "));
            }
            Ok(())
        }
        Command::Translate(args) => translate(&ctx, args),
        Command::Corpus { action } => match action {
            CorpusAction::Generate { plans, schema, trees, budget, variants, encoding, out } => corpus_generate(
                &ctx,
                plans.as_deref(),
                schema.as_deref(),
                *trees,
                *budget,
                *variants,
                *encoding,
                out,
            ),
            CorpusAction::Stats { corpus } => corpus_stats(&ctx, corpus),
        },
        Command::Train { corpus, config, out } => train(&ctx, corpus, config.as_deref(), out),
        Command::Decode { model, plan, beam, numbered } => decode(&ctx, model, plan, *beam, *numbered),
        Command::Eval { model, corpus, beam } => eval(&ctx, model, corpus, *beam),
        Command::Pipeline { config, out } => {
            let cfg = PipelineConfig::load(config)?;
            let report = pipeline::run_pipeline(&cfg, out, ctx.exec, |m| eprintln!("{m}"))?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serialisable"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
