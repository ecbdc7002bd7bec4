//! Orchestration used by the command-line front end: rule, neural and hybrid
//! translation, evaluation and the end-to-end pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Act, Corpus, CorpusConfig, CorpusError, InputEncoding, Split, TrainingSample};
use crate::metrics;
use crate::par::{self, Execution};
use crate::plan::{emit_explain_json, generate_random_tree, OperatorTree, PlanError, SchemaSpec};
use crate::poem::{save_store, PoemError, PoemStore};
use crate::rules::{self, catalog_name, Narrative, RuleError};
use crate::seq2seq::{
    beam_search, greedy_decode, save_model, train_with, BeamConfig, ModelDims, ModelError, Qep2SeqModel, Sample,
    TrainConfig, Vocab, DEFAULT_MAX_LEN,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] PoemError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rule,
    Neural,
    Hybrid,
}

/// Per-session operator counts deciding when the neural path takes over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HybridPolicy {
    pub frequency_threshold: u64,
    pub per_user_counts: BTreeMap<String, u64>,
}

impl Default for HybridPolicy {
    fn default() -> Self {
        HybridPolicy { frequency_threshold: 5, per_user_counts: BTreeMap::new() }
    }
}

impl HybridPolicy {
    /// Records one sighting of `operator`; `true` once it has been seen more
    /// than the threshold.
    pub fn observe(&mut self, operator: &str) -> bool {
        let c = self.per_user_counts.entry(operator.to_string()).or_insert(0);
        *c += 1;
        *c > self.frequency_threshold
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        if !path.exists() {
            return Ok(HybridPolicy::default());
        }
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(io_error(dir))?;
            }
        }
        let text = serde_json::to_string_pretty(self).expect("serialisable");
        fs::write(path, text + "\n").map_err(io_error(path))
    }
}

/// Result of translating one act with the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuralStep {
    pub tokens: Vec<String>,
    /// `None` when the decoded sentence used a tag the act does not bind.
    pub filled: Option<String>,
}

/// Decodes with beam search when `beam_k` is set, greedily otherwise.
pub fn decode_tokens(model: &Qep2SeqModel, input: &[String], beam_k: Option<usize>) -> Result<Vec<String>, ModelError> {
    let ids = model.vocab_in.encode(input);
    let out = match beam_k {
        Some(k) => beam_search(model, &ids, BeamConfig { k, max_len: DEFAULT_MAX_LEN })?,
        None => greedy_decode(model, &ids, DEFAULT_MAX_LEN)?,
    };
    Ok(model.vocab_out.decode(&out))
}

pub fn neural_step(model: &Qep2SeqModel, act: &Act, beam_k: Option<usize>) -> Result<NeuralStep, ModelError> {
    let tokens = decode_tokens(model, &corpus::render_input(act, InputEncoding::default()), beam_k)?;
    let filled = corpus::fill_tags(&tokens, &act.bindings).ok();
    Ok(NeuralStep { tokens, filled })
}

/// Narrative of `tree` in the given mode. The neural path falls back to the
/// rule text for an act whose decoded sentence cannot be filled.
pub fn run_translate(
    tree: &OperatorTree,
    store: &PoemStore,
    mode: Mode,
    model: Option<&Qep2SeqModel>,
    beam_k: Option<usize>,
    policy: Option<&mut HybridPolicy>,
) -> Result<Narrative, PipelineError> {
    if mode == Mode::Rule {
        return Ok(rules::translate_tree(tree, store)?);
    }
    let model = model.ok_or_else(|| PipelineError::Usage(format!("mode {mode:?} needs a model")))?;
    let acts = corpus::decompose_acts(tree, store)?;
    let mut local = HybridPolicy::default();
    let policy = policy.unwrap_or(&mut local);
    let mut steps = Vec::with_capacity(acts.len());
    for act in &acts {
        let neural = match mode {
            Mode::Neural => true,
            _ => policy.observe(catalog_name(act.critical_type()).unwrap_or(act.critical_type())),
        };
        let text = if neural { neural_step(model, act, beam_k)?.filled } else { None };
        steps.push(text.unwrap_or_else(|| act.step.clone()));
    }
    Ok(Narrative { steps })
}

/// Input and output vocabularies over every sample, in first-appearance order.
pub fn corpus_vocabs(corpus: &Corpus) -> (Vocab, Vocab) {
    let vin = Vocab::build(corpus.samples.iter().flat_map(|s| s.input.iter().map(String::as_str)));
    let vout = Vocab::build(corpus.samples.iter().flat_map(|s| s.output.iter().map(String::as_str)));
    (vin, vout)
}

pub fn encode_samples(samples: &[&TrainingSample], vin: &Vocab, vout: &Vocab) -> Vec<Sample> {
    samples.iter().map(|s| Sample::from_tokens(vin, vout, &s.input, &s.output)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub train_samples: usize,
    pub validation_samples: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    /// Mean sentence BLEU of decoded validation outputs against every
    /// variant of the sample's group.
    pub validation_bleu: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Filled sentences that still contain a tag token.
    pub residual_tags: usize,
    /// Decoded sentences using a tag their act does not bind.
    pub unbound: usize,
}

fn mean_loss(model: &Qep2SeqModel, samples: &[Sample], exec: Execution) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let losses = par::try_map(exec, samples, |s| model.forward_loss(&s.input, &s.target).map(|r| r.0))?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Teacher-forcing accuracy and loss on both splits, decoded BLEU and tag
/// filling on the validation split.
pub fn evaluate(
    model: &Qep2SeqModel,
    corpus: &Corpus,
    beam_k: Option<usize>,
    exec: Execution,
) -> Result<EvalReport, PipelineError> {
    let (vin, vout) = (&model.vocab_in, &model.vocab_out);
    let train = corpus.part(Split::Train);
    let val = corpus.part(Split::Validation);
    let tr = encode_samples(&train, vin, vout);
    let va = encode_samples(&val, vin, vout);
    let mut groups: BTreeMap<&str, Vec<&[String]>> = BTreeMap::new();
    for s in &corpus.samples {
        groups.entry(&s.group).or_default().push(&s.output);
    }
    let decoded = par::try_map(exec, &val, |s| {
        let out = decode_tokens(model, &s.input, beam_k)?;
        let b = metrics::bleu(&out, &groups[s.group.as_str()]);
        let filled = corpus::fill_tags(&out, &s.bindings).ok();
        Ok::<_, ModelError>((b, filled))
    })?;
    let n = decoded.len().max(1) as f64;
    let residual_tags = decoded
        .iter()
        .filter_map(|(_, f)| f.as_ref())
        .filter(|f| f.split_whitespace().any(|t| corpus::SpecialTag::from_surface(t.trim_end_matches('.')).is_some()))
        .count();
    Ok(EvalReport {
        train_samples: tr.len(),
        validation_samples: va.len(),
        train_accuracy: crate::seq2seq::teacher_forcing_accuracy(model, &tr, exec)?,
        validation_accuracy: crate::seq2seq::teacher_forcing_accuracy(model, &va, exec)?,
        validation_bleu: decoded.iter().map(|d| d.0).sum::<f64>() / n,
        train_loss: mean_loss(model, &tr, exec)?,
        validation_loss: mean_loss(model, &va, exec)?,
        residual_tags,
        unbound: decoded.iter().filter(|d| d.1.is_none()).count(),
    })
}

/// Schema given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    Path(PathBuf),
    Inline(SchemaSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineConfig {
    pub schema: SchemaSource,
    pub tree_count: usize,
    pub size_budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub beam_k: Option<usize>,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub dims: ModelDims,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let SchemaSource::Path(p) = &cfg.schema {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.schema = SchemaSource::Path(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn schema(&self) -> Result<SchemaSpec, PipelineError> {
        match &self.schema {
            SchemaSource::Inline(s) => {
                s.validate()?;
                Ok(s.clone())
            }
            SchemaSource::Path(p) => Ok(SchemaSpec::from_json(&fs::read_to_string(p).map_err(io_error(p))?)?),
        }
    }
}

/// Trees `0..count`, tree `i` drawn with seed `seed + i`.
pub fn generate_trees(schema: &SchemaSpec, count: usize, budget: usize, seed: u64) -> Result<Vec<OperatorTree>, PlanError> {
    (0..count).map(|i| generate_random_tree(schema, seed.wrapping_add(i as u64), budget)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PipelineReport {
    pub trees: usize,
    pub corpus: corpus::CorpusStats,
    pub loss_history: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub stopped_early: bool,
    pub evaluation: EvalReport,
    pub stages: Vec<StageTiming>,
}

/// Seeds a store, generates trees, builds the corpus, trains and evaluates.
/// Writes `store.json`, `plans/`, `corpus.jsonl`, `model.bin` and
/// `report.json` under `out_dir`. Everything except the timings is a pure
/// function of the configuration.
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    exec: Execution,
    mut progress: impl FnMut(&str),
) -> Result<PipelineReport, PipelineError> {
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, stages: &mut Vec<StageTiming>| {
        stages.push(StageTiming { stage: name.to_string(), seconds: clock.elapsed().as_secs_f64() });
        clock = Instant::now();
    };
    fs::create_dir_all(out_dir.join("plans")).map_err(io_error(out_dir))?;

    let store = PoemStore::seeded();
    save_store(&store, &out_dir.join("store.json"))?;
    lap("seed store", &mut stages);

    let schema = config.schema()?;
    let trees = generate_trees(&schema, config.tree_count, config.size_budget, config.seed)?;
    for (i, t) in trees.iter().enumerate() {
        let p = out_dir.join("plans").join(format!("tree_{i:04}.json"));
        fs::write(&p, emit_explain_json(t)).map_err(io_error(&p))?;
    }
    lap("generate trees", &mut stages);
    progress(&format!("generated {} trees", trees.len()));

    let corpus = corpus::build_corpus(exec, &trees, &store, config.seed, &config.corpus)?;
    let corpus_path = out_dir.join("corpus.jsonl");
    fs::write(&corpus_path, corpus.to_jsonl()).map_err(io_error(&corpus_path))?;
    let stats = corpus.stats(exec);
    lap("build corpus", &mut stages);
    progress(&format!("corpus: {} samples, {} acts", stats.samples, stats.acts));

    let (vin, vout) = corpus_vocabs(&corpus);
    let train_samples = encode_samples(&corpus.part(Split::Train), &vin, &vout);
    let mut model = Qep2SeqModel::new(vin, vout, config.dims, config.train.init_range, config.train.rng_seed);
    let report = train_with(&mut model, &train_samples, &config.train, |e, l| {
        progress(&format!("epoch {e}: loss {l:.4}"));
    })?;
    let model_path = out_dir.join("model.bin");
    save_model(&model, &model_path)?;
    lap("train", &mut stages);

    let evaluation = evaluate(&model, &corpus, config.beam_k, exec)?;
    lap("evaluate", &mut stages);

    let out = PipelineReport {
        trees: trees.len(),
        corpus: stats,
        loss_history: report.epoch_losses,
        epoch_seconds: report.epoch_seconds,
        stopped_early: report.stopped_early,
        evaluation,
        stages,
    };
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&out).expect("serialisable") + "\n")
        .map_err(io_error(&report_path))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::parse_explain_json;

    fn example1() -> OperatorTree {
        parse_explain_json(include_str!("../fixtures/plans/example1.json")).unwrap()
    }

    #[test]
    fn policy_counts() {
        let mut p = HybridPolicy::default();
        for _ in 0..5 {
            assert!(!p.observe("hashjoin"));
        }
        assert!(p.observe("hashjoin"));
        assert_eq!(p.per_user_counts["hashjoin"], 6);
    }

    #[test]
    fn neural_without_model_is_a_usage_error() {
        let r = run_translate(&example1(), &PoemStore::seeded(), Mode::Neural, None, None, None);
        assert!(matches!(r, Err(PipelineError::Usage(_))));
    }

    #[test]
    fn rule_mode_matches_rule_engine() {
        let store = PoemStore::seeded();
        let n = run_translate(&example1(), &store, Mode::Rule, None, None, None).unwrap();
        assert_eq!(n, rules::translate_tree(&example1(), &store).unwrap());
    }
}
