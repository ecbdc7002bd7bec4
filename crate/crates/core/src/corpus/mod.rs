//! Training data for the neural translator: acts, tagged samples, paraphrase
//! groups and the train/validation split.

mod paraphrase;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use thiserror::Error;

pub use paraphrase::{paraphrase, paraphrase_with, SYNONYMS};

use crate::metrics;
use crate::par::{self, Execution};
use crate::plan::OperatorTree;
use crate::poem::PoemStore;
use crate::rules::{self, InputRef, LiteralKind, RuleError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("tag {0} has no binding")]
    UnboundTag(String),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("corpus line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Placeholder tokens standing for schema-dependent literals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpecialTag {
    /// Index condition.
    I,
    /// Filter condition or row count.
    F,
    /// Join condition.
    C,
    /// Intermediate relation consumed by the step.
    T,
    /// Intermediate relation produced by the step.
    TN,
    /// Sort attribute.
    A,
    /// Group-by attribute.
    G,
    /// Base relation or index name.
    Relation,
}

impl SpecialTag {
    pub const ALL: [SpecialTag; 8] = [
        SpecialTag::I,
        SpecialTag::F,
        SpecialTag::C,
        SpecialTag::T,
        SpecialTag::TN,
        SpecialTag::A,
        SpecialTag::G,
        SpecialTag::Relation,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            SpecialTag::I => "<I>",
            SpecialTag::F => "<F>",
            SpecialTag::C => "<C>",
            SpecialTag::T => "<T>",
            SpecialTag::TN => "<TN>",
            SpecialTag::A => "<A>",
            SpecialTag::G => "<G>",
            SpecialTag::Relation => "tablename",
        }
    }

    pub fn from_surface(s: &str) -> Option<Self> {
        SpecialTag::ALL.into_iter().find(|t| t.surface() == s)
    }

    fn for_literal(kind: LiteralKind) -> Self {
        match kind {
            LiteralKind::Relation => SpecialTag::Relation,
            LiteralKind::Intermediate => SpecialTag::T,
            LiteralKind::NewIntermediate => SpecialTag::TN,
            LiteralKind::Filter | LiteralKind::RowCount => SpecialTag::F,
            LiteralKind::JoinCondition => SpecialTag::C,
            LiteralKind::IndexCondition => SpecialTag::I,
            LiteralKind::SortKey => SpecialTag::A,
            LiteralKind::GroupKey => SpecialTag::G,
        }
    }
}

impl fmt::Display for SpecialTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface())
    }
}

/// Literals per tag, one entry per occurrence in the output sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(pub BTreeMap<SpecialTag, Vec<String>>);

impl Bindings {
    pub fn push(&mut self, tag: SpecialTag, literal: &str) {
        self.0.entry(tag).or_default().push(literal.to_string());
    }

    pub fn tags(&self) -> BTreeSet<SpecialTag> {
        self.0.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Literal for the `k`-th occurrence of `tag`; later occurrences reuse
    /// the last one.
    pub fn literal(&self, tag: SpecialTag, k: usize) -> Option<&str> {
        let v = self.0.get(&tag)?;
        v.get(k).or(v.last()).map(String::as_str)
    }

    /// JSON object keyed by tag surface; a single string when every
    /// occurrence has the same literal, else the list.
    pub fn to_json(&self) -> Json {
        let mut m = serde_json::Map::new();
        for (t, v) in &self.0 {
            let val = if v.iter().all(|x| x == &v[0]) { json!(v[0]) } else { json!(v) };
            m.insert(t.surface().to_string(), val);
        }
        Json::Object(m)
    }

    /// Repeats a lone literal once per occurrence of its tag in `tokens`,
    /// undoing the collapse done by [`Bindings::to_json`].
    pub fn expand_for(&mut self, tokens: &[impl AsRef<str>]) {
        for (tag, v) in self.0.iter_mut() {
            let n = tokens.iter().filter(|t| t.as_ref() == tag.surface()).count();
            if v.len() == 1 && n > 1 {
                let lit = v[0].clone();
                v.resize(n, lit);
            }
        }
    }

    pub fn from_json(v: &Json) -> Result<Self, String> {
        let obj = v.as_object().ok_or("bindings must be an object")?;
        let mut b = Bindings::default();
        for (k, v) in obj {
            let tag = SpecialTag::from_surface(k).ok_or_else(|| format!("unknown tag {k:?}"))?;
            let list = match v {
                Json::String(s) => vec![s.clone()],
                Json::Array(a) => a
                    .iter()
                    .map(|x| x.as_str().map(str::to_string).ok_or("binding lists hold strings"))
                    .collect::<Result<_, _>>()?,
                _ => return Err(format!("binding for {k} must be a string or list")),
            };
            if list.is_empty() {
                return Err(format!("empty binding for {k}"));
            }
            b.0.insert(tag, list);
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActKind {
    Single,
    Cluster,
}

/// One narrative step as a translation unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Act {
    pub kind: ActKind,
    /// Plan node types, auxiliaries first and the critical last.
    pub node_types: Vec<String>,
    /// Inputs of the critical node, outer first.
    pub inputs: Vec<InputRef>,
    /// Input consumed by each auxiliary, parallel to the auxiliary node types.
    pub aux_inputs: Vec<InputRef>,
    pub produces: Option<String>,
    pub is_root: bool,
    /// Rule-engine step text.
    pub step: String,
    /// Tagged step, tokenised.
    pub output: Vec<String>,
    pub bindings: Bindings,
}

impl Act {
    pub fn critical_type(&self) -> &str {
        self.node_types.last().map(String::as_str).unwrap_or("")
    }

    pub fn auxiliary_types(&self) -> &[String] {
        &self.node_types[..self.node_types.len().saturating_sub(1)]
    }
}

/// Splits a sentence into tokens; a sentence-final period is its own token.
pub fn tokenize_sentence(sentence: &str) -> Vec<String> {
    let mut out: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
    if let Some(last) = out.last_mut() {
        if last.len() > 1 && last.ends_with('.') {
            last.pop();
            out.push(".".to_string());
        }
    }
    out
}

/// Inverse of [`tokenize_sentence`].
pub fn detokenize(tokens: &[impl AsRef<str>]) -> String {
    let mut s = String::new();
    for t in tokens {
        let t = t.as_ref();
        if !s.is_empty() && t != "." {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

/// Acts of a tree in post-order; each clustered pair is one act.
pub fn decompose_acts(tree: &OperatorTree, store: &PoemStore) -> Result<Vec<Act>, RuleError> {
    let (lot, clusters) = rules::prepare(tree, store)?;
    let units = rules::step_units(&lot, &clusters);
    Ok(units
        .iter()
        .map(|u| {
            let step = rules::render_step(&lot, u, &mut |_, v| v.to_string());
            let mut bindings = Bindings::default();
            let tagged = rules::render_step(&lot, u, &mut |kind, v| {
                let tag = SpecialTag::for_literal(kind);
                bindings.push(tag, v);
                tag.surface().to_string()
            });
            let crit = &lot.nodes[u.critical];
            let mut node_types: Vec<String> =
                u.auxiliaries.iter().map(|&a| rules::effective_node_type(lot.nodes[a].underlying).to_string()).collect();
            node_types.push(rules::effective_node_type(crit.underlying).to_string());
            let inputs = [crate::pool::template::Placeholder::R2, crate::pool::template::Placeholder::R1]
                .iter()
                .filter_map(|p| crit.inputs.get(p).cloned())
                .collect();
            let aux_inputs = u
                .auxiliaries
                .iter()
                .filter_map(|&a| lot.nodes[a].inputs.get(&crate::pool::template::Placeholder::R1).cloned())
                .collect();
            Act {
                kind: if u.auxiliaries.is_empty() { ActKind::Single } else { ActKind::Cluster },
                node_types,
                inputs,
                aux_inputs,
                produces: crit.identifier.clone(),
                is_root: u.critical == lot.root(),
                step,
                output: tokenize_sentence(&tagged),
                bindings,
            }
        })
        .collect())
}

/// How an act is presented to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InputEncoding {
    /// Operator names and input kinds only.
    OperatorsOnly,
    /// Additionally marks which auxiliary consumes which input, the tags the
    /// step binds and whether it produces an intermediate or the final result.
    #[default]
    WithConditions,
}

fn operator_tokens(node_type: &str, out: &mut Vec<String>) {
    out.extend(node_type.split_whitespace().map(str::to_lowercase));
}

fn input_token(r: &InputRef) -> String {
    match r {
        InputRef::Relation(_) => SpecialTag::Relation.surface().to_string(),
        InputRef::Intermediate(_) => SpecialTag::T.surface().to_string(),
    }
}

/// Encoder tokens of an act. Never contains a schema literal.
pub fn render_input(act: &Act, encoding: InputEncoding) -> Vec<String> {
    let mut out = Vec::new();
    operator_tokens(act.critical_type(), &mut out);
    out.extend(act.inputs.iter().map(input_token));
    for (i, aux) in act.auxiliary_types().iter().enumerate() {
        operator_tokens(aux, &mut out);
        if encoding == InputEncoding::WithConditions {
            if let Some(r) = act.aux_inputs.get(i) {
                out.push(input_token(r));
            }
        }
    }
    if encoding == InputEncoding::WithConditions {
        for tag in [SpecialTag::I, SpecialTag::F, SpecialTag::C, SpecialTag::A, SpecialTag::G] {
            if act.bindings.0.contains_key(&tag) {
                out.push(tag.surface().to_string());
            }
        }
        if act.is_root {
            out.push("final".to_string());
        } else if act.produces.is_some() {
            out.push(SpecialTag::TN.surface().to_string());
        }
    }
    out
}

/// Tagged output tokens and their bindings.
pub fn render_output(act: &Act) -> (Vec<String>, Bindings) {
    (act.output.clone(), act.bindings.clone())
}

/// Replaces each tag token by its literal and joins the sentence.
pub fn fill_tags(tokens: &[impl AsRef<str>], bindings: &Bindings) -> Result<String, CorpusError> {
    let mut seen: BTreeMap<SpecialTag, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        match SpecialTag::from_surface(t) {
            Some(tag) => {
                let k = seen.entry(tag).or_insert(0);
                let lit = bindings.literal(tag, *k).ok_or_else(|| CorpusError::UnboundTag(t.to_string()))?;
                *k += 1;
                out.push(lit.to_string());
            }
            None => out.push(t.to_string()),
        }
    }
    Ok(detokenize(&out))
}

/// Tags occurring in a token sequence.
pub fn tags_in(tokens: &[impl AsRef<str>]) -> BTreeSet<SpecialTag> {
    tokens.iter().filter_map(|t| SpecialTag::from_surface(t.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    /// `"<tree>/<act>"`; paraphrase variants of one act share it.
    pub group: String,
    pub input: Vec<String>,
    pub output: Vec<String>,
    pub bindings: Bindings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            _ => Err(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub samples: Vec<TrainingSample>,
    pub split: Vec<Split>,
    pub act_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct CorpusConfig {
    pub variant_count: usize,
    pub encoding: InputEncoding,
    pub train_ratio: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { variant_count: 3, encoding: InputEncoding::WithConditions, train_ratio: 0.8 }
    }
}

fn act_rng(seed: u64, tree: usize, act: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tree as u64) << 32) | act as u64);
    rng
}

/// Samples of one tree: every act once as rendered, then its paraphrases.
pub fn tree_samples(
    tree_index: usize,
    tree: &OperatorTree,
    store: &PoemStore,
    seed: u64,
    config: &CorpusConfig,
) -> Result<(usize, Vec<TrainingSample>), RuleError> {
    let acts = decompose_acts(tree, store)?;
    let mut out = Vec::new();
    for (ai, act) in acts.iter().enumerate() {
        let group = format!("{tree_index}/{ai}");
        let input = render_input(act, config.encoding);
        let sentence = act.output.join(" ");
        let mut rng = act_rng(seed, tree_index, ai);
        let mut sentences = vec![act.output.clone()];
        sentences.extend(
            paraphrase_with(&sentence, config.variant_count, &mut rng)
                .iter()
                .map(|s| s.split_whitespace().map(str::to_string).collect()),
        );
        for output in sentences {
            out.push(TrainingSample { group: group.clone(), input: input.clone(), output, bindings: act.bindings.clone() });
        }
    }
    Ok((acts.len(), out))
}

/// All acts of all trees with their paraphrase variants, in tree order, then
/// split with the configured ratio.
pub fn build_corpus(
    exec: Execution,
    trees: &[OperatorTree],
    store: &PoemStore,
    seed: u64,
    config: &CorpusConfig,
) -> Result<Corpus, RuleError> {
    let indexed: Vec<(usize, &OperatorTree)> = trees.iter().enumerate().collect();
    let parts = par::try_map(exec, &indexed, |(i, t)| tree_samples(*i, t, store, seed, config))?;
    let mut corpus = Corpus::default();
    for (acts, samples) in parts {
        corpus.act_count += acts;
        corpus.samples.extend(samples);
    }
    corpus.split = split_indices(corpus.samples.len(), config.train_ratio, seed);
    Ok(corpus)
}

/// Uniform random split with `round(ratio * n)` training samples.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5b11_7000_0000));
    let n_train = ((n as f64) * ratio.clamp(0.0, 1.0)).round() as usize;
    let mut split = vec![Split::Validation; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    split
}

pub fn split_corpus(mut corpus: Corpus, ratio: f64, seed: u64) -> Corpus {
    corpus.split = split_indices(corpus.samples.len(), ratio, seed);
    corpus
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CorpusStats {
    pub samples: usize,
    pub groups: usize,
    pub acts: usize,
    pub expansion: f64,
    pub mean_self_bleu: f64,
    pub train: usize,
    pub validation: usize,
    pub input_vocab: usize,
    pub output_vocab: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples grouped by group id, groups in first-appearance order.
    pub fn groups(&self) -> Vec<Vec<&TrainingSample>> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out: Vec<Vec<&TrainingSample>> = Vec::new();
        for s in &self.samples {
            let g = *index.entry(&s.group).or_insert_with(|| {
                out.push(Vec::new());
                out.len() - 1
            });
            out[g].push(s);
        }
        out
    }

    pub fn part(&self, which: Split) -> Vec<&TrainingSample> {
        self.samples.iter().zip(&self.split).filter(|(_, s)| **s == which).map(|(x, _)| x).collect()
    }

    pub fn stats(&self, exec: Execution) -> CorpusStats {
        let groups = self.groups();
        let scores = par::map(exec, &groups, |g| {
            let outs: Vec<&[String]> = g.iter().map(|s| s.output.as_slice()).collect();
            metrics::self_bleu(&outs)
        });
        let vin: BTreeSet<&str> = self.samples.iter().flat_map(|s| s.input.iter().map(String::as_str)).collect();
        let vout: BTreeSet<&str> = self.samples.iter().flat_map(|s| s.output.iter().map(String::as_str)).collect();
        let acts = if self.act_count > 0 { self.act_count } else { groups.len() };
        CorpusStats {
            samples: self.samples.len(),
            groups: groups.len(),
            acts,
            expansion: if acts == 0 { 0.0 } else { self.samples.len() as f64 / acts as f64 },
            mean_self_bleu: if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 },
            train: self.split.iter().filter(|s| **s == Split::Train).count(),
            validation: self.split.iter().filter(|s| **s == Split::Validation).count(),
            input_vocab: vin.len(),
            output_vocab: vout.len(),
        }
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (s, split) in self.samples.iter().zip(&self.split) {
            let line = json!({
                "group": s.group,
                "input": s.input,
                "output": s.output,
                "bindings": s.bindings.to_json(),
                "split": split,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| CorpusError::Format { line: i + 1, message };
            let v: Json = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            let strings = |key: &str| -> Result<Vec<String>, CorpusError> {
                v.get(key)
                    .and_then(Json::as_array)
                    .ok_or_else(|| err(format!("missing {key}")))?
                    .iter()
                    .map(|t| t.as_str().map(str::to_string).ok_or_else(|| err(format!("{key} holds strings"))))
                    .collect()
            };
            let group = match v.get("group") {
                Some(Json::String(s)) => s.clone(),
                Some(Json::Number(n)) => n.to_string(),
                _ => return Err(err("missing group".into())),
            };
            let mut bindings = Bindings::from_json(v.get("bindings").unwrap_or(&json!({}))).map_err(err)?;
            let output = strings("output")?;
            bindings.expand_for(&output);
            let split = match v.get("split").and_then(Json::as_str) {
                Some(s) => s.parse().map_err(err)?,
                None => Split::Train,
            };
            corpus.samples.push(TrainingSample { group, input: strings("input")?, output, bindings });
            corpus.split.push(split);
        }
        Ok(corpus)
    }
}
