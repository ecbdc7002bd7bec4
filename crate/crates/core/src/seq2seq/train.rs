use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Qep2SeqModel;
use super::vocab::{Vocab, END_ID};
use super::ModelError;
use crate::metrics::accuracy;
use crate::par::{self, Execution};

/// One encoded training pair. `target` ends with `<END>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub input: Vec<usize>,
    pub target: Vec<usize>,
}

impl Sample {
    /// Maps tokens through the vocabularies (unknowns become `<UNK>`) and
    /// appends `<END>` to the target.
    pub fn from_tokens<S: AsRef<str>>(vin: &Vocab, vout: &Vocab, input: &[S], output: &[S]) -> Self {
        let mut target = vout.encode(output);
        target.push(END_ID);
        Sample { input: vin.encode(input), target }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Parameters start in `U(-init_range, init_range)`.
    pub init_range: f64,
    pub early_stop_delta: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 4,
            max_epochs: 50,
            init_range: 0.1,
            early_stop_delta: 0.001,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batchSize must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config("learningRate must be positive".into()));
        }
        if !(self.init_range.is_finite() && self.init_range > 0.0) {
            return Err(ModelError::Config("initRange must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    /// Mean per-sample loss of each epoch, measured as the epoch ran.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.epoch_losses.len()
    }
}

/// Plain minibatch SGD. See [`train_with`].
pub fn train(model: &mut Qep2SeqModel, samples: &[Sample], config: &TrainConfig) -> Result<TrainReport, ModelError> {
    train_with(model, samples, config, |_, _| {})
}

/// Minibatch SGD without momentum: each epoch shuffles the samples with a
/// seeded generator, sums the gradient over every batch and steps by
/// `-learning_rate`. Training stops after `max_epochs` or once two
/// consecutive epoch losses differ by less than `early_stop_delta`.
///
/// `on_epoch(epoch, loss)` is called after every epoch.
pub fn train_with<F>(
    model: &mut Qep2SeqModel,
    samples: &[Sample],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport, ModelError>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    if samples.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = model.params.zeros_like();
    let mut report = TrainReport::default();

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            for (_, t) in grad.tensors_mut() {
                t.fill(0.0);
            }
            for &i in batch {
                let s = &samples[i];
                let (loss, cache) = model.forward_loss(&s.input, &s.target)?;
                total += loss;
                model.accumulate_gradients(&cache, &mut grad);
            }
            model.params.add_scaled(-config.learning_rate, &grad);
        }
        if !model.params.is_finite() {
            return Err(ModelError::NonFinite);
        }
        let mean = total / samples.len() as f64;
        report.epoch_losses.push(mean);
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
        on_epoch(epoch + 1, mean);
        if let [.., a, b] = report.epoch_losses[..] {
            if (b - a).abs() < config.early_stop_delta {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok(report)
}

/// Mean teacher-forced token accuracy, `<END>` included.
pub fn teacher_forcing_accuracy(model: &Qep2SeqModel, samples: &[Sample], exec: Execution) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(1.0);
    }
    let accs = par::try_map(exec, samples, |s| {
        let pred = model.teacher_forced_predictions(&s.input, &s.target)?;
        Ok::<_, ModelError>(accuracy(&pred, &s.target))
    })?;
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::params::ModelDims;

    fn toy_corpus(n: usize) -> (Vocab, Vocab, Vec<Sample>) {
        let vin = Vocab::build(["scan", "join", "sort", "tablename", "<T>"]);
        let vout = Vocab::build(["perform", "scan", "join", "sort", "on", "tablename", "<T>", "."]);
        let mut samples = Vec::new();
        for k in 0..n {
            let (i, o): (Vec<&str>, Vec<&str>) = match k % 4 {
                0 => (vec!["scan", "tablename"], vec!["perform", "scan", "on", "tablename", "."]),
                1 => (vec!["join", "<T>", "tablename"], vec!["perform", "join", "on", "<T>", "."]),
                2 => (vec!["sort", "<T>"], vec!["sort", "<T>", "."]),
                _ => (vec!["scan", "<T>"], vec!["perform", "scan", "on", "<T>", "."]),
            };
            samples.push(Sample::from_tokens(&vin, &vout, &i, &o));
        }
        (vin, vout, samples)
    }

    #[test]
    fn loss_falls_within_ten_epochs() {
        let (vin, vout, samples) = toy_corpus(20);
        for seed in 0..5 {
            let mut m = Qep2SeqModel::new(
                vin.clone(),
                vout.clone(),
                ModelDims { hidden: 16, enc_embed: 8, dec_embed: 8 },
                0.1,
                seed,
            );
            let cfg = TrainConfig { max_epochs: 10, early_stop_delta: 0.0, rng_seed: seed, learning_rate: 0.01, ..Default::default() };
            let r = train(&mut m, &samples, &cfg).unwrap();
            assert_eq!(r.epochs(), 10);
            assert!(r.epoch_losses[9] < r.epoch_losses[0], "seed {seed}: {:?}", r.epoch_losses);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (vin, vout, samples) = toy_corpus(8);
        let run = || {
            let mut m = Qep2SeqModel::new(vin.clone(), vout.clone(), ModelDims { hidden: 6, enc_embed: 3, dec_embed: 3 }, 0.1, 9);
            let r = train(&mut m, &samples, &TrainConfig { max_epochs: 3, ..Default::default() }).unwrap();
            (m, r.epoch_losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(la, lb);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let (vin, vout, _) = toy_corpus(0);
        let mut m = Qep2SeqModel::new(vin, vout, ModelDims { hidden: 2, enc_embed: 2, dec_embed: 2 }, 0.1, 0);
        assert!(matches!(train(&mut m, &[], &TrainConfig::default()), Err(ModelError::EmptyCorpus)));
    }
}
