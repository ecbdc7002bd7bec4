use ndarray::{Array1, Array2};
use proptest::prelude::*;
use qepnl::corpus::{build_corpus, CorpusConfig, TrainingSample};
use qepnl::par::Execution;
use qepnl::plan::{generate_random_tree, SchemaSpec};
use qepnl::poem::PoemStore;
use qepnl::seq2seq::{
    attend, beam_search, gradient_check, greedy_decode, recurrent_parameter_count, softmax, teacher_forcing_accuracy,
    train, BeamConfig, ModelDims, Qep2SeqModel, Sample, TrainConfig, Vocab,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unparaphrased corpus over the toy schema: every input maps to one output.
fn plain_samples(n: usize) -> (Vocab, Vocab, Vec<Sample>) {
    let schema = SchemaSpec::from_json(include_str!("../fixtures/toy_schema.json")).unwrap();
    let store = PoemStore::seeded();
    let trees: Vec<_> = (0..10u64).map(|s| generate_random_tree(&schema, s, 8).unwrap()).collect();
    let cfg = CorpusConfig { variant_count: 0, ..Default::default() };
    let corpus = build_corpus(Execution::default(), &trees, &store, 0, &cfg).unwrap();
    let part: Vec<&TrainingSample> = corpus.samples.iter().take(n).collect();
    assert_eq!(part.len(), n);
    let vin = Vocab::build(part.iter().flat_map(|s| s.input.iter().map(String::as_str)));
    let vout = Vocab::build(part.iter().flat_map(|s| s.output.iter().map(String::as_str)));
    let samples = part.iter().map(|s| Sample::from_tokens(&vin, &vout, &s.input, &s.output)).collect();
    (vin, vout, samples)
}

fn random_model(seed: u64, words_in: usize, words_out: usize, dims: ModelDims, range: f64) -> Qep2SeqModel {
    let vin = Vocab::build((0..words_in).map(|i| format!("i{i}")).collect::<Vec<_>>().iter().map(String::as_str));
    let vout = Vocab::build((0..words_out).map(|i| format!("o{i}")).collect::<Vec<_>>().iter().map(String::as_str));
    Qep2SeqModel::new(vin, vout, dims, range, seed)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-30.0f64..30.0, 1..40)) {
        let p = softmax(Array1::from(logits).view());
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn attention_and_output_distributions(seed in 0u64..1000, n in 1usize..8) {
        let dims = ModelDims { hidden: 5, enc_embed: 3, dec_embed: 4 };
        let m = random_model(seed, 4, 6, dims, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Array1::from_shape_fn(5, |_| rng.gen_range(-1.0..1.0));
        let enc = Array2::from_shape_fn((n, 5), |_| rng.gen_range(-1.0..1.0));
        let (alpha, context) = attend(&m.params.attention, s.view(), enc.view()).unwrap();
        prop_assert_eq!(alpha.len(), n);
        prop_assert!((alpha.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(alpha.iter().all(|&x| x > 0.0));
        let probs = m.decode_step_probs(s.view(), context.view());
        prop_assert_eq!(probs.len(), m.vocab_out.len());
        prop_assert!((probs.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(probs.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn loss_decreases_with_default_hyperparameters() {
    let (vin, vout, samples) = plain_samples(20);
    for seed in 0..5 {
        let cfg = TrainConfig { max_epochs: 10, early_stop_delta: 0.0, rng_seed: seed, ..Default::default() };
        let mut m = Qep2SeqModel::new(vin.clone(), vout.clone(), ModelDims::default(), cfg.init_range, seed);
        let r = train(&mut m, &samples, &cfg).unwrap();
        assert_eq!(r.epochs(), 10);
        assert!(r.epoch_losses[9] < r.epoch_losses[0], "seed {seed}: {:?}", r.epoch_losses);
    }
}

#[test]
fn memorizable_corpus_is_learned_within_fifty_epochs() {
    let (vin, vout, samples) = plain_samples(50);
    let cfg = TrainConfig { learning_rate: 0.01, early_stop_delta: 0.0, ..Default::default() };
    let mut m = Qep2SeqModel::new(vin, vout, ModelDims::default(), cfg.init_range, 0);
    let r = train(&mut m, &samples, &cfg).unwrap();
    assert!(r.epochs() <= 50);
    let acc = teacher_forcing_accuracy(&m, &samples, Execution::default()).unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn gradients_match_finite_differences_on_five_samples() {
    // Six input and seven output words besides the four reserved tokens.
    let m = random_model(3, 6, 7, ModelDims { hidden: 4, enc_embed: 3, dec_embed: 3 }, 0.5);
    assert_eq!((m.vocab_in.len(), m.vocab_out.len()), (10, 11));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Sample> = (0..5)
        .map(|_| {
            let n = rng.gen_range(1..5);
            let t = rng.gen_range(0..4);
            let input = (0..n).map(|_| rng.gen_range(3..10)).collect();
            let mut target: Vec<usize> = (0..t).map(|_| rng.gen_range(4..11)).collect();
            target.push(2);
            Sample { input, target }
        })
        .collect();
    let report = gradient_check(&m, &samples, 1e-4, Execution::default()).unwrap();
    assert!(!report.is_empty());
    for r in report {
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
    }
}

#[test]
fn beam_of_one_is_greedy_on_random_models() {
    for seed in 0..100 {
        let m = random_model(seed, 3, 4, ModelDims { hidden: 3, enc_embed: 2, dec_embed: 2 }, 1.5);
        let input = [4, 5, 6];
        let g = greedy_decode(&m, &input, 8).unwrap();
        let b = beam_search(&m, &input, BeamConfig { k: 1, max_len: 8 }).unwrap();
        assert_eq!(g, b, "seed {seed}");
    }
}

#[test]
fn decoding_is_deterministic() {
    let m = random_model(9, 3, 5, ModelDims { hidden: 6, enc_embed: 3, dec_embed: 3 }, 1.0);
    let input = [4, 6, 5, 4];
    let cfg = BeamConfig { k: 3, max_len: 10 };
    assert_eq!(greedy_decode(&m, &input, 10).unwrap(), greedy_decode(&m, &input, 10).unwrap());
    assert_eq!(beam_search(&m, &input, cfg).unwrap(), beam_search(&m.clone(), &input, cfg).unwrap());
}

#[test]
fn encoder_recurrent_count() {
    assert_eq!(recurrent_parameter_count(256, 16), 279_552);
}
