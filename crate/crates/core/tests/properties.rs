use std::collections::HashSet;

use music_intent::calibrate::{
    apply_thresholds, best_step, calibrate_thresholds, grid_value, GRID_STEPS,
};
use music_intent::context::{build_context, ContextSpec, ContextWindow};
use music_intent::corpus::{
    label_frequency_report, parse_dialogues, stratified_split, write_dialogues, SplitPart,
    MUSICAL_ATTRIBUTES, USER_INTENTS,
};
use music_intent::eval::{macro_f1, per_label_f1, Confusion};
use music_intent::features::{
    bow_vectorize, fit_vocabulary, tfidf_vectorize, DenseVector, FeatureVector, SparseVector,
};
use music_intent::model::{init_model, TrainConfig};
use music_intent::synthetic::generate_corpus;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn f1_at(probs: &[f64], truths: &[bool], t: f64) -> f64 {
    let mut c = Confusion::default();
    for (&p, &y) in probs.iter().zip(truths) {
        c.add(p > t, y);
    }
    c.f1()
}

fn brute_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let tp = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count() as f64;
    let pp = pred.iter().filter(|p| **p).count() as f64;
    let ap = truth.iter().filter(|t| **t).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / pp, tp / ap);
    2.0 * p * r / (p + r)
}

fn problem(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (
        prop::collection::vec(
            prop_oneof![0.0..=1.0f64, (0u8..=100).prop_map(grid_value)],
            n,
        ),
        prop::collection::vec(any::<bool>(), n),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn calibrated_threshold_beats_every_grid_point((probs, truths) in problem(30)) {
        let step = best_step(Array1::from(probs.clone()).view(), Array1::from(truths.clone()).view());
        prop_assert!(step <= GRID_STEPS);
        if !truths.iter().any(|t| *t) {
            prop_assert_eq!(step, GRID_STEPS);
        } else {
            let chosen = f1_at(&probs, &truths, grid_value(step));
            for k in 0..=GRID_STEPS {
                let other = f1_at(&probs, &truths, grid_value(k));
                prop_assert!(chosen >= other);
                if k < step {
                    prop_assert!(chosen > other, "tie not resolved to the smallest step");
                }
            }
        }
    }

    #[test]
    fn raising_a_threshold_never_adds_positives(
        probs in prop::collection::vec(0.0..=1.0f64, 1..40),
        a in 0u8..=100,
        b in 0u8..=100,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let p = Array2::from_shape_vec((probs.len(), 1), probs).unwrap();
        let count = |step| {
            let t = music_intent::calibrate::ThresholdVector::from_steps(vec!["l".into()], vec![step]).unwrap();
            apply_thresholds(p.view(), &t).unwrap().iter().filter(|x| **x).count()
        };
        prop_assert!(count(hi) <= count(lo));
    }

    #[test]
    fn calibrated_thresholds_are_grid_points(
        (rows, cols, data) in (1usize..20, 1usize..6).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec((0.0..=1.0f64, any::<bool>()), r * c))
        })
    ) {
        let probs = Array2::from_shape_vec((rows, cols), data.iter().map(|d| d.0).collect()).unwrap();
        let truths = Array2::from_shape_vec((rows, cols), data.iter().map(|d| d.1).collect()).unwrap();
        let labels: Vec<String> = (0..cols).map(|j| format!("l{j}")).collect();
        let t = calibrate_thresholds(probs.view(), truths.view(), &labels).unwrap();
        for v in t.values() {
            prop_assert!((0..=100).any(|k| grid_value(k) == v));
        }
    }

    #[test]
    fn macro_f1_is_mean_of_label_f1(
        (rows, cols, data) in (1usize..40, 1usize..15).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(any::<(bool, bool)>(), r * c))
        })
    ) {
        let preds = Array2::from_shape_vec((rows, cols), data.iter().map(|d| d.0).collect()).unwrap();
        let truths = Array2::from_shape_vec((rows, cols), data.iter().map(|d| d.1).collect()).unwrap();
        let mut sum = 0.0;
        for j in 0..cols {
            let c = per_label_f1(preds.view(), truths.view(), j).unwrap();
            let brute = brute_f1(&preds.column(j).to_vec(), &truths.column(j).to_vec());
            prop_assert!((c.f1() - brute).abs() < 1e-12);
            for m in [c.precision(), c.recall(), c.f1()] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
            sum += c.f1();
        }
        let m = macro_f1(preds.view(), truths.view()).unwrap();
        prop_assert!((m - sum / cols as f64).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_row_order(
        rows in prop::collection::vec(prop::collection::vec(any::<(bool, bool)>(), 4), 1..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let build = |rows: &[Vec<(bool, bool)>]| {
            let n = rows.len();
            let p = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j].0);
            let t = Array2::from_shape_fn((n, 4), |(i, j)| rows[i][j].1);
            macro_f1(p.view(), t.view()).unwrap()
        };
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(build(&rows), build(&shuffled));
    }

    #[test]
    fn tfidf_is_unit_norm_and_order_free(
        docs in prop::collection::vec(prop::collection::vec("[a-f]{1,3}", 1..8), 1..10),
        query in prop::collection::vec("[a-h]{1,3}", 1..10),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let vocab = fit_vocabulary(&docs).unwrap();
        let mut shuffled = query.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let v = tfidf_vectorize(&query, &vocab);
        prop_assert_eq!(&v, &tfidf_vectorize(&shuffled, &vocab));
        prop_assert_eq!(bow_vectorize(&query, &vocab), bow_vectorize(&shuffled, &vocab));
        if query.iter().any(|t| vocab.index_of(t).is_some()) {
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
        } else {
            prop_assert!(v.is_empty());
        }
        for i in 0..vocab.len() {
            prop_assert!(vocab.document_frequency(i) <= vocab.corpus_size());
        }
    }
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradient_matches_finite_differences(
        seed in any::<u64>(),
        hidden in prop::collection::vec(2usize..6, 0..3),
        inputs in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, 5), 1..5),
        targets in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 5),
        sparse in any::<bool>(),
        params in prop::collection::vec(-0.8..0.8f64, 97),
    ) {
        let config = TrainConfig { seed, hidden_dims: hidden, ..TrainConfig::default() };
        let mut model = init_model(5, 3, &config).unwrap();
        // Zero initial biases put dead-input units exactly on the ReLU kink; move off it.
        let generic: Vec<f64> = params.iter().cycle().take(model.parameter_count()).copied().collect();
        model.set_parameters(&generic);
        let features: Vec<FeatureVector> = inputs
            .iter()
            .map(|x| {
                if sparse {
                    let entries = x.iter().copied().enumerate().filter(|(i, _)| i % 2 == 0).collect();
                    FeatureVector::Sparse(SparseVector::new(5, entries).unwrap())
                } else {
                    FeatureVector::Dense(DenseVector::new(x.clone()).unwrap())
                }
            })
            .collect();
        let n = features.len();
        let y = Array2::from_shape_fn((n, 3), |(i, j)| targets[i][j]);
        let (_, grads) = model.loss_and_gradients(&features, y.view()).unwrap();
        let analytic = grads.flatten();
        let base = model.parameters();
        let h = 1e-6;
        let mut numeric = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + h;
            model.set_parameters(&p);
            let up = model.loss(&features, y.view()).unwrap();
            p[k] = base[k] - h;
            model.set_parameters(&p);
            let down = model.loss(&features, y.view()).unwrap();
            numeric.push((up - down) / (2.0 * h));
        }
        model.set_parameters(&base);
        let err = max_rel_err(&analytic, &numeric);
        prop_assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn probabilities_stay_inside_unit_interval(
        seed in any::<u64>(),
        scale in prop_oneof![Just(1.0), Just(1e3), Just(1e6)],
        x in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let model = init_model(4, 3, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        let v = FeatureVector::Dense(DenseVector::new(x.iter().map(|v| v * scale).collect()).unwrap());
        for p in model.forward(&v).unwrap() {
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn context_windows_nest_as_suffixes(n in 1usize..6, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let dialogues = generate_corpus(n, seed);
        let seekers: Vec<(usize, usize)> = dialogues
            .iter()
            .enumerate()
            .flat_map(|(d, dl)| dl.seeker_turns().map(move |(t, _)| (d, t)))
            .collect();
        let (d, t) = seekers[pick.index(seekers.len())];
        let dialogue = &dialogues[d];
        let texts: Vec<String> = ContextWindow::ALL
            .iter()
            .map(|w| build_context(dialogue, t, &ContextSpec::new(*w)).unwrap().input_text)
            .collect();
        prop_assert_eq!(&texts[0], &dialogue.turns[t].text);
        for pair in texts.windows(2) {
            prop_assert!(pair[1].ends_with(pair[0].as_str()));
        }
        let later: Vec<&str> = dialogue.turns[t + 1..].iter().map(|x| x.text.as_str()).collect();
        let widest = texts.last().unwrap();
        let history: String = dialogue.turns[..=t].iter().map(|x| x.text.as_str()).collect();
        for text in later {
            if !history.contains(text) {
                prop_assert!(!widest.contains(text));
            }
        }
    }

    #[test]
    fn corpus_round_trips_through_jsonl(n in 1usize..8, seed in any::<u64>()) {
        let dialogues = generate_corpus(n, seed);
        let mut buf = Vec::new();
        write_dialogues(&mut buf, &dialogues).unwrap();
        prop_assert_eq!(parse_dialogues(&buf).unwrap(), dialogues);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn split_is_a_stratified_partition(n in 200usize..600, corpus_seed in any::<u64>(), split_seed in any::<u64>()) {
        let dialogues = generate_corpus(n, corpus_seed);
        let split = stratified_split(&dialogues, split_seed).unwrap();
        let mut seen = HashSet::new();
        for part in SplitPart::ALL {
            for id in split.ids(part) {
                prop_assert!(seen.insert(id.clone()), "{} assigned twice", id);
            }
        }
        let all: HashSet<String> = dialogues.iter().map(|d| d.id.clone()).collect();
        prop_assert_eq!(&seen, &all);
        let train = n * 8 / 10;
        prop_assert_eq!(split.ids(SplitPart::Train).len(), train);
        let rest = n - train;
        prop_assert!(split.ids(SplitPart::Validation).len().abs_diff(split.ids(SplitPart::Test).len()) <= 1);
        prop_assert_eq!(split.ids(SplitPart::Validation).len() + split.ids(SplitPart::Test).len(), rest);
        prop_assert!(split.max_label_deviation(&dialogues) <= 0.05);
        prop_assert_eq!(&stratified_split(&dialogues, split_seed).unwrap(), &split);

        let global = label_frequency_report(&dialogues);
        let parts: Vec<_> = SplitPart::ALL
            .iter()
            .map(|p| {
                let ds: Vec<_> = split.select(&dialogues, *p).into_iter().cloned().collect();
                label_frequency_report(&ds)
            })
            .collect();
        for label in USER_INTENTS.iter().chain(MUSICAL_ATTRIBUTES.iter()) {
            let total: usize = parts.iter().map(|r| r.get(label).unwrap().count).sum();
            prop_assert_eq!(total, global.get(label).unwrap().count);
        }
    }
}
