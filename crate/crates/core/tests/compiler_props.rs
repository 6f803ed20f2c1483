mod common;

use logicloss::compiler::{compile, family_pairs, total_loss, truth_degree, weighted_loss, InputRef, LossWeights};
use logicloss::entailment::builtin_kb;
use logicloss::tnorm::Semantics;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn generator_index() -> impl Strategy<Value = usize> {
    0..common::generator_settings().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn compiled_loss_is_generator_of_truth(seed in any::<u64>(), k in generator_index()) {
        let (_, sem) = &common::generator_settings()[k];
        let g = sem.generator().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tasks = common::task_names();
        let f = common::random_formula(&mut rng, 4, !g.is_strict());
        let samples: Vec<_> = (0..3).map(|_| common::sample(&mut rng, 4, tasks.len(), 0.5)).collect();
        let t = truth_degree(&f, &samples, &tasks, sem).unwrap().value();
        prop_assume!(!g.is_strict() || t >= 1e-9);
        prop_assert!((0.0..=1.0).contains(&t));
        let loss = compile(&f, sem, samples.len(), &tasks).unwrap().eval(&samples).unwrap();
        prop_assert!((loss - g.value(t).unwrap()).abs() <= 1e-9, "{} vs {}", loss, g.value(t).unwrap());
    }

    #[test]
    fn raising_a_gold_answer_never_raises_the_loss(seed in any::<u64>(), k in generator_index()) {
        let (_, sem) = &common::generator_settings()[k];
        let kb = builtin_kb().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<_> = (0..4).map(|_| common::sample(&mut rng, 5, kb.tasks().len(), 0.05)).collect();
        let pairs = family_pairs(&[vec![0, 1, 2]]);
        let loss = total_loss(&batch, &pairs, &kb, sem, 1.0, true).unwrap();
        let (_, grad) = loss.compiled.value_and_grad(&batch).unwrap();
        for (r, d) in loss.compiled.schema.iter().zip(&grad) {
            if matches!(r, InputRef::Answer { .. }) {
                prop_assert!(*d <= 0.0, "{} has gradient {}", r.name(), d);
            }
        }
    }

    #[test]
    fn loss_is_affine_in_beta(seed in any::<u64>(), b1 in 0.0f64..4.0, b2 in 0.0f64..4.0) {
        let kb = builtin_kb().unwrap();
        let sem = Semantics::product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<_> = (0..5).map(|_| common::sample(&mut rng, 5, kb.tasks().len(), 0.05)).collect();
        let pairs = family_pairs(&[vec![0, 1, 2, 3]]);
        let l1 = total_loss(&batch, &pairs, &kb, &sem, b1, true).unwrap();
        let l2 = total_loss(&batch, &pairs, &kb, &sem, b2, true).unwrap();
        prop_assert_eq!(l1.logic, l2.logic);
        prop_assert_eq!(l1.answer, l2.answer);
        let tol = 1e-12 * l1.value.abs().max(1.0);
        prop_assert!((l1.value - (b1 * l1.logic + l1.answer + l1.task)).abs() <= tol);
        prop_assert!((l2.value - l1.value - (b2 - b1) * l1.logic).abs() <= 2.0 * tol);
    }

    #[test]
    fn zero_weights_drop_terms(seed in any::<u64>()) {
        let kb = builtin_kb().unwrap();
        let sem = Semantics::product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch: Vec<_> = (0..3).map(|_| common::sample(&mut rng, 5, kb.tasks().len(), 0.05)).collect();
        let pairs = family_pairs(&[vec![0, 1]]);
        let w = LossWeights { logic: 0.0, answer: 1.0, task: 0.0 };
        let l = weighted_loss(&batch, &pairs, &kb, &sem, w, true).unwrap();
        prop_assert!((l.value - l.answer).abs() <= 1e-12);
        let (_, grad) = l.compiled.value_and_grad(&batch).unwrap();
        for (r, d) in l.compiled.schema.iter().zip(&grad) {
            if matches!(r, InputRef::Task { .. }) {
                prop_assert_eq!(*d, 0.0);
            }
        }
    }
}
