use pmd_core::distill::{ce_loss, kd_loss, pmd_loss, DistillWeights};
use pmd_core::model::{init_params, softmax, Batch, ModelDims};
use pmd_core::sampling::temperature_distribution;
use pmd_core::strategy::{apply_action, Action};
use proptest::prelude::*;

fn dims(vocab: usize) -> ModelDims {
    ModelDims {
        vocab,
        num_languages: 2,
        embed_dim: 3,
        hidden_dim: 4,
    }
}

fn batch(vocab: usize, tokens: &[(u32, u32)]) -> Batch {
    let (s, t): (Vec<u32>, Vec<u32>) = tokens.iter().map(|&(a, b)| (a % vocab as u32, b % vocab as u32)).unzip();
    Batch::new(1, vec![s], vec![t]).unwrap()
}

fn entropy_rows(p: &pmd_core::grad::Tensor) -> f64 {
    let n = p.shape()[0];
    let h: f64 = p.data().iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum();
    h / n as f64
}

proptest! {
    #[test]
    fn distillation_loss_is_at_least_teacher_entropy(
        vocab in 3usize..8,
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        tokens in prop::collection::vec((any::<u32>(), any::<u32>()), 1..6),
    ) {
        let b = batch(vocab, &tokens);
        let student = init_params(dims(vocab), s1).unwrap();
        let teacher = init_params(dims(vocab), s2).unwrap();
        let q = teacher.predict_distribution(&b).unwrap();
        let kd = kd_loss(&student, &q, &b).unwrap().value;
        let h = entropy_rows(&q);
        prop_assert!(kd >= h - 1e-12, "kd {} below entropy {}", kd, h);
        let own = kd_loss(&teacher, &q, &b).unwrap().value;
        prop_assert!((own - h).abs() < 1e-12);
    }

    #[test]
    fn mixed_loss_lies_between_its_parts(
        vocab in 3usize..8,
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        alpha in 0.0f64..=1.0,
        tokens in prop::collection::vec((any::<u32>(), any::<u32>()), 1..6),
    ) {
        let b = batch(vocab, &tokens);
        let student = init_params(dims(vocab), s1).unwrap();
        let teacher = init_params(dims(vocab), s2).unwrap();
        let ce = ce_loss(&student, &b).unwrap().value;
        let kd = kd_loss(&student, &teacher.predict_distribution(&b).unwrap(), &b).unwrap().value;
        let mixed = pmd_loss(&b, &student, &teacher, alpha).unwrap().value;
        prop_assert!(mixed >= ce.min(kd) - 1e-12 && mixed <= ce.max(kd) + 1e-12);
    }

    #[test]
    fn softmax_rows_are_distributions(
        vocab in 3usize..8,
        seed in any::<u64>(),
        tokens in prop::collection::vec((any::<u32>(), any::<u32>()), 1..6),
    ) {
        let b = batch(vocab, &tokens);
        let p = softmax(&init_params(dims(vocab), seed).unwrap().forward_logits(&b).unwrap());
        for i in 0..p.shape()[0] {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&x| x > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_preserves_size_order_and_flattens_with_temperature(
        mut sizes in prop::collection::vec(1u64..5_000_000, 2..8),
        tau in 1.0f64..20.0,
    ) {
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let cold = temperature_distribution(&sizes, 1.0).unwrap();
        let warm = temperature_distribution(&sizes, tau).unwrap();
        prop_assert!((warm.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(warm.probs().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(warm.entropy() >= cold.entropy() - 1e-12);
    }

    #[test]
    fn actions_are_monotone(x in 0.01f64..0.99, mu in 0.0f64..2.0) {
        let up = apply_action(x, Action::Up, mu).unwrap();
        let down = apply_action(x, Action::Down, mu).unwrap();
        prop_assert!(down <= x && x <= up);
        prop_assert_eq!(apply_action(x, Action::Keep, mu).unwrap(), x);
    }

    #[test]
    fn weights_outside_unit_interval_are_rejected(w in prop::collection::vec(-1.0f64..2.0, 1..6)) {
        let valid = w.iter().all(|x| (0.0..=1.0).contains(x));
        prop_assert_eq!(DistillWeights::new(w).is_ok(), valid);
    }
}
