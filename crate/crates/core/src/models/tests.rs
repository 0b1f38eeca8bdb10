use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::gradient_check;

fn tiny_widths() -> ModelWidths {
    ModelWidths {
        channels: vec![2, 3, 2],
        feature: 3,
        motor_hidden: 4,
        hidden: 5,
        mlp_hidden: 4,
        classes: 10,
    }
}

fn random_input(t: usize, size: usize, label: usize, rng: &mut ChaCha8Rng) -> SequenceInput<f64> {
    let images = (0..t)
        .map(|_| Tensor::from_fn(&[3, size, size], |_| rng.gen_range(0.0..1.0)))
        .collect();
    let poses: Vec<[f64; 2]> = (0..t).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    SequenceInput {
        episode_id: "probe".into(),
        label,
        images: Arc::new(images),
        targets: motor_targets(&poses, MotorTarget::NextPose),
        poses,
    }
}

fn objective(model: &CountingModel<f64>, input: &SequenceInput<f64>, dropout_seed: Option<u64>) -> (f64, CountingModel<f64>) {
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let (loss, grads) = model.loss_and_grad(input, 1.0, rng.as_mut()).unwrap();
    (loss.total, grads)
}

#[test]
fn embodied_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = CountingModel::<f64>::new(ModelKind::Embodied, &tiny_widths(), 0.3, &mut rng);
    let input = random_input(3, 8, 2, &mut rng);
    let err = gradient_check(&model, 1e-5, |m| objective(m, &input, Some(9)));
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn vision_gradients_match_finite_differences() {
    for kind in [ModelKind::VisionSingle, ModelKind::VisionPool] {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = CountingModel::<f64>::new(kind, &tiny_widths(), 0.0, &mut rng);
        let input = random_input(3, 8, 7, &mut rng);
        let err = gradient_check(&model, 1e-5, |m| objective(m, &input, None));
        assert!(err < 1e-4, "{kind:?} relative error {err}");
    }
}

#[test]
fn embodied_shapes_follow_episode_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let widths = ModelWidths {
        hidden: 7,
        ..tiny_widths()
    };
    let model = EmbodiedModel::<f64>::new(&widths, 0.3, &mut rng);
    for n in [1, 4] {
        let input = random_input(n, 8, n, &mut rng);
        let pass = model.forward(&input, None).unwrap();
        assert_eq!(pass.logits.len(), 10);
        assert_eq!(pass.motor_preds.shape(), &[n, 2]);
        assert_eq!(pass.trace.layer1.shape(), &[n, 7]);
        assert_eq!(pass.trace.layer2.shape(), &[n, 7]);
        assert_eq!(pass.trace.visual.shape(), &[n, 3]);
    }
}

#[test]
fn zero_parameters_give_uniform_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let input = random_input(3, 8, 1, &mut rng);
    for kind in [ModelKind::Embodied, ModelKind::VisionSingle, ModelKind::VisionPool] {
        let model = CountingModel::<f64>::new(kind, &tiny_widths(), 0.3, &mut rng).zeroed();
        let logits = model.predict(&input).unwrap().logits;
        assert!(logits.iter().all(|&v| v == logits[0]), "{kind:?}: {logits:?}");
    }
}

#[test]
fn evaluation_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = CountingModel::<f64>::new(ModelKind::Embodied, &tiny_widths(), 0.3, &mut rng);
    let input = random_input(4, 8, 4, &mut rng);
    let a = model.predict(&input).unwrap();
    let b = model.predict(&input).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.trace, b.trace);
}

#[test]
fn dropout_changes_training_pass_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = EmbodiedModel::<f64>::new(&tiny_widths(), 0.5, &mut rng);
    let input = random_input(3, 8, 3, &mut rng);
    let eval = model.forward(&input, None).unwrap().logits;
    let mut drop_rng = ChaCha8Rng::seed_from_u64(0);
    let train = model.forward(&input, Some(&mut drop_rng)).unwrap().logits;
    assert_ne!(eval, train);
}

#[test]
fn mean_pool_ignores_frame_order_and_repetition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool = VisionOnlyModel::<f64>::new(&tiny_widths(), VisionMode::Pool, &mut rng);
    let mut single = pool.clone();
    single.mode = VisionMode::Single;
    let input = random_input(4, 8, 4, &mut rng);

    let forward = pool.forward(&input.images).unwrap().logits;
    let reversed: Vec<_> = input.images.iter().rev().cloned().collect();
    assert_eq!(forward, pool.forward(&reversed).unwrap().logits);

    let frame = input.images[1].clone();
    let repeated = vec![frame.clone(); 5];
    let one = single.forward(std::slice::from_ref(&frame)).unwrap().logits;
    let rep = pool.forward(&repeated).unwrap().logits;
    for (a, b) in one.iter().zip(&rep) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(pool.forward(std::slice::from_ref(&frame)).unwrap().logits, one);
}

#[test]
fn single_mode_reads_only_the_final_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = VisionOnlyModel::<f64>::new(&tiny_widths(), VisionMode::Single, &mut rng);
    let input = random_input(3, 8, 3, &mut rng);
    let mut other = (*input.images).clone();
    other[0] = Tensor::zeros(&[3, 8, 8]);
    assert_eq!(
        model.forward(&input.images).unwrap().logits,
        model.forward(&other).unwrap().logits
    );
}

#[test]
fn motor_ablation_removes_pose_dependence() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = EmbodiedModel::<f64>::new(&tiny_widths(), 0.0, &mut rng);
    let input = random_input(3, 8, 3, &mut rng);
    let mut moved = input.clone();
    moved.poses.iter_mut().for_each(|p| p[0] += 0.5);

    let intact = model.forward(&input, None).unwrap().logits;
    assert_ne!(intact, model.forward(&moved, None).unwrap().logits);

    model.motor_ablation = true;
    let a = model.forward(&input, None).unwrap().logits;
    let b = model.forward(&moved, None).unwrap().logits;
    assert_eq!(a, b);
    assert_ne!(a, intact);
}

#[test]
fn empty_sequences_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let input = random_input(0, 8, 1, &mut rng);
    for kind in [ModelKind::Embodied, ModelKind::VisionPool] {
        let model = CountingModel::<f64>::new(kind, &tiny_widths(), 0.0, &mut rng);
        assert!(matches!(model.predict(&input), Err(EclError::EmptySequence(_))));
    }
}

#[test]
fn class_activation_gradient_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = CountingModel::<f64>::new(ModelKind::Embodied, &tiny_widths(), 0.0, &mut rng);
    let input = random_input(2, 8, 2, &mut rng);
    let (a, da) = model.class_activation_gradient(&input, 2, 2).unwrap();
    assert_eq!(a.shape(), &[3, 4, 4]);
    assert_eq!(da.shape(), a.shape());
    assert!(model.class_activation_gradient(&input, 11, 1).is_err());
    assert!(model.class_activation_gradient(&input, 1, 4).is_err());
}

#[test]
fn argmax_ties_go_to_lowest_class() {
    assert_eq!(predicted_class(&[0.0; 10]), 1);
    assert_eq!(predicted_class(&[0.0, 2.0, 2.0, 1.0]), 2);
}
