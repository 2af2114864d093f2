mod common;

use common::{grad_check_case, random_grad_case, rows_of, NaiveNet};
use gwmlp::network::{init_mlp, mlp_predict, mse_loss, Activation};
use gwmlp::numerics::RngState;

#[test]
fn backprop_matches_central_differences() {
    let mut rng = RngState::new(20240611);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let case = random_grad_case(&mut rng, 1e-3);
        worst = worst.max(grad_check_case(&case, 1e-6));
    }
    assert!(worst <= 1e-5, "max relative error {worst:e}");
}

#[test]
fn naive_oracle_agrees_with_library_forward() {
    let mut rng = RngState::new(5);
    for _ in 0..20 {
        let case = random_grad_case(&mut rng, 0.0);
        let naive = NaiveNet::from_model(&case.model);
        let pred = mlp_predict(&case.model, &case.x).unwrap();
        for (i, row) in rows_of(&case.x).iter().enumerate() {
            let diff = (naive.output(row) - pred.data()[i]).abs();
            assert!(diff < 1e-12, "{diff:e}");
        }
        let lib = mse_loss(&pred, &case.y).unwrap();
        let oracle = naive.loss(&rows_of(&case.x), case.y.data());
        assert!((lib - oracle).abs() < 1e-12);
    }
}

#[test]
fn he_initialized_default_width_model_passes_check() {
    // Full-width hidden layer as used in training, with inputs that clear the kink.
    let mut rng = RngState::new(99);
    let model = init_mlp(&[3, 40, 1], Activation::Linear, &mut rng).unwrap();
    let x = rng.standard_normal_matrix(4, 3);
    let y = rng.standard_normal_matrix(4, 1);
    let naive = NaiveNet::from_model(&model);
    let clear = rows_of(&x).iter().all(|r| {
        naive
            .pre_activations(r)
            .iter()
            .flatten()
            .all(|z| z.abs() >= 1e-3)
    });
    assert!(
        clear,
        "fixture must keep pre-activations off zero; pick another seed"
    );
    let case = common::GradCase { model, x, y };
    assert!(grad_check_case(&case, 1e-6) <= 1e-5);
}
