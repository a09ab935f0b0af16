mod common;

use common::{SEEDS, TOLERANCE};

fn assert_all_seeds(name: &str, check: fn(u64) -> f64) {
    for seed in SEEDS {
        let err = check(seed);
        assert!(err < TOLERANCE, "{name}: seed {seed} relative error {err:e}");
    }
}

#[test]
fn ti_conv_gradients() {
    assert_all_seeds("ti_conv", common::ti_conv);
}

#[test]
fn max_pool_gradients() {
    assert_all_seeds("max_pool", common::max_pool);
}

#[test]
fn avg_pool_gradients() {
    assert_all_seeds("avg_pool", common::avg_pool);
}

#[test]
fn fc_gradients() {
    assert_all_seeds("fc", common::fc);
}

#[test]
fn lstm_cell_gradients() {
    for seed in SEEDS {
        let err = common::lstm_cell(seed);
        assert!(err < 1e-6, "lstm cell: seed {seed} relative error {err:e}");
    }
}

#[test]
fn bilstm_gradients() {
    assert_all_seeds("bilstm", common::bilstm);
}

#[test]
fn stressnet_gradients() {
    assert_all_seeds("stressnet", common::stressnet);
}

#[test]
fn ti_conv_time_slices_are_independent() {
    let leaks = (0..100).filter(|&t| common::ti_conv_leaks(t)).count();
    assert_eq!(leaks, 0);
}
