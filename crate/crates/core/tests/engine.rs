mod common;

use common::engine_oracle::{channel_deviation, noisy_pipeline_violation, pure_pipeline_deviation};

#[test]
fn noiseless_pipelines_match_state_vector() {
    let d = pure_pipeline_deviation(7, 200);
    assert!(d < 1e-10, "{d:e}");
}

#[test]
fn noisy_pipelines_stay_physical() {
    let v = noisy_pipeline_violation(11, 40);
    assert!(v < 1e-9, "{v:e}");
}

#[test]
fn channels_are_complete_and_compose() {
    let d = channel_deviation(5);
    assert!(d < 1e-12, "{d:e}");
}
