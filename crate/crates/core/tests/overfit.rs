mod common;

#[test]
fn linked_dnn_overfits_ten_records() {
    let r = common::overfit_linked_dnn(11);
    eprintln!("stage1 BCE {:e} in {} steps, stage2 MSE {:e} in {} steps", r.stage1_bce, r.stage1_steps, r.stage2_mse, r.stage2_steps);
    assert!(r.stage1_steps <= 2000 && r.stage2_steps <= 2000);
    assert!(r.stage1_bce < 1e-2);
    assert!(r.stage2_mse < 1e-2);
    assert!(r.stage1_monotone_share > 0.9);
}
