mod common;

use common::*;
use hst_core::archive::WeightsArchive;
use hst_core::experiment::{build_plans, run_experiment};
use hst_core::models::ModelKind;
use hst_core::staged::{network_checksum, resolve_init, run_hst, train_stage, InitRule};
use hst_core::BlockSymbol::{self, *};

fn bitwise(a: &[hst_core::Tensor32], b: &[hst_core::Tensor32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bitwise_eq(y))
}

#[test]
fn linked_dnn_stage_two_starts_from_stage_one() {
    let site = small_site(1);
    let plans = build_plans::<f32>(&quick_cfg(ModelKind::LinkedDnn, 3, 4), &site.train, None, None).unwrap();
    let s1 = train_stage(&plans[0], resolve_init(&plans[0], &[]).unwrap()).unwrap();
    let init2 = resolve_init(&plans[1], std::slice::from_ref(&s1)).unwrap();
    assert!(bitwise(&init2.block_params(El).unwrap(), &s1.params(EBf).unwrap()));
    assert!(bitwise(&init2.block_params(Hl).unwrap(), &s1.params(HBf).unwrap()));
    let r_rule = &plans[1].blocks.iter().find(|b| b.symbol == R).unwrap().init;
    assert!(matches!(r_rule, InitRule::Random { .. }));
}

#[test]
fn linked_cnnloc_chain_of_copies() {
    let site = small_site(2);
    let plans = build_plans::<f32>(&quick_cfg(ModelKind::LinkedCnnloc, 4, 3), &site.train, None, None).unwrap();
    assert!(plans[0].blocks.iter().all(|b| !matches!(b.init, InitRule::LinkedCopy { .. })));
    let s1 = train_stage(&plans[0], resolve_init(&plans[0], &[]).unwrap()).unwrap();
    let init2 = resolve_init(&plans[1], std::slice::from_ref(&s1)).unwrap();
    assert!(bitwise(&init2.block_params(Ef).unwrap(), &s1.params(Eb).unwrap()));
    let s2 = train_stage(&plans[1], init2).unwrap();
    let prior = [s1, s2];
    let init3 = resolve_init(&plans[2], &prior).unwrap();
    assert!(bitwise(&init3.block_params(El).unwrap(), &prior[1].params(Ef).unwrap()));
    assert!(bitwise(&init3.block_params(Cl).unwrap(), &prior[1].params(Cf).unwrap()));
}

#[test]
fn earlier_stages_stay_frozen_and_copies_do_not_alias() {
    let site = small_site(3);
    let plans = build_plans::<f32>(&quick_cfg(ModelKind::LinkedDnn, 5, 5), &site.train, None, None).unwrap();
    let s1 = train_stage(&plans[0], resolve_init(&plans[0], &[]).unwrap()).unwrap();
    let before = s1.archive("linked-dnn").to_json();
    let mut prior = vec![s1];
    let init2 = resolve_init(&plans[1], &prior).unwrap();
    let s2 = train_stage(&plans[1], init2).unwrap();
    assert_eq!(prior[0].archive("linked-dnn").to_json(), before);
    assert!(!bitwise(&s2.params(El).unwrap(), &prior[0].params(EBf).unwrap()));

    // Mutating a fresh copy must leave the source untouched.
    let mut copy = resolve_init(&plans[1], &prior).unwrap();
    let mut p = copy.block_params(El).unwrap();
    p[0].data_mut()[0] += 1.0;
    copy.set_block_params(El, &p).unwrap();
    assert_eq!(prior[0].archive("linked-dnn").to_json(), before);
    assert_eq!(network_checksum(&prior[0].network), prior[0].checksum);
    prior.push(s2);
}

#[test]
fn run_hst_is_deterministic() {
    let site = small_site(4);
    let cfg = quick_cfg(ModelKind::LinkedCnnloc, 9, 3);
    let a = run_hst(&build_plans::<f32>(&cfg, &site.train, None, None).unwrap()).unwrap();
    let b = run_hst(&build_plans::<f32>(&cfg, &site.train, None, None).unwrap()).unwrap();
    assert_eq!(a.len(), 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.checksum, y.checksum);
        assert_eq!(x.archive("m").checksum, y.archive("m").checksum);
    }
}

#[test]
fn full_pipeline_writes_one_archive_per_stage() {
    let site = small_site(5);
    for (kind, stages) in [(ModelKind::LinkedDnn, 2), (ModelKind::LinkedCnnloc, 3), (ModelKind::ReferenceDnn, 1)] {
        let dir = tempfile::tempdir().unwrap();
        let run = run_experiment::<f32>(&quick_cfg(kind, 1, 3), &site.train, dir.path()).unwrap();
        assert_eq!(run.stages.len(), stages);
        for s in 1..=stages {
            let a = WeightsArchive::load(&dir.path().join(format!("stage{s}.weights.json"))).unwrap();
            assert_eq!(a.model, kind.as_str());
        }
        assert!(!dir.path().join(format!("stage{}.weights.json", stages + 1)).exists());
        // The pretrained encoder is what stage 1 started from.
        let sae = WeightsArchive::load(&dir.path().join("sae.weights.json")).unwrap();
        assert_eq!(sae.symbols(), vec![BlockSymbol::Encoder]);
    }
}

#[test]
fn single_stage_degenerates_to_conventional_training() {
    let site = small_site(6);
    let mut plans = build_plans::<f32>(&quick_cfg(ModelKind::LinkedDnn, 2, 3), &site.train, None, None).unwrap();
    plans.truncate(1);
    let r = run_hst(&plans).unwrap();
    assert_eq!(r.len(), 1);
    assert!(r[0].frozen);
}
