use proptest::prelude::*;

use memtrack_core::config::ExperimentConfig;
use memtrack_core::experiment::simulate_with_manifest;
use memtrack_core::metrics::{
    default_alphas, evaluate, hota, oracle_hota, EvalOptions, FrameDetections,
};
use memtrack_core::policy::PolicyKind;
use memtrack_core::record::{RunManifest, RunRecord};
use memtrack_core::scenario::{
    generate, perceive_all, Event, EventKind, GroundTruth, ScenarioConfig,
};
use memtrack_core::tracker::{
    run_with_state, FrameResult, TrackOutput, TrackerConfig, TrackingMode,
};
use memtrack_core::types::{MaskGeom, Score};

fn scenario(targets: usize, frames: u64, seed: u64, exits: bool) -> ScenarioConfig {
    let mut c = ScenarioConfig::basic(targets, frames, seed);
    if exits && frames > 12 {
        c.events.push(Event {
            kind: EventKind::ExitReentry,
            target: 0,
            start: 3,
            end: frames - 5,
            severity: 1.0,
        });
    }
    c
}

fn tracker(kind: PolicyKind, mode: TrackingMode, capacity: usize) -> TrackerConfig {
    let mut t = TrackerConfig::default();
    t.policy.kind = kind;
    t.mode = mode;
    t.bank_capacity = capacity;
    t
}

fn policy() -> impl Strategy<Value = PolicyKind> {
    prop_oneof![Just(PolicyKind::Coupled), Just(PolicyKind::Decoupled)]
}

fn mode() -> impl Strategy<Value = TrackingMode> {
    prop_oneof![Just(TrackingMode::Pcs), Just(TrackingMode::Pvs)]
}

fn ground_truth_as_run(gt: &GroundTruth) -> RunRecord {
    RunRecord {
        manifest: RunManifest::default(),
        frames: gt
            .frames
            .iter()
            .map(|f| FrameResult {
                t: f.t,
                outputs: f
                    .objects
                    .iter()
                    .map(|o| TrackOutput {
                        track_id: o.identity as u64,
                        slot: o.identity as u32,
                        mask: o.mask,
                        q: Score::ONE,
                        decision: None,
                    })
                    .collect(),
                new_track_ids: vec![],
                presence: Score::ONE,
            })
            .collect(),
    }
}

fn disc() -> impl Strategy<Value = MaskGeom> {
    (0.0..12.0f64, 0.0..12.0f64, 1.5..4.0f64)
        .prop_map(|(x, y, r)| MaskGeom::new(x, y, r, 1.0).unwrap())
}

fn tiny_frame() -> impl Strategy<Value = FrameDetections> {
    (
        prop::collection::vec(prop::option::of(disc()), 4),
        prop::collection::vec(prop::option::of(disc()), 4),
        Just(()).prop_perturb(|_, mut rng| {
            let mut ids = [0u64, 1, 2, 3];
            for i in (1..4).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            ids
        }),
    )
        .prop_map(|(gt, pred, ids)| {
            let gt = gt
                .into_iter()
                .enumerate()
                .filter_map(|(i, m)| m.map(|m| (i, m)))
                .collect();
            let pred = pred
                .into_iter()
                .zip(ids)
                .filter_map(|(m, id)| m.map(|m| (id, m)))
                .collect();
            FrameDetections::new(gt, pred)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn banks_stay_bounded_and_pinned(
        targets in 1usize..6,
        frames in 2u64..40,
        seed in any::<u64>(),
        exits in any::<bool>(),
        kind in policy(),
        mode in mode(),
        capacity in 2usize..9,
    ) {
        let sc = scenario(targets, frames, seed, exits);
        let tr = tracker(kind, mode, capacity);
        let gt = generate(&sc).unwrap();
        let inputs = perceive_all(&gt, &sc).unwrap();
        let (record, state) = run_with_state(&inputs, tr, RunManifest::default()).unwrap();
        prop_assert_eq!(record.frames.len() as u64, frames);
        for t in state.tracks() {
            prop_assert!(t.bank.len() <= capacity);
            prop_assert!(t.bank.entries()[0].conditioning);
            prop_assert_eq!(t.bank.entries()[0].t, t.created_at);
            prop_assert!(t.bank.window().iter().all(|e| !e.conditioning));
        }
        for f in &record.frames {
            for o in &f.outputs {
                if let Some(d) = o.decision {
                    prop_assert_eq!(d.saved, d.score_s > tr.policy.tau);
                }
            }
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), kind in policy(), mode in mode()) {
        let config = ExperimentConfig { scenario: scenario(4, 25, seed, true), tracker: tracker(kind, mode, 7) };
        let a = simulate_with_manifest(&config, RunManifest::default()).unwrap();
        let b = simulate_with_manifest(&config, RunManifest::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ground_truth_scores_perfectly_against_itself(targets in 1usize..6, seed in any::<u64>(), exits in any::<bool>()) {
        let gt = generate(&scenario(targets, 20, seed, exits)).unwrap();
        let m = evaluate(&ground_truth_as_run(&gt), &gt, &EvalOptions::default()).unwrap();
        prop_assert_eq!((m.j, m.f, m.jf, m.hota, m.deta, m.assa, m.idsw), (1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0));
    }

    #[test]
    fn metrics_are_bounded_and_ignore_output_order(seed in any::<u64>(), kind in policy()) {
        let config = ExperimentConfig { scenario: scenario(5, 30, seed, true), tracker: tracker(kind, TrackingMode::Pcs, 7) };
        let sim = simulate_with_manifest(&config, RunManifest::default()).unwrap();
        let m = evaluate(&sim.run, &sim.ground_truth, &EvalOptions::default()).unwrap();
        for v in [m.j, m.f, m.jf, m.hota, m.deta, m.assa] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let mut shuffled = sim.run.clone();
        for f in &mut shuffled.frames {
            f.outputs.reverse();
        }
        prop_assert_eq!(evaluate(&shuffled, &sim.ground_truth, &EvalOptions::default()).unwrap(), m);
    }

    #[test]
    fn hota_matches_exhaustive_oracle(frames in prop::collection::vec(tiny_frame(), 1..=6)) {
        let alphas = default_alphas();
        let fast = hota(&frames, &alphas).unwrap();
        let slow = oracle_hota(&frames, &alphas).unwrap();
        prop_assert!((fast.hota - slow.hota).abs() <= 1e-9);
        prop_assert!((fast.deta - slow.deta).abs() <= 1e-9);
        prop_assert!((fast.assa - slow.assa).abs() <= 1e-9);
    }

    #[test]
    fn per_alpha_hota_is_geometric_mean(frames in prop::collection::vec(tiny_frame(), 1..=6), k in 1usize..20) {
        let alpha = k as f64 / 20.0;
        let s = hota(&frames, &[alpha]).unwrap();
        prop_assert!((s.hota - (s.deta * s.assa).sqrt()).abs() <= 1e-12);
    }
}
