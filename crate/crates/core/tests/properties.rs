use conflict_core::bench::{stress_records, stress_tables_with_kpis};
use conflict_core::cms::{
    cmc_mitigate, pmon_step, run_control_loop, Actor, Classifier, CmsState, EventKind, Scenario, ScriptedAction,
    Surrogate,
};
use conflict_core::genc::{
    select_icp, simulate_to_vec, synthesize_entities, Buckets, Intensity, IntensityProfile, SimConfig,
};
use conflict_core::graph::encode_record;
use conflict_core::learn::{softmax, Architecture, ClassifierModel, Input};
use conflict_core::rule_engine::annotate;
use conflict_core::{IcpId, KpiId, XAppId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn intensity() -> impl Strategy<Value = Intensity> {
    prop_oneof![Just(Intensity::Low), Just(Intensity::Medium), Just(Intensity::High)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pmon_triggers_exactly_at_persistence(start in 0u64..50, len in 1u64..40, persistence in 1u64..20) {
        let mut state = CmsState::new(Classifier::RuleEngine);
        state.persistence_required = persistence;
        let mut triggers = Vec::new();
        for t in 0..start + len + 5 {
            let below = t >= start && t < start + len;
            let r = pmon_step(&[if below { 0.5 } else { 0.9 }], &[0.8], t, &mut state);
            if r.trigger {
                triggers.push(t);
            }
            prop_assert_eq!(state.vk_store.contains_key(&KpiId(0)), below);
        }
        let expected: Vec<u64> = if len > persistence { vec![start + persistence] } else { vec![] };
        prop_assert_eq!(triggers, expected);
    }

    #[test]
    fn mitigation_never_lowers_min_margin(
        centers in prop::collection::vec(-120.0f64..120.0, 1..4),
        sigma in 20.0f64..80.0,
        tau in 0.3f64..0.95,
        current in -150.0f64..150.0,
    ) {
        let k = centers.len();
        let s = Surrogate { sigma, drivers: vec![IcpId(0); k], centers };
        let kpis: Vec<KpiId> = (0..k).map(KpiId::new).collect();
        let m = cmc_mitigate(IcpId(0), &kpis, &[current], &vec![tau; k], &s).unwrap();
        prop_assert!(m.min_after() >= m.min_before() - 1e-12);
        prop_assert_eq!(m.feasible, m.min_after() > 0.0);
    }

    #[test]
    fn genc_rows_are_well_formed(m in 2usize..9, seed in 0u64..1000, level in intensity()) {
        let model = synthesize_entities(m, 0.3, seed).unwrap();
        let cfg = SimConfig::new(400, 50.0, seed);
        let a = simulate_to_vec(&model, &level.profile(), &cfg).unwrap();
        let b = simulate_to_vec(&model, &level.profile(), &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for r in &a {
            prop_assert!(r.kpi_values.iter().all(|v| *v > 0.0 && *v <= 1.0));
            prop_assert_eq!(annotate(r, &model.mappings).unwrap().label, r.label);
            prop_assert!(r.vk.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::array::uniform4(-700.0f64..700.0)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_output_ignores_node_order(seed in 0u64..500, shift in 1usize..7) {
        let model = synthesize_entities(5, 0.3, seed % 7).unwrap();
        let rows = simulate_to_vec(&model, &Intensity::High.profile(), &SimConfig::new(3000, 50.0, seed)).unwrap();
        let r = rows.iter().find(|r| !r.vk.is_empty() && r.rcp.is_some()).unwrap();
        let g = encode_record(r, &model.mappings).unwrap();
        let n = g.node_count();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let net = ClassifierModel::init(Architecture::GraphMp, 8, 2, seed);
        let a = net.forward(&Input::from_graph(&g)).unwrap();
        let b = net.forward(&Input::from_graph(&g.permuted(&perm))).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn event_log_references_resolve(t in 1u64..200, value in -150.0f64..150.0, xapp in 0u32..2) {
        let s = Scenario::es_mro();
        let actions = [ScriptedAction { t, xapp: XAppId(xapp), icp: IcpId(0), value }];
        let run = run_control_loop(&s, &actions, 260, Classifier::RuleEngine).unwrap();
        for e in &run.events {
            match &e.kind {
                EventKind::Classification { trigger_seq, .. } => {
                    let is_trigger = matches!(run.events[*trigger_seq as usize].kind, EventKind::Trigger { .. });
                    prop_assert!(is_trigger);
                }
                EventKind::Mitigation { classification_seq, new, .. } => {
                    let c = &run.events[*classification_seq as usize];
                    let is_classification = matches!(c.kind, EventKind::Classification { .. });
                    prop_assert!(is_classification);
                    prop_assert!(run.rcp_log.iter().any(|r| r.actor == Actor::Cms && r.t == e.t && r.new == *new));
                }
                _ => {}
            }
        }
        prop_assert!(run.events.windows(2).all(|w| w[0].t <= w[1].t && w[0].seq + 1 == w[1].seq));
    }
}

#[test]
fn selection_follows_bucket_probabilities() {
    let buckets = Buckets {
        shared: vec![IcpId(0), IcpId(1)],
        indirect: vec![IcpId(2), IcpId(3), IcpId(4)],
        unassigned: vec![IcpId(5)],
    };
    let profile = IntensityProfile::medium();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000.0;
    let mut counts = [0.0; 3];
    for _ in 0..n as usize {
        let i = select_icp(&buckets, &profile, &mut rng).unwrap().index();
        counts[match i {
            0 | 1 => 0,
            2..=4 => 1,
            _ => 2,
        }] += 1.0;
    }
    for (c, p) in counts.iter().zip(IntensityProfile::BUCKETS) {
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((c - n * p).abs() <= 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn rule_engine_work_doubles_with_violations() {
    // every violated KPI scans its full manager set once
    for v in [8usize, 16, 32, 64] {
        let small = stress_tables_with_kpis(10, v);
        let large = stress_tables_with_kpis(10, 2 * v);
        let a = annotate(&stress_records(&small, 1, None)[0], &small).unwrap().touched;
        let b = annotate(&stress_records(&large, 1, None)[0], &large).unwrap().touched;
        assert_eq!(b.v, 2 * a.v);
        assert_eq!(b.x_k, 2 * a.x_k);
        assert_eq!(b.x_p, a.x_p);
    }
}
