use codelet_engine::hierarchy::{read_snapshot, write_snapshot};
use codelet_engine::simlab::world::{FeedbackRule, SimWorld, WorldActuator, WorldEvent, WorldParams};
use codelet_engine::simlab::{RunConfig, Session};
use proptest::prelude::*;

fn busy_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.session.seed = seed;
    cfg.session.grow_every_ms = 50;
    cfg.session.explore_every_ms = 200;
    cfg.session.prune_every_ms = 100;
    cfg.hierarchy.grace_ms = 400;
    cfg.hierarchy.usage_threshold = 2.0;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn graph_stays_consistent_through_growth_and_pruning(seed in any::<u64>()) {
        let mut session = Session::new(&busy_config(seed)).unwrap();
        for t in 1..=2000u64 {
            session.step().unwrap();
            if t % 50 == 0 {
                let engine = session.engine();
                prop_assert!(engine.graph().audit().is_ok(), "{:?}", engine.graph().audit());
                let c = engine.counters();
                prop_assert!(c.steps_consumed <= c.steps_granted);
            }
        }
        let (engine, log) = session.into_parts();
        prop_assert!(log.counters.executed > 0 && log.counters.codelets_accepted > 0);
        let text = write_snapshot(&engine);
        let loaded = read_snapshot(&text, engine.params().clone()).unwrap();
        prop_assert_eq!(loaded.state_hash(), engine.state_hash());
        prop_assert_eq!(write_snapshot(&loaded), text);
    }

    #[test]
    fn echoes_arrive_on_time_exactly_once(
        seed in any::<u64>(),
        delay in 0u64..400,
        fires in prop::collection::vec((0u64..600, 1u64..7), 1..40),
    ) {
        let mut world = SimWorld::new(WorldParams {
            seed,
            actuators: vec![WorldActuator {
                name: "arm".into(),
                feedback: Some(FeedbackRule { delay_ms: delay, magnitude: 9, duration_ms: 20, cells: 0..2 }),
            }],
            ..WorldParams::default()
        })
        .unwrap();
        let mut fires = fires;
        fires.sort();
        let mut due: Vec<u64> = Vec::new();
        let mut seen: Vec<u64> = Vec::new();
        let mut fi = 0;
        while world.clock() < 1200 {
            while fi < fires.len() && fires[fi].0 <= world.clock() {
                world.apply_actuation(0, &[], world.clock()).unwrap();
                due.push(world.clock() + delay);
                fi += 1;
            }
            let dt = fires.get(fi).map_or(7, |f| f.1);
            let before = world.clock();
            for ev in world.step(dt) {
                if let WorldEvent::Echo { at, scheduled_for, .. } = ev {
                    prop_assert!(at >= scheduled_for);
                    prop_assert!(at > before && at <= before + dt);
                    prop_assert!(at == scheduled_for.max(before + 1));
                    seen.push(scheduled_for);
                }
            }
            prop_assert_eq!(
                world.echoes_scheduled(),
                world.echoes_delivered() + world.pending_echoes() as u64
            );
        }
        due.sort();
        seen.sort();
        prop_assert_eq!(seen, due);
    }
}
