use std::path::PathBuf;

use dcnet_core::metrics::RunMetrics;
use dcnet_core::sim::scenario::{FaultConfig, FaultKind, LossConfig, Sizing, TransportMode};
use dcnet_core::sim::{self, routing::PolicyKind, Scenario, SimError};
use dcnet_core::traffic::{ExplicitFlow, FlowListSpec, Motif};
use dcnet_core::SimTime;
use proptest::prelude::*;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"));
    Scenario::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn run(s: &Scenario) -> RunMetrics {
    match sim::run(s) {
        Ok(m) => m,
        Err(e) => panic!("{}: {e}", s.name),
    }
}

fn inline(text: &str) -> Scenario {
    Scenario::from_toml(text).unwrap()
}

fn assert_conserved(m: &RunMetrics) {
    let c = &m.counters;
    assert_eq!(
        c.injected_wire_bytes,
        c.arrived_wire_bytes + c.dropped_wire_bytes + c.in_flight_wire_bytes,
        "{}: injected bytes must be delivered, dropped or in flight",
        m.scenario_id
    );
}

fn assert_exactly_once(m: &RunMetrics) {
    for f in &m.flows {
        assert!(f.finish.is_some(), "{}: flow {} incomplete", m.scenario_id, f.flow_id);
        assert_eq!(f.delivered_bytes, f.bytes, "{}: flow {}", m.scenario_id, f.flow_id);
    }
}

const LOSSLESS_SUITE: [&str; 4] = ["incast", "obs_all_to_all", "ls_chain", "congestion_tree"];

#[test]
fn lossless_suite_never_drops() {
    for name in LOSSLESS_SUITE {
        let m = run(&scenario(name));
        assert_eq!(m.total_drops(), 0, "{name}");
        assert_exactly_once(&m);
        assert_conserved(&m);
        assert_eq!(m.headroom_bytes, 129_216);
    }
}

#[test]
fn lossless_holds_across_fabric_shapes() {
    for tiers in 1..=3 {
        for (gbps, cable) in [(100.0, 0.0), (400.0, 50.0), (800.0, 0.0), (800.0, 200.0)] {
            for mode in [TransportMode::GoBackN, TransportMode::Selective] {
                let mut s = scenario("incast");
                s.topology.tiers = tiers;
                s.topology.radix = if tiers == 1 { 16 } else { 4 };
                s.topology.bandwidth_gbps = gbps;
                s.topology.cable_m = cable;
                s.transport.mode = mode;
                let m = run(&s);
                assert_eq!(m.total_drops(), 0, "tiers {tiers}, {gbps} Gb/s, {cable} m, {mode:?}");
                assert_exactly_once(&m);
            }
        }
    }
}

#[test]
fn halved_headroom_drops_under_incast() {
    let mut s = scenario("incast");
    let full = Scenario::auto_headroom(&s.geometry().unwrap());
    s.pfc.headroom_bytes = Sizing::Bytes(full / 2);
    let m = run(&s);
    assert!(m.counters.overflow_drops >= 1);
    assert_conserved(&m);
    // go-back-n still recovers every byte
    assert_exactly_once(&m);
}

#[test]
fn reruns_are_byte_identical() {
    for name in ["incast", "victim_shared", "transport_go_back_n", "ls_chain"] {
        let s = scenario(name);
        let csv = |m: &RunMetrics| {
            let mut flows = Vec::new();
            let mut ports = Vec::new();
            m.write_flows_csv(&mut flows).unwrap();
            m.write_ports_csv(&mut ports).unwrap();
            (flows, ports)
        };
        assert_eq!(csv(&run(&s)), csv(&run(&s)), "{name}");
    }
}

#[test]
fn different_seeds_change_the_loss_trace() {
    let a = scenario("transport_selective");
    let mut b = a.clone();
    b.seed += 1;
    let drops = |s: &Scenario| run(s).flows[0].drops;
    let mut c = a.clone();
    c.seed += 2;
    assert!(drops(&a) != drops(&b) || drops(&b) != drops(&c));
}

#[test]
fn horizon_cut_keeps_bytes_accounted() {
    let mut s = scenario("transport_go_back_n");
    s.horizon_us = 30.0;
    let m = run(&s);
    assert!(m.flows[0].finish.is_none());
    assert!(m.counters.in_flight_wire_bytes > 0);
    assert_conserved(&m);
    assert_eq!(m.end_time, SimTime::from_us(30));
}

#[test]
fn congestion_tree_spans_tiers() {
    let m = run(&scenario("congestion_tree"));
    let tiers_with_pauses = m.counters.pause_frames_by_tier.iter().filter(|&&n| n > 0).count();
    assert!(tiers_with_pauses >= 2, "{:?}", m.counters.pause_frames_by_tier);
    assert!(m.counters.max_paused_tiers >= 2);
    // the destination's own link never needs pausing: only the incast spreads upstream
    let first = m.counters.first_pause_by_tier;
    assert!(first.iter().flatten().count() >= 2);
}

#[test]
fn stuck_pause_trips_the_watchdog() {
    let mut s = scenario("ls_chain");
    s.watchdog_us = 50.0;
    s.faults.push(FaultConfig {
        kind: FaultKind::StuckPause,
        from: "h0".into(),
        to: "edge0.0".into(),
        class: 3,
        at_us: 0.0,
    });
    match sim::run(&s) {
        Err(SimError::Deadlock(rep)) => {
            assert!(
                rep.paused_ports.iter().any(|p| p.starts_with("h0:0:3")),
                "{:?}",
                rep.paused_ports
            );
            assert!(!rep.incomplete_flows.is_empty());
            assert!(rep.time - rep.last_progress >= SimTime::from_us(50), "{}", rep.render());
            assert!(rep.render().contains("h0:0:3"));
        }
        other => panic!("expected deadlock, got {:?}", other.map(|m| m.end_time)),
    }
}

#[test]
fn empty_traffic_does_nothing() {
    let m = run(&inline("seed = 1\n"));
    assert!(m.flows.is_empty());
    assert_eq!(m.end_time, SimTime::ZERO);
    assert_eq!(m.counters.events, 0);
    assert_eq!(m.counters.injected_wire_bytes, 0);
}

#[test]
fn single_long_flow_reaches_line_rate() {
    let s = inline(
        r#"
seed = 3
[topology]
tiers = 2
radix = 4
[[traffic]]
motif = "flows"
flows = [{ src = 0, dst = 7, bytes = 100_000_000 }]
"#,
    );
    let m = run(&s);
    let f = &m.flows[0];
    let efficiency = 9150.0 / 9216.0;
    let goodput = f.goodput_gbps().unwrap();
    assert!(goodput >= 0.95 * 800.0 * efficiency, "{goodput}");
    assert!(goodput <= 800.0 * efficiency);
    assert_eq!(f.retx_bytes, 0);
}

#[test]
fn incast_is_bounded_by_the_receiver_link() {
    let m = run(&scenario("incast"));
    let total: u64 = m.flows.iter().map(|f| f.bytes).sum();
    assert_eq!(total, 100 * 10_240);
    let first = m.flows.iter().filter_map(|f| f.start).min().unwrap();
    let last = m.flows.iter().filter_map(|f| f.finish).max().unwrap();
    let floor = SimTime::from_ns_f64(total as f64 * 8.0 / 800.0);
    assert!(last - first >= floor, "{} < {}", last - first, floor);
}

#[test]
fn dependent_chain_pays_one_round_trip_per_step() {
    let s = scenario("ls_chain");
    let m = run(&s);
    let Motif::LsChain(spec) = &s.traffic[0] else { panic!() };
    // h0 to h15 crosses six links each way
    let rtt = SimTime::from_ns(2 * 6 * 600);
    let chain: Vec<_> = m.flows.iter().take(2 * spec.depth as usize).collect();
    let start = chain.iter().filter_map(|f| f.start).min().unwrap();
    let end = chain.iter().filter_map(|f| f.finish).max().unwrap();
    assert!(end - start >= rtt * spec.depth as u64, "{}", end - start);
}

#[test]
fn selective_beats_go_back_n_on_the_same_trace() {
    for seed in 1..=8 {
        let mut g = scenario("transport_go_back_n");
        let mut s = scenario("transport_selective");
        g.seed = seed;
        s.seed = seed;
        let mg = run(&g);
        let ms = run(&s);
        let (fg, fs) = (&mg.flows[0], &ms.flows[0]);
        assert_exactly_once(&mg);
        assert_exactly_once(&ms);
        if fg.drops > 0 {
            assert!(fs.retx_bytes < fg.retx_bytes, "seed {seed}");
            assert!(fs.goodput_gbps() >= fg.goodput_gbps(), "seed {seed}");
        }
        assert!(
            fs.retx_bytes <= fs.dropped_bytes + fs.timeout_requeued_bytes,
            "seed {seed}"
        );
    }
}

#[test]
fn ber_loss_matches_the_analytic_drop_rate() {
    let mut s = scenario("transport_selective");
    s.loss = vec![LossConfig {
        from: "h0".into(),
        to: "leaf0".into(),
        drop_probability: None,
        ber: Some(2e-8),
        fec: None,
    }];
    let p = s.resolve().unwrap().loss_probabilities[0];
    let expected = dcnet_core::fec::raw_frame_loss(2e-8, 9216 * 8).unwrap();
    assert!(((p - expected) / expected).abs() < 1e-12);
    let m = run(&s);
    assert_exactly_once(&m);
    assert!(m.flows[0].drops > 0);
}

#[test]
fn every_routing_policy_delivers() {
    for policy in [PolicyKind::Ecmp, PolicyKind::Flowlet, PolicyKind::Spray] {
        for mode in [TransportMode::GoBackN, TransportMode::Selective] {
            let mut s = scenario("obs_all_to_all");
            s.routing.policy = policy;
            s.transport.mode = mode;
            let m = run(&s);
            assert_exactly_once(&m);
            assert_eq!(m.total_drops(), 0);
            assert_conserved(&m);
        }
    }
}

#[test]
fn window_mode_runs_lossless() {
    let mut s = scenario("incast");
    s.transport.cc.mode = dcnet_core::sim::cc::CcMode::Window;
    let m = run(&s);
    assert_exactly_once(&m);
    assert_eq!(m.total_drops(), 0);
}

fn lossy_flows(seed: u64, p: f64, mode: TransportMode, routing: PolicyKind) -> Scenario {
    let mut s = inline("seed = 0\n[topology]\ntiers = 2\nradix = 4\n");
    s.seed = seed;
    s.transport.mode = mode;
    s.routing.policy = routing;
    for (from, to) in [("h0", "leaf0"), ("spine0", "leaf3"), ("h6", "leaf3")] {
        s.loss.push(LossConfig {
            from: from.into(),
            to: to.into(),
            drop_probability: Some(p),
            ber: None,
            fec: None,
        });
    }
    s.traffic.push(Motif::Flows(FlowListSpec {
        flows: vec![
            ExplicitFlow {
                src: 0,
                dst: 7,
                bytes: 1_500_000,
                start_us: 0.0,
                class: 3,
            },
            ExplicitFlow {
                src: 6,
                dst: 1,
                bytes: 700_000,
                start_us: 1.0,
                class: 3,
            },
            ExplicitFlow {
                src: 2,
                dst: 7,
                bytes: 9_000,
                start_us: 2.0,
                class: 1,
            },
        ],
    }));
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lossy_links_still_deliver_exactly_once(
        seed in any::<u64>(),
        p in 0.0f64..0.05,
        selective in any::<bool>(),
        routing in prop_oneof![Just(PolicyKind::Ecmp), Just(PolicyKind::Flowlet), Just(PolicyKind::Spray)],
    ) {
        let mode = if selective { TransportMode::Selective } else { TransportMode::GoBackN };
        let m = run(&lossy_flows(seed, p, mode, routing));
        assert_conserved(&m);
        for f in &m.flows {
            prop_assert!(f.finish.is_some(), "flow {} incomplete", f.flow_id);
            prop_assert_eq!(f.delivered_bytes, f.bytes);
        }
        prop_assert_eq!(m.counters.overflow_drops, 0);
    }
}
