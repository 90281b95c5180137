use std::collections::BTreeMap;

use dsm_core::checker::{check_all, check_oracle_log, OracleOp};
use dsm_core::identity::{NodeId, ObjectId};
use dsm_core::protocol::{byz_budget, Tag};
use dsm_core::sim::{
    read_jsonl, run, write_jsonl, Actor, Behavior, ByzantineSpec, CrashStep, DelayModel, EventKind, OpKind, OpSpec,
    RunReport, ScriptStep, SimConfig, Status, TraceEvent,
};

fn step(at_ms: f64, actor: Actor, op: OpSpec) -> ScriptStep {
    ScriptStep { at_ms, actor, op }
}

fn write(at_ms: f64, client: usize, obj: u64) -> ScriptStep {
    step(at_ms, Actor::Client(client), OpSpec::Write { obj, size: 64 })
}

fn read(at_ms: f64, client: usize, obj: u64) -> ScriptStep {
    step(at_ms, Actor::Client(client), OpSpec::Read { obj })
}

fn healthy(r: &RunReport) {
    assert!(r.stuck.is_empty(), "stuck: {:?}", r.stuck);
    assert_eq!(r.failed_ops().count(), 0, "{:?}", r.failed_ops().collect::<Vec<_>>());
    let v = check_all(&r.ops);
    assert!(v.ok(), "{}", v.report());
    check_oracle_log(&r.oracle_log).unwrap();
    for (_, state) in r.nodes.values() {
        for store in state.stores.values() {
            assert!(store.len() + usize::from(store.initial) <= store.delta() + 1);
        }
    }
}

fn sends<'a>(r: &'a RunReport, name: &'a str) -> impl Iterator<Item = &'a TraceEvent> {
    r.trace.iter().filter(move |e| e.kind == EventKind::Send && e.note.as_deref() == Some(name))
}

#[test]
fn write_then_read_returns_value() {
    let cfg = SimConfig { members: 7, clients: 2, script: vec![write(0.0, 0, 1), read(1000.0, 1, 1)], ..SimConfig::default() };
    let r = run(cfg).unwrap();
    healthy(&r);
    let w = r.completed(OpKind::Write).next().unwrap();
    let rd = r.completed(OpKind::Read).next().unwrap();
    assert_eq!(w.tag, rd.tag);
    assert_eq!(w.digest, rd.digest);
}

#[test]
fn unwritten_object_reads_initial_value() {
    let cfg = SimConfig { script: vec![read(0.0, 0, 4)], ..SimConfig::default() };
    let r = run(cfg).unwrap();
    healthy(&r);
    let rd = r.completed(OpKind::Read).next().unwrap();
    assert_eq!(rd.tag, Some(Tag::ZERO));
}

fn busy_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig { seed, members: 9, clients: 4, joiners: 1, ..SimConfig::default() };
    cfg.protocol.crf_n = 7;
    cfg.byzantine = vec![ByzantineSpec { member: 2, behavior: Behavior::StaleReplay }];
    cfg.periodic = Some(dsm_core::sim::Periodic {
        writers: 2,
        readers: 2,
        objects: 3,
        period_ms: 150.0,
        rounds: 6,
        value_size: 100,
        start_ms: 0.0,
        aligned: false,
    });
    cfg.script = vec![step(200.0, Actor::Joiner(0), OpSpec::Join), step(900.0, Actor::Member(8), OpSpec::Depart)];
    cfg.delay = DelayModel::adversarial();
    cfg
}

#[test]
fn same_seed_same_trace() {
    let a = run(busy_config(11)).unwrap();
    let b = run(busy_config(11)).unwrap();
    let c = run(busy_config(12)).unwrap();
    assert_eq!(a.trace_digest, b.trace_digest);
    assert_eq!(a.trace, b.trace);
    assert_ne!(a.trace_digest, c.trace_digest);
    healthy(&a);
    healthy(&c);
}

#[test]
fn trace_file_round_trip_keeps_checker_verdict() {
    let mut cfg = busy_config(3);
    cfg.record_messages = true;
    let r = run(cfg).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &r.trace).unwrap();
    let back = read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, r.trace);
    let ops = dsm_core::checker::ops_from_trace(&back);
    assert_eq!(ops.len(), r.ops.len());
    assert!(check_all(&ops).ok());
}

#[test]
fn config_survives_toml() {
    let cfg = busy_config(5);
    let text = cfg.to_toml();
    assert_eq!(SimConfig::from_toml(&text).unwrap(), cfg);
    assert!(SimConfig::from_toml("members = \"many\"").is_err());
}

#[test]
fn delivery_order_never_duplicates_or_loses() {
    let mut cfg = busy_config(8);
    cfg.record_messages = true;
    let r = run(cfg).unwrap();
    let mut sent: BTreeMap<(NodeId, NodeId, u64, String), i64> = BTreeMap::new();
    for e in &r.trace {
        let key = |from: NodeId, to: NodeId| (from, to, e.digest.unwrap(), e.note.clone().unwrap());
        match e.kind {
            EventKind::Send => *sent.entry(key(e.node, e.peer.unwrap())).or_default() += 1,
            EventKind::Deliver | EventKind::Drop => *sent.entry(key(e.peer.unwrap(), e.node)).or_default() -= 1,
            _ => {}
        }
    }
    assert!(sent.values().all(|&n| n == 0));
}

fn quiet_delay() -> DelayModel {
    DelayModel { prop_base_ms: 10.0, egress_bandwidth: 1000.0, jitter_fraction: 0.0, spike_probability: 0.0, spike_ms: 0.0 }
}

#[test]
fn broadcast_is_serialized_on_egress() {
    let mut cfg = SimConfig { members: 6, clients: 1, record_messages: true, delay: quiet_delay(), ..SimConfig::default() };
    cfg.protocol = dsm_core::dynamic::ProtocolConfig::replication(6);
    cfg.script = vec![step(0.0, Actor::Client(0), OpSpec::Write { obj: 1, size: 20_000 })];
    let r = run(cfg).unwrap();
    healthy(&r);
    let puts: Vec<&TraceEvent> = sends(&r, "put-data").collect();
    assert_eq!(puts.len(), 6);
    let t0 = puts[0].time;
    assert!(puts.iter().all(|e| e.time == t0));
    // Each send leaves after the previous one and then takes 10 ms.
    let mut free = t0;
    let mut expect = BTreeMap::new();
    for p in &puts {
        free += p.bytes.unwrap();
        expect.insert(p.peer.unwrap(), free + 10_000);
    }
    let delivered: BTreeMap<NodeId, u64> = r
        .trace
        .iter()
        .filter(|e| e.kind == EventKind::Deliver && e.note.as_deref() == Some("put-data"))
        .map(|e| (e.node, e.time))
        .collect();
    assert_eq!(delivered, expect);
    let total: u64 = puts.iter().map(|e| e.bytes.unwrap()).sum();
    let last = delivered.values().max().unwrap();
    // m·L / bandwidth, in microseconds.
    assert!(last - t0 >= 6 * 20_000);
    assert!(last - t0 >= total);
}

#[test]
fn control_message_costs_propagation_only() {
    let cfg = SimConfig { members: 5, clients: 1, record_messages: true, delay: quiet_delay(), script: vec![read(0.0, 0, 1)], ..SimConfig::default() };
    let r = run(cfg).unwrap();
    let q = sends(&r, "query-list").next().unwrap();
    let d = r
        .trace
        .iter()
        .find(|e| e.kind == EventKind::Deliver && e.digest == q.digest && e.node == q.peer.unwrap())
        .unwrap();
    // One byte per microsecond at this bandwidth.
    assert_eq!(d.time - q.time, q.bytes.unwrap() + 10_000);
}

fn put_bytes(crf_n: usize, k: usize) -> u64 {
    let mut cfg = SimConfig { members: crf_n, clients: 1, record_messages: true, payload_scale: 1024, ..SimConfig::default() };
    cfg.protocol.crf_n = crf_n;
    if k == 1 {
        cfg.protocol = dsm_core::dynamic::ProtocolConfig::replication(crf_n);
    } else {
        cfg.protocol.k = k;
    }
    cfg.script = vec![step(0.0, Actor::Client(0), OpSpec::Write { obj: 1, size: 3 << 20 })];
    let r = run(cfg).unwrap();
    healthy(&r);
    sends(&r, "put-data").map(|e| e.bytes.unwrap()).sum()
}

#[test]
fn coded_put_sends_a_fraction_of_replication() {
    let l = (3u64 << 20) as f64;
    let coded = put_bytes(5, 3) as f64;
    let full = put_bytes(13, 1) as f64;
    assert!((coded / (5.0 * l / 3.0) - 1.0).abs() < 0.01, "{coded}");
    assert!((full / (13.0 * l) - 1.0).abs() < 0.01, "{full}");
}

fn byz_config(c: usize, silent: usize, seed: u64) -> SimConfig {
    let mut cfg = SimConfig { seed, members: c, clients: 3, ..SimConfig::default() };
    cfg.protocol.crf_n = c;
    cfg.byzantine = (0..silent).map(|member| ByzantineSpec { member, behavior: Behavior::Silent }).collect();
    cfg.script = vec![write(0.0, 0, 1), read(10.0, 1, 1), write(400.0, 2, 1), read(800.0, 1, 1)];
    cfg
}

#[test]
fn silent_members_up_to_budget_do_not_block() {
    for c in [4, 7, 10] {
        let b = byz_budget(c, 3);
        let r = run(byz_config(c, b, 1)).unwrap();
        healthy(&r);
        assert_eq!(r.completed(OpKind::Read).count(), 2);
    }
}

#[test]
fn one_silent_member_too_many_leaves_operations_stuck() {
    let c = 7;
    let b = byz_budget(c, 3);
    let r = run(byz_config(c, b + 1, 1)).unwrap();
    assert!(!r.horizon_reached);
    assert_eq!(r.stuck.len(), 3, "{:?}", r.ops);
    assert!(r.ops.iter().all(|o| o.failed.is_none()));
}

#[test]
fn stale_replay_member_cannot_hold_back_tags() {
    let mut cfg = SimConfig { members: 7, clients: 2, ..SimConfig::default() };
    cfg.byzantine = vec![ByzantineSpec { member: 0, behavior: Behavior::StaleReplay }];
    cfg.protocol.crf_n = 7;
    cfg.script = (0..4).map(|i| write(i as f64 * 500.0, 0, 1)).chain([read(3000.0, 1, 1)]).collect();
    let r = run(cfg).unwrap();
    healthy(&r);
    let zs: Vec<u64> = r.completed(OpKind::Write).map(|o| o.tag.unwrap().z).collect();
    assert_eq!(zs, vec![1, 2, 3, 4]);
    assert_eq!(r.completed(OpKind::Read).next().unwrap().tag.unwrap().z, 4);
    // The replaying member still holds only the first write.
    let stale = r.ids.of(Actor::Member(0));
    assert!(r.nodes[&stale].1.store(ObjectId(1)).is_none_or(|s| s.len() <= 1));
}

#[test]
fn read_skips_write_back_once_a_quorum_agrees() {
    let base = || {
        let mut cfg = SimConfig { members: 5, clients: 2, record_messages: true, ..SimConfig::default() };
        cfg.script = vec![write(0.0, 0, 1), read(1000.0, 1, 1)];
        cfg
    };
    let r = run(base()).unwrap();
    healthy(&r);
    assert_eq!(sends(&r, "put-data").count(), 5);
    let mut cfg = base();
    cfg.protocol.read_skip = false;
    let r = run(cfg).unwrap();
    healthy(&r);
    assert_eq!(sends(&r, "put-data").count(), 10);
}

fn join_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig { seed, members: 7, joiners: 1, clients: 2, record_messages: true, ..SimConfig::default() };
    cfg.protocol.crf_n = 5;
    cfg.script = vec![write(0.0, 0, 1), step(1000.0, Actor::Joiner(0), OpSpec::Join)];
    cfg
}

#[test]
fn joiner_inherits_objects_it_will_host() {
    let mut hosted = 0;
    for seed in 0..20 {
        let r = run(join_config(seed)).unwrap();
        healthy(&r);
        let j = r.ids.of(Actor::Joiner(0));
        let (status, state) = &r.nodes[&j];
        assert_eq!(*status, Status::Active);
        assert!(r.members.contains(&j));
        let cfg = join_config(seed).protocol;
        let hosts = state.cluster(ObjectId(1), &cfg).unwrap();
        let tag = r.completed(OpKind::Write).next().unwrap().tag.unwrap();
        if hosts.contains(&j) {
            hosted += 1;
            assert!(state.d.contains(&ObjectId(1)));
            let entry = state.store(ObjectId(1)).unwrap().get(&tag).expect("joiner holds the written tag");
            assert_eq!(entry.signer(), Some(j));
            assert!(entry.cert.is_some());
        } else {
            assert!(!state.d.contains(&ObjectId(1)));
        }
    }
    assert!(hosted > 0);
}

#[test]
fn joining_an_empty_system_collects_nothing() {
    let mut cfg = join_config(0);
    cfg.script.remove(0);
    let r = run(cfg).unwrap();
    healthy(&r);
    let j = r.ids.of(Actor::Joiner(0));
    assert!(r.nodes[&j].1.d.is_empty());
    assert!(r.nodes[&j].1.stores.is_empty());
}

#[test]
fn finalize_costs_one_oracle_get_per_neighbor() {
    let r = run(join_config(4)).unwrap();
    healthy(&r);
    let j = r.ids.of(Actor::Joiner(0));
    let add_seq = r
        .oracle_log
        .iter()
        .find(|o| o.node == j && matches!(o.op, OracleOp::Add { .. }))
        .unwrap()
        .seq;
    let fins: Vec<&TraceEvent> = sends(&r, "fin-join").collect();
    assert!(!fins.is_empty());
    for f in &fins {
        let peer = f.peer.unwrap();
        let gets = r
            .oracle_log
            .iter()
            .filter(|o| o.seq > add_seq && o.node == peer && matches!(o.op, OracleOp::Get { .. }))
            .count();
        assert_eq!(gets, 1, "neighbor {peer:?}");
    }
}

#[test]
fn reply_changes_teach_clients_about_joiners() {
    for seed in 0..10 {
        let mut cfg = join_config(seed);
        cfg.script.push(read(4000.0, 1, 1));
        let r = run(cfg.clone()).unwrap();
        healthy(&r);
        let j = r.ids.of(Actor::Joiner(0));
        let client = &r.nodes[&r.ids.of(Actor::Client(1))].1;
        let joiner_hosts = r.nodes[&j].1.cluster(ObjectId(1), &cfg.protocol).unwrap().contains(&j);
        assert_eq!(client.s.contains(&j), joiner_hosts, "seed {seed}");
    }
}

#[test]
fn departing_member_with_no_objects_pushes_nothing() {
    let mut cfg = SimConfig { members: 7, clients: 1, record_messages: true, ..SimConfig::default() };
    cfg.script = vec![step(0.0, Actor::Member(3), OpSpec::Depart)];
    let r = run(cfg).unwrap();
    healthy(&r);
    assert_eq!(sends(&r, "push").count(), 0);
    let m = r.ids.of(Actor::Member(3));
    assert_eq!(r.nodes[&m].0, Status::Departed);
    assert!(!r.members.contains(&m));
}

#[test]
fn depart_hands_objects_to_new_hosts() {
    for seed in 0..10 {
        let mut cfg = SimConfig { seed, members: 10, clients: 2, ..SimConfig::default() };
        cfg.protocol.crf_n = 7;
        cfg.populate = Some(dsm_core::sim::Population { objects: 6, value_size: 50 });
        cfg.script = vec![step(2000.0, Actor::Member(0), OpSpec::Depart), step(2500.0, Actor::Member(1), OpSpec::Depart)];
        cfg.crashes = vec![CrashStep { at_ms: 5000.0, actor: Actor::Member(2) }];
        cfg.script.extend((0..6).map(|o| read(6000.0 + o as f64, 1, o)));
        let r = run(cfg).unwrap();
        healthy(&r);
        let writes: BTreeMap<_, _> = r.completed(OpKind::Write).map(|o| (o.obj, (o.tag, o.digest))).collect();
        for rd in r.completed(OpKind::Read) {
            assert_eq!(writes[&rd.obj], (rd.tag, rd.digest), "seed {seed}");
        }
    }
}

#[test]
fn join_concurrent_with_writes_ends_with_a_recent_tag() {
    for seed in 0..30 {
        let mut cfg = SimConfig { seed, members: 6, joiners: 1, clients: 3, ..SimConfig::default() };
        cfg.protocol.crf_n = 6;
        cfg.delay = DelayModel::adversarial();
        cfg.script = (0..6).map(|i| write(i as f64 * 30.0, i % 2, 1)).collect();
        cfg.script.push(step(60.0, Actor::Joiner(0), OpSpec::Join));
        cfg.script.push(read(100.0, 2, 1));
        let r = run(cfg.clone()).unwrap();
        healthy(&r);
        let join = r.completed(OpKind::Join).next().unwrap();
        let j = r.ids.of(Actor::Joiner(0));
        let state = &r.nodes[&j].1;
        if !state.cluster(ObjectId(1), &cfg.protocol).unwrap().contains(&j) {
            continue;
        }
        let held = state.store(ObjectId(1)).and_then(|s| s.tags().max());
        for w in r.completed(OpKind::Write).filter(|w| w.respond.unwrap() < join.invoke) {
            assert!(held >= w.tag, "seed {seed}: joiner has {held:?}, missed {:?}", w.tag);
        }
    }
}

#[test]
fn crashed_client_is_not_counted_as_stuck() {
    let mut cfg = SimConfig { members: 5, clients: 2, ..SimConfig::default() };
    cfg.script = vec![write(0.0, 0, 1), read(0.0, 1, 1)];
    cfg.crashes = vec![CrashStep { at_ms: 1.0, actor: Actor::Client(0) }];
    let r = run(cfg).unwrap();
    assert!(r.stuck.is_empty());
    assert!(check_all(&r.ops).ok());
}
