//! Member-side message handling.

use std::collections::BTreeSet;

use crate::identity::{NodeId, ObjectId};
use crate::protocol::{ListEntry, Msg, Rid, Signing, Tag};
use crate::registry::{ChangeSet, Sign};
use crate::sim::{Behavior, Ctx, Node, Status};

use super::ops::collect_data;
use super::ProtocolConfig;

pub(crate) fn on_request(ctx: &Ctx, from: NodeId, rid: Rid, msg: Msg) {
    let cfg = ctx.protocol();
    let (status, behavior) = ctx.with_node(|n| (n.status, n.behavior));
    if status == Status::Crashed || behavior == Behavior::Silent {
        return;
    }
    if status == Status::Departed {
        let ch = ctx.with_node(|n| departed_changes(n, &msg, &cfg));
        ctx.reply(from, rid, Msg::Departed { ch });
        return;
    }
    if behavior == Behavior::StaleReplay {
        if let Some(r) = ctx.with_node_keys(|n, keys| stale_reply(n, keys, &msg, cfg.signing)) {
            ctx.reply(from, rid, r);
        }
        return;
    }
    match msg {
        Msg::QueryTag { obj, cluster } => {
            let r = ctx.with_node(|n| {
                let (tag, proof) = n.state.store(obj).map_or((Tag::ZERO, None), |s| s.on_query_tag());
                let proof = if cfg.signing == Signing::Enabled { proof } else { None };
                Msg::QueryTagAck { tag, proof, ch: changes_for(n, obj, &cluster, &cfg) }
            });
            ctx.reply(from, rid, r);
        }
        Msg::QueryList { obj, tg, inclusive, cluster } => {
            let r = ctx.with_node(|n| {
                let (entries, initial) = match n.state.store(obj) {
                    Some(s) => (s.on_query_list(tg, inclusive), s.answers_initial(tg, inclusive)),
                    None => (Vec::new(), inclusive && tg == Tag::ZERO),
                };
                Msg::QueryListAck { entries, initial, ch: changes_for(n, obj, &cluster, &cfg) }
            });
            ctx.reply(from, rid, r);
        }
        Msg::PutData { obj, entry, cluster } => {
            let r = ctx.with_node_keys(|n, keys| {
                n.state.store_mut(obj).on_put_data(entry, keys, cfg.signing);
                n.state.d.insert(obj);
                Msg::PutAck { ch: changes_for(n, obj, &cluster, &cfg) }
            });
            ctx.reply(from, rid, r);
        }
        Msg::FetchObjList { objs } => {
            let c = ctx.clone();
            ctx.spawn(async move {
                let snap = c.oracle_get().await;
                let r = c.with_node(|n| {
                    n.state.install(&snap);
                    Msg::FetchAck { objs: fetch_lists(n, from, &objs, &cfg) }
                });
                c.reply(from, rid, r);
            });
        }
        Msg::FinJoin | Msg::FinDepart => {
            let c = ctx.clone();
            ctx.spawn(async move {
                let snap = c.oracle_get().await;
                c.with_node(|n| n.state.install(&snap));
                c.reply(from, rid, Msg::FinAck);
            });
        }
        Msg::Push { obj } => {
            if ctx.with_node(|n| n.state.d.contains(&obj)) {
                ctx.reply(from, rid, Msg::PushAck { obj });
                return;
            }
            let c = ctx.clone();
            ctx.spawn(async move {
                if collect_data(&c, &cfg, [obj].into()).await.is_ok() {
                    c.reply(from, rid, Msg::PushAck { obj });
                }
            });
        }
        Msg::QueryTagAck { .. }
        | Msg::QueryListAck { .. }
        | Msg::PutAck { .. }
        | Msg::Departed { .. }
        | Msg::FetchAck { .. }
        | Msg::FinAck
        | Msg::PushAck { .. } => {}
    }
}

fn changes_for(n: &Node, obj: ObjectId, cluster: &BTreeSet<NodeId>, cfg: &ProtocolConfig) -> ChangeSet {
    if cfg.dynamic {
        n.state.calculate_changes(obj, cluster, cfg)
    } else {
        ChangeSet::new()
    }
}

/// What a node that has left tells a requester.
fn departed_changes(n: &Node, msg: &Msg, cfg: &ProtocolConfig) -> ChangeSet {
    let own: ChangeSet = n.state.changes.get(Sign::Minus, n.id).cloned().into_iter().collect();
    match msg {
        Msg::QueryTag { obj, cluster } | Msg::QueryList { obj, cluster, .. } | Msg::PutData { obj, cluster, .. } => {
            let mut ch = n.state.calculate_changes(*obj, cluster, cfg);
            ch.merge(own.iter());
            ch
        }
        _ => own,
    }
}

/// Object lists a joiner (`objs` empty) or collector asks for.
fn fetch_lists(n: &Node, requester: NodeId, objs: &BTreeSet<ObjectId>, cfg: &ProtocolConfig) -> Vec<(ObjectId, Vec<ListEntry>)> {
    let list = |o: ObjectId| n.state.store(o).map(|s| s.entries().cloned().collect()).unwrap_or_default();
    if !objs.is_empty() {
        return objs.iter().map(|&o| (o, list(o))).collect();
    }
    let mut with_requester = n.state.s.clone();
    with_requester.insert(requester);
    let p = cfg.placement();
    let index = p.index(&with_requester);
    n.state
        .d
        .iter()
        .filter(|o| {
            index.successors(&o.ring_id(cfg.ring_bits), cfg.crf_n).is_ok_and(|hosts| hosts.contains(&requester))
        })
        .map(|&o| (o, list(o)))
        .collect()
}

fn stale_reply(n: &mut Node, keys: &dyn crate::identity::Verifier, msg: &Msg, signing: Signing) -> Option<Msg> {
    let frozen = |n: &Node, o: &ObjectId| n.frozen.get(o).cloned();
    Some(match msg {
        Msg::QueryTag { obj, .. } => match frozen(n, obj) {
            Some(e) => Msg::QueryTagAck { tag: e.tag, proof: Some(e), ch: ChangeSet::new() },
            None => Msg::QueryTagAck { tag: Tag::ZERO, proof: None, ch: ChangeSet::new() },
        },
        Msg::QueryList { obj, .. } => {
            let entries: Vec<_> = frozen(n, obj).into_iter().collect();
            Msg::QueryListAck { initial: entries.is_empty(), entries, ch: ChangeSet::new() }
        }
        Msg::PutData { obj, entry, .. } => {
            if !n.frozen.contains_key(obj) && entry.verify(keys, signing) {
                n.frozen.insert(*obj, entry.clone());
            }
            Msg::PutAck { ch: ChangeSet::new() }
        }
        Msg::FetchObjList { objs } => {
            Msg::FetchAck { objs: objs.iter().map(|o| (*o, frozen(n, o).into_iter().collect())).collect() }
        }
        Msg::FinJoin | Msg::FinDepart => Msg::FinAck,
        Msg::Push { obj } => Msg::PushAck { obj: *obj },
        _ => return None,
    })
}
