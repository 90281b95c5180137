//! Client operations and the join/depart protocols, as node tasks.

use std::collections::BTreeSet;

use crate::codec;
use crate::identity::{NodeId, ObjectId};
use crate::protocol::{
    decide_get_data, prepare_put_data, recode_entries, verified_tag, Candidates, GetDataOutcome, ListEntry, Msg,
    ProtocolError, Tag,
};
use crate::registry::{Change, ChangeSet, Sign};
use crate::sim::{value_digest, Ctx, OpKind, Role, Status};

use super::ProtocolConfig;

/// An operation a node can be asked to run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operation {
    Read { obj: ObjectId },
    Write { obj: ObjectId, value: Vec<u8> },
    Join,
    Depart,
}

pub(crate) async fn run_operation(ctx: &Ctx, op: Operation) {
    let cfg = ctx.protocol();
    match op {
        Operation::Read { obj } => {
            let id = ctx.begin_op(OpKind::Read, Some(obj));
            match read(ctx, &cfg, obj, id).await {
                Ok((t, v)) => ctx.end_op(id, Some((t, value_digest(v.as_deref())))),
                Err(e) => ctx.fail_op(id, e.to_string()),
            }
        }
        Operation::Write { obj, value } => {
            let id = ctx.begin_op(OpKind::Write, Some(obj));
            match write(ctx, &cfg, obj, value, id).await {
                Ok(()) => ctx.end_op(id, None),
                Err(e) => ctx.fail_op(id, e.to_string()),
            }
        }
        Operation::Join => {
            let id = ctx.begin_op(OpKind::Join, None);
            match join(ctx, &cfg).await {
                Ok(()) => ctx.end_op(id, None),
                Err(e) => ctx.fail_op(id, e.to_string()),
            }
        }
        Operation::Depart => {
            let id = ctx.begin_op(OpKind::Depart, None);
            match depart(ctx, &cfg).await {
                Ok(()) => ctx.end_op(id, None),
                Err(e) => ctx.fail_op(id, e.to_string()),
            }
        }
    }
}

enum Round {
    Done(Vec<(NodeId, Msg)>),
    /// A contacted node has left; the caller should recompute its targets.
    Moved,
}

/// Sends `msgs` and waits for `need` replies other than departure notices.
/// All piggybacked changes are merged. With `obj` set, a departure notice
/// only interrupts the wait if it changes the object's cluster.
async fn round(ctx: &Ctx, cfg: &ProtocolConfig, obj: Option<ObjectId>, cluster: &BTreeSet<NodeId>, msgs: Vec<(NodeId, Msg)>, need: usize) -> Round {
    let rid = ctx.request(msgs);
    let mut departed_seen = 0;
    loop {
        let seen = departed_seen;
        ctx.wait(rid, move |r| {
            let dep = r.iter().filter(|(_, m)| matches!(m, Msg::Departed { .. })).count();
            r.len() - dep >= need || dep > seen
        })
        .await;
        let replies = ctx.replies(rid);
        let departed = replies.iter().filter(|(_, m)| matches!(m, Msg::Departed { .. })).count();
        if replies.len() - departed >= need {
            let replies = ctx.finish(rid);
            merge_changes(ctx, &replies);
            return Round::Done(replies.into_iter().filter(|(_, m)| !matches!(m, Msg::Departed { .. })).collect());
        }
        departed_seen = departed;
        merge_changes(ctx, &replies);
        let moved = match obj {
            Some(o) => ctx.with_node(|n| n.state.cluster(o, cfg)).map_or(true, |c| &c != cluster),
            None => true,
        };
        if moved {
            ctx.finish(rid);
            return Round::Moved;
        }
    }
}

fn merge_changes(ctx: &Ctx, replies: &[(NodeId, Msg)]) {
    ctx.with_node_keys(|n, keys| {
        for (_, m) in replies {
            if let Some(ch) = m.changes() {
                if !ch.is_empty() {
                    n.state.merge(ch, keys);
                }
            }
        }
    });
}

async fn refresh(ctx: &Ctx) {
    let snap = ctx.oracle_get().await;
    ctx.with_node(|n| n.state.install(&snap));
}

/// The object's hosts under the local estimate, refreshed from the registry
/// when the estimate is too small.
async fn cluster(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId) -> Result<BTreeSet<NodeId>, ProtocolError> {
    if let Ok(c) = ctx.with_node(|n| n.state.cluster(obj, cfg)) {
        return Ok(c);
    }
    refresh(ctx).await;
    Ok(ctx.with_node(|n| n.state.cluster(obj, cfg))?)
}

fn unchanged(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId, c: &BTreeSet<NodeId>) -> bool {
    !cfg.dynamic || ctx.with_node(|n| n.state.cluster(obj, cfg)).is_ok_and(|now| &now == c)
}

fn gave_up(what: &str, obj: ObjectId, cfg: &ProtocolConfig) -> ProtocolError {
    ProtocolError::GaveUp(format!("{what} on {obj}"), cfg.max_rounds)
}

pub(crate) async fn get_tag(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId) -> Result<Tag, ProtocolError> {
    for _ in 0..cfg.max_rounds {
        let c = cluster(ctx, cfg, obj).await?;
        let q = cfg.quorum(c.len())?;
        let msgs = c.iter().map(|&m| (m, Msg::QueryTag { obj, cluster: c.clone() })).collect();
        let Round::Done(acks) = round(ctx, cfg, Some(obj), &c, msgs, q).await else { continue };
        let max = ctx.with_node_keys(|_, keys| {
            acks.iter()
                .filter_map(|(_, m)| match m {
                    Msg::QueryTagAck { tag, proof, .. } => verified_tag(*tag, proof.as_ref(), keys, cfg.signing),
                    _ => None,
                })
                .max()
                .unwrap_or(Tag::ZERO)
        });
        if unchanged(ctx, cfg, obj, &c) {
            return Ok(max);
        }
    }
    Err(gave_up("get-tag", obj, cfg))
}

struct Got {
    tag: Tag,
    value: Option<Vec<u8>>,
    /// Repliers holding `tag`.
    support: usize,
    cluster: BTreeSet<NodeId>,
}

async fn get_data(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId, op: u64) -> Result<Got, ProtocolError> {
    let mut attempt = 0;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        let c = cluster(ctx, cfg, obj).await?;
        let q = cfg.quorum(c.len())?;
        let (tg, v) = ctx.with_node(|n| n.state.store(obj).map_or((Tag::ZERO, None), |s| (s.tg, s.v.clone())));
        let msgs = c
            .iter()
            .map(|&m| (m, Msg::QueryList { obj, tg, inclusive: cfg.dynamic, cluster: c.clone() }))
            .collect();
        let Round::Done(acks) = round(ctx, cfg, Some(obj), &c, msgs, q).await else { continue };
        if !unchanged(ctx, cfg, obj, &c) {
            continue;
        }
        let cands = ctx.with_node_keys(|_, keys| {
            let mut cands = Candidates::new();
            for (from, m) in &acks {
                if let Msg::QueryListAck { entries, initial, .. } = m {
                    cands.add(*from, entries, keys, cfg.signing);
                    if *initial {
                        cands.add_initial(*from);
                    }
                }
            }
            cands
        });
        match decide_get_data(&cands, cfg.k, tg) {
            GetDataOutcome::Decoded { tag, value } => {
                return Ok(Got { tag, support: cands.support(&tag), value: Some(value), cluster: c });
            }
            GetDataOutcome::Local => return Ok(Got { tag: tg, support: cands.support(&tg), value: v, cluster: c }),
            GetDataOutcome::Undecodable { .. } => {
                if attempt >= cfg.max_retries {
                    return Err(ProtocolError::GaveUp(format!("get-data on {obj}: nothing decodable"), attempt));
                }
                ctx.record_retry(obj, op);
                let backoff = cfg.retry_base_ms * f64::from(1u32 << attempt.min(6));
                attempt += 1;
                rounds = 0;
                ctx.sleep_us((backoff * 1000.0) as u64).await;
            }
        }
    }
    Err(gave_up("get-data", obj, cfg))
}

async fn put_data(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId, tag: Tag, value: &[u8]) -> Result<(), ProtocolError> {
    for _ in 0..cfg.max_rounds {
        let c = cluster(ctx, cfg, obj).await?;
        let q = cfg.quorum(c.len())?;
        let entries = ctx.with_node(|n| prepare_put_data(tag, value, &c, cfg.k, &n.signer, cfg.signing, &mut n.rng))?;
        let msgs = entries.into_iter().map(|(m, entry)| (m, Msg::PutData { obj, entry, cluster: c.clone() })).collect();
        let Round::Done(_) = round(ctx, cfg, Some(obj), &c, msgs, q).await else { continue };
        if unchanged(ctx, cfg, obj, &c) {
            return Ok(());
        }
    }
    Err(gave_up("put-data", obj, cfg))
}

async fn write(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId, value: Vec<u8>, op: u64) -> Result<(), ProtocolError> {
    let seen = get_tag(ctx, cfg, obj).await?;
    let local = ctx.with_node(|n| n.state.store(obj).map_or(Tag::ZERO, |s| s.tg));
    let tag = seen.max(local).successor(ctx.id());
    ctx.tag_op(op, tag, value_digest(Some(&value)));
    put_data(ctx, cfg, obj, tag, &value).await?;
    ctx.with_node(|n| n.state.store_mut(obj).record(tag, Some(value)));
    Ok(())
}

async fn read(ctx: &Ctx, cfg: &ProtocolConfig, obj: ObjectId, op: u64) -> Result<(Tag, Option<Vec<u8>>), ProtocolError> {
    let got = get_data(ctx, cfg, obj, op).await?;
    if !got.tag.is_initial() {
        let value = got.value.clone().ok_or(ProtocolError::BadState("non-initial tag without a value"))?;
        let settled = cfg.dynamic && cfg.read_skip && got.support >= cfg.quorum(got.cluster.len())?;
        if !settled {
            put_data(ctx, cfg, obj, got.tag, &value).await?;
        }
        ctx.with_node(|n| n.state.store_mut(obj).record(got.tag, Some(value)));
    }
    Ok((got.tag, got.value))
}

/// Largest subset of `entries`, in order, with independent coefficient rows.
fn independent(entries: &[ListEntry], k: usize) -> Vec<ListEntry> {
    let mut out: Vec<ListEntry> = Vec::new();
    let mut rank = 0;
    for e in entries {
        out.push(e.clone());
        let els: Vec<_> = out.iter().map(|x| x.element.clone()).collect();
        match codec::rank(&els) {
            Ok(r) if r > rank => rank = r,
            _ => {
                out.pop();
            }
        }
        if rank == k {
            break;
        }
    }
    out
}

/// Fetches object lists and stores one recoded entry per recent tag.
///
/// With `objs` empty the joiner's neighbours are asked for whatever it will
/// host; otherwise the current hosts of each listed object are asked.
pub(crate) async fn collect_data(ctx: &Ctx, cfg: &ProtocolConfig, objs: BTreeSet<ObjectId>) -> Result<(), ProtocolError> {
    let beta = cfg.beta();
    for _ in 0..cfg.max_rounds {
        refresh(ctx).await;
        let me = ctx.id();
        let c: BTreeSet<NodeId> = ctx.with_node(|n| {
            if objs.is_empty() {
                cfg.placement().neighbors(me, &n.state.s)
            } else {
                objs.iter()
                    .flat_map(|o| n.state.cluster(*o, cfg).unwrap_or_default())
                    .collect()
            }
        });
        if c.is_empty() {
            return Ok(());
        }
        let need = cfg.quorum.with_threshold(c.len(), beta);
        let msgs = c.iter().map(|&m| (m, Msg::FetchObjList { objs: objs.clone() })).collect();
        let Round::Done(acks) = round(ctx, cfg, None, &c, msgs, need).await else { continue };
        ctx.with_node_keys(|n, keys| {
            let mut per_obj: std::collections::BTreeMap<ObjectId, Candidates> = Default::default();
            for (from, m) in &acks {
                if let Msg::FetchAck { objs } = m {
                    for (o, list) in objs {
                        per_obj.entry(*o).or_default().add(*from, list, keys, cfg.signing);
                    }
                }
            }
            for (o, cands) in per_obj {
                let cor: Vec<Tag> = cands.tags().filter(|t| cands.support(t) >= beta).collect();
                for &t in cor.iter().rev().take(cfg.delta.max(1)) {
                    let inputs = independent(&cands.entries(&t), cfg.k);
                    if let Ok(e) = recode_entries(t, &inputs, &n.signer, cfg.signing, false, &mut n.rng) {
                        n.state.store_mut(o).insert_verified(e);
                    }
                }
                n.state.store_mut(o).initial = false;
                n.state.d.insert(o);
            }
        });
        return Ok(());
    }
    Err(ProtocolError::GaveUp("collect-data".into(), cfg.max_rounds))
}

/// Sends `msg` to the node's neighbours until enough acknowledge.
async fn finalize(ctx: &Ctx, cfg: &ProtocolConfig, msg: Msg) -> Result<(), ProtocolError> {
    let me = ctx.id();
    for i in 0..cfg.max_rounds {
        if i > 0 {
            refresh(ctx).await;
        }
        let c = ctx.with_node(|n| cfg.placement().neighbors(me, &n.state.s));
        if c.is_empty() {
            return Ok(());
        }
        let need = cfg.quorum.with_threshold(c.len(), 1);
        let msgs = c.iter().map(|&m| (m, msg.clone())).collect();
        if let Round::Done(_) = round(ctx, cfg, None, &c, msgs, need).await {
            return Ok(());
        }
    }
    Err(ProtocolError::GaveUp("finalize".into(), cfg.max_rounds))
}

async fn join(ctx: &Ctx, cfg: &ProtocolConfig) -> Result<(), ProtocolError> {
    let ok = ctx.with_node(|n| n.role == Role::Joiner && n.status == Status::Outside);
    if !ok {
        return Err(ProtocolError::BadState("only an outside node can join"));
    }
    collect_data(ctx, cfg, BTreeSet::new()).await?;
    let change = ctx.with_node(|n| Change::signed(Sign::Plus, &n.signer));
    ctx.oracle_add(change.clone()).await?;
    finalize(ctx, cfg, Msg::FinJoin).await?;
    ctx.with_node(|n| {
        n.state.install(&ChangeSet::from_iter([change]));
        n.status = Status::Active;
    });
    Ok(())
}

async fn depart(ctx: &Ctx, cfg: &ProtocolConfig) -> Result<(), ProtocolError> {
    let ok = ctx.with_node(|n| n.role != Role::Client && n.status == Status::Active);
    if !ok {
        return Err(ProtocolError::BadState("only an active member can depart"));
    }
    ctx.with_node(|n| n.status = Status::Departing);
    refresh(ctx).await;
    let me = ctx.id();
    let owned: Vec<ObjectId> = ctx.with_node(|n| n.state.d.iter().copied().collect());
    for obj in owned {
        let mut done = false;
        for i in 0..cfg.max_rounds {
            if i > 0 {
                refresh(ctx).await;
            }
            let c: BTreeSet<NodeId> = ctx.with_node(|n| {
                let mut rest = n.state.s.clone();
                rest.remove(&me);
                cfg.placement().successors(&obj.ring_id(cfg.ring_bits), &rest).unwrap_or_default().into_iter().collect()
            });
            if c.is_empty() {
                done = true;
                break;
            }
            let need = cfg.quorum.with_threshold(c.len(), cfg.k);
            let msgs = c.iter().map(|&m| (m, Msg::Push { obj })).collect();
            if let Round::Done(_) = round(ctx, cfg, None, &c, msgs, need).await {
                done = true;
                break;
            }
        }
        if !done {
            ctx.with_node(|n| n.status = Status::Active);
            return Err(gave_up("push-data", obj, cfg));
        }
    }
    let change = ctx.with_node(|n| Change::signed(Sign::Minus, &n.signer));
    if let Err(e) = ctx.oracle_add(change.clone()).await {
        ctx.with_node(|n| n.status = Status::Active);
        return Err(e.into());
    }
    ctx.with_node(|n| n.state.install(&ChangeSet::from_iter([change])));
    let res = finalize(ctx, cfg, Msg::FinDepart).await;
    ctx.with_node(|n| n.status = Status::Departed);
    res
}
