//! Single-threaded discrete-event executor.
//!
//! Node logic runs as futures polled by the loop below. A future suspends
//! only on the primitives of [`Ctx`] (reply collection, sleeping, registry
//! access), each of which schedules the exact event that resumes it, so no
//! wakers are needed and a run is a pure function of its configuration.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checker::{OpRecord, OracleOp, OracleRecord, INITIAL_DIGEST};
use crate::dynamic::{self, NodeState, Operation, ProtocolConfig};
use crate::identity::{digest64, KeyDirectory, NodeId, ObjectId, Signer};
use crate::protocol::{Envelope, ListEntry, Msg, Rid, Tag};
use crate::registry::{Change, ChangeSet, MembershipOracle, Registry, RegistryError, Sign};

use super::config::{Actor, Behavior, ConfigError, OpSpec, SimConfig};
use super::trace::{EventKind, OpKind, Trace, TraceEvent};

pub type TaskId = u64;
type Task = Pin<Box<dyn Future<Output = ()>>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Member,
    Joiner,
    Client,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// A joiner before its join completes.
    Outside,
    Active,
    Departing,
    Departed,
    Crashed,
}

pub struct Node {
    pub id: NodeId,
    pub role: Role,
    pub behavior: Behavior,
    pub status: Status,
    pub state: NodeState,
    pub signer: Signer,
    pub rng: ChaCha8Rng,
    /// First accepted entry per object, for stale replay.
    pub frozen: BTreeMap<ObjectId, ListEntry>,
    queue: VecDeque<Operation>,
    busy: bool,
}

enum Ev {
    Deliver { from: NodeId, to: NodeId, env: Envelope },
    Wake(TaskId),
    Invoke { node: NodeId, op: Operation },
    Crash(NodeId),
}

struct Scheduled {
    time: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Pending {
    owner: NodeId,
    task: Option<TaskId>,
    replies: Vec<(NodeId, Msg)>,
}

pub(crate) struct World {
    pub now: u64,
    seq: u64,
    events: BinaryHeap<Scheduled>,
    pub cfg: Rc<SimConfig>,
    pub keys: KeyDirectory,
    pub nodes: BTreeMap<NodeId, Node>,
    oracle: Registry,
    oracle_log: Vec<OracleRecord>,
    net_rng: ChaCha8Rng,
    egress_free: HashMap<NodeId, u64>,
    pending: HashMap<Rid, Pending>,
    next_rid: Rid,
    next_task: TaskId,
    ready: VecDeque<TaskId>,
    queued: HashSet<TaskId>,
    current: Option<TaskId>,
    spawned: Vec<(TaskId, NodeId, Task)>,
    killed: Vec<NodeId>,
    trace: Trace,
    ops: Vec<OpRecord>,
    retries: u64,
    wire_bytes: u64,
    messages: u64,
}

impl World {
    fn schedule(&mut self, time: u64, ev: Ev) {
        self.seq += 1;
        self.events.push(Scheduled { time, seq: self.seq, ev });
    }

    fn wake(&mut self, task: TaskId) {
        if self.queued.insert(task) {
            self.ready.push_back(task);
        }
    }

    fn trace(&mut self, e: TraceEvent) {
        self.trace.push(e);
    }

    fn delay_us(&mut self, from: NodeId, to: NodeId, bytes: u64) -> u64 {
        if from == to {
            return self.now;
        }
        let d = &self.cfg.delay;
        let tx = (bytes as f64 * 1000.0 / d.egress_bandwidth).ceil() as u64;
        let free = self.egress_free.entry(from).or_insert(0);
        let depart = (*free).max(self.now) + tx;
        *free = depart;
        let prop = d.prop_base_ms * 1000.0;
        let jitter = if d.jitter_fraction > 0.0 { self.net_rng.gen_range(0.0..=d.jitter_fraction) * prop } else { 0.0 };
        let spike = if d.spike_probability > 0.0 && self.net_rng.gen_bool(d.spike_probability.min(1.0)) {
            self.net_rng.gen_range(0.0..=d.spike_ms * 1000.0)
        } else {
            0.0
        };
        depart + (prop + jitter + spike).round() as u64
    }

    fn send(&mut self, from: NodeId, to: NodeId, env: Envelope) {
        let bytes = env.msg.wire_size(self.cfg.payload_scale);
        let arrive = self.delay_us(from, to, bytes);
        self.wire_bytes += bytes;
        self.messages += 1;
        let mut e = TraceEvent::new(self.now, EventKind::Send, from);
        e.peer = Some(to);
        e.bytes = Some(bytes);
        e.digest = Some(env.rid);
        e.note = Some(env.msg.name().to_string());
        self.trace(e);
        self.schedule(arrive, Ev::Deliver { from, to, env });
    }
}

/// A node's handle on the world, valid inside its tasks and handlers.
#[derive(Clone)]
pub struct Ctx {
    w: Rc<RefCell<World>>,
    node: NodeId,
}

impl Ctx {
    pub fn id(&self) -> NodeId {
        self.node
    }

    pub fn now(&self) -> u64 {
        self.w.borrow().now
    }

    pub fn protocol(&self) -> ProtocolConfig {
        self.w.borrow().cfg.protocol.clone()
    }

    pub fn payload_scale(&self) -> u64 {
        self.w.borrow().cfg.payload_scale
    }

    pub(crate) fn with<R>(&self, f: impl FnOnce(&mut World) -> R) -> R {
        f(&mut self.w.borrow_mut())
    }

    pub(crate) fn with_node<R>(&self, f: impl FnOnce(&mut Node) -> R) -> R {
        let mut w = self.w.borrow_mut();
        f(w.nodes.get_mut(&self.node).expect("ctx node exists"))
    }

    /// Runs `f` on this node with the key directory alongside.
    pub(crate) fn with_node_keys<R>(&self, f: impl FnOnce(&mut Node, &KeyDirectory) -> R) -> R {
        let mut w = self.w.borrow_mut();
        let w = &mut *w;
        f(w.nodes.get_mut(&self.node).expect("ctx node exists"), &w.keys)
    }

    /// Sends each message as a request under one fresh id whose replies
    /// this task will collect.
    pub fn request(&self, msgs: Vec<(NodeId, Msg)>) -> Rid {
        let mut w = self.w.borrow_mut();
        w.next_rid += 1;
        let rid = w.next_rid;
        let task = w.current;
        w.pending.insert(rid, Pending { owner: self.node, task, replies: Vec::new() });
        for (to, msg) in msgs {
            w.send(self.node, to, Envelope { rid, reply: false, msg });
        }
        rid
    }

    pub fn reply(&self, to: NodeId, rid: Rid, msg: Msg) {
        self.w.borrow_mut().send(self.node, to, Envelope { rid, reply: true, msg });
    }

    /// Resolves once `pred` holds over the replies gathered for `rid`.
    pub fn wait<F: FnMut(&[(NodeId, Msg)]) -> bool + Unpin>(&self, rid: Rid, pred: F) -> Wait<F> {
        Wait { ctx: self.clone(), rid, pred }
    }

    pub fn replies(&self, rid: Rid) -> Vec<(NodeId, Msg)> {
        self.w.borrow().pending.get(&rid).map(|p| p.replies.clone()).unwrap_or_default()
    }

    /// Stops collecting for `rid`; later replies are discarded.
    pub fn finish(&self, rid: Rid) -> Vec<(NodeId, Msg)> {
        self.w.borrow_mut().pending.remove(&rid).map(|p| p.replies).unwrap_or_default()
    }

    pub fn sleep_us(&self, us: u64) -> Sleep {
        Sleep { ctx: self.clone(), until: self.now() + us, armed: false }
    }

    /// Registry snapshot, served midway through a round trip.
    pub async fn oracle_get(&self) -> ChangeSet {
        let half = self.oracle_half_us();
        self.sleep_us(half).await;
        let snap = self.with(|w| {
            let snap = w.oracle.get();
            let seq = w.oracle_log.len() as u64;
            let rec = OracleRecord { seq, time: w.now, node: self.node, op: OracleOp::Get { snapshot: snap.keys() } };
            w.oracle_log.push(rec);
            w.trace(TraceEvent::new(w.now, EventKind::OracleGet, self.node));
            snap
        });
        self.sleep_us(half).await;
        snap
    }

    pub async fn oracle_add(&self, change: Change) -> Result<(), RegistryError> {
        let half = self.oracle_half_us();
        self.sleep_us(half).await;
        let res = self.with(|w| {
            let key = change.key();
            let res = {
                let World { oracle, keys, .. } = &mut *w;
                oracle.add(change, keys)
            };
            let seq = w.oracle_log.len() as u64;
            let rec = OracleRecord {
                seq,
                time: w.now,
                node: self.node,
                op: OracleOp::Add { sign: key.0, subject: key.1, accepted: res.is_ok() },
            };
            w.oracle_log.push(rec);
            let mut e = TraceEvent::new(w.now, EventKind::OracleAdd, self.node);
            e.note = Some(format!("{}{}", if key.0 == Sign::Plus { '+' } else { '-' }, key.1));
            w.trace(e);
            res
        });
        self.sleep_us(half).await;
        res
    }

    fn oracle_half_us(&self) -> u64 {
        (self.w.borrow().cfg.protocol.oracle_latency_ms * 500.0).round() as u64
    }

    /// Starts a task on this node; it is dropped if the node crashes.
    pub fn spawn<F: Future<Output = ()> + 'static>(&self, fut: F) {
        let mut w = self.w.borrow_mut();
        if w.nodes.get(&self.node).is_some_and(|n| n.status == Status::Crashed) {
            return;
        }
        w.next_task += 1;
        let id = w.next_task;
        w.spawned.push((id, self.node, Box::pin(fut)));
        w.wake(id);
    }

    pub(crate) fn record_retry(&self, obj: ObjectId, op: u64) {
        self.with(|w| {
            w.retries += 1;
            let mut e = TraceEvent::new(w.now, EventKind::Retry, self.node);
            e.obj = Some(obj.0);
            e.op = Some(op);
            w.trace(e);
        });
    }

    pub(crate) fn begin_op(&self, kind: OpKind, obj: Option<ObjectId>) -> u64 {
        self.with(|w| {
            let id = w.ops.len() as u64;
            w.ops.push(OpRecord {
                id,
                kind,
                obj,
                invoker: self.node,
                invoke: w.now,
                respond: None,
                tag: None,
                digest: None,
                failed: None,
            });
            let mut e = TraceEvent::new(w.now, EventKind::Invoke, self.node);
            e.op = Some(id);
            e.op_kind = Some(kind);
            e.obj = obj.map(|o| o.0);
            w.trace(e);
            id
        })
    }

    /// A write's tag and value digest, fixed before dissemination.
    pub(crate) fn tag_op(&self, id: u64, tag: Tag, digest: u64) {
        self.with(|w| {
            let op = &mut w.ops[id as usize];
            op.tag = Some(tag);
            op.digest = Some(digest);
            let mut e = TraceEvent::new(w.now, EventKind::Tagged, self.node);
            e.op = Some(id);
            e.tag = Some(tag);
            e.digest = Some(digest);
            w.trace(e);
        });
    }

    pub(crate) fn end_op(&self, id: u64, result: Option<(Tag, u64)>) {
        self.with(|w| {
            let now = w.now;
            let op = &mut w.ops[id as usize];
            op.respond = Some(now);
            if let Some((t, d)) = result {
                op.tag = Some(t);
                op.digest = Some(d);
            }
            let mut e = TraceEvent::new(now, EventKind::Respond, self.node);
            e.op = Some(id);
            e.tag = op.tag;
            e.digest = op.digest;
            w.trace(e);
        });
    }

    pub(crate) fn fail_op(&self, id: u64, err: String) {
        self.with(|w| {
            let now = w.now;
            let op = &mut w.ops[id as usize];
            op.respond = Some(now);
            op.failed = Some(err.clone());
            let mut e = TraceEvent::new(now, EventKind::Fail, self.node);
            e.op = Some(id);
            e.note = Some(err);
            w.trace(e);
        });
    }
}

pub struct Wait<F> {
    ctx: Ctx,
    rid: Rid,
    pred: F,
}

impl<F: FnMut(&[(NodeId, Msg)]) -> bool + Unpin> Future for Wait<F> {
    type Output = ();

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let this = self.get_mut();
        let mut w = this.ctx.w.borrow_mut();
        let cur = w.current;
        let Some(p) = w.pending.get_mut(&this.rid) else { return Poll::Ready(()) };
        if (this.pred)(&p.replies) {
            Poll::Ready(())
        } else {
            p.task = cur;
            Poll::Pending
        }
    }
}

pub struct Sleep {
    ctx: Ctx,
    until: u64,
    armed: bool,
}

impl Future for Sleep {
    type Output = ();

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<()> {
        let this = self.get_mut();
        let mut w = this.ctx.w.borrow_mut();
        if w.now >= this.until {
            return Poll::Ready(());
        }
        if !this.armed {
            let task = w.current.expect("sleep outside a task");
            w.schedule(this.until, Ev::Wake(task));
            this.armed = true;
        }
        Poll::Pending
    }
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub trace: Vec<TraceEvent>,
    pub trace_digest: String,
    pub trace_events: u64,
    pub ops: Vec<OpRecord>,
    /// Operations invoked at live nodes that never responded.
    pub stuck: Vec<u64>,
    pub oracle_log: Vec<OracleRecord>,
    pub retries: u64,
    pub wire_bytes: u64,
    pub messages: u64,
    /// Logical payload plus coefficient bytes held by live members.
    pub stored_bytes: u64,
    pub stored_by_node: BTreeMap<NodeId, u64>,
    pub horizon_reached: bool,
    pub end_time_us: u64,
    /// Final membership per the registry.
    pub members: BTreeSet<NodeId>,
    pub ids: Ids,
    /// Each node's status and protocol state at the end of the run.
    pub nodes: BTreeMap<NodeId, (Status, NodeState)>,
}

impl RunReport {
    pub fn failed_ops(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.failed.is_some())
    }

    pub fn completed(&self, kind: OpKind) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(move |o| o.kind == kind && o.is_complete())
    }
}

/// Identifiers assigned to each configured actor.
#[derive(Clone, Debug, Default)]
pub struct Ids {
    pub members: Vec<NodeId>,
    pub joiners: Vec<NodeId>,
    pub clients: Vec<NodeId>,
}

impl Ids {
    pub fn of(&self, a: Actor) -> NodeId {
        match a {
            Actor::Client(i) => self.clients[i],
            Actor::Member(i) => self.members[i],
            Actor::Joiner(i) => self.joiners[i],
        }
    }
}

pub struct Sim {
    w: Rc<RefCell<World>>,
    tasks: HashMap<TaskId, (NodeId, Task)>,
    ids: Ids,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Result<Sim, ConfigError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut used = BTreeSet::new();
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let id = NodeId(rng.gen_range(1..1u64 << 40));
            if used.insert(id) {
                return id;
            }
        };
        let ids = Ids {
            members: (0..cfg.members).map(|_| fresh(&mut rng)).collect(),
            joiners: (0..cfg.joiners).map(|_| fresh(&mut rng)).collect(),
            clients: (0..cfg.clients).map(|_| fresh(&mut rng)).collect(),
        };

        let mut keys = KeyDirectory::new(cfg.seed);
        let mut signers = BTreeMap::new();
        for &m in ids.members.iter().chain(&ids.joiners) {
            signers.insert(m, keys.register(m).expect("fresh id"));
        }
        for &c in &ids.clients {
            signers.insert(c, keys.register_invoker(c).expect("fresh id"));
        }
        let bootstrap: Vec<Change> = ids.members.iter().map(|m| Change::signed(Sign::Plus, &signers[m])).collect();
        let boot_set: ChangeSet = bootstrap.iter().cloned().collect();
        let oracle = Registry::new(cfg.protocol.crf_n, bootstrap.clone());
        let oracle_log = bootstrap
            .iter()
            .enumerate()
            .map(|(i, c)| OracleRecord {
                seq: i as u64,
                time: 0,
                node: c.node,
                op: OracleOp::Add { sign: Sign::Plus, subject: c.node, accepted: true },
            })
            .collect();

        let behaviors: BTreeMap<usize, Behavior> = cfg.byzantine.iter().map(|b| (b.member, b.behavior)).collect();
        let mut nodes = BTreeMap::new();
        let mut add = |id: NodeId, role: Role, behavior: Behavior, status: Status, changes: ChangeSet| {
            let node = Node {
                id,
                role,
                behavior,
                status,
                state: NodeState::new(id, changes, cfg.protocol.delta),
                signer: signers[&id].clone(),
                rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ id.0.rotate_left(17)),
                frozen: BTreeMap::new(),
                queue: VecDeque::new(),
                busy: false,
            };
            nodes.insert(id, node);
        };
        for (i, &m) in ids.members.iter().enumerate() {
            let b = behaviors.get(&i).copied().unwrap_or(Behavior::Correct);
            add(m, Role::Member, b, Status::Active, boot_set.clone());
        }
        for &j in &ids.joiners {
            add(j, Role::Joiner, Behavior::Correct, Status::Outside, ChangeSet::new());
        }
        for &c in &ids.clients {
            add(c, Role::Client, Behavior::Correct, Status::Active, boot_set.clone());
        }

        let net_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x6e6574);
        let cfg = Rc::new(cfg);
        let world = World {
            now: 0,
            seq: 0,
            events: BinaryHeap::new(),
            cfg: cfg.clone(),
            keys,
            nodes,
            oracle,
            oracle_log,
            net_rng,
            egress_free: HashMap::new(),
            pending: HashMap::new(),
            next_rid: 0,
            next_task: 0,
            ready: VecDeque::new(),
            queued: HashSet::new(),
            current: None,
            spawned: Vec::new(),
            killed: Vec::new(),
            trace: Trace::new(cfg.record_messages),
            ops: Vec::new(),
            retries: 0,
            wire_bytes: 0,
            messages: 0,
        };
        let sim = Sim { w: Rc::new(RefCell::new(world)), tasks: HashMap::new(), ids };
        sim.schedule_workload(&mut rng);
        Ok(sim)
    }

    pub fn ids(&self) -> &Ids {
        &self.ids
    }

    fn schedule_workload(&self, rng: &mut ChaCha8Rng) {
        let cfg = self.w.borrow().cfg.clone();
        let mut w = self.w.borrow_mut();
        let ms = |t: f64| (t * 1000.0).round() as u64;
        let mut value_seq = 0u64;
        let mut write = |obj: u64, size: usize| {
            value_seq += 1;
            Operation::Write { obj: ObjectId(obj), value: make_value(cfg.seed, value_seq, size, cfg.payload_scale) }
        };
        if let Some(p) = &cfg.populate {
            let writers = cfg.periodic.as_ref().map_or(cfg.clients, |q| q.writers.max(1)).min(cfg.clients);
            for o in 0..p.objects {
                let node = self.ids.clients[(o as usize) % writers];
                let op = write(o, p.value_size);
                w.schedule(0, Ev::Invoke { node, op });
            }
        }
        if let Some(p) = &cfg.periodic {
            for c in 0..p.writers + p.readers {
                let node = self.ids.clients[c];
                let offset = if p.aligned { 0.0 } else { rng.gen_range(0.0..p.period_ms) };
                for r in 0..p.rounds {
                    let t = p.start_ms + offset + r as f64 * p.period_ms;
                    let obj = rng.gen_range(0..p.objects);
                    let op = if c < p.writers { write(obj, p.value_size) } else { Operation::Read { obj: ObjectId(obj) } };
                    w.schedule(ms(t), Ev::Invoke { node, op });
                }
            }
        }
        for s in &cfg.script {
            let node = self.ids.of(s.actor);
            let op = match &s.op {
                OpSpec::Read { obj } => Operation::Read { obj: ObjectId(*obj) },
                OpSpec::Write { obj, size } => write(*obj, *size),
                OpSpec::Join => Operation::Join,
                OpSpec::Depart => Operation::Depart,
            };
            w.schedule(ms(s.at_ms), Ev::Invoke { node, op });
        }
        for c in &cfg.crashes {
            let node = self.ids.of(c.actor);
            w.schedule(ms(c.at_ms), Ev::Crash(node));
        }
    }

    fn ctx(&self, node: NodeId) -> Ctx {
        Ctx { w: self.w.clone(), node }
    }

    fn poll_ready(&mut self) {
        let mut cx = Context::from_waker(Waker::noop());
        loop {
            let (spawned, killed, next) = {
                let mut w = self.w.borrow_mut();
                let spawned = std::mem::take(&mut w.spawned);
                let killed = std::mem::take(&mut w.killed);
                let next = if spawned.is_empty() && killed.is_empty() { w.ready.pop_front() } else { None };
                if let Some(t) = next {
                    w.queued.remove(&t);
                    w.current = Some(t);
                }
                (spawned, killed, next)
            };
            for (id, node, fut) in spawned {
                self.tasks.insert(id, (node, fut));
            }
            for n in killed {
                self.tasks.retain(|_, (owner, _)| *owner != n);
            }
            let Some(id) = next else {
                if self.w.borrow().spawned.is_empty() && self.w.borrow().ready.is_empty() {
                    break;
                }
                continue;
            };
            if let Some((_, fut)) = self.tasks.get_mut(&id) {
                if fut.as_mut().poll(&mut cx).is_ready() {
                    self.tasks.remove(&id);
                }
            }
            self.w.borrow_mut().current = None;
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Wake(t) => self.w.borrow_mut().wake(t),
            Ev::Crash(node) => {
                let mut w = self.w.borrow_mut();
                let now = w.now;
                if let Some(n) = w.nodes.get_mut(&node) {
                    n.status = Status::Crashed;
                    n.queue.clear();
                }
                w.killed.push(node);
                w.trace(TraceEvent::new(now, EventKind::Crash, node));
            }
            Ev::Invoke { node, op } => {
                let start = {
                    let mut w = self.w.borrow_mut();
                    let n = w.nodes.get_mut(&node).expect("scheduled node exists");
                    if n.status == Status::Crashed {
                        false
                    } else {
                        n.queue.push_back(op);
                        !std::mem::replace(&mut n.busy, true)
                    }
                };
                if start {
                    let ctx = self.ctx(node);
                    ctx.clone().spawn(run_queue(ctx));
                }
            }
            Ev::Deliver { from, to, env } => {
                let request = {
                    let mut w = self.w.borrow_mut();
                    let now = w.now;
                    let status = w.nodes.get(&to).map(|n| n.status);
                    let kind = if status == Some(Status::Crashed) { EventKind::Drop } else { EventKind::Deliver };
                    let mut e = TraceEvent::new(now, kind, to);
                    e.peer = Some(from);
                    e.digest = Some(env.rid);
                    e.note = Some(env.msg.name().to_string());
                    w.trace(e);
                    if kind == EventKind::Drop {
                        return;
                    }
                    if env.reply {
                        let mut wake = None;
                        if let Some(p) = w.pending.get_mut(&env.rid) {
                            if p.owner == to {
                                p.replies.push((from, env.msg));
                                wake = p.task;
                            }
                        }
                        if let Some(t) = wake {
                            w.wake(t);
                        }
                        None
                    } else {
                        Some(env)
                    }
                };
                if let Some(env) = request {
                    dynamic::on_request(&self.ctx(to), from, env.rid, env.msg);
                }
            }
        }
    }

    /// Runs to quiescence or the configured horizon.
    pub fn run(mut self) -> RunReport {
        let horizon = self.w.borrow().cfg.horizon_ms.map(|h| (h * 1000.0).round() as u64);
        let mut horizon_reached = false;
        loop {
            self.poll_ready();
            let next = self.w.borrow_mut().events.pop();
            let Some(s) = next else { break };
            if horizon.is_some_and(|h| s.time > h) {
                horizon_reached = true;
                break;
            }
            self.w.borrow_mut().now = s.time;
            self.handle(s.ev);
        }
        self.tasks.clear();
        let w = Rc::try_unwrap(self.w).ok().expect("no outstanding world handles").into_inner();
        let scale = w.cfg.payload_scale;
        let mut stored_by_node = BTreeMap::new();
        for n in w.nodes.values() {
            if n.role != Role::Client && matches!(n.status, Status::Active | Status::Departing) {
                let b: u64 = n.state.stores.values().map(|s| s.stored_bytes_scaled(scale)).sum();
                stored_by_node.insert(n.id, b);
            }
        }
        let stuck = w
            .ops
            .iter()
            .filter(|o| o.respond.is_none())
            .filter(|o| w.nodes.get(&o.invoker).is_some_and(|n| n.status != Status::Crashed))
            .map(|o| o.id)
            .collect();
        RunReport {
            trace_digest: w.trace.digest(),
            trace_events: w.trace.len(),
            trace: w.trace.into_events(),
            ops: w.ops,
            stuck,
            oracle_log: w.oracle_log,
            retries: w.retries,
            wire_bytes: w.wire_bytes,
            messages: w.messages,
            stored_bytes: stored_by_node.values().sum(),
            stored_by_node,
            horizon_reached,
            end_time_us: w.now,
            members: w.oracle.get().active(),
            ids: self.ids,
            nodes: w.nodes.into_values().map(|n| (n.id, (n.status, n.state))).collect(),
        }
    }
}

/// Builds and runs a simulation.
pub fn run(cfg: SimConfig) -> Result<RunReport, ConfigError> {
    Ok(Sim::new(cfg)?.run())
}

async fn run_queue(ctx: Ctx) {
    loop {
        let op = ctx.with_node(|n| {
            let op = n.queue.pop_front();
            if op.is_none() {
                n.busy = false;
            }
            op
        });
        let Some(op) = op else { return };
        dynamic::run_operation(&ctx, op).await;
    }
}

/// Unique, seed-determined value of `size` logical bytes.
fn make_value(seed: u64, seq: u64, size: usize, payload_scale: u64) -> Vec<u8> {
    let len = size.div_ceil(payload_scale as usize).max(16);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ seq.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    v[..8].copy_from_slice(&seed.to_be_bytes());
    v[8..16].copy_from_slice(&seq.to_be_bytes());
    v
}

/// Digest recorded for a value; the initial value has its own constant.
pub fn value_digest(v: Option<&[u8]>) -> u64 {
    match v {
        None => INITIAL_DIGEST,
        Some(b) => digest64(b).max(1),
    }
}
