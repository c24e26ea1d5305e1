//! Deterministic discrete-event engine.
//!
//! Events are delivered in lexicographic `(time, seq)` order, where `seq` is
//! a counter assigned at scheduling. Equal-time events therefore arrive in
//! the order they were scheduled. The clock only ever moves to the time of a
//! delivered event.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

/// Simulated seconds. Always finite and non-negative.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct SimTime<T>(T);

impl<T: Scalar> SimTime<T> {
    pub fn new(seconds: T) -> Result<Self, KernelError> {
        if !seconds.is_finite() || seconds < T::zero() {
            return Err(KernelError::InvalidTime(seconds.to_string()));
        }
        Ok(Self(seconds))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn seconds(&self) -> &T {
        &self.0
    }

    pub fn into_inner(self) -> T {
        self.0
    }
}

impl<T: Scalar> Eq for SimTime<T> {}

impl<T: Scalar> Ord for SimTime<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // construction rejects NaN, so the order is total
        self.0.partial_cmp(&other.0).expect("SimTime is never NaN")
    }
}

impl<T: Scalar> fmt::Display for SimTime<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("event time {time} is before the current clock {now}")]
    TimeInPast { time: String, now: String },
    #[error("unknown target entity {0}")]
    UnknownTarget(usize),
    #[error("invalid simulation time {0}")]
    InvalidTime(String),
}

#[derive(Clone, Debug)]
pub struct Event<T, M> {
    pub time: SimTime<T>,
    pub id: EventId,
    pub target: EntityId,
    pub payload: M,
}

struct Queued<T, M>(Event<T, M>);

impl<T: Scalar, M> PartialEq for Queued<T, M> {
    fn eq(&self, other: &Self) -> bool {
        self.0.id == other.0.id
    }
}

impl<T: Scalar, M> Eq for Queued<T, M> {}

impl<T: Scalar, M> PartialOrd for Queued<T, M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar, M> Ord for Queued<T, M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .time
            .cmp(&other.0.time)
            .then_with(|| self.0.id.cmp(&other.0.id))
    }
}

/// Clock, queue and entity registry. Handlers receive this while an event
/// is being delivered so they can schedule follow-up events.
pub struct Scheduler<T, M> {
    now: SimTime<T>,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<T, M>>>,
    entities: Vec<String>,
}

impl<T: Scalar, M> Scheduler<T, M> {
    fn new() -> Self {
        Self {
            now: SimTime::zero(),
            next_seq: 0,
            queue: BinaryHeap::new(),
            entities: Vec::new(),
        }
    }

    pub fn now(&self) -> &SimTime<T> {
        &self.now
    }

    pub fn schedule_at(&mut self, time: T, target: EntityId, payload: M) -> Result<EventId, KernelError> {
        let time = SimTime::new(time)?;
        if time < self.now {
            return Err(KernelError::TimeInPast {
                time: time.to_string(),
                now: self.now.to_string(),
            });
        }
        if target.0 >= self.entities.len() {
            return Err(KernelError::UnknownTarget(target.0));
        }
        let id = EventId(self.next_seq);
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(Event {
            time,
            id,
            target,
            payload,
        })));
        Ok(id)
    }

    /// Schedules `delay` seconds after the current clock.
    pub fn schedule_in(&mut self, delay: T, target: EntityId, payload: M) -> Result<EventId, KernelError> {
        let at = self.now.seconds().clone() + delay;
        self.schedule_at(at, target, payload)
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities[id.0]
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

/// What a handler reports about an event it processed, for the trace.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceNote {
    pub kind: &'static str,
    pub job: Option<String>,
    pub resource: Option<String>,
    pub value: Option<String>,
}

impl TraceNote {
    pub fn kind(kind: &'static str) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn job(mut self, job: impl Into<String>) -> Self {
        self.job = Some(job.into());
        self
    }

    pub fn resource(mut self, resource: impl Into<String>) -> Self {
        self.resource = Some(resource.into());
        self
    }

    pub fn value(mut self, value: impl fmt::Display) -> Self {
        self.value = Some(value.to_string());
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub time: SimTime<T>,
    pub seq: u64,
    pub entity: String,
    pub note: TraceNote,
}

pub const TRACE_HEADER: [&str; 7] = ["time", "seq", "entity", "kind", "job", "resource", "value"];

/// Writes trace rows as CSV with the header `time,seq,entity,kind,job,resource,value`.
pub fn write_trace_csv<T: Scalar, W: Write>(rows: &[TraceRow<T>], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.seq.to_string(),
            r.entity.clone(),
            r.note.kind.to_string(),
            r.note.job.clone().unwrap_or_default(),
            r.note.resource.clone().unwrap_or_default(),
            r.note.value.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reacts to delivered events.
pub trait Handler<T, M> {
    fn handle(&mut self, sched: &mut Scheduler<T, M>, event: Event<T, M>) -> TraceNote;
}

/// A self-contained entity that handles its own events.
pub trait Entity<T, M> {
    fn on_event(&mut self, sched: &mut Scheduler<T, M>, event: Event<T, M>) -> TraceNote;
}

/// Routes each event to the entity registered under its target id.
pub struct EntitySet<T, M> {
    entities: Vec<Box<dyn Entity<T, M>>>,
}

impl<T, M> Default for EntitySet<T, M> {
    fn default() -> Self {
        Self { entities: Vec::new() }
    }
}

impl<T: Scalar, M> EntitySet<T, M> {
    pub fn add(&mut self, sim: &mut Simulation<T, M>, name: &str, entity: Box<dyn Entity<T, M>>) -> EntityId {
        let id = sim.register(name);
        assert_eq!(id.0, self.entities.len(), "entities must be added in registration order");
        self.entities.push(entity);
        id
    }
}

impl<T: Scalar, M> Handler<T, M> for EntitySet<T, M> {
    fn handle(&mut self, sched: &mut Scheduler<T, M>, event: Event<T, M>) -> TraceNote {
        let target = event.target.0;
        self.entities[target].on_event(sched, event)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats<T> {
    pub events_delivered: u64,
    pub final_time: SimTime<T>,
}

pub struct Simulation<T, M> {
    sched: Scheduler<T, M>,
    delivered: u64,
    trace: Option<Vec<TraceRow<T>>>,
}

impl<T: Scalar, M> Default for Simulation<T, M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar, M> Simulation<T, M> {
    pub fn new() -> Self {
        Self {
            sched: Scheduler::new(),
            delivered: 0,
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceRow<T>]> {
        self.trace.as_deref()
    }

    pub fn register(&mut self, name: &str) -> EntityId {
        self.sched.entities.push(name.to_string());
        EntityId(self.sched.entities.len() - 1)
    }

    pub fn now(&self) -> &SimTime<T> {
        &self.sched.now
    }

    pub fn scheduler(&mut self) -> &mut Scheduler<T, M> {
        &mut self.sched
    }

    pub fn schedule_at(&mut self, time: T, target: EntityId, payload: M) -> Result<EventId, KernelError> {
        self.sched.schedule_at(time, target, payload)
    }

    pub fn events_delivered(&self) -> u64 {
        self.delivered
    }

    /// Delivers every queued event with `time <= limit` in `(time, seq)`
    /// order. Later events stay queued.
    pub fn run_until<H: Handler<T, M>>(&mut self, limit: &T, handler: &mut H) -> RunStats<T> {
        self.deliver(Some(limit), handler)
    }

    /// Delivers events until the queue is empty.
    pub fn run<H: Handler<T, M>>(&mut self, handler: &mut H) -> RunStats<T> {
        self.deliver(None, handler)
    }

    fn deliver<H: Handler<T, M>>(&mut self, limit: Option<&T>, handler: &mut H) -> RunStats<T> {
        let mut count = 0;
        loop {
            let due = match self.sched.queue.peek() {
                Some(Reverse(Queued(ev))) => limit.is_none_or(|l| ev.time.seconds() <= l),
                None => false,
            };
            if !due {
                break;
            }
            let Reverse(Queued(event)) = self.sched.queue.pop().expect("peeked");
            self.sched.now = event.time.clone();
            let time = event.time.clone();
            let seq = event.id.0;
            let target = event.target;
            let note = handler.handle(&mut self.sched, event);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceRow {
                    time,
                    seq,
                    entity: self.sched.entities[target.0].clone(),
                    note,
                });
            }
            count += 1;
        }
        self.delivered += count;
        RunStats {
            events_delivered: count,
            final_time: self.sched.now.clone(),
        }
    }
}

/// Root random stream for a simulation run.
///
/// The generator is ChaCha8 (`rand_chacha`), seeded through
/// `SeedableRng::seed_from_u64`. Each entity draws from its own stream of
/// the same key: stream number = entity index. Streams never overlap, so
/// adding draws in one entity cannot perturb another.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn for_entity(&self, id: EntityId) -> ChaCha8Rng {
        self.stream(id.0 as u64)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;

    #[derive(Default)]
    struct Recorder {
        seen: Vec<(f64, &'static str)>,
        now_during: Vec<f64>,
    }

    impl Handler<f64, &'static str> for Recorder {
        fn handle(&mut self, sched: &mut Scheduler<f64, &'static str>, ev: Event<f64, &'static str>) -> TraceNote {
            self.now_during.push(*sched.now().seconds());
            self.seen.push((*ev.time.seconds(), ev.payload));
            TraceNote::kind("msg").value(ev.payload)
        }
    }

    #[test]
    fn first_event_gets_sequence_zero() {
        let mut sim: Simulation<f64, &str> = Simulation::new();
        let broker = sim.register("broker");
        assert_eq!(sim.schedule_at(5.0, broker, "done").unwrap(), EventId(0));
        assert_eq!(sim.schedule_at(5.0, broker, "done").unwrap(), EventId(1));
    }

    #[test]
    fn delivery_is_time_then_sequence() {
        let mut sim = Simulation::new();
        let x = sim.register("x");
        sim.schedule_at(3.0, x, "A").unwrap();
        sim.schedule_at(1.0, x, "B").unwrap();
        sim.schedule_at(1.0, x, "C").unwrap();
        let mut rec = Recorder::default();
        let stats = sim.run_until(&10.0, &mut rec);
        let order: Vec<_> = rec.seen.iter().map(|s| s.1).collect();
        assert_eq!(order, ["B", "C", "A"]);
        assert_eq!(stats.events_delivered, 3);
        assert_eq!(*stats.final_time.seconds(), 3.0);
    }

    #[test]
    fn same_time_scheduling_is_fifo() {
        struct Chain;
        impl Handler<f64, u32> for Chain {
            fn handle(&mut self, sched: &mut Scheduler<f64, u32>, ev: Event<f64, u32>) -> TraceNote {
                if ev.payload == 0 {
                    let now = *sched.now().seconds();
                    sched.schedule_at(now, ev.target, 2).unwrap();
                }
                TraceNote::kind("k").value(ev.payload)
            }
        }
        let mut sim = Simulation::new();
        sim.enable_trace();
        let x = sim.register("x");
        sim.schedule_at(1.0, x, 0).unwrap();
        sim.schedule_at(1.0, x, 1).unwrap();
        sim.run_until(&5.0, &mut Chain);
        let vals: Vec<_> = sim.trace().unwrap().iter().map(|r| r.note.value.clone().unwrap()).collect();
        assert_eq!(vals, ["0", "1", "2"]);
    }

    #[test]
    fn past_events_and_unknown_targets_are_rejected() {
        let mut sim = Simulation::new();
        let x = sim.register("x");
        sim.schedule_at(2.0, x, "a").unwrap();
        sim.run_until(&2.0, &mut Recorder::default());
        assert!(matches!(sim.schedule_at(1.0, x, "b"), Err(KernelError::TimeInPast { .. })));
        assert_eq!(sim.schedule_at(3.0, EntityId(9), "c"), Err(KernelError::UnknownTarget(9)));
        assert!(matches!(sim.schedule_at(f64::NAN, x, "d"), Err(KernelError::InvalidTime(_))));
    }

    #[test]
    fn empty_queue_leaves_clock_at_zero() {
        let mut sim: Simulation<f64, &str> = Simulation::new();
        assert_eq!(*sim.now().seconds(), 0.0);
        let stats = sim.run_until(&100.0, &mut Recorder::default());
        assert_eq!(stats, RunStats { events_delivered: 0, final_time: SimTime::zero() });
    }

    #[test]
    fn clock_stops_at_last_delivery() {
        let mut sim = Simulation::new();
        let x = sim.register("x");
        sim.schedule_at(7.5, x, "a").unwrap();
        sim.schedule_at(8.0, x, "b").unwrap();
        sim.schedule_at(12.0, x, "late").unwrap();
        let mut rec = Recorder::default();
        let stats = sim.run_until(&10.0, &mut rec);
        assert_eq!(rec.now_during, [7.5, 8.0]);
        assert_eq!(*stats.final_time.seconds(), 8.0);
        assert_eq!(*sim.now().seconds(), 8.0);
        assert_eq!(sim.scheduler().pending(), 1);
    }

    #[test]
    fn entity_set_routes_by_target() {
        struct Counter(u32);
        impl Entity<f64, ()> for Counter {
            fn on_event(&mut self, _: &mut Scheduler<f64, ()>, _: Event<f64, ()>) -> TraceNote {
                self.0 += 1;
                TraceNote::kind("tick").value(self.0)
            }
        }
        let mut sim = Simulation::new();
        sim.enable_trace();
        let mut set = EntitySet::default();
        let a = set.add(&mut sim, "a", Box::new(Counter(0)));
        let b = set.add(&mut sim, "b", Box::new(Counter(10)));
        sim.schedule_at(1.0, b, ()).unwrap();
        sim.schedule_at(2.0, a, ()).unwrap();
        sim.run_until(&5.0, &mut set);
        let rows = sim.trace().unwrap();
        assert_eq!(rows[0].entity, "b");
        assert_eq!(rows[0].note.value.as_deref(), Some("11"));
        assert_eq!(rows[1].entity, "a");
    }

    #[test]
    fn trace_csv_has_fixed_header() {
        let rows = vec![TraceRow {
            time: SimTime::new(1.5).unwrap(),
            seq: 3,
            entity: "r1".into(),
            note: TraceNote::kind("job-start").job("j1").resource("r1"),
        }];
        let mut buf = Vec::new();
        write_trace_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "time,seq,entity,kind,job,resource,value\n1.5,3,r1,job-start,j1,r1,\n");
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let root = SeededRng::new(42);
        let a: Vec<u64> = (0..4).map(|_| 0).scan(root.stream(1), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(root.stream(1), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(root.stream(2), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
