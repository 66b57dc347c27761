//! Discrete-event scheduler.
//!
//! Events are executed in `(fire_at, sequence)` order where `sequence` is a
//! monotone insertion counter, so two events scheduled for the same instant
//! always run in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::error::SimError;
use crate::time::SimTime;

/// Opaque handle returned by [`Scheduler::schedule`], used for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn for_test(seq: u64) -> Self {
        EventHandle(seq)
    }
}

struct Scheduled<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

// BinaryHeap is a max-heap; reverse so the earliest (time, seq) pops first.
impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq)).reverse()
    }
}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Scheduled<E> {}

pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Scheduled<E>>,
    live: HashSet<u64>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events executed so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Number of live (not cancelled) pending events.
    pub fn pending_len(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { at, seq, event });
        self.live.insert(seq);
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> Result<EventHandle, SimError> {
        self.schedule(self.now + delay, event)
    }

    /// Cancels a pending event. Returns false if the handle was already
    /// cancelled or has fired.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    /// Pops the next live event with `fire_at <= end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.heap.peek()?;
            if head.at > end {
                return None;
            }
            let Scheduled { at, seq, event } = self.heap.pop()?;
            if !self.live.remove(&seq) {
                continue;
            }
            self.now = at;
            self.executed += 1;
            return Some((at, event));
        }
    }

    /// Moves the clock forward to `end` once no events remain before it.
    pub fn advance_to(&mut self, end: SimTime) {
        if end > self.now {
            self.now = end;
        }
    }

    /// Live pending events, in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = (SimTime, &E)> {
        self.heap
            .iter()
            .filter(|s| self.live.contains(&s.seq))
            .map(|s| (s.at, &s.event))
    }

    /// Executes every event with `fire_at <= end` through `handler`, then
    /// sets the clock to `end`.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Self, SimTime, E) -> Result<(), SimError>,
    {
        while let Some((at, event)) = self.pop_until(end) {
            handler(self, at, event)?;
        }
        self.advance_to(end);
        Ok(())
    }
}
