use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Simulated time in microseconds.
pub type Time = u64;

pub const MS: Time = 1_000;
pub const SECOND: Time = 1_000_000;

#[derive(Debug, Clone)]
pub struct Scheduled<T> {
    pub time: Time,
    pub seq: u64,
    pub item: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<T> Eq for Scheduled<T> {}

impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Scheduled<T> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Pending events in `(time, sequence)` order. Sequence numbers are handed
/// out at scheduling, so equal-time events run in the order they were
/// scheduled.
#[derive(Debug)]
pub struct EventQueue<T> {
    heap: BinaryHeap<Scheduled<T>>,
    next_seq: u64,
    now: Time,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `item` at `at`, or now if `at` is already past.
    pub fn schedule(&mut self, at: Time, item: T) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled {
            time: at.max(self.now),
            seq,
            item,
        });
        seq
    }

    pub fn schedule_in(&mut self, after: Time, item: T) -> u64 {
        self.schedule(self.now.saturating_add(after), item)
    }

    pub fn peek_time(&self) -> Option<Time> {
        self.heap.peek().map(|s| s.time)
    }

    /// Removes the earliest event and advances the clock to it.
    pub fn pop(&mut self) -> Option<Scheduled<T>> {
        let next = self.heap.pop()?;
        debug_assert!(next.time >= self.now);
        self.now = next.time;
        Some(next)
    }

    /// Pops the earliest event if it is due no later than `limit`.
    pub fn pop_until(&mut self, limit: Time) -> Option<Scheduled<T>> {
        if self.peek_time()? > limit {
            return None;
        }
        self.pop()
    }
}
