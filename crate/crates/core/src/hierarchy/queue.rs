use std::cmp::Reverse;
use std::collections::BTreeMap;

use crate::ids::{ConceptId, Millis};

/// A codelet thread waiting for the VM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadTicket {
    pub concept: ConceptId,
    pub inputs: Vec<Vec<i64>>,
    /// Concept that supplied each input slot; identifies the input context.
    pub sources: Vec<ConceptId>,
    /// Parent concept and input slot of the delivery that completed the
    /// inputs; the parent's action on that link is the one TD-updated.
    pub origin: Option<(ConceptId, usize)>,
    pub priority: u32,
    pub expires_at: Millis,
    pub resources: u32,
}

impl ThreadTicket {
    pub fn expired(&self, now: Millis) -> bool {
        now > self.expires_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Queued,
    /// Queue was full; this lower-ranked ticket was dropped to make room.
    Evicted(Box<ThreadTicket>),
    /// Queue was full and the new ticket ranked lowest.
    Rejected,
    /// The ticket was already past its deadline.
    Expired,
}

/// Bounded priority queue: highest priority first, FIFO among equals.
/// When full, the lowest-ranked ticket is evicted.
#[derive(Debug, Clone)]
pub struct SchedulerQueue {
    capacity: usize,
    seq: u64,
    items: BTreeMap<(Reverse<u32>, u64), ThreadTicket>,
}

impl SchedulerQueue {
    pub fn new(capacity: usize) -> Self {
        SchedulerQueue {
            capacity: capacity.max(1),
            seq: 0,
            items: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn enqueue(&mut self, ticket: ThreadTicket, now: Millis) -> EnqueueOutcome {
        if ticket.expired(now) {
            return EnqueueOutcome::Expired;
        }
        let key = (Reverse(ticket.priority), self.seq);
        self.seq += 1;
        let mut outcome = EnqueueOutcome::Queued;
        if self.items.len() >= self.capacity {
            let lowest = *self.items.keys().next_back().expect("full queue is non-empty");
            // A later arrival of equal priority ranks below every queued one.
            if key > lowest {
                return EnqueueOutcome::Rejected;
            }
            let evicted = self.items.remove(&lowest).expect("key just read");
            outcome = EnqueueOutcome::Evicted(Box::new(evicted));
        }
        self.items.insert(key, ticket);
        outcome
    }

    /// Highest-ranked ticket, expired or not.
    pub fn pop(&mut self) -> Option<ThreadTicket> {
        self.items.pop_first().map(|(_, t)| t)
    }

    /// Highest-ranked unexpired ticket, plus the number of expired ones
    /// discarded on the way.
    pub fn pop_live(&mut self, now: Millis) -> (Option<ThreadTicket>, usize) {
        let mut dropped = 0;
        while let Some(t) = self.pop() {
            if t.expired(now) {
                dropped += 1;
            } else {
                return (Some(t), dropped);
            }
        }
        (None, dropped)
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&ThreadTicket) -> bool) {
        self.items.retain(|_, t| keep(t));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ticket(priority: u32, tag: i64) -> ThreadTicket {
        ThreadTicket {
            concept: ConceptId(0),
            inputs: vec![vec![tag]],
            sources: vec![ConceptId(9)],
            origin: None,
            priority,
            expires_at: 100,
            resources: 10,
        }
    }

    #[test]
    fn pops_by_priority() {
        let mut q = SchedulerQueue::new(10);
        for p in [3, 1, 2] {
            q.enqueue(ticket(p, 0), 0);
        }
        let order: Vec<u32> = std::iter::from_fn(|| q.pop()).map(|t| t.priority).collect();
        assert_eq!(order, vec![3, 2, 1]);
    }

    #[test]
    fn equal_priority_is_fifo() {
        let mut q = SchedulerQueue::new(10);
        q.enqueue(ticket(5, 1), 0);
        q.enqueue(ticket(5, 2), 0);
        assert_eq!(q.pop().unwrap().inputs, vec![vec![1]]);
        assert_eq!(q.pop().unwrap().inputs, vec![vec![2]]);
    }

    #[test]
    fn full_queue_evicts_lowest() {
        let mut q = SchedulerQueue::new(2);
        q.enqueue(ticket(5, 1), 0);
        q.enqueue(ticket(3, 2), 0);
        assert_eq!(q.enqueue(ticket(1, 3), 0), EnqueueOutcome::Rejected);
        assert_eq!(q.enqueue(ticket(3, 4), 0), EnqueueOutcome::Rejected);
        match q.enqueue(ticket(4, 5), 0) {
            EnqueueOutcome::Evicted(t) => assert_eq!(t.inputs, vec![vec![2]]),
            other => panic!("{other:?}"),
        }
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn expired_tickets_are_refused_and_skipped() {
        let mut q = SchedulerQueue::new(4);
        assert_eq!(q.enqueue(ticket(1, 0), 101), EnqueueOutcome::Expired);
        q.enqueue(ticket(9, 1), 0);
        let mut late = ticket(1, 2);
        late.expires_at = 500;
        q.enqueue(late, 0);
        let (t, dropped) = q.pop_live(200);
        assert_eq!(dropped, 1);
        assert_eq!(t.unwrap().inputs, vec![vec![2]]);
    }

    proptest! {
        #[test]
        fn pops_non_increasing_between_enqueues(
            ops in proptest::collection::vec(prop_oneof![(1u32..20).prop_map(Some), Just(None)], 1..200)
        ) {
            let mut q = SchedulerQueue::new(16);
            let mut last: Option<u32> = None;
            for op in ops {
                match op {
                    Some(p) => { q.enqueue(ticket(p, 0), 0); last = None; }
                    None => if let Some(t) = q.pop() {
                        if let Some(prev) = last { prop_assert!(t.priority <= prev); }
                        last = Some(t.priority);
                    }
                }
                prop_assert!(q.len() <= 16);
            }
        }
    }
}
