//! In-process work queue with at-least-once delivery: a dequeued
//! message stays invisible until acknowledged or its visibility deadline
//! passes, at which point the scheduler reclaims it and decides between
//! redelivery and failure. Consumers must treat (job_id, step_index,
//! attempt) as the idempotency key.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::clock::{Millis, MINUTE_MS};
use crate::scheduler::StepKind;

pub const DEFAULT_VISIBILITY_TIMEOUT_MS: Millis = 30 * MINUTE_MS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueMessage {
    pub message_id: String,
    pub job_id: String,
    pub step_index: usize,
    pub attempt: u32,
    pub kind: StepKind,
    pub payload: serde_json::Value,
    pub delivery_count: u32,
}

#[derive(Debug)]
pub struct InProcQueue {
    name: String,
    visibility_timeout_ms: Millis,
    next_id: u64,
    ready: VecDeque<QueueMessage>,
    inflight: BTreeMap<String, (QueueMessage, Millis)>,
}

impl InProcQueue {
    pub fn new(name: &str) -> InProcQueue {
        InProcQueue::with_visibility_timeout(name, DEFAULT_VISIBILITY_TIMEOUT_MS)
    }

    pub fn with_visibility_timeout(name: &str, visibility_timeout_ms: Millis) -> InProcQueue {
        InProcQueue {
            name: name.to_string(),
            visibility_timeout_ms,
            next_id: 0,
            ready: VecDeque::new(),
            inflight: BTreeMap::new(),
        }
    }

    pub fn enqueue(
        &mut self,
        job_id: &str,
        step_index: usize,
        attempt: u32,
        kind: StepKind,
        payload: serde_json::Value,
    ) -> String {
        self.next_id += 1;
        let message_id = format!("{}-{}", self.name, self.next_id);
        self.ready.push_back(QueueMessage {
            message_id: message_id.clone(),
            job_id: job_id.to_string(),
            step_index,
            attempt,
            kind,
            payload,
            delivery_count: 0,
        });
        message_id
    }

    /// Hand the oldest ready message to a worker; it becomes invisible
    /// until `ack` or deadline expiry.
    pub fn dequeue(&mut self, now: Millis) -> Option<QueueMessage> {
        let mut msg = self.ready.pop_front()?;
        msg.delivery_count += 1;
        let deadline = now + self.visibility_timeout_ms;
        self.inflight.insert(msg.message_id.clone(), (msg.clone(), deadline));
        Some(msg)
    }

    /// Positive acknowledgment; unknown ids are fine (duplicate acks).
    pub fn ack(&mut self, message_id: &str) -> bool {
        self.inflight.remove(message_id).is_some()
    }

    /// Reclaim messages whose visibility deadline passed. The caller —
    /// not the queue — decides whether each goes back on the queue.
    pub fn reclaim_expired(&mut self, now: Millis) -> Vec<QueueMessage> {
        let expired: Vec<String> = self
            .inflight
            .iter()
            .filter(|(_, (_, deadline))| *deadline <= now)
            .map(|(id, _)| id.clone())
            .collect();
        expired.into_iter().map(|id| self.inflight.remove(&id).expect("present").0).collect()
    }

    pub fn ready_len(&self) -> usize {
        self.ready.len()
    }

    pub fn inflight_len(&self) -> usize {
        self.inflight.len()
    }

    /// Drop every message (used when a fresh scheduler re-enqueues from
    /// its journal; the queue itself is volatile).
    pub fn clear(&mut self) {
        self.ready.clear();
        self.inflight.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delivery_ack_and_expiry() {
        let mut q = InProcQueue::with_visibility_timeout("build", 1_000);
        q.enqueue("job", 0, 0, StepKind::Build, serde_json::json!({}));
        let m = q.dequeue(10).unwrap();
        assert_eq!(m.delivery_count, 1);
        assert_eq!(q.inflight_len(), 1);

        // Not yet expired.
        assert!(q.reclaim_expired(500).is_empty());
        // Expired: reclaimed exactly once.
        let lost = q.reclaim_expired(1_010);
        assert_eq!(lost.len(), 1);
        assert_eq!(q.inflight_len(), 0);

        // Ack after reclaim is a no-op duplicate.
        assert!(!q.ack(&m.message_id));
    }

    #[test]
    fn ack_prevents_redelivery() {
        let mut q = InProcQueue::with_visibility_timeout("build", 1_000);
        q.enqueue("job", 0, 0, StepKind::Build, serde_json::json!({}));
        let m = q.dequeue(0).unwrap();
        assert!(q.ack(&m.message_id));
        assert!(q.reclaim_expired(10_000).is_empty());
        assert_eq!(q.ready_len(), 0);
    }
}
