//! Replay storage with cruise subsampling.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use maneuver_core::{Longitudinal, MetaAction};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One transition over state encodings. Encodings are shared, so the
/// next state of one transition and the state of the following one are
/// the same allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<[f64]>,
    pub action: MetaAction,
    pub reward: f64,
    pub next: Arc<[f64]>,
    pub done: bool,
}

/// FIFO ring of transitions. Transitions whose rule label is cruise are
/// stored only on every second occurrence.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    k_cruise: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::new(),
            k_cruise: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Cruise transitions seen so far.
    pub fn cruise_seen(&self) -> u64 {
        self.k_cruise
    }

    /// Offers a transition; returns whether it was stored.
    pub fn push(&mut self, t: Transition, rule_label: MetaAction) -> bool {
        if rule_label.longitudinal == Longitudinal::Cruise {
            self.k_cruise += 1;
            if self.k_cruise % 2 != 0 {
                return false;
            }
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        true
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Uniform minibatch drawn with replacement.
    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch)
            .map(|_| self.items[rng.gen_range(0..self.items.len())].clone())
            .collect()
    }
}

/// Buffer shared between rollout workers and the learner. Every push and
/// sample holds the lock for its whole duration.
#[derive(Debug)]
pub struct SharedReplay(Mutex<ReplayBuffer>);

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self(Mutex::new(ReplayBuffer::new(capacity)))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ReplayBuffer> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn push(&self, t: Transition, rule_label: MetaAction) -> bool {
        self.lock().push(t, rule_label)
    }

    /// Pushes a batch in order under one lock.
    pub fn extend(&self, items: impl IntoIterator<Item = (Transition, MetaAction)>) -> usize {
        let mut b = self.lock();
        items.into_iter().filter(|(t, l)| b.push(t.clone(), *l)).count()
    }

    pub fn sample(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        self.lock().sample(batch, rng)
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use maneuver_core::Lateral;
    use rand::SeedableRng;

    fn tr(r: f64) -> Transition {
        let s: Arc<[f64]> = Arc::from(vec![r]);
        Transition {
            state: s.clone(),
            action: MetaAction::IDLE,
            reward: r,
            next: s,
            done: false,
        }
    }

    fn label(lon: Longitudinal) -> MetaAction {
        MetaAction::new(Lateral::SameLane, lon)
    }

    #[test]
    fn ten_cruise_store_five() {
        let mut b = ReplayBuffer::new(100);
        let stored = (0..10).filter(|&i| b.push(tr(i as f64), label(Longitudinal::Cruise))).count();
        assert_eq!(stored, 5);
        assert_eq!(b.len(), 5);
        assert_eq!(b.cruise_seen(), 10);
    }

    #[test]
    fn non_cruise_always_stored() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            assert!(b.push(tr(i as f64), label(Longitudinal::Brake)));
        }
        assert_eq!(b.len(), 10);
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(8);
        for i in 0..10 {
            b.push(tr(i as f64), label(Longitudinal::Accelerate));
        }
        assert_eq!(b.len(), 8);
        assert_eq!(b.get(0).unwrap().reward, 2.0);
        assert_eq!(b.get(7).unwrap().reward, 9.0);
    }

    #[test]
    fn sampling_is_seeded() {
        let b = SharedReplay::new(16);
        b.extend((0..16).map(|i| (tr(i as f64), label(Longitudinal::Brake))));
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(b.sample(5, &mut r1), b.sample(5, &mut r2));
        assert!(ReplayBuffer::new(4).sample(5, &mut r1).is_empty());
    }
}
