use std::collections::VecDeque;

use rand::Rng;

use super::TpError;
use crate::dynsys::Transition;

/// One bounded FIFO store per timestep; a store only ever holds transitions
/// taken at its own timestep.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    stores: Vec<VecDeque<Transition>>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(steps: usize, capacity: usize) -> Self {
        Self {
            stores: (0..steps).map(|_| VecDeque::new()).collect(),
            capacity: capacity.max(1),
        }
    }

    pub fn steps(&self) -> usize {
        self.stores.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, tr: Transition) -> Result<(), TpError> {
        let steps = self.stores.len();
        let store = self
            .stores
            .get_mut(tr.t_index)
            .ok_or(TpError::TimestepOutOfRange { t: tr.t_index, steps })?;
        if store.len() == self.capacity {
            store.pop_front();
        }
        store.push_back(tr);
        Ok(())
    }

    pub fn len_at(&self, t: usize) -> usize {
        self.stores.get(t).map_or(0, VecDeque::len)
    }

    pub fn store(&self, t: usize) -> impl Iterator<Item = &Transition> {
        self.stores.get(t).into_iter().flatten()
    }

    /// Draws `m` transitions uniformly, with replacement, from timestep `t`.
    pub fn sample<R: Rng + ?Sized>(&self, t: usize, m: usize, rng: &mut R) -> Result<Vec<&Transition>, TpError> {
        let store = self.stores.get(t).filter(|s| !s.is_empty()).ok_or(TpError::EmptyStore { t })?;
        Ok((0..m).map(|_| &store[rng.random_range(0..store.len())]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(t: usize, tag: f64) -> Transition {
        Transition {
            s: vec![tag],
            a: vec![0.0],
            r: 0.0,
            s_next: vec![tag],
            t_index: t,
        }
    }

    #[test]
    fn fifo_eviction_and_routing() {
        let mut buf = ReplayBuffer::new(3, 2);
        for i in 0..5 {
            buf.push(tr(1, i as f64)).unwrap();
        }
        assert_eq!(buf.len_at(1), 2);
        assert_eq!(buf.len_at(0), 0);
        let kept: Vec<f64> = buf.store(1).map(|t| t.s[0]).collect();
        assert_eq!(kept, vec![3.0, 4.0]);
        assert!(matches!(buf.push(tr(3, 0.0)), Err(TpError::TimestepOutOfRange { .. })));
    }

    #[test]
    fn sampling_stays_within_timestep() {
        let mut buf = ReplayBuffer::new(4, 100);
        for t in 0..4 {
            for i in 0..10 {
                buf.push(tr(t, i as f64)).unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 0..4 {
            assert!(buf.sample(t, 64, &mut rng).unwrap().iter().all(|x| x.t_index == t));
        }
        let empty = ReplayBuffer::new(2, 10);
        assert!(matches!(empty.sample(0, 1, &mut rng), Err(TpError::EmptyStore { t: 0 })));
    }
}
