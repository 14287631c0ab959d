use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::Rng;

use crate::features::{FeatureVector, State, FEATURE_LEN};

/// One stored interaction `(x, u, r, x_next, terminal)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Arc<State>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<State>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
    inserted: u64,
}

const REPLAY_MAGIC: &[u8; 4] = b"SQR1";

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
            inserted: 0,
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

    /// Total pushes over the buffer's lifetime.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.items.split_at(self.head);
        b.iter().chain(a.iter())
    }

    /// `k` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..k).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }

    /// Binary dump: `"SQR1" | u32 w | u32 count`, then per transition
    /// `u32 action | f64 reward | u8 terminal | state | next_state`, each
    /// state as `w · 263` little-endian `f32`.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let w = self.items.first().map_or(0, |t| t.state.w());
        out.write_all(REPLAY_MAGIC)?;
        out.write_all(&(w as u32).to_le_bytes())?;
        out.write_all(&(self.items.len() as u32).to_le_bytes())?;
        for t in self.iter() {
            out.write_all(&(t.action as u32).to_le_bytes())?;
            out.write_all(&t.reward.to_le_bytes())?;
            out.write_all(&[t.terminal as u8])?;
            for s in [&t.state, &t.next_state] {
                for v in s.concatenated() {
                    out.write_all(&(v as f32).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R, capacity: usize) -> io::Result<ReplayBuffer> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != REPLAY_MAGIC {
            return Err(bad("not an SQR1 replay dump"));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let w = u32::from_le_bytes(u32buf) as usize;
        input.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf) as usize;
        if count > 0 && w == 0 {
            return Err(bad("zero orientations"));
        }
        let read_state = |input: &mut R| -> io::Result<Arc<State>> {
            let mut raw = vec![0u8; w * FEATURE_LEN * 4];
            input.read_exact(&mut raw)?;
            let vals: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok(Arc::new(State {
                features: vals.chunks(FEATURE_LEN).map(|c| FeatureVector(c.to_vec())).collect(),
            }))
        };
        let mut buf = ReplayBuffer::new(capacity.max(1));
        for _ in 0..count {
            input.read_exact(&mut u32buf)?;
            let action = u32::from_le_bytes(u32buf) as usize;
            let mut f = [0u8; 8];
            input.read_exact(&mut f)?;
            let reward = f64::from_le_bytes(f);
            let mut term = [0u8; 1];
            input.read_exact(&mut term)?;
            let state = read_state(&mut input)?;
            let next_state = read_state(&mut input)?;
            buf.push(Transition {
                state,
                action,
                reward,
                next_state,
                terminal: term[0] != 0,
            });
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(v: f64) -> Arc<State> {
        Arc::new(State {
            features: vec![FeatureVector(vec![v; FEATURE_LEN]); 2],
        })
    }

    fn tr(action: usize) -> Transition {
        Transition {
            state: state(0.25),
            action,
            reward: -1.0,
            next_state: state(0.5),
            terminal: action.is_multiple_of(2),
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(3);
        for a in 0..5 {
            b.push(tr(a));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 5);
        let order: Vec<usize> = b.iter().map(|t| t.action).collect();
        assert_eq!(order, vec![2, 3, 4]);
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = ReplayBuffer::new(10);
        for a in 0..10 {
            b.push(tr(a));
        }
        let pick = |s| {
            b.sample(64, &mut ChaCha8Rng::seed_from_u64(s))
                .iter()
                .map(|t| t.action)
                .collect::<Vec<_>>()
        };
        assert_eq!(pick(1), pick(1));
        assert_eq!(pick(1).len(), 64);
    }

    #[test]
    fn dump_round_trip() {
        let mut b = ReplayBuffer::new(4);
        for a in 0..6 {
            b.push(tr(a));
        }
        let mut bytes = Vec::new();
        b.write_to(&mut bytes).unwrap();
        let back = ReplayBuffer::read_from(bytes.as_slice(), 4).unwrap();
        assert!(back.iter().zip(b.iter()).all(|(x, y)| x == y));
        assert!(ReplayBuffer::read_from(&bytes[..bytes.len() - 1], 4).is_err());
    }
}
