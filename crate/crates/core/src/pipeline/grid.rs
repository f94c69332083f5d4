use rand::{Rng, SeedableRng};
use rand_xorshift::XorShiftRng;

/// A committed node: time, solution value and `f(t, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub t: f64,
    pub y: Vec<f64>,
    pub f: Vec<f64>,
}

/// What flows from one level to the next, in commit order.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Node(Node),
    /// The sending level reached the segment end with `value`.
    EndOfSegment {
        last: bool,
        value: Vec<f64>,
    },
}

/// The part of the previous level's grid a corrector still holds.
#[derive(Debug, Default)]
pub struct PrevWindow {
    /// Segment-local index of `nodes[0]`.
    base: usize,
    times: Vec<f64>,
    nodes: Vec<Node>,
    finished: bool,
    last_segment: bool,
    max_retained: usize,
}

impl PrevWindow {
    pub fn push(&mut self, record: Record) {
        match record {
            Record::Node(node) => {
                debug_assert!(!self.finished, "node after end of segment");
                self.times.push(node.t);
                self.nodes.push(node);
                self.max_retained = self.max_retained.max(self.nodes.len());
            }
            Record::EndOfSegment { last, .. } => {
                self.finished = true;
                self.last_segment = last;
            }
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node(&self, local: usize) -> &Node {
        &self.nodes[local]
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// Nodes committed so far in this segment, evicted ones included.
    pub fn total(&self) -> usize {
        self.base + self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    pub fn last_segment(&self) -> bool {
        self.last_segment
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn max_retained(&self) -> usize {
        self.max_retained
    }

    pub fn retained(&self) -> usize {
        self.nodes.len()
    }

    /// Drops every node before local index `keep_from`.
    pub fn evict_before(&mut self, keep_from: usize) {
        let keep_from = keep_from.min(self.nodes.len());
        if keep_from > 0 {
            self.times.drain(..keep_from);
            self.nodes.drain(..keep_from);
            self.base += keep_from;
        }
    }

    /// Starts a new segment.
    pub fn clear(&mut self) {
        self.base = 0;
        self.times.clear();
        self.nodes.clear();
        self.finished = false;
        self.last_segment = false;
    }
}

/// `a + (b - a) * n / N` for `n = 0..=N`, ending exactly at `b`.
pub fn uniform_grid(a: f64, b: f64, steps: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..steps).map(|n| a + (b - a) * (n as f64 / steps as f64)).collect();
    t.push(b);
    t
}

/// Random grid on `[a, b]` with `steps` steps.
///
/// Each step is a base step times an independent factor drawn uniformly from
/// `[omega^-1/2, omega^1/2]`, so neighbouring steps differ by at most a factor
/// `omega`. The grid is rescaled to end exactly at `b`; `omega = 1` reproduces
/// [`uniform_grid`] bit for bit.
pub fn random_grid(a: f64, b: f64, steps: usize, omega: f64, seed: u64) -> Vec<f64> {
    let mut rng = XorShiftRng::seed_from_u64(seed);
    let (lo, hi) = (omega.sqrt().recip(), omega.sqrt());
    let mut partial = Vec::with_capacity(steps + 1);
    let mut sum = 0.0;
    partial.push(0.0);
    for _ in 0..steps {
        let u: f64 = rng.random();
        sum += lo + (hi - lo) * u;
        partial.push(sum);
    }
    let mut t: Vec<f64> = partial[..steps].iter().map(|s| a + (b - a) * (s / sum)).collect();
    t.push(b);
    t
}
