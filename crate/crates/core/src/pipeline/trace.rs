use std::time::Duration;

/// One attempted step on one level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Start of the step.
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
    /// Scaled error; NaN for uncontrolled steps.
    pub eps: f64,
    /// Proposed value at `t + dt`.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelTrace {
    pub level: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub steps: Vec<StepRecord>,
    pub final_time: f64,
    pub final_value: Vec<f64>,
    pub segments: usize,
    pub rhs_evals: u64,
    /// Scheduling dependent; ignored by [`RunTrace::same_numbers`].
    pub stalls: u64,
    /// Most previous-level nodes held at once.
    pub max_retained: usize,
    pub elapsed: Duration,
}

impl LevelTrace {
    pub fn new(level: usize) -> Self {
        Self {
            level,
            ..Self::default()
        }
    }

    pub(crate) fn record(&mut self, rec: StepRecord) {
        if rec.accepted {
            self.accepted += 1;
        } else {
            self.rejected += 1;
        }
        self.steps.push(rec);
    }

    /// Sizes of accepted steps in order.
    pub fn accepted_steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.dt)
    }

    /// Times of the committed nodes after the initial one, in order.
    pub fn node_times(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.t + s.dt).collect()
    }

    fn same_numbers(&self, other: &Self) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let step_eq = |a: &StepRecord, b: &StepRecord| {
            a.t.to_bits() == b.t.to_bits()
                && a.dt.to_bits() == b.dt.to_bits()
                && a.accepted == b.accepted
                && a.eps.to_bits() == b.eps.to_bits()
                && bits(&a.y) == bits(&b.y)
        };
        self.level == other.level
            && self.accepted == other.accepted
            && self.rejected == other.rejected
            && self.segments == other.segments
            && self.rhs_evals == other.rhs_evals
            && self.final_time.to_bits() == other.final_time.to_bits()
            && bits(&self.final_value) == bits(&other.final_value)
            && self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| step_eq(a, b))
    }
}

/// Per-level statistics and step history of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub levels: Vec<LevelTrace>,
}

impl RunTrace {
    /// Highest level.
    pub fn top(&self) -> &LevelTrace {
        self.levels.last().expect("at least one level")
    }

    /// Bitwise comparison of every numeric field except timings and stall counts.
    pub fn same_numbers(&self, other: &Self) -> bool {
        self.levels.len() == other.levels.len() && self.levels.iter().zip(&other.levels).all(|(a, b)| a.same_numbers(b))
    }
}

/// Reported after every attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressEvent {
    pub level: usize,
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
}
