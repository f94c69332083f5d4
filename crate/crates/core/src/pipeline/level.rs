//! Per-level state machines shared by the serial and pipelined executors.
//!
//! A level only ever sees previous-level nodes that were handed to it through
//! [`Corrector::push_input`], and every numeric decision depends only on
//! those nodes, so the result does not depend on how levels are scheduled.

use std::cell::Cell;
use std::ops::Range;
use std::time::Instant;

use crate::controller::{select_step, ControlParams};
use crate::problems::{IvpSystem, Rhs, StepFault};
use crate::steppers::{
    corrector_step, euler_from_slope, rk_pair_step_from, step_double_from, ButcherPair, Euler, StencilData,
    StepProposal,
};
use crate::weights::{eval_extension, select_stencil, Selection, Stencil};

use super::config::{ErrorEqnEstimate, Estimator, Mode, PipelineConfig};
use super::grid::{random_grid, uniform_grid, Node, PrevWindow, Record};
use super::trace::{LevelTrace, ProgressEvent, StepRecord};
use super::{Progress, RunError};

/// Consecutive rejections tolerated before a run is abandoned.
pub const MAX_CONSECUTIVE_REJECTS: usize = 50;

#[derive(Debug)]
pub(crate) enum Event {
    /// Records to hand to the next level, in order.
    Commit(Vec<Record>),
    Rejected,
    /// Needs another previous-level record.
    Stall,
    /// Predictor waiting for the reset value.
    AwaitReset,
    Finished,
}

/// `f` with an evaluation counter.
struct Counted {
    sys: IvpSystem,
    evals: Cell<u64>,
}

impl Rhs for Counted {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn eval_into(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self.evals.set(self.evals.get() + 1);
        self.sys.eval_into(t, y, dydt)
    }
}

/// Common bookkeeping for one level.
struct Books {
    rhs: Counted,
    trace: LevelTrace,
    progress: Option<Progress>,
    consecutive_rejects: usize,
}

impl Books {
    fn new(level: usize, sys: &IvpSystem, progress: Option<Progress>) -> Self {
        Self {
            rhs: Counted {
                sys: sys.clone(),
                evals: Cell::new(0),
            },
            trace: LevelTrace::new(level),
            progress,
            consecutive_rejects: 0,
        }
    }

    fn level(&self) -> usize {
        self.trace.level
    }

    fn fault(&self, source: StepFault) -> RunError {
        RunError::Fault {
            level: self.level(),
            source,
        }
    }

    fn record(&mut self, rec: StepRecord) -> Result<(), RunError> {
        if let Some(cb) = &self.progress {
            cb(&ProgressEvent {
                level: self.level(),
                t: rec.t,
                dt: rec.dt,
                accepted: rec.accepted,
            });
        }
        if rec.accepted {
            self.consecutive_rejects = 0;
        } else {
            self.consecutive_rejects += 1;
        }
        let t = rec.t;
        self.trace.record(rec);
        if self.consecutive_rejects >= MAX_CONSECUTIVE_REJECTS {
            return Err(RunError::Runaway { level: self.level(), t });
        }
        Ok(())
    }

    fn finish(&mut self, t: f64, y: &[f64]) {
        self.trace.final_time = t;
        self.trace.final_value = y.to_vec();
        self.trace.rhs_evals = self.rhs.evals.get();
    }
}

/// Controller decision with the forced-accept rules applied.
fn decide(
    books: &Books,
    params: &ControlParams,
    y_n: &[f64],
    prop: &StepProposal,
    dt: f64,
    prev_rejected: bool,
    clamped_to_end: bool,
) -> Result<(bool, f64, f64), RunError> {
    let d = select_step(y_n, &prop.state, &prop.error, prop.order, dt, prev_rejected, params).map_err(|source| {
        RunError::Control {
            level: books.level(),
            source,
        }
    })?;
    // A step shortened to land on the segment end, or one that cannot shrink
    // any further, is taken as is.
    let accept = d.accept || clamped_to_end || dt <= params.dt_min;
    Ok((accept, d.eps, d.dt_new))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PredState {
    Start,
    Running,
    AwaitReset,
    Finished,
}

/// Level 0.
pub(crate) struct Predictor {
    books: Books,
    grid: Option<Vec<f64>>,
    estimator: Estimator,
    params: ControlParams,
    reset_interval: usize,
    end: f64,
    state: PredState,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    grid_index: usize,
    dt: f64,
    prev_rejected: bool,
    segment_accepted: usize,
}

impl Predictor {
    pub(crate) fn new(sys: &IvpSystem, cfg: &PipelineConfig, progress: Option<Progress>) -> Self {
        let grid = match cfg.mode {
            Mode::Uniform => Some(uniform_grid(sys.start(), sys.end(), cfg.grid_steps(sys))),
            Mode::RandomGrid => Some(random_grid(
                sys.start(),
                sys.end(),
                cfg.grid_steps(sys),
                cfg.omega,
                cfg.seed,
            )),
            _ => None,
        };
        Self {
            books: Books::new(0, sys, progress),
            grid,
            estimator: cfg.estimator,
            params: cfg.control(0, sys),
            reset_interval: cfg.reset,
            end: sys.end(),
            state: PredState::Start,
            t: sys.start(),
            y: sys.initial().to_vec(),
            f: Vec::new(),
            grid_index: 0,
            dt: cfg.initial_dt(sys),
            prev_rejected: false,
            segment_accepted: 0,
        }
    }

    /// Starts the next segment from `value` at the current time.
    pub(crate) fn reset(&mut self, value: Vec<f64>) {
        debug_assert_eq!(self.state, PredState::AwaitReset);
        self.y = value;
        self.segment_accepted = 0;
        self.state = PredState::Start;
    }

    pub(crate) fn into_trace(mut self) -> LevelTrace {
        let y = self.y.clone();
        self.books.finish(self.t, &y);
        self.books.trace
    }

    pub(crate) fn step(&mut self) -> Result<Event, RunError> {
        let started = Instant::now();
        let ev = self.step_inner();
        self.books.trace.elapsed += started.elapsed();
        ev
    }

    fn step_inner(&mut self) -> Result<Event, RunError> {
        match self.state {
            PredState::AwaitReset => return Ok(Event::AwaitReset),
            PredState::Finished => return Ok(Event::Finished),
            PredState::Start => {
                self.f = self.books.rhs.eval(self.t, &self.y).map_err(|e| self.books.fault(e))?;
                self.state = PredState::Running;
                self.books.trace.segments += 1;
                return Ok(Event::Commit(vec![Record::Node(self.node())]));
            }
            PredState::Running => {}
        }
        let (t_next, y_next) = match &self.grid {
            Some(grid) => {
                let t_next = grid[self.grid_index + 1];
                let dt = t_next - self.t;
                let y_next = euler_from_slope(self.t, &self.y, &self.f, dt).map_err(|e| self.books.fault(e))?;
                self.books.record(StepRecord {
                    t: self.t,
                    dt,
                    accepted: true,
                    eps: f64::NAN,
                    y: y_next.clone(),
                })?;
                (t_next, y_next)
            }
            None => {
                let want = self.t + self.dt;
                let (t_next, clamped) = if want >= self.end {
                    (self.end, want > self.end)
                } else {
                    (want, false)
                };
                let dt = t_next - self.t;
                let prop = self.propose(dt).map_err(|e| self.books.fault(e))?;
                let (accept, eps, dt_new) = decide(
                    &self.books,
                    &self.params,
                    &self.y,
                    &prop,
                    dt,
                    self.prev_rejected,
                    clamped,
                )?;
                self.books.record(StepRecord {
                    t: self.t,
                    dt,
                    accepted: accept,
                    eps,
                    y: prop.state.clone(),
                })?;
                self.dt = dt_new;
                self.prev_rejected = !accept;
                if !accept {
                    return Ok(Event::Rejected);
                }
                (t_next, prop.state)
            }
        };
        self.t = t_next;
        self.y = y_next;
        self.f = self.books.rhs.eval(self.t, &self.y).map_err(|e| self.books.fault(e))?;
        self.grid_index += 1;
        self.segment_accepted += 1;
        let mut records = vec![Record::Node(self.node())];
        if self.t == self.end {
            records.push(Record::EndOfSegment {
                last: true,
                value: self.y.clone(),
            });
            self.state = PredState::Finished;
        } else if self.reset_interval > 0 && self.segment_accepted == self.reset_interval {
            records.push(Record::EndOfSegment {
                last: false,
                value: self.y.clone(),
            });
            self.state = PredState::AwaitReset;
        }
        Ok(Event::Commit(records))
    }

    fn propose(&self, dt: f64) -> Result<StepProposal, StepFault> {
        let rhs = &self.books.rhs;
        match self.estimator {
            Estimator::StepDoubling => step_double_from(&Euler, rhs, self.t, &self.y, &self.f, dt),
            Estimator::HeunEuler => rk_pair_step_from(&ButcherPair::heun_euler(), rhs, self.t, &self.y, &self.f, dt),
            Estimator::Bs32 => rk_pair_step_from(&ButcherPair::bogacki_shampine(), rhs, self.t, &self.y, &self.f, dt),
            Estimator::Rkf45 => rk_pair_step_from(&ButcherPair::rkf45(), rhs, self.t, &self.y, &self.f, dt),
        }
    }

    fn node(&self) -> Node {
        Node {
            t: self.t,
            y: self.y.clone(),
            f: self.f.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CorrectorKind {
    /// Steps onto the previous level's nodes without control.
    Shared,
    /// Step doubling of the correction update.
    StepDoubled,
    /// Controlled by the error-equation solution.
    ErrorEqn { order: u32, estimate: ErrorEqnEstimate },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CorrState {
    AwaitStart,
    Running,
    Finished,
}

/// One quadrature piece: stencil node indices (into the window) and interval.
type Piece = (Range<usize>, f64, f64);

/// Level `l >= 1`.
pub(crate) struct Corrector {
    books: Books,
    k: usize,
    kind: CorrectorKind,
    params: ControlParams,
    /// Largest number of previous-level intervals one step may reach past
    /// its starting node.
    reach: usize,
    prev: PrevWindow,
    state: CorrState,
    cur: Node,
    own_index: usize,
    dt: f64,
    prev_rejected: bool,
}

impl Corrector {
    pub(crate) fn new(level: usize, sys: &IvpSystem, cfg: &PipelineConfig, progress: Option<Progress>) -> Self {
        let kind = match cfg.mode {
            m if m.shared_grid() => CorrectorKind::Shared,
            Mode::AdaptiveAll => CorrectorKind::StepDoubled,
            _ => CorrectorKind::ErrorEqn {
                order: cfg.error_eqn_order.unwrap_or(level as u32),
                estimate: cfg.error_eqn_estimate,
            },
        };
        let k = level + 1;
        Self {
            books: Books::new(level, sys, progress),
            k,
            kind,
            params: cfg.control(level, sys),
            reach: cfg.window_size().saturating_sub(k).max(1),
            prev: PrevWindow::default(),
            state: CorrState::AwaitStart,
            cur: Node {
                t: sys.start(),
                y: sys.initial().to_vec(),
                f: Vec::new(),
            },
            own_index: 0,
            dt: cfg.initial_dt(sys),
            prev_rejected: false,
        }
    }

    pub(crate) fn level(&self) -> usize {
        self.books.level()
    }

    pub(crate) fn push_input(&mut self, record: Record) {
        self.prev.push(record);
    }

    pub(crate) fn into_trace(mut self) -> LevelTrace {
        let (t, y) = (self.cur.t, self.cur.y.clone());
        self.books.trace.max_retained = self.books.trace.max_retained.max(self.prev.max_retained());
        self.books.finish(t, &y);
        self.books.trace
    }

    pub(crate) fn step(&mut self) -> Result<Event, RunError> {
        let started = Instant::now();
        let ev = self.step_inner();
        if matches!(ev, Ok(Event::Stall)) {
            self.books.trace.stalls += 1;
        }
        self.books.trace.elapsed += started.elapsed();
        ev
    }

    fn step_inner(&mut self) -> Result<Event, RunError> {
        match self.state {
            CorrState::Finished => return Ok(Event::Finished),
            CorrState::AwaitStart => {
                if self.prev.is_empty() {
                    return Ok(Event::Stall);
                }
                self.cur = self.prev.node(0).clone();
                self.own_index = 0;
                self.state = CorrState::Running;
                self.books.trace.segments += 1;
                return Ok(Event::Commit(vec![Record::Node(self.cur.clone())]));
            }
            CorrState::Running => {}
        }
        if self.prev.finished() && self.prev.last_time() == Some(self.cur.t) {
            let last = self.prev.last_segment();
            self.books.trace.max_retained = self.books.trace.max_retained.max(self.prev.max_retained());
            self.prev.clear();
            self.state = if last {
                CorrState::Finished
            } else {
                CorrState::AwaitStart
            };
            return Ok(Event::Commit(vec![Record::EndOfSegment {
                last,
                value: self.cur.y.clone(),
            }]));
        }
        match self.kind {
            CorrectorKind::Shared => self.shared_step(),
            _ => self.controlled_step(),
        }
    }

    fn stencil_err(&self, source: crate::weights::StencilError) -> RunError {
        RunError::Stencil {
            level: self.books.level(),
            source,
        }
    }

    /// Quadrature pieces covering `[s, e]`: one stencil when a window of `k`
    /// consecutive nodes covers the interval, otherwise one per
    /// previous-level sub-interval. `None` means more input is needed.
    fn pieces(&self, s: f64, e: f64) -> Result<Option<Vec<Piece>>, RunError> {
        let times = self.prev.times();
        let finished = self.prev.finished();
        let k = if finished {
            self.k.min(self.prev.total())
        } else {
            self.k
        };
        let select = |a: f64, b: f64| select_stencil(times, finished, k, a, b).map_err(|e| self.stencil_err(e));
        match select(s, e)? {
            Selection::Ready(r) => Ok(Some(vec![(r, s, e)])),
            Selection::Stall => Ok(None),
            Selection::TooWide => {
                let lo = times.partition_point(|&t| t <= s);
                let hi = times.partition_point(|&t| t < e);
                let mut bounds = Vec::with_capacity(hi - lo + 2);
                bounds.push(s);
                bounds.extend_from_slice(&times[lo..hi]);
                bounds.push(e);
                let mut pieces = Vec::with_capacity(bounds.len() - 1);
                for w in bounds.windows(2) {
                    match select(w[0], w[1])? {
                        Selection::Ready(r) => pieces.push((r, w[0], w[1])),
                        Selection::Stall => return Ok(None),
                        Selection::TooWide => unreachable!("piece without interior nodes"),
                    }
                }
                Ok(Some(pieces))
            }
        }
    }

    fn stencils(&self, pieces: &[Piece]) -> Result<Vec<Stencil>, RunError> {
        pieces
            .iter()
            .map(|(r, s, e)| {
                Stencil::new(self.prev.times()[r.clone()].to_vec(), *s, *e).map_err(|e| self.stencil_err(e))
            })
            .collect()
    }

    /// Correction update over the given pieces starting from `(t, eta, slope)`.
    fn correct(
        &self,
        pieces: &[Piece],
        t: f64,
        eta: &[f64],
        slope: &[f64],
    ) -> Result<(Vec<f64>, Vec<Stencil>), RunError> {
        let stencils = self.stencils(pieces)?;
        let slopes: Vec<Vec<&[f64]>> = pieces
            .iter()
            .map(|(r, _, _)| r.clone().map(|i| self.prev.node(i).f.as_slice()).collect())
            .collect();
        let data: Vec<StencilData<'_>> = stencils
            .iter()
            .zip(&slopes)
            .map(|(stencil, s)| StencilData { stencil, slopes: s })
            .collect();
        let end = pieces.last().expect("non-empty").2;
        let eta_next = corrector_step(&data, t, end, eta, slope).map_err(|e| self.books.fault(e))?;
        Ok((eta_next, stencils))
    }

    fn shared_step(&mut self) -> Result<Event, RunError> {
        let next_local = self.own_index + 1 - self.prev.base();
        if next_local >= self.prev.retained() {
            return Ok(Event::Stall);
        }
        let s = self.cur.t;
        let e = self.prev.times()[next_local];
        debug_assert_eq!(self.prev.times()[next_local - 1], s);
        let Some(pieces) = self.pieces(s, e)? else {
            return Ok(Event::Stall);
        };
        let (eta, _) = self.correct(&pieces, s, &self.cur.y, &self.cur.f)?;
        self.books.record(StepRecord {
            t: s,
            dt: e - s,
            accepted: true,
            eps: f64::NAN,
            y: eta.clone(),
        })?;
        self.commit(e, eta)
    }

    /// End of the next step for a requested size `dt`, capped so the step
    /// reaches at most `reach` previous-level nodes ahead and clamped to the
    /// segment end. The flag marks a clamp to the segment end.
    fn resolve_end(&self, s: f64, dt: f64) -> Option<(f64, bool)> {
        let times = self.prev.times();
        let n = times.len();
        let want = s + dt;
        let p = times.partition_point(|&t| t <= s) - 1;
        let limit = p + self.reach;
        let q = times.partition_point(|&t| t < want);
        if q < n && q <= limit {
            Some((want, false))
        } else if limit < n {
            Some((times[limit], false))
        } else if self.prev.finished() {
            Some((times[n - 1], true))
        } else {
            None
        }
    }

    fn controlled_step(&mut self) -> Result<Event, RunError> {
        let s = self.cur.t;
        let Some((e, clamped)) = self.resolve_end(s, self.dt) else {
            return Ok(Event::Stall);
        };
        let dt = e - s;
        let proposal = match self.kind {
            CorrectorKind::StepDoubled => {
                let m = s + 0.5 * dt;
                let (Some(full), Some(first), Some(second)) =
                    (self.pieces(s, e)?, self.pieces(s, m)?, self.pieces(m, e)?)
                else {
                    return Ok(Event::Stall);
                };
                let (one_step, _) = self.correct(&full, s, &self.cur.y, &self.cur.f)?;
                let (mid, _) = self.correct(&first, s, &self.cur.y, &self.cur.f)?;
                let mid_slope = self.books.rhs.eval(m, &mid).map_err(|e| self.books.fault(e))?;
                let (two_steps, _) = self.correct(&second, m, &mid, &mid_slope)?;
                let error = two_steps.iter().zip(&one_step).map(|(a, b)| a - b).collect();
                StepProposal {
                    state: two_steps,
                    error,
                    companion: Some(one_step),
                    order: 1,
                }
            }
            CorrectorKind::ErrorEqn { order, estimate } => {
                let Some(pieces) = self.pieces(s, e)? else {
                    return Ok(Event::Stall);
                };
                let (eta, stencils) = self.correct(&pieces, s, &self.cur.y, &self.cur.f)?;
                let below_at = |piece: usize, t: f64| {
                    let values: Vec<&[f64]> = pieces[piece]
                        .0
                        .clone()
                        .map(|i| self.prev.node(i).y.as_slice())
                        .collect();
                    eval_extension(&stencils[piece], &values, t)
                };
                let below_end = below_at(pieces.len() - 1, e);
                let error = match estimate {
                    // Both ends come from this step's interpolant, so the
                    // estimate vanishes with the step.
                    ErrorEqnEstimate::Increment => {
                        let below_start = below_at(0, s);
                        (0..eta.len())
                            .map(|i| (eta[i] - self.cur.y[i]) - (below_end[i] - below_start[i]))
                            .collect()
                    }
                    ErrorEqnEstimate::Accumulated => eta.iter().zip(&below_end).map(|(a, b)| a - b).collect(),
                };
                StepProposal {
                    state: eta,
                    error,
                    companion: None,
                    order,
                }
            }
            CorrectorKind::Shared => unreachable!(),
        };
        let (accept, eps, dt_new) = decide(
            &self.books,
            &self.params,
            &self.cur.y,
            &proposal,
            dt,
            self.prev_rejected,
            clamped,
        )?;
        self.books.record(StepRecord {
            t: s,
            dt,
            accepted: accept,
            eps,
            y: proposal.state.clone(),
        })?;
        self.dt = dt_new;
        self.prev_rejected = !accept;
        if !accept {
            return Ok(Event::Rejected);
        }
        self.commit(e, proposal.state)
    }

    fn commit(&mut self, t: f64, y: Vec<f64>) -> Result<Event, RunError> {
        let f = self.books.rhs.eval(t, &y).map_err(|e| self.books.fault(e))?;
        self.cur = Node { t, y, f };
        self.own_index += 1;
        let p = self.prev.times().partition_point(|&x| x <= t).saturating_sub(1);
        self.prev.evict_before((p + 2).saturating_sub(self.k));
        Ok(Event::Commit(vec![Record::Node(self.cur.clone())]))
    }
}
