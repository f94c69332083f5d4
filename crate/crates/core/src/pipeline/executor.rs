use std::collections::VecDeque;
use std::thread;

use crossbeam_channel::{bounded, Receiver, Sender};

use crate::problems::IvpSystem;

use super::config::PipelineConfig;
use super::grid::Record;
use super::level::{Corrector, Event, Predictor};
use super::trace::RunTrace;
use super::{Progress, RunError};

pub fn run_serial(sys: &IvpSystem, cfg: &PipelineConfig) -> Result<RunTrace, RunError> {
    run_serial_observed(sys, cfg, None)
}

pub fn run_pipelined(sys: &IvpSystem, cfg: &PipelineConfig) -> Result<RunTrace, RunError> {
    run_pipelined_observed(sys, cfg, None)
}

/// Single-threaded executor. Each round advances the lowest level that can
/// move; a corrector takes one record from its input queue only when it
/// stalls, and a level whose output queue holds `W` records waits.
pub fn run_serial_observed(
    sys: &IvpSystem,
    cfg: &PipelineConfig,
    progress: Option<Progress>,
) -> Result<RunTrace, RunError> {
    cfg.validate(sys)?;
    let top = cfg.levels - 1;
    let window = cfg.window_size();
    let mut predictor = Predictor::new(sys, cfg, progress.clone());
    let mut correctors: Vec<Corrector> = (1..cfg.levels)
        .map(|l| Corrector::new(l, sys, cfg, progress.clone()))
        .collect();
    // queues[l] holds level l's output not yet taken by level l + 1.
    let mut queues: Vec<VecDeque<Record>> = vec![VecDeque::new(); top];
    let mut finished = vec![false; cfg.levels];

    while !finished.iter().all(|&f| f) {
        let mut moved = false;
        for l in 0..cfg.levels {
            if finished[l] || (l < top && queues[l].len() >= window) {
                continue;
            }
            let event = if l == 0 {
                predictor.step()?
            } else {
                correctors[l - 1].step()?
            };
            match event {
                Event::Commit(records) => {
                    for record in records {
                        if l < top {
                            queues[l].push_back(record);
                        } else if let Record::EndOfSegment { last: false, value } = record {
                            predictor.reset(value);
                        }
                    }
                    moved = true;
                }
                Event::Rejected => moved = true,
                Event::Stall => {
                    if let Some(record) = queues[l - 1].pop_front() {
                        correctors[l - 1].push_input(record);
                        moved = true;
                    }
                }
                Event::AwaitReset => {}
                Event::Finished => {
                    finished[l] = true;
                    moved = true;
                }
            }
            if moved {
                break;
            }
        }
        if !moved {
            return Err(RunError::Deadlock);
        }
    }
    let mut levels = vec![predictor.into_trace()];
    levels.extend(correctors.into_iter().map(Corrector::into_trace));
    Ok(RunTrace { levels })
}

/// One worker thread per level connected by bounded channels of capacity `W`;
/// the top level sends reset values back to the predictor.
pub fn run_pipelined_observed(
    sys: &IvpSystem,
    cfg: &PipelineConfig,
    progress: Option<Progress>,
) -> Result<RunTrace, RunError> {
    cfg.validate(sys)?;
    let levels = cfg.levels;
    let window = cfg.window_size();
    let (reset_tx, reset_rx) = bounded::<Vec<f64>>(1);
    let mut inputs: Vec<Option<Receiver<Record>>> = vec![None];
    let mut outputs: Vec<Option<Sender<Record>>> = Vec::new();
    for _ in 1..levels {
        let (tx, rx) = bounded(window);
        outputs.push(Some(tx));
        inputs.push(Some(rx));
    }
    outputs.push(None);

    let results: Vec<Result<_, RunError>> = thread::scope(|scope| {
        let mut handles = Vec::with_capacity(levels);
        let mut reset_tx = Some(reset_tx);
        let mut reset_rx = Some(reset_rx);
        for (l, (input, output)) in inputs.into_iter().zip(outputs).enumerate() {
            let progress = progress.clone();
            let to_predictor = if l == levels - 1 && levels > 1 {
                reset_tx.take()
            } else {
                None
            };
            let from_top = if l == 0 && levels > 1 { reset_rx.take() } else { None };
            handles.push(scope.spawn(move || {
                if l == 0 {
                    let predictor = Predictor::new(sys, cfg, progress);
                    predictor_worker(predictor, output, from_top)
                } else {
                    let corrector = Corrector::new(l, sys, cfg, progress);
                    corrector_worker(corrector, input.expect("corrector input"), output, to_predictor)
                }
            }));
        }
        drop((reset_tx, reset_rx));
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });

    let mut traces = Vec::with_capacity(levels);
    let mut disconnected = None;
    for result in results {
        match result {
            Ok(trace) => traces.push(trace),
            Err(e @ RunError::Disconnected { .. }) => {
                disconnected.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    match disconnected {
        Some(e) => Err(e),
        None => Ok(RunTrace { levels: traces }),
    }
}

fn predictor_worker(
    mut predictor: Predictor,
    output: Option<Sender<Record>>,
    reset: Option<Receiver<Vec<f64>>>,
) -> Result<super::LevelTrace, RunError> {
    let disconnected = RunError::Disconnected { level: 0 };
    loop {
        match predictor.step()? {
            Event::Commit(records) => {
                for record in records {
                    match &output {
                        Some(tx) => tx.send(record).map_err(|_| disconnected.clone())?,
                        // Single level: the predictor is also the top level.
                        None => {
                            if let Record::EndOfSegment { last: false, value } = record {
                                predictor.reset(value);
                            }
                        }
                    }
                }
            }
            Event::Rejected => {}
            Event::AwaitReset => {
                let value = reset
                    .as_ref()
                    .and_then(|rx| rx.recv().ok())
                    .ok_or_else(|| disconnected.clone())?;
                predictor.reset(value);
            }
            Event::Finished => return Ok(predictor.into_trace()),
            Event::Stall => unreachable!("the predictor never stalls"),
        }
    }
}

fn corrector_worker(
    mut corrector: Corrector,
    input: Receiver<Record>,
    output: Option<Sender<Record>>,
    reset: Option<Sender<Vec<f64>>>,
) -> Result<super::LevelTrace, RunError> {
    let level = corrector.level();
    let disconnected = RunError::Disconnected { level };
    loop {
        match corrector.step()? {
            Event::Commit(records) => {
                for record in records {
                    match (&output, &reset) {
                        (Some(tx), _) => tx.send(record).map_err(|_| disconnected.clone())?,
                        (None, Some(tx)) => {
                            if let Record::EndOfSegment { last: false, value } = record {
                                tx.send(value).map_err(|_| disconnected.clone())?;
                            }
                        }
                        (None, None) => {}
                    }
                }
            }
            Event::Rejected => {}
            Event::Stall => {
                let record = input.recv().map_err(|_| disconnected.clone())?;
                corrector.push_input(record);
            }
            Event::Finished => return Ok(corrector.into_trace()),
            Event::AwaitReset => unreachable!("only the predictor awaits resets"),
        }
    }
}
