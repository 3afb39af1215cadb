//! Simulated execution of a portfolio on one machine.
//!
//! Algorithm `k` receives the fraction `s_k` of the machine, so its virtual
//! time advances at rate `s_k` and it finishes after `t_k / s_k` seconds of
//! wall clock. Shares are piecewise constant; the simulation jumps from one
//! share change to the next instead of stepping time.

use serde::{Deserialize, Serialize};

use crate::allocators::Share;
use crate::error::{invalid, Error, Result};
use crate::runtime_model::RuntimeObservation;

/// Ground-truth runtimes of every algorithm on one instance. `None` means the
/// algorithm never halts on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmRun {
    pub instance_id: String,
    pub features: Vec<f64>,
    pub runtimes: Vec<Option<f64>>,
}

impl AlgorithmRun {
    pub fn new(instance_id: impl Into<String>, features: Vec<f64>, runtimes: Vec<Option<f64>>) -> Result<Self> {
        let run = Self {
            instance_id: instance_id.into(),
            features,
            runtimes,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runtimes.is_empty() {
            return Err(invalid("an instance needs at least one algorithm"));
        }
        for t in self.runtimes.iter().flatten() {
            if !(t.is_finite() && *t > 0.0) {
                return Err(invalid(format!(
                    "runtime on {} must be finite and positive, got {t}",
                    self.instance_id
                )));
            }
        }
        if self.runtimes.iter().all(Option::is_none) {
            return Err(Error::Unsolvable(self.instance_id.clone()));
        }
        Ok(())
    }

    pub fn n_algorithms(&self) -> usize {
        self.runtimes.len()
    }

    /// Runtime of the fastest algorithm, i.e. what an oracle that runs only
    /// that algorithm would pay.
    pub fn oracle_time(&self) -> Result<f64> {
        self.runtimes
            .iter()
            .flatten()
            .copied()
            .reduce(f64::min)
            .ok_or_else(|| Error::Unsolvable(self.instance_id.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub wall_clock: f64,
    pub winner: usize,
    /// Virtual time consumed by each algorithm.
    pub consumed: Vec<f64>,
    /// `(wall-clock time, share)` at the start and at every share change.
    pub share_trace: Vec<(f64, Share)>,
    /// One observation per algorithm; only the winner's is uncensored.
    pub observations: Vec<RuntimeObservation>,
}

impl ExecutionResult {
    fn build(run: &AlgorithmRun, wall_clock: f64, winner: usize, consumed: Vec<f64>, share_trace: Vec<(f64, Share)>) -> Self {
        Self::from_parts(&run.instance_id, &run.features, wall_clock, winner, consumed, share_trace)
    }

    /// Assembles a result, deriving one observation per algorithm from
    /// `consumed` (uncensored for `winner` only).
    pub fn from_parts(
        instance_id: &str,
        features: &[f64],
        wall_clock: f64,
        winner: usize,
        consumed: Vec<f64>,
        share_trace: Vec<(f64, Share)>,
    ) -> Self {
        let observations = consumed
            .iter()
            .enumerate()
            .map(|(k, &time)| RuntimeObservation {
                instance_id: instance_id.to_string(),
                features: features.to_vec(),
                algorithm: k,
                time,
                censored: k != winner,
            })
            .collect();
        Self {
            wall_clock,
            winner,
            consumed,
            share_trace,
            observations,
        }
    }

    pub fn initial_share(&self) -> &Share {
        &self.share_trace[0].1
    }
}

fn check_share(run: &AlgorithmRun, share: &Share) -> Result<()> {
    if share.len() != run.n_algorithms() {
        return Err(invalid(format!(
            "share covers {} algorithms, instance {} has {}",
            share.len(),
            run.instance_id,
            run.n_algorithms()
        )));
    }
    Ok(())
}

/// Earliest finisher under `share` starting from `consumed` at wall time
/// `start`. Ties go to the lowest index.
fn first_finish(run: &AlgorithmRun, share: &[f64], start: f64, consumed: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (k, t) in run.runtimes.iter().enumerate() {
        if let Some(t) = t {
            let finish = start + (t - consumed[k]) / share[k];
            if finish < best.1 {
                best = (k, finish);
            }
        }
    }
    best
}

/// Runs the portfolio with a fixed share: the wall clock is
/// `min_k t_k / s_k` over the algorithms that halt.
pub fn execute_static(run: &AlgorithmRun, share: &Share) -> Result<ExecutionResult> {
    run.validate()?;
    check_share(run, share)?;
    let s = share.as_slice();
    let (winner, wall_clock) = first_finish(run, s, 0.0, &vec![0.0; s.len()]);
    let mut consumed: Vec<f64> = s.iter().map(|&sk| sk * wall_clock).collect();
    consumed[winner] = run.runtimes[winner].expect("winner halts");
    Ok(ExecutionResult::build(
        run,
        wall_clock,
        winner,
        consumed,
        vec![(0.0, share.clone())],
    ))
}

/// Runs the portfolio with a share that the allocator may revise every
/// `update_period` seconds of wall clock. The allocator sees the wall-clock
/// time and each algorithm's consumed virtual time.
///
/// An allocator that keeps returning the same share reproduces
/// [`execute_static`] bit for bit.
pub fn execute_dynamic<F>(run: &AlgorithmRun, mut allocator: F, update_period: f64) -> Result<ExecutionResult>
where
    F: FnMut(f64, &[f64]) -> Share,
{
    run.validate()?;
    if !(update_period > 0.0) {
        return Err(invalid(format!("update period must be positive, got {update_period}")));
    }
    let k = run.n_algorithms();
    let mut seg_start = 0.0;
    let mut seg_consumed = vec![0.0; k];
    let mut share = allocator(0.0, &seg_consumed);
    check_share(run, &share)?;
    let mut trace = vec![(0.0, share.clone())];
    let mut next_update = 1usize;
    loop {
        let s = share.as_slice();
        let (winner, finish) = first_finish(run, s, seg_start, &seg_consumed);
        let update_at = next_update as f64 * update_period;
        if finish <= update_at {
            let mut consumed: Vec<f64> = seg_consumed
                .iter()
                .zip(s)
                .map(|(c, sk)| c + sk * (finish - seg_start))
                .collect();
            consumed[winner] = run.runtimes[winner].expect("winner halts");
            return Ok(ExecutionResult::build(run, finish, winner, consumed, trace));
        }
        let now: Vec<f64> = seg_consumed
            .iter()
            .zip(s)
            .map(|(c, sk)| c + sk * (update_at - seg_start))
            .collect();
        let revised = allocator(update_at, &now);
        check_share(run, &revised)?;
        if revised != share {
            seg_start = update_at;
            seg_consumed = now;
            share = revised;
            trace.push((update_at, share.clone()));
        }
        next_update += 1;
    }
}
