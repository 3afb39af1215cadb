//! Exponentially weighted bandit solvers for partial-information loss games.
//!
//! [`Exp3Light`] plays a game whose losses are known to lie in `[0, L]`. It
//! keeps an unbiased estimate of every arm's cumulative loss and draws arms
//! from a softmax over those estimates. The learning rate shrinks in epochs,
//! each epoch assuming an upper bound `4^r` on the smallest normalized
//! estimate.
//!
//! [`Exp3LightA`] drops the requirement of a known bound: it guesses `2^u`,
//! starting at `u = 0`, and restarts a fresh [`Exp3Light`] with a larger guess
//! whenever a loss breaches the current one.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::csvio;
use crate::error::{invalid, Error, Result};

/// Learning rate for inner epoch `epoch`:
/// `sqrt(2 (ln N + N ln M) / (N 4^epoch))`.
///
/// A horizon of zero (a restart on the very last trial) is evaluated as one.
pub fn learning_rate(n_arms: usize, horizon: usize, epoch: u32) -> f64 {
    let n = n_arms as f64;
    let m = horizon.max(1) as f64;
    (2.0 * (n.ln() + n * m.ln()) / (n * 4f64.powi(epoch as i32))).sqrt()
}

/// Smallest integer `k` with `base^k >= x`, for `x > 0`.
///
/// Powers of two and four are exact in binary floating point, so the boundary
/// cases (`x == base^k`) resolve without rounding surprises.
pub fn ceil_log(x: f64, base: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut k = (x.ln() / base.ln()).ceil() as i32;
    while base.powi(k - 1) >= x {
        k -= 1;
    }
    while base.powi(k) < x {
        k += 1;
    }
    k
}

/// Inner epoch after observing normalized minimum estimate `ratio`.
///
/// The epoch only moves when `ratio` strictly exceeds `4^current`.
pub fn next_epoch(current: u32, ratio: f64) -> u32 {
    if ratio > 4f64.powi(current as i32) {
        ceil_log(ratio, 4.0).max(0) as u32
    } else {
        current
    }
}

/// Importance-weighted loss estimate for one arm on one trial: `loss / prob`
/// when the arm was pulled, zero otherwise.
pub fn unbiased_estimate(loss: f64, prob: f64, pulled: bool) -> f64 {
    if pulled {
        loss / prob
    } else {
        0.0
    }
}

/// Softmax of `-scale * estimates`, shifted by the minimum estimate so that the
/// largest weight is exactly one.
pub fn softmax_probabilities(estimates: &[f64], scale: f64) -> Vec<f64> {
    let min = estimates.iter().copied().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = estimates
        .iter()
        .map(|&l| (-scale * (l - min)).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Draws an index by inverse CDF over `probs` using one uniform variate.
///
/// If rounding leaves the variate above the final cumulative sum, the last arm
/// with positive probability is returned.
pub fn sample_arm<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn check_arm(arm: usize, n_arms: usize) -> Result<()> {
    if arm >= n_arms {
        return Err(invalid(format!("arm {arm} out of range for {n_arms} arms")));
    }
    Ok(())
}

fn check_loss(loss: f64) -> Result<()> {
    if !loss.is_finite() || loss < 0.0 {
        return Err(invalid(format!("loss must be finite and nonnegative, got {loss}")));
    }
    Ok(())
}

/// Bandit solver with a known bound on losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Light {
    n_arms: usize,
    horizon: usize,
    loss_bound: f64,
    est_cum_losses: Vec<f64>,
    solver_cum_loss: f64,
    epoch: u32,
    eta: f64,
    trials_played: usize,
}

impl Exp3Light {
    pub fn new(n_arms: usize, horizon: usize, loss_bound: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon must be at least 1"));
        }
        Self::restarted(n_arms, horizon, loss_bound)
    }

    /// Like [`Exp3Light::new`] but accepts a zero horizon, which happens when
    /// [`Exp3LightA`] restarts on the final trial.
    fn restarted(n_arms: usize, horizon: usize, loss_bound: f64) -> Result<Self> {
        if n_arms < 2 {
            return Err(invalid(format!("need at least 2 arms, got {n_arms}")));
        }
        if !(loss_bound > 0.0 && loss_bound.is_finite()) {
            return Err(invalid(format!("loss bound must be positive, got {loss_bound}")));
        }
        Ok(Self {
            n_arms,
            horizon,
            loss_bound,
            est_cum_losses: vec![0.0; n_arms],
            solver_cum_loss: 0.0,
            epoch: 0,
            eta: learning_rate(n_arms, horizon, 0),
            trials_played: 0,
        })
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn loss_bound(&self) -> f64 {
        self.loss_bound
    }

    pub fn est_cum_losses(&self) -> &[f64] {
        &self.est_cum_losses
    }

    pub fn solver_cum_loss(&self) -> f64 {
        self.solver_cum_loss
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn trials_played(&self) -> usize {
        self.trials_played
    }

    /// Smallest estimated cumulative loss divided by the loss bound.
    pub fn min_normalized_estimate(&self) -> f64 {
        self.est_cum_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            / self.loss_bound
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax_probabilities(&self.est_cum_losses, self.eta / self.loss_bound)
    }

    /// Feeds the loss of the pulled arm. The pull probability is taken from the
    /// current state, so call this before any other mutation for the trial.
    pub fn update(&mut self, arm: usize, loss: f64) -> Result<()> {
        check_arm(arm, self.n_arms)?;
        check_loss(loss)?;
        if loss > self.loss_bound {
            return Err(Error::LossAboveBound {
                loss,
                bound: self.loss_bound,
            });
        }
        let p = self.probabilities()[arm];
        self.est_cum_losses[arm] += unbiased_estimate(loss, p, true);
        self.solver_cum_loss += loss;
        self.trials_played += 1;

        let epoch = next_epoch(self.epoch, self.min_normalized_estimate());
        if epoch != self.epoch {
            self.epoch = epoch;
            self.eta = learning_rate(self.n_arms, self.horizon, epoch);
        }
        Ok(())
    }
}

/// Bandit solver for an unknown but finite loss bound, built on restarts of
/// [`Exp3Light`] with bound guesses `2^u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3LightA {
    n_arms: usize,
    horizon: usize,
    outer_epoch: u32,
    inner: Exp3Light,
    trials_played: usize,
    solver_cum_loss: f64,
    restarts: usize,
}

impl Exp3LightA {
    pub fn new(n_arms: usize, horizon: usize) -> Result<Self> {
        Ok(Self {
            n_arms,
            horizon,
            outer_epoch: 0,
            inner: Exp3Light::new(n_arms, horizon, 1.0)?,
            trials_played: 0,
            solver_cum_loss: 0.0,
            restarts: 0,
        })
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn outer_epoch(&self) -> u32 {
        self.outer_epoch
    }

    /// Current guess `2^u` of the loss bound.
    pub fn bound_guess(&self) -> f64 {
        2f64.powi(self.outer_epoch as i32)
    }

    pub fn inner(&self) -> &Exp3Light {
        &self.inner
    }

    pub fn trials_played(&self) -> usize {
        self.trials_played
    }

    pub fn trials_remaining(&self) -> usize {
        self.horizon.saturating_sub(self.trials_played)
    }

    pub fn solver_cum_loss(&self) -> f64 {
        self.solver_cum_loss
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }

    /// Plays one trial. A loss above the current guess is counted in the
    /// solver's cumulative loss but is not fed to the restarted inner solver.
    /// Returns `true` when the inner solver was restarted.
    pub fn step(&mut self, arm: usize, loss: f64) -> Result<bool> {
        check_arm(arm, self.n_arms)?;
        check_loss(loss)?;
        self.trials_played += 1;
        self.solver_cum_loss += loss;

        if loss > self.bound_guess() {
            self.outer_epoch = ceil_log(loss, 2.0) as u32;
            self.inner =
                Exp3Light::restarted(self.n_arms, self.trials_remaining(), self.bound_guess())?;
            self.restarts += 1;
            Ok(true)
        } else {
            self.inner.update(arm, loss)?;
            Ok(false)
        }
    }
}

/// Diagnostic view of a solver after a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSnapshot {
    pub inner_epoch: u32,
    pub outer_epoch: u32,
    pub eta: f64,
    pub loss_bound: f64,
    pub min_normalized_estimate: f64,
    pub cum_loss: f64,
}

/// Common interface of the bandit problem solvers used by the harness.
pub trait BanditSolver {
    fn n_arms(&self) -> usize;
    fn probabilities(&self) -> Vec<f64>;
    fn observe(&mut self, arm: usize, loss: f64) -> Result<()>;
    fn snapshot(&self) -> SolverSnapshot;
}

impl BanditSolver for Exp3Light {
    fn n_arms(&self) -> usize {
        self.n_arms
    }

    fn probabilities(&self) -> Vec<f64> {
        Exp3Light::probabilities(self)
    }

    fn observe(&mut self, arm: usize, loss: f64) -> Result<()> {
        self.update(arm, loss)
    }

    fn snapshot(&self) -> SolverSnapshot {
        SolverSnapshot {
            inner_epoch: self.epoch,
            outer_epoch: 0,
            eta: self.eta,
            loss_bound: self.loss_bound,
            min_normalized_estimate: self.min_normalized_estimate(),
            cum_loss: self.solver_cum_loss,
        }
    }
}

impl BanditSolver for Exp3LightA {
    fn n_arms(&self) -> usize {
        self.n_arms
    }

    fn probabilities(&self) -> Vec<f64> {
        Exp3LightA::probabilities(self)
    }

    fn observe(&mut self, arm: usize, loss: f64) -> Result<()> {
        self.step(arm, loss).map(|_| ())
    }

    fn snapshot(&self) -> SolverSnapshot {
        SolverSnapshot {
            inner_epoch: self.inner.epoch,
            outer_epoch: self.outer_epoch,
            eta: self.inner.eta,
            loss_bound: self.inner.loss_bound,
            min_normalized_estimate: self.inner.min_normalized_estimate(),
            cum_loss: self.solver_cum_loss,
        }
    }
}

/// Degenerate solver for a single arm.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SingleArm {
    cum_loss: f64,
}

impl BanditSolver for SingleArm {
    fn n_arms(&self) -> usize {
        1
    }

    fn probabilities(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn observe(&mut self, arm: usize, loss: f64) -> Result<()> {
        check_arm(arm, 1)?;
        check_loss(loss)?;
        self.cum_loss += loss;
        Ok(())
    }

    fn snapshot(&self) -> SolverSnapshot {
        SolverSnapshot {
            inner_epoch: 0,
            outer_epoch: 0,
            eta: 0.0,
            loss_bound: f64::INFINITY,
            min_normalized_estimate: 0.0,
            cum_loss: self.cum_loss,
        }
    }
}

/// One trial of a logged game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub chosen_arm: usize,
    pub loss: f64,
    pub inner_epoch_r: u32,
    pub outer_epoch_u: u32,
    pub eta: f64,
    pub cum_loss: f64,
    #[serde(skip)]
    pub min_normalized_estimate: f64,
    #[serde(skip)]
    pub loss_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameLog {
    pub trials: Vec<TrialRecord>,
    pub final_probabilities: Vec<f64>,
}

impl GameLog {
    pub const SCHEMA: &'static str = "gambleta.gamelog/1";

    pub fn total_loss(&self) -> f64 {
        self.trials.last().map_or(0.0, |t| t.cum_loss)
    }

    pub fn final_outer_epoch(&self) -> u32 {
        self.trials.last().map_or(0, |t| t.outer_epoch_u)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        csvio::write_schema(&mut out, Self::SCHEMA)?;
        let mut w = csv::Writer::from_writer(out);
        for t in &self.trials {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Plays `horizon` trials of `solver` against `loss_source(trial, arm)`.
///
/// Trials are numbered from 1. Arms are drawn with a ChaCha generator seeded
/// from `seed`; the state fields of each record are read after the update.
pub fn run_game<S, F>(solver: &mut S, mut loss_source: F, horizon: usize, seed: u64) -> Result<GameLog>
where
    S: BanditSolver + ?Sized,
    F: FnMut(usize, usize) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(horizon);
    for trial in 1..=horizon {
        let probs = solver.probabilities();
        let arm = sample_arm(&probs, &mut rng);
        let loss = loss_source(trial, arm);
        solver.observe(arm, loss)?;
        let snap = solver.snapshot();
        trials.push(TrialRecord {
            trial,
            chosen_arm: arm,
            loss,
            inner_epoch_r: snap.inner_epoch,
            outer_epoch_u: snap.outer_epoch,
            eta: snap.eta,
            cum_loss: snap.cum_loss,
            min_normalized_estimate: snap.min_normalized_estimate,
            loss_bound: snap.loss_bound,
        });
    }
    Ok(GameLog {
        trials,
        final_probabilities: solver.probabilities(),
    })
}
