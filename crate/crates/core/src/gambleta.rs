//! The gambling time allocator: per instance, a bandit solver picks one of
//! `N` time allocators, the portfolio runs under that allocator's share, and
//! the wall-clock time is both the loss fed back to the bandit and the source
//! of new runtime observations for the shared models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocators::{allocate, AllocatorSpec, Share, DEFAULT_FLOOR};
use crate::bandit::{sample_arm, BanditSolver, Exp3Light, Exp3LightA, SingleArm};
use crate::bounds::{self, BoundInputs};
use crate::error::{invalid, Result};
use crate::exec::{execute_dynamic, execute_static, AlgorithmRun, ExecutionResult};
use crate::runtime_model::{EmpiricalCdf, ModelStore, DEFAULT_NEIGHBORHOOD};

/// Executes one instance under the share produced by an allocator.
pub trait PortfolioBackend {
    type Instance;

    fn n_algorithms(&self) -> usize;

    fn instance_id<'a>(&self, instance: &'a Self::Instance) -> &'a str;

    fn features<'a>(&self, instance: &'a Self::Instance) -> &'a [f64];

    /// Ground-truth oracle time, when the backend knows it.
    fn oracle_time(&self, instance: &Self::Instance) -> Option<f64>;

    /// `share_for(wall, consumed)` gives the allocator's share at wall-clock
    /// time `wall` given each algorithm's consumed virtual time.
    fn execute(
        &mut self,
        instance: &Self::Instance,
        spec: &AllocatorSpec,
        share_for: &mut dyn FnMut(f64, &[f64]) -> Share,
    ) -> Result<ExecutionResult>;

    /// Whether executing an instance is free of side effects, so that every
    /// allocator's loss can be evaluated on it.
    fn supports_counterfactual(&self) -> bool {
        false
    }
}

/// Replays ground-truth runtimes with the virtual-time simulator.
#[derive(Debug, Clone, Copy)]
pub struct SimulatedBackend {
    pub n_algorithms: usize,
}

impl PortfolioBackend for SimulatedBackend {
    type Instance = AlgorithmRun;

    fn n_algorithms(&self) -> usize {
        self.n_algorithms
    }

    fn instance_id<'a>(&self, instance: &'a AlgorithmRun) -> &'a str {
        &instance.instance_id
    }

    fn features<'a>(&self, instance: &'a AlgorithmRun) -> &'a [f64] {
        &instance.features
    }

    fn oracle_time(&self, instance: &AlgorithmRun) -> Option<f64> {
        instance.oracle_time().ok()
    }

    fn execute(
        &mut self,
        instance: &AlgorithmRun,
        spec: &AllocatorSpec,
        share_for: &mut dyn FnMut(f64, &[f64]) -> Share,
    ) -> Result<ExecutionResult> {
        if spec.dynamic {
            execute_dynamic(instance, share_for, spec.update_period)
        } else {
            let zeros = vec![0.0; instance.n_algorithms()];
            execute_static(instance, &share_for(0.0, &zeros))
        }
    }

    fn supports_counterfactual(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BanditChoice {
    /// Unknown loss bound, handled by restarts.
    #[serde(rename = "exp3light-a")]
    Exp3LightA,
    /// Known loss bound; a larger loss aborts the run.
    #[serde(rename = "exp3light")]
    Exp3Light { loss_bound: f64 },
}

impl BanditChoice {
    pub fn build(&self, n_arms: usize, horizon: usize) -> Result<Box<dyn BanditSolver + Send>> {
        if n_arms == 1 {
            return Ok(Box::new(SingleArm::default()));
        }
        Ok(match *self {
            BanditChoice::Exp3LightA => Box::new(Exp3LightA::new(n_arms, horizon)?),
            BanditChoice::Exp3Light { loss_bound } => Box::new(Exp3Light::new(n_arms, horizon, loss_bound)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GambletaConfig {
    pub allocators: Vec<AllocatorSpec>,
    pub bandit: BanditChoice,
    pub floor: f64,
    pub neighborhood: usize,
    /// Evaluate every allocator on every instance (simulated backends only),
    /// which is what regret against the best allocator needs.
    pub counterfactual: bool,
}

impl GambletaConfig {
    pub fn new(allocators: Vec<AllocatorSpec>) -> Self {
        Self {
            allocators,
            bandit: BanditChoice::Exp3LightA,
            floor: DEFAULT_FLOOR,
            neighborhood: DEFAULT_NEIGHBORHOOD,
            counterfactual: false,
        }
    }

    pub fn validate(&self, n_algorithms: usize) -> Result<()> {
        if self.allocators.is_empty() {
            return Err(invalid("the allocator set is empty"));
        }
        for spec in &self.allocators {
            spec.validate()?;
        }
        if !(self.floor > 0.0 && self.floor * n_algorithms as f64 <= 1.0) {
            return Err(invalid(format!(
                "floor {} is infeasible for {n_algorithms} algorithms",
                self.floor
            )));
        }
        if self.neighborhood == 0 {
            return Err(invalid("neighborhood size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based position in the sequence.
    pub position: usize,
    pub instance_id: String,
    pub chosen_allocator: usize,
    pub chosen_probability: f64,
    /// Wall-clock time of the portfolio under the chosen allocator.
    pub loss: f64,
    pub result: ExecutionResult,
    pub oracle_time: Option<f64>,
    /// Every allocator's wall-clock time on this instance, when evaluated.
    pub allocator_losses: Option<Vec<f64>>,
    pub inner_epoch: u32,
    pub outer_epoch: u32,
}

fn run_one<B: PortfolioBackend>(
    backend: &mut B,
    instance: &B::Instance,
    spec: &AllocatorSpec,
    models: Option<&[EmpiricalCdf]>,
    floor: f64,
) -> Result<ExecutionResult> {
    let k = backend.n_algorithms();
    let mut share_for = |_wall: f64, elapsed: &[f64]| allocate(spec, models, elapsed, floor, k);
    backend.execute(instance, spec, &mut share_for)
}

/// Plays the whole instance sequence in order. Within a trial the bandit is
/// updated before the runtime models.
pub fn run_sequence<B: PortfolioBackend>(
    backend: &mut B,
    instances: &[B::Instance],
    config: &GambletaConfig,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let k = backend.n_algorithms();
    config.validate(k)?;
    let n = config.allocators.len();
    let mut solver = config.bandit.build(n, instances.len().max(1))?;
    let mut store = ModelStore::new(k, config.neighborhood)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counterfactual = config.counterfactual && backend.supports_counterfactual();

    let mut records = Vec::with_capacity(instances.len());
    for (i, instance) in instances.iter().enumerate() {
        let probs = solver.probabilities();
        let arm = sample_arm(&probs, &mut rng);
        let features = backend.features(instance).to_vec();
        let models = store.fit_all(&features)?;
        let spec = &config.allocators[arm];
        let result = run_one(backend, instance, spec, models.as_deref(), config.floor)?;
        let loss = result.wall_clock;

        let allocator_losses = if counterfactual {
            let mut losses = Vec::with_capacity(n);
            for (j, other) in config.allocators.iter().enumerate() {
                if j == arm {
                    losses.push(loss);
                } else {
                    losses.push(run_one(backend, instance, other, models.as_deref(), config.floor)?.wall_clock);
                }
            }
            Some(losses)
        } else {
            None
        };

        solver.observe(arm, loss)?;
        store.record(&features, result.observations.iter().cloned())?;
        let snap = solver.snapshot();
        records.push(EpisodeRecord {
            position: i + 1,
            instance_id: backend.instance_id(instance).to_string(),
            chosen_allocator: arm,
            chosen_probability: probs[arm],
            loss,
            oracle_time: backend.oracle_time(instance),
            result,
            allocator_losses,
            inner_epoch: snap.inner_epoch,
            outer_epoch: snap.outer_epoch,
        });
    }
    Ok(records)
}

/// A seeded random reordering of an instance sequence.
pub fn reorder<T: Clone>(instances: &[T], seed: u64) -> Vec<T> {
    let mut out = instances.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_0dde5);
    out.shuffle(&mut rng);
    out
}

pub fn oracle_time(run: &AlgorithmRun) -> Result<f64> {
    run.oracle_time()
}

/// Cumulative overhead `(sum t_G - sum t_O) / sum t_O` after each pair of
/// achieved and oracle times. Entries are `None` while the oracle sum is zero.
pub fn overhead_curve(pairs: impl IntoIterator<Item = (f64, f64)>) -> Vec<Option<f64>> {
    let mut achieved = 0.0;
    let mut oracle = 0.0;
    pairs
        .into_iter()
        .map(|(g, o)| {
            achieved += g;
            oracle += o;
            (oracle > 0.0).then(|| (achieved - oracle) / oracle)
        })
        .collect()
}

/// Overhead curve of a recorded sequence; requires oracle times.
pub fn episode_overhead(records: &[EpisodeRecord]) -> Result<Vec<Option<f64>>> {
    let pairs = records
        .iter()
        .map(|r| {
            r.oracle_time
                .map(|o| (r.loss, o))
                .ok_or_else(|| invalid(format!("no oracle time for {}", r.instance_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(overhead_curve(pairs))
}

/// Wall-clock times of a fixed share on every instance.
pub fn static_share_times(runs: &[AlgorithmRun], share: &Share) -> Result<Vec<f64>> {
    runs.iter().map(|r| execute_static(r, share).map(|e| e.wall_clock)).collect()
}

/// Runtimes of a single algorithm; fails if it never halts on some instance.
pub fn single_algorithm_times(runs: &[AlgorithmRun], algorithm: usize) -> Result<Vec<f64>> {
    runs.iter()
        .map(|r| {
            r.runtimes
                .get(algorithm)
                .copied()
                .flatten()
                .ok_or_else(|| invalid(format!("algorithm {algorithm} never halts on {}", r.instance_id)))
        })
        .collect()
}

/// Realized regret of the bandit against the best single allocator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretReport {
    pub solver_loss: f64,
    pub best_allocator: usize,
    pub best_allocator_loss: f64,
    pub regret: f64,
    pub max_loss: f64,
    /// Unknown-bound regret bound at the realized best loss and maximum loss;
    /// `None` outside its domain (maximum loss at most 1, or a single arm).
    pub bound: Option<f64>,
}

pub fn regret_report(records: &[EpisodeRecord]) -> Option<RegretReport> {
    let first = records.first()?.allocator_losses.as_ref()?;
    let n = first.len();
    let mut totals = vec![0.0; n];
    let mut max_loss: f64 = 0.0;
    let mut solver_loss = 0.0;
    for r in records {
        let losses = r.allocator_losses.as_ref()?;
        for (t, l) in totals.iter_mut().zip(losses) {
            *t += l;
            max_loss = max_loss.max(*l);
        }
        solver_loss += r.loss;
    }
    let (best_allocator, best_allocator_loss) = totals
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    let bound = BoundInputs::new(n, records.len(), max_loss, best_allocator_loss)
        .ok()
        .and_then(|inputs| bounds::theorem2(&inputs).ok());
    Some(RegretReport {
        solver_loss,
        best_allocator,
        best_allocator_loss,
        regret: solver_loss - best_allocator_loss,
        max_loss,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators::default_allocator_set;
    use approx::assert_relative_eq;

    fn runs(n: usize) -> Vec<AlgorithmRun> {
        (0..n)
            .map(|i| {
                let d = (i % 7) as f64;
                AlgorithmRun::new(format!("i{i}"), vec![d], vec![Some(1.0 + d), Some(3.0 + 0.5 * d)]).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_uniform_allocator() {
        let data = runs(30);
        let cfg = GambletaConfig::new(vec![AllocatorSpec::uniform()]);
        let mut backend = SimulatedBackend { n_algorithms: 2 };
        let recs = run_sequence(&mut backend, &data, &cfg, 3).unwrap();
        for (r, run) in recs.iter().zip(&data) {
            let expected = execute_static(run, &Share::uniform(2)).unwrap().wall_clock;
            assert_eq!(r.loss, expected);
            assert_eq!(r.chosen_allocator, 0);
        }
    }

    #[test]
    fn store_grows_by_k_per_instance_and_loss_is_wall_clock() {
        let data = runs(40);
        let mut cfg = GambletaConfig::new(default_allocator_set(0.5));
        cfg.counterfactual = true;
        let mut backend = SimulatedBackend { n_algorithms: 2 };
        let recs = run_sequence(&mut backend, &data, &cfg, 5).unwrap();
        assert_eq!(recs.len(), 40);
        for r in &recs {
            assert_eq!(r.loss, r.result.wall_clock);
            assert_eq!(r.result.observations.len(), 2);
            assert_eq!(r.result.observations.iter().filter(|o| !o.censored).count(), 1);
            let losses = r.allocator_losses.as_ref().unwrap();
            assert_eq!(losses[r.chosen_allocator], r.loss);
        }
        let report = regret_report(&recs).unwrap();
        assert!(report.bound.is_some());
        assert!(report.regret <= report.bound.unwrap());
    }

    #[test]
    fn deterministic_given_seed() {
        let data = runs(25);
        let cfg = GambletaConfig::new(default_allocator_set(1.0));
        let mut backend = SimulatedBackend { n_algorithms: 2 };
        let a = run_sequence(&mut backend, &data, &cfg, 17).unwrap();
        let b = run_sequence(&mut backend, &data, &cfg, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unsolvable_instance_aborts() {
        let mut data = runs(3);
        data[1].runtimes = vec![None, None];
        let cfg = GambletaConfig::new(vec![AllocatorSpec::uniform()]);
        let mut backend = SimulatedBackend { n_algorithms: 2 };
        assert!(run_sequence(&mut backend, &data, &cfg, 0).is_err());
    }

    #[test]
    fn overhead_examples() {
        assert!(overhead_curve([(1.0, 1.0), (2.0, 2.0)]).iter().all(|v| *v == Some(0.0)));
        let c = overhead_curve([(1.22, 1.0), (2.44, 2.0), (12.2, 10.0)]);
        for v in c {
            assert_relative_eq!(v.unwrap(), 0.22, epsilon = 1e-12);
        }
        assert_eq!(overhead_curve([(0.0, 0.0), (2.0, 1.0)]), vec![None, Some(1.0)]);
        let run = AlgorithmRun::new("x", vec![], vec![Some(10.0), Some(30.0)]).unwrap();
        let uniform = execute_static(&run, &Share::uniform(2)).unwrap().wall_clock;
        let o = oracle_time(&run).unwrap();
        assert_relative_eq!((uniform - o) / o, 1.0);
    }

    #[test]
    fn reorder_is_a_seeded_permutation() {
        let v: Vec<u32> = (0..100).collect();
        let a = reorder(&v, 4);
        assert_eq!(a, reorder(&v, 4));
        assert_ne!(a, reorder(&v, 5));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, v);
    }

    #[test]
    fn known_bound_solver_rejects_large_loss() {
        let data = runs(10);
        let mut cfg = GambletaConfig::new(default_allocator_set(1.0));
        cfg.bandit = BanditChoice::Exp3Light { loss_bound: 1.0 };
        let mut backend = SimulatedBackend { n_algorithms: 2 };
        assert!(run_sequence(&mut backend, &data, &cfg, 0).is_err());
    }
}
