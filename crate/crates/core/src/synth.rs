//! Synthetic satisfiable/unsatisfiable instance streams.
//!
//! Two algorithms: index 0 is a local-search solver that is fast on
//! satisfiable instances and never halts on unsatisfiable ones; index 1 is a
//! complete solver that halts on everything. Runtimes scale with a difficulty
//! feature drawn uniformly from a range, which is the only feature exposed to
//! the runtime models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exec::AlgorithmRun;

pub const LOCAL_SEARCH: usize = 0;
pub const COMPLETE: usize = 1;

/// Runtime law of one algorithm on one instance class, parameterized by the
/// difficulty `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuntimeLaw {
    Never,
    /// `exp(mu + sigma Z)` with `mu = log_median + log_median_slope d` and
    /// `sigma = sigma + sigma_slope d`.
    LogNormal {
        log_median: f64,
        log_median_slope: f64,
        sigma: f64,
        sigma_slope: f64,
    },
    /// `x_m U^(-1/shape)` with `ln x_m = log_scale + log_scale_slope d`.
    Pareto {
        log_scale: f64,
        log_scale_slope: f64,
        shape: f64,
    },
}

impl RuntimeLaw {
    pub fn is_proper(&self) -> bool {
        !matches!(self, RuntimeLaw::Never)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RuntimeLaw::Never => Ok(()),
            RuntimeLaw::LogNormal { log_median, log_median_slope, sigma, sigma_slope } => {
                if [log_median, log_median_slope, sigma, sigma_slope].iter().any(|x| !x.is_finite()) {
                    return Err(invalid("lognormal parameters must be finite"));
                }
                Ok(())
            }
            RuntimeLaw::Pareto { log_scale, log_scale_slope, shape } => {
                if !(log_scale.is_finite() && log_scale_slope.is_finite() && shape > 0.0) {
                    return Err(invalid("pareto parameters must be finite with positive shape"));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, difficulty: f64, rng: &mut R) -> Option<f64> {
        match *self {
            RuntimeLaw::Never => None,
            RuntimeLaw::LogNormal { log_median, log_median_slope, sigma, sigma_slope } => {
                let z: f64 = rng.sample(StandardNormal);
                let mu = log_median + log_median_slope * difficulty;
                let s = (sigma + sigma_slope * difficulty).max(0.0);
                Some((mu + s * z).exp())
            }
            RuntimeLaw::Pareto { log_scale, log_scale_slope, shape } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let scale = (log_scale + log_scale_slope * difficulty).exp();
                Some(scale * u.powf(-1.0 / shape))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassLaws {
    pub sat: RuntimeLaw,
    pub unsat: RuntimeLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSpec {
    pub instances: usize,
    pub seed: u64,
    pub sat_fraction: f64,
    pub difficulty_min: f64,
    pub difficulty_max: f64,
    pub local_search: ClassLaws,
    pub complete: ClassLaws,
}

impl Default for GeneratorSpec {
    /// 1899 instances, half satisfiable, difficulty in `[20, 250]`. The
    /// complete solver's median runtime is `0.05 e^(0.025 d)` seconds on both
    /// classes; local search is ten times faster on satisfiable instances.
    fn default() -> Self {
        let complete = RuntimeLaw::LogNormal {
            log_median: 0.05f64.ln(),
            log_median_slope: 0.025,
            sigma: 0.5,
            sigma_slope: 0.004,
        };
        let local = RuntimeLaw::LogNormal {
            log_median: 0.005f64.ln(),
            log_median_slope: 0.025,
            sigma: 0.5,
            sigma_slope: 0.004,
        };
        Self {
            instances: 1899,
            seed: 0,
            sat_fraction: 0.5,
            difficulty_min: 20.0,
            difficulty_max: 250.0,
            local_search: ClassLaws {
                sat: local,
                unsat: RuntimeLaw::Never,
            },
            complete: ClassLaws {
                sat: complete,
                unsat: complete,
            },
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sat_fraction) {
            return Err(invalid(format!("sat fraction must lie in [0, 1], got {}", self.sat_fraction)));
        }
        if !(self.difficulty_min.is_finite()
            && self.difficulty_max.is_finite()
            && self.difficulty_min <= self.difficulty_max)
        {
            return Err(invalid("difficulty range must be finite and ordered"));
        }
        if !self.complete.sat.is_proper() || !self.complete.unsat.is_proper() {
            return Err(invalid("the complete solver must halt on every class"));
        }
        if self.local_search.unsat.is_proper() {
            return Err(invalid("local search cannot halt on unsatisfiable instances"));
        }
        for law in [self.local_search.sat, self.complete.sat, self.complete.unsat] {
            law.validate()?;
        }
        Ok(())
    }
}

/// A generated instance together with its hidden class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub run: AlgorithmRun,
    pub satisfiable: bool,
}

/// Draws `spec.instances` instances from a generator seeded with `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<SyntheticInstance>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.instances.to_string().len().max(4);
    (0..spec.instances)
        .map(|i| {
            let satisfiable = rng.random::<f64>() < spec.sat_fraction;
            let difficulty = spec.difficulty_min + (spec.difficulty_max - spec.difficulty_min) * rng.random::<f64>();
            let (ls, complete) = if satisfiable {
                (spec.local_search.sat, spec.complete.sat)
            } else {
                (spec.local_search.unsat, spec.complete.unsat)
            };
            let t_ls = ls.sample(difficulty, &mut rng);
            let t_complete = complete.sample(difficulty, &mut rng);
            let run = AlgorithmRun::new(
                format!("{}-{:0width$}", if satisfiable { "uf" } else { "uu" }, i + 1),
                vec![difficulty],
                vec![t_ls, t_complete],
            )?;
            Ok(SyntheticInstance { run, satisfiable })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sat_fraction: f64, instances: usize) -> GeneratorSpec {
        GeneratorSpec {
            sat_fraction,
            instances,
            seed: 11,
            ..GeneratorSpec::default()
        }
    }

    #[test]
    fn all_satisfiable() {
        let runs = generate(&spec(1.0, 300)).unwrap();
        assert!(runs.iter().all(|r| r.run.runtimes[LOCAL_SEARCH].is_some()));
    }

    #[test]
    fn all_unsatisfiable() {
        let runs = generate(&spec(0.0, 300)).unwrap();
        for r in &runs {
            assert_eq!(r.run.oracle_time().unwrap(), r.run.runtimes[COMPLETE].unwrap());
        }
    }

    #[test]
    fn default_oracle_prefers_local_search_on_sat() {
        let runs = generate(&spec(0.5, 2000)).unwrap();
        let sat: Vec<_> = runs.iter().filter(|r| r.satisfiable).collect();
        let frac_sat = sat.len() as f64 / runs.len() as f64;
        assert!((frac_sat - 0.5).abs() < 0.05, "{frac_sat}");
        let ls_wins = sat
            .iter()
            .filter(|r| r.run.runtimes[LOCAL_SEARCH].unwrap() < r.run.runtimes[COMPLETE].unwrap())
            .count() as f64
            / sat.len() as f64;
        assert!(ls_wins > 0.85, "{ls_wins}");
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&spec(0.5, 50)).unwrap(), generate(&spec(0.5, 50)).unwrap());
        let other = GeneratorSpec { seed: 12, ..spec(0.5, 50) };
        assert_ne!(generate(&spec(0.5, 50)).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = GeneratorSpec::default();
        s.local_search.unsat = s.local_search.sat;
        assert!(s.validate().is_err());
        let mut s = GeneratorSpec::default();
        s.complete.sat = RuntimeLaw::Never;
        assert!(s.validate().is_err());
        let s = GeneratorSpec { sat_fraction: 1.5, ..GeneratorSpec::default() };
        assert!(s.validate().is_err());
    }
}
