//! Censoring-aware runtime distributions.
//!
//! Runtime distributions may be improper: `F(inf) < 1` models a solver that
//! never halts on part of the instances. Models are fitted per algorithm with
//! a Kaplan–Meier estimate over the nearest past instances in standardized
//! feature space, so losers of a portfolio run (stopped before solving)
//! contribute as right-censored observations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A cumulative runtime distribution, possibly improper.
pub trait RuntimeDistribution {
    fn cdf(&self, t: f64) -> f64;

    /// `F(inf)`, the probability of ever finishing.
    fn terminal_mass(&self) -> f64;

    /// Support points and values when the distribution is a right-continuous
    /// step function.
    fn steps(&self) -> Option<(&[f64], &[f64])> {
        None
    }
}

impl<D: RuntimeDistribution + ?Sized> RuntimeDistribution for &D {
    fn cdf(&self, t: f64) -> f64 {
        (**self).cdf(t)
    }

    fn terminal_mass(&self) -> f64 {
        (**self).terminal_mass()
    }

    fn steps(&self) -> Option<(&[f64], &[f64])> {
        (**self).steps()
    }
}

/// Right-continuous step CDF `F(t) = values[i]` for `times[i] <= t < times[i+1]`
/// and zero before the first support point. The last value is `F(inf)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid("support and values differ in length"));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("support points must be finite and nonnegative"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("support points must be strictly increasing"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("values must be nondecreasing within [0, 1]"));
        }
        Ok(Self { times, values })
    }

    /// The distribution that never finishes.
    pub fn never() -> Self {
        Self::default()
    }

    /// Product-limit estimate from `(time, censored)` pairs.
    ///
    /// Computed by redistributing each censored observation's mass equally to
    /// every strictly later observation, which keeps the uncensored case equal
    /// to `count / n` bit for bit. Events precede censorings at tied times.
    pub fn kaplan_meier(observations: &[(f64, bool)]) -> Result<Self> {
        if observations.iter().any(|(t, _)| !(t.is_finite() && *t > 0.0)) {
            return Err(invalid("observation times must be finite and positive"));
        }
        let mut sorted = observations.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let n = sorted.len();
        let mut times: Vec<f64> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut weight = 1.0;
        let mut mass = 0.0;
        for (i, &(t, censored)) in sorted.iter().enumerate() {
            let remaining = n - i;
            if censored {
                if remaining > 1 {
                    weight = weight * remaining as f64 / (remaining - 1) as f64;
                }
                continue;
            }
            mass += weight;
            let f = (mass / n as f64).min(1.0);
            if times.last() == Some(&t) {
                *values.last_mut().unwrap() = f;
            } else {
                times.push(t);
                values.push(f);
            }
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    /// Distribution of the remaining runtime given `tau` seconds already spent
    /// without finishing: `G(t) = (F(tau + t) - F(tau)) / (1 - F(tau))`.
    pub fn condition_on_elapsed(&self, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(invalid(format!("elapsed time must be finite and nonnegative, got {tau}")));
        }
        let base = self.eval(tau);
        if base >= 1.0 {
            return Err(Error::AlreadySolved(tau));
        }
        if tau == 0.0 {
            return Ok(self.clone());
        }
        let start = self.times.partition_point(|&x| x <= tau);
        let denom = 1.0 - base;
        let times = self.times[start..].iter().map(|&x| x - tau).collect();
        let values = self.values[start..]
            .iter()
            .map(|&v| ((v - base) / denom).clamp(0.0, 1.0))
            .collect();
        Ok(Self { times, values })
    }

    /// Smallest `t` with `F(t) >= alpha`, or `None` when `F(inf) < alpha`.
    pub fn quantile(&self, alpha: f64) -> Option<f64> {
        let idx = self.values.partition_point(|&v| v < alpha);
        self.times.get(idx).copied()
    }
}

impl RuntimeDistribution for EmpiricalCdf {
    fn cdf(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn terminal_mass(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    fn steps(&self) -> Option<(&[f64], &[f64])> {
        Some((&self.times, &self.values))
    }
}

/// Exponential runtime law `F(t) = 1 - exp(-rate t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    pub rate: f64,
}

impl RuntimeDistribution for Exponential {
    fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            -(-self.rate * t).exp_m1()
        }
    }

    fn terminal_mass(&self) -> f64 {
        1.0
    }
}

/// Lazily conditioned view of any distribution; see
/// [`EmpiricalCdf::condition_on_elapsed`].
#[derive(Debug, Clone, Copy)]
pub struct Conditioned<D> {
    inner: D,
    tau: f64,
    base: f64,
}

impl<D: RuntimeDistribution> Conditioned<D> {
    pub fn new(inner: D, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(invalid(format!("elapsed time must be finite and nonnegative, got {tau}")));
        }
        let base = inner.cdf(tau);
        if base >= 1.0 {
            return Err(Error::AlreadySolved(tau));
        }
        Ok(Self { inner, tau, base })
    }
}

impl<D: RuntimeDistribution> RuntimeDistribution for Conditioned<D> {
    fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        ((self.inner.cdf(self.tau + t) - self.base) / (1.0 - self.base)).clamp(0.0, 1.0)
    }

    fn terminal_mass(&self) -> f64 {
        ((self.inner.terminal_mass() - self.base) / (1.0 - self.base)).clamp(0.0, 1.0)
    }
}

/// One algorithm's outcome on one instance. `time` is virtual (CPU) time; for
/// a censored observation it is the time consumed before being stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeObservation {
    pub instance_id: String,
    pub features: Vec<f64>,
    pub algorithm: usize,
    pub time: f64,
    pub censored: bool,
}

/// Running per-dimension mean and variance (Welford).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStats {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl FeatureStats {
    pub fn push(&mut self, x: &[f64]) {
        if self.count == 0 {
            self.mean = vec![0.0; x.len()];
            self.m2 = vec![0.0; x.len()];
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard deviation of dimension `i`, or 1 when undefined or zero.
    pub fn scale(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 1.0;
        }
        let sd = (self.m2[i] / (self.count - 1) as f64).sqrt();
        if sd > 0.0 && sd.is_finite() {
            sd
        } else {
            1.0
        }
    }
}

pub const DEFAULT_NEIGHBORHOOD: usize = 50;

/// Kaplan–Meier estimate over the `neighborhood` observations closest to
/// `query` (Euclidean distance on features divided by `stats` scales). Every
/// observation tied with the last selected distance is included.
pub fn fit(
    observations: &[RuntimeObservation],
    query: &[f64],
    neighborhood: usize,
    stats: &FeatureStats,
) -> Result<EmpiricalCdf> {
    if neighborhood == 0 {
        return Err(invalid("neighborhood size must be at least 1"));
    }
    let Some(first) = observations.first() else {
        return Err(Error::NoObservations(0));
    };
    if observations.len() <= neighborhood {
        let pairs: Vec<(f64, bool)> = observations.iter().map(|o| (o.time, o.censored)).collect();
        return EmpiricalCdf::kaplan_meier(&pairs);
    }
    if first.features.len() != query.len() {
        return Err(invalid("query has a different feature dimension than the observations"));
    }
    let scales: Vec<f64> = (0..query.len()).map(|i| stats.scale(i)).collect();
    let dist: Vec<f64> = observations
        .iter()
        .map(|o| {
            o.features
                .iter()
                .zip(query)
                .zip(&scales)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum()
        })
        .collect();
    let mut order = dist.clone();
    let (_, cutoff, _) = order.select_nth_unstable_by(neighborhood - 1, f64::total_cmp);
    let cutoff = *cutoff;
    let pairs: Vec<(f64, bool)> = observations
        .iter()
        .zip(&dist)
        .filter(|(_, d)| **d <= cutoff)
        .map(|(o, _)| (o.time, o.censored))
        .collect();
    EmpiricalCdf::kaplan_meier(&pairs)
}

/// Append-only store of runtime observations for `K` algorithms.
#[derive(Debug, Clone)]
pub struct ModelStore {
    n_algorithms: usize,
    neighborhood: usize,
    per_algorithm: Vec<Vec<RuntimeObservation>>,
    stats: FeatureStats,
}

impl ModelStore {
    pub fn new(n_algorithms: usize, neighborhood: usize) -> Result<Self> {
        if n_algorithms == 0 {
            return Err(invalid("need at least one algorithm"));
        }
        if neighborhood == 0 {
            return Err(invalid("neighborhood size must be at least 1"));
        }
        Ok(Self {
            n_algorithms,
            neighborhood,
            per_algorithm: vec![Vec::new(); n_algorithms],
            stats: FeatureStats::default(),
        })
    }

    pub fn n_algorithms(&self) -> usize {
        self.n_algorithms
    }

    pub fn len(&self) -> usize {
        self.per_algorithm.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn observations(&self, algorithm: usize) -> &[RuntimeObservation] {
        &self.per_algorithm[algorithm]
    }

    pub fn stats(&self) -> &FeatureStats {
        &self.stats
    }

    /// Adds the outcomes of one instance and folds its features into the
    /// standardization statistics.
    pub fn record(
        &mut self,
        features: &[f64],
        observations: impl IntoIterator<Item = RuntimeObservation>,
    ) -> Result<()> {
        let dim = self.stats.mean().len();
        if self.stats.count() > 0 && dim != features.len() {
            return Err(invalid(format!(
                "feature dimension {} differs from earlier instances ({dim})",
                features.len()
            )));
        }
        let observations: Vec<RuntimeObservation> = observations.into_iter().collect();
        for o in &observations {
            if o.algorithm >= self.n_algorithms {
                return Err(invalid(format!("algorithm index {} out of range", o.algorithm)));
            }
            if !(o.time.is_finite() && o.time > 0.0) {
                return Err(invalid(format!("observation time must be finite and positive, got {}", o.time)));
            }
            if o.features.len() != features.len() {
                return Err(invalid("observation features differ from the instance features"));
            }
        }
        self.stats.push(features);
        for o in observations {
            self.per_algorithm[o.algorithm].push(o);
        }
        Ok(())
    }

    pub fn fit(&self, algorithm: usize, query: &[f64]) -> Result<EmpiricalCdf> {
        let obs = self
            .per_algorithm
            .get(algorithm)
            .ok_or_else(|| invalid(format!("algorithm index {algorithm} out of range")))?;
        fit(obs, query, self.neighborhood, &self.stats).map_err(|e| match e {
            Error::NoObservations(_) => Error::NoObservations(algorithm),
            other => other,
        })
    }

    /// Models for every algorithm, or `None` while any algorithm lacks data.
    pub fn fit_all(&self, query: &[f64]) -> Result<Option<Vec<EmpiricalCdf>>> {
        let mut out = Vec::with_capacity(self.n_algorithms);
        for k in 0..self.n_algorithms {
            match self.fit(k, query) {
                Ok(cdf) => out.push(cdf),
                Err(Error::NoObservations(_)) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(out))
    }
}
