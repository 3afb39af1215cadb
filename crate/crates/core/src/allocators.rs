//! Time allocators: how a portfolio of `K` algorithms shares one machine.
//!
//! The portfolio finishes as soon as any member does, so for a share `s` its
//! runtime distribution is `F_s(t) = 1 - prod_k (1 - F_k(s_k t))`. Quantile
//! allocators pick the share that minimizes the `alpha`-quantile of `F_s`
//! over the simplex with every entry kept at or above a floor.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::runtime_model::{EmpiricalCdf, RuntimeDistribution};

pub const DEFAULT_FLOOR: f64 = 0.01;
pub const DEFAULT_UPDATE_PERIOD: f64 = 1.0;

const SUM_TOLERANCE: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-12;

/// Fractions of machine time per algorithm, each at least the floor and
/// summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share(Vec<f64>);

impl Share {
    pub fn new(values: Vec<f64>, floor: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("share must cover at least one algorithm"));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0 || *v < floor - TIE_TOLERANCE) {
            return Err(invalid(format!("share entries must be positive and at least {floor}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(invalid(format!("share sums to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&s| s > 0.0).map(|&s| s * s.ln()).sum::<f64>()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AllocatorKind {
    Uniform,
    Quantile { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorSpec {
    pub kind: AllocatorKind,
    pub dynamic: bool,
    /// Portfolio wall-clock seconds between share updates (dynamic only).
    pub update_period: f64,
}

impl AllocatorSpec {
    pub fn uniform() -> Self {
        Self {
            kind: AllocatorKind::Uniform,
            dynamic: false,
            update_period: DEFAULT_UPDATE_PERIOD,
        }
    }

    pub fn quantile(alpha: f64, dynamic: bool, update_period: f64) -> Result<Self> {
        let spec = Self {
            kind: AllocatorKind::Quantile { alpha },
            dynamic,
            update_period,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let AllocatorKind::Quantile { alpha } = self.kind {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(invalid(format!("quantile level must lie in (0, 1), got {alpha}")));
            }
        }
        if !(self.update_period > 0.0) {
            return Err(invalid(format!("update period must be positive, got {}", self.update_period)));
        }
        Ok(())
    }

    /// Short stable name, e.g. `uniform`, `q0.3`, `q0.3-dyn`.
    pub fn label(&self) -> String {
        match self.kind {
            AllocatorKind::Uniform => "uniform".into(),
            AllocatorKind::Quantile { alpha } if self.dynamic => format!("q{alpha}-dyn"),
            AllocatorKind::Quantile { alpha } => format!("q{alpha}"),
        }
    }
}

/// The uniform allocator plus dynamic quantile allocators for
/// `alpha = 0.1, 0.2, ..., 0.9`.
pub fn default_allocator_set(update_period: f64) -> Vec<AllocatorSpec> {
    let mut set = vec![AllocatorSpec::uniform()];
    set.extend((1..=9).map(|i| AllocatorSpec {
        kind: AllocatorKind::Quantile { alpha: i as f64 / 10.0 },
        dynamic: true,
        update_period,
    }));
    set
}

/// `1 - prod_k (1 - F_k(s_k t))`
pub fn portfolio_cdf<D: RuntimeDistribution>(cdfs: &[D], share: &[f64], t: f64) -> f64 {
    1.0 - cdfs
        .iter()
        .zip(share)
        .map(|(f, &s)| 1.0 - f.cdf(s * t))
        .product::<f64>()
}

pub fn portfolio_terminal_mass<D: RuntimeDistribution>(cdfs: &[D]) -> f64 {
    1.0 - cdfs.iter().map(|f| 1.0 - f.terminal_mass()).product::<f64>()
}

/// Smallest `t` with `F_s(t) >= alpha`, or `None` if the portfolio never gets
/// there. Exact for step distributions; bisection to ~1e-13 relative otherwise.
pub fn portfolio_quantile<D: RuntimeDistribution>(cdfs: &[D], share: &[f64], alpha: f64) -> Option<f64> {
    if portfolio_terminal_mass(cdfs) < alpha {
        return None;
    }
    let steps: Option<Vec<(&[f64], &[f64])>> = cdfs.iter().map(|f| f.steps()).collect();
    match steps {
        Some(steps) => step_quantile(&steps, share, alpha),
        None => bisect_quantile(cdfs, share, alpha),
    }
}

fn step_quantile(steps: &[(&[f64], &[f64])], share: &[f64], alpha: f64) -> Option<f64> {
    let k = steps.len();
    let mut next = vec![0usize; k];
    let mut survival = vec![1.0; k];
    loop {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..k {
            if let Some(&t) = steps[j].0.get(next[j]) {
                let t = t / share[j];
                if best.map_or(true, |(_, b)| t < b) {
                    best = Some((j, t));
                }
            }
        }
        let (j, t) = best?;
        survival[j] = 1.0 - steps[j].1[next[j]];
        next[j] += 1;
        if 1.0 - survival.iter().product::<f64>() >= alpha {
            return Some(t);
        }
    }
}

fn bisect_quantile<D: RuntimeDistribution>(cdfs: &[D], share: &[f64], alpha: f64) -> Option<f64> {
    let f = |t: f64| portfolio_cdf(cdfs, share, t);
    if f(0.0) >= alpha {
        return Some(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < alpha {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Some(hi)
}

/// Result of [`optimize_share`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedShare {
    pub share: Share,
    /// The portfolio's `alpha`-quantile under `share`; `None` when unattainable.
    pub quantile: Option<f64>,
    /// Set when no share reaches `alpha`; the share then maximizes the
    /// portfolio CDF at a finite horizon instead.
    pub fallback: bool,
}

/// Default search resolution: 0.01 for two algorithms, 0.05 for three;
/// larger portfolios use coordinate descent.
pub fn default_resolution(k: usize) -> Option<f64> {
    match k {
        2 => Some(0.01),
        3 => Some(0.05),
        _ => None,
    }
}

/// Compositions of `units` into `k` nonnegative parts, mapped onto the
/// floored simplex, plus the uniform share.
pub fn simplex_grid(k: usize, floor: f64, resolution: f64) -> Vec<Vec<f64>> {
    let units = (1.0 / resolution).round().max(1.0) as usize;
    let free = 1.0 - k as f64 * floor;
    let mut out = vec![vec![1.0 / k as f64; k]];
    let mut parts = vec![0usize; k];
    fn rec(
        pos: usize,
        left: usize,
        parts: &mut Vec<usize>,
        units: usize,
        floor: f64,
        free: f64,
        out: &mut Vec<Vec<f64>>,
    ) {
        let k = parts.len();
        if pos == k - 1 {
            parts[pos] = left;
            let share: Vec<f64> = parts
                .iter()
                .map(|&c| floor + free * c as f64 / units as f64)
                .collect();
            out.push(share);
            return;
        }
        for c in 0..=left {
            parts[pos] = c;
            rec(pos + 1, left - c, parts, units, floor, free, out);
        }
    }
    rec(0, units, &mut parts, units, floor, free, &mut out);
    out
}

struct Candidate {
    share: Vec<f64>,
    // lower is better
    score: f64,
}

fn entropy(s: &[f64]) -> f64 {
    -s.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn pick_best(candidates: Vec<Candidate>) -> Vec<f64> {
    let best = candidates.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    let limit = if best.is_finite() {
        best + TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE)
    } else {
        best
    };
    candidates
        .into_iter()
        .filter(|c| c.score <= limit)
        .max_by(|a, b| entropy(&a.share).total_cmp(&entropy(&b.share)))
        .map(|c| c.share)
        .expect("candidate set is never empty")
}

fn coordinate_descent(k: usize, floor: f64, score: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut share = vec![1.0 / k as f64; k];
    let mut value = score(&share);
    let mut step = 0.25 * (1.0 - k as f64 * floor);
    while step >= 1e-3 {
        let mut improved = false;
        for to in 0..k {
            for from in 0..k {
                if to == from {
                    continue;
                }
                let delta = step.min(share[from] - floor);
                if delta <= 0.0 {
                    continue;
                }
                let mut trial = share.clone();
                trial[from] -= delta;
                trial[to] += delta;
                let v = score(&trial);
                if v < value - TIE_TOLERANCE * value.abs() {
                    share = trial;
                    value = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    share
}

/// Share minimizing the portfolio's `alpha`-quantile over the simplex with
/// every entry at least `floor`. Ties go to the share of largest entropy, so
/// the uniform share wins whenever it is optimal.
///
/// Two and three algorithms are searched exhaustively on a grid of the given
/// (or default) resolution. Larger portfolios use coordinate descent from the
/// uniform share, which is not guaranteed to find the global optimum.
pub fn optimize_share<D: RuntimeDistribution>(
    cdfs: &[D],
    alpha: f64,
    floor: f64,
    resolution: Option<f64>,
) -> Result<OptimizedShare> {
    let k = cdfs.len();
    if k == 0 {
        return Err(invalid("need at least one runtime distribution"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("quantile level must lie in (0, 1), got {alpha}")));
    }
    if !(floor > 0.0 && floor * k as f64 <= 1.0) {
        return Err(invalid(format!("floor {floor} is infeasible for {k} algorithms")));
    }
    if let Some(r) = resolution {
        if !(r > 0.0 && r <= 1.0) {
            return Err(invalid(format!("grid resolution must lie in (0, 1], got {r}")));
        }
    }
    if k == 1 {
        let share = Share::uniform(1);
        let quantile = portfolio_quantile(cdfs, share.as_slice(), alpha);
        return Ok(OptimizedShare {
            fallback: quantile.is_none(),
            share,
            quantile,
        });
    }

    let attainable = portfolio_terminal_mass(cdfs) >= alpha;
    let score: Box<dyn Fn(&[f64]) -> f64 + '_> = if attainable {
        Box::new(|s: &[f64]| portfolio_quantile(cdfs, s, alpha).unwrap_or(f64::INFINITY))
    } else {
        let uniform = vec![1.0 / k as f64; k];
        let reach = 0.99 * portfolio_terminal_mass(cdfs);
        match portfolio_quantile(cdfs, &uniform, reach).filter(|h| *h > 0.0) {
            Some(horizon) => Box::new(move |s: &[f64]| -portfolio_cdf(cdfs, s, horizon)),
            None => {
                return Ok(OptimizedShare {
                    share: Share::uniform(k),
                    quantile: None,
                    fallback: true,
                })
            }
        }
    };

    let best = match resolution.or_else(|| default_resolution(k)) {
        Some(res) if k <= 3 || resolution.is_some() => {
            let candidates = simplex_grid(k, floor, res)
                .into_iter()
                .map(|share| Candidate {
                    score: score(&share),
                    share,
                })
                .collect();
            pick_best(candidates)
        }
        _ => coordinate_descent(k, floor, score.as_ref()),
    };
    let quantile = if attainable {
        portfolio_quantile(cdfs, &best, alpha)
    } else {
        None
    };
    Ok(OptimizedShare {
        share: Share(best),
        quantile,
        fallback: !attainable,
    })
}

/// Share chosen by `spec` for a portfolio of `k` algorithms.
///
/// `models` is `None` until every algorithm has at least one observation, in
/// which case every allocator falls back to uniform. Dynamic quantile
/// allocators condition each model on the virtual time already spent by that
/// algorithm; a model that has already run out of support is treated as
/// never finishing.
pub fn allocate(
    spec: &AllocatorSpec,
    models: Option<&[EmpiricalCdf]>,
    elapsed: &[f64],
    floor: f64,
    k: usize,
) -> Share {
    let AllocatorKind::Quantile { alpha } = spec.kind else {
        return Share::uniform(k);
    };
    let Some(models) = models else {
        return Share::uniform(k);
    };
    let optimized = if spec.dynamic && elapsed.iter().any(|&e| e > 0.0) {
        let conditioned: Vec<EmpiricalCdf> = models
            .iter()
            .zip(elapsed)
            .map(|(m, &tau)| m.condition_on_elapsed(tau).unwrap_or_else(|_| EmpiricalCdf::never()))
            .collect();
        optimize_share(&conditioned, alpha, floor, None)
    } else {
        optimize_share(models, alpha, floor, None)
    };
    optimized.map(|o| o.share).unwrap_or_else(|_| Share::uniform(k))
}
