//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use gambleta::allocators::{optimize_share, Share};
use gambleta::bandit::{ceil_log, run_game, unbiased_estimate, Exp3LightA};
use gambleta::bounds::{theorem2, BoundInputs};
use gambleta::exec::{execute_dynamic, execute_static, AlgorithmRun};
use gambleta::experiment::run_simulated;
use gambleta::gambleta::GambletaConfig;
use gambleta::allocators::default_allocator_set;
use gambleta::runtime_model::{EmpiricalCdf, Exponential};
use gambleta::synth::{generate, GeneratorSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

fn unbiased_estimator() -> Outcome {
    let draws = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for &p in &[0.05, 0.5, 0.95] {
        for &l in &[0.1, 1.0, 100.0] {
            let sum: f64 = (0..draws)
                .map(|_| unbiased_estimate(l, p, rng.random::<f64>() < p))
                .sum();
            let mean = sum / draws as f64;
            let se = (l * l * (1.0 - p) / p / draws as f64).sqrt();
            let z = (mean - l).abs() / se;
            worst = worst.max(z);
            if z > 3.0 {
                return Err(format!("p={p} l={l}: mean {mean} is {z:.2} standard errors from {l}"));
            }
        }
    }
    Ok(format!("9 cells, worst deviation {worst:.2} standard errors"))
}

// ---------------------------------------------------------------- 2, 3, 4

const ARMS: [usize; 3] = [2, 5, 10];
const MAX_LOSSES: [f64; 3] = [4.0, 64.0, 1024.0];
const HORIZONS: [usize; 3] = [500, 5000, 50_000];
const SEEDS: u64 = 30;

/// Summary of 30 seeded games for one (N, max loss, M) cell.
struct Cell {
    n: usize,
    max_loss: f64,
    horizon: usize,
    mean_regret: f64,
    mean_bound: f64,
    epoch_violations: usize,
    /// Runs whose final u violates u + 1 <= ceil(log2 L).
    literal_u_violations: usize,
    /// Runs whose final u violates u <= ceil(log2 L).
    sound_u_violations: usize,
    runs: usize,
}

/// Stochastic game: arm 0 loses `max_loss` with probability 0.3, the others
/// with probability 0.5; losses are drawn up front (oblivious adversary).
fn play_cell(n: usize, max_loss: f64, horizon: usize) -> Cell {
    let mut cell = Cell {
        n,
        max_loss,
        horizon,
        mean_regret: 0.0,
        mean_bound: 0.0,
        epoch_violations: 0,
        literal_u_violations: 0,
        sound_u_violations: 0,
        runs: 0,
    };
    let log2_bound = ceil_log(max_loss, 2.0) as u32;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + n as u64 * 31 + max_loss as u64);
        let table: Vec<f64> = (0..horizon * n)
            .map(|i| {
                let mean = if i % n == 0 { 0.3 } else { 0.5 };
                if rng.random::<f64>() < mean {
                    max_loss
                } else {
                    0.0
                }
            })
            .collect();
        let mut solver = Exp3LightA::new(n, horizon).unwrap();
        let log = run_game(&mut solver, |t, a| table[(t - 1) * n + a], horizon, seed).unwrap();
        let best = (0..n)
            .map(|j| (0..horizon).map(|t| table[t * n + j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        cell.mean_regret += (log.total_loss() - best) / SEEDS as f64;
        cell.mean_bound += theorem2(&BoundInputs::new(n, horizon, max_loss, best).unwrap()).unwrap() / SEEDS as f64;
        cell.epoch_violations += log
            .trials
            .iter()
            .filter(|t| t.min_normalized_estimate > 4f64.powi(t.inner_epoch_r as i32))
            .count();
        let u = log.final_outer_epoch();
        cell.literal_u_violations += usize::from(u + 1 > log2_bound);
        cell.sound_u_violations += usize::from(u > log2_bound);
        cell.runs += 1;
    }
    cell
}

fn sweep() -> Vec<Cell> {
    let mut cells = Vec::new();
    for &n in &ARMS {
        for &max_loss in &MAX_LOSSES {
            for &horizon in &HORIZONS {
                cells.push(play_cell(n, max_loss, horizon));
            }
        }
    }
    cells
}

fn theorem2_compliance(cells: &[Cell]) -> Outcome {
    let mut worst: f64 = 0.0;
    for c in cells.iter().filter(|c| c.horizon == 5000) {
        let ratio = c.mean_regret / c.mean_bound;
        worst = worst.max(ratio);
        if c.mean_regret > c.mean_bound {
            return Err(format!(
                "N={} max={} M=5000: mean regret {} exceeds bound {}",
                c.n, c.max_loss, c.mean_regret, c.mean_bound
            ));
        }
    }
    Ok(format!("9 configurations, largest regret/bound ratio {worst:.4}"))
}

fn sublinearity(cells: &[Cell]) -> Outcome {
    let mut lines = Vec::new();
    for &n in &ARMS {
        for &max_loss in &MAX_LOSSES {
            let per_m: Vec<f64> = HORIZONS
                .iter()
                .map(|&m| {
                    let c = cells.iter().find(|c| c.n == n && c.max_loss == max_loss && c.horizon == m).unwrap();
                    c.mean_regret / m as f64
                })
                .collect();
            if !per_m.windows(2).all(|w| w[1] < w[0]) {
                return Err(format!("N={n} max={max_loss}: regret/M {per_m:?} is not strictly decreasing"));
            }
            lines.push(per_m[2] / per_m[0]);
        }
    }
    let worst = lines.iter().copied().fold(0.0, f64::max);
    Ok(format!("9 configurations strictly decreasing, largest ratio (M=50000 vs 500) {worst:.3}"))
}

fn epoch_bounds_inner(cells: &[Cell]) -> Outcome {
    let runs: usize = cells.iter().map(|c| c.runs).sum();
    let violations: usize = cells.iter().map(|c| c.epoch_violations).sum();
    check(
        violations == 0,
        format!("min estimate / bound <= 4^r after every trial of {runs} runs; {violations} violations"),
    )
}

fn epoch_bounds_outer(cells: &[Cell]) -> Outcome {
    let runs: usize = cells.iter().map(|c| c.runs).sum();
    let literal: usize = cells.iter().map(|c| c.literal_u_violations).sum();
    let sound: usize = cells.iter().map(|c| c.sound_u_violations).sum();
    check(
        literal == 0,
        format!(
            "final u + 1 <= ceil(log2 L) violated in {literal} of {runs} runs \
             (u <= ceil(log2 L) violated in {sound})"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn random_share<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Share {
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let free = 1.0 - k as f64 * floor;
    let mut s: Vec<f64> = raw.iter().map(|x| floor + free * x / total).collect();
    // absorb rounding so the entries sum to 1 within the share tolerance
    let drift = 1.0 - s.iter().sum::<f64>();
    s[0] += drift;
    Share::new(s, floor).unwrap()
}

fn random_runtimes<R: Rng>(rng: &mut R, k: usize, never: f64, lo: f64, hi: f64) -> Vec<Option<f64>> {
    loop {
        let t: Vec<Option<f64>> = (0..k)
            .map(|_| (rng.random::<f64>() >= never).then(|| lo * (hi / lo).powf(rng.random::<f64>())))
            .collect();
        if t.iter().any(Option::is_some) {
            return t;
        }
    }
}

fn static_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for case in 0..10_000 {
        let k = [2, 3, 5][case % 3];
        let run = AlgorithmRun::new(format!("c{case}"), vec![], random_runtimes(&mut rng, k, 0.3, 0.01, 100.0)).unwrap();
        let share = random_share(&mut rng, k, 0.01);
        let expected = run
            .runtimes
            .iter()
            .zip(share.as_slice())
            .filter_map(|(t, s)| t.map(|t| t / s))
            .fold(f64::INFINITY, f64::min);
        let r = execute_static(&run, &share).unwrap();
        worst = worst.max((r.wall_clock - expected).abs());
        if (r.wall_clock - expected).abs() > 1e-9 {
            return Err(format!("case {case}: wall clock {} vs {expected}", r.wall_clock));
        }
        let period = 0.01 + 10.0 * rng.random::<f64>();
        let d = execute_dynamic(&run, |_, _| share.clone(), period).unwrap();
        if d != r {
            return Err(format!("case {case}: constant dynamic allocator differs from static"));
        }
    }
    Ok(format!("10000 cases, largest deviation {worst:e}; dynamic constant allocator bit-identical"))
}

// ---------------------------------------------------------------- 6

/// Time-stepping reference: advances every algorithm by `s_k dt` per step.
fn integrate(run: &AlgorithmRun, schedule: &[Share], period: f64, dt: f64) -> f64 {
    let k = run.n_algorithms();
    let mut done = vec![0.0; k];
    let mut step: u64 = 0;
    loop {
        let t = step as f64 * dt;
        let idx = ((t / period).floor() as usize).min(schedule.len() - 1);
        let s = schedule[idx].as_slice();
        step += 1;
        for j in 0..k {
            done[j] += s[j] * dt;
        }
        if run.runtimes.iter().zip(&done).any(|(t, v)| t.is_some_and(|t| *v >= t)) {
            return step as f64 * dt;
        }
    }
}

fn dynamic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let k = 2 + case % 2;
        let run = AlgorithmRun::new(format!("d{case}"), vec![], random_runtimes(&mut rng, k, 0.25, 0.2, 3.0)).unwrap();
        let period = 0.25 + 1.75 * rng.random::<f64>();
        let schedule: Vec<Share> = (0..8).map(|_| random_share(&mut rng, k, 0.05)).collect();
        let exact = execute_dynamic(
            &run,
            |wall, _| schedule[((wall / period).round() as usize).min(schedule.len() - 1)].clone(),
            period,
        )
        .unwrap()
        .wall_clock;
        let reference = integrate(&run, &schedule, period, 1e-4);
        let rel = (exact - reference).abs() / reference;
        worst = worst.max(rel);
        if rel > 1e-3 {
            return Err(format!("schedule {case}: event simulation {exact} vs integrator {reference}"));
        }
    }
    Ok(format!("100 schedules, largest relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 7

/// Independent quantile of a two-algorithm portfolio of step CDFs: scan the
/// candidate times `T / s_k` in increasing order.
fn step_portfolio_quantile(cdfs: &[(Vec<f64>, Vec<f64>)], share: &[f64], alpha: f64) -> Option<f64> {
    let step_cdf = |(times, values): &(Vec<f64>, Vec<f64>), x: f64| {
        times.iter().zip(values).filter(|(t, _)| **t <= x).map(|(_, v)| *v).fold(0.0, f64::max)
    };
    let mut candidates: Vec<f64> = cdfs
        .iter()
        .zip(share)
        .flat_map(|((times, _), s)| times.iter().map(move |t| t / s))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.into_iter().find(|&t| {
        let survive: f64 = cdfs.iter().zip(share).map(|(c, s)| 1.0 - step_cdf(c, s * t)).product();
        1.0 - survive >= alpha
    })
}

fn quantile_oracle() -> Outcome {
    let floor = 0.01;
    let step = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..20 {
        let fast = 1.0 + 4.0 * rng.random::<f64>();
        let slow = fast * (0.05 + 0.9 * rng.random::<f64>());
        let alpha = 0.05 + 0.9 * rng.random::<f64>();
        let cdfs = [Exponential { rate: slow }, Exponential { rate: fast }];
        let q = |s0: f64| -(-alpha).ln_1p() / (s0 * slow + (1.0 - s0) * fast);
        let opt = optimize_share(&cdfs, alpha, floor, None).unwrap();
        let got = opt.quantile.unwrap();
        let best = q(floor);
        if (opt.share.as_slice()[0] - floor).abs() > step || got - best > q(floor + step) - best {
            return Err(format!(
                "exponential case {case}: share {:?}, quantile {got} vs optimum {best}",
                opt.share.as_slice()
            ));
        }
    }

    for case in 0..50 {
        let cdfs: Vec<(Vec<f64>, Vec<f64>)> = (0..2)
            .map(|_| {
                let t1 = 0.1 + 10.0 * rng.random::<f64>();
                let t2 = t1 * (1.1 + 10.0 * rng.random::<f64>());
                let v1 = rng.random::<f64>();
                let v2 = v1 + (1.0 - v1) * rng.random::<f64>();
                let v2 = if rng.random::<f64>() < 0.5 { 1.0 } else { v2 };
                (vec![t1, t2], vec![v1, v2])
            })
            .collect();
        let alpha = 0.05 + 0.9 * rng.random::<f64>();
        let models: Vec<EmpiricalCdf> = cdfs.iter().map(|(t, v)| EmpiricalCdf::new(t.clone(), v.clone()).unwrap()).collect();
        let opt = optimize_share(&models, alpha, floor, None).unwrap();
        // exhaustive search over the floored grid at the same resolution
        let free = 1.0 - 2.0 * floor;
        let grid = (0..=100).map(|c| floor + free * c as f64 / 100.0).chain([0.5]);
        let best = grid
            .filter_map(|s0| step_portfolio_quantile(&cdfs, &[s0, 1.0 - s0], alpha))
            .fold(f64::INFINITY, f64::min);
        let got = opt.quantile.unwrap_or(f64::INFINITY);
        let agree = if best.is_finite() {
            (got - best).abs() <= 1e-9 * best
        } else {
            opt.quantile.is_none()
        };
        if !agree {
            return Err(format!("two-point case {case}: optimizer {got} vs grid search {best}"));
        }
    }
    Ok("20 exponential pairs at the floor corner; 50 two-point portfolios match grid search".into())
}

// ---------------------------------------------------------------- 8

fn kaplan_meier() -> Outcome {
    let km = |obs: &[(f64, bool)]| EmpiricalCdf::kaplan_meier(obs).unwrap();
    let a = km(&[(1.0, false), (2.0, false), (3.0, false)]);
    let b = km(&[(1.0, false), (2.0, true), (3.0, false)]);
    let c = km(&[(5.0, true), (5.0, true), (5.0, true)]);
    let fixtures = [
        (a.eval(1.0), 1.0 / 3.0),
        (a.eval(2.0), 2.0 / 3.0),
        (a.eval(3.0), 1.0),
        (b.eval(1.0), 1.0 / 3.0),
        (b.eval(2.5), 1.0 / 3.0),
        (b.eval(3.0), 1.0),
        (c.eval(5.0), 0.0),
        (c.eval(1e9), 0.0),
    ];
    if let Some((got, want)) = fixtures.iter().find(|(g, w)| g != w) {
        return Err(format!("fixture value {got} != {want}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..100 {
        let n = 1 + rng.random_range(0..60);
        // a coarse grid forces ties
        let times: Vec<f64> = (0..n).map(|_| 0.5 * (1 + rng.random_range(0..20)) as f64).collect();
        let obs: Vec<(f64, bool)> = times.iter().map(|&t| (t, false)).collect();
        let f = km(&obs);
        for x in (0..=22).map(|i| 0.25 + 0.5 * i as f64) {
            let empirical = times.iter().filter(|&&t| t <= x).count() as f64 / n as f64;
            if f.eval(x) != empirical {
                return Err(format!("sample {case}: F({x}) = {} vs empirical {empirical}", f.eval(x)));
            }
        }
    }
    Ok("3 fixtures exact; 100 uncensored samples equal the empirical CDF exactly".into())
}

// ---------------------------------------------------------------- 9

fn end_to_end() -> Outcome {
    let runs: Vec<AlgorithmRun> = generate(&GeneratorSpec::default()).unwrap().into_iter().map(|i| i.run).collect();
    let seeds: Vec<u64> = (0..20).collect();
    let config = GambletaConfig::new(default_allocator_set(1.0));
    let results = run_simulated(&runs, &seeds, true, &config).unwrap();
    let m = runs.len();
    let mut finals = [0.0; 3];
    let mut curve = vec![0.0; m];
    for r in &results {
        let series = r.overhead_series();
        for (slot, name) in ["gambleta", "uniform", "algorithm-1"].iter().enumerate() {
            let (_, c) = series.iter().find(|(n, _)| n == name).unwrap();
            finals[slot] += c[m - 1].unwrap() / seeds.len() as f64;
        }
        for (acc, v) in curve.iter_mut().zip(&series[0].1) {
            *acc += v.unwrap() / seeds.len() as f64;
        }
    }
    let tenth = m / 10;
    let first = curve[..tenth].iter().sum::<f64>() / tenth as f64;
    let last = curve[m - tenth..].iter().sum::<f64>() / tenth as f64;
    let detail = format!(
        "mean final overhead {:.3} vs uniform {:.3} vs complete-only {:.3}; first decile {first:.3}, last decile {last:.3}",
        finals[0], finals[1], finals[2]
    );
    check(finals[0] < finals[1] && finals[0] < finals[2] && last < first, detail)
}

// ---------------------------------------------------------------- 10

fn replay_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("run.toml");
    fs::write(
        &manifest,
        "mode = \"synthetic\"\nseeds = [3, 11]\noutput_dir = \"first\"\ninstances = 400\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_gambleta");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).env_remove("GAMBLETA_OUTPUT_DIR").output().unwrap();
        if out.status.success() {
            Ok(())
        } else {
            Err(format!("gambleta {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
        }
    };
    let m = manifest.to_str().unwrap();
    let trace = dir.path().join("trace.csv");
    let second = dir.path().join("second");
    run(&["run", m])?;
    run(&["export-traces", m, "--out", trace.to_str().unwrap()])?;
    run(&["replay", m, "--trace", trace.to_str().unwrap(), "--output-dir", second.to_str().unwrap()])?;
    let a = fs::read(dir.path().join("first/episodes.csv")).unwrap();
    let b = fs::read(second.join("episodes.csv")).unwrap();
    check(a == b, format!("episodes.csv {} bytes, replay identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failures = 0;
    let mut report = |id: &str, name: &str, outcome: Outcome, seconds: f64| {
        let (verdict, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:<3} {verdict} {name} ({seconds:.1}s): {detail}");
    };
    macro_rules! timed {
        ($e:expr) => {{
            let t = Instant::now();
            let v = $e;
            (v, t.elapsed().as_secs_f64())
        }};
    }

    let (o, s) = timed!(unbiased_estimator());
    report("1", "unbiased estimator", o, s);
    let (cells, sweep_s) = timed!(sweep());
    report("2", "regret within the unknown-bound bound", theorem2_compliance(&cells), sweep_s);
    report("3", "regret per trial decreases with M", sublinearity(&cells), sweep_s);
    report("4a", "inner epoch bound", epoch_bounds_inner(&cells), sweep_s);
    report("4b", "outer epoch count bound", epoch_bounds_outer(&cells), sweep_s);
    let (o, s) = timed!(static_oracle());
    report("5", "static execution oracle", o, s);
    let (o, s) = timed!(dynamic_oracle());
    report("6", "dynamic execution oracle", o, s);
    let (o, s) = timed!(quantile_oracle());
    report("7", "quantile allocator oracle", o, s);
    let (o, s) = timed!(kaplan_meier());
    report("8", "Kaplan-Meier", o, s);
    let (o, s) = timed!(end_to_end());
    report("9", "end-to-end overhead", o, s);
    let (o, s) = timed!(replay_determinism());
    report("10", "replay determinism", o, s);

    println!(
        "acceptance: {} failed, {:.1}s total",
        failures,
        started.elapsed().as_secs_f64()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
