//! Real-process backend: the algorithms are child processes time-sliced on
//! one machine by suspending and resuming them.
//!
//! Each cycle gives algorithm `k` a slice of `quantum * s_k` seconds of CPU
//! time. A slice also ends once as much wall-clock time has passed, so a
//! process that blocks cannot hold the machine. The first process to exit
//! with a success status wins; the rest are killed and reported censored at
//! the CPU time they consumed. Linux only: CPU time is read from `/proc`.

use std::fs;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::allocators::{AllocatorSpec, Share};
use crate::error::{invalid, Error, Result};
use crate::exec::ExecutionResult;
use crate::gambleta::PortfolioBackend;
use crate::trace::InstanceFile;

/// Placeholder replaced by the instance path in command templates.
pub const INSTANCE_PLACEHOLDER: &str = "{instance}";

/// Lower bound on reported CPU times, which must be positive.
const CLOCK_RESOLUTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalConfig {
    /// One shell-quoted command template per algorithm.
    pub commands: Vec<String>,
    pub quantum: Duration,
    /// Exit codes that count as solving the instance.
    pub success_codes: Vec<i32>,
}

impl ExternalConfig {
    pub fn new(commands: Vec<String>, quantum: Duration) -> Self {
        Self {
            commands,
            quantum,
            success_codes: vec![0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.commands.is_empty() {
            return Err(invalid("at least one command is required"));
        }
        if self.quantum.is_zero() {
            return Err(invalid("quantum must be positive"));
        }
        if self.success_codes.is_empty() {
            return Err(invalid("at least one success exit code is required"));
        }
        for c in &self.commands {
            command_line(c, "")?;
        }
        Ok(())
    }

    /// Argument vectors for one instance.
    pub fn argv(&self, instance_path: &str) -> Result<Vec<Vec<String>>> {
        self.commands.iter().map(|c| command_line(c, instance_path)).collect()
    }
}

/// Splits a template with shell quoting rules and substitutes the instance
/// path into every word.
pub fn command_line(template: &str, instance_path: &str) -> Result<Vec<String>> {
    let words = shlex::split(template).ok_or_else(|| invalid(format!("unbalanced quoting in `{template}`")))?;
    if words.is_empty() {
        return Err(invalid("empty command template"));
    }
    Ok(words
        .into_iter()
        .map(|w| w.replace(INSTANCE_PLACEHOLDER, instance_path))
        .collect())
}

struct Proc {
    pid: libc::pid_t,
    state: State,
    cpu: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Running,
    Exited { success: bool },
}

fn signal_group(pid: libc::pid_t, sig: libc::c_int) {
    // SAFETY: kill has no memory-safety preconditions; a stale group only
    // yields ESRCH.
    unsafe {
        libc::kill(-pid, sig);
    }
}

/// CPU time of a live process in seconds.
fn cpu_seconds(pid: libc::pid_t) -> Option<f64> {
    if let Ok(s) = fs::read_to_string(format!("/proc/{pid}/schedstat")) {
        if let Some(ns) = s.split_whitespace().next().and_then(|f| f.parse::<u64>().ok()) {
            return Some(ns as f64 * 1e-9);
        }
    }
    let stat = fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // fields after the parenthesized command name start at field 3
    let rest = &stat[stat.rfind(')')? + 2..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = fields.get(11)?.parse().ok()?;
    let stime: f64 = fields.get(12)?.parse().ok()?;
    // SAFETY: sysconf reads a configuration value.
    let ticks = unsafe { libc::sysconf(libc::_SC_CLK_TCK) } as f64;
    Some((utime + stime) / ticks)
}

fn rusage_seconds(r: &libc::rusage) -> f64 {
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    tv(r.ru_utime) + tv(r.ru_stime)
}

/// Non-blocking reap. Returns the exit code (or `None` for a signal death)
/// and the CPU time from the kernel's accounting.
fn try_reap(pid: libc::pid_t, block: bool) -> Option<(Option<i32>, f64)> {
    let mut status = 0;
    // SAFETY: rusage is plain old data and fully written by wait4 on success.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let options = if block { 0 } else { libc::WNOHANG };
    // SAFETY: status and usage point to valid, writable locals.
    let r = unsafe { libc::wait4(pid, &mut status, options, &mut usage) };
    if r != pid {
        return None;
    }
    let code = libc::WIFEXITED(status).then(|| libc::WEXITSTATUS(status));
    Some((code, rusage_seconds(&usage)))
}

fn kill_all(procs: &mut [Proc]) {
    for p in procs.iter_mut().filter(|p| p.state == State::Running) {
        if let Some(cpu) = cpu_seconds(p.pid) {
            p.cpu = cpu;
        }
        signal_group(p.pid, libc::SIGKILL);
        signal_group(p.pid, libc::SIGCONT);
        if let Some((_, cpu)) = try_reap(p.pid, true) {
            p.cpu = p.cpu.max(cpu);
        }
        p.state = State::Exited { success: false };
    }
}

fn spawn(argv: &[String]) -> Result<libc::pid_t> {
    let child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()
        .map_err(|source| Error::Spawn {
            command: argv.join(" "),
            source,
        })?;
    let pid = child.id() as libc::pid_t;
    signal_group(pid, libc::SIGSTOP);
    Ok(pid)
}

/// Runs one instance with a fixed share. CPU accounting covers each
/// command's own process, not processes it spawns.
pub fn execute_external(
    instance_id: &str,
    features: &[f64],
    argvs: &[Vec<String>],
    share: &Share,
    quantum: Duration,
    success_codes: &[i32],
) -> Result<ExecutionResult> {
    if argvs.len() != share.len() {
        return Err(invalid(format!(
            "share covers {} algorithms, {} commands given",
            share.len(),
            argvs.len()
        )));
    }
    if argvs.iter().any(Vec::is_empty) {
        return Err(invalid("empty argument vector"));
    }
    if quantum.is_zero() {
        return Err(invalid("quantum must be positive"));
    }
    let start = Instant::now();
    let mut procs: Vec<Proc> = Vec::with_capacity(argvs.len());
    for argv in argvs {
        match spawn(argv) {
            Ok(pid) => procs.push(Proc {
                pid,
                state: State::Running,
                cpu: 0.0,
            }),
            Err(e) => {
                kill_all(&mut procs);
                return Err(e);
            }
        }
    }

    let quantum = quantum.as_secs_f64();
    let winner = 'cycles: loop {
        if procs.iter().all(|p| p.state != State::Running) {
            break None;
        }
        for (k, &s) in share.as_slice().iter().enumerate() {
            if procs[k].state != State::Running {
                continue;
            }
            let slice = quantum * s;
            let pid = procs[k].pid;
            let cpu0 = cpu_seconds(pid).unwrap_or(procs[k].cpu);
            let t0 = Instant::now();
            signal_group(pid, libc::SIGCONT);
            loop {
                if let Some((code, cpu)) = try_reap(pid, false) {
                    let success = code.is_some_and(|c| success_codes.contains(&c));
                    procs[k].cpu = cpu;
                    procs[k].state = State::Exited { success };
                    if success {
                        break 'cycles Some(k);
                    }
                    break;
                }
                let used_cpu = cpu_seconds(pid).map_or(0.0, |c| c - cpu0);
                let used_wall = t0.elapsed().as_secs_f64();
                if used_cpu >= slice || used_wall >= slice {
                    signal_group(pid, libc::SIGSTOP);
                    procs[k].cpu = cpu_seconds(pid).unwrap_or(cpu0 + used_cpu);
                    break;
                }
                let left = slice - used_cpu.max(used_wall);
                thread::sleep(Duration::from_secs_f64((left / 4.0).clamp(1e-4, 5e-3)));
            }
        }
    };
    let wall_clock = start.elapsed().as_secs_f64();
    kill_all(&mut procs);
    let Some(winner) = winner else {
        return Err(Error::AllFailed(instance_id.to_string()));
    };
    let consumed = procs.iter().map(|p| p.cpu.max(CLOCK_RESOLUTION)).collect();
    Ok(ExecutionResult::from_parts(
        instance_id,
        features,
        wall_clock,
        winner,
        consumed,
        vec![(0.0, share.clone())],
    ))
}

/// Runs instance files through the configured commands. Shares are fixed at
/// the allocator's initial decision for each instance.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub config: ExternalConfig,
}

impl PortfolioBackend for ExternalBackend {
    type Instance = InstanceFile;

    fn n_algorithms(&self) -> usize {
        self.config.commands.len()
    }

    fn instance_id<'a>(&self, instance: &'a InstanceFile) -> &'a str {
        &instance.instance_id
    }

    fn features<'a>(&self, instance: &'a InstanceFile) -> &'a [f64] {
        &instance.features
    }

    fn oracle_time(&self, _instance: &InstanceFile) -> Option<f64> {
        None
    }

    fn execute(
        &mut self,
        instance: &InstanceFile,
        _spec: &AllocatorSpec,
        share_for: &mut dyn FnMut(f64, &[f64]) -> Share,
    ) -> Result<ExecutionResult> {
        let share = share_for(0.0, &vec![0.0; self.n_algorithms()]);
        execute_external(
            &instance.instance_id,
            &instance.features,
            &self.config.argv(&instance.path)?,
            &share,
            self.config.quantum,
            &self.config.success_codes,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates() {
        assert_eq!(
            command_line("solver --in '{instance}' -q", "a b.cnf").unwrap(),
            vec!["solver", "--in", "a b.cnf", "-q"]
        );
        assert!(command_line("solver 'open", "x").is_err());
        assert!(command_line("   ", "x").is_err());
    }

    #[test]
    fn single_command_is_a_timed_run() {
        let argv = vec![vec!["true".to_string()]];
        let r = execute_external("i", &[], &argv, &Share::uniform(1), Duration::from_millis(50), &[0]).unwrap();
        assert_eq!(r.winner, 0);
        assert!(r.wall_clock < 1.0);
        assert!(!r.observations[0].censored);
    }

    #[test]
    fn missing_command() {
        let argv = vec![vec!["true".to_string()], vec!["/nonexistent/solver".to_string()]];
        let err = execute_external("i", &[], &argv, &Share::uniform(2), Duration::from_millis(10), &[0]);
        assert!(matches!(err, Err(Error::Spawn { .. })));
    }

    #[test]
    fn all_fail() {
        let argv = vec![vec!["false".to_string()], vec!["false".to_string()]];
        let err = execute_external("i", &[], &argv, &Share::uniform(2), Duration::from_millis(10), &[0]);
        assert!(matches!(err, Err(Error::AllFailed(_))));
    }

    #[test]
    fn failure_does_not_win() {
        let argv = vec![
            vec!["false".to_string()],
            vec!["sh".to_string(), "-c".to_string(), "exit 20".to_string()],
        ];
        let r = execute_external("i", &[], &argv, &Share::uniform(2), Duration::from_millis(10), &[10, 20]).unwrap();
        assert_eq!(r.winner, 1);
    }
}
