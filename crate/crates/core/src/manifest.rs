//! TOML run manifests.
//!
//! ```toml
//! mode = "synthetic"            # synthetic | trace | external
//! seeds = [0, 1, 2]
//! output_dir = "out"
//!
//! [bandit]
//! kind = "exp3light-a"          # or "exp3light" with loss_bound
//!
//! [[allocators]]
//! kind = "uniform"
//!
//! [[allocators]]
//! kind = "quantile"
//! alpha = 0.5
//! dynamic = true
//!
//! [generator]
//! instances = 500
//! ```
//!
//! Exactly the table of the selected mode must be present (`[generator]` is
//! optional in synthetic mode and defaults to the standard benchmark).
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use toml::Spanned;

use crate::allocators::{default_allocator_set, AllocatorKind, AllocatorSpec, DEFAULT_UPDATE_PERIOD};
use crate::error::{Error, Result};
use crate::external::ExternalConfig;
use crate::gambleta::{BanditChoice, GambletaConfig};
use crate::synth::GeneratorSpec;

pub const DEFAULT_OUTPUT_DIR: &str = "gambleta-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Synthetic,
    Trace,
    External,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAllocator {
    kind: Spanned<String>,
    alpha: Option<f64>,
    dynamic: Option<bool>,
    update_period: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    path: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExternal {
    commands: Spanned<Vec<String>>,
    instances: String,
    quantum_ms: Option<Spanned<u64>>,
    success_codes: Option<Spanned<Vec<i32>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    mode: Spanned<Mode>,
    seeds: Spanned<Vec<u64>>,
    output_dir: Option<String>,
    instances: Option<Spanned<usize>>,
    reorder: Option<bool>,
    floor: Option<Spanned<f64>>,
    update_period: Option<Spanned<f64>>,
    neighborhood: Option<Spanned<usize>>,
    counterfactual: Option<bool>,
    bandit: Option<Spanned<BanditChoice>>,
    allocators: Option<Vec<Spanned<RawAllocator>>>,
    generator: Option<Spanned<GeneratorSpec>>,
    trace: Option<Spanned<RawTrace>>,
    external: Option<Spanned<RawExternal>>,
}

/// Where the instance stream comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Synthetic(GeneratorSpec),
    Trace(PathBuf),
    External { config: ExternalConfig, instances: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub source: Source,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Use only the first `instances` instances of the source.
    pub instances: Option<usize>,
    /// Play a seeded random reordering of the stream for each seed.
    pub reorder: bool,
    pub config: GambletaConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

fn at(text: &str, span: Range<usize>, message: impl Into<String>) -> Error {
    Error::Manifest {
        line: line_of(text, span.start),
        message: message.into(),
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses and validates a manifest; diagnostics carry the offending line.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| Error::Manifest {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().trim_end().to_string(),
        })?;
        let resolve = |p: &str| base.join(p);

        if raw.seeds.get_ref().is_empty() {
            return Err(at(text, raw.seeds.span(), "seeds must not be empty"));
        }

        let mode = *raw.mode.get_ref();
        let present = [
            (Mode::Synthetic, raw.generator.as_ref().map(Spanned::span), "generator"),
            (Mode::Trace, raw.trace.as_ref().map(Spanned::span), "trace"),
            (Mode::External, raw.external.as_ref().map(Spanned::span), "external"),
        ];
        for (m, span, table) in &present {
            if *m != mode {
                if let Some(span) = span {
                    return Err(at(text, span.clone(), format!("[{table}] does not belong to mode {mode:?}")));
                }
            }
        }

        let source = match mode {
            Mode::Synthetic => {
                let spec = raw.generator.map(|g| {
                    let span = g.span();
                    (g.into_inner(), span)
                });
                match spec {
                    Some((spec, span)) => {
                        spec.validate().map_err(|e| at(text, span, e.to_string()))?;
                        Source::Synthetic(spec)
                    }
                    None => Source::Synthetic(GeneratorSpec::default()),
                }
            }
            Mode::Trace => match raw.trace {
                Some(t) => Source::Trace(resolve(&t.get_ref().path)),
                None => return Err(at(text, raw.mode.span(), "mode trace requires a [trace] table")),
            },
            Mode::External => {
                let Some(ext) = raw.external else {
                    return Err(at(text, raw.mode.span(), "mode external requires an [external] table"));
                };
                let ext = ext.into_inner();
                let mut config = ExternalConfig::new(ext.commands.get_ref().clone(), Duration::from_millis(100));
                if let Some(q) = &ext.quantum_ms {
                    config.quantum = Duration::from_millis(*q.get_ref());
                    if *q.get_ref() == 0 {
                        return Err(at(text, q.span(), "quantum_ms must be positive"));
                    }
                }
                if let Some(codes) = &ext.success_codes {
                    config.success_codes = codes.get_ref().clone();
                }
                config
                    .validate()
                    .map_err(|e| at(text, ext.commands.span(), e.to_string()))?;
                Source::External {
                    config,
                    instances: resolve(&ext.instances),
                }
            }
        };

        let update_period = match &raw.update_period {
            Some(p) if !(*p.get_ref() > 0.0) => return Err(at(text, p.span(), "update_period must be positive")),
            Some(p) => *p.get_ref(),
            None => DEFAULT_UPDATE_PERIOD,
        };

        let allocators = match raw.allocators {
            None => default_allocator_set(update_period),
            Some(list) if list.is_empty() => {
                return Err(Error::Manifest {
                    line: 1,
                    message: "allocators must not be empty".into(),
                })
            }
            Some(list) => list
                .into_iter()
                .map(|a| {
                    let span = a.span();
                    let a = a.into_inner();
                    let kind = match a.kind.get_ref().as_str() {
                        "uniform" => {
                            if a.alpha.is_some() {
                                return Err(at(text, span, "the uniform allocator takes no alpha"));
                            }
                            AllocatorKind::Uniform
                        }
                        "quantile" => match a.alpha {
                            Some(alpha) => AllocatorKind::Quantile { alpha },
                            None => return Err(at(text, span, "quantile allocators need alpha")),
                        },
                        other => {
                            return Err(at(
                                text,
                                a.kind.span(),
                                format!("unknown allocator kind `{other}`, expected uniform or quantile"),
                            ))
                        }
                    };
                    let spec = AllocatorSpec {
                        kind,
                        dynamic: a.dynamic.unwrap_or(false),
                        update_period: a.update_period.unwrap_or(update_period),
                    };
                    spec.validate().map_err(|e| at(text, span, e.to_string()))?;
                    Ok(spec)
                })
                .collect::<Result<Vec<_>>>()?,
        };

        let mut config = GambletaConfig::new(allocators);
        if let Some(b) = raw.bandit {
            if let BanditChoice::Exp3Light { loss_bound } = b.get_ref() {
                if !(loss_bound.is_finite() && *loss_bound > 0.0) {
                    return Err(at(text, b.span(), "loss_bound must be finite and positive"));
                }
            }
            config.bandit = b.into_inner();
        }
        if let Some(f) = &raw.floor {
            config.floor = *f.get_ref();
        }
        if let Some(n) = &raw.neighborhood {
            config.neighborhood = *n.get_ref();
            if config.neighborhood == 0 {
                return Err(at(text, n.span(), "neighborhood must be at least 1"));
            }
        }
        config.counterfactual = raw.counterfactual.unwrap_or(true);
        // a trace's algorithm count is only known once it is read
        let n_algorithms = match &source {
            Source::Synthetic(_) => 2,
            Source::Trace(_) => 1,
            Source::External { config, .. } => config.commands.len(),
        };
        if let Some(f) = &raw.floor {
            let floor = *f.get_ref();
            if !(floor > 0.0 && floor * n_algorithms as f64 <= 1.0) {
                return Err(at(text, f.span(), format!("floor {floor} is infeasible")));
            }
        }

        let instances = match &raw.instances {
            Some(m) if *m.get_ref() == 0 => return Err(at(text, m.span(), "instances must be at least 1")),
            Some(m) => Some(*m.get_ref()),
            None => None,
        };

        Ok(Self {
            source,
            seeds: raw.seeds.into_inner(),
            output_dir: resolve(raw.output_dir.as_deref().unwrap_or(DEFAULT_OUTPUT_DIR)),
            instances,
            reorder: raw.reorder.unwrap_or(true),
            config,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.source {
            Source::Synthetic(_) => Mode::Synthetic,
            Source::Trace(_) => Mode::Trace,
            Source::External { .. } => Mode::External,
        }
    }
}
