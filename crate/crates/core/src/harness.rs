//! Op-stream files and the experiment drivers behind the CLI.
//!
//! A stream file starts with a header line `n=<bound> d=<bound>` followed by
//! one operation per line: `+ <id>`, `- <id>` or `?`. Blank lines and lines
//! starting with `#` are skipped.
//!
//! Every experiment takes one `u64` seed. Trial `t` draws from a ChaCha8
//! generator on stream `t` of that seed, so results do not depend on how
//! trials are scheduled across threads.

use crate::hashing::HashMode;
use crate::ibf::{CellWidths, Epsilon, Fallback, IbfError, IbfParams, InvertibleBloomFilter};
use crate::sketch::{PowerSumSketch, SketchError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use thiserror::Error;

/// Identifier bound in paper-replication mode, so ~100 summed ids fit a 16-bit idSum.
pub const PAPER_ID_BOUND: u64 = (1 << 12) - 1;
/// Largest straggler bound the stream runner accepts for the sketch.
pub const MAX_SKETCH_D: u32 = 1 << 16;
/// Identifier bound for saturation runs in default mode.
pub const DEFAULT_SATURATION_ID_BOUND: u64 = (1 << 20) - 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: {error}")]
    Sketch { line: usize, error: SketchError },
    #[error("line {line}: {error}")]
    Ibf { line: usize, error: IbfError },
    #[error(transparent)]
    Params(#[from] IbfError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert(u64),
    Delete(u64),
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpStream {
    pub n_bound: u64,
    pub d: u32,
    /// Operations with their 1-based source line.
    pub ops: Vec<(usize, Op)>,
}

impl OpStream {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(HarnessError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let (mut n_bound, mut d) = (None, None);
        for field in header.split_whitespace() {
            let bad = || HarnessError::Parse {
                line: hline,
                msg: format!("bad header field {field:?}"),
            };
            let (key, value) = field.split_once('=').ok_or_else(bad)?;
            match key {
                "n" => n_bound = Some(value.parse::<u64>().map_err(|_| bad())?),
                "d" => d = Some(value.parse::<u32>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let (Some(n_bound), Some(d)) = (n_bound, d) else {
            return Err(HarnessError::Parse {
                line: hline,
                msg: "header needs n=<bound> d=<bound>".into(),
            });
        };
        let mut ops = Vec::new();
        for (line, l) in lines {
            let op = if l == "?" {
                Op::Query
            } else {
                let (sign, rest) = if let Some(r) = l.strip_prefix('+') {
                    (true, r)
                } else if let Some(r) = l.strip_prefix('-').or_else(|| l.strip_prefix('\u{2212}')) {
                    (false, r)
                } else {
                    return Err(HarnessError::Parse {
                        line,
                        msg: format!("unknown operation {l:?}"),
                    });
                };
                let id: u64 = rest.trim().parse().map_err(|_| HarnessError::Parse {
                    line,
                    msg: format!("bad identifier {:?}", rest.trim()),
                })?;
                if id > n_bound {
                    return Err(HarnessError::Parse {
                        line,
                        msg: format!("identifier {id} exceeds n={n_bound}"),
                    });
                }
                if sign {
                    Op::Insert(id)
                } else {
                    Op::Delete(id)
                }
            };
            ops.push((line, op));
        }
        Ok(Self { n_bound, d, ops })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n={} d={}\n", self.n_bound, self.d);
        for (_, op) in &self.ops {
            match op {
                Op::Insert(x) => writeln!(out, "+ {x}"),
                Op::Delete(x) => writeln!(out, "- {x}"),
                Op::Query => writeln!(out, "?"),
            }
            .unwrap();
        }
        out
    }
}

/// Reads whitespace-separated identifiers; `#` starts a comment.
pub fn parse_id_set(text: &str) -> Result<BTreeSet<u64>, HarnessError> {
    let mut set = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap();
        for tok in content.split_whitespace() {
            let id = tok.parse().map_err(|_| HarnessError::Parse {
                line: i + 1,
                msg: format!("bad identifier {tok:?}"),
            })?;
            set.insert(id);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    Sketch,
    Ibf,
}

/// Result of one `?` in a stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryOutput {
    pub line: usize,
    pub status: &'static str,
    /// Identifier to signed multiplicity; the sketch only reports `+1`.
    pub stragglers: BTreeMap<u64, i64>,
}

/// Settings for IBF replays; the sketch needs only the stream header.
#[derive(Debug, Clone, Copy)]
pub struct IbfSettings {
    pub epsilon: Epsilon,
    pub mode: HashMode,
    pub seed: u64,
}

pub fn run_stream(
    structure: Structure,
    stream: &OpStream,
    ibf: IbfSettings,
) -> Result<Vec<QueryOutput>, HarnessError> {
    let mut out = Vec::new();
    match structure {
        Structure::Sketch => {
            if stream.d == 0 || stream.n_bound == 0 || stream.d > MAX_SKETCH_D {
                return Err(HarnessError::Invalid(format!(
                    "sketch needs 1 <= d <= {MAX_SKETCH_D} and n >= 1"
                )));
            }
            let mut s = PowerSumSketch::new(stream.d as usize, stream.n_bound);
            for &(line, op) in &stream.ops {
                let wrap = |error| HarnessError::Sketch { line, error };
                match op {
                    Op::Insert(x) => s.insert(x).map_err(wrap)?,
                    Op::Delete(x) => s.delete(x).map_err(wrap)?,
                    Op::Query => {
                        let list = s.list_stragglers().map_err(wrap)?;
                        out.push(QueryOutput {
                            line,
                            status: "complete",
                            stragglers: list.ids().iter().map(|&x| (x, 1)).collect(),
                        });
                    }
                }
            }
        }
        Structure::Ibf => {
            let params = IbfParams::new(
                stream.d,
                ibf.epsilon,
                stream.n_bound,
                ibf.mode,
                hash_seed(ibf.seed),
            )?;
            let mut f = InvertibleBloomFilter::new(params);
            for &(line, op) in &stream.ops {
                let wrap = |error| HarnessError::Ibf { line, error };
                match op {
                    Op::Insert(x) => f.insert(x).map_err(wrap)?,
                    Op::Delete(x) => f.delete(x).map_err(wrap)?,
                    Op::Query => {
                        let r = f.list_stragglers();
                        out.push(QueryOutput {
                            line,
                            status: if r.is_complete() {
                                "complete"
                            } else {
                                "incomplete"
                            },
                            stragglers: r.recovered,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 128-bit hash seed derived from a CLI seed.
pub fn hash_seed(seed: u64) -> [u8; 16] {
    ChaCha8Rng::seed_from_u64(seed).gen()
}

/// Generator for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy)]
pub struct SaturateConfig {
    pub cells: u32,
    pub k: u16,
    pub trials: u32,
    pub with_fallback: bool,
    pub mode: HashMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trials: u32,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub id_distribution: String,
    /// Saturation point of each trial, in trial order.
    pub rows: Vec<u32>,
    /// `(saturation point, frequency)`, ascending.
    pub histogram: Vec<(u32, u32)>,
}

impl TrialReport {
    pub fn from_rows(rows: Vec<u32>, id_distribution: String) -> Self {
        let (mean, std) = mean_std(&rows);
        let mut counts = BTreeMap::new();
        for &r in &rows {
            *counts.entry(r).or_insert(0u32) += 1;
        }
        Self {
            trials: rows.len() as u32,
            mean,
            std,
            id_distribution,
            rows,
            histogram: counts.into_iter().collect(),
        }
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bucket,frequency\n");
        for (b, f) in &self.histogram {
            writeln!(out, "{b},{f}").unwrap();
        }
        out
    }
}

pub fn mean_std(rows: &[u32]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| r as f64).sum::<f64>() / n;
    if rows.len() < 2 {
        return (mean, 0.0);
    }
    let var = rows.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Inserts distinct uniformly random ids into a fresh filter, decoding after
/// each, until decoding first fails. Each trial also draws its own hash seed.
pub fn saturate(cfg: &SaturateConfig) -> Result<TrialReport, HarnessError> {
    let id_bound = match cfg.mode {
        HashMode::PaperReplication => PAPER_ID_BOUND,
        HashMode::Default => DEFAULT_SATURATION_ID_BOUND,
    };
    let widths = CellWidths::for_mode(cfg.mode);
    let eps = Epsilon::new(1, 16)?;
    // d is nominal here: the load is driven past it on purpose
    let probe = IbfParams::custom(
        1, eps, cfg.k, cfg.cells, id_bound, widths, cfg.mode, [0; 16],
    )?;
    let fallback = if cfg.with_fallback {
        Fallback::Table
    } else {
        Fallback::None
    };
    let rows = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let params = IbfParams::custom(
                probe.d(),
                eps,
                cfg.k,
                cfg.cells,
                id_bound,
                widths,
                cfg.mode,
                rng.gen(),
            )
            .expect("validated above");
            let mut f = InvertibleBloomFilter::new(params);
            let mut seen = HashSet::new();
            let mut point = 0u32;
            while (seen.len() as u64) <= id_bound {
                let x = rng.gen_range(0..=id_bound);
                if !seen.insert(x) {
                    continue;
                }
                f.insert(x).expect("id within bound");
                if !f.list_stragglers_with(fallback).is_complete() {
                    break;
                }
                point += 1;
            }
            point
        })
        .collect();
    Ok(TrialReport::from_rows(
        rows,
        format!("uniform over [0, {id_bound}], without repeats"),
    ))
}

/// Which anomalies a failure-rate trial plants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyMix {
    Stragglers,
    FalseDeletions,
    /// Each anomaly is a straggler or a false deletion with equal odds.
    Mixed,
}

#[derive(Debug, Clone, Copy)]
pub struct FailureRateConfig {
    pub d: u32,
    pub epsilon: Epsilon,
    pub trials: u32,
    pub mix: AnomalyMix,
    /// Net anomalies per trial, at most `d`.
    pub anomalies: u32,
    /// Matched insert/delete pairs per trial.
    pub matched_pairs: u32,
    pub n_bound: u64,
    pub mode: HashMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReport {
    pub d: u32,
    pub epsilon: String,
    pub k: u16,
    pub m: u32,
    pub trials: u32,
    pub incomplete: u32,
    /// Complete decodes whose answer differed from the planted anomalies.
    pub wrong: u32,
    pub fraction: f64,
    /// Binomial standard error at the nominal rate, `sqrt(ε(1-ε)/trials)`.
    pub sigma: f64,
    /// `ε + 3σ`.
    pub bound: f64,
}

/// Builds default-sized filters, loads random streams with planted
/// anomalies, and counts decodes that are incomplete or wrong.
pub fn failure_rate(cfg: &FailureRateConfig) -> Result<FailureReport, HarnessError> {
    if cfg.anomalies > cfg.d {
        return Err(HarnessError::Invalid(format!(
            "{} anomalies exceed d = {}",
            cfg.anomalies, cfg.d
        )));
    }
    if (cfg.anomalies as u64) > cfg.n_bound {
        return Err(HarnessError::Invalid(
            "id range smaller than the anomaly count".into(),
        ));
    }
    let probe = IbfParams::new(cfg.d, cfg.epsilon, cfg.n_bound, cfg.mode, [0; 16])?;
    let outcomes: Vec<(bool, bool)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(cfg.seed, t);
            let params = IbfParams::new(cfg.d, cfg.epsilon, cfg.n_bound, cfg.mode, rng.gen())
                .expect("validated above");
            let mut f = InvertibleBloomFilter::new(params);
            let mut truth = BTreeMap::new();
            while truth.len() < cfg.anomalies as usize {
                let x = rng.gen_range(0..=cfg.n_bound);
                if truth.contains_key(&x) {
                    continue;
                }
                let sign = match cfg.mix {
                    AnomalyMix::Stragglers => 1,
                    AnomalyMix::FalseDeletions => -1,
                    AnomalyMix::Mixed => {
                        if rng.gen::<bool>() {
                            1
                        } else {
                            -1
                        }
                    }
                };
                truth.insert(x, sign);
            }
            let mut ops: Vec<(u64, i64)> = truth.iter().map(|(&x, &c)| (x, c)).collect();
            for _ in 0..cfg.matched_pairs {
                let x = rng.gen_range(0..=cfg.n_bound);
                ops.push((x, 1));
                ops.push((x, -1));
            }
            ops.shuffle(&mut rng);
            for (x, c) in ops {
                f.apply(x, c).expect("id within bound");
            }
            let r = f.list_stragglers();
            let incomplete = !r.is_complete();
            let wrong = r.is_complete() && r.recovered != truth;
            (incomplete, wrong)
        })
        .collect();
    let incomplete = outcomes.iter().filter(|o| o.0).count() as u32;
    let wrong = outcomes.iter().filter(|o| o.1).count() as u32;
    let eps = cfg.epsilon.value();
    let sigma = (eps * (1.0 - eps) / cfg.trials.max(1) as f64).sqrt();
    Ok(FailureReport {
        d: cfg.d,
        epsilon: cfg.epsilon.to_string(),
        k: probe.k(),
        m: probe.m(),
        trials: cfg.trials,
        incomplete,
        wrong,
        fraction: (incomplete + wrong) as f64 / cfg.trials.max(1) as f64,
        sigma,
        bound: eps + 3.0 * sigma,
    })
}
