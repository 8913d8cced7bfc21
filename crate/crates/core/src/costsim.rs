//! Window-count cost model for the two engines.
//!
//! The selection engine's window count depends only on how many new passages
//! enter the queue after each window, so a trial replays that arithmetic with
//! per-window selected counts drawn from a [`SelectionProfile`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::windowing::{plan_ranking_windows, window_count_bounds, ConfigError, WindowConfig, WindowTrace};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("profile count {count} exceeds window size {window}")]
    SupportExceedsWindow { count: usize, window: usize },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("reading profile {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Distribution of the number of passages selected in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionProfile {
    Never,
    Always,
    /// Every passage in a window is selected independently with probability `p`.
    Bernoulli(f64),
    /// Selected count → probability.
    Histogram(BTreeMap<usize, f64>),
}

#[derive(Deserialize)]
struct HistogramFile {
    counts: BTreeMap<String, f64>,
}

impl SelectionProfile {
    pub fn validate(&self, window: usize) -> Result<(), SimError> {
        match self {
            SelectionProfile::Never | SelectionProfile::Always => Ok(()),
            SelectionProfile::Bernoulli(p) => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(SimError::InvalidProfile(format!("bernoulli p={p} outside [0, 1]")))
                }
            }
            SelectionProfile::Histogram(counts) => {
                if let Some((&count, _)) = counts.iter().find(|(&c, _)| c > window) {
                    return Err(SimError::SupportExceedsWindow { count, window });
                }
                if let Some((c, p)) = counts.iter().find(|(_, p)| !p.is_finite() || **p < 0.0) {
                    return Err(SimError::InvalidProfile(format!("probability {p} for count {c}")));
                }
                let total: f64 = counts.values().sum();
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return Err(SimError::InvalidProfile(format!("probabilities sum to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Parses `{"counts": {"0": p0, "1": p1, ...}}`.
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let file: HistogramFile =
            serde_json::from_str(text).map_err(|e| SimError::InvalidProfile(e.to_string()))?;
        let mut counts = BTreeMap::new();
        for (k, p) in file.counts {
            let count = k
                .trim()
                .parse::<usize>()
                .map_err(|_| SimError::InvalidProfile(format!("count key {k:?} is not a non-negative integer")))?;
            *counts.entry(count).or_insert(0.0) += p;
        }
        Ok(SelectionProfile::Histogram(counts))
    }

    /// `never`, `always`, `bernoulli:P`, or a path to a histogram JSON file.
    pub fn from_spec(spec: &str) -> Result<Self, SimError> {
        match spec {
            "never" => return Ok(SelectionProfile::Never),
            "always" => return Ok(SelectionProfile::Always),
            _ => {}
        }
        if let Some(p) = spec.strip_prefix("bernoulli:") {
            let p = p
                .parse::<f64>()
                .map_err(|_| SimError::InvalidProfile(format!("bad bernoulli probability {p:?}")))?;
            return Ok(SelectionProfile::Bernoulli(p));
        }
        let text = std::fs::read_to_string(Path::new(spec)).map_err(|source| SimError::Io {
            path: spec.to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn describe(&self) -> String {
        match self {
            SelectionProfile::Never => "never".into(),
            SelectionProfile::Always => "always".into(),
            SelectionProfile::Bernoulli(p) => format!("bernoulli:{p}"),
            SelectionProfile::Histogram(h) => {
                let parts: Vec<String> = h.iter().map(|(c, p)| format!("{c}:{p}")).collect();
                format!("histogram{{{}}}", parts.join(","))
            }
        }
    }
}

/// How a window's selections split between carried and fresh passages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CarryMode {
    /// Selected positions are a uniform subset of the window.
    #[default]
    Independent,
    /// Each carried passage is reselected with probability `p` before the
    /// remaining selections fall on fresh passages.
    Sticky { p: f64 },
}

/// Number of newly admitted (fresh) passages in a window of `carried + fresh`.
fn admissions<R: Rng>(
    rng: &mut R,
    profile: &SelectionProfile,
    mode: CarryMode,
    carried: usize,
    fresh: usize,
) -> usize {
    let n = carried + fresh;
    match profile {
        SelectionProfile::Never => return 0,
        SelectionProfile::Always => return fresh,
        SelectionProfile::Bernoulli(p) => return (0..fresh).filter(|_| rng.gen_bool(*p)).count(),
        SelectionProfile::Histogram(_) => {}
    }
    let k = draw_count(rng, profile).min(n);
    match mode {
        CarryMode::Independent => sample(rng, n, k).iter().filter(|&i| i >= carried).count(),
        CarryMode::Sticky { p } => {
            let reselected = (0..carried).filter(|_| rng.gen_bool(p)).count().min(k);
            (k - reselected).min(fresh)
        }
    }
}

fn draw_count<R: Rng>(rng: &mut R, profile: &SelectionProfile) -> usize {
    let SelectionProfile::Histogram(h) = profile else {
        return 0;
    };
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (&c, &p) in h {
        acc += p;
        if u < acc {
            return c;
        }
    }
    h.iter().rev().find(|(_, &p)| p > 0.0).map(|(&c, _)| c).unwrap_or(0)
}

/// Runs the selection engine's window-advance arithmetic, asking `admit`
/// for the number of newly queued passages after each window.
fn advance(cfg: &WindowConfig, mut admit: impl FnMut(usize, usize, usize) -> usize) -> usize {
    let (m, w, s) = (cfg.depth, cfg.window, cfg.stride);
    let (mut next, mut queue, mut windows) = (0, 0, 0);
    while next < m {
        let carried = if windows == 0 { 0 } else { s.min(queue) };
        let fresh = (w - carried).min(m - next);
        next += fresh;
        queue += admit(windows, carried, fresh).min(fresh);
        windows += 1;
    }
    windows
}

/// Window count of a selection run whose windows admitted `admitted[i]` new
/// passages; windows beyond the slice admit none.
pub fn replay_window_count(cfg: &WindowConfig, admitted: &[usize]) -> usize {
    advance(cfg, |i, _, _| admitted.get(i).copied().unwrap_or(0))
}

/// New queue members per window of a selection trace.
pub fn trace_admissions(trace: &WindowTrace) -> Vec<usize> {
    let mut prev = 0;
    trace
        .windows
        .iter()
        .map(|w| {
            let now = w.state_after.len();
            let d = now.saturating_sub(prev);
            prev = now;
            d
        })
        .collect()
}

/// Window count of the back-to-front ranking plan.
pub fn ranking_cost(cfg: &WindowConfig) -> usize {
    plan_ranking_windows(cfg).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: WindowConfig,
    pub profile: String,
    pub carry_mode: CarryMode,
    pub trials: usize,
    pub seed: u64,
    pub mean_windows: f64,
    pub std_dev: f64,
    pub ci95: (f64, f64),
    /// Window count → number of trials.
    pub histogram: BTreeMap<usize, usize>,
    pub bounds: (usize, usize),
    pub ranking_windows: usize,
}

impl SimReport {
    pub fn to_table(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "config         M={} w={} s={}", c.depth, c.window, c.stride);
        let _ = writeln!(out, "profile        {}", self.profile);
        let _ = writeln!(out, "trials         {} (seed {})", self.trials, self.seed);
        let _ = writeln!(out, "ranking        {} windows", self.ranking_windows);
        let _ = writeln!(out, "selection      mean {:.4} sd {:.4}", self.mean_windows, self.std_dev);
        let _ = writeln!(out, "ci95           [{:.4}, {:.4}]", self.ci95.0, self.ci95.1);
        let _ = writeln!(out, "bounds         [{}, {}]", self.bounds.0, self.bounds.1);
        let _ = writeln!(out, "windows\ttrials");
        for (k, n) in &self.histogram {
            let _ = writeln!(out, "{k}\t{n}");
        }
        out
    }
}

pub fn simulate(
    cfg: &WindowConfig,
    profile: &SelectionProfile,
    trials: usize,
    seed: u64,
) -> Result<SimReport, SimError> {
    simulate_with(cfg, profile, trials, seed, CarryMode::Independent)
}

/// Monte Carlo window counts. Trial `i` draws from its own ChaCha stream, so
/// results do not depend on the rayon pool size.
pub fn simulate_with(
    cfg: &WindowConfig,
    profile: &SelectionProfile,
    trials: usize,
    seed: u64,
    mode: CarryMode,
) -> Result<SimReport, SimError> {
    cfg.validate()?;
    profile.validate(cfg.window)?;
    if let CarryMode::Sticky { p } = mode {
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::InvalidProfile(format!("sticky p={p} outside [0, 1]")));
        }
    }
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let counts: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            advance(cfg, |_, carried, fresh| admissions(&mut rng, profile, mode, carried, fresh))
        })
        .collect();

    let n = trials as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = if trials > 1 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std_dev = var.sqrt();
    let half = 1.96 * std_dev / n.sqrt();
    let mut histogram = BTreeMap::new();
    for c in counts {
        *histogram.entry(c).or_insert(0) += 1;
    }
    Ok(SimReport {
        config: *cfg,
        profile: profile.describe(),
        carry_mode: mode,
        trials,
        seed,
        mean_windows: mean,
        std_dev,
        ci95: (mean - half, mean + half),
        histogram,
        bounds: window_count_bounds(cfg),
        ranking_windows: ranking_cost(cfg),
    })
}
