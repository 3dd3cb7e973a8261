//! Nanopore sequencer with adaptive sampling.
//!
//! Molecules are drawn with replacement in proportion to their abundance.
//! The first nucleotides of each read are compared against the current
//! targets; a read that matches is sequenced to the end, anything else is
//! ejected after `decision_nt` nucleotides and returned to the pool intact.
//! The pool is only ever borrowed immutably.

mod channel;
mod telemetry;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use uuid::Uuid;

use crate::align::best_fit_distance;
use crate::pool::{Pool, PoolEntry, ReferenceDictionary};

pub use channel::{apply_errors, ErrorChannel, ErrorModel, MAX_ERROR_RATE};
pub use telemetry::{read_tsv, write_tsv, TelemetryRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("session already stopped")]
    SessionStopped,
    #[error("reference {0} is not registered or has no molecules in the pool")]
    UnknownReference(String),
    #[error("pool is empty")]
    EmptyPool,
    #[error("telemetry line {line}: {msg}")]
    Telemetry { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    /// Nucleotides basecalled before the match is attempted.
    pub buffer_nt: usize,
    /// Nucleotides sequenced by the time a keep/eject decision takes effect.
    pub decision_nt: usize,
    /// Largest accepted edit distance, as a fraction of the target length.
    pub match_threshold: f64,
    /// Accepted reads wanted per molecule of a target.
    pub coverage_target: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            buffer_nt: 400,
            decision_nt: 800,
            match_threshold: 0.25,
            coverage_target: 10.0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.buffer_nt > self.decision_nt || self.decision_nt > 1000 {
            return Err(SimError::BadParams(format!(
                "need buffer_nt <= decision_nt <= 1000, got {} and {}",
                self.buffer_nt, self.decision_nt
            )));
        }
        if !(0.0..1.0).contains(&self.match_threshold) {
            return Err(SimError::BadParams(
                "match_threshold must be in [0, 1)".into(),
            ));
        }
        if !(self.coverage_target > 0.0 && self.coverage_target.is_finite()) {
            return Err(SimError::BadParams(
                "coverage_target must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn max_distance(&self, target_len: usize) -> usize {
        (self.match_threshold * target_len as f64).floor() as usize
    }

    /// How far a target may drift from the read start.
    pub fn band(&self, target_len: usize) -> usize {
        (self.match_threshold * target_len as f64).ceil() as usize + 2
    }

    /// Prefix length the decision for a target of this length looks at.
    pub fn window(&self, target_len: usize) -> usize {
        (target_len + self.band(target_len)).min(self.buffer_nt)
    }
}

/// An `(image, layer)` reference, written `image/layer`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TargetRef {
    pub image_id: String,
    pub layer: usize,
}

impl TargetRef {
    pub fn new(image_id: impl Into<String>, layer: usize) -> Self {
        Self {
            image_id: image_id.into(),
            layer,
        }
    }
}

impl fmt::Display for TargetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.image_id, self.layer)
    }
}

impl FromStr for TargetRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (id, k) = s
            .rsplit_once('/')
            .ok_or_else(|| format!("bad reference id {s:?}"))?;
        let layer = k.parse().map_err(|_| format!("bad layer in {s:?}"))?;
        if id.is_empty() {
            return Err(format!("empty image id in {s:?}"));
        }
        Ok(Self::new(id, layer))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub keep: bool,
    /// Index of the best-matching target, if any target was given.
    pub target: Option<usize>,
    pub distance: Option<usize>,
}

/// Keep-or-eject for a read prefix.
///
/// Each target is fitted anywhere inside the first `|target| + band`
/// nucleotides of the prefix; the read is kept when the best distance is
/// within `match_threshold · |target|`. No targets means eject.
pub fn decide(prefix: &[u8], targets: &[&[u8]], params: &SamplingParams) -> Decision {
    let mut best: Option<(usize, usize, bool)> = None;
    for (i, t) in targets.iter().enumerate() {
        let window = &prefix[..prefix.len().min(params.window(t.len()))];
        let d = best_fit_distance(t, window);
        let ok = d <= params.max_distance(t.len());
        let better = match best {
            None => true,
            Some((_, bd, bok)) => (ok && !bok) || (ok == bok && d < bd),
        };
        if better {
            best = Some((i, d, ok));
        }
    }
    match best {
        Some((i, d, ok)) => Decision {
            keep: ok,
            target: Some(i),
            distance: Some(d),
        },
        None => Decision {
            keep: false,
            target: None,
            distance: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Accepted,
    Ejected,
}

impl ReadOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReadOutcome::Accepted => "accepted",
            ReadOutcome::Ejected => "ejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadEvent {
    pub idx: u64,
    pub molecule_id: Uuid,
    pub decision: ReadOutcome,
    pub sequenced_nt: u64,
    /// The full noisy read, present exactly for accepted reads.
    pub noisy: Option<Vec<u8>>,
    /// Matching target for accepted reads; the first active target otherwise.
    pub target: Option<TargetRef>,
}

impl ReadEvent {
    pub fn record(&self) -> TelemetryRecord {
        TelemetryRecord {
            idx: self.idx,
            molecule_id: self.molecule_id,
            decision: self.decision,
            sequenced_nt: self.sequenced_nt,
            target: self.target.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionTelemetry {
    pub events: Vec<ReadEvent>,
    pub accepted: BTreeMap<TargetRef, usize>,
    pub total_nt: u64,
}

impl SessionTelemetry {
    fn push(&mut self, event: ReadEvent) {
        self.total_nt += event.sequenced_nt;
        if event.decision == ReadOutcome::Accepted {
            if let Some(t) = &event.target {
                *self.accepted.entry(t.clone()).or_insert(0) += 1;
            }
        }
        self.events.push(event);
    }

    pub fn ejections(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.decision == ReadOutcome::Ejected)
            .count()
    }

    pub fn accepted_for(&self, target: &TargetRef) -> usize {
        self.accepted.get(target).copied().unwrap_or(0)
    }

    /// Accepted reads for `target` in event order.
    pub fn reads_for<'a>(&'a self, target: &'a TargetRef) -> impl Iterator<Item = &'a [u8]> + 'a {
        self.events
            .iter()
            .filter_map(move |e| match (&e.noisy, &e.target) {
                (Some(seq), Some(t)) if t == target => Some(seq.as_slice()),
                _ => None,
            })
    }

    pub fn records(&self) -> Vec<TelemetryRecord> {
        self.events.iter().map(ReadEvent::record).collect()
    }
}

/// A stepping sequencer over a borrowed pool.
pub struct Sequencer<'p> {
    dict: &'p ReferenceDictionary,
    params: SamplingParams,
    entries: Vec<&'p PoolEntry>,
    catalog: BTreeMap<(String, usize), usize>,
    sampler: WeightedIndex<u64>,
    draw_rng: ChaCha8Rng,
    channel: ErrorChannel,
    targets: Vec<(TargetRef, Vec<u8>)>,
    telemetry: SessionTelemetry,
    stopped: bool,
    buf: Vec<u8>,
}

impl<'p> Sequencer<'p> {
    pub fn new(
        pool: &'p Pool,
        dict: &'p ReferenceDictionary,
        params: SamplingParams,
        model: ErrorModel,
        seed: u64,
    ) -> Result<Self, SimError> {
        params.validate()?;
        let entries: Vec<&PoolEntry> = pool.iter().collect();
        if entries.is_empty() {
            return Err(SimError::EmptyPool);
        }
        let sampler = WeightedIndex::new(entries.iter().map(|e| e.abundance))
            .map_err(|e| SimError::BadParams(e.to_string()))?;
        Ok(Self {
            dict,
            params,
            catalog: pool.catalog(),
            entries,
            sampler,
            draw_rng: ChaCha8Rng::seed_from_u64(seed),
            channel: ErrorChannel::new(model),
            targets: Vec::new(),
            telemetry: SessionTelemetry::default(),
            stopped: false,
            buf: Vec::with_capacity(2048),
        })
    }

    pub fn params(&self) -> &SamplingParams {
        &self.params
    }

    /// Distinct molecules carrying `target`'s reference.
    pub fn molecule_count(&self, target: &TargetRef) -> usize {
        self.catalog
            .get(&(target.image_id.clone(), target.layer))
            .copied()
            .unwrap_or(0)
    }

    /// Accepted reads needed to reach the coverage target for `target`.
    pub fn coverage_quota(&self, target: &TargetRef) -> usize {
        (self.params.coverage_target * self.molecule_count(target) as f64).ceil() as usize
    }

    fn resolve(&self, target: &TargetRef) -> Result<Vec<u8>, SimError> {
        let seq = self
            .dict
            .lookup(&target.image_id, target.layer)
            .map_err(|_| SimError::UnknownReference(target.to_string()))?;
        if self.molecule_count(target) == 0 {
            return Err(SimError::UnknownReference(target.to_string()));
        }
        Ok(seq.to_vec())
    }

    /// Replaces the active targets. Takes effect from the next draw.
    pub fn set_targets(&mut self, targets: &[TargetRef]) -> Result<(), SimError> {
        if self.stopped {
            return Err(SimError::SessionStopped);
        }
        let resolved = targets
            .iter()
            .map(|t| Ok((t.clone(), self.resolve(t)?)))
            .collect::<Result<Vec<_>, SimError>>()?;
        self.targets = resolved;
        Ok(())
    }

    pub fn switch_target(&mut self, target: &TargetRef) -> Result<(), SimError> {
        self.set_targets(std::slice::from_ref(target))
    }

    pub fn early_stop(&mut self) -> Result<(), SimError> {
        if self.stopped {
            return Err(SimError::SessionStopped);
        }
        self.stopped = true;
        Ok(())
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn targets(&self) -> impl Iterator<Item = &TargetRef> {
        self.targets.iter().map(|(t, _)| t)
    }

    /// Draws one molecule and sequences it until ejected or finished.
    pub fn step(&mut self) -> Result<&ReadEvent, SimError> {
        if self.stopped {
            return Err(SimError::SessionStopped);
        }
        let entry = self.entries[self.sampler.sample(&mut self.draw_rng)];
        let src = &entry.sequence;
        let window = self
            .targets
            .iter()
            .map(|(_, r)| self.params.window(r.len()))
            .max()
            .unwrap_or(0);
        self.buf.clear();
        let pos = self.channel.corrupt(src, 0, &mut self.buf, window);
        let refs: Vec<&[u8]> = self.targets.iter().map(|(_, r)| r.as_slice()).collect();
        let d = decide(&self.buf, &refs, &self.params);
        let event = if d.keep {
            self.channel.corrupt(src, pos, &mut self.buf, usize::MAX);
            ReadEvent {
                idx: self.telemetry.events.len() as u64,
                molecule_id: entry.id,
                decision: ReadOutcome::Accepted,
                sequenced_nt: self.buf.len() as u64,
                noisy: Some(self.buf.clone()),
                target: d.target.map(|i| self.targets[i].0.clone()),
            }
        } else {
            ReadEvent {
                idx: self.telemetry.events.len() as u64,
                molecule_id: entry.id,
                decision: ReadOutcome::Ejected,
                sequenced_nt: self.params.decision_nt as u64,
                noisy: None,
                target: self.targets.first().map(|(t, _)| t.clone()),
            }
        };
        self.telemetry.push(event);
        Ok(self.telemetry.events.last().expect("just pushed"))
    }

    pub fn telemetry(&self) -> &SessionTelemetry {
        &self.telemetry
    }

    pub fn into_telemetry(self) -> SessionTelemetry {
        self.telemetry
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    SwitchTarget(TargetRef),
    EarlyStop,
}

/// Everything that determines a scheduled session.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub schedule: Vec<TargetRef>,
    pub params: SamplingParams,
    pub model: ErrorModel,
    pub seed: u64,
    /// `(event index, command)`: applied just before that draw, in order.
    pub commands: Vec<(u64, Command)>,
    /// Hard cap on draws.
    pub max_events: Option<u64>,
}

impl SessionSpec {
    pub fn new(schedule: Vec<TargetRef>, seed: u64) -> Self {
        Self {
            schedule,
            params: SamplingParams::default(),
            model: ErrorModel::default(),
            seed,
            commands: Vec::new(),
            max_events: None,
        }
    }
}

/// Runs targets in schedule order. A target is left once it has collected
/// its coverage quota of accepted reads or a `SwitchTarget` command
/// arrives; the session ends when the schedule is exhausted, on
/// `EarlyStop`, or at `max_events`.
pub fn run_session(
    pool: &Pool,
    dict: &ReferenceDictionary,
    spec: &SessionSpec,
) -> Result<SessionTelemetry, SimError> {
    let mut seq = Sequencer::new(pool, dict, spec.params, spec.model, spec.seed)?;
    for t in &spec.schedule {
        seq.resolve(t)?;
    }
    let mut commands = spec.commands.clone();
    commands.sort_by_key(|(at, _)| *at);
    let mut commands = commands.into_iter().peekable();
    let mut cursor = 0;
    let mut current = spec.schedule.first().cloned();
    if let Some(t) = &current {
        seq.switch_target(t)?;
    }
    loop {
        let drawn = seq.telemetry().events.len() as u64;
        while let Some((_, cmd)) = commands.next_if(|(at, _)| *at <= drawn) {
            match cmd {
                Command::EarlyStop => seq.early_stop()?,
                Command::SwitchTarget(t) => {
                    seq.switch_target(&t)?;
                    if let Some(i) = spec.schedule.iter().position(|s| *s == t) {
                        cursor = i;
                    }
                    current = Some(t);
                }
            }
        }
        if seq.is_stopped() || spec.max_events.is_some_and(|m| drawn >= m) {
            break;
        }
        let Some(target) = current.clone() else { break };
        if seq.telemetry().accepted_for(&target) >= seq.coverage_quota(&target) {
            cursor += 1;
            current = spec.schedule.get(cursor).cloned();
            match &current {
                Some(t) => seq.switch_target(t)?,
                None => break,
            }
            continue;
        }
        seq.step()?;
    }
    Ok(seq.into_telemetry())
}
