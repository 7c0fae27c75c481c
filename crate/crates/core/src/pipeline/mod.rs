//! Analytics: micro-batching, per-device sessionization, session
//! simplification, order expansion and incremental Markov counting.

mod batch;
mod expand;
mod session;
mod stream;

pub use batch::{micro_batch, Batch, MicroBatcher};
pub use expand::{expand_orders, TransitionRecord};
pub use session::{collapse_trivial, filter_transient, sessionize, AnonymousSession, Session, Transition};
pub use stream::StreamingAnalyzer;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::knowlet::HandoverEvent;
use crate::knowstore::{MarkovModel, StoreError};

/// Reserved history token for positions before the session start.
pub const START: &str = "^";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("event at t={timestamp} is behind the open batch starting at {batch_start}")]
    OutOfOrder { timestamp: u64, batch_start: u64 },
    #[error("record order {order} outside 1..={max_order}")]
    OrderOutOfRange { order: usize, max_order: usize },
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineConfig {
    /// Sessionization gap in seconds.
    pub t_gap: u64,
    pub max_order: usize,
    /// Micro-batch width in seconds.
    pub batch_interval: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            t_gap: 300,
            max_order: 3,
            batch_interval: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.t_gap == 0 || self.max_order == 0 || self.batch_interval == 0 {
            return Err(PipelineError::Config(format!(
                "all parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Counters describing one analysis run.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisReport {
    pub events: u64,
    pub batches: u64,
    pub late_dropped: u64,
    pub sessions: u64,
    pub modeled_sessions: u64,
    pub transitions: u64,
    pub records: u64,
}

/// Adds one count per record. All records are checked before any count is
/// touched, so a failing call leaves the model unchanged.
pub fn update_model(model: &mut MarkovModel, records: &[TransitionRecord]) -> Result<(), PipelineError> {
    let max_order = model.max_order();
    if let Some(bad) = records
        .iter()
        .find(|r| r.order == 0 || r.order > max_order || r.history.len() + 1 != r.order)
    {
        return Err(PipelineError::OrderOutOfRange {
            order: bad.order,
            max_order,
        });
    }
    for r in records {
        model.observe(&r.history, &r.from, &r.to, 1)?;
    }
    Ok(())
}

/// Session -> modeling records, shared by the batch and streaming paths.
pub(crate) fn records_for(
    sessions: Vec<Session>,
    max_order: usize,
    report: &mut AnalysisReport,
) -> Vec<TransitionRecord> {
    report.sessions += sessions.len() as u64;
    let collapsed = sessions.iter().map(collapse_trivial).collect();
    let mut records = Vec::new();
    for s in filter_transient(collapsed) {
        report.modeled_sessions += 1;
        report.transitions += s.transitions.len() as u64;
        records.extend(expand_orders(&s, max_order));
    }
    report.records += records.len() as u64;
    records
}

/// Single-shot analysis of a complete, time-ordered trace.
pub fn analyze_batch(
    events: &[HandoverEvent],
    config: &PipelineConfig,
) -> Result<(MarkovModel, AnalysisReport), PipelineError> {
    config.validate()?;
    let mut by_device: BTreeMap<&str, Vec<HandoverEvent>> = BTreeMap::new();
    for e in events {
        by_device.entry(e.id.as_str()).or_default().push(e.clone());
    }
    let mut report = AnalysisReport {
        events: events.len() as u64,
        ..Default::default()
    };
    let mut model = MarkovModel::new(config.max_order)?;
    for (device, evs) in by_device {
        let sessions = sessionize(device, &evs, config.t_gap);
        let records = records_for(sessions, config.max_order, &mut report);
        update_model(&mut model, &records)?;
    }
    Ok((model, report))
}

/// Streams `events` through one-second (or configured) micro-batches.
pub fn analyze_stream<I>(events: I, config: &PipelineConfig) -> Result<(MarkovModel, AnalysisReport), PipelineError>
where
    I: IntoIterator<Item = HandoverEvent>,
{
    let mut analyzer = StreamingAnalyzer::new(*config)?;
    for e in events {
        analyzer.push(e)?;
    }
    let report = analyzer.finish()?;
    let model = analyzer.store().snapshot();
    Ok((MarkovModel::clone(&model), report))
}
