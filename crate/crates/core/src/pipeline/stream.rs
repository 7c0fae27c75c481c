use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::knowlet::HandoverEvent;
use crate::knowstore::{KnowStore, MarkovModel};

use super::{
    records_for, sessionize, update_model, AnalysisReport, Batch, MicroBatcher, PipelineConfig, PipelineError,
};

/// Incremental analyzer: events are grouped into micro-batches, each batch
/// extends per-device open sessions, and the records of sessions closed
/// during the batch are applied to the store in one atomic update.
///
/// A device's session is closed either when its next event arrives at least
/// `t_gap` later, or once the watermark (largest timestamp seen) is more
/// than `t_gap` past its last event.
pub struct StreamingAnalyzer {
    config: PipelineConfig,
    batcher: MicroBatcher,
    store: Arc<KnowStore>,
    open: HashMap<String, Vec<HandoverEvent>>,
    // (last event timestamp, device) of every open session
    deadlines: BTreeSet<(u64, String)>,
    watermark: u64,
    report: AnalysisReport,
}

impl StreamingAnalyzer {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let store = Arc::new(KnowStore::new(MarkovModel::new(config.max_order)?));
        Self::with_store(config, store)
    }

    /// Analyzer writing into an existing store (e.g. one shared with a
    /// dissemination service).
    pub fn with_store(config: PipelineConfig, store: Arc<KnowStore>) -> Result<Self, PipelineError> {
        config.validate()?;
        let model_order = store.snapshot().max_order();
        if model_order != config.max_order {
            return Err(PipelineError::Config(format!(
                "store holds order {model_order} but pipeline expands to {}",
                config.max_order
            )));
        }
        Ok(StreamingAnalyzer {
            config,
            batcher: MicroBatcher::new(config.batch_interval)?,
            store,
            open: HashMap::new(),
            deadlines: BTreeSet::new(),
            watermark: 0,
            report: AnalysisReport::default(),
        })
    }

    pub fn store(&self) -> &Arc<KnowStore> {
        &self.store
    }

    pub fn report(&self) -> AnalysisReport {
        self.report
    }

    /// Feeds one event. Late events (behind the open batch) are dropped and
    /// counted rather than reordered.
    pub fn push(&mut self, event: HandoverEvent) -> Result<(), PipelineError> {
        self.report.events += 1;
        match self.batcher.push(event) {
            Ok(closed) => {
                for batch in closed {
                    self.process(batch)?;
                }
                Ok(())
            }
            Err(PipelineError::OutOfOrder { .. }) => {
                self.report.late_dropped += 1;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }

    /// Flushes the last batch and every open session.
    pub fn finish(&mut self) -> Result<AnalysisReport, PipelineError> {
        if let Some(batch) = self.batcher.finish() {
            self.process(batch)?;
        }
        let devices: Vec<String> = self.deadlines.iter().map(|(_, d)| d.clone()).collect();
        let mut records = Vec::new();
        for device in devices {
            records.extend(self.close(&device));
        }
        self.deadlines.clear();
        self.apply(records)?;
        Ok(self.report)
    }

    fn process(&mut self, batch: Batch) -> Result<(), PipelineError> {
        self.report.batches += 1;
        let mut records = Vec::new();
        for event in batch.events {
            self.watermark = self.watermark.max(event.ts);
            let device = event.id.clone();
            if let Some(last) = self.open.get(&device).and_then(|evs| evs.last()).map(|e| e.ts) {
                self.deadlines.remove(&(last, device.clone()));
                if event.ts.saturating_sub(last) >= self.config.t_gap {
                    records.extend(self.close(&device));
                }
            }
            self.deadlines.insert((event.ts, device.clone()));
            self.open.entry(device).or_default().push(event);
        }
        while let Some((last, device)) = self.deadlines.first().cloned() {
            if last + self.config.t_gap >= self.watermark {
                break;
            }
            self.deadlines.pop_first();
            records.extend(self.close(&device));
        }
        self.apply(records)
    }

    fn close(&mut self, device: &str) -> Vec<super::TransitionRecord> {
        let Some(events) = self.open.remove(device) else {
            return Vec::new();
        };
        let sessions = sessionize(device, &events, self.config.t_gap);
        debug_assert_eq!(sessions.len(), 1);
        records_for(sessions, self.config.max_order, &mut self.report)
    }

    fn apply(&self, records: Vec<super::TransitionRecord>) -> Result<(), PipelineError> {
        if records.is_empty() {
            return Ok(());
        }
        self.store.update(|model| update_model(model, &records))
    }
}
