use crate::knowlet::HandoverEvent;

use super::PipelineError;

/// Events whose timestamps fall in `[start, start + interval)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub index: u64,
    pub start: u64,
    pub events: Vec<HandoverEvent>,
}

/// Incremental fixed-interval batcher. Empty batches are produced for quiet
/// intervals between the first and the last event.
#[derive(Debug)]
pub struct MicroBatcher {
    interval: u64,
    open: Option<Batch>,
}

impl MicroBatcher {
    pub fn new(interval: u64) -> Result<Self, PipelineError> {
        if interval == 0 {
            return Err(PipelineError::Config("batch interval must be positive".into()));
        }
        Ok(MicroBatcher { interval, open: None })
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    /// Adds one event, returning every batch closed by its arrival. An
    /// event older than the open batch is rejected and the batcher state
    /// is left untouched.
    pub fn push(&mut self, event: HandoverEvent) -> Result<Vec<Batch>, PipelineError> {
        let index = event.ts / self.interval;
        let mut closed = Vec::new();
        match &mut self.open {
            None => {}
            Some(b) if index == b.index => {
                b.events.push(event);
                return Ok(closed);
            }
            Some(b) if index < b.index => {
                return Err(PipelineError::OutOfOrder {
                    timestamp: event.ts,
                    batch_start: b.start,
                });
            }
            Some(_) => {
                let done = self.open.take().expect("matched Some");
                let next = done.index + 1;
                closed.push(done);
                closed.extend((next..index).map(|i| Batch {
                    index: i,
                    start: i * self.interval,
                    events: Vec::new(),
                }));
            }
        }
        self.open = Some(Batch {
            index,
            start: index * self.interval,
            events: vec![event],
        });
        Ok(closed)
    }

    /// Closes the batch still open at end of stream.
    pub fn finish(&mut self) -> Option<Batch> {
        self.open.take()
    }
}

pub fn micro_batch<I>(stream: I, batch_interval: u64) -> Result<Vec<Batch>, PipelineError>
where
    I: IntoIterator<Item = HandoverEvent>,
{
    let mut batcher = MicroBatcher::new(batch_interval)?;
    let mut out = Vec::new();
    for e in stream {
        out.extend(batcher.push(e)?);
    }
    out.extend(batcher.finish());
    Ok(out)
}
