use super::{vlc_link, LinkState, SimError, SimEvent, World};
use crate::knowledge::{merge_record, ObjectRecord, RecordSource};
use crate::mission::Task;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A task passed from one robot to another, remembered with its sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffTask {
    pub from: String,
    pub task: Task,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferPacket {
    pub records: Vec<ObjectRecord>,
    pub tasks: Vec<Task>,
}

impl TransferPacket {
    pub const RECORD_BYTES: f64 = 64.0;
    pub const TASK_BYTES: f64 = 32.0;
    pub const HEADER_BYTES: f64 = 16.0;

    pub fn size_bytes(&self) -> f64 {
        Self::HEADER_BYTES + Self::RECORD_BYTES * self.records.len() as f64 + Self::TASK_BYTES * self.tasks.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty() && self.tasks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransferError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("link {from}-{to} is not connected ({state:?})")]
    NotConnected { from: String, to: String, state: LinkState },
    #[error("link {from}-{to} lost after {sent:.0} of {size:.0} bytes; partial transfer discarded")]
    LinkLost { from: String, to: String, sent: f64, size: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferProgress {
    InProgress { fraction: f64 },
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub records_offered: usize,
    pub records_changed: usize,
    pub tasks: usize,
    pub event: SimEvent,
}

/// An in-flight transfer. Nothing reaches the recipient until `deliver`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transfer {
    pub from: String,
    pub to: String,
    pub packet: TransferPacket,
    sent: f64,
}

impl Transfer {
    pub fn start(world: &World, from: &str, to: &str, packet: TransferPacket) -> Result<Self, TransferError> {
        let status = vlc_link(world, from, to, &world.params)?;
        if !status.is_connected() {
            return Err(TransferError::NotConnected { from: from.into(), to: to.into(), state: status.state });
        }
        Ok(Transfer { from: from.into(), to: to.into(), packet, sent: 0.0 })
    }

    pub fn size(&self) -> f64 {
        self.packet.size_bytes()
    }

    pub fn sent(&self) -> f64 {
        self.sent
    }

    /// Pushes `dt` seconds of data through the link as it currently stands.
    pub fn advance(&mut self, world: &World, dt: f64) -> Result<TransferProgress, TransferError> {
        let status = vlc_link(world, &self.from, &self.to, &world.params)?;
        if !status.is_connected() {
            return Err(TransferError::LinkLost {
                from: self.from.clone(),
                to: self.to.clone(),
                sent: self.sent,
                size: self.size(),
            });
        }
        self.sent = (self.sent + status.quality * world.params.vlc_base_rate * dt).min(self.size());
        if self.sent >= self.size() {
            Ok(TransferProgress::Complete)
        } else {
            Ok(TransferProgress::InProgress { fraction: self.sent / self.size() })
        }
    }

    /// Merges the packet into the recipient.
    pub fn deliver(self, world: &mut World) -> Result<TransferResult, SimError> {
        let records_offered = self.packet.records.len();
        let tasks = self.packet.tasks.len();
        let mut records_changed = 0;
        if let Some(station) = world.stations.get_mut(&self.to) {
            station.reports_received += 1;
        } else {
            let recipient = world.robot_mut(&self.to)?;
            for mut record in self.packet.records {
                if record.source != RecordSource::Human {
                    record.source = RecordSource::Transferred;
                }
                if merge_record(&mut recipient.records, record).changed() {
                    records_changed += 1;
                }
            }
            for mut task in self.packet.tasks {
                task.subject = self.to.clone();
                recipient.inbox.push(HandoffTask { from: self.from.clone(), task });
            }
        }
        let event = SimEvent::KnowledgeTransferred { from: self.from, to: self.to, records: records_offered, tasks };
        Ok(TransferResult { records_offered, records_changed, tasks, event })
    }
}

/// Transfer over a link that holds still for its whole duration.
pub fn transfer_knowledge(world: &mut World, from: &str, to: &str, packet: TransferPacket) -> Result<TransferResult, TransferError> {
    let mut transfer = Transfer::start(world, from, to, packet)?;
    let dt = world.params.dt;
    while transfer.advance(world, dt)? != TransferProgress::Complete {}
    Ok(transfer.deliver(world)?)
}
