//! Point-to-point message mesh for in-process ranks.
//!
//! Every ordered rank pair gets its own channel, so a message from rank A
//! to rank B can never be observed by — or reordered relative to — traffic
//! between any other pair. Each rank body receives a [`RankComm`] handle
//! holding the send sides toward every peer and the receive sides from
//! every peer; receives name the peer they expect, which keeps the
//! deterministic exchange order of the block plans honest.

use crate::error::{Error, Result};
use crate::packed::PackedVectorSet;
use crate::tally::{TallyTable2, TallyTable3};
use std::sync::mpsc::{channel, Receiver, Sender};

/// A message between ranks: a packed tile moving toward a worker, or
/// partial tally tables moving down the field axis for reduction.
#[derive(Clone, Debug)]
pub enum Msg {
    /// A column tile with the global index of its first column.
    Tile { start: u64, tile: PackedVectorSet },
    /// Per-job pair tables produced by one worker, with the worker's
    /// field coordinate.
    Tables2 { r_f: usize, tables: Vec<TallyTable2> },
    /// Per-job triple tables produced by one worker.
    Tables3 { r_f: usize, tables: Vec<TallyTable3> },
}

/// One rank's view of the mesh.
pub struct RankComm {
    rank: usize,
    /// Send side toward each peer, indexed by peer rank id.
    to: Vec<Option<Sender<Msg>>>,
    /// Receive side from each peer, indexed by peer rank id.
    from: Vec<Option<Receiver<Msg>>>,
}

/// Builds a full mesh over `n_ranks` ranks and hands each rank its view.
pub fn build_mesh(n_ranks: usize) -> Vec<RankComm> {
    let mut senders: Vec<Vec<Option<Sender<Msg>>>> = (0..n_ranks)
        .map(|_| (0..n_ranks).map(|_| None).collect())
        .collect();
    let mut receivers: Vec<Vec<Option<Receiver<Msg>>>> = (0..n_ranks)
        .map(|_| (0..n_ranks).map(|_| None).collect())
        .collect();
    for src in 0..n_ranks {
        for dst in 0..n_ranks {
            if src == dst {
                continue;
            }
            let (tx, rx) = channel();
            senders[src][dst] = Some(tx);
            receivers[dst][src] = Some(rx);
        }
    }
    senders
        .into_iter()
        .zip(receivers)
        .enumerate()
        .map(|(rank, (to, from))| RankComm { rank, to, from })
        .collect()
}

impl RankComm {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Sends a message to `peer`. Fails if the peer's body has already
    /// exited and dropped its receive sides.
    pub fn send(&self, peer: usize, msg: Msg) -> Result<()> {
        let tx = self.to[peer].as_ref().ok_or_else(|| Error::ChannelFailure {
            rank: self.rank,
            detail: format!("no channel toward rank {peer}"),
        })?;
        tx.send(msg).map_err(|_| Error::ChannelFailure {
            rank: self.rank,
            detail: format!("rank {peer} hung up"),
        })
    }

    /// Receives the next message from `peer`, blocking.
    pub fn recv(&self, peer: usize) -> Result<Msg> {
        let rx = self.from[peer].as_ref().ok_or_else(|| Error::ChannelFailure {
            rank: self.rank,
            detail: format!("no channel from rank {peer}"),
        })?;
        rx.recv().map_err(|_| Error::ChannelFailure {
            rank: self.rank,
            detail: format!("rank {peer} hung up before sending"),
        })
    }

    /// Receives from `peer` and insists on a tile.
    pub fn expect_tile(&self, peer: usize) -> Result<(u64, PackedVectorSet)> {
        match self.recv(peer)? {
            Msg::Tile { start, tile } => Ok((start, tile)),
            other => Err(Error::ChannelFailure {
                rank: self.rank,
                detail: format!("expected a tile from rank {peer}, got {}", msg_name(&other)),
            }),
        }
    }

    /// Receives from `peer` and insists on pair tables.
    pub fn expect_tables2(&self, peer: usize) -> Result<Vec<TallyTable2>> {
        match self.recv(peer)? {
            Msg::Tables2 { tables, .. } => Ok(tables),
            other => Err(Error::ChannelFailure {
                rank: self.rank,
                detail: format!(
                    "expected pair tables from rank {peer}, got {}",
                    msg_name(&other)
                ),
            }),
        }
    }

    /// Receives from `peer` and insists on triple tables.
    pub fn expect_tables3(&self, peer: usize) -> Result<Vec<TallyTable3>> {
        match self.recv(peer)? {
            Msg::Tables3 { tables, .. } => Ok(tables),
            other => Err(Error::ChannelFailure {
                rank: self.rank,
                detail: format!(
                    "expected triple tables from rank {peer}, got {}",
                    msg_name(&other)
                ),
            }),
        }
    }
}

fn msg_name(msg: &Msg) -> &'static str {
    match msg {
        Msg::Tile { .. } => "a tile",
        Msg::Tables2 { .. } => "pair tables",
        Msg::Tables3 { .. } => "triple tables",
    }
}
