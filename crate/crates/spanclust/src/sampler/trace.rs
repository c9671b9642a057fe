//! Chain trace records, the run-length membership encoding, and the
//! newline-delimited trace format.
//!
//! Trace files are CSV with header
//! `iter,move,accepted,C,log_marginal,membership_rle`; lines starting with
//! `#` are comments (used for embedded configuration echoes). Membership
//! vectors are run-length encoded as `label:count` pairs joined by `|`.

use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::moves::MoveKind;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: u64,
    pub kind: MoveKind,
    pub accepted: bool,
    pub n_clusters: u32,
    /// Total log marginal likelihood over current clusters, maintained
    /// incrementally.
    pub log_marginal: f64,
    pub membership_rle: String,
}

pub fn encode_rle(membership: &[u32]) -> String {
    let mut out = String::new();
    let mut idx = 0;
    while idx < membership.len() {
        let label = membership[idx];
        let mut count = 1;
        while idx + count < membership.len() && membership[idx + count] == label {
            count += 1;
        }
        if !out.is_empty() {
            out.push('|');
        }
        out.push_str(&format!("{label}:{count}"));
        idx += count;
    }
    out
}

pub fn decode_rle(text: &str) -> Result<Vec<u32>, SamplerError> {
    let mut membership = Vec::new();
    for part in text.split('|') {
        let (label, count) = part
            .split_once(':')
            .ok_or_else(|| SamplerError::TraceCorrupt(format!("bad rle chunk '{part}'")))?;
        let label: u32 = label
            .parse()
            .map_err(|_| SamplerError::TraceCorrupt(format!("bad rle label '{label}'")))?;
        let count: usize = count
            .parse()
            .map_err(|_| SamplerError::TraceCorrupt(format!("bad rle count '{count}'")))?;
        membership.extend(std::iter::repeat(label).take(count));
    }
    if membership.is_empty() {
        return Err(SamplerError::TraceCorrupt("empty membership".to_string()));
    }
    Ok(membership)
}

pub const TRACE_HEADER: &str = "iter,move,accepted,C,log_marginal,membership_rle";

/// Serializes records to the trace CSV format. Optional comment lines
/// (without the leading `#`) are emitted first.
pub fn records_to_csv(records: &[TraceRecord], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iter,
            r.kind.name(),
            u8::from(r.accepted),
            r.n_clusters,
            r.log_marginal,
            r.membership_rle
        ));
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>, SamplerError> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != TRACE_HEADER {
                return Err(SamplerError::TraceCorrupt(format!(
                    "unexpected header '{line}'"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.splitn(6, ',').collect();
        if fields.len() != 6 {
            return Err(SamplerError::TraceCorrupt(format!(
                "expected 6 fields, got {} in '{line}'",
                fields.len()
            )));
        }
        let parse_err = |what: &str| SamplerError::TraceCorrupt(format!("bad {what} in '{line}'"));
        records.push(TraceRecord {
            iter: fields[0].parse().map_err(|_| parse_err("iter"))?,
            kind: MoveKind::from_name(fields[1]).ok_or_else(|| parse_err("move"))?,
            accepted: match fields[2] {
                "0" => false,
                "1" => true,
                _ => return Err(parse_err("accepted")),
            },
            n_clusters: fields[3].parse().map_err(|_| parse_err("C"))?,
            log_marginal: fields[4].parse().map_err(|_| parse_err("log_marginal"))?,
            membership_rle: fields[5].to_string(),
        });
    }
    if !saw_header {
        return Err(SamplerError::TraceCorrupt("missing header".to_string()));
    }
    Ok(records)
}

/// Per-evaluation diagnostics, one entry per fresh marginal computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalDiagnostic {
    pub iter: u64,
    pub members: Vec<u32>,
    pub log_marginal: f64,
    pub theta_mode: Vec<f64>,
    pub newton_iters_max: usize,
    pub fallback: bool,
    /// Present when the evaluation failed and the proposal was rejected
    /// under `tolerate_nonconverged`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Proposal and acceptance counts per move kind.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl AcceptanceStats {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        let i = kind_index(kind);
        self.proposed[i] += 1;
        if accepted {
            self.accepted[i] += 1;
        }
    }

    pub fn rate(&self, kind: MoveKind) -> Option<f64> {
        let i = kind_index(kind);
        (self.proposed[i] > 0).then(|| self.accepted[i] as f64 / self.proposed[i] as f64)
    }
}

pub(crate) fn kind_index(kind: MoveKind) -> usize {
    match kind {
        MoveKind::Birth => 0,
        MoveKind::Death => 1,
        MoveKind::Change => 2,
        MoveKind::Hyper => 3,
    }
}
