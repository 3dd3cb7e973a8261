//! Tab-separated event log:
//! `event_idx  molecule_id  decision  sequenced_nt  target_ref_id`, one line
//! per read, `-` when no target was active.

use std::io::{BufRead, Write};

use uuid::Uuid;

use super::{ReadOutcome, SimError, TargetRef};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryRecord {
    pub idx: u64,
    pub molecule_id: Uuid,
    pub decision: ReadOutcome,
    pub sequenced_nt: u64,
    pub target: Option<TargetRef>,
}

pub fn write_tsv<W: Write>(records: &[TelemetryRecord], mut w: W) -> std::io::Result<()> {
    for r in records {
        let target = r.target.as_ref().map_or("-".to_string(), |t| t.to_string());
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            r.idx,
            r.molecule_id,
            r.decision.as_str(),
            r.sequenced_nt,
            target
        )?;
    }
    w.flush()
}

pub fn read_tsv<R: BufRead>(r: R) -> Result<Vec<TelemetryRecord>, SimError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| SimError::Telemetry {
            line: n + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(err("expected 5 tab-separated fields"));
        }
        let decision = match f[2] {
            "accepted" => ReadOutcome::Accepted,
            "ejected" => ReadOutcome::Ejected,
            _ => return Err(err("decision must be accepted or ejected")),
        };
        out.push(TelemetryRecord {
            idx: f[0].parse().map_err(|_| err("bad event index"))?,
            molecule_id: Uuid::parse_str(f[1]).map_err(|_| err("bad molecule id"))?,
            decision,
            sequenced_nt: f[3].parse().map_err(|_| err("bad nucleotide count"))?,
            target: match f[4] {
                "-" => None,
                t => Some(t.parse().map_err(|e: String| err(&e))?),
            },
        });
    }
    Ok(out)
}
