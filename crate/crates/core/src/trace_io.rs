//! Line-delimited JSON trace files: one header line, then one line per round.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::instance::{ColorCounts, ColorId, SignalId};
use crate::protocol::{NodeState, Phase};
use crate::rng::RNG_SCHEME;
use crate::sim::{Edges, RoundInput, RoundRecord, Snapshot, Trace};

pub const TRACE_FORMAT: &str = "selforg-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("not a trace file (format {found:?}, expected {TRACE_FORMAT:?})")]
    Format { found: String },
    #[error("unsupported trace version: expected {expected}, found {found}")]
    Version { expected: u32, found: String },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("embedded scenario: {0}")]
    Config(#[from] ConfigError),
}

/// `[signal, color, phase, source, max_ttl, ttl, timer]`
type StateRow = (u32, u32, String, bool, u64, u64, u64);

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    rng: String,
    seed: u64,
    scenario: Config,
    initial: Vec<StateRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum EdgesRow {
    Tag(String),
    List(Vec<(usize, usize)>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordRow {
    t: u64,
    signal: u32,
    witnesses: Vec<usize>,
    edges: EdgesRow,
    states: Vec<StateRow>,
    m_star: u64,
    e_star: u64,
    color_counts: Vec<u64>,
    stable: bool,
}

fn state_row(s: &NodeState) -> StateRow {
    (
        s.signal.0,
        s.color.0,
        s.phase.code().to_string(),
        s.source,
        s.max_ttl,
        s.ttl,
        s.timer,
    )
}

fn node_state(row: &StateRow, line: usize) -> Result<NodeState, TraceError> {
    let phase = Phase::from_code(&row.2).ok_or_else(|| TraceError::Malformed {
        line,
        detail: format!("unknown phase {:?}", row.2),
    })?;
    Ok(NodeState {
        signal: SignalId(row.0),
        color: ColorId(row.1),
        phase,
        source: row.3,
        max_ttl: row.4,
        ttl: row.5,
        timer: row.6,
    })
}

pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<(), TraceError> {
    let config = Config::from_scenario(&trace.scenario);
    let header = Header {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        rng: RNG_SCHEME.to_string(),
        seed: trace.scenario.seed,
        scenario: config,
        initial: trace.initial.iter().map(state_row).collect(),
    };
    serde_json::to_writer(&mut out, &header)
        .map_err(|source| TraceError::Json { line: 1, source })?;
    out.write_all(b"\n")?;
    for (i, r) in trace.records.iter().enumerate() {
        let row = RecordRow {
            t: r.t,
            signal: r.input.signal.0,
            witnesses: r.input.witnesses.clone(),
            edges: match &r.input.snapshot.edges {
                Edges::Complete => EdgesRow::Tag("complete".to_string()),
                Edges::List(list) => EdgesRow::List(list.clone()),
            },
            states: r.states.iter().map(state_row).collect(),
            m_star: r.m_star,
            e_star: r.e_star,
            color_counts: r.color_counts.counts.clone(),
            stable: r.stable,
        };
        serde_json::to_writer(&mut out, &row).map_err(|source| TraceError::Json {
            line: i + 2,
            source,
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(TraceError::Malformed {
        line: 1,
        detail: "empty file".into(),
    })??;
    let raw: serde_json::Value =
        serde_json::from_str(&first).map_err(|source| TraceError::Json { line: 1, source })?;
    let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != TRACE_FORMAT {
        return Err(TraceError::Format {
            found: format.to_string(),
        });
    }
    match raw.get("version") {
        Some(v) if v.as_u64() == Some(TRACE_VERSION as u64) => {}
        Some(v) => {
            return Err(TraceError::Version {
                expected: TRACE_VERSION,
                found: v.to_string(),
            })
        }
        None => {
            return Err(TraceError::Version {
                expected: TRACE_VERSION,
                found: "none".into(),
            })
        }
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|source| TraceError::Json { line: 1, source })?;
    if header.rng != RNG_SCHEME {
        return Err(TraceError::Malformed {
            line: 1,
            detail: format!("random scheme {:?}, expected {RNG_SCHEME:?}", header.rng),
        });
    }
    if header.seed != header.scenario.seed {
        return Err(TraceError::Malformed {
            line: 1,
            detail: "header seed differs from the scenario seed".into(),
        });
    }
    let scenario = header.scenario.to_scenario()?;
    let n = scenario.n;
    let initial = header
        .initial
        .iter()
        .map(|r| node_state(r, 1))
        .collect::<Result<Vec<_>, _>>()?;
    if initial.len() != n {
        return Err(TraceError::Malformed {
            line: 1,
            detail: format!("{} initial states for n = {n}", initial.len()),
        });
    }

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RecordRow = serde_json::from_str(&line).map_err(|source| TraceError::Json {
            line: line_no,
            source,
        })?;
        let malformed = |detail: String| TraceError::Malformed {
            line: line_no,
            detail,
        };
        if row.t != records.len() as u64 {
            return Err(malformed(format!(
                "round {} out of order, expected {}",
                row.t,
                records.len()
            )));
        }
        let edges = match row.edges {
            EdgesRow::Tag(tag) if tag == "complete" => Edges::Complete,
            EdgesRow::Tag(tag) => return Err(malformed(format!("unknown edge tag {tag:?}"))),
            EdgesRow::List(list) => Snapshot::from_edges(n, list).edges,
        };
        let states = row
            .states
            .iter()
            .map(|r| node_state(r, line_no))
            .collect::<Result<Vec<_>, _>>()?;
        if states.len() != n {
            return Err(malformed(format!("{} states for n = {n}", states.len())));
        }
        records.push(RoundRecord {
            t: row.t,
            input: RoundInput {
                snapshot: Snapshot { n, edges },
                signal: SignalId(row.signal),
                witnesses: row.witnesses,
            },
            color_counts: ColorCounts {
                counts: row.color_counts,
                n: n as u64,
            },
            states,
            m_star: row.m_star,
            e_star: row.e_star,
            stable: row.stable,
        });
    }
    Ok(Trace {
        scenario,
        initial,
        records,
    })
}

pub fn save_trace(trace: &Trace, path: &std::path::Path) -> Result<(), TraceError> {
    let file = std::fs::File::create(path)?;
    write_trace(trace, std::io::BufWriter::new(file))
}

pub fn load_trace(path: &std::path::Path) -> Result<Trace, TraceError> {
    let file = std::fs::File::open(path)?;
    read_trace(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{SignalAdversary, TopologyAdversary, WitnessPolicy};
    use crate::instance::Instance;
    use crate::sim::{replay, run, ModeSpec, ReplayOutcome, Scenario};

    fn trace(topology: TopologyAdversary) -> Trace {
        run(&Scenario {
            n: 5,
            mode: ModeSpec::Randomized,
            instance: Instance::homogeneous(3, &[ColorId(3), ColorId(1)]).unwrap(),
            topology,
            signal: SignalAdversary::Persistent {
                signal: SignalId(1),
                from_round: 2,
                witness_policy: WitnessPolicy::RandomSubset,
            },
            horizon: 25,
            seed: 99,
            resample: Default::default(),
        })
        .unwrap()
    }

    #[test]
    fn round_trip_and_replay() {
        for topology in [
            TopologyAdversary::StaticComplete,
            TopologyAdversary::RandomConnected { edge_prob: 0.3 },
        ] {
            let original = trace(topology);
            let mut bytes = Vec::new();
            write_trace(&original, &mut bytes).unwrap();
            let back = read_trace(bytes.as_slice()).unwrap();
            assert_eq!(back, original);
            assert_eq!(replay(&back), ReplayOutcome::Identical);
        }
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = Vec::new();
        write_trace(&trace(TopologyAdversary::StaticRing), &mut bytes).unwrap();
        let text = String::from_utf8(bytes)
            .unwrap()
            .replacen("\"version\":1", "\"version\":7", 1);
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert_eq!(
            err.to_string(),
            "unsupported trace version: expected 1, found 7"
        );
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(read_trace("".as_bytes()).is_err());
        assert!(matches!(
            read_trace("{\"format\":\"other\"}".as_bytes()),
            Err(TraceError::Format { .. })
        ));
    }
}
