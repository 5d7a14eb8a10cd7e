//! JSONL episode logs: one simulator step per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{CommandArray, SimError, StepOutcome, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub state: WorldState,
    pub cmd: CommandArray,
    pub outcome: StepOutcome,
}

pub fn write_jsonl<'a>(mut out: impl Write, steps: impl IntoIterator<Item = &'a StepLog>) -> Result<(), SimError> {
    for s in steps {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(input: impl BufRead) -> Result<Vec<StepLog>, SimError> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
