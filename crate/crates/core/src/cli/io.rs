//! Event-log and report serialisation.
//!
//! CSV schema: `time,kind,mark,intensity_before,intensity_after`, one row per
//! arrival, `kind` either `self` or `external`. Floats use the shortest
//! representation that round-trips.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, EventKind, EventLog, ModelParams};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    time: f64,
    kind: EventKind,
    mark: f64,
    intensity_before: f64,
    intensity_after: f64,
}

impl From<&Event> for Row {
    fn from(e: &Event) -> Self {
        Self {
            time: e.time,
            kind: e.kind,
            mark: e.mark,
            intensity_before: e.intensity_before(),
            intensity_after: e.intensity_after(),
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv: {e}"))
}

pub fn write_event_log_csv<W: Write>(writer: W, log: &EventLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "kind", "mark", "intensity_before", "intensity_after"])
        .map_err(csv_error)?;
    for e in log.events() {
        let row = Row::from(e);
        w.write_record([
            row.time.to_string(),
            row.kind.to_string(),
            row.mark.to_string(),
            row.intensity_before.to_string(),
            row.intensity_after.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("write failed: {e}")))
}

/// Reads a CSV event log. The horizon is not part of the schema; it
/// defaults to the last event time.
pub fn read_event_log_csv<R: Read>(reader: R, end_time: Option<f64>) -> Result<EventLog> {
    let mut r = csv::Reader::from_reader(reader);
    let mut events = Vec::new();
    for row in r.deserialize::<Row>() {
        let row = row.map_err(csv_error)?;
        let expected_after = row.intensity_before * (-row.mark).exp();
        if !((row.intensity_after / expected_after - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidInput(format!(
                "row at time {}: intensity_after {} != intensity_before * exp(-mark) = {}",
                row.time, row.intensity_after, expected_after
            )));
        }
        events.push(Event {
            time: row.time,
            kind: row.kind,
            mark: row.mark,
            log_intensity_before: row.intensity_before.ln(),
        });
    }
    let end = end_time
        .or_else(|| events.last().map(|e| e.time))
        .unwrap_or(f64::MIN_POSITIVE);
    EventLog::new(events, end)
}

#[derive(Serialize)]
struct JsonLog<'a> {
    version: &'static str,
    seed: u64,
    method: &'a str,
    params: &'a ModelParams,
    end_time: f64,
    events: Vec<Row>,
}

pub fn write_event_log_json<W: Write>(
    writer: W,
    log: &EventLog,
    params: &ModelParams,
    seed: u64,
    method: &str,
) -> Result<()> {
    let doc = JsonLog {
        version: env!("CARGO_PKG_VERSION"),
        seed,
        method,
        params,
        end_time: log.end_time(),
        events: log.events().iter().map(Row::from).collect(),
    };
    serde_json::to_writer_pretty(writer, &doc).map_err(|e| Error::InvalidInput(format!("json: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::simulate_path;
    use crate::model::JumpDist;
    use proptest::prelude::*;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 1.5, 2.0, JumpDist::exponential(1.0), JumpDist::exponential(2.0)).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn csv_round_trip_is_lossless(seed in any::<u64>(), end in 0.5f64..20.0) {
            let log = simulate_path(&fig1(), end, seed).unwrap();
            let mut buf = Vec::new();
            write_event_log_csv(&mut buf, &log).unwrap();
            let back = read_event_log_csv(buf.as_slice(), Some(end)).unwrap();
            prop_assert_eq!(back.len(), log.len());
            for (a, b) in back.events().iter().zip(log.events()) {
                prop_assert_eq!(a.time, b.time);
                prop_assert_eq!(a.mark, b.mark);
                prop_assert_eq!(a.kind, b.kind);
                prop_assert!((a.intensity_before() / b.intensity_before() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn header_and_kinds() {
        let log = simulate_path(&fig1(), 5.0, 1).unwrap();
        let mut buf = Vec::new();
        write_event_log_csv(&mut buf, &log).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,kind,mark,intensity_before,intensity_after"));
        assert!(lines.all(|l| l.contains(",self,") || l.contains(",external,")));
    }

    #[test]
    fn inconsistent_rows_are_rejected() {
        let text = "time,kind,mark,intensity_before,intensity_after\n1,self,0.5,2,2\n";
        assert!(read_event_log_csv(text.as_bytes(), None).is_err());
        let text = "time,kind,mark,intensity_before,intensity_after\n1,sideways,0.5,2,1\n";
        assert!(read_event_log_csv(text.as_bytes(), None).is_err());
    }
}
