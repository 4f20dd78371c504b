//! CSV ingestion of measured traces and CSV export of run records.

use std::io::Write;
use std::path::Path;

use super::run::{Mode, RunRecord};
use crate::error::{Error, Result};
use crate::model::{PiecewiseConstantSignal, SignalUnit};

/// Header names of the time and value columns in a trace file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceColumns {
    pub time: String,
    pub value: String,
}

impl Default for TraceColumns {
    fn default() -> Self {
        Self {
            time: "t_seconds".into(),
            value: "value".into(),
        }
    }
}

/// Reads a zero-order-hold signal from a CSV file with a header row.
/// Row `k` holds its value from its timestamp until the next row's; the first
/// value also holds before the first timestamp.
pub fn import_trace(
    path: &Path,
    columns: &TraceColumns,
    unit: SignalUnit,
) -> Result<PiecewiseConstantSignal> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trace(file, path, columns, unit)
}

pub fn read_trace<R: std::io::Read>(
    reader: R,
    path: &Path,
    columns: &TraceColumns,
    unit: SignalUnit,
) -> Result<PiecewiseConstantSignal> {
    let fail = |row: usize, column: &str, message: String| Error::Trace {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(1, name, "column not found in header".into()))
    };
    let ti = find(&columns.time)?;
    let vi = find(&columns.value)?;

    let mut times: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is row 1
        let row = k + 2;
        let record = record.map_err(|e| fail(row, "", e.to_string()))?;
        let parse = |idx: usize, name: &str| -> Result<f64> {
            let raw = record
                .get(idx)
                .ok_or_else(|| fail(row, name, "missing field".into()))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| fail(row, name, format!("cannot parse {raw:?} as a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(fail(row, name, "non-finite value".into()))
            }
        };
        let t = parse(ti, &columns.time)?;
        let v = parse(vi, &columns.value)?;
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(fail(
                    row,
                    &columns.time,
                    format!("timestamp {t} does not increase past {prev}"),
                ));
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(fail(1, "", "trace has no data rows".into()));
    }
    PiecewiseConstantSignal::new(times[1..].to_vec(), values, unit)
}

/// Writes a signal as a trace starting at `start`, which must precede the first breakpoint.
pub fn write_trace<W: Write>(
    signal: &PiecewiseConstantSignal,
    start: f64,
    columns: &TraceColumns,
    writer: W,
) -> Result<()> {
    if let Some(first) = signal.breakpoints().first() {
        if start >= *first {
            return Err(Error::InvalidSignal(format!(
                "trace start {start} must precede the first breakpoint {first}"
            )));
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([columns.time.as_str(), columns.value.as_str()])?;
    let times = std::iter::once(start).chain(signal.breakpoints().iter().copied());
    for (t, v) in times.zip(signal.values()) {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<trace>".into(),
        source,
    })?;
    Ok(())
}

/// CSV header for a mode.
pub fn columns(mode: Mode) -> Vec<&'static str> {
    let mut cols = vec!["t", "u_supply", "u_return", "x", "v", "supply"];
    match mode {
        Mode::Simulate => {}
        Mode::Observe => cols.extend(["u_hat_return", "x_hat", "v_hat", "error_norm"]),
        Mode::Identify => cols.extend([
            "b_hat",
            "b_x_hat",
            "a_hat",
            "lyapunov",
            "norm_field_error",
            "norm_eps",
        ]),
        Mode::IdentifyKnownB => cols.extend([
            "b_x_hat",
            "a_hat",
            "lyapunov",
            "norm_field_error",
            "norm_eps",
        ]),
    }
    cols
}

fn row(mode: Mode, r: &RunRecord) -> Vec<f64> {
    let mut out = vec![r.t, r.u_supply, r.u_return, r.x, r.v, r.supply];
    if let Some(o) = &r.observer {
        out.extend([o.u_hat_return, o.x_hat, o.v_hat, o.error_norm]);
    }
    if let Some(i) = &r.identifier {
        if mode == Mode::Identify {
            out.push(i.b_hat);
        }
        out.extend([
            i.b_x_hat,
            i.a_hat,
            i.lyapunov,
            i.normalized_field_error,
            i.normalized_eps,
        ]);
    }
    out
}

/// Writes records as CSV. Floats use the shortest representation that
/// round-trips exactly, so output is byte-stable for a deterministic run.
pub fn write_records<W: Write>(mode: Mode, records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let cols = columns(mode);
    w.write_record(&cols)?;
    for r in records {
        let values = row(mode, r);
        if values.len() != cols.len() {
            return Err(Error::Config(format!(
                "record at t = {} does not match the {mode:?} column set",
                r.t
            )));
        }
        w.write_record(values.iter().map(f64::to_string))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<records>".into(),
        source,
    })?;
    Ok(())
}

pub fn export(mode: Mode, records: &[RunRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_records(mode, records, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn read(text: &str) -> Result<PiecewiseConstantSignal> {
        read_trace(
            text.as_bytes(),
            Path::new("mem.csv"),
            &TraceColumns::default(),
            SignalUnit::Ppm,
        )
    }

    #[test]
    fn two_rows_give_one_breakpoint() {
        let s = read("t_seconds,value\n0,420\n60,410\n").unwrap();
        assert_eq!(s.breakpoints(), &[60.0]);
        assert_eq!(s.values(), &[420.0, 410.0]);
    }

    #[test]
    fn extra_columns_and_order_are_fine() {
        let s = read("value, note ,t_seconds\n1.5,a,0\n2.5,b,10\n").unwrap();
        assert_eq!(s.eval(5.0), 1.5);
        assert_eq!(s.eval(10.0), 2.5);
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let err = read("t_seconds,value\n0,1\n10,2\n10,3\n").unwrap_err();
        match err {
            Error::Trace { row, column, .. } => {
                assert_eq!(row, 4);
                assert_eq!(column, "t_seconds");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = read("t_seconds,value\n0,1\n5,abc\n").unwrap_err();
        assert!(matches!(err, Error::Trace { row: 3, ref column, .. } if column == "value"));
        let err = read("time,value\n0,1\n").unwrap_err();
        assert!(matches!(err, Error::Trace { row: 1, .. }));
        assert!(read("t_seconds,value\n").is_err());
    }

    #[test]
    fn empty_run_is_header_only() {
        let mut buf = Vec::new();
        write_records(Mode::Observe, &[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,u_supply,u_return,x,v,supply,u_hat_return,x_hat,v_hat,error_norm\n"
        );
    }

    proptest! {
        #[test]
        fn trace_round_trip(
            gaps in proptest::collection::vec(1e-3..1e4f64, 0..12),
            values in proptest::collection::vec(-1e6..1e6f64, 13),
            start in -100.0..100.0f64,
        ) {
            let mut t = start;
            let bps: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
            prop_assume!(bps.windows(2).all(|w| w[1] > w[0]) && bps.first().is_none_or(|b| *b > start));
            let vals = values[..=bps.len()].to_vec();
            let sig = PiecewiseConstantSignal::new(bps, vals, SignalUnit::Ppm).unwrap();
            let mut buf = Vec::new();
            write_trace(&sig, start, &TraceColumns::default(), &mut buf).unwrap();
            let back = read_trace(buf.as_slice(), Path::new("mem"), &TraceColumns::default(), SignalUnit::Ppm).unwrap();
            prop_assert_eq!(back, sig);
        }
    }
}
