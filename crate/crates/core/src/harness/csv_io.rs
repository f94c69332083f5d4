use std::io::{Read, Write};

use crate::pipeline::RunTrace;

use super::{ConvergenceRow, HarnessError, StudyRow};

/// One attempted step as written to a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub level: usize,
    /// Attempt index within the level.
    pub n: usize,
    /// Step start.
    pub t: f64,
    pub dt: f64,
    pub accepted: bool,
    pub eps: f64,
    /// Proposed value at `t + dt`.
    pub y: Vec<f64>,
}

/// 17 significant digits, enough to round-trip every `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T, HarnessError> {
    field
        .ok_or_else(|| HarnessError::Parse(format!("missing {name}")))?
        .trim()
        .parse()
        .map_err(|_| HarnessError::Parse(format!("bad {name}")))
}

pub fn trace_rows(trace: &RunTrace) -> Vec<TraceRow> {
    trace
        .levels
        .iter()
        .flat_map(|lt| {
            lt.steps.iter().enumerate().map(move |(n, s)| TraceRow {
                level: lt.level,
                n,
                t: s.t,
                dt: s.dt,
                accepted: s.accepted,
                eps: s.eps,
                y: s.y.clone(),
            })
        })
        .collect()
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<(), HarnessError> {
    let dim = rows.first().map_or(0, |r| r.y.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["level", "n", "t", "dt", "accepted", "eps"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.level.to_string(),
            r.n.to_string(),
            num(r.t),
            num(r.dt),
            u8::from(r.accepted).to_string(),
            num(r.eps),
        ];
        rec.extend(r.y.iter().map(|&v| num(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let accepted: u8 = parse(rec.get(4), "accepted")?;
        rows.push(TraceRow {
            level: parse(rec.get(0), "level")?,
            n: parse(rec.get(1), "n")?,
            t: parse(rec.get(2), "t")?,
            dt: parse(rec.get(3), "dt")?,
            accepted: accepted != 0,
            eps: parse(rec.get(5), "eps")?,
            y: (6..rec.len())
                .map(|i| parse(rec.get(i), "y"))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(out: W, rows: &[StudyRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "rtol", "atol", "mean_dt", "error", "naccept", "nreject"])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            num(r.rtol),
            num(r.atol),
            num(r.mean_dt),
            num(r.error),
            r.naccept.to_string(),
            r.nreject.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_study_csv<R: Read>(input: R) -> Result<Vec<StudyRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(StudyRow {
            level: parse(rec.get(0), "level")?,
            rtol: parse(rec.get(1), "rtol")?,
            atol: parse(rec.get(2), "atol")?,
            mean_dt: parse(rec.get(3), "mean_dt")?,
            error: parse(rec.get(4), "error")?,
            naccept: parse(rec.get(5), "naccept")?,
            nreject: parse(rec.get(6), "nreject")?,
        });
    }
    Ok(rows)
}

pub fn write_convergence_csv<W: Write>(out: W, rows: &[ConvergenceRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "N", "mean_dt", "error", "fitted_order"])?;
    for r in rows {
        w.write_record([
            r.level.to_string(),
            r.steps.to_string(),
            num(r.mean_dt),
            num(r.error),
            num(r.fitted_order),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_convergence_csv<R: Read>(input: R) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(ConvergenceRow {
            level: parse(rec.get(0), "level")?,
            steps: parse(rec.get(1), "N")?,
            mean_dt: parse(rec.get(2), "mean_dt")?,
            error: parse(rec.get(3), "error")?,
            fitted_order: parse(rec.get(4), "fitted_order")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.00158510637908252240537862224, 1e-300, 6.02e23] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert!(num(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn study_round_trip() {
        let rows = vec![StudyRow {
            level: 2,
            rtol: 10f64.powf(-3.5),
            atol: 10f64.powf(-6.5),
            mean_dt: 17.065216560159625 / 1456.0,
            error: 0.272,
            naccept: 1456,
            nreject: 12,
        }];
        let mut buf = Vec::new();
        write_study_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("level,rtol,atol,mean_dt,error,naccept,nreject\n"));
        assert_eq!(read_study_csv(buf.as_slice()).unwrap(), rows);
    }
}
