//! CSV output shared by the CLI and the experiment harness.
//!
//! All tables are long format with a header row. Floats are written with
//! 17 significant digits, which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::agent_sim::{AgentPopulation, Transfer};
use crate::diagnostics::Metrics;
use crate::error::{Error, Result};
use crate::mass::ProbMass;
use crate::params::Cap;

/// Renders `x` with 17 significant digits.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("not a number: `{s}`")))
}

/// A row of a homogeneous table.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn emit_csv_to_writer<R: CsvRecord, W: Write>(records: &[R], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(R::header())?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    emit_csv_to_writer(records, file)
}

pub fn csv_bytes<R: CsvRecord>(records: &[R]) -> Vec<u8> {
    let mut buf = Vec::new();
    emit_csv_to_writer(records, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// `time,n,p_n`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateRow {
    pub time: f64,
    pub n: usize,
    pub p_n: f64,
}

impl CsvRecord for StateRow {
    fn header() -> &'static [&'static str] {
        &["time", "n", "p_n"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.time),
            self.n.to_string(),
            format_float(self.p_n),
        ]
    }
}

/// `time,n,count`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountRow {
    pub time: f64,
    pub n: usize,
    pub count: usize,
}

impl CsvRecord for CountRow {
    fn header() -> &'static [&'static str] {
        &["time", "n", "count"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.time),
            self.n.to_string(),
            self.count.to_string(),
        ]
    }
}

/// `n,p_n`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRow {
    pub n: usize,
    pub p_n: f64,
}

impl CsvRecord for MassRow {
    fn header() -> &'static [&'static str] {
        &["n", "p_n"]
    }
    fn fields(&self) -> Vec<String> {
        vec![self.n.to_string(), format_float(self.p_n)]
    }
}

impl CsvRecord for Transfer {
    fn header() -> &'static [&'static str] {
        &["time", "giver", "receiver"]
    }
    fn fields(&self) -> Vec<String> {
        vec![
            format_float(self.time),
            self.giver.to_string(),
            self.receiver.to_string(),
        ]
    }
}

impl CsvRecord for Metrics {
    fn header() -> &'static [&'static str] {
        &[
            "time",
            "H",
            "H_ab",
            "H_ab_tilde",
            "gini",
            "lambda_r",
            "lambda_g",
            "exp_moment_2",
            "l1_to_equilibrium",
        ]
    }
    fn fields(&self) -> Vec<String> {
        [
            self.time,
            self.h,
            self.h_ab,
            self.h_ab_tilde,
            self.gini,
            self.lambda_r,
            self.lambda_g,
            self.exp_moment_2,
            self.l1_to_equilibrium,
        ]
        .into_iter()
        .map(format_float)
        .collect()
    }
}

/// Cells written for a state: every nonzero cell plus all `n ≤ b + 1`.
fn keep_cell(n: usize, value: bool, b: Cap) -> bool {
    value || b.finite().is_some_and(|b| n as u64 <= b + 1)
}

pub fn state_rows(time: f64, p: &ProbMass, b: Cap) -> Vec<StateRow> {
    p.as_slice()
        .iter()
        .enumerate()
        .filter(|(n, &x)| keep_cell(*n, x > 0.0, b))
        .map(|(n, &p_n)| StateRow { time, n, p_n })
        .collect()
}

pub fn mass_rows(p: &ProbMass, b: Cap) -> Vec<MassRow> {
    state_rows(0.0, p, b)
        .into_iter()
        .map(|r| MassRow { n: r.n, p_n: r.p_n })
        .collect()
}

pub fn count_rows(pop: &AgentPopulation, b: Cap) -> Vec<CountRow> {
    pop.histogram()
        .into_iter()
        .enumerate()
        .filter(|(n, c)| keep_cell(*n, *c > 0, b))
        .map(|(n, count)| CountRow {
            time: pop.time(),
            n,
            count,
        })
        .collect()
}

/// Reads a `time,n,p_n` table and groups rows by time, in file order.
/// Each group becomes a dense vector on `0..=n_max`.
pub fn read_states<R: Read>(input: R, n_max: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("missing column `{name}`")))
    };
    let (ti, ni, pi) = (col("time")?, col("n")?, col("p_n")?);

    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Parse("short row".into()));
        let t = parse_float(field(ti)?)?;
        let n: usize = field(ni)?
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad index `{}`", &rec[ni])))?;
        let p = parse_float(field(pi)?)?;
        if n > n_max {
            if p != 0.0 {
                return Err(Error::TruncationTooSmall { n_max, required: n });
            }
            continue;
        }
        match groups.last_mut() {
            Some((gt, v)) if gt.to_bits() == t.to_bits() => v[n] = p,
            _ => {
                let mut v = vec![0.0; n_max + 1];
                v[n] = p;
                groups.push((t, v));
            }
        }
    }
    Ok(groups)
}

/// Largest index present in a `time,n,p_n` (or `n,p_n`) table.
pub fn max_index<R: Read>(input: R) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let ni = reader
        .headers()?
        .iter()
        .position(|h| h == "n")
        .ok_or_else(|| Error::Parse("missing column `n`".into()))?;
    let mut top = 0;
    for rec in reader.records() {
        let rec = rec?;
        let n: usize = rec[ni]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad index `{}`", &rec[ni])))?;
        top = top.max(n);
    }
    Ok(top)
}

/// Reads an `n,p_n` table into a dense vector on `0..=n_max`.
pub fn read_mass<R: Read>(input: R, n_max: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let ni = headers
        .iter()
        .position(|h| h == "n")
        .ok_or_else(|| Error::Parse("missing column `n`".into()))?;
    let pi = headers
        .iter()
        .position(|h| h == "p_n")
        .ok_or_else(|| Error::Parse("missing column `p_n`".into()))?;
    let mut v = vec![0.0; n_max + 1];
    for rec in reader.records() {
        let rec = rec?;
        let n: usize = rec[ni]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad index `{}`", &rec[ni])))?;
        let p = parse_float(&rec[pi])?;
        if n > n_max {
            if p != 0.0 {
                return Err(Error::TruncationTooSmall { n_max, required: n });
            }
            continue;
        }
        v[n] = p;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(csv_bytes::<StateRow>(&[]), b"time,n,p_n\n");
    }

    #[test]
    fn state_rows_cover_cap_window() {
        let mut v = vec![0.0; 13];
        v[7] = 1.0;
        let p = ProbMass::normalized(v).unwrap();
        let rows = state_rows(0.5, &p, Cap::Finite(10));
        assert_eq!(
            rows.iter().map(|r| r.n).collect::<Vec<_>>(),
            (0..=11).collect::<Vec<_>>()
        );
        let rows = state_rows(0.5, &p, Cap::Infinite);
        assert_eq!(rows.len(), 1);
        let text = String::from_utf8(csv_bytes(&rows)).unwrap();
        assert_eq!(
            text,
            "time,n,p_n\n5.0000000000000000e-1,7,1.0000000000000000e0\n"
        );
    }

    #[test]
    fn special_floats() {
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert!(parse_float("inf").unwrap().is_infinite());
        assert!(parse_float("abc").is_err());
    }

    proptest! {
        #[test]
        fn prob_mass_round_trips(w in proptest::collection::vec(0.0f64..1.0, 1..60), t in 0.0f64..100.0) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 0.0);
            let p = ProbMass::normalized(w).unwrap();
            let bytes = csv_bytes(&state_rows(t, &p, Cap::Finite(3)));
            let groups = read_states(bytes.as_slice(), p.n_max()).unwrap();
            prop_assert_eq!(groups.len(), 1);
            prop_assert_eq!(groups[0].0, t);
            prop_assert_eq!(&groups[0].1[..], p.as_slice());
        }
    }
}
