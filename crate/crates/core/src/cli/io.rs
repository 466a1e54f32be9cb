//! CSV ingestion and emission.

use crate::error::{Error, Result};
use crate::model::{Dataset, Group, SubjectRecord};
use std::io::{Read, Write};

/// Formats like C's `%.10g`: ten significant digits, trailing zeros
/// removed, exponent notation outside `[1e-4, 1e10)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// `x` rounded to the value `fmt_num` prints.
pub fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_num(x).parse().unwrap_or(x)
    } else {
        x
    }
}

const HEADER: [&str; 3] = ["group", "response", "time"];

/// Reads `group,response,time` records. Line numbers in errors count the
/// header as line 1.
pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header 'group,response,time', found '{}'", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let group: Group = row[0]
            .parse()
            .map_err(|_| bad(format!("group must be E or C, got '{}'", &row[0])))?;
        let responder = match &row[1] {
            "1" => true,
            "0" => false,
            other => return Err(bad(format!("response must be 0 or 1, got '{other}'"))),
        };
        let time: f64 = row[2]
            .parse()
            .map_err(|_| bad(format!("time is not a number: '{}'", &row[2])))?;
        if !(time > 0.0 && time.is_finite()) {
            return Err(bad(format!("time must be positive, got {}", &row[2])));
        }
        records.push(SubjectRecord {
            group,
            responder,
            time,
        });
    }
    Ok(Dataset::new(records))
}

pub fn read_dataset(path: &std::path::Path) -> Result<Dataset> {
    parse_dataset(std::fs::File::open(path)?)
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// CSV writer that formats floats with [`fmt_num`].
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    pub fn new(writer: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(header).map_err(csv_io)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, fields: &[Cell]) -> Result<()> {
        self.inner
            .write_record(fields.iter().map(Cell::render))
            .map_err(csv_io)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.to_string(),
        }
    }
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut out = CsvOut::new(writer, &HEADER)?;
    for r in &data.records {
        out.row(&[
            Cell::Text(r.group.label()),
            Cell::Int(r.responder as u64),
            Cell::Num(r.time),
        ])?;
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format() {
        assert_eq!(fmt_num(0.05), "0.05");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(1.0 / 3.0), "0.3333333333");
        assert_eq!(fmt_num(123456.789), "123456.789");
        assert_eq!(fmt_num(1.5e-7), "1.5e-07");
        assert_eq!(fmt_num(2.0e12), "2e+12");
        assert_eq!(fmt_num(-0.000123456789012), "-0.000123456789");
        assert_eq!(fmt_num(9999999999.5), "1e+10");
    }

    #[test]
    fn parses_and_reports_lines() {
        let ok = "group,response,time\nE,1,1.0\nC,0,2\n";
        let d = parse_dataset(ok.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        let bad = "group,response,time\nE,1,1.0\nC,0,-2\n";
        match parse_dataset(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_dataset("g,r,t\n".as_bytes()).is_err());
        assert!(parse_dataset("group,response,time\nX,1,1\n".as_bytes()).is_err());
        assert!(parse_dataset("group,response,time\nE,2,1\n".as_bytes()).is_err());
    }
}
