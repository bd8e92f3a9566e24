//! Parsing of delimiter-separated tick files into [`TickRecord`]s.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use tickbound_core::{Price, TickRecord};

use crate::error::{Error, Result};

/// A column reference: a header name, or a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.to_string()),
        })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Index(i) => write!(f, "{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

impl Column {
    fn resolve(&self, header: &csv::StringRecord) -> Result<usize> {
        match self {
            Column::Index(i) if *i >= 1 && *i <= header.len() => Ok(i - 1),
            Column::Index(_) => Err(Error::MissingColumn(self.to_string())),
            Column::Name(name) => header
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::MissingColumn(name.clone())),
        }
    }
}

/// Which columns hold the stock code, the time and the prediction target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub code: Column,
    pub time: Column,
    /// Optional separate date column; joined to `time` with a space.
    pub date: Option<Column>,
    /// Target column: last price, or e.g. turnover.
    pub price: Column,
    /// Extra decimal columns carried through on each record.
    pub extra: Vec<Column>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            code: Column::Name("code".into()),
            time: Column::Name("time".into()),
            date: None,
            price: Column::Name("last_price".into()),
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTicks {
    pub records: Vec<TickRecord>,
    pub malformed: usize,
}

/// Parses a decimal string to integer hundredths. Digits past the second
/// decimal place are rounded half away from zero.
pub fn parse_hundredths(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let fb = frac.as_bytes();
    let digit = |k: usize| fb.get(k).map_or(0, |b| (b - b'0') as i64);
    let mut cents = whole
        .checked_mul(100)?
        .checked_add(digit(0) * 10 + digit(1))?;
    if digit(2) >= 5 {
        cents += 1;
    }
    Some(if neg { -cents } else { cents })
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y/%m/%d %H:%M:%S%.f",
    "%Y%m%d %H:%M:%S%.f",
    "%Y%m%d %H%M%S",
    "%Y%m%d%H%M%S",
];

/// Parses a timestamp to epoch seconds, treating wall time as UTC. Bare
/// integers are epoch seconds (10 digits or fewer) or milliseconds.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if !s.is_empty() && s.len() != 14 && s.bytes().all(|b| b.is_ascii_digit()) {
        let v: i64 = s.parse().ok()?;
        return Some(if s.len() > 11 { v / 1000 } else { v });
    }
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Picks tab when the header line contains one, comma otherwise.
pub fn detect_delimiter(header_line: &str) -> u8 {
    if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses delimiter-separated tick text with a header row. Rows whose code,
/// time or target cannot be parsed (or whose target is not positive) are
/// skipped and counted.
pub fn parse_ticks<R: Read>(mut input: R, schema: &Schema, source: &str) -> Result<ParsedTicks> {
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io(source, e))?;
    let first_line = text.lines().next().unwrap_or("");
    if first_line.trim().is_empty() {
        return Err(Error::EmptyInput {
            path: source.to_string(),
            malformed: 0,
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(first_line))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let code_i = schema.code.resolve(&header)?;
    let time_i = schema.time.resolve(&header)?;
    let date_i = schema
        .date
        .as_ref()
        .map(|c| c.resolve(&header))
        .transpose()?;
    let price_i = schema.price.resolve(&header)?;
    let extra: Vec<(String, usize)> = schema
        .extra
        .iter()
        .map(|c| {
            let i = c.resolve(&header)?;
            Ok((header[i].trim().to_string(), i))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut malformed = 0;
    for row in reader.records() {
        let Ok(row) = row else {
            malformed += 1;
            continue;
        };
        let parsed = (|| {
            let code = row.get(code_i).filter(|c| !c.is_empty())?;
            let timestamp = match date_i {
                Some(d) => parse_timestamp(&format!("{} {}", row.get(d)?, row.get(time_i)?))?,
                None => parse_timestamp(row.get(time_i)?)?,
            };
            let price = parse_hundredths(row.get(price_i)?).filter(|&c| c > 0)?;
            let extra = extra
                .iter()
                .filter_map(|(name, i)| {
                    let v = parse_hundredths(row.get(*i)?)?;
                    Some((name.clone(), Price(v)))
                })
                .collect::<BTreeMap<_, _>>();
            Some(TickRecord {
                stock_code: code.to_string(),
                timestamp,
                last_price: Price(price),
                extra,
            })
        })();
        match parsed {
            Some(r) => records.push(r),
            None => malformed += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyInput {
            path: source.to_string(),
            malformed,
        });
    }
    Ok(ParsedTicks { records, malformed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positional() -> Schema {
        Schema {
            code: Column::Index(1),
            time: Column::Index(2),
            price: Column::Index(3),
            ..Schema::default()
        }
    }

    #[test]
    fn parses_a_row() {
        let text = "code,time,price\n000001,2021-01-04 09:30:03,18.60\n";
        let p = parse_ticks(text.as_bytes(), &positional(), "t").unwrap();
        assert_eq!(p.malformed, 0);
        let r = &p.records[0];
        assert_eq!(r.stock_code, "000001");
        assert_eq!(r.timestamp, 1_609_752_603);
        assert_eq!(r.last_price, Price(1860));
    }

    #[test]
    fn skips_malformed_price() {
        let text =
            "code,time,price\n000001,2021-01-04 09:30:03,abc\n000001,2021-01-04 09:30:06,18.61\n";
        let p = parse_ticks(text.as_bytes(), &positional(), "t").unwrap();
        assert_eq!(p.malformed, 1);
        assert_eq!(p.records.len(), 1);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            parse_ticks("".as_bytes(), &positional(), "t"),
            Err(Error::EmptyInput { .. })
        ));
        assert!(matches!(
            parse_ticks("code,time,price\n".as_bytes(), &positional(), "t"),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "code,time,price\n000001,2021-01-04 09:30:03,18.60\n";
        let err = parse_ticks(text.as_bytes(), &Schema::default(), "t").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "last_price"));
        let schema = Schema {
            price: Column::Index(9),
            ..positional()
        };
        assert!(matches!(
            parse_ticks(text.as_bytes(), &schema, "t"),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn tab_separated_named_columns_with_extras() {
        let text = "Code\tDate\tTime\tLast_Price\tTurnover\n\
                    000002\t20210104\t09:30:03\t30.12\t1234.5\n\
                    000002\t20210104\t09:30:06\t30.13\tn/a\n";
        let schema = Schema {
            code: "code".parse().unwrap(),
            date: Some("date".parse().unwrap()),
            time: "time".parse().unwrap(),
            price: "last_price".parse().unwrap(),
            extra: vec!["turnover".parse().unwrap()],
        };
        let p = parse_ticks(text.as_bytes(), &schema, "t").unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[0].extra["Turnover"], Price(123_450));
        assert!(p.records[1].extra.is_empty());
        assert_eq!(p.records[1].timestamp - p.records[0].timestamp, 3);
    }

    #[test]
    fn hundredths() {
        assert_eq!(parse_hundredths("18.60"), Some(1860));
        assert_eq!(parse_hundredths("18.6"), Some(1860));
        assert_eq!(parse_hundredths("18"), Some(1800));
        assert_eq!(parse_hundredths(".05"), Some(5));
        assert_eq!(parse_hundredths("10.235"), Some(1024));
        assert_eq!(parse_hundredths("10.2349"), Some(1023));
        assert_eq!(parse_hundredths("-1.5"), Some(-150));
        assert_eq!(parse_hundredths("abc"), None);
        assert_eq!(parse_hundredths("1e3"), None);
        assert_eq!(parse_hundredths(""), None);
        assert_eq!(parse_hundredths("."), None);
    }

    #[test]
    fn timestamps() {
        let base = parse_timestamp("2021-01-04 09:30:03").unwrap();
        assert_eq!(parse_timestamp("2021-01-04T09:30:03"), Some(base));
        assert_eq!(parse_timestamp("2021/01/04 09:30:03"), Some(base));
        assert_eq!(parse_timestamp("20210104093003"), Some(base));
        assert_eq!(parse_timestamp("2021-01-04 09:30:03.500"), Some(base));
        assert_eq!(parse_timestamp("1609752603"), Some(base));
        assert_eq!(parse_timestamp("1609752603000"), Some(base));
        assert_eq!(parse_timestamp("yesterday"), None);
    }
}
