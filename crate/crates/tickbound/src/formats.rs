//! On-disk formats: series interchange, state sequences, traces, schemes,
//! per-stock metadata and report rows. All CSV files carry a header row.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tickbound_core::predict::{ModelKind, PredictionTrace};
use tickbound_core::{Price, PriceSeries, QuantizationScheme, State};

use crate::error::{Error, Result};

pub const SERIES_HEADER: [&str; 2] = ["epoch_seconds", "price_hundredths"];
pub const STATES_HEADER: [&str; 2] = ["state", "day"];
pub const TRACE_HEADER: [&str; 3] = ["index", "predicted", "actual"];

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Creates `path`, making parent directories as needed.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// File stem used as the stock code for single-stock files
/// (`000001.csv`, `000001.states.csv`, ...).
pub fn stock_code_of(path: &Path) -> String {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("unknown");
    name.split('.').next().unwrap_or(name).to_string()
}

fn row_error(source: &str, line: usize, msg: &str) -> Error {
    Error::parse(source, line, msg)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, source: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    rec.get(i)
        .ok_or_else(|| row_error(source, line, "missing field"))?
        .trim()
        .parse()
        .map_err(|_| row_error(source, line, "unparseable field"))
}

fn expect_header(
    reader: &mut csv::Reader<impl Read>,
    expected: &[&str],
    source: &str,
) -> Result<()> {
    let header = reader.headers()?;
    if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h.trim() != *e) {
        return Err(row_error(
            source,
            1,
            &format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

pub fn write_series<W: Write>(w: W, series: &PriceSeries) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SERIES_HEADER)?;
    for &(ts, p) in series.points() {
        out.write_record([ts.to_string(), p.hundredths().to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<series>", e))?;
    Ok(())
}

pub fn read_series<R: Read>(r: R, stock_code: &str, source: &str) -> Result<PriceSeries> {
    let mut reader = csv::Reader::from_reader(r);
    expect_header(&mut reader, &SERIES_HEADER, source)?;
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        points.push((field(&rec, 0, source)?, Price(field(&rec, 1, source)?)));
    }
    Ok(PriceSeries::from_points(stock_code, points))
}

pub fn read_series_file(path: &Path) -> Result<PriceSeries> {
    read_series(
        open(path)?,
        &stock_code_of(path),
        &path.display().to_string(),
    )
}

/// State sequence with the trading-day index of each position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatesFile {
    pub states: Vec<State>,
    pub day_boundaries: Vec<usize>,
}

pub fn write_states<W: Write>(w: W, states: &[State], day_boundaries: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(STATES_HEADER)?;
    let mut day = 0usize;
    for (i, s) in states.iter().enumerate() {
        while day + 1 < day_boundaries.len() && day_boundaries[day + 1] <= i {
            day += 1;
        }
        out.write_record([s.0.to_string(), day.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<states>", e))?;
    Ok(())
}

/// Reads a states file. A file with only a `state` column is one day long.
pub fn read_states<R: Read>(r: R, source: &str) -> Result<StatesFile> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let header = reader.headers()?.clone();
    if header.get(0).map(str::trim) != Some("state") {
        return Err(row_error(source, 1, "expected header `state[,day]`"));
    }
    let has_day = header.get(1).map(str::trim) == Some("day");
    let mut states = Vec::new();
    let mut day_boundaries = Vec::new();
    let mut last_day: Option<u64> = None;
    for rec in reader.records() {
        let rec = rec?;
        let day: u64 = if has_day { field(&rec, 1, source)? } else { 0 };
        if last_day != Some(day) {
            day_boundaries.push(states.len());
            last_day = Some(day);
        }
        states.push(State(field(&rec, 0, source)?));
    }
    Ok(StatesFile {
        states,
        day_boundaries,
    })
}

pub fn write_trace<W: Write>(w: W, trace: &PredictionTrace) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for (k, (p, a)) in trace.predictions.iter().enumerate() {
        out.write_record([
            (trace.start_index + k).to_string(),
            p.0.to_string(),
            a.0.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn read_trace<R: Read>(
    r: R,
    stock_code: &str,
    model: ModelKind,
    source: &str,
) -> Result<PredictionTrace> {
    let mut reader = csv::Reader::from_reader(r);
    expect_header(&mut reader, &TRACE_HEADER, source)?;
    let mut predictions = Vec::new();
    let mut start_index = None;
    for rec in reader.records() {
        let rec = rec?;
        let index: usize = field(&rec, 0, source)?;
        let expected = start_index.map(|s| s + predictions.len());
        if expected.is_some_and(|e| e != index) {
            let line = rec.position().map_or(0, |p| p.line() as usize);
            return Err(row_error(source, line, "trace indices must be consecutive"));
        }
        start_index.get_or_insert(index);
        predictions.push((
            State(field(&rec, 1, source)?),
            State(field(&rec, 2, source)?),
        ));
    }
    Ok(PredictionTrace {
        stock_code: stock_code.to_string(),
        model,
        predictions,
        start_index: start_index.unwrap_or(0),
    })
}

pub fn write_scheme<W: Write>(w: W, scheme: &QuantizationScheme) -> Result<()> {
    serde_json::to_writer_pretty(w, scheme)?;
    Ok(())
}

pub fn read_scheme<R: Read>(r: R) -> Result<QuantizationScheme> {
    Ok(serde_json::from_reader(r)?)
}

/// Company attributes that tick files do not carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub stock_code: String,
    pub life: Option<f64>,
    pub scale: Option<f64>,
    pub category: Option<u32>,
    pub region: Option<u32>,
}

pub fn read_metadata<R: Read>(r: R) -> Result<BTreeMap<String, Metadata>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for row in reader.deserialize() {
        let m: Metadata = row?;
        if let Some(c) = m.category {
            if !(1..=tickbound_core::stats::CATEGORY_COUNT).contains(&c) {
                return Err(Error::parse(
                    "metadata",
                    0,
                    format!("category {c} out of range 1-20"),
                ));
            }
        }
        if let Some(r) = m.region {
            if !(1..=tickbound_core::stats::REGION_COUNT).contains(&r) {
                return Err(Error::parse(
                    "metadata",
                    0,
                    format!("region {r} out of range 1-32"),
                ));
            }
        }
        out.insert(m.stock_code.clone(), m);
    }
    Ok(out)
}

/// One line of the feature table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub stock_code: String,
    pub avgprice: f64,
    pub volatility: f64,
    pub life: Option<f64>,
    pub scale: Option<f64>,
    pub category: Option<u32>,
    pub region: Option<u32>,
    pub acc_mc: Option<f64>,
    pub acc_dk: Option<f64>,
    pub pi_max: Option<f64>,
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T], header: &[&str]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(header)?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DAY0: i64 = 1_609_718_400;

    proptest! {
        #[test]
        fn series_round_trip(points in proptest::collection::vec((0i64..5 * 86_400, 1i64..1_000_000), 0..200)) {
            let pts = points.iter().map(|&(t, p)| (DAY0 + t, Price(p))).collect();
            let series = PriceSeries::from_points("000001", pts);
            let mut buf = Vec::new();
            write_series(&mut buf, &series).unwrap();
            let back = read_series(buf.as_slice(), "000001", "mem").unwrap();
            prop_assert_eq!(back, series);
        }

        #[test]
        fn states_round_trip(states in proptest::collection::vec(0u32..500, 1..100), cuts in proptest::collection::btree_set(1usize..100, 0..5)) {
            let mut bounds = vec![0];
            bounds.extend(cuts.into_iter().filter(|&c| c < states.len()));
            let states: Vec<State> = states.into_iter().map(State).collect();
            let mut buf = Vec::new();
            write_states(&mut buf, &states, &bounds).unwrap();
            let back = read_states(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back.states, states);
            prop_assert_eq!(back.day_boundaries, bounds);
        }
    }

    #[test]
    fn single_column_states_are_one_day() {
        let back = read_states("state\n3\n4\n3\n".as_bytes(), "mem").unwrap();
        assert_eq!(back.states, vec![State(3), State(4), State(3)]);
        assert_eq!(back.day_boundaries, vec![0]);
    }

    #[test]
    fn trace_round_trip() {
        let t = PredictionTrace {
            stock_code: "x".into(),
            model: ModelKind::Dk,
            predictions: vec![(State(1), State(2)), (State(3), State(3))],
            start_index: 7,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "index,predicted,actual\n7,1,2\n8,3,3\n"
        );
        assert_eq!(
            read_trace(buf.as_slice(), "x", ModelKind::Dk, "mem").unwrap(),
            t
        );
        assert!(read_trace(
            "index,predicted,actual\n1,1,1\n3,1,1\n".as_bytes(),
            "x",
            ModelKind::Mc,
            "m"
        )
        .is_err());
    }

    #[test]
    fn scheme_json_round_trip() {
        let s = QuantizationScheme::fixed_state_count(&[Price(1000), Price(1500)], 100).unwrap();
        let mut buf = Vec::new();
        write_scheme(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("fixed_state_count"));
        assert_eq!(read_scheme(buf.as_slice()).unwrap(), s);
        let t: QuantizationScheme =
            serde_json::from_str(r#"{"mode":"fixed_interval","interval":5}"#).unwrap();
        assert_eq!(t, QuantizationScheme::fixed_interval(Price(5)).unwrap());
    }

    #[test]
    fn bad_series_header() {
        assert!(read_series("a,b\n1,2\n".as_bytes(), "x", "mem").is_err());
    }

    #[test]
    fn metadata_ranges() {
        let ok = "stock_code,life,scale,category,region\n000001,31,36000,10,5\n000002,,,,\n";
        let m = read_metadata(ok.as_bytes()).unwrap();
        assert_eq!(m["000001"].category, Some(10));
        assert_eq!(m["000002"].life, None);
        let bad = "stock_code,life,scale,category,region\n000001,31,36000,21,5\n";
        assert!(read_metadata(bad.as_bytes()).is_err());
    }

    #[test]
    fn stock_codes_from_paths() {
        assert_eq!(stock_code_of(Path::new("/a/000001.csv")), "000001");
        assert_eq!(stock_code_of(Path::new("000001.states.csv")), "000001");
    }
}
