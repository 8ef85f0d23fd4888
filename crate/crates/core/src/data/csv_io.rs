use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, SecondsFormat};

use super::DataError;

/// One row of the normalized load CSV: `timestamp,power_kw[,occupancy]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadCsvRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub power_kw: f64,
    pub occupancy: Option<bool>,
}

fn parse_err(line: u64, column: usize, reason: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        column,
        reason: reason.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<LoadCsvRecord>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

/// Parses and validates a load CSV. Line numbers in errors are 1-based and
/// count the header.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<LoadCsvRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(1, 1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let with_occupancy = match names.as_slice() {
        ["timestamp", "power_kw"] => false,
        ["timestamp", "power_kw", "occupancy"] => true,
        _ => return Err(parse_err(1, 1, format!("expected header timestamp,power_kw[,occupancy], got {}", names.join(",")))),
    };
    let expected_fields = if with_occupancy { 3 } else { 2 };
    let mut out = Vec::new();
    let mut prev: Option<(DateTime<FixedOffset>, u64)> = None;
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, 1, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != expected_fields {
            return Err(parse_err(line, row.len().min(expected_fields) + 1, format!("expected {expected_fields} fields, found {}", row.len())));
        }
        let timestamp = DateTime::parse_from_rfc3339(row[0].trim()).map_err(|e| parse_err(line, 1, format!("bad timestamp {:?}: {e}", &row[0])))?;
        let power_kw: f64 = row[1].trim().parse().map_err(|_| parse_err(line, 2, format!("bad power {:?}", &row[1])))?;
        if !power_kw.is_finite() || power_kw < 0.0 {
            return Err(parse_err(line, 2, format!("power must be finite and non-negative, got {power_kw}")));
        }
        let occupancy = if with_occupancy {
            match row[2].trim() {
                "0" => Some(false),
                "1" => Some(true),
                "" => None,
                other => return Err(parse_err(line, 3, format!("occupancy must be 0 or 1, got {other:?}"))),
            }
        } else {
            None
        };
        if let Some((prev_ts, prev_line)) = prev {
            if timestamp <= prev_ts {
                return Err(DataError::NonMonotone {
                    previous_line: prev_line,
                    line,
                });
            }
        }
        prev = Some((timestamp, line));
        out.push(LoadCsvRecord {
            timestamp,
            power_kw,
            occupancy,
        });
    }
    Ok(out)
}

/// Writes records in the normalized format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(records: &[LoadCsvRecord], mut writer: W) -> std::io::Result<()> {
    let with_occupancy = records.iter().any(|r| r.occupancy.is_some());
    if with_occupancy {
        writer.write_all(b"timestamp,power_kw,occupancy\n")?;
    } else {
        writer.write_all(b"timestamp,power_kw\n")?;
    }
    for r in records {
        let ts = r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true);
        if with_occupancy {
            let occ = match r.occupancy {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            writeln!(writer, "{ts},{},{occ}", r.power_kw)?;
        } else {
            writeln!(writer, "{ts},{}", r.power_kw)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "timestamp,power_kw,occupancy\n\
2012-06-01T00:00:00Z,0.25,1\n\
2012-06-01T00:00:01Z,0.3000000000000001,0\n\
2012-06-01T00:00:02+02:00,1.5,\n";

    #[test]
    fn parses_and_round_trips() {
        let recs = read_csv("timestamp,power_kw,occupancy\n2012-06-01T00:00:00Z,0.25,1\n2012-06-01T00:00:01Z,0.3000000000000001,0\n".as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].occupancy, Some(false));
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "timestamp,power_kw,occupancy\n2012-06-01T00:00:00Z,0.25,1\n2012-06-01T00:00:01Z,0.3000000000000001,0\n"
        );
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn offsets_are_accepted_and_ordering_uses_instants() {
        // 00:00:02+02:00 is earlier than 00:00:01Z
        match read_csv(SAMPLE.as_bytes()) {
            Err(DataError::NonMonotone { previous_line, line }) => assert_eq!((previous_line, line), (3, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_power_reports_line() {
        let err = read_csv("timestamp,power_kw\n2012-06-01T00:00:00Z,1\n2012-06-01T00:00:01Z,-0.1\n".as_bytes()).unwrap_err();
        match err {
            DataError::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_names_both_lines() {
        let err = read_csv("timestamp,power_kw\n2012-06-01T00:00:00Z,1\n2012-06-01T00:00:00Z,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::NonMonotone { previous_line: 2, line: 3 }));
        assert!(err.to_string().contains("line 2 and line 3"));
    }

    #[test]
    fn bad_header_and_fields_are_rejected() {
        assert!(read_csv("time,power\n".as_bytes()).is_err());
        assert!(read_csv("timestamp,power_kw\nnot-a-date,1\n".as_bytes()).is_err());
        assert!(read_csv("timestamp,power_kw,occupancy\n2012-06-01T00:00:00Z,1,2\n".as_bytes()).is_err());
    }
}
