//! Per-network result records and their CSV wire format.
//!
//! The record file is the determinism contract of a campaign: identical
//! config and master seed must produce byte-identical sorted files
//! regardless of worker count. Floats are therefore written with Rust's
//! shortest round-trip formatting and parsed back bit-exactly; there is
//! no locale, quoting, or padding involved.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// Column header of a record file.
pub const HEADER: &str = "index,seed,e_s,e_t,j_in,j_rec,j_out,tau2,tau3,tau4,weight_1exc,flags";

/// Witness orders representable in the record schema.
pub const SUPPORTED_ORDERS: [usize; 3] = [2, 3, 4];

/// One network's observables. Failed stages leave NaN in the numeric
/// fields and an explanatory flag.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    /// Position in the campaign ensemble; also the sort key.
    pub index: u64,
    /// Geometry substream seed.
    pub seed: u64,
    pub e_s: f64,
    pub e_t: f64,
    pub j_in: f64,
    pub j_rec: f64,
    pub j_out: f64,
    /// Witness scores keyed by order; absent when skipped or failed.
    pub tau: BTreeMap<u32, f64>,
    /// Excited-sector weight of the stationary state.
    pub weight_1exc: f64,
    pub flags: Vec<String>,
}

impl NetworkRecord {
    /// A record carrying only identity and a failure flag.
    pub fn failed(index: u64, seed: u64, flag: impl Into<String>) -> Self {
        NetworkRecord {
            index,
            seed,
            e_s: f64::NAN,
            e_t: f64::NAN,
            j_in: f64::NAN,
            j_rec: f64::NAN,
            j_out: f64::NAN,
            tau: BTreeMap::new(),
            weight_1exc: f64::NAN,
            flags: vec![flag.into()],
        }
    }

    /// True when the core observables are unusable.
    pub fn is_failed(&self) -> bool {
        self.e_s.is_nan() || self.e_t.is_nan()
    }

    /// Serializes one CSV line (no terminator).
    pub fn to_csv_line(&self) -> Result<String> {
        for flag in &self.flags {
            if flag.contains([',', ';', '\n', '\r']) || flag.is_empty() {
                return Err(Error::Config(format!("flag {flag:?} not encodable")));
            }
        }
        let tau_field = |k: u32| self.tau.get(&k).map(|v| format!("{v}")).unwrap_or_default();
        Ok(format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.index,
            self.seed,
            self.e_s,
            self.e_t,
            self.j_in,
            self.j_rec,
            self.j_out,
            tau_field(2),
            tau_field(3),
            tau_field(4),
            self.weight_1exc,
            self.flags.join(";")
        ))
    }

    /// Parses one CSV line. `line_no` is used in error messages only.
    pub fn from_csv_line(line: &str, line_no: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 12 {
            return Err(Error::RecordParse {
                field: "line",
                line: line_no,
                detail: format!("expected 12 fields, got {}", fields.len()),
            });
        }
        let parse_u64 = |s: &str, field: &'static str| {
            s.parse::<u64>().map_err(|e| Error::RecordParse {
                field,
                line: line_no,
                detail: e.to_string(),
            })
        };
        let parse_f64 = |s: &str, field: &'static str| {
            s.parse::<f64>().map_err(|e| Error::RecordParse {
                field,
                line: line_no,
                detail: e.to_string(),
            })
        };
        let mut tau = BTreeMap::new();
        for (slot, k) in [(7usize, 2u32), (8, 3), (9, 4)] {
            if !fields[slot].is_empty() {
                tau.insert(k, parse_f64(fields[slot], "tau")?);
            }
        }
        let flags = if fields[11].is_empty() {
            Vec::new()
        } else {
            fields[11].split(';').map(str::to_owned).collect()
        };
        Ok(NetworkRecord {
            index: parse_u64(fields[0], "index")?,
            seed: parse_u64(fields[1], "seed")?,
            e_s: parse_f64(fields[2], "e_s")?,
            e_t: parse_f64(fields[3], "e_t")?,
            j_in: parse_f64(fields[4], "j_in")?,
            j_rec: parse_f64(fields[5], "j_rec")?,
            j_out: parse_f64(fields[6], "j_out")?,
            tau,
            weight_1exc: parse_f64(fields[10], "weight_1exc")?,
            flags,
        })
    }
}

/// Serializes records (assumed already sorted) with the canonical header.
pub fn to_csv(records: &[NetworkRecord]) -> Result<String> {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.to_csv_line()?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a full record file, header included.
pub fn from_csv(text: &str) -> Result<Vec<NetworkRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        _ => return Err(Error::RecordHeader { expected: HEADER }),
    }
    lines
        .enumerate()
        .map(|(i, line)| NetworkRecord::from_csv_line(line, i + 2))
        .collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[NetworkRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = to_csv(records)?;
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<NetworkRecord>> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> NetworkRecord {
        let mut tau = BTreeMap::new();
        tau.insert(2, 0.8123456789012345);
        tau.insert(3, -0.05);
        NetworkRecord {
            index: 42,
            seed: 0xDEADBEEF,
            e_s: 0.123456789,
            e_t: 3.0654e-3,
            j_in: 1.9999e-4,
            j_rec: 1.5e-4,
            j_out: 4.9e-5,
            tau,
            weight_1exc: 9.87e-6,
            flags: vec![],
        }
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let mut records = vec![sample_record()];
        records.push(NetworkRecord {
            index: 43,
            tau: BTreeMap::new(),
            flags: vec!["tau_skipped".into(), "rates_warn".into()],
            ..sample_record()
        });
        records.push(NetworkRecord::failed(44, 7, "geometry_failed"));
        let text = to_csv(&records).unwrap();
        let parsed = from_csv(&text).unwrap();
        let again = to_csv(&parsed).unwrap();
        assert_eq!(text, again);
        // Bit-exact floats after the round trip.
        assert_eq!(parsed[0].e_s.to_bits(), records[0].e_s.to_bits());
        assert_eq!(parsed[0].tau[&2].to_bits(), records[0].tau[&2].to_bits());
        assert!(parsed[2].e_s.is_nan());
        assert_eq!(parsed[2].flags, vec!["geometry_failed".to_string()]);
    }

    #[test]
    fn missing_tau_fields_stay_empty() {
        let record = NetworkRecord {
            tau: BTreeMap::new(),
            ..sample_record()
        };
        let line = record.to_csv_line().unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[7], "");
        assert_eq!(fields[8], "");
        assert_eq!(fields[9], "");
        let back = NetworkRecord::from_csv_line(&line, 2).unwrap();
        assert!(back.tau.is_empty());
    }

    #[test]
    fn header_and_field_counts_are_enforced() {
        assert!(matches!(
            from_csv("wrong,header\n1,2,3\n"),
            Err(Error::RecordHeader { .. })
        ));
        let mut text = String::from(HEADER);
        text.push_str("\n1,2,3\n");
        assert!(matches!(
            from_csv(&text),
            Err(Error::RecordParse { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_numbers_name_the_field() {
        let line = "1,2,notanumber,0,0,0,0,,,,0,";
        match NetworkRecord::from_csv_line(line, 5) {
            Err(Error::RecordParse { field, line, .. }) => {
                assert_eq!(field, "e_s");
                assert_eq!(line, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flags_with_separators_are_rejected() {
        let mut record = sample_record();
        record.flags = vec!["bad,flag".into()];
        assert!(record.to_csv_line().is_err());
        record.flags = vec!["bad;flag".into()];
        assert!(record.to_csv_line().is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![sample_record()];
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back, records);
    }
}
