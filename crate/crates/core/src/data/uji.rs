//! Reader for the UJIIndoorLoc CSV files (`trainingData.csv`, `validationData.csv`).

use std::io::Read;
use std::path::Path;

use crate::data::record::{FingerprintRecord, RecordMeta, NOT_DETECTED, UJI_RSSI_RANGE};
use crate::error::{Error, Result};

pub const UJI_APS: usize = 520;
pub const UJI_COLUMNS: usize = 529;
pub const UJI_TRAIN_RECORDS: usize = 19_937;
pub const UJI_TEST_RECORDS: usize = 1_111;
pub const UJI_SOURCE_URL: &str = "https://archive.ics.uci.edu/dataset/310/ujiindoorloc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UjiRole {
    Train,
    Test,
}

impl UjiRole {
    pub fn canonical_count(self) -> usize {
        match self {
            UjiRole::Train => UJI_TRAIN_RECORDS,
            UjiRole::Test => UJI_TEST_RECORDS,
        }
    }
}

pub fn load_ujiindoorloc_csv(path: &Path, role: UjiRole) -> Result<Vec<FingerprintRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_ujiindoorloc(file, path)?;
    if records.len() != role.canonical_count() {
        log::warn!(
            "{}: {} records, the canonical {:?} file has {}",
            path.display(),
            records.len(),
            role,
            role.canonical_count()
        );
    }
    Ok(records)
}

/// Parses from any reader; `path` only labels errors.
pub fn read_ujiindoorloc<R: Read>(reader: R, path: &Path) -> Result<Vec<FingerprintRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if headers.len() != UJI_COLUMNS {
        return Err(parse_err(1, format!("expected {UJI_COLUMNS} columns, found {}", headers.len())));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("missing column {name}")))
    };
    let wap: Vec<usize> = (1..=UJI_APS)
        .map(|i| col(&format!("WAP{i:03}")))
        .collect::<Result<_>>()?;
    let lon = col("LONGITUDE")?;
    let lat = col("LATITUDE")?;
    let floor = col("FLOOR")?;
    let building = col("BUILDINGID")?;
    let space = col("SPACEID")?;
    let relpos = col("RELATIVEPOSITION")?;
    let user = col("USERID")?;
    let phone = col("PHONEID")?;
    let ts = col("TIMESTAMP")?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != UJI_COLUMNS {
            return Err(parse_err(line, format!("expected {UJI_COLUMNS} fields, found {}", row.len())));
        }
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let float = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} = `{}` is not a number", headers[i].trim(), field(i))))
        };
        let int = |i: usize| -> Result<i64> {
            let v = float(i)?;
            if v.fract() != 0.0 {
                return Err(parse_err(line, format!("column {} = `{}` is not an integer", headers[i].trim(), field(i))));
            }
            Ok(v as i64)
        };
        let mut rssi = Vec::with_capacity(UJI_APS);
        for &c in &wap {
            let v = float(c)? as f32;
            let detected = (UJI_RSSI_RANGE.0..=UJI_RSSI_RANGE.1).contains(&v);
            if !detected && v != NOT_DETECTED {
                return Err(parse_err(
                    line,
                    format!("{} = {v} dBm is outside [-104, 0] and is not the not-detected marker", headers[c].trim()),
                ));
            }
            rssi.push(v);
        }
        let label = |i: usize| -> Result<usize> {
            let v = int(i)?;
            usize::try_from(v).map_err(|_| parse_err(line, format!("negative label {} = {v}", headers[i].trim())))
        };
        out.push(FingerprintRecord {
            rssi,
            building: label(building)?,
            floor: label(floor)?,
            longitude: float(lon)?,
            latitude: float(lat)?,
            meta: RecordMeta {
                space_id: int(space)?,
                relative_position: int(relpos)?,
                user_id: int(user)?,
                phone_id: int(phone)?,
                timestamp: int(ts)?,
            },
        });
    }
    Ok(out)
}

/// Header line of a UJIIndoorLoc CSV.
pub fn uji_header() -> String {
    let mut cols: Vec<String> = (1..=UJI_APS).map(|i| format!("WAP{i:03}")).collect();
    cols.extend(
        [
            "LONGITUDE",
            "LATITUDE",
            "FLOOR",
            "BUILDINGID",
            "SPACEID",
            "RELATIVEPOSITION",
            "USERID",
            "PHONEID",
            "TIMESTAMP",
        ]
        .map(String::from),
    );
    cols.join(",")
}
