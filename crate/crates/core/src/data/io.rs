//! Line-delimited dataset files.
//!
//! The first line is the header `{"schema":"darnn-dataset","version":1}`;
//! each further line is one [`SequenceObservation`]. Records are written
//! sorted by id.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SequenceObservation;
use crate::error::{Error, Result};

pub const SCHEMA_NAME: &str = "darnn-dataset";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    version: u32,
}

pub fn write_dataset_string(records: &[SequenceObservation]) -> Result<String> {
    let mut sorted: Vec<&SequenceObservation> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for w in sorted.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::Schema(format!("duplicate record id `{}`", w[0].id)));
        }
    }
    let header = Header { schema: SCHEMA_NAME.into(), version: SCHEMA_VERSION };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for (i, r) in sorted.iter().enumerate() {
        if let Err((field, detail)) = r.validate() {
            return Err(Error::Schema(format!("record {i} (`{}`): field `{field}`: {detail}", r.id)));
        }
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Schema(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, records: &[SequenceObservation]) -> Result<()> {
    let text = write_dataset_string(records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<SequenceObservation>> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| Error::schema_at(origin, "empty dataset file"))?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| Error::schema_at(origin, format!("bad header: {e}")))?;
    if header.schema != SCHEMA_NAME || header.version != SCHEMA_VERSION {
        return Err(Error::schema_at(
            origin,
            format!("expected schema {SCHEMA_NAME} v{SCHEMA_VERSION}, found {} v{}", header.schema, header.version),
        ));
    }
    let mut records = Vec::new();
    let mut eta_dim = None;
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{origin}: record {i}");
        let rec: SequenceObservation = serde_json::from_str(line).map_err(|e| Error::schema_at(&at, e))?;
        if let Err((field, detail)) = rec.validate() {
            return Err(Error::schema_at(&at, format!("field `{field}`: {detail}")));
        }
        match eta_dim {
            None => eta_dim = Some(rec.eta_dim()),
            Some(d) if d != rec.eta_dim() => {
                return Err(Error::schema_at(
                    &at,
                    format!("field `frames[0].eta`: width {} differs from earlier records ({d})", rec.eta_dim()),
                ))
            }
            _ => {}
        }
        records.push(rec);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

pub fn load_dataset(path: &Path) -> Result<Vec<SequenceObservation>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{class_counts, Manoeuvre};
    use crate::features::FrameFeatures;
    use crate::losses::Domain;

    fn frame(v: f64) -> FrameFeatures {
        let mut phi = vec![0.0; 13];
        phi[2] = 1.0;
        phi[9] = 1.0;
        phi[11] = v;
        FrameFeatures { phi, gamma: vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0], eta: vec![0.0, 1.0, 0.0] }
    }

    fn obs(id: &str, label: Option<Manoeuvre>, domain: Domain) -> SequenceObservation {
        SequenceObservation {
            id: id.into(),
            driver_id: "d0".into(),
            domain,
            label,
            frames: (0..5).map(|t| frame(0.1 * t as f64 + 1.0 / 3.0)).collect(),
        }
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let recs = vec![
            obs("b", Some(Manoeuvre::LaneLeft), Domain::Source),
            obs("a", None, Domain::Target),
            obs("c", Some(Manoeuvre::TurnRight), Domain::Target),
        ];
        let first = write_dataset_string(&recs).unwrap();
        let loaded = parse_dataset(&first, "mem").unwrap();
        assert_eq!(loaded[0].id, "a");
        let second = write_dataset_string(&loaded).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn source_without_label_rejected() {
        let good = write_dataset_string(&[obs("a", Some(Manoeuvre::Straight), Domain::Source)]).unwrap();
        let bad = good.replace(",\"label\":\"straight\"", "");
        let err = parse_dataset(&bad, "set.jsonl").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("record 0") && err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn version_mismatch_rejected() {
        let text = "{\"schema\":\"darnn-dataset\",\"version\":2}\n";
        assert!(parse_dataset(text, "x").is_err());
    }

    #[test]
    fn brain4cars_shaped_import() {
        let counts = [234, 124, 58, 123, 55];
        let mut recs = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for k in 0..n {
                let mut r = obs(&format!("b4c-{c}-{k:03}"), Manoeuvre::from_index(c), Domain::Source);
                r.frames = vec![frame(0.0); 150];
                recs.push(r);
            }
        }
        let text = write_dataset_string(&recs).unwrap();
        let loaded = parse_dataset(&text, "b4c").unwrap();
        // The quoted per-class counts sum to 594.
        assert_eq!(loaded.len(), counts.iter().sum::<usize>());
        assert_eq!(class_counts(&loaded), counts);
    }
}
