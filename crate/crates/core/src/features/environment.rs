//! Per-sample context annotations and the environment vector.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub id: String,
    pub driver_id: String,
    pub domain: String,
    /// Empty for unlabelled target samples.
    #[serde(default)]
    pub label: String,
    pub lane_left: f64,
    pub lane_right: f64,
    pub intersection: f64,
    /// km/h.
    pub speed: f64,
}

fn check_flag(name: &str, v: f64, origin: &str) -> Result<()> {
    if v == 0.0 || v == 1.0 {
        Ok(())
    } else {
        Err(Error::schema_at(origin, format!("flag `{name}` must be 0 or 1, got {v}")))
    }
}

impl ContextRecord {
    pub fn validate(&self, origin: &str) -> Result<()> {
        check_flag("lane_left", self.lane_left, origin)?;
        check_flag("lane_right", self.lane_right, origin)?;
        check_flag("intersection", self.intersection, origin)?;
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::schema_at(origin, format!("speed must be finite and non-negative, got {}", self.speed)));
        }
        Ok(())
    }
}

/// `[lane_left, lane_right, intersection, speed]`, or the first three when
/// `exclude_speed` is set.
pub fn environment_features(rec: &ContextRecord, exclude_speed: bool) -> Result<Vec<f64>> {
    rec.validate(&rec.id)?;
    let mut eta = vec![rec.lane_left, rec.lane_right, rec.intersection];
    if !exclude_speed {
        eta.push(rec.speed);
    }
    Ok(eta)
}

/// Reads the context CSV (`id,driver_id,domain,label,lane_left,lane_right,intersection,speed`),
/// keyed by id.
pub fn read_context_csv(path: &Path) -> Result<BTreeMap<String, ContextRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_context_csv(&text, &path.display().to_string())
}

pub fn parse_context_csv(text: &str, origin: &str) -> Result<BTreeMap<String, ContextRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (idx, rec) in reader.deserialize::<ContextRecord>().enumerate() {
        let at = format!("{origin}:{}", idx + 2);
        let rec = rec.map_err(|e| Error::schema_at(&at, e))?;
        rec.validate(&at)?;
        if out.contains_key(&rec.id) {
            return Err(Error::schema_at(&at, format!("duplicate id `{}`", rec.id)));
        }
        out.insert(rec.id.clone(), rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(lane_left: f64) -> ContextRecord {
        ContextRecord {
            id: "s1".into(),
            driver_id: "d1".into(),
            domain: "source".into(),
            label: "lane_left".into(),
            lane_left,
            lane_right: 0.0,
            intersection: 0.0,
            speed: 62.5,
        }
    }

    #[test]
    fn widths_follow_speed_switch() {
        assert_eq!(environment_features(&record(1.0), false).unwrap(), vec![1.0, 0.0, 0.0, 62.5]);
        assert_eq!(environment_features(&record(1.0), true).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn non_binary_flag_rejected() {
        let err = environment_features(&record(0.5), true).unwrap_err();
        assert!(err.to_string().contains("lane_left"));
    }

    #[test]
    fn parses_csv() {
        let text = "id,driver_id,domain,label,lane_left,lane_right,intersection,speed\n\
                    a,d1,source,turn_left,0,0,1,30\n\
                    b,d2,target,,1,1,0,80\n";
        let map = parse_context_csv(text, "ctx.csv").unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["b"].label, "");
        assert_eq!(map["a"].intersection, 1.0);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "id,driver_id,domain,label,lane_left,lane_right,speed\na,d1,source,straight,0,0,30\n";
        assert!(matches!(parse_context_csv(text, "ctx.csv"), Err(Error::Schema(_))));
    }
}
