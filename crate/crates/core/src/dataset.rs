//! Line-delimited JSON dataset format.
//!
//! One record per line:
//!
//! ```json
//! {"request": "call the bottom one", "kind": "onscreen",
//!  "entities": [{"type": "phone number", "properties": [["value", "555"]],
//!                "display_text": "555", "box": [0, 0, 10, 2],
//!                "surrounding": [{"text": "Contact", "box": [0, -4, 10, 2]}]}],
//!  "screen": [{"text": "Header", "box": [0, -10, 20, 2]}],
//!  "ground_truth": [1]}
//! ```
//!
//! Blank lines are skipped. Boxes are `[left, top, width, height]`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::screen::{BBox, DataKind, DataPoint, Entity, EntityType, ScreenObject};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    text: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRecord {
    #[serde(rename = "type")]
    entity_type: String,
    #[serde(default)]
    properties: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    display_text: Option<String>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    surrounding: Option<Vec<ObjectRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataPointRecord {
    request: String,
    kind: String,
    entities: Vec<EntityRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    screen: Option<Vec<ObjectRecord>>,
    ground_truth: Vec<usize>,
}

fn to_box([l, t, w, h]: [f64; 4]) -> Result<BBox> {
    BBox::new(l, t, w, h)
}

impl ObjectRecord {
    fn from_domain(o: &ScreenObject) -> Self {
        Self {
            text: o.text().to_owned(),
            bbox: o.bbox().to_array(),
        }
    }

    fn into_domain(self) -> Result<ScreenObject> {
        ScreenObject::new(self.text, to_box(self.bbox)?)
    }
}

impl EntityRecord {
    fn from_domain(e: &Entity) -> Self {
        Self {
            entity_type: e.entity_type().as_str().to_owned(),
            properties: e.properties().to_vec(),
            display_text: e.display_text().map(str::to_owned),
            bbox: e.placement().map(|p| p.bbox.to_array()),
            surrounding: e
                .placement()
                .map(|p| p.surrounding.iter().map(ObjectRecord::from_domain).collect()),
        }
    }

    fn into_domain(self) -> Result<Entity> {
        let mut entity = Entity::new(EntityType::new(self.entity_type)?, self.properties)?;
        if let Some(text) = self.display_text {
            entity = entity.with_display_text(text)?;
        }
        match (self.bbox, self.surrounding) {
            (Some(b), surrounding) => {
                let surrounding = surrounding
                    .unwrap_or_default()
                    .into_iter()
                    .map(ObjectRecord::into_domain)
                    .collect::<Result<Vec<_>>>()?;
                entity = entity.with_placement(to_box(b)?, surrounding)?;
            }
            (None, Some(_)) => {
                return Err(Error::InvalidEntity(
                    "surrounding objects given without a box".into(),
                ))
            }
            (None, None) => {}
        }
        Ok(entity)
    }
}

impl DataPointRecord {
    fn from_domain(dp: &DataPoint) -> Self {
        Self {
            request: dp.request().to_owned(),
            kind: dp.kind().as_str().to_owned(),
            entities: dp.entities().iter().map(EntityRecord::from_domain).collect(),
            screen: dp
                .screen()
                .map(|s| s.iter().map(ObjectRecord::from_domain).collect()),
            ground_truth: dp.ground_truth().iter().copied().collect(),
        }
    }

    fn into_domain(self) -> Result<DataPoint> {
        let kind = DataKind::parse(&self.kind)
            .ok_or_else(|| Error::InvalidEntity(format!("unknown kind '{}'", self.kind)))?;
        let entities = self
            .entities
            .into_iter()
            .map(EntityRecord::into_domain)
            .collect::<Result<Vec<_>>>()?;
        let screen = self
            .screen
            .map(|s| s.into_iter().map(ObjectRecord::into_domain).collect::<Result<Vec<_>>>())
            .transpose()?;
        DataPoint::new(self.request, entities, self.ground_truth, screen, kind)
    }
}

/// Parses one record. `line` is only used for diagnostics.
pub fn parse_record(text: &str, line: usize) -> Result<DataPoint> {
    let record: DataPointRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    record.into_domain().map_err(|e| Error::Validation {
        record: line,
        message: e.to_string(),
    })
}

/// Reads a whole dataset, validating every record.
pub fn load_dataset<R: BufRead>(reader: R) -> Result<Vec<DataPoint>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

pub fn record_to_string(dp: &DataPoint) -> String {
    serde_json::to_string(&DataPointRecord::from_domain(dp)).expect("record serialization is infallible")
}

pub fn save_dataset<W: Write>(mut writer: W, datapoints: &[DataPoint]) -> Result<()> {
    for dp in datapoints {
        writeln!(writer, "{}", record_to_string(dp))?;
    }
    writer.flush()?;
    Ok(())
}
