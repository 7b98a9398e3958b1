//! Domain types shared by every stage of the pipeline: screen geometry,
//! candidate entities, and labelled datapoints.
//!
//! Coordinates use a top-left origin with `y` growing downward, so reading
//! order on a screen is ascending center-y, then ascending center-x.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// A point in screen units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned bounding box given by its top-left corner and extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        if ![left, top, width, height].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite component in [{left}, {top}, {width}, {height}]"
            )));
        }
        if width < 0.0 || height < 0.0 {
            return Err(Error::InvalidBox(format!(
                "negative extent {width}x{height}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn center(&self) -> Point {
        bbox_center(self)
    }

    /// The same box moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.left + dx, self.top + dy, self.width, self.height)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.left, self.top, self.width, self.height]
    }

    /// Bit-exact identity, usable as a hash key.
    pub(crate) fn identity(&self) -> [u64; 4] {
        self.to_array().map(f64::to_bits)
    }
}

/// Midpoint of a bounding box.
pub fn bbox_center(b: &BBox) -> Point {
    Point::new(b.left + b.width / 2.0, b.top + b.height / 2.0)
}

/// A piece of on-screen text with its location.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenObject {
    text: String,
    bbox: BBox,
}

impl ScreenObject {
    /// Tabs and newlines are rejected: they separate elements and lines in
    /// the rendered parse.
    pub fn new(text: impl Into<String>, bbox: BBox) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::InvalidScreenObject("empty text".into()));
        }
        if text.contains(['\n', '\t', '\r']) {
            return Err(Error::InvalidScreenObject(format!(
                "text {text:?} contains a tab or line break"
            )));
        }
        Ok(Self { text, bbox })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub(crate) fn identity(&self) -> (&str, [u64; 4]) {
        (&self.text, self.bbox.identity())
    }
}

/// Entity type name, e.g. `"phone number"`. Any non-empty name is accepted so
/// that unseen domains can flow through unchanged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityType(String);

impl EntityType {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::InvalidEntity("empty entity type".into()));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where an on-screen entity sits and the non-entity text around it.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub bbox: BBox,
    pub surrounding: Vec<ScreenObject>,
}

/// A candidate referent.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    entity_type: EntityType,
    properties: Vec<(String, String)>,
    display_text: Option<String>,
    placement: Option<Placement>,
}

impl Entity {
    pub fn new<K, V>(entity_type: EntityType, properties: impl IntoIterator<Item = (K, V)>) -> Result<Self>
    where
        K: Into<String>,
        V: Into<String>,
    {
        let properties: Vec<(String, String)> = properties
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        let mut seen = HashSet::new();
        for (key, _) in &properties {
            if !seen.insert(key.as_str()) {
                return Err(Error::InvalidEntity(format!(
                    "duplicate property key '{key}' on {entity_type}"
                )));
            }
        }
        Ok(Self {
            entity_type,
            properties,
            display_text: None,
            placement: None,
        })
    }

    pub fn with_display_text(mut self, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.is_empty() || text.contains(['\n', '\t', '\r']) {
            return Err(Error::InvalidEntity(format!(
                "display text {text:?} is empty or contains a tab or line break"
            )));
        }
        self.display_text = Some(text);
        Ok(self)
    }

    /// Places the entity on screen. Requires display text to be set first.
    pub fn with_placement(mut self, bbox: BBox, surrounding: Vec<ScreenObject>) -> Result<Self> {
        if self.display_text.is_none() {
            return Err(Error::InvalidEntity(format!(
                "placed {} entity has no display text",
                self.entity_type
            )));
        }
        self.placement = Some(Placement { bbox, surrounding });
        Ok(self)
    }

    pub fn entity_type(&self) -> &EntityType {
        &self.entity_type
    }

    pub fn properties(&self) -> &[(String, String)] {
        &self.properties
    }

    pub fn property(&self, key: &str) -> Option<&str> {
        self.properties
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn display_text(&self) -> Option<&str> {
        self.display_text.as_deref()
    }

    pub fn placement(&self) -> Option<&Placement> {
        self.placement.as_ref()
    }
}

/// Which collection a datapoint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DataKind {
    Conversational,
    Synthetic,
    Onscreen,
}

impl DataKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DataKind::Conversational => "conversational",
            DataKind::Synthetic => "synthetic",
            DataKind::Onscreen => "onscreen",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conversational" => Some(DataKind::Conversational),
            "synthetic" => Some(DataKind::Synthetic),
            "onscreen" => Some(DataKind::Onscreen),
            _ => None,
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A user request, its candidate entities, and the 1-based indices of the
/// entities it refers to. An empty ground truth means "none of them".
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    request: String,
    entities: Vec<Entity>,
    ground_truth: BTreeSet<usize>,
    screen: Option<Vec<ScreenObject>>,
    kind: DataKind,
}

impl DataPoint {
    pub fn new(
        request: impl Into<String>,
        entities: Vec<Entity>,
        ground_truth: impl IntoIterator<Item = usize>,
        screen: Option<Vec<ScreenObject>>,
        kind: DataKind,
    ) -> Result<Self> {
        let ground_truth: BTreeSet<usize> = ground_truth.into_iter().collect();
        let n = entities.len();
        if let Some(bad) = ground_truth.iter().find(|&&i| i == 0 || i > n) {
            return Err(Error::InvalidEntity(format!(
                "ground truth index {bad} outside 1..={n}"
            )));
        }
        if kind == DataKind::Onscreen {
            if let Some(i) = entities.iter().position(|e| e.placement().is_none()) {
                return Err(Error::MissingPlacement { index: i + 1 });
            }
        }
        Ok(Self {
            request: request.into(),
            entities,
            ground_truth,
            screen,
            kind,
        })
    }

    pub fn request(&self) -> &str {
        &self.request
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn ground_truth(&self) -> &BTreeSet<usize> {
        &self.ground_truth
    }

    pub fn screen(&self) -> Option<&[ScreenObject]> {
        self.screen.as_deref()
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }
}
