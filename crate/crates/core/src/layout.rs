//! Plain-text rendering of a screen that keeps relative spatial positions.
//!
//! Objects are ordered by box center (top to bottom, left to right), grouped
//! into lines when their centers lie within a vertical margin of the line's
//! first object, and rendered with a tab between elements of a line and a
//! newline between lines. Candidate entities are injected as indexed markers
//! such as `{{1. (206) 198 1999}}` so a resolver can answer by number.

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::screen::{BBox, Entity, Point, ScreenObject};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Vertical same-line tolerance. `None` derives it from the screen as
    /// half the median object height.
    pub margin: Option<f64>,
    pub same_line_separator: String,
    pub line_separator: String,
    pub marker_open: String,
    pub marker_close: String,
    /// When off, entities are rendered as their raw display text.
    pub inject_markers: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            margin: None,
            same_line_separator: "\t".into(),
            line_separator: "\n".into(),
            marker_open: "{{".into(),
            marker_close: "}}".into(),
            inject_markers: true,
        }
    }
}

impl EncoderConfig {
    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    pub fn without_markers(mut self) -> Self {
        self.inject_markers = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.margin {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidConfig(format!("margin {m} must be finite and >= 0")));
            }
        }
        if self.same_line_separator.is_empty() || self.line_separator.is_empty() {
            return Err(Error::InvalidConfig("separators must be non-empty".into()));
        }
        if self.marker_open == self.marker_close {
            return Err(Error::InvalidConfig("marker brackets must differ".into()));
        }
        Ok(())
    }

    pub fn marker_text(&self, index: usize, display_text: &str) -> String {
        format!("{}{index}. {display_text}{}", self.marker_open, self.marker_close)
    }
}

/// A text element ready for layout: either plain screen text or an entity.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub text: String,
    pub bbox: BBox,
    /// 1-based entity index when this object stands for a candidate entity.
    pub entity: Option<usize>,
}

impl PlacedObject {
    pub fn center(&self) -> Point {
        self.bbox.center()
    }
}

/// One rendered line.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub anchor_center_y: f64,
    pub members: Vec<PlacedObject>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSpan {
    pub entity_index: usize,
    /// Byte range of the full marker (brackets included) in the parse text.
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnscreenParse {
    pub text: String,
    pub marker_spans: Vec<MarkerSpan>,
}

impl OnscreenParse {
    pub fn marker_count(&self) -> usize {
        self.marker_spans.len()
    }
}

/// Gathers every distinct text element on screen and stands each entity in
/// as a marker object at its own box.
///
/// Screen objects come first, then each entity's surrounding objects, with
/// repeats of the same text at the same box dropped. Any object sharing a box
/// with an entity is taken to be that entity's raw text and is replaced by it.
pub fn collect_objects(
    screen: &[ScreenObject],
    entities: &[Entity],
    config: &EncoderConfig,
) -> Result<Vec<PlacedObject>> {
    let mut entity_boxes = HashSet::new();
    let mut placed_entities = Vec::with_capacity(entities.len());
    for (i, entity) in entities.iter().enumerate() {
        let index = i + 1;
        let placement = entity
            .placement()
            .ok_or(Error::MissingPlacement { index })?;
        let display = entity
            .display_text()
            .ok_or(Error::MissingPlacement { index })?;
        entity_boxes.insert(placement.bbox.identity());
        let text = if config.inject_markers {
            config.marker_text(index, display)
        } else {
            display.to_owned()
        };
        placed_entities.push(PlacedObject {
            text,
            bbox: placement.bbox,
            entity: Some(index),
        });
    }

    let surrounding = entities
        .iter()
        .filter_map(Entity::placement)
        .flat_map(|p| p.surrounding.iter());
    let mut seen = HashSet::new();
    let mut objects = Vec::new();
    for obj in screen.iter().chain(surrounding) {
        if entity_boxes.contains(&obj.bbox().identity()) {
            continue;
        }
        if seen.insert(obj.identity()) {
            objects.push(PlacedObject {
                text: obj.text().to_owned(),
                bbox: *obj.bbox(),
                entity: None,
            });
        }
    }
    objects.extend(placed_entities);
    Ok(objects)
}

/// Reading order: stable sort on center-x, then stable sort on center-y, so
/// `y` dominates and `x` orders objects whose centers share a row exactly.
pub fn sort_objects(mut objects: Vec<PlacedObject>) -> Vec<PlacedObject> {
    objects.sort_by(|a, b| a.center().x.total_cmp(&b.center().x));
    objects.sort_by(|a, b| a.center().y.total_cmp(&b.center().y));
    objects
}

/// Greedy anchor sweep over sorted objects. A line is opened by its first
/// object; later objects join while their center-y is within `margin` of
/// that anchor. Membership does not chain past the anchor's margin.
pub fn group_levels(sorted_objects: Vec<PlacedObject>, margin: f64) -> Vec<Level> {
    let mut levels: Vec<Level> = Vec::new();
    for obj in sorted_objects {
        let y = obj.center().y;
        match levels.last_mut() {
            Some(level) if (y - level.anchor_center_y).abs() <= margin => level.members.push(obj),
            _ => levels.push(Level {
                anchor_center_y: y,
                members: vec![obj],
            }),
        }
    }
    levels
}

pub fn render_parse(levels: &[Level], config: &EncoderConfig) -> OnscreenParse {
    let mut text = String::new();
    let mut marker_spans = Vec::new();
    for (li, level) in levels.iter().enumerate() {
        if li > 0 {
            text.push_str(&config.line_separator);
        }
        for (mi, member) in level.members.iter().enumerate() {
            if mi > 0 {
                text.push_str(&config.same_line_separator);
            }
            let start = text.len();
            text.push_str(&member.text);
            if let (Some(entity_index), true) = (member.entity, config.inject_markers) {
                marker_spans.push(MarkerSpan {
                    entity_index,
                    range: start..text.len(),
                });
            }
        }
    }
    marker_spans.sort_by_key(|s| s.entity_index);
    OnscreenParse { text, marker_spans }
}

/// Half the median box height, the default same-line tolerance.
pub fn default_margin(objects: &[PlacedObject]) -> f64 {
    if objects.is_empty() {
        return 0.0;
    }
    let mut heights: Vec<f64> = objects.iter().map(|o| o.bbox.height()).collect();
    heights.sort_by(f64::total_cmp);
    let n = heights.len();
    let median = if n % 2 == 1 {
        heights[n / 2]
    } else {
        (heights[n / 2 - 1] + heights[n / 2]) / 2.0
    };
    0.5 * median
}

/// Full screen encoding: collect, sort, group, render.
pub fn encode_screen(
    screen: &[ScreenObject],
    entities: &[Entity],
    config: &EncoderConfig,
) -> Result<OnscreenParse> {
    config.validate()?;
    let objects = collect_objects(screen, entities, config)?;
    let margin = config.margin.unwrap_or_else(|| default_margin(&objects));
    let levels = group_levels(sort_objects(objects), margin);
    Ok(render_parse(&levels, config))
}
