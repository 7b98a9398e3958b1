//! Clustering-based screen encoding, kept for comparison with the layout
//! encoder.
//!
//! Screen objects are grouped by density-based clustering under the
//! rectangle gap distance. Each entity is described by the texts of the other
//! objects in its cluster, minus anything sharing a token with the entity's
//! own text, plus its absolute position. Because every object in a cluster
//! lists every other one, the encoding grows quadratically with cluster size.

use std::collections::{HashSet, VecDeque};

use crate::error::Result;
use crate::layout::{collect_objects, sort_objects, EncoderConfig, PlacedObject};
use crate::screen::{BBox, Entity, ScreenObject};

/// Minimum edge-to-edge Euclidean distance; zero when the boxes touch or
/// overlap.
pub fn rect_distance(a: &BBox, b: &BBox) -> f64 {
    let dx = (a.left() - b.right()).max(b.left() - a.right()).max(0.0);
    let dy = (a.top() - b.bottom()).max(b.top() - a.bottom()).max(0.0);
    dx.hypot(dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Cluster(usize),
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: usize,
    /// Indices into the clustered object list, ascending.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// Neighbourhood radius. `None` uses the median object height.
    pub eps: Option<f64>,
    pub min_pts: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { eps: None, min_pts: 1 }
    }
}

/// DBSCAN over boxes. Clusters are numbered in the order their first core
/// point appears in the input; a border point reachable from several clusters
/// joins the lowest-numbered one.
pub fn dbscan_labels(boxes: &[BBox], eps: f64, min_pts: usize) -> Vec<Label> {
    let n = boxes.len();
    let region = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| rect_distance(&boxes[i], &boxes[j]) <= eps)
            .collect()
    };
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut next_id = 0;
    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        let neighbours = region(i);
        if neighbours.len() < min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        let id = next_id;
        next_id += 1;
        labels[i] = Some(Label::Cluster(id));
        let mut queue: VecDeque<usize> = neighbours.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(Label::Noise) => labels[j] = Some(Label::Cluster(id)),
                Some(Label::Cluster(_)) => continue,
                None => {
                    labels[j] = Some(Label::Cluster(id));
                    let nj = region(j);
                    if nj.len() >= min_pts {
                        queue.extend(nj);
                    }
                }
            }
        }
    }
    labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect()
}

pub fn dbscan_cluster(objects: &[PlacedObject], eps: f64, min_pts: usize) -> Vec<Cluster> {
    let boxes: Vec<BBox> = objects.iter().map(|o| o.bbox).collect();
    clusters_from_labels(&dbscan_labels(&boxes, eps, min_pts))
}

pub fn clusters_from_labels(labels: &[Label]) -> Vec<Cluster> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        if let Label::Cluster(id) = *label {
            if clusters.len() <= id {
                clusters.resize_with(id + 1, || Cluster { id: 0, members: Vec::new() });
            }
            clusters[id].id = id;
            clusters[id].members.push(i);
        }
    }
    clusters
}

/// Nearest cluster to `bbox` by closest member; ties go to the lower id.
/// `None` when there are no clusters at all.
pub fn assign_entity_cluster<'a>(
    bbox: &BBox,
    clusters: &'a [Cluster],
    objects: &[PlacedObject],
) -> Option<&'a Cluster> {
    let mut best: Option<(&Cluster, f64)> = None;
    for cluster in clusters {
        let d = cluster
            .members
            .iter()
            .map(|&m| rect_distance(bbox, &objects[m].bbox))
            .fold(f64::INFINITY, f64::min);
        match best {
            Some((b, bd)) if bd < d || (bd == d && b.id <= cluster.id) => {}
            _ => best = Some((cluster, d)),
        }
    }
    best.map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterEncoding {
    pub entity_index: usize,
    pub surrounding_prompt: Vec<String>,
    pub distance_from_top: f64,
    pub distance_from_left: f64,
}

fn tokens(text: &str) -> HashSet<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// True when the two texts share a whitespace-delimited token, compared
/// case-insensitively with surrounding punctuation stripped.
pub fn shares_token(a: &str, b: &str) -> bool {
    let ta = tokens(a);
    tokens(b).iter().any(|t| ta.contains(t))
}

/// Describes one entity by the rest of its cluster and its position.
pub fn build_cluster_encoding(
    entity_index: usize,
    entity_text: &str,
    entity_box: &BBox,
    cluster: Option<&Cluster>,
    objects: &[PlacedObject],
) -> ClusterEncoding {
    let surrounding_prompt = cluster
        .map(|c| {
            c.members
                .iter()
                .map(|&m| &objects[m])
                .filter(|o| o.entity != Some(entity_index))
                .filter(|o| !shares_token(entity_text, &o.text))
                .map(|o| o.text.clone())
                .collect()
        })
        .unwrap_or_default();
    let center = entity_box.center();
    ClusterEncoding {
        entity_index,
        surrounding_prompt,
        distance_from_top: center.y,
        distance_from_left: center.x,
    }
}

fn median_height(objects: &[PlacedObject]) -> f64 {
    let mut h: Vec<f64> = objects.iter().map(|o| o.bbox.height()).collect();
    if h.is_empty() {
        return 0.0;
    }
    h.sort_by(f64::total_cmp);
    let n = h.len();
    if n % 2 == 1 {
        h[n / 2]
    } else {
        (h[n / 2 - 1] + h[n / 2]) / 2.0
    }
}

/// Encodes every entity of a screen. Objects (screen text, surrounding text
/// and the entities' own raw text) are clustered once, in reading order.
pub fn encode_clusters(
    screen: &[ScreenObject],
    entities: &[Entity],
    config: &ClusterConfig,
) -> Result<Vec<ClusterEncoding>> {
    let raw = EncoderConfig::default().without_markers();
    let objects = sort_objects(collect_objects(screen, entities, &raw)?);
    let eps = config.eps.unwrap_or_else(|| median_height(&objects));
    let clusters = dbscan_cluster(&objects, eps, config.min_pts.max(1));
    Ok(entities
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let index = i + 1;
            // collect_objects already rejected unplaced entities
            let bbox = e.placement().map(|p| p.bbox).expect("placed entity");
            let own_text = e.display_text().unwrap_or_default();
            let own = objects.iter().position(|o| o.entity == Some(index));
            let cluster = own
                .and_then(|pos| clusters.iter().find(|c| c.members.contains(&pos)))
                .or_else(|| assign_entity_cluster(&bbox, &clusters, &objects));
            build_cluster_encoding(index, own_text, &bbox, cluster, &objects)
        })
        .collect())
}
