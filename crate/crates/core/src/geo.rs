//! Hexagon-grid dialect regions.
//!
//! Cells use pointy-top axial coordinates anchored at the south-west corner
//! of the family bounding box, with longitude/latitude treated as flat
//! equirectangular coordinates. Hexagon vertices are tracked on an integer
//! lattice (x in units of `R·√3/2`, y in units of `R/2`) so that shared edges
//! between neighbouring cells cancel exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("polygon needs at least 3 distinct vertices")]
    DegeneratePolygon,
    #[error("cell {0} lies outside the family bounds")]
    OutOfBounds(HexCell),
    #[error("cell {0} is both added and removed")]
    ConflictingEdit(HexCell),
    #[error("unknown division {0}")]
    UnknownDivision(String),
    #[error("malformed cell id {0:?}")]
    MalformedCell(String),
    #[error("invalid division {0}: {1}")]
    InvalidDivision(String, String),
}

/// Axial hex coordinate; canonical id is `"q:r"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HexCell {
    pub q: i32,
    pub r: i32,
}

impl HexCell {
    pub const fn new(q: i32, r: i32) -> Self {
        Self { q, r }
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn neighbors(&self) -> [HexCell; 6] {
        let HexCell { q, r } = *self;
        [
            HexCell::new(q + 1, r),
            HexCell::new(q - 1, r),
            HexCell::new(q, r + 1),
            HexCell::new(q, r - 1),
            HexCell::new(q + 1, r - 1),
            HexCell::new(q - 1, r + 1),
        ]
    }

    /// Center on the integer vertex lattice.
    fn lattice_center(&self) -> (i64, i64) {
        (2 * self.q as i64 + self.r as i64, 3 * self.r as i64)
    }

    /// Corners in counter-clockwise order, starting at the lower-right one.
    fn lattice_corners(&self) -> [(i64, i64); 6] {
        let (x, y) = self.lattice_center();
        [
            (x + 1, y - 1),
            (x + 1, y + 1),
            (x, y + 2),
            (x - 1, y + 1),
            (x - 1, y - 1),
            (x, y - 2),
        ]
    }
}

impl fmt::Display for HexCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.q, self.r)
    }
}

impl FromStr for HexCell {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeoError::MalformedCell(s.to_string());
        let (q, r) = s.split_once(':').ok_or_else(bad)?;
        Ok(HexCell::new(
            q.trim().parse().map_err(|_| bad())?,
            r.trim().parse().map_err(|_| bad())?,
        ))
    }
}

impl Serialize for HexCell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HexCell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A dialect's area as a set of cells. Serializes as a sorted list of ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HexRegion {
    pub family_id: String,
    pub cells: BTreeSet<HexCell>,
}

impl HexRegion {
    pub fn empty(family_id: impl Into<String>) -> Self {
        Self {
            family_id: family_id.into(),
            cells: BTreeSet::new(),
        }
    }

    pub fn cell_ids(&self) -> Vec<String> {
        self.cells.iter().map(HexCell::id).collect()
    }
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdminDivision {
    pub division_id: String,
    pub name: String,
    /// Rings of `[lon, lat]`; the first ring is the outer one.
    pub polygon: Vec<Vec<Point>>,
}

impl AdminDivision {
    pub fn validate(&self) -> Result<(), GeoError> {
        let bad = |why: &str| GeoError::InvalidDivision(self.division_id.clone(), why.into());
        if self.polygon.is_empty() {
            return Err(bad("no rings"));
        }
        for ring in &self.polygon {
            if ring.len() < 4 {
                return Err(bad("ring has fewer than 4 points"));
            }
            if ring.first() != ring.last() {
                return Err(bad("ring is not closed"));
            }
        }
        Ok(())
    }

    pub fn outer(&self) -> &[Point] {
        &self.polygon[0]
    }

    /// Area-weighted centroid of the outer ring (vertex mean if degenerate).
    pub fn centroid(&self) -> Point {
        let ring = self.outer();
        let mut area2 = 0.0;
        let (mut cx, mut cy) = (0.0, 0.0);
        for w in ring.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let cross = x0 * y1 - x1 * y0;
            area2 += cross;
            cx += (x0 + x1) * cross;
            cy += (y0 + y1) * cross;
        }
        if area2.abs() < 1e-15 {
            let n = (ring.len() - 1).max(1) as f64;
            let (sx, sy) = ring[..ring.len() - 1]
                .iter()
                .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            return (sx / n, sy / n);
        }
        (cx / (3.0 * area2), cy / (3.0 * area2))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DivisionFile {
    pub divisions: Vec<AdminDivision>,
}

pub fn hex_center(cell: HexCell, family: &LanguageFamily) -> Point {
    let r = family.hex_resolution;
    let (q, rr) = (cell.q as f64, cell.r as f64);
    (
        family.bounding_box.lon_min + r * 3f64.sqrt() * (q + rr / 2.0),
        family.bounding_box.lat_min + r * 1.5 * rr,
    )
}

fn lattice_to_lonlat((x, y): (i64, i64), family: &LanguageFamily) -> Point {
    let r = family.hex_resolution;
    (
        family.bounding_box.lon_min + x as f64 * r * 3f64.sqrt() / 2.0,
        family.bounding_box.lat_min + y as f64 * r / 2.0,
    )
}

pub fn in_bounds(cell: HexCell, family: &LanguageFamily) -> bool {
    let (lon, lat) = hex_center(cell, family);
    family.bounding_box.contains(lon, lat)
}

/// Every cell whose center lies inside the family bounding box.
pub fn cells_in_bounds(family: &LanguageFamily) -> Vec<HexCell> {
    let bb = &family.bounding_box;
    let r = family.hex_resolution;
    let dx = r * 3f64.sqrt();
    let r_max = ((bb.lat_max - bb.lat_min) / (1.5 * r)).floor() as i32 + 1;
    let mut out = Vec::new();
    for row in 0..=r_max {
        let shift = row as f64 / 2.0;
        let q_lo = (-shift).floor() as i32 - 1;
        let q_hi = ((bb.lon_max - bb.lon_min) / dx - shift).ceil() as i32 + 1;
        for q in q_lo..=q_hi {
            let c = HexCell::new(q, row);
            if in_bounds(c, family) {
                out.push(c);
            }
        }
    }
    out
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    const EPS: f64 = 1e-12;
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let scale = ((b.0 - a.0).abs() + (b.1 - a.1).abs()).max(1.0);
    if cross.abs() > EPS * scale {
        return false;
    }
    p.0 >= a.0.min(b.0) - EPS
        && p.0 <= a.0.max(b.0) + EPS
        && p.1 >= a.1.min(b.1) - EPS
        && p.1 <= a.1.max(b.1) + EPS
}

/// Even-odd rule; points on an edge count as inside. The ring is closed
/// implicitly.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    if n == 0 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn distinct_vertices(polygon: &[Point]) -> usize {
    let mut seen: Vec<Point> = Vec::new();
    for p in polygon {
        if !seen.iter().any(|q| q == p) {
            seen.push(*p);
        }
    }
    seen.len()
}

pub fn cells_in_lasso(
    polygon: &[Point],
    family: &LanguageFamily,
) -> Result<BTreeSet<HexCell>, GeoError> {
    if distinct_vertices(polygon) < 3 {
        return Err(GeoError::DegeneratePolygon);
    }
    Ok(cells_in_bounds(family)
        .into_iter()
        .filter(|c| point_in_polygon(hex_center(*c, family), polygon))
        .collect())
}

/// `(region ∪ add) \ remove` after bounds and conflict checks.
pub fn edit_region(
    region: &HexRegion,
    add: &BTreeSet<HexCell>,
    remove: &BTreeSet<HexCell>,
    family: &LanguageFamily,
) -> Result<HexRegion, GeoError> {
    if let Some(c) = add.intersection(remove).next() {
        return Err(GeoError::ConflictingEdit(*c));
    }
    if let Some(c) = add.iter().chain(remove).find(|c| !in_bounds(**c, family)) {
        return Err(GeoError::OutOfBounds(*c));
    }
    let mut cells = region.cells.clone();
    cells.extend(add.iter().copied());
    for c in remove {
        cells.remove(c);
    }
    Ok(HexRegion {
        family_id: region.family_id.clone(),
        cells,
    })
}

/// Boundary rings of the union of the region's hexagons. Outer rings run
/// counter-clockwise and holes clockwise; each ring repeats its first point.
pub fn region_boundary(region: &HexRegion, family: &LanguageFamily) -> Vec<Vec<Point>> {
    boundary_lattice_rings(&region.cells)
        .into_iter()
        .map(|ring| ring.into_iter().map(|v| lattice_to_lonlat(v, family)).collect())
        .collect()
}

fn boundary_lattice_rings(cells: &BTreeSet<HexCell>) -> Vec<Vec<(i64, i64)>> {
    let mut directed: BTreeSet<((i64, i64), (i64, i64))> = BTreeSet::new();
    for cell in cells {
        let c = cell.lattice_corners();
        for i in 0..6 {
            let e = (c[i], c[(i + 1) % 6]);
            // the neighbour owns the same edge reversed
            if !directed.remove(&(e.1, e.0)) {
                directed.insert(e);
            }
        }
    }
    // every lattice vertex touches at most three hexes, so each boundary
    // vertex has exactly one outgoing boundary edge
    let mut next: HashMap<(i64, i64), (i64, i64)> = directed.iter().copied().collect();
    let mut starts: BTreeMap<(i64, i64), ()> = directed
        .iter()
        .map(|(a, _)| ((a.1, a.0), ()))
        .collect();
    let mut rings = Vec::new();
    while let Some((&(y, x), _)) = starts.iter().next() {
        let start = (x, y);
        let mut ring = vec![start];
        let mut cur = start;
        while let Some(n) = next.remove(&cur) {
            starts.remove(&(cur.1, cur.0));
            if n == start {
                break;
            }
            ring.push(n);
            cur = n;
        }
        ring.push(start);
        rings.push(ring);
    }
    rings
}

/// Division ids either validated against the registry or selected by a
/// lasso that contains their centroids.
#[derive(Debug, Clone)]
pub enum DivisionSelector {
    Ids(Vec<String>),
    Lasso(Vec<Point>),
}

pub fn divisions_hit(
    selector: &DivisionSelector,
    divisions: &[AdminDivision],
) -> Result<BTreeSet<String>, GeoError> {
    match selector {
        DivisionSelector::Ids(ids) => ids
            .iter()
            .map(|id| {
                divisions
                    .iter()
                    .find(|d| &d.division_id == id)
                    .map(|d| d.division_id.clone())
                    .ok_or_else(|| GeoError::UnknownDivision(id.clone()))
            })
            .collect(),
        DivisionSelector::Lasso(poly) => {
            if distinct_vertices(poly) < 3 {
                return Err(GeoError::DegeneratePolygon);
            }
            Ok(divisions
                .iter()
                .filter(|d| point_in_polygon(d.centroid(), poly))
                .map(|d| d.division_id.clone())
                .collect())
        }
    }
}

/// Divisions whose outer ring contains the center of at least one region cell.
pub fn divisions_covering(
    region: &HexRegion,
    divisions: &[AdminDivision],
    family: &LanguageFamily,
) -> BTreeSet<String> {
    let centers: Vec<Point> = region.cells.iter().map(|c| hex_center(*c, family)).collect();
    divisions
        .iter()
        .filter(|d| centers.iter().any(|p| point_in_polygon(*p, d.outer())))
        .map(|d| d.division_id.clone())
        .collect()
}
