//! CSV order ingestion.
//!
//! Input schema: header columns `order_id`, `order_time` (epoch seconds or
//! ISO-8601), and either planar `origin_x, origin_y, dest_x, dest_y` or
//! geographic `origin_lng, origin_lat, dest_lng, dest_lat`. Geographic
//! coordinates are projected to local planar meters equirectangularly about
//! the data centroid. Rows are stably sorted by timestamp then order id, and
//! become a time-window instance under the two-dimensional pooling reward.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDateTime};

use pooling_core::instance::{Arrival, CriticalityModel, Instance};
use pooling_core::topology::{JobType, Point2, TopologyId};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// How raw coordinates map to the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanarProjection {
    /// Coordinates are already planar; passed through unchanged.
    LocalXy,
    /// Longitude/latitude degrees, projected about the centroid.
    Equirectangular,
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub warnings: Vec<String>,
}

struct RawRow {
    id: String,
    t: f64,
    origin: (f64, f64),
    dest: (f64, f64),
}

/// Picks the projection implied by the header row.
pub fn detect_projection(headers: &csv::StringRecord) -> Result<PlanarProjection> {
    let names: BTreeSet<String> = headers.iter().map(|h| h.trim().to_lowercase()).collect();
    let has = |cols: [&str; 4]| cols.iter().all(|c| names.contains(*c));
    let planar = has(["origin_x", "origin_y", "dest_x", "dest_y"]);
    let geo = has(["origin_lng", "origin_lat", "dest_lng", "dest_lat"]);
    match (planar, geo) {
        (true, false) => Ok(PlanarProjection::LocalXy),
        (false, true) => Ok(PlanarProjection::Equirectangular),
        (true, true) => bail!("both planar and geographic coordinate columns present"),
        (false, false) => bail!(
            "missing coordinate columns: need origin_x/origin_y/dest_x/dest_y \
             or origin_lng/origin_lat/dest_lng/dest_lat"
        ),
    }
}

fn parse_time(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(epoch) = raw.parse::<f64>() {
        return epoch.is_finite().then_some(epoch);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.timestamp_micros() as f64 / 1e6);
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(t.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    None
}

/// Reads an order CSV into a time-window pooling instance.
///
/// Unparsable or non-finite rows are collected and reported as one error
/// with their line numbers; duplicated order ids are dropped with a warning
/// in the report. `w` is the dispatch window in the timestamp unit
/// (seconds for epoch or ISO-8601 input).
pub fn ingest_orders_csv(
    path: &Path,
    w: f64,
    projection: PlanarProjection,
) -> Result<(Instance, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if detect_projection(&headers)? != projection {
        bail!("coordinate columns do not match the requested projection");
    }
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| anyhow!("missing column {name}"))
    };
    let (ox_name, oy_name, dx_name, dy_name) = match projection {
        PlanarProjection::LocalXy => ("origin_x", "origin_y", "dest_x", "dest_y"),
        PlanarProjection::Equirectangular => ("origin_lng", "origin_lat", "dest_lng", "dest_lat"),
    };
    let id_col = column("order_id")?;
    let t_col = column("order_time")?;
    let coord_cols = [
        column(ox_name)?,
        column(oy_name)?,
        column(dx_name)?,
        column(dy_name)?,
    ];

    let mut report = IngestReport::default();
    let mut rows: Vec<RawRow> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut bad: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = field(id_col).to_string();
        if id.is_empty() {
            bad.push(format!("line {line}: empty order_id"));
            continue;
        }
        let Some(t) = parse_time(field(t_col)) else {
            bad.push(format!(
                "line {line}: unparsable order_time {:?}",
                field(t_col)
            ));
            continue;
        };
        let mut coords = [0.0f64; 4];
        let mut coords_ok = true;
        for (slot, &col) in coords.iter_mut().zip(&coord_cols) {
            match field(col).parse::<f64>() {
                Ok(v) if v.is_finite() => *slot = v,
                _ => {
                    bad.push(format!(
                        "line {line}: bad coordinate {:?} in {}",
                        field(col),
                        headers.get(col).unwrap_or("?")
                    ));
                    coords_ok = false;
                    break;
                }
            }
        }
        if !coords_ok {
            continue;
        }
        if !seen.insert(id.clone()) {
            report.warnings.push(format!(
                "line {line}: duplicate order_id {id:?}, row dropped"
            ));
            continue;
        }
        rows.push(RawRow {
            id,
            t,
            origin: (coords[0], coords[1]),
            dest: (coords[2], coords[3]),
        });
    }
    if !bad.is_empty() {
        bail!("{} rejected rows:\n  {}", bad.len(), bad.join("\n  "));
    }
    if rows.is_empty() {
        bail!("no usable rows in {}", path.display());
    }

    if projection == PlanarProjection::Equirectangular {
        let points = rows.len() as f64 * 2.0;
        let lat0 = rows.iter().map(|r| r.origin.1 + r.dest.1).sum::<f64>() / points;
        let lng0 = rows.iter().map(|r| r.origin.0 + r.dest.0).sum::<f64>() / points;
        let scale_x = EARTH_RADIUS_M * lat0.to_radians().cos();
        let project = |(lng, lat): (f64, f64)| {
            (
                scale_x * (lng - lng0).to_radians(),
                EARTH_RADIUS_M * (lat - lat0).to_radians(),
            )
        };
        for row in &mut rows {
            row.origin = project(row.origin);
            row.dest = project(row.dest);
        }
    }

    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.id.cmp(&b.id)));
    report.rows_kept = rows.len();
    let arrivals = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Arrival {
            id: i + 1,
            t: Some(r.t),
            job: JobType::TwoD {
                origin: Point2::new(r.origin.0, r.origin.1),
                dest: Point2::new(r.dest.0, r.dest.1),
            },
        })
        .collect();
    let inst = Instance::new(
        TopologyId::Pool2D,
        CriticalityModel::TimeWindow { w },
        arrivals,
        0,
    )?;
    Ok((inst, report))
}
