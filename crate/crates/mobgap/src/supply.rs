//! Supply-intensity surfaces and their correlations.
//!
//! Each mode's supply is smoothed into a density surface with a
//! compact-support kernel sized to the mode's service radius, evaluated on a
//! fine raster, then averaged onto a quarter-mile fishnet. Pairwise Pearson
//! correlation over fishnet cells measures how much two modes' service
//! footprints overlap.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::feeds::{BikeStationStatus, LocationType, NetworkIndex, TransitMode, TransitNetwork};
use crate::geo::{GeoPoint, LocalProjection, Polygon};
use crate::ingest::{IngestError, SnapshotArchive};

/// A rail vehicle moves this many buses' worth of riders in the frequency
/// weighting.
pub const RAIL_VEHICLE_WEIGHT: f64 = 5.0;

/// Service radii per mode: how far people will walk to reach each option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRadii {
    pub transit_mi: f64,
    pub bikeshare_mi: f64,
    pub escooter_mi: f64,
}

impl Default for ModeRadii {
    fn default() -> Self {
        // a quarter mile to a transit stop, an eighth to a bike station, a
        // sixteenth to find a scooter
        Self { transit_mi: 0.25, bikeshare_mi: 0.125, escooter_mi: 0.0625 }
    }
}

/// A weighted point feature feeding the density surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyFeature {
    pub point: GeoPoint,
    pub weight: f64,
    pub radius_mi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// Quartic (biweight): the convention of desktop GIS kernel density tools.
    Quartic,
    /// Flat disc, for sensitivity checks.
    Uniform,
}

impl KernelShape {
    /// Density contribution at distance `d` of a unit-weight feature with
    /// support radius `r`. Integrates to 1 over the plane; exactly zero for
    /// `d >= r`.
    pub fn evaluate(self, d: f64, r: f64) -> f64 {
        if d >= r {
            return 0.0;
        }
        match self {
            KernelShape::Quartic => {
                let u = 1.0 - (d / r) * (d / r);
                 3.0 / std::f64::consts::PI * u * u / (r * r)
            }
            KernelShape::Uniform => 1.0 / (std::f64::consts::PI * r * r),
        }
    }
}

/// Fishnet geometry: a row-major grid of square cells anchored at a
/// south-west origin, in the planar frame of a projection centered there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// South-west corner.
    pub origin: GeoPoint,
    pub cell_size_mi: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridSpec {
    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(self.origin)
    }

    pub fn n_cells(&self) -> usize {
        self.ncols * self.nrows
    }

    /// Planar coordinates of a cell center, miles east/north of the origin.
    pub fn cell_center_planar(&self, row: usize, col: usize) -> (f64, f64) {
        ((col as f64 + 0.5) * self.cell_size_mi, (row as f64 + 0.5) * self.cell_size_mi)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> GeoPoint {
        let (x, y) = self.cell_center_planar(row, col);
        self.projection().unproject(x, y)
    }

    /// The same extent at `factor` times the resolution.
    pub fn refine(&self, factor: usize) -> GridSpec {
        GridSpec {
            origin: self.origin,
            cell_size_mi: self.cell_size_mi / factor as f64,
            ncols: self.ncols * factor,
            nrows: self.nrows * factor,
        }
    }

    /// Smallest grid of `cell_size_mi` cells covering `boundary`, with one
    /// cell of margin on every side.
    pub fn covering(boundary: &Polygon, cell_size_mi: f64) -> Result<GridSpec, SupplyError> {
        let ring = boundary.ring();
        let mean_lat = ring.iter().map(|p| p.lat).sum::<f64>() / ring.len() as f64;
        let mean_lon = ring.iter().map(|p| p.lon).sum::<f64>() / ring.len() as f64;
        let proj = LocalProjection::new(GeoPoint::new(mean_lat, mean_lon));
        let mut xmin = f64::INFINITY;
        let mut ymin = f64::INFINITY;
        let mut xmax = f64::NEG_INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for p in ring {
            let (x, y) = proj.project(p);
            xmin = xmin.min(x);
            ymin = ymin.min(y);
            xmax = xmax.max(x);
            ymax = ymax.max(y);
        }
        let origin = proj.unproject(xmin - cell_size_mi, ymin - cell_size_mi);
        let ncols = ((xmax - xmin) / cell_size_mi).ceil() as usize + 2;
        let nrows = ((ymax - ymin) / cell_size_mi).ceil() as usize + 2;
        let spec = GridSpec { origin, cell_size_mi, ncols, nrows };
        if spec.n_cells() == 0 {
            return Err(SupplyError::DegenerateGrid);
        }
        Ok(spec)
    }

    /// True for cells whose center lies inside `boundary`.
    pub fn boundary_mask(&self, boundary: &Polygon) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.n_cells());
        for row in 0..self.nrows {
            for col in 0..self.ncols {
                mask.push(boundary.contains(&self.cell_center(row, col)));
            }
        }
        mask
    }
}

/// A density surface on a [`GridSpec`], row-major from the south-west.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl SupplyGrid {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.ncols + col]
    }

    /// Averages `factor`-by-`factor` blocks into a coarser grid; the zonal
    /// mean step of the fine-raster density procedure.
    pub fn zonal_mean(&self, factor: usize) -> Result<SupplyGrid, SupplyError> {
        if factor == 0 || self.spec.nrows % factor != 0 || self.spec.ncols % factor != 0 {
            return Err(SupplyError::GridMismatch(format!(
                "grid {}x{} not divisible by zonal factor {factor}",
                self.spec.nrows, self.spec.ncols
            )));
        }
        let coarse = GridSpec {
            origin: self.spec.origin,
            cell_size_mi: self.spec.cell_size_mi * factor as f64,
            ncols: self.spec.ncols / factor,
            nrows: self.spec.nrows / factor,
        };
        let mut values = vec![0.0; coarse.n_cells()];
        for row in 0..self.spec.nrows {
            for col in 0..self.spec.ncols {
                values[(row / factor) * coarse.ncols + (col / factor)] += self.value(row, col);
            }
        }
        let per_block = (factor * factor) as f64;
        for v in &mut values {
            *v /= per_block;
        }
        Ok(SupplyGrid { spec: coarse, values })
    }

    /// `row,col,lat,lon,value` export.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,lat,lon,value\n");
        for row in 0..self.spec.nrows {
            for col in 0..self.spec.ncols {
                let c = self.spec.cell_center(row, col);
                out.push_str(&format!("{},{},{:.7},{:.7},{:.6}\n", row, col, c.lat, c.lon, self.value(row, col)));
            }
        }
        out
    }

    /// GeoJSON FeatureCollection of cell polygons carrying `value`.
    pub fn to_geojson(&self) -> String {
        let proj = self.spec.projection();
        let s = self.spec.cell_size_mi;
        let mut features = Vec::with_capacity(self.spec.n_cells());
        for row in 0..self.spec.nrows {
            for col in 0..self.spec.ncols {
                let x0 = col as f64 * s;
                let y0 = row as f64 * s;
                let corners = [
                    proj.unproject(x0, y0),
                    proj.unproject(x0 + s, y0),
                    proj.unproject(x0 + s, y0 + s),
                    proj.unproject(x0, y0 + s),
                    proj.unproject(x0, y0),
                ];
                let ring: Vec<serde_json::Value> = corners
                    .iter()
                    .map(|p| serde_json::json!([round7(p.lon), round7(p.lat)]))
                    .collect();
                features.push(serde_json::json!({
                    "type": "Feature",
                    "properties": {"row": row, "col": col, "value": round6(self.value(row, col))},
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                }));
            }
        }
        serde_json::to_string(&serde_json::json!({
            "type": "FeatureCollection",
            "features": features,
        }))
        .expect("grid geojson serializes")
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn round7(v: f64) -> f64 {
    (v * 1e7).round() / 1e7
}

#[derive(Debug, thiserror::Error)]
pub enum SupplyError {
    #[error("unknown stop {0}")]
    UnknownStop(String),
    #[error("grid has zero cells")]
    DegenerateGrid,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("correlation undefined: {side} grid has zero variance")]
    ZeroVariance { side: &'static str },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Evaluates the kernel-density surface of `features` at every cell center.
///
/// Each cell's value is the sum over in-range features of
/// `weight * kernel(d) `, where `d` is the planar distance from the feature
/// to the cell center in the grid's projection.
pub fn kernel_density(
    features: &[SupplyFeature],
    spec: &GridSpec,
    kernel: KernelShape,
) -> Result<SupplyGrid, SupplyError> {
    if spec.n_cells() == 0 {
        return Err(SupplyError::DegenerateGrid);
    }
    let proj = spec.projection();
    let s = spec.cell_size_mi;
    let mut values = vec![0.0; spec.n_cells()];
    for f in features {
        if f.weight == 0.0 {
            continue;
        }
        let (fx, fy) = proj.project(&f.point);
        let r = f.radius_mi;
        // cells whose centers can lie within the kernel support
        let col_lo = (((fx - r) / s - 0.5).ceil().max(0.0)) as usize;
        let col_hi = (((fx + r) / s - 0.5).floor().min(spec.ncols as f64 - 1.0)) as isize;
        let row_lo = (((fy - r) / s - 0.5).ceil().max(0.0)) as usize;
        let row_hi = (((fy + r) / s - 0.5).floor().min(spec.nrows as f64 - 1.0)) as isize;
        if col_hi < 0 || row_hi < 0 {
            continue;
        }
        for row in row_lo..=(row_hi as usize) {
            let dy = (row as f64 + 0.5) * s - fy;
            for col in col_lo..=(col_hi as usize) {
                let dx = (col as f64 + 0.5) * s - fx;
                let d = dx.hypot(dy);
                if d < r {
                    values[row * spec.ncols + col] += f.weight * kernel.evaluate(d, r);
                }
            }
        }
    }
    Ok(SupplyGrid { spec: *spec, values })
}

/// Weighted count of scheduled vehicles departing `stop_id` in the window
/// `[window_start_sec, window_start_sec + window_sec)` on `date`; rail visits
/// count [`RAIL_VEHICLE_WEIGHT`], bus visits one.
pub fn transit_stop_frequency(
    index: &NetworkIndex<'_>,
    stop_id: &str,
    date: NaiveDate,
    window_start_sec: u32,
    window_sec: u32,
) -> Result<f64, SupplyError> {
    let stop_pos = index
        .stop_position(stop_id)
        .ok_or_else(|| SupplyError::UnknownStop(stop_id.to_string()))?;
    let end = window_start_sec + window_sec;
    let mut weight = 0.0;
    for &ev_i in index.events_at_stop(stop_pos) {
        let ev = &index.network.stop_time_events[ev_i];
        if ev.departure_sec < window_start_sec || ev.departure_sec >= end {
            continue;
        }
        let trip_pos = index.trip_of_event(ev_i);
        let trip = &index.network.scheduled_trips[trip_pos];
        let runs = index.network.services.get(&trip.service_id).is_some_and(|s| s.runs_on(date));
        if runs {
            weight += match index.trip_mode(trip_pos) {
                TransitMode::Rail => RAIL_VEHICLE_WEIGHT,
                TransitMode::Bus => 1.0,
            };
        }
    }
    Ok(weight)
}

/// The per-mode grids of one supply snapshot.
#[derive(Debug)]
pub struct SupplySnapshot {
    pub escooter: SupplyGrid,
    pub bikeshare: SupplyGrid,
    pub transit: SupplyGrid,
}

/// Knobs for [`supply_snapshot`].
#[derive(Debug, Clone, Copy)]
pub struct SupplyParams {
    pub radii: ModeRadii,
    pub kernel: KernelShape,
    /// Density is evaluated on a raster this many times finer than the
    /// fishnet, then zonal-meaned back down.
    pub fine_factor: usize,
    pub staleness_horizon_sec: Option<i64>,
}

impl Default for SupplyParams {
    fn default() -> Self {
        Self { radii: ModeRadii::default(), kernel: KernelShape::Quartic, fine_factor: 5, staleness_horizon_sec: None }
    }
}

/// Renders the three modes' supply at one instant onto a shared fishnet.
///
/// E-scooter features are the vehicles available at `instant_utc` (weight 1);
/// bikeshare features are stations weighted by available bikes; transit
/// features are stops weighted by the vehicles scheduled to depart in the
/// following hour of local time `window_start_sec` on `service_date`.
#[allow(clippy::too_many_arguments)]
pub fn supply_snapshot(
    archive: &SnapshotArchive,
    network: &TransitNetwork,
    stations: &[BikeStationStatus],
    instant_utc: i64,
    service_date: NaiveDate,
    window_start_sec: u32,
    spec: &GridSpec,
    params: &SupplyParams,
) -> Result<SupplySnapshot, SupplyError> {
    let fine = spec.refine(params.fine_factor);
    let index = network.index();

    let scooters = archive.availability_at(None, instant_utc, params.staleness_horizon_sec)?;
    let scooter_features: Vec<SupplyFeature> = scooters
        .iter()
        .map(|s| SupplyFeature { point: s.point, weight: 1.0, radius_mi: params.radii.escooter_mi })
        .collect();

    let bike_features: Vec<SupplyFeature> = stations
        .iter()
        .map(|st| SupplyFeature {
            point: st.point,
            weight: st.bikes_available as f64,
            radius_mi: params.radii.bikeshare_mi,
        })
        .collect();

    let mut transit_features = Vec::new();
    for stop in &network.stops {
        if stop.location_type != LocationType::Stop {
            continue;
        }
        let weight = transit_stop_frequency(&index, &stop.stop_id, service_date, window_start_sec, 3600)?;
        if weight > 0.0 {
            transit_features.push(SupplyFeature {
                point: stop.point,
                weight,
                radius_mi: params.radii.transit_mi,
            });
        }
    }

    let render = |features: &[SupplyFeature]| -> Result<SupplyGrid, SupplyError> {
        kernel_density(features, &fine, params.kernel)?.zonal_mean(params.fine_factor)
    };
    Ok(SupplySnapshot {
        escooter: render(&scooter_features)?,
        bikeshare: render(&bike_features)?,
        transit: render(&transit_features)?,
    })
}

/// Pearson correlation over all cell pairs of two grids on the same spec.
/// Cells where both grids are zero are real observations of joint absence and
/// are included.
pub fn grid_correlation(a: &SupplyGrid, b: &SupplyGrid) -> Result<f64, SupplyError> {
    grid_correlation_masked(a, b, None)
}

/// As [`grid_correlation`], restricted to cells where `mask` is true (e.g.
/// cell centers inside the study boundary).
pub fn grid_correlation_masked(
    a: &SupplyGrid,
    b: &SupplyGrid,
    mask: Option<&[bool]>,
) -> Result<f64, SupplyError> {
    if a.spec != b.spec {
        return Err(SupplyError::GridMismatch("correlating grids with different specs".into()));
    }
    if let Some(m) = mask {
        if m.len() != a.values.len() {
            return Err(SupplyError::GridMismatch("mask length does not match grid".into()));
        }
    }
    // streaming co-moments, symmetric in x and y by construction
    let mut n = 0.0f64;
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    let mut m2x = 0.0;
    let mut m2y = 0.0;
    let mut cxy = 0.0;
    for i in 0..a.values.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let (x, y) = (a.values[i], b.values[i]);
        n += 1.0;
        let dx = x - mean_x;
        let dy = y - mean_y;
        let f = (n - 1.0) / n;
        cxy += dx * dy * f;
        m2x += dx * dx * f;
        m2y += dy * dy * f;
        mean_x += dx / n;
        mean_y += dy / n;
    }
    if m2x == 0.0 {
        return Err(SupplyError::ZeroVariance { side: "first" });
    }
    if m2y == 0.0 {
        return Err(SupplyError::ZeroVariance { side: "second" });
    }
    Ok((cxy / (m2x * m2y).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_10x10(cell: f64) -> GridSpec {
        GridSpec { origin: GeoPoint::new(38.85, -77.10), cell_size_mi: cell, ncols: 10, nrows: 10 }
    }

    fn feature_at_planar(spec: &GridSpec, x: f64, y: f64, weight: f64, radius: f64) -> SupplyFeature {
        SupplyFeature { point: spec.projection().unproject(x, y), weight, radius_mi: radius }
    }

    /// Direct per-cell summation; the independent check on the scatter
    /// implementation.
    fn brute_force(features: &[SupplyFeature], spec: &GridSpec, kernel: KernelShape) -> Vec<f64> {
        let proj = spec.projection();
        let mut values = vec![0.0; spec.n_cells()];
        for row in 0..spec.nrows {
            for col in 0..spec.ncols {
                let (cx, cy) = spec.cell_center_planar(row, col);
                let mut v = 0.0;
                for f in features {
                    let (fx, fy) = proj.project(&f.point);
                    let d = (cx - fx).hypot(cy - fy);
                    v += f.weight * kernel.evaluate(d, f.radius_mi);
                }
                values[row * spec.ncols + col] = v;
            }
        }
        values
    }

    #[test]
    fn kernel_support_edge_and_origin() {
        let k = KernelShape::Quartic;
        let r = 0.25;
        assert_eq!(k.evaluate(r, r), 0.0);
        assert_eq!(k.evaluate(r * 1.5, r), 0.0);
        // closed form at the feature itself
        let expect = 3.0 / (std::f64::consts::PI * r * r);
        assert!((k.evaluate(0.0, r) - expect).abs() < 1e-12);
        // strictly positive inside the support
        for d in [1e-6, 0.1, 0.2499] {
            assert!(k.evaluate(d, r) > 0.0, "d={d}");
        }
    }

    #[test]
    fn single_feature_peak_value() {
        let spec = spec_10x10(0.1);
        let (cx, cy) = spec.cell_center_planar(5, 5);
        let w = 2.5;
        let r = 0.25;
        let grid = kernel_density(&[feature_at_planar(&spec, cx, cy, w, r)], &spec, KernelShape::Quartic).unwrap();
        let expect = 3.0 * w / (std::f64::consts::PI * r * r);
        assert!((grid.value(5, 5) - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let spec = spec_10x10(0.1);
        let features = vec![
            feature_at_planar(&spec, 0.23, 0.31, 1.0, 0.25),
            feature_at_planar(&spec, 0.55, 0.71, 3.0, 0.125),
            feature_at_planar(&spec, 0.82, 0.12, 0.5, 0.3),
        ];
        for kernel in [KernelShape::Quartic, KernelShape::Uniform] {
            let grid = kernel_density(&features, &spec, kernel).unwrap();
            let oracle = brute_force(&features, &spec, kernel);
            for (i, (a, b)) in grid.values.iter().zip(&oracle).enumerate() {
                let denom = b.abs().max(1e-300);
                assert!(
                    (a - b).abs() / denom < 1e-9 || (a - b).abs() < 1e-15,
                    "cell {i}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn mass_preserved_at_fine_cells() {
        // 0.01 mi cells, feature fully interior: sum * area -> weight within 2%
        let spec = GridSpec { origin: GeoPoint::new(38.85, -77.10), cell_size_mi: 0.01, ncols: 60, nrows: 60 };
        let w = 3.7;
        let grid = kernel_density(
            &[feature_at_planar(&spec, 0.3, 0.3, w, 0.125)],
            &spec,
            KernelShape::Quartic,
        )
        .unwrap();
        let mass: f64 = grid.values.iter().sum::<f64>() * spec.cell_size_mi * spec.cell_size_mi;
        assert!((mass - w).abs() / w < 0.02, "mass {mass} vs {w}");
    }

    #[test]
    fn longitude_shift_leaves_values_unchanged() {
        let spec = spec_10x10(0.1);
        let features = vec![
            feature_at_planar(&spec, 0.23, 0.31, 1.0, 0.25),
            feature_at_planar(&spec, 0.55, 0.71, 3.0, 0.125),
        ];
        let grid = kernel_density(&features, &spec, KernelShape::Quartic).unwrap();

        let dlon = 0.37;
        let shifted_spec = GridSpec {
            origin: GeoPoint::new(spec.origin.lat, spec.origin.lon + dlon),
            ..spec
        };
        let shifted_features: Vec<SupplyFeature> = features
            .iter()
            .map(|f| SupplyFeature {
                point: GeoPoint::new(f.point.lat, f.point.lon + dlon),
                ..*f
            })
            .collect();
        let shifted = kernel_density(&shifted_features, &shifted_spec, KernelShape::Quartic).unwrap();
        for (a, b) in grid.values.iter().zip(&shifted.values) {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_weight_feature_contributes_nothing() {
        let spec = spec_10x10(0.1);
        let grid =
            kernel_density(&[feature_at_planar(&spec, 0.5, 0.5, 0.0, 0.25)], &spec, KernelShape::Quartic).unwrap();
        assert!(grid.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_grid_rejected() {
        let spec = GridSpec { origin: GeoPoint::new(0.0, 0.0), cell_size_mi: 0.25, ncols: 0, nrows: 5 };
        assert!(matches!(kernel_density(&[], &spec, KernelShape::Quartic), Err(SupplyError::DegenerateGrid)));
    }

    #[test]
    fn zonal_mean_averages_blocks() {
        let spec = GridSpec { origin: GeoPoint::new(0.0, 0.0), cell_size_mi: 0.05, ncols: 4, nrows: 2 };
        let grid = SupplyGrid { spec, values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0] };
        let coarse = grid.zonal_mean(2).unwrap();
        assert_eq!(coarse.spec.ncols, 2);
        assert_eq!(coarse.values, vec![(1.0 + 2.0 + 5.0 + 6.0) / 4.0, (3.0 + 4.0 + 7.0 + 8.0) / 4.0]);
        assert!(grid.zonal_mean(3).is_err());
    }

    fn grid_with(values: Vec<f64>) -> SupplyGrid {
        let n = values.len();
        SupplyGrid {
            spec: GridSpec { origin: GeoPoint::new(0.0, 0.0), cell_size_mi: 0.25, ncols: n, nrows: 1 },
            values,
        }
    }

    #[test]
    fn correlation_self_and_scaled() {
        let a = grid_with(vec![0.0, 1.0, 4.0, 2.0, 0.5]);
        let twice = grid_with(a.values.iter().map(|v| 2.0 * v).collect());
        assert!((grid_correlation(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        assert!((grid_correlation(&a, &twice).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn correlation_matches_two_pass_oracle() {
        let a = grid_with(vec![0.3, 1.7, 4.2, 2.9, 0.0, 5.5, 1.1, 0.8]);
        let b = grid_with(vec![1.0, 0.2, 3.8, 3.1, 0.4, 4.9, 2.0, 0.0]);
        // textbook two-pass: means first, then covariance sums
        let n = a.values.len() as f64;
        let ma = a.values.iter().sum::<f64>() / n;
        let mb = b.values.iter().sum::<f64>() / n;
        let cov: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.values.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.values.iter().map(|y| (y - mb) * (y - mb)).sum();
        let oracle = cov / (va * vb).sqrt();
        let got = grid_correlation(&a, &b).unwrap();
        assert!((got - oracle).abs() <= 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn correlation_is_symmetric_and_bounded() {
        let a = grid_with(vec![0.3, 1.7, 4.2, 2.9, 0.0, 5.5]);
        let b = grid_with(vec![5.0, 0.1, 0.0, 9.4, 2.2, 1.0]);
        let ab = grid_correlation(&a, &b).unwrap();
        let ba = grid_correlation(&b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!(ab.abs() <= 1.0);
    }

    #[test]
    fn correlation_error_cases() {
        let a = grid_with(vec![1.0, 2.0, 3.0]);
        let constant = grid_with(vec![4.0, 4.0, 4.0]);
        assert!(matches!(grid_correlation(&a, &constant), Err(SupplyError::ZeroVariance { side: "second" })));
        let other_spec = SupplyGrid {
            spec: GridSpec { origin: GeoPoint::new(1.0, 1.0), cell_size_mi: 0.25, ncols: 3, nrows: 1 },
            values: vec![1.0, 2.0, 3.0],
        };
        assert!(matches!(grid_correlation(&a, &other_spec), Err(SupplyError::GridMismatch(_))));
    }

    #[test]
    fn masked_correlation_ignores_outside_cells() {
        let a = grid_with(vec![1.0, 2.0, 3.0, 100.0]);
        let b = grid_with(vec![2.0, 4.0, 6.0, -50.0]);
        let mask = vec![true, true, true, false];
        let r = grid_correlation_masked(&a, &b, Some(&mask)).unwrap();
        assert!((r - 1.0).abs() <= 1e-12);
    }

    mod frequency {
        use super::*;
        use crate::feeds::{Route, ScheduledTrip, ServiceCalendar, Stop, StopTimeEvent};
        use std::collections::BTreeMap;

        fn weekday_service() -> ServiceCalendar {
            ServiceCalendar {
                weekdays: [true, true, true, true, true, false, false],
                start_date: NaiveDate::from_ymd_opt(2019, 7, 1).unwrap(),
                end_date: NaiveDate::from_ymd_opt(2019, 8, 1).unwrap(),
                added: vec![],
                removed: vec![],
            }
        }

        /// One route with `n` trips departing stop A at the given local times.
        fn network(mode: TransitMode, departures_sec: &[u32]) -> TransitNetwork {
            let stops = vec![
                Stop { stop_id: "A".into(), point: GeoPoint::new(38.90, -77.03), location_type: LocationType::Stop },
                Stop { stop_id: "B".into(), point: GeoPoint::new(38.91, -77.02), location_type: LocationType::Stop },
            ];
            let routes = vec![Route { route_id: "R".into(), mode }];
            let mut trips = Vec::new();
            let mut events = Vec::new();
            for (i, &dep) in departures_sec.iter().enumerate() {
                let trip_id = format!("T{i}");
                trips.push(ScheduledTrip { trip_id: trip_id.clone(), route_id: "R".into(), service_id: "WK".into() });
                events.push(StopTimeEvent {
                    trip_id: trip_id.clone(),
                    stop_id: "A".into(),
                    arrival_sec: dep,
                    departure_sec: dep,
                    sequence: 1,
                });
                events.push(StopTimeEvent {
                    trip_id,
                    stop_id: "B".into(),
                    arrival_sec: dep + 300,
                    departure_sec: dep + 300,
                    sequence: 2,
                });
            }
            let services = BTreeMap::from([("WK".to_string(), weekday_service())]);
            TransitNetwork::from_parts(stops, routes, trips, events, services).unwrap().network
        }

        #[test]
        fn four_bus_trips_count_four() {
            let n = network(TransitMode::Bus, &[7 * 3600 + 300, 7 * 3600 + 1200, 7 * 3600 + 2100, 7 * 3600 + 3000]);
            let date = NaiveDate::from_ymd_opt(2019, 7, 16).unwrap();
            let f = transit_stop_frequency(&n.index(), "A", date, 7 * 3600, 3600).unwrap();
            assert_eq!(f, 4.0);
        }

        #[test]
        fn rail_counts_five_per_visit() {
            let n = network(TransitMode::Rail, &[7 * 3600 + 600, 7 * 3600 + 2400]);
            let date = NaiveDate::from_ymd_opt(2019, 7, 16).unwrap();
            let f = transit_stop_frequency(&n.index(), "A", date, 7 * 3600, 3600).unwrap();
            assert_eq!(f, 10.0);
        }

        #[test]
        fn quiet_hour_and_off_service_day_count_zero() {
            let n = network(TransitMode::Bus, &[7 * 3600 + 300]);
            let weekday = NaiveDate::from_ymd_opt(2019, 7, 16).unwrap();
            let sunday = NaiveDate::from_ymd_opt(2019, 7, 21).unwrap();
            assert_eq!(transit_stop_frequency(&n.index(), "A", weekday, 9 * 3600, 3600).unwrap(), 0.0);
            assert_eq!(transit_stop_frequency(&n.index(), "A", sunday, 7 * 3600, 3600).unwrap(), 0.0);
        }

        #[test]
        fn window_boundaries_are_half_open() {
            let n = network(TransitMode::Bus, &[7 * 3600, 8 * 3600]);
            let date = NaiveDate::from_ymd_opt(2019, 7, 16).unwrap();
            // departure exactly at window start counts, at window end does not
            assert_eq!(transit_stop_frequency(&n.index(), "A", date, 7 * 3600, 3600).unwrap(), 1.0);
        }

        #[test]
        fn unknown_stop_rejected() {
            let n = network(TransitMode::Bus, &[7 * 3600]);
            let date = NaiveDate::from_ymd_opt(2019, 7, 16).unwrap();
            assert!(matches!(
                transit_stop_frequency(&n.index(), "ZZZ", date, 0, 3600),
                Err(SupplyError::UnknownStop(_))
            ));
        }
    }

    #[test]
    fn covering_grid_contains_boundary() {
        let boundary = Polygon::new(vec![
            GeoPoint::new(38.86, -77.08),
            GeoPoint::new(38.92, -77.08),
            GeoPoint::new(38.92, -77.00),
            GeoPoint::new(38.86, -77.00),
        ])
        .unwrap();
        let spec = GridSpec::covering(&boundary, 0.25).unwrap();
        let proj = spec.projection();
        for p in boundary.ring() {
            let (x, y) = proj.project(p);
            assert!(x > 0.0 && y > 0.0);
            assert!(x < spec.ncols as f64 * spec.cell_size_mi);
            assert!(y < spec.nrows as f64 * spec.cell_size_mi);
        }
        let mask = spec.boundary_mask(&boundary);
        assert!(mask.iter().any(|&m| m));
        assert!(mask.iter().any(|&m| !m));
    }
}
