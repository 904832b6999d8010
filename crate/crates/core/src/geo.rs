//! Gaussian kernel density estimation over check-in locations.
//!
//! Coordinates are projected to kilometres with a local equirectangular
//! projection around the mean sample latitude; the kernel is a bivariate
//! Gaussian with a diagonal bandwidth chosen per dimension by Silverman's
//! rule of thumb.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KM_PER_DEG_LAT: f64 = 110.574;
pub const KM_PER_DEG_LON_EQUATOR: f64 = 111.320;
/// Lower bound on each bandwidth, in km.
pub const MIN_BANDWIDTH_KM: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeMode {
    /// Bandwidth estimated from one user's own check-ins.
    PerUser,
    /// Bandwidth estimated from all training check-ins.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub lat_km: f64,
    pub lon_km: f64,
}

/// Local flat-earth projection around a reference latitude.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    lon_scale: f64,
}

impl Projection {
    pub fn new(reference_latitude: f64) -> Self {
        Projection {
            lon_scale: KM_PER_DEG_LON_EQUATOR * reference_latitude.to_radians().cos(),
        }
    }

    pub fn project(&self, latitude: f64, longitude: f64) -> (f64, f64) {
        (KM_PER_DEG_LAT * latitude, self.lon_scale * longitude)
    }
}

/// Approximate distance in km between two coordinates, projected around their
/// mean latitude.
pub fn distance_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let proj = Projection::new((a.0 + b.0) / 2.0);
    let (ay, ax) = proj.project(a.0, a.1);
    let (by, bx) = proj.project(b.0, b.1);
    (ay - by).hypot(ax - bx)
}

/// `1.06 · σ̂ · n^(-1/5)` with the sample standard deviation, floored at
/// [`MIN_BANDWIDTH_KM`].
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return MIN_BANDWIDTH_KM;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (1.06 * var.sqrt() * (n as f64).powf(-0.2)).max(MIN_BANDWIDTH_KM)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdeModel {
    projection: Projection,
    samples: Vec<(f64, f64)>,
    bandwidth: Bandwidth,
    mode: KdeMode,
}

fn mean_latitude(points: &[(f64, f64)]) -> f64 {
    points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64
}

/// Fits a density to `(latitude, longitude)` points with a Silverman
/// bandwidth estimated from those same points.
pub fn fit_kde(points: &[(f64, f64)], mode: KdeMode) -> Result<KdeModel> {
    if points.is_empty() {
        return Err(Error::InsufficientData(
            "kernel density needs at least one point".into(),
        ));
    }
    let projection = Projection::new(mean_latitude(points));
    let samples: Vec<(f64, f64)> = points.iter().map(|&(la, lo)| projection.project(la, lo)).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let bandwidth = Bandwidth {
        lat_km: silverman_bandwidth(&ys),
        lon_km: silverman_bandwidth(&xs),
    };
    Ok(KdeModel {
        projection,
        samples,
        bandwidth,
        mode,
    })
}

impl KdeModel {
    /// A density over `points` using a bandwidth fitted elsewhere, e.g. the
    /// dataset-wide bandwidth of a [`KdeMode::Global`] model.
    pub fn with_bandwidth(points: &[(f64, f64)], bandwidth: Bandwidth, mode: KdeMode) -> Result<KdeModel> {
        if points.is_empty() {
            return Err(Error::InsufficientData(
                "kernel density needs at least one point".into(),
            ));
        }
        if !(bandwidth.lat_km > 0.0 && bandwidth.lon_km > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth:?}"
            )));
        }
        let projection = Projection::new(mean_latitude(points));
        Ok(KdeModel {
            projection,
            samples: points.iter().map(|&(la, lo)| projection.project(la, lo)).collect(),
            bandwidth,
            mode,
        })
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn mode(&self) -> KdeMode {
        self.mode
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn projection(&self) -> Projection {
        self.projection
    }

    /// Density at a point given in the model's projected km frame.
    pub fn density_projected(&self, y: f64, x: f64) -> f64 {
        let Bandwidth { lat_km: hy, lon_km: hx } = self.bandwidth;
        let norm = 1.0 / (2.0 * PI * hy * hx * self.samples.len() as f64);
        self.samples
            .iter()
            .map(|&(sy, sx)| {
                let (u, v) = ((y - sy) / hy, (x - sx) / hx);
                (-0.5 * (u * u + v * v)).exp()
            })
            .sum::<f64>()
            * norm
    }

    /// Density at a geographic location.
    pub fn score(&self, latitude: f64, longitude: f64) -> f64 {
        let (y, x) = self.projection.project(latitude, longitude);
        self.density_projected(y, x)
    }

    pub fn summary(&self) -> KdeSummary {
        KdeSummary {
            mode: self.mode,
            bandwidth: self.bandwidth,
            n_samples: self.samples.len(),
        }
    }
}

pub fn geo_score(model: &KdeModel, poi: &crate::data::Poi) -> f64 {
    model.score(poi.latitude, poi.longitude)
}

/// Serializable description of a fitted model, without its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeSummary {
    pub mode: KdeMode,
    pub bandwidth: Bandwidth,
    pub n_samples: usize,
}
