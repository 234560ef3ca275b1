//! Two-domain synthetic data with a controllable modality gap.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DomainBundle, FeatureSet};
use crate::error::{Error, Result};

/// Generator settings. Class means sit on a circle of radius `radius` in
/// the first coordinate plane, plus `jitter`-scaled Gaussian offsets in the
/// remaining coordinates. Domain A observes the latent point directly;
/// domain B observes `warp(Q z + t)` where `Q` rotates the first plane by
/// `plane_angle_deg` and, when `random_rotation` is set, applies a random
/// orthogonal map to the remaining coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub class_count: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub noise: f64,
    pub radius: f64,
    pub jitter: f64,
    pub plane_angle_deg: f64,
    pub random_rotation: bool,
    /// Norm of the random translation applied to domain B.
    pub translation: f64,
    /// `s` in the coordinate-wise warp `s·tanh(x/s)`; `None` disables it.
    pub warp: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            class_count: 4,
            dim: 40,
            samples_per_class: 30,
            noise: 0.15,
            radius: 0.3,
            jitter: 0.05,
            plane_angle_deg: 90.0,
            random_rotation: true,
            translation: 0.0,
            warp: Some(2.0),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub const KEYS: &'static [&'static str] = &[
        "class_count",
        "dim",
        "samples_per_class",
        "noise",
        "radius",
        "jitter",
        "plane_angle_deg",
        "random_rotation",
        "translation",
        "warp",
        "synth_seed",
    ];

    /// Domain B equal to domain A: no rotation, translation or warp.
    pub fn identity_map(mut self) -> Self {
        self.plane_angle_deg = 0.0;
        self.random_rotation = false;
        self.translation = 0.0;
        self.warp = None;
        self
    }

    /// Sets one key; returns `Ok(false)` for keys this spec does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::BadSpec(format!("{key}: cannot parse '{value}'"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "class_count" => self.class_count = u()?,
            "dim" => self.dim = u()?,
            "samples_per_class" => self.samples_per_class = u()?,
            "noise" => self.noise = f()?,
            "radius" => self.radius = f()?,
            "jitter" => self.jitter = f()?,
            "plane_angle_deg" => self.plane_angle_deg = f()?,
            "random_rotation" => self.random_rotation = value.parse().map_err(|_| bad())?,
            "translation" => self.translation = f()?,
            "warp" => self.warp = if value == "off" { None } else { Some(f()?) },
            "synth_seed" => self.seed = value.parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::BadSpec("need at least two classes".into()));
        }
        if self.dim < 2 {
            return Err(Error::BadSpec("dimension must be at least 2".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::BadSpec("samples_per_class must be positive".into()));
        }
        let nonneg = [self.noise, self.radius, self.jitter, self.translation];
        if nonneg.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::BadSpec("noise, radius, jitter and translation must be finite and non-negative".into()));
        }
        if !self.plane_angle_deg.is_finite() {
            return Err(Error::BadSpec("plane angle must be finite".into()));
        }
        if let Some(s) = self.warp {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::BadSpec("warp scale must be positive".into()));
            }
        }
        Ok(())
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        scale * v
    })
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// diagonal of R made positive).
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let qr = gaussian(n, n, 1.0, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// The map taking latent points to domain B, excluding noise.
#[derive(Debug, Clone)]
pub struct DomainMap {
    pub rotation: DMatrix<f64>,
    pub translation: Vec<f64>,
    pub warp: Option<f64>,
}

impl DomainMap {
    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = z * self.rotation.transpose();
        for mut row in y.row_iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += self.translation[j];
                if let Some(s) = self.warp {
                    *v = s * (*v / s).tanh();
                }
            }
        }
        y
    }
}

/// Class means (`c × dim`) and the domain-B map drawn for `spec`.
pub fn draw_geometry(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DomainMap) {
    let d = spec.dim;
    let c = spec.class_count;
    let mut means = gaussian(c, d, spec.jitter, rng);
    for k in 0..c {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / c as f64;
        means[(k, 0)] = spec.radius * phi.cos();
        means[(k, 1)] = spec.radius * phi.sin();
    }
    let mut rotation = DMatrix::identity(d, d);
    let theta = spec.plane_angle_deg.to_radians();
    rotation[(0, 0)] = theta.cos();
    rotation[(0, 1)] = -theta.sin();
    rotation[(1, 0)] = theta.sin();
    rotation[(1, 1)] = theta.cos();
    if spec.random_rotation {
        let q = random_orthogonal(d - 2, rng);
        rotation.view_mut((2, 2), (d - 2, d - 2)).copy_from(&q);
    }
    let mut translation: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = translation.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut translation {
        *v *= if norm > 0.0 { spec.translation / norm } else { 0.0 };
    }
    (
        means,
        DomainMap {
            rotation,
            translation,
            warp: spec.warp,
        },
    )
}

/// Two fully labeled domains of `samples_per_class` rows per class, rows
/// ordered by class.
pub fn generate(spec: &SynthSpec) -> Result<DomainBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (means, map) = draw_geometry(spec, &mut rng);
    let n = spec.class_count * spec.samples_per_class;
    let labels: Vec<Option<usize>> = (0..n).map(|i| Some(i / spec.samples_per_class)).collect();
    let latent = |rng: &mut ChaCha8Rng| {
        let mut z = gaussian(n, spec.dim, spec.noise, rng);
        for i in 0..n {
            let mut row = z.row_mut(i);
            row += means.row(i / spec.samples_per_class);
        }
        z
    };
    let a = latent(&mut rng);
    let zb = latent(&mut rng);
    let b = map.apply(&zb);
    DomainBundle::new(
        vec![FeatureSet::new(a, labels.clone())?, FeatureSet::new(b, labels)?],
        spec.class_count,
    )
}
