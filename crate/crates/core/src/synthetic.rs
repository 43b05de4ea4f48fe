//! Analytic isotropic BRDFs sampled on the half-angle grid.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merl::{index_to_direction, BrdfResolution, BrdfTensor, HalfAngleDirection};
use crate::rng::{stream_rng, Stream};

/// Cells where either direction has a normal cosine below this are invalid.
pub const HORIZON_COSINE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MaterialModel {
    Lambertian {
        albedo: [f64; 3],
    },
    BlinnPhong {
        albedo: [f64; 3],
        specular: [f64; 3],
        shininess: f64,
    },
    /// Trowbridge-Reitz distribution with `alpha = roughness^2`, Smith
    /// height-correlated masking-shadowing and Schlick Fresnel, over a
    /// Lambertian base.
    Ggx {
        albedo: [f64; 3],
        roughness: f64,
        f0: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub id: String,
    #[serde(flatten)]
    pub model: MaterialModel,
}

fn unit_rgb(name: &str, v: &[f64; 3]) -> Result<()> {
    if v.iter().all(|x| (0.0..=1.0).contains(x)) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} {v:?} outside [0, 1]")))
    }
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            MaterialModel::Lambertian { albedo } => unit_rgb("albedo", albedo),
            MaterialModel::BlinnPhong {
                albedo,
                specular,
                shininess,
            } => {
                unit_rgb("albedo", albedo)?;
                unit_rgb("specular", specular)?;
                if !(*shininess > 0.0 && shininess.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "shininess {shininess} must be > 0"
                    )));
                }
                Ok(())
            }
            MaterialModel::Ggx {
                albedo,
                roughness,
                f0,
            } => {
                unit_rgb("albedo", albedo)?;
                unit_rgb("f0", f0)?;
                if !(*roughness > 0.0 && *roughness <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "roughness {roughness} outside (0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Reflectance for incident `wi` and outgoing `wo` (unit vectors, +z normal).
    pub fn eval(&self, wi: &Vector3<f64>, wo: &Vector3<f64>) -> [f64; 3] {
        let diffuse = |a: &[f64; 3]| a.map(|v| v / PI);
        match &self.model {
            MaterialModel::Lambertian { albedo } => diffuse(albedo),
            MaterialModel::BlinnPhong {
                albedo,
                specular,
                shininess,
            } => {
                let h = (wi + wo).normalize();
                let lobe = (shininess + 2.0) / (8.0 * PI) * h.z.max(0.0).powf(*shininess);
                let d = diffuse(albedo);
                std::array::from_fn(|c| d[c] + specular[c] * lobe)
            }
            MaterialModel::Ggx {
                albedo,
                roughness,
                f0,
            } => {
                let alpha = roughness * roughness;
                let h = (wi + wo).normalize();
                let spec = ggx_lobe(alpha, wi.z, wo.z, h.z);
                let d = diffuse(albedo);
                std::array::from_fn(|c| d[c] + spec * schlick(f0[c], wi.dot(&h)))
            }
        }
    }
}

fn schlick(f0: f64, cos_d: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - cos_d.clamp(0.0, 1.0)).powi(5)
}

fn smith_lambda(alpha: f64, cos_theta: f64) -> f64 {
    let c2 = cos_theta * cos_theta;
    let tan2 = (1.0 - c2).max(0.0) / c2;
    0.5 * (-1.0 + (1.0 + alpha * alpha * tan2).sqrt())
}

// D * G / (4 cos_i cos_o), Fresnel applied by the caller.
fn ggx_lobe(alpha: f64, cos_i: f64, cos_o: f64, cos_h: f64) -> f64 {
    let a2 = alpha * alpha;
    let t = cos_h * cos_h * (a2 - 1.0) + 1.0;
    let d = a2 / (PI * t * t);
    let g = 1.0 / (1.0 + smith_lambda(alpha, cos_i) + smith_lambda(alpha, cos_o));
    d * g / (4.0 * cos_i * cos_o)
}

/// Incident and outgoing unit vectors for a half-angle direction (phi_h = 0).
pub fn half_angle_to_vectors(d: &HalfAngleDirection) -> (Vector3<f64>, Vector3<f64>) {
    let (st_h, ct_h) = d.theta_h.sin_cos();
    let (st_d, ct_d) = d.theta_d.sin_cos();
    let (sp_d, cp_d) = d.phi_d.sin_cos();
    let diff = Vector3::new(st_d * cp_d, st_d * sp_d, ct_d);
    // Rotate the difference vector about y by theta_h.
    let wi = Vector3::new(
        ct_h * diff.x + st_h * diff.z,
        diff.y,
        -st_h * diff.x + ct_h * diff.z,
    );
    let h = Vector3::new(st_h, 0.0, ct_h);
    let wo = 2.0 * wi.dot(&h) * h - wi;
    (wi, wo)
}

/// Validity of every grid cell under the horizon rule.
pub fn horizon_mask(res: &BrdfResolution) -> Vec<bool> {
    (0..res.cells())
        .into_par_iter()
        .map(|idx| {
            let d = index_to_direction(idx, res).expect("index within grid");
            let (wi, wo) = half_angle_to_vectors(&d);
            wi.z >= HORIZON_COSINE && wo.z >= HORIZON_COSINE
        })
        .collect()
}

pub fn gen_brdf(spec: &MaterialSpec, res: &BrdfResolution) -> Result<BrdfTensor> {
    spec.validate()?;
    let n = res.cells();
    let cells: Vec<Option<[f64; 3]>> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let d = index_to_direction(idx, res).expect("index within grid");
            let (wi, wo) = half_angle_to_vectors(&d);
            (wi.z >= HORIZON_COSINE && wo.z >= HORIZON_COSINE).then(|| spec.eval(&wi, &wo))
        })
        .collect();
    let mut linear = vec![0.0; 3 * n];
    let mut mask = vec![false; n];
    for (i, cell) in cells.into_iter().enumerate() {
        if let Some(rgb) = cell {
            mask[i] = true;
            for c in 0..3 {
                linear[c * n + i] = rgb[c];
            }
        }
    }
    BrdfTensor::from_linear(*res, &linear, &mask)
}

fn rgb<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(lo..hi))
}

fn random_spec<R: Rng>(rng: &mut R, index: usize) -> MaterialSpec {
    let albedo = rgb(rng, 0.02, 0.8);
    let model = match rng.random_range(0..3u8) {
        0 => MaterialModel::Lambertian { albedo },
        1 => {
            let specular = rgb(rng, 0.05, 1.0);
            let shininess = 10f64.powf(rng.random_range(0.7..2.7));
            MaterialModel::BlinnPhong {
                albedo: albedo.map(|a| a * 0.6),
                specular,
                shininess,
            }
        }
        _ => {
            let f0 = rgb(rng, 0.02, 0.95);
            let roughness = rng.random_range(0.1..0.9);
            MaterialModel::Ggx {
                albedo: albedo.map(|a| a * 0.6),
                roughness,
                f0,
            }
        }
    };
    let kind = match model {
        MaterialModel::Lambertian { .. } => "lambertian",
        MaterialModel::BlinnPhong { .. } => "blinn-phong",
        MaterialModel::Ggx { .. } => "ggx",
    };
    MaterialSpec {
        id: format!("mat{index:03}-{kind}"),
        model,
    }
}

/// Reproducible mixture of analytic materials.
pub fn gen_corpus(
    seed: u64,
    count: usize,
    res: &BrdfResolution,
) -> Result<Vec<(MaterialSpec, BrdfTensor)>> {
    let mut rng = stream_rng(seed, Stream::Corpus, 0);
    let specs: Vec<MaterialSpec> = (0..count).map(|i| random_spec(&mut rng, i)).collect();
    specs
        .into_iter()
        .map(|spec| {
            let t = gen_brdf(&spec, res)?;
            Ok((spec, t))
        })
        .collect()
}
