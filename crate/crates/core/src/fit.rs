//! Fitting per-point radiance (SH coefficients and density) to posed images
//! by gradient descent through the closed-form renderer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geom::Vec3;
use crate::image::Image;
use crate::optim::{Adam, AdamConfig};
use crate::points::{NeuralPointCloud, PointsError};
use crate::render::{ray_seed, sample_ray, Camera, Ray};
use crate::sh;
use crate::spatial::{KdTree, Neighbor};

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceFitConfig {
    pub iters: usize,
    pub lr: f64,
    /// Rays per minibatch.
    pub batch: usize,
    pub n_samples: usize,
    /// Seeds both the stratified sample jitter (as in rendering) and the
    /// minibatch draws.
    pub seed: u64,
    pub background: Vec3,
}

impl Default for RadianceFitConfig {
    fn default() -> Self {
        RadianceFitConfig {
            iters: 2000,
            lr: 1e-2,
            batch: 1024,
            n_samples: crate::render::DEFAULT_SAMPLES,
            seed: 0,
            background: Vec3::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadianceFitReport {
    /// Minibatch mean squared error before each update.
    pub losses: Vec<f64>,
    pub rays: usize,
}

/// Neighbor weights of one retained sample.
#[derive(Debug, Clone, Copy)]
struct CachedSample {
    delta: f64,
    falloff: f64,
    start: u32,
    end: u32,
}

/// Everything about a ray that does not depend on the fitted parameters.
#[derive(Debug, Clone)]
pub struct RayCache {
    target: Vec3,
    basis: Vec<f64>,
    samples: Vec<CachedSample>,
    nb_index: Vec<u32>,
    nb_weight: Vec<f64>,
}

impl RayCache {
    /// Samples `ray` exactly as the renderer does for `ray_id` under `seed`.
    pub fn new(
        cloud: &NeuralPointCloud,
        index: &KdTree,
        ray: &Ray,
        n_samples: usize,
        seed: u64,
        ray_id: u64,
        target: Vec3,
    ) -> RayCache {
        let mut basis = vec![0.0; cloud.basis_count()];
        sh::eval_basis(cloud.sh_degree(), ray.dir, &mut basis);
        let mut cache = RayCache { target, basis, samples: Vec::new(), nb_index: Vec::new(), nb_weight: Vec::new() };
        let mut scratch: Vec<Neighbor> = Vec::with_capacity(cloud.k_agg);
        for s in sample_ray(ray, index, cloud.r_agg, n_samples, ray_seed(seed, ray_id)) {
            let Some(agg) = cloud.aggregate(index, s.pos, &mut scratch) else {
                continue;
            };
            let start = cache.nb_index.len() as u32;
            cache.nb_index.extend(agg.indices.iter().map(|&i| i as u32));
            cache.nb_weight.extend_from_slice(&agg.weights);
            cache.samples.push(CachedSample {
                delta: s.delta,
                falloff: agg.falloff,
                start,
                end: cache.nb_index.len() as u32,
            });
        }
        cache
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

/// Parameters being fitted, in optimizer coordinates.
struct Params<'a> {
    sh: &'a [f64],
    log_density: &'a [f64],
    coeffs: usize,
}

/// Per-sample quantities from the forward pass.
#[derive(Default)]
struct Forward {
    sigma: Vec<f64>,
    raw: Vec<Vec3>,
    color: Vec<Vec3>,
    trans: Vec<f64>,
    rgb_raw: Vec3,
}

fn forward(ray: &RayCache, p: &Params, background: Vec3, fw: &mut Forward) -> Vec3 {
    let b = ray.basis.len();
    fw.sigma.clear();
    fw.raw.clear();
    fw.color.clear();
    fw.trans.clear();
    let mut optical = 0.0;
    let mut trans = 1.0;
    let mut rgb = Vec3::ZERO;
    for s in &ray.samples {
        let mut sigma = 0.0;
        let mut raw = Vec3::ZERO;
        for k in s.start as usize..s.end as usize {
            let j = ray.nb_index[k] as usize;
            let w = ray.nb_weight[k];
            sigma += w * p.log_density[j].exp();
            raw += sh::decode(&p.sh[j * p.coeffs..(j + 1) * p.coeffs], &ray.basis[..b]) * w;
        }
        sigma *= s.falloff;
        let color = raw.clamp01();
        let next_optical = optical + sigma * s.delta;
        let next_trans = (-next_optical).exp();
        rgb += color * (trans - next_trans);
        fw.trans.push(trans);
        fw.sigma.push(sigma);
        fw.raw.push(raw);
        fw.color.push(color);
        optical = next_optical;
        trans = next_trans;
    }
    fw.trans.push(trans);
    rgb += background * trans;
    fw.rgb_raw = rgb;
    rgb.clamp01()
}

/// Accumulates `d(upstream . C) / d params` into the gradient buffers,
/// where `C` is the clamped pixel color.
fn backward(
    ray: &RayCache,
    p: &Params,
    background: Vec3,
    fw: &Forward,
    upstream: Vec3,
    g_sh: &mut [f64],
    g_log_density: &mut [f64],
) {
    let b = ray.basis.len();
    let mask = |v: f64| if v > 0.0 && v < 1.0 { 1.0 } else { 0.0 };
    let g = Vec3::new(
        upstream.x * mask(fw.rgb_raw.x),
        upstream.y * mask(fw.rgb_raw.y),
        upstream.z * mask(fw.rgb_raw.z),
    );
    if g == Vec3::ZERO {
        return;
    }
    let n = ray.samples.len();
    // contribution of everything behind sample s, background included
    let mut behind = background * fw.trans[n];
    for s in (0..n).rev() {
        let smp = &ray.samples[s];
        let weight = fw.trans[s] - fw.trans[s + 1];
        let c = fw.color[s];
        let d_sigma = smp.delta * g.dot(c * fw.trans[s + 1] - behind);
        let raw = fw.raw[s];
        let g_color = Vec3::new(
            g.x * weight * mask(raw.x),
            g.y * weight * mask(raw.y),
            g.z * weight * mask(raw.z),
        );
        for k in smp.start as usize..smp.end as usize {
            let j = ray.nb_index[k] as usize;
            let w = ray.nb_weight[k];
            g_log_density[j] += d_sigma * smp.falloff * w * p.log_density[j].exp();
            let base = j * p.coeffs;
            for ch in 0..3 {
                let gc = g_color[ch] * w;
                if gc != 0.0 {
                    for (dst, y) in g_sh[base + ch * b..base + (ch + 1) * b].iter_mut().zip(&ray.basis) {
                        *dst += gc * y;
                    }
                }
            }
        }
        behind += c * weight;
    }
}

/// Jacobian of one pixel's clamped color with respect to every point's SH
/// coefficients and density: entry `[ch][param]`.
#[derive(Debug, Clone)]
pub struct RayJacobian {
    pub rgb: Vec3,
    /// `d rgb[ch] / d sh[param]`, params in the cloud's flat SH layout.
    pub d_sh: [Vec<f64>; 3],
    /// `d rgb[ch] / d density[i]`.
    pub d_density: [Vec<f64>; 3],
}

/// Analytic per-pixel gradients, using the same samples as
/// `render_ray(.., ray_id)` with `RenderOptions { seed, n_samples, background }`.
pub fn ray_jacobian(
    cloud: &NeuralPointCloud,
    index: &KdTree,
    ray: &Ray,
    n_samples: usize,
    seed: u64,
    ray_id: u64,
    background: Vec3,
) -> RayJacobian {
    let cache = RayCache::new(cloud, index, ray, n_samples, seed, ray_id, Vec3::ZERO);
    let log_density: Vec<f64> = cloud.density.iter().map(|d| d.ln()).collect();
    let p = Params { sh: &cloud.sh, log_density: &log_density, coeffs: cloud.coeffs_per_point() };
    let mut fw = Forward::default();
    let rgb = forward(&cache, &p, background, &mut fw);
    let mut d_sh: [Vec<f64>; 3] = Default::default();
    let mut d_density: [Vec<f64>; 3] = Default::default();
    for ch in 0..3 {
        let mut up = Vec3::ZERO;
        match ch {
            0 => up.x = 1.0,
            1 => up.y = 1.0,
            _ => up.z = 1.0,
        }
        let mut gs = vec![0.0; cloud.sh.len()];
        let mut gl = vec![0.0; cloud.len()];
        backward(&cache, &p, background, &fw, up, &mut gs, &mut gl);
        // chain rule back from log density to density
        d_density[ch] = gl.iter().zip(&cloud.density).map(|(g, d)| g / d).collect();
        d_sh[ch] = gs;
    }
    RayJacobian { rgb, d_sh, d_density }
}

/// Number of independent gradient partial sums per minibatch. Fixed so the
/// result does not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

/// Fits SH coefficients and densities of `cloud` to the posed images by
/// minimizing the mean squared pixel error. Positions and confidences are
/// frozen. Densities are optimized in log space; non-positive input
/// densities start at a small positive value.
pub fn fit_radiance(
    cloud: &NeuralPointCloud,
    views: &[(Camera, Image)],
    config: &RadianceFitConfig,
) -> Result<(NeuralPointCloud, RadianceFitReport), PointsError> {
    if config.iters == 0 {
        return Ok((cloud.clone(), RadianceFitReport { losses: Vec::new(), rays: 0 }));
    }
    if views.len() < 2 {
        return Err(PointsError::Invalid(format!("need at least 2 views, got {}", views.len())));
    }
    if config.batch == 0 || !(config.lr > 0.0) {
        return Err(PointsError::Invalid("batch and lr must be positive".into()));
    }
    cloud.validate()?;
    let index = cloud.build_index()?;
    for (cam, img) in views {
        img.check_dims(cam.width, cam.height).map_err(|e| PointsError::Invalid(e.to_string()))?;
    }
    let rays: Vec<RayCache> = views
        .iter()
        .flat_map(|(cam, img)| {
            let w = cam.width;
            let index = &index;
            (0..cam.width * cam.height).into_par_iter().map(move |p| {
                let px = img.pixel(p % w, p / w);
                let ray = cam.pixel_ray(p % w, p / w);
                RayCache::new(cloud, index, &ray, config.n_samples, config.seed, p as u64, Vec3::from(px))
            })
            .collect::<Vec<_>>()
        })
        .collect();

    let coeffs = cloud.coeffs_per_point();
    let mut sh_params = cloud.sh.clone();
    let mut log_density: Vec<f64> = cloud.density.iter().map(|&d| d.max(1e-6).ln()).collect();
    let adam = AdamConfig::with_lr(config.lr);
    let mut opt_sh = Adam::new(adam, sh_params.len());
    let mut opt_density = Adam::new(adam, log_density.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xF17_4AD1);
    let mut losses = Vec::with_capacity(config.iters);
    let norm = 1.0 / (3.0 * config.batch as f64);

    for it in 0..config.iters {
        let batch: Vec<usize> = (0..config.batch).map(|_| rng.random_range(0..rays.len())).collect();
        let chunk = config.batch.div_ceil(GRAD_CHUNKS);
        let p = Params { sh: &sh_params, log_density: &log_density, coeffs };
        let partial: Vec<(f64, Vec<f64>, Vec<f64>)> = batch
            .par_chunks(chunk)
            .map(|ids| {
                let mut gs = vec![0.0; sh_params.len()];
                let mut gl = vec![0.0; log_density.len()];
                let mut fw = Forward::default();
                let mut loss = 0.0;
                for &r in ids {
                    let ray = &rays[r];
                    let rgb = forward(ray, &p, config.background, &mut fw);
                    let diff = rgb - ray.target;
                    loss += diff.norm_squared() * norm;
                    backward(ray, &p, config.background, &fw, diff * (2.0 * norm), &mut gs, &mut gl);
                }
                (loss, gs, gl)
            })
            .collect();
        let mut loss = 0.0;
        let mut g_sh = vec![0.0; sh_params.len()];
        let mut g_ld = vec![0.0; log_density.len()];
        for (l, gs, gl) in partial {
            loss += l;
            g_sh.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
            g_ld.iter_mut().zip(&gl).for_each(|(a, b)| *a += b);
        }
        if !loss.is_finite() || g_sh.iter().chain(&g_ld).any(|g| !g.is_finite()) {
            return Err(PointsError::DivergedFit(it));
        }
        losses.push(loss);
        opt_sh.step(&mut sh_params, &g_sh);
        opt_density.step(&mut log_density, &g_ld);
    }

    let mut out = cloud.clone();
    out.sh = sh_params;
    out.density = log_density.iter().map(|l| l.exp()).collect();
    if out.sh.iter().chain(&out.density).any(|v| !v.is_finite()) {
        return Err(PointsError::DivergedFit(config.iters));
    }
    Ok((out, RadianceFitReport { losses, rays: rays.len() }))
}
