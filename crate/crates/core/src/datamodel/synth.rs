//! Synthetic two-class claim generator.
//!
//! Every claim has a topic latent `u`. The propagation tree's text embeddings are a fixed linear
//! map of `u`; the image is rendered from a visual latent that equals `u` (mixed with noise by
//! `agreement`) for non-rumors and is drawn independently for rumors. On top of that,
//! `separability` shifts rumor text along a class direction and makes tampered patches more
//! likely in rumor images.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::claim::{Claim, FALSE_RUMOR, NON_RUMOR};
use super::dataset::{snap_f32, Dataset};
use crate::error::{Result, VgaError};
use crate::tensorcore::{derive_seed, Tensor};

const LATENT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub non_rumors: usize,
    pub rumors: usize,
    /// Inclusive range of tree sizes, root included.
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Node embedding width `D`.
    pub dim: usize,
    /// Square image side; 0 omits images.
    pub image_size: usize,
    /// Width of the precomputed visual embedding; 0 omits it.
    pub visual_dim: usize,
    /// 0 = classes differ only in cross-modal agreement, 1 = trivially separable.
    pub separability: f64,
    /// Correlation between text and visual latents for non-rumors.
    pub agreement: f64,
    /// Probability that a claim carries an OCR embedding.
    pub ocr_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            non_rumors: 20,
            rumors: 20,
            min_nodes: 3,
            max_nodes: 10,
            dim: 32,
            image_size: 16,
            visual_dim: 32,
            separability: 0.5,
            agreement: 0.9,
            ocr_rate: 0.3,
        }
    }
}

impl SynthConfig {
    /// Balanced classes, `claims / 2` rumors (rounded down).
    pub fn balanced(claims: usize) -> Self {
        SynthConfig {
            non_rumors: claims - claims / 2,
            rumors: claims / 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.non_rumors + self.rumors == 0 {
            return Err(VgaError::config(
                "synthetic dataset needs at least one claim",
            ));
        }
        if self.min_nodes == 0 || self.min_nodes > self.max_nodes {
            return Err(VgaError::config(format!(
                "bad tree size range [{}, {}]",
                self.min_nodes, self.max_nodes
            )));
        }
        if self.dim == 0 {
            return Err(VgaError::config("embedding width must be positive"));
        }
        if self.image_size != 0 && self.image_size < 5 {
            return Err(VgaError::config("image side must be 0 or at least 5"));
        }
        if !unit(self.separability) || !unit(self.agreement) || !unit(self.ocr_rate) {
            return Err(VgaError::config(
                "separability, agreement and ocr_rate must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Fixed per-dataset maps from latents to observations.
struct World {
    text_map: Tensor,
    class_dir: Vec<f64>,
    visual_map: Tensor,
    /// `LATENT` smooth `side×side×3` patterns.
    patterns: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, std).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn apply(map: &Tensor, z: &[f64]) -> Vec<f64> {
    (0..map.rows())
        .map(|r| map.row_slice(r).iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

impl World {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> World {
        let scale = 1.0 / (LATENT as f64).sqrt();
        let text_map = Tensor::new(
            vec![cfg.dim, LATENT],
            gaussian(rng, cfg.dim * LATENT, scale),
        )
        .unwrap();
        let mut class_dir = gaussian(rng, cfg.dim, 1.0);
        let norm = class_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        class_dir.iter_mut().for_each(|v| *v /= norm);
        let vd = cfg.visual_dim.max(1);
        let visual_map = Tensor::new(vec![vd, LATENT], gaussian(rng, vd * LATENT, scale)).unwrap();
        let side = cfg.image_size;
        let patterns = (0..LATENT)
            .map(|_| {
                let fx = rng.random_range(1..=3) as f64;
                let fy = rng.random_range(1..=3) as f64;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let tint = gaussian(rng, 3, 1.0);
                let mut p = Vec::with_capacity(side * side * 3);
                for y in 0..side {
                    for x in 0..side {
                        let t = std::f64::consts::TAU * (fx * x as f64 + fy * y as f64)
                            / side.max(1) as f64;
                        let w = (t + phase).cos();
                        p.extend(tint.iter().map(|c| c * w));
                    }
                }
                p
            })
            .collect();
        World {
            text_map,
            class_dir,
            visual_map,
            patterns,
        }
    }

    fn image(&self, v: &[f64], side: usize, tampered: bool, rng: &mut ChaCha8Rng) -> Tensor {
        let mut data = vec![0.5; side * side * 3];
        for (p, &z) in self.patterns.iter().zip(v) {
            for (d, w) in data.iter_mut().zip(p) {
                *d += 0.08 * z * w;
            }
        }
        let pixel = Normal::new(0.0, 0.01).unwrap();
        data.iter_mut().for_each(|d| *d += pixel.sample(rng));
        if tampered {
            let size = (side / 3).max(2);
            let y0 = rng.random_range(0..=side - size);
            let x0 = rng.random_range(0..=side - size);
            for y in y0..y0 + size {
                for x in x0..x0 + size {
                    for c in 0..3 {
                        data[(y * side + x) * 3 + c] += rng.random_range(-0.2..0.2);
                    }
                }
            }
        }
        data.iter_mut().for_each(|d| *d = d.clamp(0.0, 1.0));
        Tensor::new(vec![side, side, 3], data).unwrap()
    }
}

/// Random recursive tree: node `i` attaches to a uniformly chosen earlier node.
pub fn random_recursive_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.random_range(0..i), i)).collect()
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut world_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth.world"));
    let world = World::new(cfg, &mut world_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synth.claims"));

    let mut labels: Vec<u8> = std::iter::repeat_n(NON_RUMOR, cfg.non_rumors)
        .chain(std::iter::repeat_n(FALSE_RUMOR, cfg.rumors))
        .collect();
    labels.shuffle(&mut rng);

    let shift = 1.5 * cfg.separability;
    let rho = cfg.agreement;
    let mut claims = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        let sign = if y == FALSE_RUMOR { 1.0 } else { -1.0 };
        let u = gaussian(&mut rng, LATENT, 1.0);
        let xi = gaussian(&mut rng, LATENT, 1.0);
        let v: Vec<f64> = if y == FALSE_RUMOR {
            xi
        } else {
            u.iter()
                .zip(&xi)
                .map(|(a, b)| rho * a + (1.0 - rho * rho).sqrt() * b)
                .collect()
        };

        let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
        let topic = apply(&world.text_map, &u);
        let mut rows = Vec::with_capacity(n * cfg.dim);
        for node in 0..n {
            let (weight, noise) = if node == 0 { (1.0, 0.3) } else { (0.6, 0.6) };
            let eps = gaussian(&mut rng, cfg.dim, noise);
            rows.extend(
                (0..cfg.dim)
                    .map(|j| weight * topic[j] + sign * shift * world.class_dir[j] + eps[j]),
            );
        }
        let node_embeddings = snap_f32(Tensor::new(vec![n, cfg.dim], rows)?);
        let edges = random_recursive_tree(n, &mut rng);

        let ocr = if rng.random_bool(cfg.ocr_rate) {
            let text = apply(&world.text_map, &v);
            let eps = gaussian(&mut rng, cfg.dim, 0.3);
            Some(snap_f32(Tensor::vector(
                text.iter().zip(&eps).map(|(a, b)| a + b).collect(),
            )))
        } else {
            None
        };
        let tamper_p = 0.5 + sign * 0.5 * cfg.separability;
        let tampered = rng.random_bool(tamper_p);
        let image = (cfg.image_size > 0)
            .then(|| snap_f32(world.image(&v, cfg.image_size, tampered, &mut rng)));
        let visual_embedding = (cfg.visual_dim > 0).then(|| {
            let mut e = apply(&world.visual_map, &v);
            e.iter_mut()
                .for_each(|x| *x += 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            snap_f32(Tensor::vector(e))
        });
        claims.push(Claim {
            id: format!("synth-{i:05}"),
            label: y,
            node_embeddings,
            edges,
            ocr,
            image,
            visual_embedding,
        });
    }
    let mut ds = Dataset::new(claims)?;
    ds.seed = Some(seed);
    Ok(ds)
}
