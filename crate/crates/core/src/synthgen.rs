//! Paired-domain synthetic interaction generator with a knob that controls how
//! far overlapping users' target preferences drift from their source ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::raw::{DomainId, RawInteractions, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Users per domain; `round(overlap_fraction * n_users)` of them are shared.
    pub n_users: usize,
    pub n_items_per_domain: usize,
    pub latent_dim: usize,
    pub overlap_fraction: f64,
    /// 0 keeps overlapping users' target taste equal to the source taste,
    /// 1 draws it independently.
    pub distortion: f64,
    pub interactions_per_user: usize,
    /// Overrides `interactions_per_user` for the source domain.
    pub source_interactions_per_user: Option<usize>,
    /// Number of taste clusters; 0 draws users uniformly on the sphere.
    pub n_clusters: usize,
    pub cluster_spread: f64,
    /// Scale of the Gumbel noise added to item scores before top-k selection.
    pub noise: f64,
    /// Zipf exponent of the item-popularity multiplier (0 disables it).
    pub zipf_exponent: f64,
    /// Use the same item factors in both domains (test hook).
    pub share_item_factors: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 500,
            n_items_per_domain: 300,
            latent_dim: 16,
            overlap_fraction: 0.5,
            distortion: 1.0,
            interactions_per_user: 20,
            source_interactions_per_user: None,
            n_clusters: 8,
            cluster_spread: 0.3,
            noise: 0.1,
            zipf_exponent: 0.0,
            share_item_factors: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::Config {
                key: format!("synth.{key}"),
                message: message.to_string(),
            })
        };
        if self.n_users == 0 {
            return bad("n_users", "must be positive");
        }
        if self.n_items_per_domain == 0 {
            return bad("n_items_per_domain", "must be positive");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim", "must be positive");
        }
        if self.interactions_per_user == 0 || self.interactions_per_user > self.n_items_per_domain {
            return bad("interactions_per_user", "must be in 1..=n_items_per_domain");
        }
        if let Some(s) = self.source_interactions_per_user {
            if s == 0 || s > self.n_items_per_domain {
                return bad("source_interactions_per_user", "must be in 1..=n_items_per_domain");
            }
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) {
            return bad("overlap_fraction", "must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.distortion) {
            return bad("distortion", "must be in [0, 1]");
        }
        if !(self.cluster_spread >= 0.0 && self.noise >= 0.0 && self.zipf_exponent >= 0.0) {
            return bad("cluster_spread", "spread, noise and zipf_exponent must be non-negative");
        }
        Ok(())
    }

    pub fn n_overlap(&self) -> usize {
        (self.overlap_fraction * self.n_users as f64).round() as usize
    }
}

/// Latent ground truth behind a generated pair, keyed by user token.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub source_users: Vec<SyntheticUser>,
    pub target_users: Vec<SyntheticUser>,
    pub source_items: Vec<Vec<f64>>,
    pub target_items: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticUser {
    pub token: String,
    pub latent: Vec<f64>,
    /// Cluster the latent vector was drawn around (`None` without clusters).
    /// Target users whose taste stays closer to a source cluster `c` are
    /// labelled `c + n_clusters`.
    pub cluster: Option<usize>,
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    centers: Vec<Vec<f64>>,
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

impl Sampler<'_> {
    /// Unit vector, optionally scattered around a random cluster center.
    fn draw(&self, rng: &mut impl Rng) -> (Vec<f64>, Option<usize>) {
        let dim = self.cfg.latent_dim;
        if self.centers.is_empty() {
            return (normalize(gaussian(rng, dim)), None);
        }
        let c = rng.random_range(0..self.centers.len());
        let noise = gaussian(rng, dim);
        let v = self.centers[c]
            .iter()
            .zip(noise)
            .map(|(m, e)| m + self.cfg.cluster_spread * e / (dim as f64).sqrt())
            .collect();
        (normalize(v), Some(c))
    }
}

fn top_k_items(cfg: &SynthConfig, user: &[f64], items: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let mut scored: Vec<(f64, usize)> = items
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let dot: f64 = user.iter().zip(v).map(|(a, b)| a * b).sum();
            let pop = -cfg.zipf_exponent * ((j + 1) as f64).ln();
            let eps: f64 = if cfg.noise > 0.0 {
                cfg.noise * gumbel.sample(rng)
            } else {
                0.0
            };
            (dot + pop + eps, j)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Generates source and target logs plus the latent factors behind them.
pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(RawInteractions, RawInteractions, SyntheticTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Each domain has its own taste clusters, so a fresh target draw carries
    // no information about the source draw.
    let centers = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..cfg.n_clusters)
            .map(|_| normalize(gaussian(rng, cfg.latent_dim)))
            .collect()
    };
    let src = Sampler {
        cfg,
        centers: centers(&mut rng),
    };
    let tgt = Sampler {
        cfg,
        centers: centers(&mut rng),
    };

    let draw_items = |sampler: &Sampler, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..cfg.n_items_per_domain).map(|_| sampler.draw(rng).0).collect()
    };
    let source_items = draw_items(&src, &mut rng);
    let target_items = if cfg.share_item_factors {
        source_items.clone()
    } else {
        draw_items(&tgt, &mut rng)
    };

    let n_overlap = cfg.n_overlap();
    let mut source_users = Vec::with_capacity(cfg.n_users);
    let mut target_users = Vec::with_capacity(cfg.n_users);
    for o in 0..n_overlap {
        let (zs, cs) = src.draw(&mut rng);
        let (fresh, cf) = tgt.draw(&mut rng);
        let (zt, ct) = if cfg.distortion == 0.0 {
            (zs.clone(), cs.map(|c| c + cfg.n_clusters))
        } else {
            let mixed: Vec<f64> = zs
                .iter()
                .zip(&fresh)
                .map(|(a, b)| (1.0 - cfg.distortion) * a + cfg.distortion * b)
                .collect();
            let label = if cfg.distortion < 0.5 {
                cs.map(|c| c + cfg.n_clusters)
            } else {
                cf
            };
            if mixed.iter().all(|x| *x == 0.0) {
                (fresh, cf)
            } else {
                (normalize(mixed), label)
            }
        };
        let token = format!("o{o:05}");
        source_users.push(SyntheticUser {
            token: token.clone(),
            latent: zs,
            cluster: cs,
        });
        target_users.push(SyntheticUser {
            token,
            latent: zt,
            cluster: ct,
        });
    }
    for s in 0..cfg.n_users - n_overlap {
        let (z, c) = src.draw(&mut rng);
        source_users.push(SyntheticUser {
            token: format!("s{s:05}"),
            latent: z,
            cluster: c,
        });
    }
    for t in 0..cfg.n_users - n_overlap {
        let (z, c) = tgt.draw(&mut rng);
        target_users.push(SyntheticUser {
            token: format!("t{t:05}"),
            latent: z,
            cluster: c,
        });
    }

    let k_source = cfg.source_interactions_per_user.unwrap_or(cfg.interactions_per_user);
    let mut emit = |users: &[SyntheticUser], items: &[Vec<f64>], k: usize, domain: DomainId| {
        let mut records = Vec::with_capacity(users.len() * k);
        for u in users {
            for j in top_k_items(cfg, &u.latent, items, k, &mut rng) {
                records.push(Record {
                    user: u.token.clone(),
                    item: format!("i{j:05}"),
                    timestamp: None,
                });
            }
        }
        RawInteractions::from_records(domain, records)
    };
    let source = emit(&source_users, &source_items, k_source, DomainId::Source)?;
    let target = emit(
        &target_users,
        &target_items,
        cfg.interactions_per_user,
        DomainId::Target,
    )?;
    Ok((
        source,
        target,
        SyntheticTruth {
            source_users,
            target_users,
            source_items,
            target_items,
        },
    ))
}

pub fn generate(cfg: &SynthConfig) -> Result<(RawInteractions, RawInteractions)> {
    let (s, t, _) = generate_with_truth(cfg)?;
    Ok((s, t))
}
