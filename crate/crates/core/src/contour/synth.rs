//! Synthetic contour sequences with a known decomposition.
//!
//! The generator builds the data top-down: sparse gestural activations are
//! convolved with per-gesture kernels into factor scores, which are mapped
//! through articulator-supported factors into contour coordinates. Every
//! intermediate is returned, so each pipeline stage has an exact target.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;

use super::{ArticulatorId, ArticulatorMap, ContourError, ContourSequence, Result};
use crate::ncmf::hoyer_sparsity;
use crate::numkit::{norm2, Mat};

/// Lower bound on the Hoyer sparsity of every generated activation row.
pub const ACTIVATION_MIN_SPARSITY: f64 = 0.85;

/// Weight of the jaw's pull on tongue and lip coordinates.
const JAW_COUPLING: f64 = 0.5;

/// Half-cosine window applied to each activation impulse.
const EVENT_WINDOW: [f64; 3] = [
    std::f64::consts::FRAC_1_SQRT_2,
    1.0,
    std::f64::consts::FRAC_1_SQRT_2,
];

/// Silent frames between the end of one event's kernel and the next event,
/// in units of K: drawn uniformly from this inclusive range.
const EVENT_GAP: (usize, usize) = (4, 24);

/// Scale of the jaw coefficient relative to the other factors in each kernel.
const JAW_GAIN: f64 = 1.5;

const DEFAULT_PARTITION: [usize; 5] = [20, 30, 20, 15, 15];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub p: usize,
    pub t: usize,
    pub gestures: usize,
    pub window: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub fps: f64,
    /// Vertices per articulator in canonical order; `None` scales the
    /// default 20/30/20/15/15 split to `p`.
    pub partition: Option<[usize; 5]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            p: 100,
            t: 1000,
            gestures: 15,
            window: 21,
            seed: 0,
            noise_sigma: 0.01,
            fps: 83.0,
            partition: None,
        }
    }
}

impl SynthConfig {
    pub fn partition_sizes(&self) -> Result<[usize; 5]> {
        if self.p < 5 {
            return Err(ContourError::Argument(format!(
                "need p ≥ 5, got {}",
                self.p
            )));
        }
        if let Some(sizes) = self.partition {
            if sizes.iter().sum::<usize>() != self.p || sizes.contains(&0) {
                return Err(ContourError::Argument(format!(
                    "partition {sizes:?} is not a split of p = {} into nonzero parts",
                    self.p
                )));
            }
            return Ok(sizes);
        }
        // Largest-remainder apportionment of the default split, at least one vertex each.
        let total: usize = DEFAULT_PARTITION.iter().sum();
        let mut sizes = [1usize; 5];
        let spare = self.p - 5;
        let mut rema = [(0usize, 0usize); 5];
        let mut given = 0;
        for (i, &w) in DEFAULT_PARTITION.iter().enumerate() {
            let exact = spare * w;
            sizes[i] += exact / total;
            given += exact / total;
            rema[i] = (exact % total, i);
        }
        rema.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rema.iter().take(spare - given) {
            sizes[i] += 1;
        }
        Ok(sizes)
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub contours: ContourSequence,
    /// 2p×5, canonical articulator column order.
    pub true_factors: Mat,
    /// t×5.
    pub true_scores: Mat,
    /// D×t, nonnegative.
    pub true_activations: Mat,
    /// One D×5 matrix per lag, K in total.
    pub true_kernels: Vec<Mat>,
    pub noise_sigma: f64,
}

impl SyntheticTruth {
    /// Checks the structural guarantees of the generator.
    pub fn validate(&self) -> Result<()> {
        let map = self.contours.map();
        for art in ArticulatorId::ALL {
            let allowed = if art == ArticulatorId::Jaw {
                map.coordinate_rows(&[
                    ArticulatorId::Jaw,
                    ArticulatorId::Tongue,
                    ArticulatorId::Lip,
                ])
            } else {
                map.coordinate_rows(&[art])
            };
            for r in 0..self.true_factors.rows() {
                if !allowed.contains(&r) && self.true_factors[(r, art.index())] != 0.0 {
                    return Err(ContourError::Invariant(format!(
                        "true {art} factor has support on row {r}"
                    )));
                }
            }
        }
        let h = &self.true_activations;
        if h.data().iter().any(|&v| v < 0.0) {
            return Err(ContourError::Invariant("negative activation".into()));
        }
        for d in 0..h.rows() {
            let s = hoyer_sparsity(h.row(d)).map_err(|e| ContourError::Invariant(e.to_string()))?;
            if s < ACTIVATION_MIN_SPARSITY {
                return Err(ContourError::Invariant(format!(
                    "activation row {d} has sparsity {s:.4}"
                )));
            }
        }
        let mix = convolve_activations(h, &self.true_kernels);
        if mix.sub(&self.true_scores)?.max_abs() > 1e-12 * (1.0 + mix.max_abs()) {
            return Err(ContourError::Invariant(
                "scores are not the activation mix".into(),
            ));
        }
        Ok(())
    }
}

/// `Y(τ,:) = Σ_i H(:, τ−i)ᵀ·W(i)`, zero for `τ−i < 0`.
fn convolve_activations(h: &Mat, kernels: &[Mat]) -> Mat {
    let (d, t) = h.shape();
    let q = kernels.first().map_or(0, Mat::cols);
    let mut y = Mat::zeros(t, q);
    for (lag, w) in kernels.iter().enumerate() {
        for tau in lag..t {
            for g in 0..d {
                let a = h[(g, tau - lag)];
                if a == 0.0 {
                    continue;
                }
                for c in 0..q {
                    y[(tau, c)] += a * w[(g, c)];
                }
            }
        }
    }
    y
}

fn gaussian_unit(n: usize, rng: &mut Pcg64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let len = norm2(&v);
        if len > 1e-6 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticTruth> {
    let sizes = cfg.partition_sizes()?;
    let (p, t, d, k) = (cfg.p, cfg.t, cfg.gestures, cfg.window);
    if k == 0 {
        return Err(ContourError::Argument("window K must be ≥ 1".into()));
    }
    if t < 4 * k {
        return Err(ContourError::Argument(format!(
            "t = {t} is shorter than 4K = {} frames",
            4 * k
        )));
    }
    if t < EVENT_WINDOW.len() {
        return Err(ContourError::Argument(format!("t = {t} is too short")));
    }
    if d < 5 {
        return Err(ContourError::Argument(format!(
            "need D ≥ 5 gestures, got {d}"
        )));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(ContourError::Argument(format!(
            "noise_sigma = {}",
            cfg.noise_sigma
        )));
    }

    let mut rng = Pcg64::seed_from_u64(cfg.seed);
    let map = ArticulatorMap::from_block_sizes(sizes)?;

    // Factors: one random direction per articulator; jaw drags tongue and lip.
    let mut factors = Mat::zeros(2 * p, 5);
    for art in ArticulatorId::ALL {
        let rows = map.coordinate_rows(&[art]);
        let dir = gaussian_unit(rows.len(), &mut rng);
        for (&r, &v) in rows.iter().zip(&dir) {
            factors[(r, art.index())] = v;
        }
    }
    for art in [ArticulatorId::Tongue, ArticulatorId::Lip] {
        let rows = map.coordinate_rows(&[art]);
        let dir = gaussian_unit(rows.len(), &mut rng);
        for (&r, &v) in rows.iter().zip(&dir) {
            factors[(r, 0)] = JAW_COUPLING * v;
        }
    }
    let jaw = factors.col(0);
    let len = norm2(&jaw);
    factors.set_col(0, &jaw.iter().map(|v| v / len).collect::<Vec<_>>());

    // Activations: spaced impulses smoothed by the half-cosine window.
    let half = EVENT_WINDOW.len() / 2;
    let mut activations = Mat::zeros(d, t);
    for g in 0..d {
        let mut events = Vec::new();
        let mut pos = half + rng.gen_range(0..k.min(t - 2 * half));
        while pos + half < t {
            events.push((pos, rng.gen_range(0.5..1.5)));
            pos += k + rng.gen_range(EVENT_GAP.0 * k..=EVENT_GAP.1 * k);
        }
        loop {
            let row = activations.row_mut(g);
            row.fill(0.0);
            for &(at, amp) in &events {
                for (j, w) in EVENT_WINDOW.iter().enumerate() {
                    row[at + j - half] += amp * w;
                }
            }
            let s = hoyer_sparsity(row).map_err(|e| ContourError::Argument(e.to_string()))?;
            if s >= ACTIVATION_MIN_SPARSITY || events.len() == 1 {
                break;
            }
            let drop = rng.gen_range(0..events.len());
            events.remove(drop);
        }
    }

    // Kernels: sharp onset and linear release. Every gesture moves the jaw
    // plus a random subset of the other factors, and every factor is moved
    // by at least one gesture.
    let mut active = vec![[false; 5]; d];
    for row in active.iter_mut() {
        row[0] = true;
        for a in row[1..].iter_mut() {
            *a = rng.gen_bool(0.5);
        }
    }
    for c in 1..5 {
        if !active.iter().any(|row| row[c]) {
            active[rng.gen_range(0..d)][c] = true;
        }
    }
    let coeffs: Vec<[f64; 5]> = active
        .iter()
        .map(|row| {
            let mut out = [0.0; 5];
            for (c, (cell, &on)) in out.iter_mut().zip(row).enumerate() {
                let a: f64 = StandardNormal.sample(&mut rng);
                if on {
                    *cell = if c == 0 { JAW_GAIN * a } else { a };
                }
            }
            out
        })
        .collect();
    let kernels: Vec<Mat> = (0..k)
        .map(|lag| {
            let release = 1.0 - lag as f64 / k as f64;
            Mat::from_fn(d, 5, |g, c| coeffs[g][c] * release)
        })
        .collect();

    let scores = convolve_activations(&activations, &kernels);
    let mut x = factors.matmul(&scores.transpose())?;
    if cfg.noise_sigma > 0.0 {
        for v in x.data_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise_sigma * n;
        }
    }
    let contours = ContourSequence::new(x, cfg.fps, map)?;
    Ok(SyntheticTruth {
        contours,
        true_factors: factors,
        true_scores: scores,
        true_activations: activations,
        true_kernels: kernels,
        noise_sigma: cfg.noise_sigma,
    })
}
