//! Drawing from fixed-hyperparameter and mixture posteriors.

use crate::adapt::HbPosterior;
use crate::conjugate::ConjugatePosterior;
use crate::rng::Stream;

/// Row-major `count × dim` matrix of posterior draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Draws {
    dim: usize,
    data: Vec<f64>,
}

impl Draws {
    pub fn new(count: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; count * dim],
        }
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// A posterior that can be sampled and has a center (its mean).
pub trait PosteriorSampler {
    fn dim(&self) -> usize;

    fn center(&self) -> &[f64];

    /// Writes one draw into `out`.
    fn draw_into(&self, rng: &mut Stream, out: &mut [f64]);

    /// `count` draws from a stream seeded with `seed`.
    fn sample(&self, count: usize, seed: u64) -> Draws {
        let mut draws = Draws::new(count, self.dim());
        let mut rng = Stream::new(seed);
        for k in 0..count {
            self.draw_into(&mut rng, draws.row_mut(k));
        }
        draws
    }
}

fn gaussian_draw(rng: &mut Stream, mean: &[f64], var: &[f64], out: &mut [f64]) {
    rng.fill_normals(out);
    for ((o, m), v) in out.iter_mut().zip(mean).zip(var) {
        *o = m + v.sqrt() * *o;
    }
}

impl PosteriorSampler for ConjugatePosterior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn center(&self) -> &[f64] {
        &self.mean
    }

    fn draw_into(&self, rng: &mut Stream, out: &mut [f64]) {
        gaussian_draw(rng, &self.mean, &self.var, out);
    }
}

impl HbPosterior {
    fn cumulative_weights(&self) -> Vec<f64> {
        self.components
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c.weight;
                Some(*acc)
            })
            .collect()
    }
}

impl PosteriorSampler for HbPosterior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn center(&self) -> &[f64] {
        &self.mean
    }

    fn draw_into(&self, rng: &mut Stream, out: &mut [f64]) {
        let cumulative = self.cumulative_weights();
        let j = rng.categorical(&cumulative);
        let post = &self.components[j].posterior;
        gaussian_draw(rng, &post.mean, &post.var, out);
    }

    fn sample(&self, count: usize, seed: u64) -> Draws {
        let cumulative = self.cumulative_weights();
        let mut draws = Draws::new(count, self.dim());
        let mut rng = Stream::new(seed);
        for k in 0..count {
            let j = rng.categorical(&cumulative);
            let post = &self.components[j].posterior;
            gaussian_draw(&mut rng, &post.mean, &post.var, draws.row_mut(k));
        }
        draws
    }
}

/// Mixture draws: pick component `j` with probability `w_j`, then
/// `θ ~ N(m(α_j), diag s²(α_j))`.
pub fn hb_sample(post: &HbPosterior, count: usize, seed: u64) -> Draws {
    post.sample(count, seed)
}
