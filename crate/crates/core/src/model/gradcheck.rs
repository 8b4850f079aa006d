use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Grads, ParamStore};

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.rel_error < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.rel_error >= self.tolerance)
    }

    /// Checked coordinates per parameter name.
    pub fn coverage(&self, param: &str) -> usize {
        self.entries.iter().filter(|e| e.param == param).count()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central finite differences against `analytic` on up to
/// `coords_per_tensor` sampled coordinates of every parameter (all of them
/// for smaller tensors).
pub fn grad_check<F>(
    params: &mut ParamStore,
    analytic: &Grads,
    loss: F,
    epsilon: f64,
    tolerance: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for id in params.ids().collect::<Vec<_>>() {
        let n = params.get(id).len();
        let coords: Vec<usize> = if n <= coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = params.get(id).data[i];
            params.get_mut(id).data[i] = orig + epsilon;
            let up = loss(params);
            params.get_mut(id).data[i] = orig - epsilon;
            let down = loss(params);
            params.get_mut(id).data[i] = orig;
            let numeric = (up? - down?) / (2.0 * epsilon);
            let a = analytic.get(id).data[i];
            entries.push(GradCheckEntry {
                param: params.name(id).to_string(),
                index: i,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    Ok(GradCheckReport { entries, tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Mat;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        let id = store.add("w", Mat::from_fn(3, 5, |r, c| r as f64 - c as f64 * 0.5));
        let loss = |s: &ParamStore| -> Result<f64> {
            Ok(s.get(id).data.iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum())
        };
        let grads = Grads(vec![Mat::from_vec(
            3,
            5,
            store.get(id).data.iter().enumerate().map(|(i, x)| 2.0 * (i as f64 + 1.0) * x).collect(),
        )]);
        let report = grad_check(&mut store, &grads, loss, 1e-3, 1e-7, 10, 0).unwrap();
        assert_eq!(report.coverage("w"), 10);
        assert!(report.passed(), "max rel err {}", report.max_rel_error());
        assert!(report.max_rel_error() < 1e-7);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut store = ParamStore::new();
        let id = store.add("w", Mat::row_vector(vec![1.0, 2.0]));
        let loss = |s: &ParamStore| -> Result<f64> { Ok(s.get(id).data.iter().map(|x| x * x).sum()) };
        let grads = Grads(vec![Mat::row_vector(vec![2.0, 3.0])]);
        let report = grad_check(&mut store, &grads, loss, 1e-5, 1e-4, 10, 0).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 1);
    }
}
