//! Transducer lattice dynamic programming over a grid of per-node output
//! log-probabilities, plus an exhaustive path enumerator used to check it.
//!
//! Node `(t, u)` holds the output distribution after consuming `t` frames and
//! emitting `u` labels. A blank at `(t, u)` moves to `(t + 1, u)`; emitting
//! `y[u]` moves to `(t, u + 1)`. A complete alignment ends with the blank at
//! `(T - 1, U)`.

use crate::error::{Error, Result};
use crate::tensor::{log_add_exp, Mat};

/// Log-probabilities laid out as `(t * (U + 1) + u) * width + symbol`.
#[derive(Clone, Copy, Debug)]
pub struct LogProbGrid<'a> {
    pub frames: usize,
    pub label_len: usize,
    pub width: usize,
    pub data: &'a [f64],
}

impl<'a> LogProbGrid<'a> {
    pub fn new(frames: usize, label_len: usize, width: usize, data: &'a [f64]) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Shape("lattice needs at least one frame".into()));
        }
        if data.len() != frames * (label_len + 1) * width {
            return Err(Error::Shape(format!(
                "log-prob grid has {} values, expected {}x{}x{}",
                data.len(),
                frames,
                label_len + 1,
                width
            )));
        }
        Ok(LogProbGrid {
            frames,
            label_len,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, t: usize, u: usize, k: u32) -> f64 {
        self.data[(t * (self.label_len + 1) + u) * self.width + k as usize]
    }
}

fn check_target(target: &[u32], width: usize, blank: u32) -> Result<()> {
    if let Some(&bad) = target.iter().find(|&&y| y == blank || y as usize >= width) {
        return Err(Error::Shape(format!(
            "target symbol {bad} is blank or outside the {width}-way output"
        )));
    }
    Ok(())
}

/// Forward variables `alpha(t, u)` and the total log-likelihood.
pub fn forward(grid: &LogProbGrid, target: &[u32], blank: u32) -> Result<(Mat, f64)> {
    if target.len() != grid.label_len {
        return Err(Error::Shape("target length disagrees with grid".into()));
    }
    check_target(target, grid.width, blank)?;
    let (t_len, u1) = (grid.frames, grid.label_len + 1);
    let mut alpha = Mat::zeros(t_len, u1);
    for t in 0..t_len {
        for u in 0..u1 {
            if t == 0 && u == 0 {
                continue;
            }
            let from_blank = if t > 0 {
                alpha.get(t - 1, u) + grid.at(t - 1, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let from_emit = if u > 0 {
                alpha.get(t, u - 1) + grid.at(t, u - 1, target[u - 1])
            } else {
                f64::NEG_INFINITY
            };
            alpha.set(t, u, log_add_exp(from_blank, from_emit));
        }
    }
    let ll = alpha.get(t_len - 1, u1 - 1) + grid.at(t_len - 1, u1 - 1, blank);
    Ok((alpha, ll))
}

/// Backward variables `beta(t, u)`: log-probability of completing the
/// alignment from node `(t, u)`.
pub fn backward(grid: &LogProbGrid, target: &[u32], blank: u32) -> Mat {
    let (t_len, u1) = (grid.frames, grid.label_len + 1);
    let mut beta = Mat::zeros(t_len, u1);
    for t in (0..t_len).rev() {
        for u in (0..u1).rev() {
            let via_blank = if t + 1 < t_len {
                beta.get(t + 1, u) + grid.at(t, u, blank)
            } else if u + 1 == u1 {
                grid.at(t, u, blank)
            } else {
                f64::NEG_INFINITY
            };
            let via_emit = if u + 1 < u1 {
                beta.get(t, u + 1) + grid.at(t, u, target[u])
            } else {
                f64::NEG_INFINITY
            };
            beta.set(t, u, log_add_exp(via_blank, via_emit));
        }
    }
    beta
}

/// Gradient of the loss `-log P(target)` with respect to every grid entry.
pub fn loss_grad(grid: &LogProbGrid, target: &[u32], blank: u32, alpha: &Mat, ll: f64) -> Vec<f64> {
    let beta = backward(grid, target, blank);
    let (t_len, u1) = (grid.frames, grid.label_len + 1);
    let mut grad = vec![0.0; grid.data.len()];
    for t in 0..t_len {
        for u in 0..u1 {
            let a = alpha.get(t, u);
            if a == f64::NEG_INFINITY {
                continue;
            }
            let base = (t * u1 + u) * grid.width;
            let next = if t + 1 < t_len {
                beta.get(t + 1, u)
            } else if u + 1 == u1 {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            if next > f64::NEG_INFINITY {
                grad[base + blank as usize] = -(a + next + grid.at(t, u, blank) - ll).exp();
            }
            if u + 1 < u1 {
                let y = target[u];
                grad[base + y as usize] = -(a + beta.get(t, u + 1) + grid.at(t, u, y) - ll).exp();
            }
        }
    }
    grad
}

/// Number of distinct alignments: choose where the `U` emissions fall among
/// the first `T - 1 + U` moves (the final move is always a blank).
pub fn count_paths(frames: usize, label_len: usize) -> u128 {
    if frames == 0 {
        return 0;
    }
    let n = (frames - 1 + label_len) as u128;
    let k = label_len.min(frames - 1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

pub const BRUTEFORCE_PATH_CAP: u128 = 1_000_000;

/// Loss by explicit enumeration of every alignment.
pub fn bruteforce_loss(grid: &LogProbGrid, target: &[u32], blank: u32) -> Result<f64> {
    if target.len() != grid.label_len {
        return Err(Error::Shape("target length disagrees with grid".into()));
    }
    check_target(target, grid.width, blank)?;
    let paths = count_paths(grid.frames, grid.label_len);
    if paths > BRUTEFORCE_PATH_CAP {
        return Err(Error::TooManyPaths {
            paths,
            cap: BRUTEFORCE_PATH_CAP,
        });
    }
    let moves = grid.frames - 1 + grid.label_len;
    let mut path_logps = Vec::with_capacity(paths as usize);
    // Each path is a bit pattern over `moves` steps with exactly `U` emits.
    let mut choose = vec![false; moves];
    enumerate(&mut choose, 0, grid.label_len, &mut |emits: &[bool]| {
        let (mut t, mut u, mut lp) = (0usize, 0usize, 0.0f64);
        for &e in emits {
            if e {
                lp += grid.at(t, u, target[u]);
                u += 1;
            } else {
                lp += grid.at(t, u, blank);
                t += 1;
            }
        }
        lp += grid.at(t, u, blank);
        path_logps.push(lp);
    });
    debug_assert_eq!(path_logps.len() as u128, paths);
    Ok(-crate::tensor::log_sum_exp(&path_logps))
}

fn enumerate(slots: &mut [bool], pos: usize, remaining: usize, visit: &mut impl FnMut(&[bool])) {
    if pos == slots.len() {
        if remaining == 0 {
            visit(slots);
        }
        return;
    }
    if slots.len() - pos > remaining {
        slots[pos] = false;
        enumerate(slots, pos + 1, remaining, visit);
    }
    if remaining > 0 {
        slots[pos] = true;
        enumerate(slots, pos + 1, remaining - 1, visit);
        slots[pos] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(frames: usize, label_len: usize, width: usize) -> Vec<f64> {
        vec![-(width as f64).ln(); frames * (label_len + 1) * width]
    }

    #[test]
    fn path_counts() {
        assert_eq!(count_paths(1, 1), 1);
        assert_eq!(count_paths(2, 1), 2);
        assert_eq!(count_paths(3, 2), 6);
        assert_eq!(count_paths(1, 0), 1);
    }

    #[test]
    fn uniform_two_frames_one_label() {
        let data = uniform(2, 1, 3);
        let grid = LogProbGrid::new(2, 1, 3, &data).unwrap();
        let (_, ll) = forward(&grid, &[0], 2).unwrap();
        let expected = -(2.0f64 * (1.0f64 / 3.0).powi(3)).ln();
        assert!((-ll - expected).abs() < 1e-12);
        assert!((expected - 2.6027).abs() < 1e-4);
        let brute = bruteforce_loss(&grid, &[0], 2).unwrap();
        assert!((brute - expected).abs() < 1e-12);
    }

    #[test]
    fn single_path_is_blank_probability() {
        let data = vec![(0.2f64).ln(), (0.8f64).ln()];
        let grid = LogProbGrid::new(1, 0, 2, &data).unwrap();
        let (_, ll) = forward(&grid, &[], 1).unwrap();
        assert!((-ll - (-(0.8f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn rejects_blank_target_and_caps_enumeration() {
        let data = uniform(2, 1, 3);
        let grid = LogProbGrid::new(2, 1, 3, &data).unwrap();
        assert!(forward(&grid, &[2], 2).is_err());
        let big = uniform(30, 20, 2);
        let grid = LogProbGrid::new(30, 20, 2, &big).unwrap();
        assert!(matches!(
            bruteforce_loss(&grid, &[0; 20], 1),
            Err(Error::TooManyPaths { .. })
        ));
    }

    #[test]
    fn alpha_beta_agree() {
        let data: Vec<f64> = (0..3 * 3 * 4).map(|i| -1.0 - (i % 7) as f64 * 0.3).collect();
        let grid = LogProbGrid::new(3, 2, 4, &data).unwrap();
        let target = [1, 0];
        let (_, ll) = forward(&grid, &target, 3).unwrap();
        let beta = backward(&grid, &target, 3);
        assert!((beta.get(0, 0) - ll).abs() < 1e-12);
    }
}
