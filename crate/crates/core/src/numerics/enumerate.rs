use crate::error::{Error, Result};

/// Environment variable that overrides the enumeration cap.
pub const MAX_SPACE_ENV: &str = "POWERLAW_SUFF_MAX_SPACE";

/// Default maximum number of enumerated states (`{0,1}^12`).
pub const DEFAULT_MAX_SPACE: usize = 1 << 12;

/// Enumeration cap from the environment, falling back to the default.
pub fn space_cap() -> usize {
    std::env::var(MAX_SPACE_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(DEFAULT_MAX_SPACE)
}

/// Number of points in `points^n`, saturating into `u128`.
pub fn space_size(points: usize, n: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..n {
        acc = acc.saturating_mul(points as u128);
    }
    acc
}

/// Lexicographic iterator over `points^n`; the last coordinate varies fastest.
#[derive(Debug, Clone)]
pub struct ProductSpace<S> {
    points: Vec<S>,
    idx: Vec<usize>,
    done: bool,
}

impl<S: Copy> ProductSpace<S> {
    pub fn new(points: &[S], n: usize, cap: usize) -> Result<Self> {
        let states = space_size(points.len(), n);
        if states > cap as u128 {
            return Err(Error::SpaceTooLarge { states, cap });
        }
        Ok(Self {
            points: points.to_vec(),
            idx: vec![0; n],
            done: points.is_empty() || n == 0,
        })
    }

    fn advance(&mut self) {
        let m = self.points.len();
        for d in (0..self.idx.len()).rev() {
            self.idx[d] += 1;
            if self.idx[d] < m {
                return;
            }
            self.idx[d] = 0;
        }
        self.done = true;
    }
}

impl<S: Copy> Iterator for ProductSpace<S> {
    type Item = Vec<S>;

    fn next(&mut self) -> Option<Vec<S>> {
        if self.done {
            return None;
        }
        let v = self.idx.iter().map(|&i| self.points[i]).collect();
        self.advance();
        Some(v)
    }
}

/// Enumerate `points^n` in lexicographic order under the given cap.
pub fn enumerate<S: Copy>(points: &[S], n: usize, cap: usize) -> Result<ProductSpace<S>> {
    ProductSpace::new(points, n, cap)
}
