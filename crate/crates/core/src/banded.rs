//! Complex band matrices and their LU factorization with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: entry `(r, c)` lives at
//! `c * ldab + kl + ku + r - c`, with `kl` extra rows above the band to hold
//! the fill produced by row interchanges.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, ab: vec![ZERO; ldab * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn pos(&self, r: usize, c: usize) -> usize {
        c * self.ldab + self.kl + self.ku + r - c
    }

    fn in_band(&self, r: usize, c: usize) -> bool {
        r < self.n && c < self.n && r + self.ku >= c && c + self.kl >= r
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        if self.in_band(r, c) {
            self.ab[self.pos(r, c)]
        } else {
            ZERO
        }
    }

    /// Adds `v` to entry `(r, c)`. Panics outside the band.
    pub fn add(&mut self, r: usize, c: usize, v: C64) {
        assert!(self.in_band(r, c), "entry ({r}, {c}) outside band");
        let p = self.pos(r, c);
        self.ab[p] += v;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        for c in 0..self.n {
            let xc = x[c];
            if xc == ZERO {
                continue;
            }
            let lo = c.saturating_sub(self.ku);
            let hi = (c + self.kl).min(self.n - 1);
            for r in lo..=hi {
                y[r] += self.ab[self.pos(r, c)] * xc;
            }
        }
        y
    }

    /// Relative residual `‖A x − b‖ / ‖b‖` (absolute when `b = 0`).
    pub fn relative_residual(&self, x: &[C64], b: &[C64]) -> f64 {
        let ax = self.matvec(x);
        let num: f64 = ax.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }

    pub fn factor(&self) -> Result<BandedLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ab = self.ab.clone();
        let mut piv = vec![0usize; n];
        let pos = |r: usize, c: usize| c * ldab + kv + r - c;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = j;
            let mut best = ab[pos(j, j)].norm();
            for r in j + 1..=j + km {
                let v = ab[pos(r, j)].norm();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            piv[j] = jp;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { column: j });
            }
            ju = ju.max((jp + ku).min(n - 1));
            if jp != j {
                for c in j..=ju {
                    ab.swap(pos(j, c), pos(jp, c));
                }
            }
            let inv = C64::new(1.0, 0.0) / ab[pos(j, j)];
            for r in j + 1..=j + km {
                let p = pos(r, j);
                ab[p] *= inv;
            }
            for c in j + 1..=ju {
                let ujc = ab[pos(j, c)];
                if ujc == ZERO {
                    continue;
                }
                for r in j + 1..=j + km {
                    let l = ab[pos(r, j)];
                    let p = pos(r, c);
                    ab[p] -= l * ujc;
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ldab, ab, piv })
    }
}

/// LU factors of a [`BandedMatrix`]; immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl, ldab) = (self.n, self.kl, self.ldab);
        let kv = kl + self.ku;
        let pos = |r: usize, c: usize| c * ldab + kv + r - c;
        for j in 0..n {
            let jp = self.piv[j];
            if jp != j {
                b.swap(j, jp);
            }
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            let km = kl.min(n - 1 - j);
            for r in j + 1..=j + km {
                b[r] -= self.ab[pos(r, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[pos(j, j)];
            let bj = b[j];
            if bj == ZERO {
                continue;
            }
            let lo = j.saturating_sub(kv);
            for r in lo..j {
                b[r] -= self.ab[pos(r, j)] * bj;
            }
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
