//! Block-sparse Jacobian over the interleaved unknowns `(P_0, Sw_0, P_1, Sw_1, ...)`
//! and a banded LU factorisation with partial pivoting for the Newton update.

use crate::error::{Error, Result};
use crate::model::GridSpec;

/// Jacobian of `(r_o, r_w)` with respect to `(P, Sw)`, one 2x2 block per
/// stencil connection. Row `2m + eq` holds equation `eq` (0 oil, 1 water) of
/// cell `m`; column `2c + var` holds unknown `var` (0 pressure, 1 saturation) of cell `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockJacobian {
    nx: usize,
    stencil_ptr: Vec<usize>,
    stencil: Vec<usize>,
    values: Vec<f64>,
}

impl BlockJacobian {
    /// Zero matrix with the 5-point sparsity pattern of `grid`.
    pub fn five_point(grid: &GridSpec) -> Self {
        let n = grid.n_cells();
        let mut stencil_ptr = Vec::with_capacity(n + 1);
        let mut stencil = Vec::with_capacity(5 * n);
        stencil_ptr.push(0);
        for m in 0..n {
            let mut cells: Vec<usize> = std::iter::once(m).chain(grid.neighbors(m)).collect();
            cells.sort_unstable();
            stencil.extend(cells);
            stencil_ptr.push(stencil.len());
        }
        let values = vec![0.0; 4 * stencil.len()];
        BlockJacobian { nx: grid.nx, stencil_ptr, stencil, values }
    }

    pub fn n_cells(&self) -> usize {
        self.stencil_ptr.len() - 1
    }

    pub fn dim(&self) -> usize {
        2 * self.n_cells()
    }

    /// Cells coupled to cell `m`, sorted.
    pub fn stencil(&self, m: usize) -> &[usize] {
        &self.stencil[self.stencil_ptr[m]..self.stencil_ptr[m + 1]]
    }

    #[inline]
    fn slot(&self, m: usize, eq: usize, c: usize, var: usize) -> Option<usize> {
        let start = self.stencil_ptr[m];
        let len = self.stencil_ptr[m + 1] - start;
        let pos = self.stencil[start..start + len].iter().position(|&x| x == c)?;
        Some(4 * start + eq * 2 * len + 2 * pos + var)
    }

    /// Adds `v` to `d r_{eq,m} / d x_{var,c}`.
    ///
    /// Panics if `c` is not in the stencil of `m`.
    #[inline]
    pub fn add(&mut self, m: usize, eq: usize, c: usize, var: usize, v: f64) {
        let k = self.slot(m, eq, c, var).expect("entry outside the 5-point stencil");
        self.values[k] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.slot(row / 2, row % 2, col / 2, col % 2).map_or(0.0, |k| self.values[k])
    }

    /// Nonzero pattern entries of `row` as `(col, value)`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (m, eq) = (row / 2, row % 2);
        let start = self.stencil_ptr[m];
        let len = self.stencil_ptr[m + 1] - start;
        let base = 4 * start + eq * 2 * len;
        (0..2 * len).map(move |k| (2 * self.stencil[start + k / 2] + k % 2, self.values[base + k]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `J^T y`.
    pub fn transpose_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for r in 0..self.dim() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }

    /// Half bandwidth of the interleaved ordering.
    pub fn bandwidth(&self) -> usize {
        2 * self.nx + 1
    }
}

/// LU factors of a banded matrix, LAPACK `gbtrf` layout.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        c * self.ldab + self.kl + self.ku + r - c
    }

    /// Factorises `jac` in place of a band copy with partial pivoting.
    pub fn factor(jac: &BlockJacobian) -> Result<Self> {
        let n = jac.dim();
        let kl = jac.bandwidth().min(n.saturating_sub(1));
        let ku = kl;
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, ku, ldab, ab: vec![0.0; ldab * n], ipiv: vec![0; n] };
        for r in 0..n {
            for (c, v) in jac.row(r) {
                let k = lu.at(r, c);
                lu.ab[k] += v;
            }
        }
        lu.factor_in_place()?;
        Ok(lu)
    }

    fn factor_in_place(&mut self) -> Result<()> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = j;
            let mut best = self.ab[self.at(j, j)].abs();
            for r in j + 1..=j + km {
                let v = self.ab[self.at(r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            self.ipiv[j] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularJacobian { column: j });
            }
            ju = ju.max((j + self.ku + (p - j)).min(n - 1));
            if p != j {
                for c in j..=ju {
                    let (a, b) = (self.at(j, c), self.at(p, c));
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.ab[self.at(j, j)];
            let col = j * self.ldab + kv;
            for r in 1..=km {
                self.ab[col + r] /= pivot;
            }
            for c in j + 1..=ju {
                let u = self.ab[self.at(j, c)];
                if u == 0.0 {
                    continue;
                }
                let dst = self.at(j + 1, c);
                for r in 0..km {
                    self.ab[dst + r] -= self.ab[col + 1 + r] * u;
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let col = j * self.ldab + kv;
                for r in 1..=km {
                    b[j + r] -= self.ab[col + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for r in lo..j {
                    b[r] -= self.ab[self.at(r, j)] * bj;
                }
            }
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `J x = b` to a relative residual below `tol`, refining iteratively
/// (at most three extra sweeps).
pub fn solve_linear(jac: &BlockJacobian, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let lu = BandedLu::factor(jac)?;
    let mut x = b.to_vec();
    lu.solve(&mut x);
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    for _ in 0..3 {
        let ax = jac.mul_vec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        if norm2(&r) <= tol * bnorm {
            break;
        }
        lu.solve(&mut r);
        x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for r in k + 1..n {
                let f = a[r][k] / a[k][k];
                for c in k..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|c| a[k][c] * x[c]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    fn pseudo_random(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 10_000) as f64 / 5_000.0 - 1.0
        }
    }

    #[test]
    fn pattern_rows_have_at_most_five_cells() {
        let grid = GridSpec::new(4, 3, 1.0, 1.0, 1.0).unwrap();
        let j = BlockJacobian::five_point(&grid);
        for m in 0..12 {
            let s = j.stencil(m);
            assert!(s.len() <= 5 && s.contains(&m));
            assert_eq!(j.row(2 * m).count(), 2 * s.len());
        }
    }

    #[test]
    fn banded_lu_matches_dense_elimination() {
        let grid = GridSpec::new(4, 3, 1.0, 1.0, 1.0).unwrap();
        let mut j = BlockJacobian::five_point(&grid);
        let mut rnd = pseudo_random(7);
        for m in 0..12 {
            for &c in j.stencil(m).to_vec().iter() {
                for eq in 0..2 {
                    for var in 0..2 {
                        // weak diagonal so pivoting is exercised
                        let v = if c == m && eq == var { 0.01 * rnd() } else { rnd() };
                        j.add(m, eq, c, var, v);
                    }
                }
            }
        }
        let b: Vec<f64> = (0..24).map(|k| (k as f64).sin()).collect();
        let x = solve_linear(&j, &b, 1e-12).unwrap();
        let xd = dense_solve(j.to_dense(), b.clone());
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
        let y: Vec<f64> = (0..24).map(|k| (k as f64 * 0.3).cos()).collect();
        let jt = j.transpose_mul_vec(&y);
        let d = j.to_dense();
        for c in 0..24 {
            let s: f64 = (0..24).map(|r| d[r][c] * y[r]).sum();
            assert!((s - jt[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let grid = GridSpec::new(2, 1, 1.0, 1.0, 1.0).unwrap();
        let j = BlockJacobian::five_point(&grid);
        assert!(matches!(BandedLu::factor(&j), Err(Error::SingularJacobian { .. })));
    }
}
