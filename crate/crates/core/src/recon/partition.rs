//! Detector subsets closed under both mirrors and horizontal translation.

use crate::error::{Error, Result};

/// Disjoint subsets of the `M x N` detector. Subset `v * (rho_y / 2) + h`
/// holds rows `m < M/2` with `m % rho_z == v` plus their up-down mirrors, times
/// columns with `n % rho_y == h` plus their left-right mirrors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPartition {
    rows: usize,
    cols: usize,
    rho_y: usize,
    rho_z: usize,
    subsets: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

/// Outcome of [`SubsetPartition::check`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionReport {
    pub subsets: usize,
    pub sizes: Vec<usize>,
    pub disjoint: bool,
    pub covering: bool,
    pub lr_closed: bool,
    pub ud_closed: bool,
    pub translation_closed: bool,
    pub balanced: bool,
}

impl PartitionReport {
    pub fn all_pass(&self) -> bool {
        self.disjoint && self.covering && self.lr_closed && self.ud_closed && self.translation_closed && self.balanced
    }
}

pub fn build_partition(rows: usize, cols: usize, rho_y: usize, rho_z: usize) -> Result<SubsetPartition> {
    if rows == 0 || rows % 2 != 0 || cols == 0 || cols % 2 != 0 {
        return Err(Error::Config(format!("detector must have an even, positive size, got {rows}x{cols}")));
    }
    if rho_z == 0 || (rows / 2) % rho_z != 0 {
        return Err(Error::Config(format!("rho_z = {rho_z} must divide M/2 = {}", rows / 2)));
    }
    if rho_y == 0 || rho_y % 2 != 0 {
        return Err(Error::Config(format!("rho_y = {rho_y} must be even and positive")));
    }
    if cols % rho_y != 0 {
        return Err(Error::Config(format!("rho_y = {rho_y} must divide N = {cols}")));
    }
    let half_y = rho_y / 2;
    let count = rho_z * half_y;
    let row_class = |m: usize| {
        let top = if m < rows / 2 { m } else { rows - 1 - m };
        top % rho_z
    };
    let col_class = |n: usize| {
        let r = n % rho_y;
        if r < half_y {
            r
        } else {
            rho_y - 1 - r
        }
    };
    let mut subsets = vec![Vec::with_capacity(rows * cols / count); count];
    let mut owner = vec![0; rows * cols];
    for m in 0..rows {
        for n in 0..cols {
            let p = row_class(m) * half_y + col_class(n);
            subsets[p].push(m * cols + n);
            owner[m * cols + n] = p;
        }
    }
    Ok(SubsetPartition {
        rows,
        cols,
        rho_y,
        rho_z,
        subsets,
        owner,
    })
}

impl SubsetPartition {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn steps(&self) -> (usize, usize) {
        (self.rho_y, self.rho_z)
    }

    /// Row-major pixel indices of subset `p`, ascending.
    pub fn subset(&self, p: usize) -> &[usize] {
        &self.subsets[p]
    }

    pub fn subset_of(&self, m: usize, n: usize) -> usize {
        self.owner[m * self.cols + n]
    }

    /// Membership flags of subset `p` over the whole detector.
    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut out = vec![false; self.rows * self.cols];
        for &i in &self.subsets[p] {
            out[i] = true;
        }
        out
    }

    pub fn masks(&self) -> Vec<Vec<bool>> {
        (0..self.len()).map(|p| self.mask(p)).collect()
    }

    /// Exhaustively checks the partition properties.
    pub fn check(&self) -> PartitionReport {
        let (m_all, n_all) = (self.rows, self.cols);
        let mut seen = vec![0usize; m_all * n_all];
        for s in &self.subsets {
            for &i in s {
                seen[i] += 1;
            }
        }
        let disjoint = seen.iter().all(|&c| c <= 1);
        let covering = seen.iter().all(|&c| c >= 1);
        let mut lr = true;
        let mut ud = true;
        let mut tr = true;
        for m in 0..m_all {
            for n in 0..n_all {
                let p = self.subset_of(m, n);
                lr &= self.subset_of(m, n_all - 1 - n) == p;
                ud &= self.subset_of(m_all - 1 - m, n) == p;
                if n + self.rho_y < n_all {
                    tr &= self.subset_of(m, n + self.rho_y) == p;
                }
            }
        }
        let sizes: Vec<usize> = self.subsets.iter().map(Vec::len).collect();
        let balanced = sizes.iter().all(|&s| s == sizes[0]);
        PartitionReport {
            subsets: self.len(),
            sizes,
            disjoint,
            covering,
            lr_closed: lr,
            ud_closed: ud,
            translation_closed: tr,
            balanced,
        }
    }
}
