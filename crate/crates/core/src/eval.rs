//! Entropy, mutual information and normalized mutual information between
//! two partitions of the same objects. Natural logarithms throughout.

use crate::assignment::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    /// `counts[i][j] = |{t : a[t] = i ∧ b[t] = j}|`, shape `k_a × k_b`.
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

impl Contingency {
    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let rows = self.row_sums();
        let cols = self.col_sums();
        let mut terms = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let c = c as f64;
                // p(i,j) ln(p(i,j) / p(i)p(j)) = c/n · ln(c·n / (r_i·c_j))
                terms.push(c / n * (c * n / (rows[i] as f64 * cols[j] as f64)).ln());
            }
        }
        // Summing in sorted order makes the result independent of which
        // partition indexes the rows, so MI(a, b) == MI(b, a) bit for bit.
        terms.sort_by(f64::total_cmp);
        terms.iter().sum::<f64>().max(0.0)
    }
}

fn check_lengths(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

pub fn contingency(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<Contingency> {
    check_lengths(a, b)?;
    let mut counts = vec![vec![0usize; b.k()]; a.k()];
    for (&i, &j) in a.labels().iter().zip(b.labels()) {
        counts[i][j] += 1;
    }
    Ok(Contingency { counts, n: a.len() })
}

impl Contingency {
    /// Every occupied row and column has a single non-zero cell, i.e. the
    /// partitions agree up to relabeling.
    pub fn is_relabeling(&self) -> bool {
        let single = |cells: &mut dyn Iterator<Item = usize>| cells.filter(|&c| c > 0).count() <= 1;
        let cols = self.counts.first().map_or(0, Vec::len);
        self.counts.iter().all(|r| single(&mut r.iter().copied()))
            && (0..cols).all(|j| single(&mut self.counts.iter().map(|r| r[j])))
    }
}

fn entropy_of_sizes(sizes: &[usize], n: usize) -> f64 {
    let n = n as f64;
    -sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// `−Σ p_i ln p_i` over cluster frequencies.
pub fn entropy(a: &ClusterAssignment) -> f64 {
    entropy_of_sizes(&a.sizes(), a.len())
}

pub fn mutual_information(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    Ok(contingency(a, b)?.mutual_information())
}

/// `2 I(a, b) / (H(a) + H(b))`; exactly 1 when the partitions agree up to
/// relabeling (including both trivial).
pub fn nmi(a: &ClusterAssignment, b: &ClusterAssignment) -> Result<f64> {
    let table = contingency(a, b)?;
    let h = entropy_of_sizes(&table.row_sums(), table.n) + entropy_of_sizes(&table.col_sums(), table.n);
    if h <= 0.0 || table.is_relabeling() {
        return Ok(1.0);
    }
    Ok((2.0 * table.mutual_information() / h).clamp(0.0, 1.0))
}
