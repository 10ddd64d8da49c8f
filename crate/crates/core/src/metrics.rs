//! Plug-in information measures and error rates over symbol indices.

use crate::constellation::ShapingDistribution;
use crate::{Error, Result};

fn xlog2x_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).log2()
    }
}

fn check_pair(tx: &[usize], rx: &[usize]) -> Result<()> {
    if tx.len() != rx.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} transmitted vs {} received symbols",
            tx.len(),
            rx.len()
        )));
    }
    if tx.is_empty() {
        return Err(Error::ShapeMismatch("no symbols".into()));
    }
    Ok(())
}

/// Joint histogram `counts[s][s_hat]`.
pub fn joint_counts(tx: &[usize], rx: &[usize], m: usize) -> Result<Vec<Vec<u64>>> {
    check_pair(tx, rx)?;
    let mut joint = vec![vec![0u64; m]; m];
    for (&a, &b) in tx.iter().zip(rx) {
        for k in [a, b] {
            if k >= m {
                return Err(Error::IndexOutOfRange { index: k, order: m });
            }
        }
        joint[a][b] += 1;
    }
    Ok(joint)
}

/// Mutual information (bits) of a joint probability table.
pub fn mutual_information_table(joint: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> =
        (0..joint.first().map_or(0, Vec::len)).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            mi += xlog2x_ratio(p, rows[i] * cols[j]);
        }
    }
    mi.max(0.0)
}

/// Plug-in (maximum-likelihood) estimate of `I(S; S_hat)` in bits from paired samples.
pub fn mutual_information(tx: &[usize], rx: &[usize], m: usize) -> Result<f64> {
    let joint = joint_counts(tx, rx, m)?;
    let n = tx.len() as f64;
    let probs: Vec<Vec<f64>> = joint.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect();
    Ok(mutual_information_table(&probs))
}

/// Fraction of positions where the indices differ.
pub fn symbol_error_rate(tx: &[usize], rx: &[usize]) -> Result<f64> {
    check_pair(tx, rx)?;
    let errors = tx.iter().zip(rx).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / tx.len() as f64)
}

/// Shannon entropy in bits.
pub fn entropy_bits(dist: &ShapingDistribution) -> f64 {
    -dist.probs().iter().map(|&p| if p == 0.0 { 0.0 } else { p * p.log2() }).sum::<f64>()
}

/// Plug-in entropy of a sample of indices.
pub fn empirical_entropy(indices: &[usize], m: usize) -> Result<f64> {
    let mut counts = vec![0u64; m];
    for &k in indices {
        if k >= m {
            return Err(Error::IndexOutOfRange { index: k, order: m });
        }
        counts[k] += 1;
    }
    Ok(entropy_bits(&ShapingDistribution::from_counts(&counts)?))
}

/// Total-variation distance `1/2 sum |p - q|`.
pub fn tv_distance(a: &ShapingDistribution, b: &ShapingDistribution) -> Result<f64> {
    if a.order() != b.order() {
        return Err(Error::ShapeMismatch(format!(
            "distributions over {} and {} symbols",
            a.order(),
            b.order()
        )));
    }
    Ok(0.5 * a.probs().iter().zip(b.probs()).map(|(p, q)| (p - q).abs()).sum::<f64>())
}
