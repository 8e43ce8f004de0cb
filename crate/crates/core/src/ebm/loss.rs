use crate::error::{Error, Result};

fn check_finite(energies: &[f64]) -> Result<()> {
    if let Some(e) = energies.iter().find(|e| !e.is_finite()) {
        return Err(Error::Numeric(format!("non-finite energy {e}")));
    }
    Ok(())
}

/// Contrastive loss `-log softmax(-e)[0]` for one positive `e0` against
/// negatives, computed with max subtraction.
pub fn infonce_loss(e0: f64, negatives: &[f64]) -> Result<f64> {
    let mut all = Vec::with_capacity(negatives.len() + 1);
    all.push(e0);
    all.extend_from_slice(negatives);
    infonce_row(&all, None)
}

/// Loss for a row whose first entry is the positive. If `grad` is given it
/// receives `dL/de_j`, scaled by `scale`.
pub(crate) fn infonce_row(energies: &[f64], grad: Option<(&mut [f64], f64)>) -> Result<f64> {
    check_finite(energies)?;
    let m = energies.iter().fold(f64::NEG_INFINITY, |acc, &e| acc.max(-e));
    let sum: f64 = energies.iter().map(|&e| (-e - m).exp()).sum();
    let loss = (energies[0] + m + sum.ln()).max(0.0);
    if let Some((g, scale)) = grad {
        for (j, (gj, &e)) in g.iter_mut().zip(energies).enumerate() {
            let p = (-e - m).exp() / sum;
            let target = if j == 0 { 1.0 } else { 0.0 };
            *gj = (target - p) * scale;
        }
    }
    Ok(loss)
}

/// `softmax(-e)` with max subtraction.
pub fn softmax_neg(energies: &[f64]) -> Vec<f64> {
    let m = energies.iter().fold(f64::NEG_INFINITY, |acc, &e| acc.max(-e));
    let w: Vec<f64> = energies.iter().map(|&e| (-e - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}
