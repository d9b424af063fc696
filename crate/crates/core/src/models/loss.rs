//! Training objectives of the style models.

use super::style::{StyleLogits, StyleTargets};
use crate::tensor::{Tape, Var};
use crate::{Error, Result};

/// Cross-entropy summed over the four heads, with text heads skipped for
/// elements without text, divided by the number of contributing terms.
pub fn mle_loss(tape: &Tape, logits: &StyleLogits, targets: &StyleTargets) -> Result<Var> {
    let count = targets.count();
    if count == 0 {
        return Err(Error::Contract("no contributing loss terms".into()));
    }
    let parts = [
        tape.cross_entropy(logits.text_rgb, &targets.text_rgb)?,
        tape.cross_entropy(logits.text_alpha, &targets.text_alpha)?,
        tape.cross_entropy(logits.bg_rgb, &targets.bg_rgb)?,
        tape.cross_entropy(logits.bg_alpha, &targets.bg_alpha)?,
    ];
    let mut total = parts[0];
    for &p in &parts[1..] {
        total = tape.add(total, p)?;
    }
    Ok(tape.scale(total, 1.0 / count as f64))
}

/// KL divergence of `N(μ, diag σ²)` from `N(0, I)`, summed over latent
/// dimensions and averaged over elements (rows).
pub fn latent_kl(tape: &Tape, mu: Var, logvar: Var) -> Result<Var> {
    let rows = tape.shape(mu).first().copied().unwrap_or(0);
    if rows == 0 {
        return Err(Error::shape("latent_kl", "no latent rows"));
    }
    let kl = tape.gaussian_kl(mu, logvar)?;
    Ok(tape.scale(kl, 1.0 / rows as f64))
}

/// Terms of the CVAE objective.
#[derive(Clone, Copy, Debug)]
pub struct CvaeLoss {
    pub total: Var,
    pub mle: Var,
    pub kl: Var,
}

/// `mle_loss + λ · latent_kl`.
pub fn cvae_loss(
    tape: &Tape,
    logits: &StyleLogits,
    targets: &StyleTargets,
    mu: Var,
    logvar: Var,
    kl_weight: f64,
) -> Result<CvaeLoss> {
    let mle = mle_loss(tape, logits, targets)?;
    let kl = latent_kl(tape, mu, logvar)?;
    let total = tape.add(mle, tape.scale(kl, kl_weight))?;
    Ok(CvaeLoss { total, mle, kl })
}
