use super::stage::StageConfig;
use crate::error::{Error, Result};

/// Step decay: `base_lr * decay_factor ^ floor(epoch / decay_every)`.
pub fn lr_at(config: &StageConfig, epoch: usize) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Contract(format!(
            "epoch {epoch} outside stage `{}` with {} epochs",
            config.name, config.epochs
        )));
    }
    let decays = epoch / config.decay_every.max(1);
    Ok(config.base_lr * config.decay_factor.powi(decays as i32))
}
