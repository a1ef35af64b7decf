//! Mitigations applied inside a client's local training loop.

mod dp;
mod kl;
mod lora;

use serde::{Deserialize, Serialize};

pub use dp::{add_dp_noise, clip_gradient, DpConfig};
pub use kl::{kl_divergence, kl_regularized_loss, KlConfig, KlReference, KlRegularizer};
pub use lora::{
    lora_effective_weight, lora_loss_and_grad, lora_train_step, LoraAdapters, LoraConfig, Matrix,
};

/// Any combination of defenses; all off by default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    #[serde(default)]
    pub dp: Option<DpConfig>,
    #[serde(default)]
    pub kl: Option<KlConfig>,
    #[serde(default)]
    pub lora: Option<LoraConfig>,
}

impl DefenseConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if let Some(dp) = &self.dp {
            dp.validate()?;
        }
        if let Some(kl) = &self.kl {
            kl.validate()?;
        }
        if let Some(lora) = &self.lora {
            lora.validate()?;
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        self.dp.is_none() && self.kl.is_none() && self.lora.is_none()
    }

    /// Short label for reports, e.g. `dp(eta=0.8,C=1)+lora(r=4,alpha=8)`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(dp) = &self.dp {
            parts.push(format!(
                "dp(eta={},C={},delta={})",
                dp.noise_multiplier, dp.max_grad_norm, dp.delta
            ));
        }
        if let Some(kl) = &self.kl {
            parts.push(format!("kl(mu={},ref={})", kl.mu, kl.reference.as_str()));
        }
        if let Some(l) = &self.lora {
            parts.push(format!("lora(r={},alpha={},dropout={})", l.rank, l.alpha, l.dropout));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}
