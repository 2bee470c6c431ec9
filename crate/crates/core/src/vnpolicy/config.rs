use serde::{Deserialize, Serialize};

use super::PolicyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    /// Defaults to four times `token_dim` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedforward_dim: Option<usize>,
}

/// Pivot for the scale and yaw parts of augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePivot {
    #[default]
    Origin,
    /// Mean of the sample's input object points.
    Centroid,
}

fn yes() -> bool {
    true
}

/// Hyperparameters of the policy and its training run. The JSON form uses
/// these field names verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct PolicyConfig {
    pub T_o: usize,
    pub T_p: usize,
    pub N: usize,
    pub vn_channels: Vec<usize>,
    pub token_dim: usize,
    pub transformer: TransformerConfig,
    pub head_hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Apply random similarity transforms and fingertip noise while training.
    #[serde(default = "yes")]
    pub augment: bool,
    #[serde(default)]
    pub scale_pivot: ScalePivot,
    /// Predict offsets from the last observed fingertips instead of
    /// absolute positions.
    #[serde(default = "yes")]
    pub residual_head: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            T_o: 10,
            T_p: 30,
            N: 500,
            vn_channels: vec![16, 32],
            token_dim: 96,
            transformer: TransformerConfig {
                layers: 4,
                heads: 4,
                feedforward_dim: None,
            },
            head_hidden: vec![256, 256],
            epochs: 2000,
            batch_size: 64,
            learning_rate: 1e-4,
            seed: 0,
            augment: true,
            scale_pivot: ScalePivot::Origin,
            residual_head: true,
        }
    }
}

impl PolicyConfig {
    /// Desk-scale configuration: 32 object points and a small network.
    pub fn desk() -> Self {
        Self {
            N: 32,
            vn_channels: vec![8, 16],
            token_dim: 32,
            transformer: TransformerConfig {
                layers: 2,
                heads: 4,
                feedforward_dim: Some(64),
            },
            head_hidden: vec![64, 64],
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn feedforward_dim(&self) -> usize {
        self.transformer.feedforward_dim.unwrap_or(4 * self.token_dim)
    }

    /// Same configuration with `feedforward_dim` spelled out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.transformer.feedforward_dim = Some(self.feedforward_dim());
        c
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.to_string()));
        if self.T_o < 1 || self.T_p < 1 {
            return bad("T_o and T_p must be at least 1");
        }
        if self.N < 1 {
            return bad("N must be at least 1");
        }
        if self.vn_channels.is_empty() || self.vn_channels.contains(&0) {
            return bad("vn_channels must be a non-empty list of positive widths");
        }
        if self.token_dim == 0 || self.transformer.heads == 0 || self.token_dim % self.transformer.heads != 0 {
            return bad("token_dim must be a positive multiple of heads");
        }
        if self.feedforward_dim() == 0 || self.head_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_keys_are_verbatim_and_strict() {
        let text = serde_json::to_string(&PolicyConfig::desk()).unwrap();
        for key in ["\"T_o\"", "\"T_p\"", "\"N\"", "\"vn_channels\"", "\"feedforward_dim\"", "\"head_hidden\""] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(PolicyConfig::from_json(&text).unwrap(), PolicyConfig::desk());
        let extra = text.replacen('{', "{\"dropout\":0.1,", 1);
        assert!(PolicyConfig::from_json(&extra).is_err());
    }

    #[test]
    fn heads_must_divide_token_dim() {
        let mut c = PolicyConfig::desk();
        c.transformer.heads = 3;
        assert!(c.validate().is_err());
        assert_eq!(PolicyConfig::default().feedforward_dim(), 384);
    }
}
