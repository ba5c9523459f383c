use serde::{Deserialize, Serialize};

/// Layer nonlinearity. `SoftmaxOutput` marks the final layer: its
/// pre-activations feed the softmax cross-entropy loss directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    SoftmaxOutput,
}

impl Activation {
    /// Elementwise activation value.
    pub fn apply(self, h: f64) -> f64 {
        match self {
            Activation::Relu => h.max(0.0),
            Activation::Tanh => h.tanh(),
            // identity: the loss consumes raw logits
            Activation::SoftmaxOutput => h,
        }
    }

    /// Elementwise derivative at pre-activation `h` (relu'(0) := 0).
    pub fn derivative(self, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = h.tanh();
                1.0 - t * t
            }
            Activation::SoftmaxOutput => 1.0,
        }
    }

    /// Variance of the Kaiming-style initializer for a fan-in of `in_dim`.
    pub fn init_variance(self, in_dim: usize) -> f64 {
        match self {
            Activation::Relu => 2.0 / in_dim as f64,
            Activation::Tanh | Activation::SoftmaxOutput => 1.0 / in_dim as f64,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::SoftmaxOutput => "softmax_output",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "softmax_output" => Ok(Activation::SoftmaxOutput),
            other => Err(crate::Error::InvalidSpec(format!("unknown activation {other:?}"))),
        }
    }
}
