use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    SquaredExponential,
    #[default]
    Matern52,
}

impl KernelKind {
    pub fn eval(self, dt: f64, length_scale: f64, signal_std: f64) -> f64 {
        let var = signal_std * signal_std;
        let d = dt.abs() / length_scale;
        match self {
            KernelKind::SquaredExponential => var * (-0.5 * d * d).exp(),
            KernelKind::Matern52 => {
                let s = 5f64.sqrt() * d;
                var * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}
