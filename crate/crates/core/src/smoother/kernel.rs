use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Compactly supported smoothing kernels on `[-1, 1]`, each integrating to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Uniform,
    Triangular,
    Biweight,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Epanechnikov,
        Kernel::Uniform,
        Kernel::Triangular,
        Kernel::Biweight,
    ];

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if !(a <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Biweight => {
                let t = 1.0 - u * u;
                0.9375 * t * t
            }
        }
    }

    /// `(σ_K², R_K) = (∫ u² K, ∫ K²)`, in closed form.
    pub fn moments(self) -> KernelMoments {
        let (sigma2, roughness) = match self {
            Kernel::Epanechnikov => (1.0 / 5.0, 3.0 / 5.0),
            Kernel::Uniform => (1.0 / 3.0, 1.0 / 2.0),
            Kernel::Triangular => (1.0 / 6.0, 2.0 / 3.0),
            Kernel::Biweight => (1.0 / 7.0, 5.0 / 7.0),
        };
        KernelMoments { sigma2, roughness }
    }
}

/// Second moment and roughness of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub sigma2: f64,
    pub roughness: f64,
}

pub fn kernel_eval(kernel: Kernel, u: f64) -> f64 {
    kernel.eval(u)
}

pub fn kernel_moments(kernel: Kernel) -> KernelMoments {
    kernel.moments()
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Biweight => "biweight",
        };
        f.write_str(s)
    }
}

impl FromStr for Kernel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "uniform" | "box" => Ok(Kernel::Uniform),
            "triangular" | "triangle" => Ok(Kernel::Triangular),
            "biweight" | "quartic" => Ok(Kernel::Biweight),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}
