use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice;

/// The two compact surfaces supported: the flat torus `R²/Z²` and the unit
/// sphere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Torus,
    Sphere,
}

impl Manifold {
    /// Total area: 1 for the unit torus, 4π for the sphere.
    pub fn area(self) -> f64 {
        match self {
            Manifold::Torus => 1.0,
            Manifold::Sphere => 4.0 * PI,
        }
    }

    /// Euler characteristic of the whole surface.
    pub fn euler_characteristic(self) -> i64 {
        match self {
            Manifold::Torus => 0,
            Manifold::Sphere => 2,
        }
    }

    /// Laplace eigenvalue `λ_n`: `4π²n` on the torus, `n(n+1)` on the sphere.
    pub fn eigenvalue(self, n: u64) -> f64 {
        match self {
            Manifold::Torus => 4.0 * PI * PI * n as f64,
            Manifold::Sphere => (n * (n + 1)) as f64,
        }
    }

    /// Checks that `n` indexes an eigenvalue this crate can work with.
    pub fn validate_energy(self, n: u64) -> Result<()> {
        match self {
            Manifold::Torus if n == 0 => Err(Error::Domain("torus energy index must be at least 1".into())),
            Manifold::Torus if !lattice::is_representable(n) => Err(Error::NotRepresentable(n)),
            Manifold::Sphere if n < 2 => Err(Error::Domain(format!("sphere degree must be at least 2, got {n}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Manifold::Torus => "torus",
            Manifold::Sphere => "sphere",
        })
    }
}

impl FromStr for Manifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus" | "t2" => Ok(Manifold::Torus),
            "sphere" | "s2" => Ok(Manifold::Sphere),
            other => Err(Error::Domain(format!("unknown manifold '{other}'"))),
        }
    }
}
