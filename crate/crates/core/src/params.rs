//! Closed-loop parameters and the interaction topology.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PlatoonError, Result};

/// All scalar parameters of the closed loop.
///
/// `asym_x` and `asym_v` weight the rear neighbor; the front neighbor gets
/// `1 - asym`. A value of 0.5 is symmetric coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatoonParams {
    #[serde(rename = "N")]
    pub n_followers: usize,
    #[serde(rename = "a")]
    pub friction: f64,
    #[serde(rename = "gx")]
    pub gain_x: f64,
    #[serde(rename = "gv")]
    pub gain_v: f64,
    #[serde(rename = "rho_x")]
    pub asym_x: f64,
    #[serde(rename = "rho_v")]
    pub asym_v: f64,
}

impl PlatoonParams {
    pub fn new(
        n_followers: usize,
        friction: f64,
        gain_x: f64,
        gain_v: f64,
        asym_x: f64,
        asym_v: f64,
    ) -> Result<Self> {
        let p = Self {
            n_followers,
            friction,
            gain_x,
            gain_v,
            asym_x,
            asym_v,
        };
        p.validate()?;
        Ok(p)
    }

    /// The tuned design: a = 2, g_x = 6.2, g_v = 10, symmetric position
    /// coupling and rho_v = 0.4.
    pub fn tuned(n_followers: usize) -> Self {
        Self {
            n_followers,
            friction: 2.0,
            gain_x: 6.2,
            gain_v: 10.0,
            asym_x: 0.5,
            asym_v: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_followers < 1 {
            return Err(PlatoonError::NoFollowers);
        }
        check_asym("rho_x", self.asym_x)?;
        check_asym("rho_v", self.asym_v)?;
        for (name, value) in [
            ("a", self.friction),
            ("gx", self.gain_x),
            ("gv", self.gain_v),
        ] {
            if !value.is_finite() {
                return Err(PlatoonError::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
        }
        Ok(())
    }

    pub fn beta_x(&self) -> f64 {
        1.0 - 2.0 * self.asym_x
    }

    pub fn beta_v(&self) -> f64 {
        1.0 - 2.0 * self.asym_v
    }

    /// Number of vehicles including the leader.
    pub fn n_vehicles(&self) -> usize {
        self.n_followers + 1
    }

    pub fn with_n(self, n_followers: usize) -> Self {
        Self {
            n_followers,
            ..self
        }
    }

    pub fn with_friction(self, friction: f64) -> Self {
        Self { friction, ..self }
    }

    pub fn with_asym(self, asym_x: f64, asym_v: f64) -> Self {
        Self {
            asym_x,
            asym_v,
            ..self
        }
    }
}

pub(crate) fn check_asym(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(PlatoonError::AsymmetryOutOfRange { name, value });
    }
    Ok(())
}

/// Converts an asymmetry beta = 1 - 2 rho back to rho.
pub fn asym_from_beta(beta: f64) -> f64 {
    (1.0 - beta) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Leader driven independently, last vehicle has no follower.
    Path,
    /// Vehicle N also couples to the leader; both Laplacians are circulant.
    Circular,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Path => f.write_str("path"),
            Topology::Circular => f.write_str("circular"),
        }
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "path" => Ok(Topology::Path),
            "circular" | "circle" | "ring" => Ok(Topology::Circular),
            other => Err(format!(
                "unknown topology '{other}' (expected path or circular)"
            )),
        }
    }
}
