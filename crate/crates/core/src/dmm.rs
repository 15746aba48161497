//! Closed-form RBF width from class geometry (dual min-max).
//!
//! Shrinking every class in feature space while pushing classes apart leads
//! to minimizing the weighted objective
//!
//! ```text
//! G(γ) = λ·γ·D²_max + (1-λ) / (γ·d²)
//! ```
//!
//! whose stationary point at the balanced weight λ = 1/2 gives
//! `γ = 1 / (D_max · d)` and equivalently `σ = sqrt(D_max · d / 2)`.
//! `d` is either the smallest inter-class distance or, by default, the
//! root-mean-square inter-class distance, which is robust to a single
//! mislabeled point collapsing the minimum.
//!
//! The objective and its stationary point are public so the derivation can
//! be checked numerically.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ClassGeometry;

/// Which inter-class distance enters the formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Smallest inter-class distance `d_min`.
    Min,
    /// Root-mean-square inter-class distance `d_av`.
    #[default]
    Avg,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Min => "min",
            Variant::Avg => "avg",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Variant::Min),
            "avg" | "av" | "average" => Ok(Variant::Avg),
            _ => Err(Error::invalid(format!("unknown gamma variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmmEstimate {
    pub gamma: f64,
    pub sigma: f64,
    pub variant: Variant,
    /// Largest class diameter used.
    pub d_max: f64,
    /// The inter-class distance used (`d_min` or `d_av`, per `variant`).
    pub d_used: f64,
}

pub fn estimate(geom: &ClassGeometry, variant: Variant) -> Result<DmmEstimate> {
    let d_max = geom.d_max;
    if !(d_max > 0.0) {
        return Err(Error::DegenerateGeometry(
            "largest class diameter is 0 (every class is a single point)".into(),
        ));
    }
    let d_used = match variant {
        Variant::Min => geom.d_min,
        Variant::Avg => geom.d_av,
    };
    if !(d_used > 0.0) {
        let hint = match variant {
            Variant::Min => "; classes touch, use the avg variant",
            Variant::Avg => "",
        };
        return Err(Error::DegenerateGeometry(format!("inter-class distance is 0{hint}")));
    }
    let product = d_max * d_used;
    Ok(DmmEstimate {
        gamma: 1.0 / product,
        sigma: (0.5 * product).sqrt(),
        variant,
        d_max,
        d_used,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

fn check_min_geometry(geom: &ClassGeometry) -> Result<()> {
    if !(geom.d_max > 0.0 && geom.d_min > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "D_max = {} and d_min = {} must both be positive",
            geom.d_max, geom.d_min
        )));
    }
    Ok(())
}

/// `G(γ) = λ·γ·D²_max + (1-λ)/(γ·d²_min)`.
pub fn weighted_objective(gamma: f64, lambda: f64, geom: &ClassGeometry) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    check_lambda(lambda)?;
    check_min_geometry(geom)?;
    let dmax2 = geom.d_max * geom.d_max;
    let dmin2 = geom.d_min * geom.d_min;
    Ok(lambda * gamma * dmax2 + (1.0 - lambda) / (gamma * dmin2))
}

/// Second derivative of [`weighted_objective`] in γ, `2(1-λ)/(d²_min·γ³)`.
pub fn objective_curvature(gamma: f64, lambda: f64, geom: &ClassGeometry) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    check_lambda(lambda)?;
    check_min_geometry(geom)?;
    Ok(2.0 * (1.0 - lambda) / (geom.d_min * geom.d_min * gamma.powi(3)))
}

/// Zero of dG/dγ: `sqrt((1-λ) / (λ·D²_max·d²_min))`.
pub fn stationary_gamma(lambda: f64, geom: &ClassGeometry) -> Result<f64> {
    check_lambda(lambda)?;
    check_min_geometry(geom)?;
    Ok(((1.0 - lambda) / lambda).sqrt() / (geom.d_max * geom.d_min))
}

/// The objective evaluated along its stationary curve,
/// `G(γ(λ)) = 2·sqrt(λ(1-λ))·D_max/d_min`.
pub fn stationary_objective(lambda: f64, geom: &ClassGeometry) -> Result<f64> {
    check_lambda(lambda)?;
    check_min_geometry(geom)?;
    Ok(2.0 * (lambda * (1.0 - lambda)).sqrt() * geom.d_max / geom.d_min)
}

/// The weight at which `G(γ(λ))` is stationary in λ.
pub const BALANCED_LAMBDA: f64 = 0.5;
