//! Physical constants and unit choices.

use std::f64::consts::PI;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("constant `{name}` must be positive and finite, got {value}")]
pub struct ConstantError {
    pub name: &'static str,
    pub value: f64,
}

/// `ħ`, `m`, `k`, `c` and the uncertainty constant `α` that fixes the noise
/// correlation length `λ_c = α·ħ/√(2mkΘ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
    pub boltzmann: f64,
    pub light_speed: f64,
    pub alpha: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            boltzmann: 1.0,
            light_speed: 1.0,
            alpha: PI,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<(), ConstantError> {
        for (name, value) in [
            ("hbar", self.hbar),
            ("mass", self.mass),
            ("boltzmann", self.boltzmann),
            ("light_speed", self.light_speed),
            ("alpha", self.alpha),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConstantError { name, value });
            }
        }
        Ok(())
    }

    /// `ħ²/2m`.
    pub fn kinetic_prefactor(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_simulation_units() {
        let c = PhysicalConstants::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.kinetic_prefactor(), 0.5);
        assert_eq!(c.alpha, PI);
    }

    #[test]
    fn non_positive_constants_are_rejected() {
        let c = PhysicalConstants {
            mass: 0.0,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().name, "mass");
        let c = PhysicalConstants {
            light_speed: f64::INFINITY,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().name, "light_speed");
    }
}
