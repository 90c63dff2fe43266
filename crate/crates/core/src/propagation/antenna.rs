use crate::geometry::Vec3;

/// Transmit antenna power pattern, normalized to unit mean gain over the
/// sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AntennaPattern {
    Isotropic,
    /// `g(psi) = 2(p+1) cos(psi)^p` on the front hemisphere, zero behind.
    Directional {
        exponent: f64,
    },
}

impl AntennaPattern {
    pub fn peak_gain(&self) -> f64 {
        match *self {
            AntennaPattern::Isotropic => 1.0,
            AntennaPattern::Directional { exponent } => 2.0 * (exponent + 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            AntennaPattern::Isotropic => true,
            AntennaPattern::Directional { exponent } => exponent.is_finite() && exponent >= 0.0,
        }
    }

    /// Linear gain towards `direction`; both vectors are unit length.
    #[inline]
    pub fn gain(&self, boresight: Vec3, direction: Vec3) -> f64 {
        match *self {
            AntennaPattern::Isotropic => 1.0,
            AntennaPattern::Directional { exponent } => {
                let c = boresight.dot(direction).clamp(-1.0, 1.0);
                if c <= 0.0 {
                    0.0
                } else {
                    self.peak_gain() * c.powf(exponent)
                }
            }
        }
    }
}

pub fn antenna_gain(pattern: &AntennaPattern, boresight: Vec3, direction: Vec3) -> f64 {
    pattern.gain(boresight, direction)
}
