use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Point or offset in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("transform matrix needs 16 entries, got {0}")]
    WrongLength(usize),
    #[error("transform matrix has non-finite entries")]
    NonFinite,
    #[error("transform matrix bottom row must be (0, 0, 0, 1)")]
    NotAffine,
}

/// Host-supplied 4x4 homogeneous transform, row-major, translations in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HostTransform {
    m: [f64; 16],
}

impl HostTransform {
    pub const IDENTITY: HostTransform =
        HostTransform { m: [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0] };

    pub fn new(m: [f64; 16]) -> Result<Self, TransformError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(TransformError::NotAffine);
        }
        Ok(HostTransform { m })
    }

    pub fn from_slice(m: &[f64]) -> Result<Self, TransformError> {
        let m: [f64; 16] = m.try_into().map_err(|_| TransformError::WrongLength(m.len()))?;
        Self::new(m)
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        let mut t = Self::IDENTITY;
        t.m[3] = x;
        t.m[7] = y;
        t.m[11] = z;
        t
    }

    pub fn matrix(&self) -> &[f64; 16] {
        &self.m
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        let m = &self.m;
        Vec3 {
            x: m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            y: m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            z: m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11],
        }
    }
}

impl Default for HostTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl TryFrom<Vec<f64>> for HostTransform {
    type Error = TransformError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_slice(&v)
    }
}

impl From<HostTransform> for Vec<f64> {
    fn from(t: HostTransform) -> Self {
        t.m.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_matrices() {
        let mut m = *HostTransform::IDENTITY.matrix();
        m[14] = 1.0;
        assert_eq!(HostTransform::new(m), Err(TransformError::NotAffine));
        m[14] = 0.0;
        m[0] = f64::NAN;
        assert_eq!(HostTransform::new(m), Err(TransformError::NonFinite));
        assert_eq!(HostTransform::from_slice(&[1.0; 3]), Err(TransformError::WrongLength(3)));
    }

    #[test]
    fn translation_shifts_points() {
        let t = HostTransform::translation(0.0, 0.0, 50.0);
        assert_eq!(t.apply(Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 53.0));
    }

    #[test]
    fn serde_as_flat_array() {
        let json = serde_json::to_string(&HostTransform::IDENTITY).unwrap();
        let back: HostTransform = serde_json::from_str(&json).unwrap();
        assert_eq!(back, HostTransform::IDENTITY);
        assert!(serde_json::from_str::<HostTransform>("[1,2,3]").is_err());
    }
}
