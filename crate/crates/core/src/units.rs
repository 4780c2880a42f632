//! Fixed-point quantities.
//!
//! Power is held in hundredths of a megawatt and weights in hundredths of a
//! unit, so every load sum and every utility is an exact integer. Utilities
//! therefore carry a resolution of `1e-4` (centi-weight x centi-MW).

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// Scale factor between a megawatt and the stored integer.
pub const MW_SCALE: i64 = 100;
/// Scale factor between a unit weight and the stored integer.
pub const WEIGHT_SCALE: i64 = 100;
/// Scale factor between one unit of utility and the stored integer.
pub const UTILITY_SCALE: i64 = MW_SCALE * WEIGHT_SCALE;

const RESOLUTION_SLACK: f64 = 1e-6;

fn to_fixed(value: f64, scale: i64, what: &'static str) -> Result<i64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NotFinite { what, value });
    }
    let scaled = value * scale as f64;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > RESOLUTION_SLACK * scale as f64 {
        return Err(ModelError::Resolution { what, value });
    }
    if rounded.abs() > (i64::MAX / 4) as f64 {
        return Err(ModelError::OutOfRange { what, value });
    }
    Ok(rounded as i64)
}

/// Power in megawatts, stored with 0.01 MW resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Megawatts(i64);

impl Megawatts {
    pub const ZERO: Megawatts = Megawatts(0);

    pub const fn from_centi(centi: i64) -> Self {
        Megawatts(centi)
    }

    pub const fn from_whole(mw: i64) -> Self {
        Megawatts(mw * MW_SCALE)
    }

    /// Converts a decimal MW figure, rejecting values finer than 0.01 MW.
    pub fn from_f64(mw: f64) -> Result<Self, ModelError> {
        to_fixed(mw, MW_SCALE, "power (MW)").map(Megawatts)
    }

    pub const fn centi(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / MW_SCALE as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for Megawatts {
    type Output = Megawatts;
    fn add(self, rhs: Self) -> Self {
        Megawatts(self.0 + rhs.0)
    }
}

impl AddAssign for Megawatts {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for Megawatts {
    type Output = Megawatts;
    fn sub(self, rhs: Self) -> Self {
        Megawatts(self.0 - rhs.0)
    }
}

impl SubAssign for Megawatts {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Neg for Megawatts {
    type Output = Megawatts;
    fn neg(self) -> Self {
        Megawatts(-self.0)
    }
}

impl Sum for Megawatts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Megawatts::ZERO, Add::add)
    }
}

impl fmt::Display for Megawatts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} MW", self.as_f64())
    }
}

impl Serialize for Megawatts {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Megawatts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = f64::deserialize(d)?;
        Megawatts::from_f64(raw).map_err(serde::de::Error::custom)
    }
}

/// Dimensionless utility weight with 0.01 resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(i64);

impl Weight {
    pub const fn from_centi(centi: i64) -> Self {
        Weight(centi)
    }

    pub const fn from_whole(w: i64) -> Self {
        Weight(w * WEIGHT_SCALE)
    }

    pub fn from_f64(w: f64) -> Result<Self, ModelError> {
        to_fixed(w, WEIGHT_SCALE, "weight").map(Weight)
    }

    pub const fn centi(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / WEIGHT_SCALE as f64
    }

    /// Utility earned by keeping `power` switched on at this weight.
    pub fn times(self, power: Megawatts) -> Utility {
        Utility(self.0 * power.centi())
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = f64::deserialize(d)?;
        Weight::from_f64(raw).map_err(serde::de::Error::custom)
    }
}

/// Aggregate utility `sum(weight * baseline)` in exact fixed point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Utility(i64);

impl Utility {
    pub const ZERO: Utility = Utility(0);

    pub const fn from_raw(raw: i64) -> Self {
        Utility(raw)
    }

    pub const fn from_whole(u: i64) -> Self {
        Utility(u * UTILITY_SCALE)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / UTILITY_SCALE as f64
    }
}

impl Add for Utility {
    type Output = Utility;
    fn add(self, rhs: Self) -> Self {
        Utility(self.0 + rhs.0)
    }
}

impl AddAssign for Utility {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Sub for Utility {
    type Output = Utility;
    fn sub(self, rhs: Self) -> Self {
        Utility(self.0 - rhs.0)
    }
}

impl SubAssign for Utility {
    fn sub_assign(&mut self, rhs: Self) {
        self.0 -= rhs.0;
    }
}

impl Sum for Utility {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Utility::ZERO, Add::add)
    }
}

impl fmt::Display for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for Utility {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}
