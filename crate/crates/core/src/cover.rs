//! Annulus points, cover points and deck translations.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Point of the annulus, circle coordinate in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AnnulusPoint<S: Scalar = f64> {
    pub x: S,
    pub y: S,
}

/// Point of the universal cover. The abscissa is never reduced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CoverPoint<S: Scalar = f64> {
    pub x: S,
    pub y: S,
}

/// Integer horizontal translation of the cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeckShift(pub i64);

/// Horizontal truncation `S^1 x [y_min, y_max]` of the annulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Band<S: Scalar = f64> {
    pub y_min: S,
    pub y_max: S,
}

/// Reduces `x` into `[0, 1)`.
pub fn wrap_unit<S: Scalar>(x: S) -> S {
    let r = x - x.floor();
    if r >= S::one() {
        S::zero()
    } else {
        r
    }
}

/// Signed circle difference `a - b` reduced to `[-1/2, 1/2)`.
pub fn circle_diff<S: Scalar>(a: S, b: S) -> S {
    let half = S::lit(0.5);
    wrap_unit(a - b + half) - half
}

/// Circle distance in `[0, 1/2]`.
pub fn circle_dist<S: Scalar>(a: S, b: S) -> S {
    circle_diff(a, b).abs()
}

impl<S: Scalar> AnnulusPoint<S> {
    /// Builds a point, reducing the circle coordinate.
    pub fn new(x: S, y: S) -> Self {
        Self { x: wrap_unit(x), y }
    }

    /// The lift with abscissa in `[0, 1)`.
    pub fn lift(self) -> CoverPoint<S> {
        CoverPoint { x: self.x, y: self.y }
    }

    pub fn cast<T: Scalar>(self) -> AnnulusPoint<T> {
        AnnulusPoint {
            x: T::lit(self.x.to_f64_lossy()),
            y: T::lit(self.y.to_f64_lossy()),
        }
    }
}

impl<S: Scalar> CoverPoint<S> {
    pub const fn new(x: S, y: S) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<T: Scalar>(self) -> CoverPoint<T> {
        CoverPoint {
            x: T::lit(self.x.to_f64_lossy()),
            y: T::lit(self.y.to_f64_lossy()),
        }
    }

    pub fn norm(self) -> S {
        self.x.hypot(self.y)
    }
}

impl<S: Scalar> Add<DeckShift> for CoverPoint<S> {
    type Output = CoverPoint<S>;
    fn add(self, k: DeckShift) -> Self {
        CoverPoint {
            x: self.x + S::lit(k.0 as f64),
            y: self.y,
        }
    }
}

impl<S: Scalar> Sub<DeckShift> for CoverPoint<S> {
    type Output = CoverPoint<S>;
    fn sub(self, k: DeckShift) -> Self {
        self + DeckShift(-k.0)
    }
}

impl<S: Scalar> Add for CoverPoint<S> {
    type Output = CoverPoint<S>;
    fn add(self, o: Self) -> Self {
        CoverPoint::new(self.x + o.x, self.y + o.y)
    }
}

impl<S: Scalar> Sub for CoverPoint<S> {
    type Output = CoverPoint<S>;
    fn sub(self, o: Self) -> Self {
        CoverPoint::new(self.x - o.x, self.y - o.y)
    }
}

/// Quotient map of the cover onto the annulus.
pub fn project<S: Scalar>(p: CoverPoint<S>) -> AnnulusPoint<S> {
    AnnulusPoint {
        x: wrap_unit(p.x),
        y: p.y,
    }
}

/// Representative of `a` nearest to `base`; a tie at distance 1/2 picks `base.x + 1/2`.
pub fn lift_near<S: Scalar>(a: AnnulusPoint<S>, base: CoverPoint<S>) -> CoverPoint<S> {
    let k = (base.x - a.x + S::lit(0.5)).floor();
    CoverPoint { x: a.x + k, y: a.y }
}

/// Horizontal displacement `pi_1(q) - pi_1(p)`.
pub fn displacement<S: Scalar>(p: CoverPoint<S>, q: CoverPoint<S>) -> S {
    q.x - p.x
}

impl<S: Scalar> Band<S> {
    pub fn new(y_min: S, y_max: S) -> Result<Self> {
        if !(y_min < y_max) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::InvalidParams(format!(
                "band requires finite y_min < y_max, got [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { y_min, y_max })
    }

    pub fn contains(&self, y: S) -> bool {
        y >= self.y_min && y <= self.y_max
    }

    pub fn height(&self) -> S {
        self.y_max - self.y_min
    }

    pub fn cast<T: Scalar>(self) -> Band<T> {
        Band {
            y_min: T::lit(self.y_min.to_f64_lossy()),
            y_max: T::lit(self.y_max.to_f64_lossy()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn project_examples() {
        assert_eq!(project(CoverPoint::new(2.25, 0.5)), AnnulusPoint { x: 0.25, y: 0.5 });
        assert_eq!(project(CoverPoint::new(-0.25, 1.0)), AnnulusPoint { x: 0.75, y: 1.0 });
        assert_eq!(project(CoverPoint::new(3.0, -2.0)), AnnulusPoint { x: 0.0, y: -2.0 });
    }

    #[test]
    fn lift_near_examples() {
        let p = lift_near(AnnulusPoint::<f64>::new(0.9, 0.0), CoverPoint::new(0.0, 0.0));
        assert!((p.x + 0.1).abs() < 1e-15);
        let p = lift_near(AnnulusPoint::<f64>::new(0.1, 0.0), CoverPoint::new(5.0, 0.0));
        assert!((p.x - 5.1).abs() < 1e-12);
        let p = lift_near(AnnulusPoint::new(0.5, 0.0), CoverPoint::new(0.0, 0.0));
        assert_eq!(p.x, 0.5);
        let p = lift_near(AnnulusPoint::new(0.5, 0.0), CoverPoint::new(1.0, 0.0));
        assert_eq!(p.x, 1.5);
    }

    #[test]
    fn displacement_examples() {
        assert_eq!(displacement(CoverPoint::new(0.0, 0.0), CoverPoint::new(3.5, 1.0)), 3.5);
        assert_eq!(displacement(CoverPoint::new(1.0, 2.0), CoverPoint::new(1.0, 5.0)), 0.0);
        assert_eq!(displacement(CoverPoint::new(2.0, 0.0), CoverPoint::new(-1.0, 0.0)), -3.0);
    }

    #[test]
    fn wrap_handles_tiny_negative() {
        let r = wrap_unit(-1e-18_f64);
        assert!((0.0..1.0).contains(&r));
        let r = wrap_unit(-1e-9_f32);
        assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn band_rejects_empty() {
        assert!(Band::new(1.0, 1.0).is_err());
        assert!(Band::new(0.0, f64::NAN).is_err());
        assert!(Band::new(-3.0, 4.0).is_ok());
    }

    proptest! {
        #[test]
        fn deck_shift_invisible_in_projection(x in -1e3f64..1e3, y in -10f64..10.0, k in -1000i64..1000) {
            let p = CoverPoint::new(x, y);
            let a = project(p);
            let b = project(p + DeckShift(k));
            prop_assert!(circle_dist(a.x, b.x) < 1e-9);
            prop_assert_eq!(a.y, b.y);
        }

        #[test]
        fn lift_near_is_right_inverse(x in 0f64..1.0, y in -5f64..5.0, bx in -1e3f64..1e3) {
            let a = AnnulusPoint::new(x, y);
            let l = lift_near(a, CoverPoint::new(bx, 0.0));
            let back = project(l);
            prop_assert!(circle_dist(back.x, a.x) <= 4.0 * f64::EPSILON * (1.0 + bx.abs()));
            prop_assert!((l.x - bx).abs() <= 0.5 + 1e-9);
        }

        #[test]
        fn displacement_of_shift_is_exact(x in -1e3f64..1e3, k in -1000i64..1000) {
            let p = CoverPoint::new(x.round(), 0.0);
            prop_assert_eq!(displacement(p, p + DeckShift(k)), k as f64);
        }
    }
}
