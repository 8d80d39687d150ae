//! Screen-space geometry: points, boxes and the table quadrilateral.
//!
//! Coordinates are pixels with the origin at the top-left corner of the
//! frame, `y` growing downwards.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    pub fn origin() -> Self {
        Point2::new(T::zero(), T::zero())
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> T {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    pub fn lerp(self, other: Self, t: T) -> Self {
        self + (other - self) * t
    }

    pub fn midpoint(self, other: Self) -> Self {
        self.lerp(other, T::lit(0.5))
    }

    pub fn cast<U: Scalar>(self) -> Point2<U> {
        Point2::new(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl<T: Scalar> Add for Point2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Point2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Point2<T> {
    type Output = Self;
    fn mul(self, rhs: T) -> Self {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl<T: Scalar> Neg for Point2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Point2::new(-self.x, -self.y)
    }
}

/// Axis-aligned box `(x, y, w, h)` with `(x, y)` the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        BBox { x, y, w, h }
    }

    pub fn center(&self) -> Point2<T> {
        let half = T::lit(0.5);
        Point2::new(self.x + self.w * half, self.y + self.h * half)
    }

    pub fn is_valid(&self) -> bool {
        self.w > T::zero() && self.h > T::zero() && self.x.is_finite() && self.y.is_finite()
    }

    pub fn translated(&self, d: Point2<T>) -> Self {
        BBox::new(self.x + d.x, self.y + d.y, self.w, self.h)
    }
}

/// Convex quadrilateral with corners in order top-left, top-right,
/// bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Quad<T>(pub [Point2<T>; 4]);

impl<T: Scalar> Quad<T> {
    pub fn corners(&self) -> &[Point2<T>; 4] {
        &self.0
    }

    pub fn translated(&self, d: Point2<T>) -> Self {
        Quad(self.0.map(|p| p + d))
    }

    /// Strictly convex with a consistent winding.
    pub fn is_convex(&self) -> bool {
        let c = &self.0;
        let mut sign = 0i8;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            let d = c[(i + 2) % 4];
            let z = (b - a).cross(d - b);
            if !z.is_finite() || z == T::zero() {
                return false;
            }
            let s = if z > T::zero() { 1 } else { -1 };
            if sign == 0 {
                sign = s;
            } else if s != sign {
                return false;
            }
        }
        true
    }

    /// Point-in-polygon test for a convex quad; boundary points count as inside.
    pub fn contains(&self, p: Point2<T>) -> bool {
        let c = &self.0;
        let mut pos = false;
        let mut neg = false;
        for i in 0..4 {
            let a = c[i];
            let b = c[(i + 1) % 4];
            let z = (b - a).cross(p - a);
            if z > T::zero() {
                pos = true;
            } else if z < T::zero() {
                neg = true;
            }
        }
        !(pos && neg)
    }

    /// Bilinear map from the unit square; `u` runs left to right, `v` top to bottom.
    pub fn bilinear(&self, u: T, v: T) -> Point2<T> {
        let [a, b, c, d] = self.0;
        let top = a.lerp(b, u);
        let bottom = d.lerp(c, u);
        top.lerp(bottom, v)
    }

    /// Inverse of [`Quad::bilinear`]. Returns `None` when `p` has no preimage
    /// in (a small neighbourhood of) the unit square.
    pub fn inverse_bilinear(&self, p: Point2<T>) -> Option<(T, T)> {
        let [a, b, c, d] = self.0;
        let e = b - a;
        let f = d - a;
        let g = a - b + c - d;
        let h = p - a;

        let k2 = g.cross(f);
        let k1 = e.cross(f) + h.cross(g);
        let k0 = h.cross(e);

        let scale = e.norm().max(f.norm()).max(T::one());
        let eps = T::lit(1e-9) * scale * scale;
        let tol = T::lit(1e-7);

        let solve_u = |v: T| -> Option<T> {
            let den = e + g * v;
            let num = h - f * v;
            if den.x.abs() >= den.y.abs() {
                if den.x == T::zero() {
                    None
                } else {
                    Some(num.x / den.x)
                }
            } else {
                Some(num.y / den.y)
            }
        };
        let in_range = |t: T| t >= -tol && t <= T::one() + tol;

        let candidates: Vec<T> = if k2.abs() <= eps {
            if k1 == T::zero() {
                return None;
            }
            vec![-k0 / k1]
        } else {
            let disc = k1 * k1 - T::lit(4.0) * k0 * k2;
            if disc < T::zero() {
                return None;
            }
            let w = disc.sqrt();
            let ik2 = T::lit(0.5) / k2;
            vec![(-k1 - w) * ik2, (-k1 + w) * ik2]
        };

        for v in candidates {
            if !in_range(v) {
                continue;
            }
            if let Some(u) = solve_u(v) {
                if in_range(u) {
                    return Some((u, v));
                }
            }
        }
        None
    }
}

/// Quadratic Bézier curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBezier<T> {
    pub start: Point2<T>,
    pub control: Point2<T>,
    pub end: Point2<T>,
}

impl<T: Scalar> QuadBezier<T> {
    pub fn at(&self, t: T) -> Point2<T> {
        let one = T::one();
        let s = one - t;
        self.start * (s * s) + self.control * (T::lit(2.0) * s * t) + self.end * (t * t)
    }

    /// `n + 1` evenly spaced samples; the first and last are the exact endpoints.
    pub fn sample(&self, n: usize) -> Vec<Point2<T>> {
        let n = n.max(1);
        (0..=n)
            .map(|i| match i {
                0 => self.start,
                i if i == n => self.end,
                i => self.at(T::from_count(i) / T::from_count(n)),
            })
            .collect()
    }
}
