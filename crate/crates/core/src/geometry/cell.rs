//! The periodicity cell `Y`, its hole `S` and the cell coefficient `a(y)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{cross, norm, sub, Mat2, Point2, Real};

/// Y-periodic coefficient `a(y)` together with its declared bounds.
///
/// The closure is evaluated on the reference cell; [`PeriodicCell::coefficient_at`]
/// wraps arbitrary points back into the cell first.
#[derive(Clone)]
pub struct CoefficientField<T> {
    name: String,
    eval: Arc<dyn Fn(Point2<T>) -> Mat2<T> + Send + Sync>,
    /// Declared ellipticity constant: `ξᵀ a ξ ≥ α |ξ|²`.
    pub alpha: T,
    /// Declared bound on `|a_ij|`.
    pub bound: T,
}

impl<T: fmt::Debug> fmt::Debug for CoefficientField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("bound", &self.bound)
            .finish()
    }
}

impl<T: Real> CoefficientField<T> {
    pub fn new<F>(name: impl Into<String>, alpha: T, bound: T, eval: F) -> Self
    where
        F: Fn(Point2<T>) -> Mat2<T> + Send + Sync + 'static,
    {
        Self { name: name.into(), eval: Arc::new(eval), alpha, bound }
    }

    pub fn identity() -> Self {
        Self::diagonal(T::one(), T::one())
    }

    /// Constant `diag(a1, a2)`.
    pub fn diagonal(a1: T, a2: T) -> Self {
        let alpha = a1.min(a2);
        let bound = a1.abs().max(a2.abs());
        Self::new(format!("diag({a1},{a2})"), alpha, bound, move |_| {
            [[a1, T::zero()], [T::zero(), a2]]
        })
    }

    /// Constant full matrix.
    pub fn constant(a: Mat2<T>) -> Self {
        let alpha = sym_min_eigenvalue(a);
        let bound = a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
        Self::new("constant", alpha, bound, move |_| a)
    }

    /// Checkerboard of isotropic values: `a1·I` on the quarter cells where
    /// `y1 < l1/2` and `y2 < l2/2` agree, `a2·I` on the other two.
    pub fn checker(a1: T, a2: T, lengths: Point2<T>) -> Self {
        let half = [lengths[0] / T::lit(2.0), lengths[1] / T::lit(2.0)];
        let alpha = a1.min(a2);
        let bound = a1.abs().max(a2.abs());
        Self::new(format!("checker({a1},{a2})"), alpha, bound, move |y| {
            let v = if (y[0] < half[0]) == (y[1] < half[1]) { a1 } else { a2 };
            [[v, T::zero()], [T::zero(), v]]
        })
    }

    /// Multiply the field (and its bounds) by `c > 0`.
    pub fn scaled(&self, c: T) -> Self {
        let inner = self.eval.clone();
        Self {
            name: format!("{}*{}", c, self.name),
            eval: Arc::new(move |y| {
                let a = inner(y);
                [[a[0][0] * c, a[0][1] * c], [a[1][0] * c, a[1][1] * c]]
            }),
            alpha: self.alpha * c,
            bound: self.bound * c,
        }
    }

    /// Field with every matrix transposed.
    pub fn transposed(&self) -> Self {
        let inner = self.eval.clone();
        Self {
            name: format!("({})^T", self.name),
            eval: Arc::new(move |y| {
                let a = inner(y);
                [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
            }),
            alpha: self.alpha,
            bound: self.bound,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Raw evaluation, no periodic wrapping.
    #[inline]
    pub fn eval(&self, y: Point2<T>) -> Mat2<T> {
        (self.eval)(y)
    }
}

/// Smallest eigenvalue of the symmetric part `(A + Aᵀ)/2`.
pub fn sym_min_eigenvalue<T: Real>(a: Mat2<T>) -> T {
    let two = T::lit(2.0);
    let p = a[0][0];
    let q = a[1][1];
    let s = (a[0][1] + a[1][0]) / two;
    let mean = (p + q) / two;
    let rad = (((p - q) / two).powi(2) + s * s).sqrt();
    mean - rad
}

/// Hole `S` inside the reference cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Hole<T> {
    Empty,
    Disk { center: Point2<T>, radius: T },
    /// Simple polygon, star-shaped with respect to its area centroid.
    Polygon(Vec<Point2<T>>),
}

impl<T: Real> Hole<T> {
    pub fn is_empty(&self) -> bool {
        matches!(self, Hole::Empty)
    }

    /// Exact area of the hole.
    pub fn area(&self) -> T {
        match self {
            Hole::Empty => T::zero(),
            Hole::Disk { radius, .. } => T::pi() * *radius * *radius,
            Hole::Polygon(v) => polygon_signed_area(v).abs(),
        }
    }

    /// Reference point for the radial meshing (disk center, polygon centroid).
    pub fn center(&self) -> Option<Point2<T>> {
        match self {
            Hole::Empty => None,
            Hole::Disk { center, .. } => Some(*center),
            Hole::Polygon(v) => Some(polygon_centroid(v)),
        }
    }

    /// Distance from [`Hole::center`] to `∂S` along the unit direction `dir`.
    pub fn radial_extent(&self, dir: Point2<T>) -> Option<T> {
        match self {
            Hole::Empty => None,
            Hole::Disk { radius, .. } => Some(*radius),
            Hole::Polygon(v) => {
                let c = polygon_centroid(v);
                ray_polygon_distance(c, dir, v)
            }
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: Point2<T>) -> bool {
        match self {
            Hole::Empty => false,
            Hole::Disk { center, radius } => norm(sub(p, *center)) < *radius,
            Hole::Polygon(v) => point_in_polygon(p, v),
        }
    }

    /// Distance from the closed hole to the boundary of `[0,l1]×[0,l2]`;
    /// negative or zero when `closure(S) ⊄ Y`.
    pub fn clearance(&self, lengths: Point2<T>) -> T {
        match self {
            Hole::Empty => T::infinity(),
            Hole::Disk { center, radius } => {
                let c = *center;
                let d = c[0].min(lengths[0] - c[0]).min(c[1]).min(lengths[1] - c[1]);
                d - *radius
            }
            Hole::Polygon(v) => v.iter().fold(T::infinity(), |m, p| {
                m.min(p[0]).min(lengths[0] - p[0]).min(p[1]).min(lengths[1] - p[1])
            }),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        match self {
            Hole::Empty => Ok(()),
            Hole::Disk { radius, .. } => {
                if *radius > T::zero() && radius.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Geometry(format!("disk radius must be positive, got {radius}")))
                }
            }
            Hole::Polygon(v) => {
                if v.len() < 3 {
                    return Err(Error::Geometry("polygon hole needs at least 3 vertices".into()));
                }
                let area = polygon_signed_area(v);
                if area.abs() <= T::epsilon() {
                    return Err(Error::Geometry("polygon hole has zero area".into()));
                }
                let c = polygon_centroid(v);
                for p in v {
                    let d = sub(*p, c);
                    let len = norm(d);
                    let dir = [d[0] / len, d[1] / len];
                    let hit = ray_polygon_distance(c, dir, v).unwrap_or(T::zero());
                    if hit < len * (T::one() - T::lit(1e-9)) {
                        return Err(Error::Geometry(
                            "polygon hole must be star-shaped about its centroid".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

fn polygon_signed_area<T: Real>(v: &[Point2<T>]) -> T {
    let n = v.len();
    let mut s = T::zero();
    for i in 0..n {
        s += cross(v[i], v[(i + 1) % n]);
    }
    s / T::lit(2.0)
}

fn polygon_centroid<T: Real>(v: &[Point2<T>]) -> Point2<T> {
    let n = v.len();
    let a = polygon_signed_area(v);
    let mut cx = T::zero();
    let mut cy = T::zero();
    for i in 0..n {
        let p = v[i];
        let q = v[(i + 1) % n];
        let w = cross(p, q);
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    let six_a = T::lit(6.0) * a;
    [cx / six_a, cy / six_a]
}

fn ray_polygon_distance<T: Real>(c: Point2<T>, dir: Point2<T>, v: &[Point2<T>]) -> Option<T> {
    let n = v.len();
    let mut best: Option<T> = None;
    for i in 0..n {
        let p = v[i];
        let e = sub(v[(i + 1) % n], p);
        let denom = cross(dir, e);
        if denom.abs() <= T::epsilon() {
            continue;
        }
        let w = sub(p, c);
        let t = cross(w, e) / denom;
        let s = cross(w, dir) / denom;
        let tol = T::lit(1e-12);
        if t > tol && s >= -tol && s <= T::one() + tol {
            best = Some(best.map_or(t, |b: T| b.min(t)));
        }
    }
    best
}

fn point_in_polygon<T: Real>(p: Point2<T>, v: &[Point2<T>]) -> bool {
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Representative cell `Y = [0,l1)×[0,l2)` with hole `S` and coefficient `a`.
#[derive(Debug, Clone)]
pub struct PeriodicCell<T> {
    lengths: Point2<T>,
    hole: Hole<T>,
    coefficient: CoefficientField<T>,
}

impl<T: Real> PeriodicCell<T> {
    /// Validates the cell: positive lengths, `closure(S) ⊂ Y`, and the declared
    /// ellipticity and boundedness of `a` on a sampling grid.
    pub fn new(lengths: Point2<T>, hole: Hole<T>, coefficient: CoefficientField<T>) -> Result<Self> {
        if !(lengths[0] > T::zero() && lengths[1] > T::zero()) {
            return Err(Error::Geometry("cell lengths must be positive".into()));
        }
        hole.validate_shape()?;
        let clearance = hole.clearance(lengths);
        if clearance <= T::zero() {
            return Err(Error::Geometry(format!(
                "closure of the hole must lie inside the open cell (clearance {clearance})"
            )));
        }
        let cell = Self { lengths, hole, coefficient };
        cell.check_coefficient(32)?;
        Ok(cell)
    }

    /// Check ellipticity and boundedness of `a` on an `n×n` grid of cell-centred
    /// samples plus the cell corners.
    pub fn check_coefficient(&self, n: usize) -> Result<()> {
        let a = &self.coefficient;
        if !(a.alpha > T::zero()) {
            return Err(Error::Invalid(format!(
                "declared ellipticity constant must be positive, got {}",
                a.alpha
            )));
        }
        let tol = T::lit(1e-12) * a.alpha.max(T::one());
        let mut samples = Vec::with_capacity(n * n + 1);
        for j in 0..n {
            for i in 0..n {
                let y = [
                    self.lengths[0] * (T::from_count(i) + T::lit(0.5)) / T::from_count(n),
                    self.lengths[1] * (T::from_count(j) + T::lit(0.5)) / T::from_count(n),
                ];
                samples.push(y);
            }
        }
        samples.push([T::zero(), T::zero()]);
        for y in samples {
            let m = a.eval(y);
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("coefficient is not finite at {y:?}")));
            }
            let lam = sym_min_eigenvalue(m);
            if lam < a.alpha - tol {
                return Err(Error::Invalid(format!(
                    "coefficient not elliptic at {:?}: min eigenvalue {} < alpha {}",
                    y, lam, a.alpha
                )));
            }
            if m.iter().flatten().any(|v| v.abs() > a.bound + tol) {
                return Err(Error::Invalid(format!(
                    "coefficient exceeds declared bound {} at {:?}",
                    a.bound, y
                )));
            }
        }
        Ok(())
    }

    pub fn lengths(&self) -> Point2<T> {
        self.lengths
    }

    pub fn hole(&self) -> &Hole<T> {
        &self.hole
    }

    pub fn coefficient(&self) -> &CoefficientField<T> {
        &self.coefficient
    }

    /// `|Y|`.
    pub fn measure(&self) -> T {
        self.lengths[0] * self.lengths[1]
    }

    /// Exact `ϑ = |Y*|/|Y|` from the analytic hole area.
    pub fn exact_theta(&self) -> T {
        T::one() - self.hole.area() / self.measure()
    }

    /// Hole clearance `δ_S`.
    pub fn clearance(&self) -> T {
        self.hole.clearance(self.lengths)
    }

    /// Evaluate `a` at any point, wrapping it into the reference cell.
    pub fn coefficient_at(&self, y: Point2<T>) -> Mat2<T> {
        let w = [wrap(y[0], self.lengths[0]), wrap(y[1], self.lengths[1])];
        self.coefficient.eval(w)
    }

    /// Same geometry with another coefficient (validated).
    pub fn with_coefficient(&self, coefficient: CoefficientField<T>) -> Result<Self> {
        Self::new(self.lengths, self.hole.clone(), coefficient)
    }
}

#[inline]
fn wrap<T: Real>(x: T, l: T) -> T {
    let r = x - (x / l).floor() * l;
    if r >= l {
        r - l
    } else {
        r
    }
}
