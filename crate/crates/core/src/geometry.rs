//! Planar geometry on oriented rectangles and disks.
//!
//! Everything here works in the workspace plane (cm). Rectangles are
//! convex, so separating-axis tests over the four edge normals are exact.

pub type Vec2 = [f64; 2];

/// Penetration below this depth counts as touching, not overlapping.
pub const CONTACT_EPS: f64 = 1e-9;

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// Rotates `v` counter-clockwise by `angle`.
#[inline]
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[inline]
pub fn unit(angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c, s]
}

/// An oriented rectangle: center, half extents along its own axes, yaw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub center: Vec2,
    pub half: Vec2,
    pub yaw: f64,
}

impl Rect {
    pub fn new(center: Vec2, half: Vec2, yaw: f64) -> Self {
        Self { center, half, yaw }
    }

    /// Unit vectors of the rectangle's local x and y axes.
    pub fn axes(&self) -> [Vec2; 2] {
        let (s, c) = self.yaw.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = sub(p, self.center);
        let [ax, ay] = self.axes();
        [dot(d, ax), dot(d, ay)]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l[0].abs() <= self.half[0] && l[1].abs() <= self.half[1]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let [ax, ay] = self.axes();
        let ex = scale(ax, self.half[0]);
        let ey = scale(ay, self.half[1]);
        [
            add(self.center, add(ex, ey)),
            add(self.center, sub(scale(ey, 1.0), ex)),
            sub(self.center, add(ex, ey)),
            add(self.center, sub(ex, ey)),
        ]
    }

    pub fn circumradius(&self) -> f64 {
        self.half[0].hypot(self.half[1])
    }

    /// Projection interval onto a unit axis.
    pub fn project(&self, axis: Vec2) -> (f64, f64) {
        let [ax, ay] = self.axes();
        let c = dot(self.center, axis);
        let r = self.half[0] * dot(ax, axis).abs() + self.half[1] * dot(ay, axis).abs();
        (c - r, c + r)
    }

    pub fn translated(&self, d: Vec2) -> Rect {
        Rect {
            center: add(self.center, d),
            ..*self
        }
    }

    /// Point of the (solid) rectangle closest to `p`.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let l = self.to_local(p);
        let cx = l[0].clamp(-self.half[0], self.half[0]);
        let cy = l[1].clamp(-self.half[1], self.half[1]);
        let [ax, ay] = self.axes();
        add(self.center, add(scale(ax, cx), scale(ay, cy)))
    }
}

fn sat_axes(a: &Rect, b: &Rect) -> [Vec2; 4] {
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    [a0, a1, b0, b1]
}

/// Minimal translation separating `b` from `a`: unit normal oriented from
/// `a` towards `b`, and the depth along it. `None` when the two only touch
/// or are apart.
pub fn penetration(a: &Rect, b: &Rect) -> Option<(Vec2, f64)> {
    let mut best: Option<(Vec2, f64)> = None;
    for axis in sat_axes(a, b) {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        let overlap = (amax - bmin).min(bmax - amin);
        if overlap <= CONTACT_EPS {
            return None;
        }
        if best.is_none_or(|(_, d)| overlap < d) {
            best = Some((axis, overlap));
        }
    }
    best.map(|(axis, depth)| {
        let n = if dot(sub(b.center, a.center), axis) < 0.0 {
            scale(axis, -1.0)
        } else {
            axis
        };
        (n, depth)
    })
}

pub fn overlaps(a: &Rect, b: &Rect) -> bool {
    penetration(a, b).is_some()
}

/// Smallest `s >= 0` such that `b` translated by `s * dir` no longer
/// overlaps `a`. `dir` must be a unit vector.
pub fn separation_along(a: &Rect, b: &Rect, dir: Vec2) -> f64 {
    let mut best = f64::INFINITY;
    for axis in sat_axes(a, b) {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        if bmin >= amax - CONTACT_EPS || bmax <= amin + CONTACT_EPS {
            return 0.0;
        }
        let k = dot(axis, dir);
        let s = if k > 1e-12 {
            (amax - bmin) / k
        } else if k < -1e-12 {
            (bmax - amin) / -k
        } else {
            continue;
        };
        best = best.min(s);
    }
    best.max(0.0)
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm(sub(p, add(a, scale(ab, t))))
}

/// Boundary-to-boundary distance between two rectangles; zero when they
/// touch or overlap.
pub fn rect_distance(a: &Rect, b: &Rect) -> f64 {
    // Any separating axis means disjoint; otherwise the solids intersect.
    let disjoint = sat_axes(a, b).iter().any(|&axis| {
        let (amin, amax) = a.project(axis);
        let (bmin, bmax) = b.project(axis);
        bmin > amax || bmax < amin
    });
    if !disjoint {
        return 0.0;
    }
    let ca = a.corners();
    let cb = b.corners();
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (e0, e1) = (cb[i], cb[(i + 1) % 4]);
        for &p in &ca {
            best = best.min(point_segment_distance(p, e0, e1));
        }
        let (f0, f1) = (ca[i], ca[(i + 1) % 4]);
        for &p in &cb {
            best = best.min(point_segment_distance(p, f0, f1));
        }
    }
    best
}

/// Distance from a point to the solid rectangle; zero inside.
pub fn rect_distance_to_point(rect: &Rect, p: Vec2) -> f64 {
    norm(sub(rect.closest_point(p), p))
}

/// Overlap of a disk with a rectangle: unit normal pointing from the disk
/// towards the rectangle, and the depth the rectangle must move along it.
pub fn disk_penetration(rect: &Rect, center: Vec2, radius: f64) -> Option<(Vec2, f64)> {
    let l = rect.to_local(center);
    let inside = l[0].abs() <= rect.half[0] && l[1].abs() <= rect.half[1];
    if inside {
        // Leave along the local axis with the least travel.
        let [ax, ay] = rect.axes();
        let px = rect.half[0] - l[0].abs() + radius;
        let py = rect.half[1] - l[1].abs() + radius;
        let (axis, coord, depth) = if px <= py {
            (ax, l[0], px)
        } else {
            (ay, l[1], py)
        };
        // The rectangle moves away from the disk: opposite to the side the
        // disk center sits on.
        let sign = if coord >= 0.0 { -1.0 } else { 1.0 };
        return Some((scale(axis, sign), depth));
    }
    let closest = rect.closest_point(center);
    let d = sub(closest, center);
    let dist = norm(d);
    let depth = radius - dist;
    if depth <= CONTACT_EPS {
        return None;
    }
    Some((scale(d, 1.0 / dist), depth))
}

/// Smallest `s >= 0` such that the rectangle translated by `s * dir` clears
/// the disk. Found by bisection; the returned value is on the clear side.
pub fn disk_separation_along(rect: &Rect, center: Vec2, radius: f64, dir: Vec2) -> f64 {
    if disk_penetration(rect, center, radius).is_none() {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 2.0 * (rect.circumradius() + radius) + norm(sub(rect.center, center));
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if disk_penetration(&rect.translated(scale(dir, mid)), center, radius).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
