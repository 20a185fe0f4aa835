use crate::Vec3;

/// Closest points between two segments.
///
/// Points are parameterized as `r * first + (1 - r) * second`, so `r = 1`
/// is the first endpoint of each segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentClosest {
    pub r_i: f64,
    pub r_j: f64,
    pub distance: f64,
}

impl SegmentClosest {
    pub fn point_on_first(&self, a0: &Vec3, a1: &Vec3) -> Vec3 {
        a0 * self.r_i + a1 * (1.0 - self.r_i)
    }

    pub fn point_on_second(&self, b0: &Vec3, b1: &Vec3) -> Vec3 {
        b0 * self.r_j + b1 * (1.0 - self.r_j)
    }
}

const DEGENERATE_SQ: f64 = 1e-24;

/// Minimal distance between segments `a0-a1` and `b0-b1`.
///
/// A zero-length segment is treated as its first endpoint (`r = 1`). For
/// parallel segments with a continuum of minimizers the pair with the
/// smallest `r_i`, then the smallest `r_j`, is returned.
pub fn closest_points_between_segments(
    a0: &Vec3,
    a1: &Vec3,
    b0: &Vec3,
    b1: &Vec3,
) -> SegmentClosest {
    // Internally s and t run from the first endpoint (0) to the second (1).
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let r = a0 - b0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);

    let (s, t) = if a <= DEGENERATE_SQ && e <= DEGENERATE_SQ {
        (0.0, 0.0)
    } else if a <= DEGENERATE_SQ {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = d1.dot(&r);
        if e <= DEGENERATE_SQ {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            if denom <= 1e-12 * a * e {
                return parallel_case(a0, a1, b0, b1);
            }
            let mut s = ((b * f - c * e) / denom).clamp(0.0, 1.0);
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let pa = a0 + d1 * s;
    let pb = b0 + d2 * t;
    SegmentClosest {
        r_i: 1.0 - s,
        r_j: 1.0 - t,
        distance: (pa - pb).norm(),
    }
}

/// Parallel segments: the minimizer set is an interval whose ends are
/// endpoint-to-segment projections, so checking those four is exhaustive.
fn parallel_case(a0: &Vec3, a1: &Vec3, b0: &Vec3, b1: &Vec3) -> SegmentClosest {
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let project = |p: &Vec3, origin: &Vec3, dir: &Vec3| -> f64 {
        ((p - origin).dot(dir) / dir.norm_squared()).clamp(0.0, 1.0)
    };
    let candidates = [
        (0.0, project(a0, b0, &d2)),
        (1.0, project(a1, b0, &d2)),
        (project(b0, a0, &d1), 0.0),
        (project(b1, a0, &d1), 1.0),
    ];
    let evaluated: Vec<SegmentClosest> = candidates
        .iter()
        .map(|&(s, t)| SegmentClosest {
            r_i: 1.0 - s,
            r_j: 1.0 - t,
            distance: ((a0 + d1 * s) - (b0 + d2 * t)).norm(),
        })
        .collect();
    let best = evaluated
        .iter()
        .map(|c| c.distance)
        .fold(f64::INFINITY, f64::min);
    let scale = d1.norm().max(d2.norm());
    let tol = 1e-12 * scale.max(1.0);
    *evaluated
        .iter()
        .filter(|c| c.distance <= best + tol)
        .min_by(|x, y| x.r_i.total_cmp(&y.r_i).then(x.r_j.total_cmp(&y.r_j)))
        .expect("four candidates")
}
