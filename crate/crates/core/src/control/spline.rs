//! Natural cubic spline through waypoints, queried by arc length.

use thiserror::Error;

use crate::scene::Point;

/// Arc-length spacing of the resampled table.
pub const SAMPLE_SPACING: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} coincide")]
    DuplicateWaypoint(usize, usize),
}

/// Ego position followed by unrolled waypoints, RL frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    pub points: Vec<Point>,
}

impl WaypointPath {
    pub fn new(points: Vec<Point>) -> Self {
        WaypointPath { points }
    }

    pub fn is_x_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].x > w[0].x)
    }
}

/// One coordinate as a natural cubic spline in the chord parameter.
#[derive(Debug, Clone)]
struct Cubic1D {
    knots: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Cubic1D {
    fn fit(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // Second-derivative coefficients c (= y''/2) from the tridiagonal system,
        // natural ends c[0] = c[n-1] = 0.
        let mut c = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let k = i + 1;
                diag[i] = 2.0 * (h[k - 1] + h[k]);
                upper[i] = h[k];
                rhs[i] = 3.0 * ((values[k + 1] - values[k]) / h[k] - (values[k] - values[k - 1]) / h[k - 1]);
            }
            // Thomas algorithm; the lower diagonal equals h[k-1] = upper[i-1].
            for i in 1..m {
                let w = upper[i - 1] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; m];
            sol[m - 1] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
            }
            c[1..=m].copy_from_slice(&sol);
        }
        let mut b = vec![0.0; n - 1];
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            b[i] = (values[i + 1] - values[i]) / h[i] - h[i] * (c[i + 1] + 2.0 * c[i]) / 3.0;
            d[i] = (c[i + 1] - c[i]) / (3.0 * h[i]);
        }
        Cubic1D {
            knots: knots.to_vec(),
            a: values.to_vec(),
            b,
            c,
            d,
        }
    }

    fn segment(&self, u: f64) -> usize {
        let last = self.knots.len() - 2;
        match self.knots.binary_search_by(|k| k.total_cmp(&u)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Value and first two derivatives at `u`.
    fn eval(&self, u: f64) -> (f64, f64, f64) {
        let i = self.segment(u);
        let t = u - self.knots[i];
        let (a, b, c, d) = (self.a[i], self.b[i], self.c[i], self.d[i]);
        (
            a + t * (b + t * (c + t * d)),
            b + t * (2.0 * c + 3.0 * t * d),
            2.0 * c + 6.0 * t * d,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

/// Cubic spline path with an arc-length table.
#[derive(Debug, Clone)]
pub struct SplinePath {
    sx: Cubic1D,
    sy: Cubic1D,
    /// Arc length at each table entry and the chord parameter it maps to.
    table_s: Vec<f64>,
    table_u: Vec<f64>,
    knot_s: Vec<f64>,
    samples: Vec<PathSample>,
}

const TABLE_SUBSTEPS: usize = 64;

impl SplinePath {
    pub fn length(&self) -> f64 {
        *self.table_s.last().unwrap()
    }

    /// Arc length of each waypoint.
    pub fn knot_arc_lengths(&self) -> &[f64] {
        &self.knot_s
    }

    /// Resampled points every [`SAMPLE_SPACING`] m plus the end point.
    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    fn param_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = self.table_s.partition_point(|&v| v <= s);
        if i == 0 {
            return self.table_u[0];
        }
        if i >= self.table_s.len() {
            return *self.table_u.last().unwrap();
        }
        let (s0, s1) = (self.table_s[i - 1], self.table_s[i]);
        if s == s0 {
            return self.table_u[i - 1];
        }
        let w = (s - s0) / (s1 - s0);
        self.table_u[i - 1] + w * (self.table_u[i] - self.table_u[i - 1])
    }

    /// Position, heading and curvature at chord parameter `u`.
    pub fn eval_param(&self, u: f64) -> (Point, f64, f64) {
        let (x, dx, ddx) = self.sx.eval(u);
        let (y, dy, ddy) = self.sy.eval(u);
        let heading = dy.atan2(dx);
        let speed2 = dx * dx + dy * dy;
        let curvature = (dx * ddy - dy * ddx) / speed2.powf(1.5);
        (Point::new(x, y), heading, curvature)
    }

    /// Second derivatives (x'', y'') just left and right of interior knot
    /// `knot`, taken from the adjacent cubic pieces.
    pub fn second_derivative_sides(&self, knot: usize) -> ((f64, f64), (f64, f64)) {
        let left = |c: &Cubic1D| {
            let i = knot - 1;
            let t = c.knots[knot] - c.knots[i];
            2.0 * c.c[i] + 6.0 * t * c.d[i]
        };
        let right = |c: &Cubic1D| 2.0 * c.c[knot];
        ((left(&self.sx), left(&self.sy)), (right(&self.sx), right(&self.sy)))
    }

    /// Chord parameter of each knot.
    pub fn knot_params(&self) -> &[f64] {
        &self.sx.knots
    }

    pub fn query(&self, s: f64) -> PathSample {
        let (p, heading, curvature) = self.eval_param(self.param_at(s));
        PathSample {
            s: s.clamp(0.0, self.length()),
            x: p.x,
            y: p.y,
            heading,
            curvature,
        }
    }

    pub fn point_at(&self, s: f64) -> Point {
        self.eval_param(self.param_at(s)).0
    }

    /// Closest resampled segment to `p`: arc length of the projection,
    /// projected point and path heading there. The last segment is extended
    /// past the path end.
    pub fn project(&self, p: &Point, hint: Option<usize>) -> (usize, f64, Point, f64) {
        let samples = &self.samples;
        let range = match hint {
            // Local window forward of the previous match.
            Some(h) => h.saturating_sub(5)..(h + 80).min(samples.len() - 1),
            None => 0..samples.len() - 1,
        };
        let mut best = (f64::INFINITY, 0, 0.0, Point::origin(), 0.0);
        let last = samples.len() - 2;
        for i in range {
            let a = Point::new(samples[i].x, samples[i].y);
            let b = Point::new(samples[i + 1].x, samples[i + 1].y);
            let ab = b - a;
            let len2 = ab.norm_squared();
            let hi = if i == last { f64::INFINITY } else { 1.0 };
            let t = if len2 > 0.0 {
                ((p - a).dot(&ab) / len2).clamp(0.0, hi)
            } else {
                0.0
            };
            let q = a + ab * t;
            let d2 = (p - q).norm_squared();
            if d2 < best.0 {
                let s = samples[i].s + t * (samples[i + 1].s - samples[i].s);
                best = (d2, i, s, q, ab.y.atan2(ab.x));
            }
        }
        (best.1, best.2, best.3, best.4)
    }
}

/// Fit a natural cubic spline through the waypoints, parametrised by chord
/// length and tabulated by arc length.
///
/// Two waypoints give a straight segment.
pub fn fit_spline(path: &WaypointPath) -> Result<SplinePath, SplineError> {
    let pts = &path.points;
    if pts.len() < 2 {
        return Err(SplineError::TooFewWaypoints(pts.len()));
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if (pts[i] - pts[j]).norm() < 1e-9 {
                return Err(SplineError::DuplicateWaypoint(i, j));
            }
        }
    }
    let mut knots = vec![0.0];
    for w in pts.windows(2) {
        knots.push(knots.last().unwrap() + (w[1] - w[0]).norm());
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let sx = Cubic1D::fit(&knots, &xs);
    let sy = Cubic1D::fit(&knots, &ys);

    // Arc length by Simpson's rule on fine sub-intervals of every piece.
    let mut table_u = vec![0.0];
    let mut table_s = vec![0.0];
    let mut knot_s = vec![0.0];
    let speed = |u: f64| {
        let (_, dx, _) = sx.eval(u);
        let (_, dy, _) = sy.eval(u);
        dx.hypot(dy)
    };
    for k in 0..knots.len() - 1 {
        let (u0, u1) = (knots[k], knots[k + 1]);
        let du = (u1 - u0) / TABLE_SUBSTEPS as f64;
        for j in 0..TABLE_SUBSTEPS {
            let a = u0 + j as f64 * du;
            let b = if j + 1 == TABLE_SUBSTEPS { u1 } else { a + du };
            let seg = (b - a) / 6.0 * (speed(a) + 4.0 * speed(0.5 * (a + b)) + speed(b));
            table_u.push(b);
            table_s.push(table_s.last().unwrap() + seg);
        }
        knot_s.push(*table_s.last().unwrap());
    }

    let mut spline = SplinePath {
        sx,
        sy,
        table_s,
        table_u,
        knot_s,
        samples: Vec::new(),
    };
    let total = spline.length();
    let n = (total / SAMPLE_SPACING).floor() as usize;
    let mut samples: Vec<PathSample> = (0..=n).map(|i| spline.query(i as f64 * SAMPLE_SPACING)).collect();
    if total - n as f64 * SAMPLE_SPACING > 1e-9 {
        samples.push(spline.query(total));
    }
    spline.samples = samples;
    Ok(spline)
}
