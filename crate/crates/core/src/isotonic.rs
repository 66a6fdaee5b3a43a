//! Shape-constrained kernels: weighted PAVA, the left derivative of a
//! greatest convex minorant, and monotone (Fritsch–Carlson) cubic Hermite
//! interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Strictly increasing abscissae with values and positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeries {
    x: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
}

impl WeightedSeries {
    pub fn new(x: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != v.len() || x.len() != w.len() {
            return Err(invalid("weighted series needs equal, nonzero lengths"));
        }
        if let Some(pair) = x.windows(2).find(|p| !(p[0] < p[1])) {
            return Err(Error::DuplicateAbscissa(pair[1]));
        }
        if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
            return Err(invalid("weights must be positive and finite"));
        }
        Ok(Self { x, v, w })
    }

    /// Unit weights at abscissae 1..=n.
    pub fn unweighted(v: Vec<f64>) -> Self {
        let n = v.len();
        Self {
            x: (1..=n).map(|i| i as f64).collect(),
            v,
            w: vec![1.0; n],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Left-continuous step: on `(x[k-1], x[k]]` the curve equals `values[k]`.
    StepLeft,
    Hermite,
}

/// A nondecreasing curve given by knots. Evaluation clamps to the boundary
/// values outside `[first, last]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCurve {
    knots: Vec<f64>,
    values: Vec<f64>,
    kind: Interpolation,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    tangents: Vec<f64>,
}

impl MonotoneCurve {
    pub fn step(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(invalid("step curve needs equal, nonzero lengths"));
        }
        Ok(Self {
            knots,
            values,
            kind: Interpolation::StepLeft,
            tangents: Vec::new(),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> Interpolation {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if t <= self.knots[0] {
            return self.values[0];
        }
        if t >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        // first knot >= t; here 1 <= k <= n-1
        let k = self.knots.partition_point(|&x| x < t);
        match self.kind {
            Interpolation::StepLeft => self.values[k],
            Interpolation::Hermite => {
                if self.knots[k] == t {
                    return self.values[k];
                }
                let (x0, x1) = (self.knots[k - 1], self.knots[k]);
                let h = x1 - x0;
                let s = (t - x0) / h;
                let (s2, s3) = (s * s, s * s * s);
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = s3 - 2.0 * s2 + s;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = s3 - s2;
                h00 * self.values[k - 1]
                    + h10 * h * self.tangents[k - 1]
                    + h01 * self.values[k]
                    + h11 * h * self.tangents[k]
            }
        }
    }

    /// Analytic derivative. Zero for step curves and outside the knot range.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.knots.len();
        if self.kind == Interpolation::StepLeft || t < self.knots[0] || t > self.knots[n - 1] {
            return 0.0;
        }
        let k = self.knots.partition_point(|&x| x < t).clamp(1, n - 1);
        let (x0, x1) = (self.knots[k - 1], self.knots[k]);
        let h = x1 - x0;
        let s = (t - x0) / h;
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * s * s - 2.0 * s;
        (d00 * self.values[k - 1] + d01 * self.values[k]) / h
            + d10 * self.tangents[k - 1]
            + d11 * self.tangents[k]
    }
}

/// Weighted least-squares projection of `v` onto nondecreasing sequences.
pub fn pava_values(v: &[f64], w: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), w.len());
    // (weighted sum, total weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(v.len());
    for (&vi, &wi) in v.iter().zip(w) {
        let mut cur = (vi * wi, wi, 1usize);
        while let Some(&(ps, pw, pc)) = blocks.last() {
            if ps / pw >= cur.0 / cur.1 {
                blocks.pop();
                cur = (ps + cur.0, pw + cur.1, pc + cur.2);
            } else {
                break;
            }
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(v.len());
    for (s, wt, c) in blocks {
        out.extend(std::iter::repeat_n(s / wt, c));
    }
    out
}

/// Weighted isotonic regression. The fitted curve is a left-continuous step
/// on the input abscissae.
pub fn pava(s: &WeightedSeries) -> MonotoneCurve {
    let fitted = pava_values(&s.v, &s.w);
    MonotoneCurve {
        knots: s.x.clone(),
        values: fitted,
        kind: Interpolation::StepLeft,
        tangents: Vec::new(),
    }
}

/// Left derivative of the greatest convex minorant of `points`, evaluated at
/// every input abscissa after the leading `(0, 0)` anchor.
pub fn gcm_left_derivative(points: &[(f64, f64)]) -> Result<MonotoneCurve> {
    if points.len() < 2 {
        return Err(invalid("need the (0,0) anchor and at least one point"));
    }
    if points[0] != (0.0, 0.0) {
        return Err(invalid("first point must be (0, 0)"));
    }
    if let Some(pair) = points.windows(2).find(|p| !(p[0].0 < p[1].0)) {
        return Err(Error::DuplicateAbscissa(pair[1].0));
    }

    // lower hull, monotone chain
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // b is not strictly below segment a-p
            if (b.1 - a.1) * (p.0 - b.0) >= (p.1 - b.1) * (b.0 - a.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    let mut knots = Vec::with_capacity(points.len() - 1);
    let mut slopes = Vec::with_capacity(points.len() - 1);
    let mut seg = 1;
    for &(x, _) in &points[1..] {
        while hull[seg].0 < x {
            seg += 1;
        }
        let (a, b) = (hull[seg - 1], hull[seg]);
        knots.push(x);
        slopes.push((b.1 - a.1) / (b.0 - a.0));
    }
    Ok(MonotoneCurve {
        knots,
        values: slopes,
        kind: Interpolation::StepLeft,
        tangents: Vec::new(),
    })
}

/// Monotone C¹ cubic Hermite interpolant with Fritsch–Carlson tangents.
pub fn monotone_hermite(knots: &[f64], values: &[f64]) -> Result<MonotoneCurve> {
    let n = knots.len();
    if n < 2 {
        return Err(invalid("monotone Hermite interpolation needs at least 2 knots"));
    }
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: values.len(),
        });
    }
    if let Some(pair) = knots.windows(2).find(|p| !(p[0] < p[1])) {
        return Err(Error::DuplicateAbscissa(pair[1]));
    }
    if values.windows(2).any(|p| p[1] < p[0]) {
        return Err(invalid("values must be nondecreasing"));
    }

    let secants: Vec<f64> = (0..n - 1)
        .map(|k| (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        m[k] = if secants[k - 1] * secants[k] <= 0.0 {
            0.0
        } else {
            0.5 * (secants[k - 1] + secants[k])
        };
    }
    for k in 0..n - 1 {
        if secants[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / secants[k];
        let b = m[k + 1] / secants[k];
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            m[k] = tau * a * secants[k];
            m[k + 1] = tau * b * secants[k];
        }
    }
    Ok(MonotoneCurve {
        knots: knots.to_vec(),
        values: values.to_vec(),
        kind: Interpolation::Hermite,
        tangents: m,
    })
}

/// Finite-difference derivative, central in the interior and one-sided
/// near the ends of the knot range, clipped at zero.
pub fn numeric_derivative(c: &MonotoneCurve, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid(format!("derivative step must be positive, got {h}")));
    }
    let (lo, hi) = c.domain();
    if t < lo || t > hi {
        return Err(invalid(format!("t = {t} outside curve domain [{lo}, {hi}]")));
    }
    let d = if t - h >= lo && t + h <= hi {
        (c.eval(t + h) - c.eval(t - h)) / (2.0 * h)
    } else if t + h <= hi {
        (c.eval(t + h) - c.eval(t)) / h
    } else if t - h >= lo {
        (c.eval(t) - c.eval(t - h)) / h
    } else if hi > lo {
        (c.eval(hi) - c.eval(lo)) / (hi - lo)
    } else {
        0.0
    };
    Ok(d.max(0.0))
}
