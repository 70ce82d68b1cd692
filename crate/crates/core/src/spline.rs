//! Shape-preserving cubic interpolation and isotonic regression.

use crate::error::{Error, Result};

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes.
///
/// Monotone data gives a monotone curve. Outside the knot range the curve is
/// held at the end values.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::InvalidInput(format!(
                "spline needs >= 2 knots with matching values, got {} x and {} y",
                n,
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("spline knots must be finite".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "spline abscissae must be strictly increasing".into(),
            ));
        }

        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();

        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            let (s1, s2) = (delta[k - 1], delta[k]);
            if s1 * s2 > 0.0 {
                // weighted harmonic mean
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / s1 + w2 / s2);
            }
        }
        d[0] = end_slope(h[0], h.get(1).copied(), delta[0], delta.get(1).copied());
        d[n - 1] = end_slope(
            h[n - 2],
            if n > 2 { Some(h[n - 3]) } else { None },
            delta[n - 2],
            if n > 2 { Some(delta[n - 3]) } else { None },
        );

        Ok(Self { x, y, slopes: d })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.slopes[k] + h01 * self.y[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

/// Three-point end slope, limited so it cannot overshoot.
fn end_slope(h0: f64, h1: Option<f64>, d0: f64, d1: Option<f64>) -> f64 {
    let (h1, d1) = match (h1, d1) {
        (Some(h1), Some(d1)) => (h1, d1),
        _ => return d0,
    };
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

/// Least-squares non-decreasing fit (pool adjacent violators).
pub fn isotonic_increasing(y: &[f64]) -> Vec<f64> {
    // (mean, count) blocks
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let c = c1 + c2;
            *blocks.last_mut().unwrap() = ((m1 * c1 as f64 + m2 * c2 as f64) / c as f64, c);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, c)| std::iter::repeat_n(m, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolates_knots_and_holds_ends() {
        let s = MonotoneSpline::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 0.2, 0.7, 1.0]).unwrap();
        assert_eq!(s.eval(0.0), 0.0);
        assert_eq!(s.eval(1.0), 0.2);
        assert_eq!(s.eval(4.0), 1.0);
        assert_eq!(s.eval(-3.0), 0.0);
        assert_eq!(s.eval(9.0), 1.0);
    }

    #[test]
    fn reproduces_a_line() {
        let s = MonotoneSpline::new(vec![0.0, 1.0, 3.0, 4.0], vec![1.0, 3.0, 7.0, 9.0]).unwrap();
        for i in 0..=40 {
            let t = i as f64 * 0.1;
            assert!((s.eval(t) - (1.0 + 2.0 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_segment_stays_flat() {
        let s = MonotoneSpline::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        for i in 0..=10 {
            let t = 1.0 + i as f64 * 0.1;
            assert!((s.eval(t) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(MonotoneSpline::new(vec![0.0], vec![0.0]).is_err());
        assert!(MonotoneSpline::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneSpline::new(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_increasing(&[1.0, 3.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_increasing(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_curve(
            steps in prop::collection::vec((0.1..5.0f64, 0.0..3.0f64), 2..8),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let s = MonotoneSpline::new(x.clone(), y).unwrap();
            let end = *x.last().unwrap();
            let mut prev = s.eval(-1.0);
            for i in 0..=500 {
                let v = s.eval(end * i as f64 / 500.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }

        #[test]
        fn isotonic_output_is_sorted(y in prop::collection::vec(-10.0..10.0f64, 1..20)) {
            let fit = isotonic_increasing(&y);
            prop_assert_eq!(fit.len(), y.len());
            prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let sum: f64 = y.iter().sum();
            let fit_sum: f64 = fit.iter().sum();
            prop_assert!((sum - fit_sum).abs() < 1e-9);
        }
    }
}
