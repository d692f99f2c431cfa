//! Natural cubic spline interpolation on strictly increasing knots.

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    /// Panics unless there are at least two knots with strictly increasing `xs`.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len());
        debug_assert!(xs.windows(2).all(|w| w[1] > w[0]));
        let n = xs.len();
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for k in 1..m {
                let lower = xs[k + 1] - xs[k];
                let w = lower / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                second[k + 1] = (rhs[k] - upper[k] * second[k + 2]) / diag[k];
            }
        }
        Self { xs, ys, second }
    }

    fn eval_segment(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0
    }

    /// Evaluates at `0, 1, ..., len - 1`. Points outside the knot range use the
    /// end cubic pieces.
    pub fn sample_grid(&self, len: usize) -> Vec<f64> {
        let last_seg = self.xs.len() - 2;
        let mut seg = 0;
        (0..len)
            .map(|t| {
                let x = t as f64;
                while seg < last_seg && x > self.xs[seg + 1] {
                    seg += 1;
                }
                self.eval_segment(seg, x)
            })
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last_seg = self.xs.len() - 2;
        let seg = if x <= self.xs[0] {
            0
        } else {
            match self.xs.iter().position(|&k| k >= x) {
                Some(i) => (i - 1).min(last_seg),
                None => last_seg,
            }
        };
        self.eval_segment(seg, x)
    }
}
