//! Uniform grids, finite-difference stencils, quadrature and interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_POINTS: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    q_min: f64,
    q_max: f64,
    n_points: usize,
}

impl Grid {
    pub fn new(q_min: f64, q_max: f64, n_points: usize) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        if !(q_min.is_finite() && q_max.is_finite() && q_max > q_min) {
            return Err(Error::InvalidGrid(format!(
                "bad interval [{q_min}, {q_max}]"
            )));
        }
        Ok(Self {
            q_min,
            q_max,
            n_points,
        })
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_points - 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.q_max
        } else {
            self.q_min + i as f64 * self.spacing()
        }
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.q(i)).collect()
    }

    pub fn nearest_index(&self, q: f64) -> usize {
        let x = ((q - self.q_min) / self.spacing()).round();
        x.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    pub fn midpoint_index(&self) -> usize {
        self.n_points / 2
    }

    /// Same interval with twice the resolution (`2n - 1` points).
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        let slack = 1e-12 * (1.0 + q.abs());
        q >= self.q_min - slack && q <= self.q_max + slack
    }
}

/// First derivative, fourth order: five-point central stencil in the
/// interior, five-point one-sided stencils on the two outermost nodes.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 5, "fourth-order stencils need five points");
    let f = values;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
    d[n - 1] = (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4]
        + 3.0 * f[n - 5])
        / (12.0 * h);
    d[n - 2] = (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5])
        / (12.0 * h);
    d
}

/// Second derivative, fourth order; six-point one-sided stencils at the edges.
pub fn second_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 6, "fourth-order second derivative needs six points");
    let f = values;
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] =
            (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * h2);
    }
    let edge0 = |g: &dyn Fn(usize) -> f64| {
        (45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5))
            / (12.0 * h2)
    };
    let edge1 = |g: &dyn Fn(usize) -> f64| {
        (10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5)) / (12.0 * h2)
    };
    let fwd = |k: usize| f[k];
    let bwd = |k: usize| f[n - 1 - k];
    d[0] = edge0(&fwd);
    d[1] = edge1(&fwd);
    d[n - 1] = edge0(&bwd);
    d[n - 2] = edge1(&bwd);
    d
}

/// Composite Simpson rule over the whole grid. An even number of points is
/// handled by closing the last interval with a cubic (3/8) panel.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ if n % 2 == 1 => {
            let mut s = values[0] + values[n - 1];
            for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0
        }
        _ => {
            let head = simpson(&values[..n - 3], h);
            let t = &values[n - 4..];
            head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
        }
    }
}

/// Running integral `F(q_i) = int_{q_anchor}^{q_i} f dq`, fourth order. Each
/// panel uses the cubic through its four nearest nodes.
pub fn cumulative_integral(values: &[f64], h: f64, anchor: usize) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 4 && anchor < n);
    let f = values;
    let panel = |i: usize| -> f64 {
        // integral over [q_i, q_{i+1}]
        if i == 0 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i + 2 >= n {
            h / 24.0 * (9.0 * f[i + 1] + 19.0 * f[i] - 5.0 * f[i - 1] + f[i - 2])
        } else {
            h / 24.0 * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        }
    };
    let mut out = vec![0.0; n];
    for i in anchor..n - 1 {
        out[i + 1] = out[i] + panel(i);
    }
    for i in (0..anchor).rev() {
        out[i] = out[i + 1] - panel(i);
    }
    out
}

/// Cubic Lagrange interpolation on the four nodes surrounding `q`.
pub fn interpolate(grid: &Grid, values: &[f64], q: f64) -> f64 {
    let n = grid.len();
    let h = grid.spacing();
    let x = ((q - grid.q_min()) / h).clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let start = i.saturating_sub(1).min(n - 4);
    let s = x - start as f64;
    let mut acc = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (s - b as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * values[start + a];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        assert!((g.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(g.q(10), 1.0);
        assert_eq!(g.nearest_index(0.46), 5);
        assert_eq!(g.refined().len(), 21);
        assert!(Grid::new(0.0, 1.0, 2).is_err());
        assert!(Grid::new(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn stencils_are_fourth_order_on_polynomials() {
        let g = Grid::new(-1.0, 2.0, 31).unwrap();
        let q = g.positions();
        let f: Vec<f64> = q.iter().map(|x| x.powi(4) - 2.0 * x.powi(3) + x).collect();
        let d = derivative(&f, g.spacing());
        let d2 = second_derivative(&f, g.spacing());
        for (i, x) in q.iter().enumerate() {
            let exact = 4.0 * x.powi(3) - 6.0 * x * x + 1.0;
            let exact2 = 12.0 * x * x - 12.0 * x;
            assert!((d[i] - exact).abs() < 1e-10, "d at {x}");
            assert!((d2[i] - exact2).abs() < 1e-8, "d2 at {x}");
        }
    }

    #[test]
    fn simpson_and_cumulative() {
        for n in [101, 100] {
            let g = Grid::new(0.0, std::f64::consts::PI, n).unwrap();
            let f: Vec<f64> = g.positions().iter().map(|x| x.sin()).collect();
            assert!((simpson(&f, g.spacing()) - 2.0).abs() < 1e-7);
        }
        let g = Grid::new(0.0, 2.0, 201).unwrap();
        let f: Vec<f64> = g.positions().iter().map(|x| x.cos()).collect();
        let c = cumulative_integral(&f, g.spacing(), 50);
        for (i, x) in g.positions().iter().enumerate() {
            assert!((c[i] - (x.sin() - g.q(50).sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_matches_cubics() {
        let g = Grid::new(0.0, 1.0, 21).unwrap();
        let f: Vec<f64> = g.positions().iter().map(|x| 3.0 * x.powi(3) - x).collect();
        for q in [0.0, 0.013, 0.5, 0.77, 0.999, 1.0] {
            assert!((interpolate(&g, &f, q) - (3.0 * q.powi(3) - q)).abs() < 1e-13);
        }
    }
}
