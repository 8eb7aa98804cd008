use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Uniform knot grid shared by every edge function of a KAN head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KanGrid {
    pub min: f64,
    pub max: f64,
    pub knots: usize,
}

impl Default for KanGrid {
    fn default() -> Self {
        KanGrid {
            min: -0.25,
            max: 1.25,
            knots: 8,
        }
    }
}

impl KanGrid {
    pub fn validate(&self) -> Result<()> {
        if self.knots < 2 {
            return Err(Error::Argument(format!("KAN grid needs >= 2 knots, got {}", self.knots)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.max > self.min) {
            return Err(Error::Argument(format!(
                "KAN grid range [{}, {}] is invalid",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.knots - 1) as f64
    }

    pub fn knot(&self, m: usize) -> f64 {
        if m + 1 == self.knots {
            self.max
        } else {
            self.min + m as f64 * self.spacing()
        }
    }

    /// Left knot of the cell holding `x` after clamping, the interpolation
    /// weight toward the right knot, and whether `x` was strictly outside
    /// the grid.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let clamped = x < self.min || x > self.max;
        let xc = x.clamp(self.min, self.max);
        let h = self.spacing();
        let cell = (((xc - self.min) / h).floor() as usize).min(self.knots - 2);
        let t = ((xc - self.knot(cell)) / h).clamp(0.0, 1.0);
        (cell, t, clamped)
    }
}

/// Degree-1 hat functions centred on each knot, evaluated at `x` clamped to
/// the grid.
pub fn triangular_basis(x: f64, grid: &KanGrid) -> Vec<f64> {
    let mut b = vec![0.0; grid.knots];
    let (m, t, _) = grid.locate(x);
    b[m] = 1.0 - t;
    b[m + 1] += t;
    b
}

/// Single KAN layer: `logit_o = s_o · Σ_i Σ_m c[i][o][m] · B_m(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KanHead {
    grid: KanGrid,
    n_in: usize,
    n_out: usize,
    /// Flattened `[i][o][m]`.
    coeffs: Vec<f64>,
    scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanGrads {
    pub coeffs: Vec<f64>,
    pub scale: Vec<f64>,
    pub input: Matrix,
}

impl KanHead {
    pub fn new(
        n_in: usize,
        n_out: usize,
        grid: KanGrid,
        coeffs: Vec<f64>,
        scale: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if coeffs.len() != n_in * n_out * grid.knots || scale.len() != n_out {
            return Err(Error::Shape(format!(
                "KAN head {n_in}x{n_out}x{} needs {} coefficients and {n_out} scales, got {} and {}",
                grid.knots,
                n_in * n_out * grid.knots,
                coeffs.len(),
                scale.len()
            )));
        }
        Ok(KanHead {
            grid,
            n_in,
            n_out,
            coeffs,
            scale,
        })
    }

    /// Coefficients ~ Normal(0, variance 0.1²/√M), unit scales.
    pub fn init(n_in: usize, n_out: usize, grid: KanGrid, rng: &mut Rng) -> Result<Self> {
        grid.validate()?;
        let std = 0.1 / (grid.knots as f64).powf(0.25);
        let coeffs = (0..n_in * n_out * grid.knots)
            .map(|_| rng.normal(0.0, std))
            .collect();
        KanHead::new(n_in, n_out, grid, coeffs, vec![1.0; n_out])
    }

    pub fn grid(&self) -> &KanGrid {
        &self.grid
    }

    pub fn n_inputs(&self) -> usize {
        self.n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn scale_mut(&mut self) -> &mut [f64] {
        &mut self.scale
    }

    fn offset(&self, i: usize, o: usize) -> usize {
        (i * self.n_out + o) * self.grid.knots
    }

    /// Unscaled edge function `φ_{i,o}(x)`.
    pub fn edge(&self, i: usize, o: usize, x: f64) -> f64 {
        let (m, t, _) = self.grid.locate(x);
        let c = &self.coeffs[self.offset(i, o)..];
        c[m] * (1.0 - t) + c[m + 1] * t
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.n_in {
            return Err(Error::Shape(format!(
                "KAN head expects {} concepts, got {}",
                self.n_in,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut out = Matrix::zeros(x.rows(), self.n_out);
        for r in 0..x.rows() {
            let row = x.row(r);
            for o in 0..self.n_out {
                let sum: f64 = row.iter().enumerate().map(|(i, &v)| self.edge(i, o, v)).sum();
                out[(r, o)] = self.scale[o] * sum;
            }
        }
        Ok(out)
    }

    /// `contributions[i][o] = s_o · φ_{i,o}(x_i)` for one concept vector.
    pub fn contributions(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.n_in {
            return Err(Error::Shape(format!(
                "KAN head expects {} concepts, got {}",
                self.n_in,
                x.len()
            )));
        }
        let mut out = Matrix::zeros(self.n_in, self.n_out);
        for (i, &v) in x.iter().enumerate() {
            for o in 0..self.n_out {
                out[(i, o)] = self.scale[o] * self.edge(i, o, v);
            }
        }
        Ok(out)
    }

    /// Gradients of `Σ d_logits ⊙ logits`. The input gradient is zero where
    /// the input was clamped; at knots the right-cell slope is used.
    pub fn backward(&self, x: &Matrix, d_logits: &Matrix) -> Result<KanGrads> {
        self.check_width(x)?;
        if d_logits.shape() != (x.rows(), self.n_out) {
            return Err(Error::Shape("KAN backward: upstream gradient shape".into()));
        }
        let h = self.grid.spacing();
        let mut coeffs = vec![0.0; self.coeffs.len()];
        let mut scale = vec![0.0; self.n_out];
        let mut input = Matrix::zeros(x.rows(), self.n_in);
        for r in 0..x.rows() {
            let g = d_logits.row(r);
            for i in 0..self.n_in {
                let (m, t, clamped) = self.grid.locate(x[(r, i)]);
                let mut dx = 0.0;
                for o in 0..self.n_out {
                    let off = self.offset(i, o);
                    let c0 = self.coeffs[off + m];
                    let c1 = self.coeffs[off + m + 1];
                    let sg = self.scale[o] * g[o];
                    coeffs[off + m] += sg * (1.0 - t);
                    coeffs[off + m + 1] += sg * t;
                    scale[o] += g[o] * (c0 * (1.0 - t) + c1 * t);
                    dx += sg * (c1 - c0) / h;
                }
                if !clamped {
                    input[(r, i)] = dx;
                }
            }
        }
        Ok(KanGrads {
            coeffs,
            scale,
            input,
        })
    }

    /// `n_points` samples of `x ↦ s_o · φ_{i,o}(x)` spread uniformly over the grid.
    pub fn response_curve(&self, i: usize, o: usize, n_points: usize) -> Result<Vec<(f64, f64)>> {
        if i >= self.n_in || o >= self.n_out {
            return Err(Error::Argument(format!(
                "response curve ({i}, {o}) outside {}x{} head",
                self.n_in, self.n_out
            )));
        }
        if n_points < 2 {
            return Err(Error::Argument("response curve needs >= 2 points".into()));
        }
        let step = (self.grid.max - self.grid.min) / (n_points - 1) as f64;
        Ok((0..n_points)
            .map(|p| {
                let x = if p + 1 == n_points {
                    self.grid.max
                } else {
                    self.grid.min + p as f64 * step
                };
                (x, self.scale[o] * self.edge(i, o, x))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Rng};
    use proptest::prelude::{prop_assert, proptest};

    fn three_knots() -> KanGrid {
        KanGrid {
            min: 0.0,
            max: 1.0,
            knots: 3,
        }
    }

    fn tent_head() -> KanHead {
        KanHead::new(1, 1, three_knots(), vec![0.0, 2.0, 0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn basis_examples() {
        let g = three_knots();
        assert_eq!(triangular_basis(0.5, &g), vec![0.0, 1.0, 0.0]);
        assert_eq!(triangular_basis(0.25, &g), vec![0.5, 0.5, 0.0]);
        assert_eq!(triangular_basis(1.7, &g), vec![0.0, 0.0, 1.0]);
        assert_eq!(triangular_basis(-3.0, &g), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_examples() {
        let head = tent_head();
        let x = Matrix::from_rows(&[[0.5], [0.25]]).unwrap();
        assert_eq!(head.forward(&x).unwrap().as_slice(), &[2.0, 1.0]);

        let mut doubled = head.clone();
        doubled.scale_mut()[0] = 2.0;
        assert_eq!(doubled.forward(&x).unwrap().as_slice(), &[4.0, 2.0]);

        let zero = KanHead::new(2, 3, KanGrid::default(), vec![0.0; 48], vec![1.0; 3]).unwrap();
        let z = zero.forward(&Matrix::from_rows(&[[0.3, 0.9]]).unwrap()).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubling_one_scale_touches_one_logit() {
        let mut rng = Rng::new(2);
        let head = KanHead::init(4, 3, KanGrid::default(), &mut rng).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.4, 0.8, 1.1]]).unwrap();
        let base = head.forward(&x).unwrap();
        let mut h2 = head.clone();
        h2.scale_mut()[1] *= 2.0;
        let out = h2.forward(&x).unwrap();
        assert_eq!(out[(0, 0)], base[(0, 0)]);
        assert_eq!(out[(0, 1)], 2.0 * base[(0, 1)]);
        assert_eq!(out[(0, 2)], base[(0, 2)]);
    }

    #[test]
    fn tent_response_curve() {
        let head = tent_head();
        let curve = head.response_curve(0, 0, 5).unwrap();
        let expect = [(0.0, 0.0), (0.25, 1.0), (0.5, 2.0), (0.75, 1.0), (1.0, 0.0)];
        for ((x, v), (ex, ev)) in curve.iter().zip(expect) {
            assert!((x - ex).abs() < 1e-15 && (v - ev).abs() < 1e-15);
        }
        let zero = KanHead::new(1, 1, three_knots(), vec![0.0; 3], vec![1.0]).unwrap();
        assert!(zero.response_curve(0, 0, 11).unwrap().iter().all(|p| p.1 == 0.0));
        assert!(head.response_curve(1, 0, 5).is_err());
    }

    fn away_from_knots(rng: &mut Rng, grid: &KanGrid) -> f64 {
        let h = grid.spacing();
        loop {
            let x = rng.uniform_range(grid.min - 0.1, grid.max + 0.1);
            let frac = ((x - grid.min) / h).fract().abs();
            if frac > 1e-3 && frac < 1.0 - 1e-3 && (x - grid.min).abs() > 1e-3 * h && (x - grid.max).abs() > 1e-3 * h {
                return x;
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(23);
        let grid = KanGrid::default();
        for trial in 0..20 {
            let mut head = KanHead::init(5, 3, grid, &mut rng).unwrap();
            for s in head.scale_mut() {
                *s = rng.uniform_range(0.5, 1.5);
            }
            let x = Matrix::from_vec(6, 5, (0..30).map(|_| away_from_knots(&mut rng, &grid)).collect())
                .unwrap();
            let up = Matrix::from_vec(6, 3, (0..18).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
            let objective = |h: &KanHead, x: &Matrix| -> f64 {
                let out = h.forward(x).unwrap();
                out.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
            };
            let grads = head.backward(&x, &up).unwrap();

            let mut params: Vec<f64> = head.coeffs().to_vec();
            params.extend_from_slice(head.scale());
            let nc = head.coeffs().len();
            let numeric = finite_diff_grad(
                |p| {
                    let mut h = head.clone();
                    h.coeffs_mut().copy_from_slice(&p[..nc]);
                    h.scale_mut().copy_from_slice(&p[nc..]);
                    objective(&h, &x)
                },
                &params,
                1e-5,
            )
            .unwrap();
            let analytic: Vec<f64> = grads.coeffs.iter().chain(&grads.scale).copied().collect();
            assert!(relative_error(&analytic, &numeric, 1e-12) < 1e-4, "trial {trial}");

            let numeric_x = finite_diff_grad(
                |p| objective(&head, &Matrix::from_vec(6, 5, p.to_vec()).unwrap()),
                x.as_slice(),
                1e-5,
            )
            .unwrap();
            assert!(relative_error(grads.input.as_slice(), &numeric_x, 1e-12) < 1e-4);
        }
    }

    #[test]
    fn clamped_inputs_get_zero_gradient_and_coeff_gradient_is_basis() {
        let mut rng = Rng::new(1);
        let head = KanHead::init(2, 2, KanGrid::default(), &mut rng).unwrap();
        let x = Matrix::from_rows(&[[-1.0, 0.37]]).unwrap();
        let up = Matrix::from_rows(&[[0.7, -1.3]]).unwrap();
        let g = head.backward(&x, &up).unwrap();
        assert_eq!(g.input[(0, 0)], 0.0);
        assert_ne!(g.input[(0, 1)], 0.0);
        let basis = triangular_basis(0.37, head.grid());
        for o in 0..2 {
            for (m, b) in basis.iter().enumerate() {
                let idx = (2 + o) * 8 + m;
                assert_eq!(g.coeffs[idx], head.scale()[o] * b * up[(0, o)]);
            }
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in -2.0f64..3.0, knots in 2usize..20) {
            let grid = KanGrid { min: -0.25, max: 1.25, knots };
            let s: f64 = triangular_basis(x, &grid).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn additive_across_inputs(seed in 0u64..500, i in 0usize..4, a in -0.5f64..1.5, b in -0.5f64..1.5) {
            let mut rng = Rng::new(seed);
            let head = KanHead::init(4, 3, KanGrid::default(), &mut rng).unwrap();
            let mut base: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            base[i] = a;
            let mut other = base.clone();
            other[i] = b;
            let out = head.forward(&Matrix::from_rows(&[base, other]).unwrap()).unwrap();
            for o in 0..3 {
                let expect = head.scale()[o] * (head.edge(i, o, a) - head.edge(i, o, b));
                prop_assert!((out[(0, o)] - out[(1, o)] - expect).abs() < 1e-10);
            }
        }

        #[test]
        fn affine_within_a_cell(seed in 0u64..500, cell in 0usize..7, t0 in 0.01f64..0.3, t1 in 0.35f64..0.6, t2 in 0.65f64..0.99) {
            let mut rng = Rng::new(seed);
            let grid = KanGrid::default();
            let head = KanHead::init(3, 2, grid, &mut rng).unwrap();
            let rest = [rng.uniform(), rng.uniform()];
            let pts: Vec<f64> = [t0, t1, t2].iter().map(|t| grid.knot(cell) + t * grid.spacing()).collect();
            let rows: Vec<[f64; 3]> = pts.iter().map(|&p| [rest[0], p, rest[1]]).collect();
            let out = head.forward(&Matrix::from_rows(&rows).unwrap()).unwrap();
            for o in 0..2 {
                let slope = (out[(1, o)] - out[(0, o)]) / (pts[1] - pts[0]);
                let predicted = out[(1, o)] + slope * (pts[2] - pts[1]);
                prop_assert!((predicted - out[(2, o)]).abs() < 1e-10);
            }
        }
    }
}
