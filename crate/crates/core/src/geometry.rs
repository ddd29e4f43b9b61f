//! Quadratic disparity shapes, the occlusion shift `Δθ`, the composed
//! disparity map and predicted occlusions.

use crate::grid::{Mask, ScalarField};

/// Number of basis functions in `U(x, y) = {x², xy, y², x, y, 1}`.
pub const BASIS_LEN: usize = 6;

/// Affine map from pixel coordinates to the frame the basis is evaluated in:
/// `x' = (x - x0) / sx`, `y' = (y - y0) / sy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordFrame {
    pub x0: f64,
    pub y0: f64,
    pub sx: f64,
    pub sy: f64,
}

impl CoordFrame {
    pub const IDENTITY: CoordFrame = CoordFrame {
        x0: 0.0,
        y0: 0.0,
        sx: 1.0,
        sy: 1.0,
    };

    /// Maps the pixel grid of a `width x height` field onto `[-1, 1]²`.
    pub fn normalized(width: usize, height: usize) -> Self {
        let hx = ((width.max(2) - 1) as f64) / 2.0;
        let hy = ((height.max(2) - 1) as f64) / 2.0;
        Self {
            x0: (width as f64 - 1.0) / 2.0,
            y0: (height as f64 - 1.0) / 2.0,
            sx: hx,
            sy: hy,
        }
    }

    #[inline]
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) / self.sx, (y - self.y0) / self.sy)
    }
}

/// Basis vector at pixel `(x, y)` in `frame`.
#[inline]
pub fn basis(frame: &CoordFrame, x: f64, y: f64) -> [f64; BASIS_LEN] {
    let (u, v) = frame.map(x, y);
    [u * u, u * v, v * v, u, v, 1.0]
}

/// Global disparity shape `Θ(x, y) = Σ coeffs[i] · U_i(x', y')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeModel {
    pub coeffs: [f64; BASIS_LEN],
    pub frame: CoordFrame,
}

impl ShapeModel {
    pub fn new(coeffs: [f64; BASIS_LEN], frame: CoordFrame) -> Self {
        Self { coeffs, frame }
    }

    pub fn constant(value: f64, frame: CoordFrame) -> Self {
        Self {
            coeffs: [0.0, 0.0, 0.0, 0.0, 0.0, value],
            frame,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let u = basis(&self.frame, x, y);
        self.coeffs.iter().zip(u.iter()).map(|(c, b)| c * b).sum()
    }

    /// Evaluation clamped to `[0, d_max]`, for cost-volume lookups.
    #[inline]
    pub fn eval_clamped(&self, x: f64, y: f64, d_max: usize) -> f64 {
        self.eval(x, y).clamp(0.0, d_max as f64)
    }

    /// Samples the shape on every pixel of a `width x height` grid.
    pub fn render(&self, width: usize, height: usize) -> ScalarField {
        ScalarField::from_fn(width, height, |x, y| self.eval(x as f64, y as f64))
    }

    pub fn render_clamped(&self, width: usize, height: usize, d_max: usize) -> ScalarField {
        ScalarField::from_fn(width, height, |x, y| self.eval_clamped(x as f64, y as f64, d_max))
    }

    /// Re-expresses the same polynomial in another frame (exact substitution).
    pub fn reframe(&self, target: CoordFrame) -> ShapeModel {
        // x' = p + q X, y' = r + t Y where (X, Y) are target-frame coordinates.
        let q = target.sx / self.frame.sx;
        let p = (target.x0 - self.frame.x0) / self.frame.sx;
        let t = target.sy / self.frame.sy;
        let r = (target.y0 - self.frame.y0) / self.frame.sy;
        let [c0, c1, c2, c3, c4, c5] = self.coeffs;
        ShapeModel {
            coeffs: [
                c0 * q * q,
                c1 * q * t,
                c2 * t * t,
                2.0 * c0 * p * q + c1 * q * r + c3 * q,
                c1 * p * t + 2.0 * c2 * r * t + c4 * t,
                c0 * p * p + c1 * p * r + c2 * r * r + c3 * p + c4 * r + c5,
            ],
            frame: target,
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Δθ = sign(∂φ/∂x) · max(0, Θ₁ − Θ₂)`, with both shapes clamped to
/// `[0, d_max]`, `∂φ/∂x` by central differences and `sign(0) = 0`.
pub fn compute_delta_theta(theta1: &ShapeModel, theta2: &ShapeModel, phi: &ScalarField, d_max: usize) -> ScalarField {
    ScalarField::par_from_fn(phi.width(), phi.height(), |x, y| {
        let s = sign(phi.dx(x, y));
        if s == 0.0 {
            return 0.0;
        }
        let (xf, yf) = (x as f64, y as f64);
        let jump = theta1.eval_clamped(xf, yf, d_max) - theta2.eval_clamped(xf, yf, d_max);
        s * jump.max(0.0)
    })
}

/// `D = H(φ)Θ₁ + (1 − H(φ))Θ₂` with the exact Heaviside, `H(0) = 0`,
/// clamped to `[0, d_max]`.
pub fn compose_disparity(theta1: &ShapeModel, theta2: &ShapeModel, phi: &ScalarField, d_max: usize) -> ScalarField {
    ScalarField::par_from_fn(phi.width(), phi.height(), |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        if phi[(x, y)] > 0.0 {
            theta1.eval_clamped(xf, yf, d_max)
        } else {
            theta2.eval_clamped(xf, yf, d_max)
        }
    })
}

/// Occluded pixels: `φ(x, y) < 0` and `φ(x + Δθ, y) > 0`, with `φ` linearly
/// interpolated along the scanline and replicate-padded.
pub fn predict_occlusion(phi: &ScalarField, delta_theta: &ScalarField) -> Mask {
    assert!(phi.same_shape(delta_theta), "phi and delta_theta differ in shape");
    Mask::par_from_fn(phi.width(), phi.height(), |x, y| {
        phi[(x, y)] < 0.0 && phi.sample_x(x as f64 + delta_theta[(x, y)], y) > 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basis_terms() {
        let c = ShapeModel::constant(4.5, CoordFrame::IDENTITY);
        assert_eq!(c.eval(13.0, -2.0), 4.5);
        let lin = ShapeModel::new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0], CoordFrame::IDENTITY);
        assert_eq!(lin.eval(7.25, 3.0), 7.25);
        let sq = ShapeModel::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], CoordFrame::IDENTITY);
        assert_eq!(sq.eval(3.0, 7.0), 9.0);
    }

    fn phi_ramp(w: usize, h: usize, c: f64) -> ScalarField {
        ScalarField::from_fn(w, h, |x, _| x as f64 - c)
    }

    #[test]
    fn delta_theta_cases() {
        let f = CoordFrame::IDENTITY;
        let phi = phi_ramp(20, 3, 10.0);
        let dt = compute_delta_theta(&ShapeModel::constant(10.0, f), &ShapeModel::constant(4.0, f), &phi, 32);
        assert!(dt.iter().all(|&v| v == 6.0));
        let dt = compute_delta_theta(&ShapeModel::constant(4.0, f), &ShapeModel::constant(10.0, f), &phi, 32);
        assert!(dt.iter().all(|&v| v == 0.0));
        let flat = ScalarField::from_fn(20, 3, |_, y| y as f64 - 1.0);
        let dt = compute_delta_theta(&ShapeModel::constant(10.0, f), &ShapeModel::constant(4.0, f), &flat, 32);
        assert!(dt.iter().all(|&v| v == 0.0));
        // decreasing phi flips the sign
        let neg = phi.map(|v| -v);
        let dt = compute_delta_theta(&ShapeModel::constant(10.0, f), &ShapeModel::constant(4.0, f), &neg, 32);
        assert!(dt.iter().all(|&v| v == -6.0));
    }

    #[test]
    fn delta_theta_is_bounded_by_clamped_jump() {
        let f = CoordFrame::IDENTITY;
        let phi = phi_ramp(12, 2, 5.0);
        let dt = compute_delta_theta(&ShapeModel::constant(80.0, f), &ShapeModel::constant(-3.0, f), &phi, 16);
        assert!(dt.iter().all(|&v| v == 16.0));
    }

    #[test]
    fn compose_cases() {
        let f = CoordFrame::IDENTITY;
        let (a, b) = (ShapeModel::constant(12.0, f), ShapeModel::constant(3.0, f));
        let fg = ScalarField::filled(8, 4, 2.0);
        assert!(compose_disparity(&a, &b, &fg, 20).iter().all(|&v| v == 12.0));
        let bg = ScalarField::filled(8, 4, -2.0);
        assert!(compose_disparity(&a, &b, &bg, 20).iter().all(|&v| v == 3.0));
        let split = phi_ramp(8, 4, 4.0);
        let d = compose_disparity(&a, &b, &split, 20);
        for x in 0..8 {
            let expect = if x > 4 { 12.0 } else { 3.0 };
            assert_eq!(d[(x, 2)], expect, "x = {x}");
        }
    }

    #[test]
    fn occlusion_on_a_linear_boundary() {
        let phi = phi_ramp(100, 1, 50.0);
        let zero = ScalarField::filled(100, 1, 0.0);
        assert_eq!(predict_occlusion(&phi, &zero).count(), 0);
        let shift = ScalarField::filled(100, 1, 6.0);
        let mask = predict_occlusion(&phi, &shift);
        let hits: Vec<usize> = (0..100).filter(|&x| mask[(x, 0)]).collect();
        // strict inequalities: x = 44 lands exactly on the zero level
        assert_eq!(hits, (45..=49).collect::<Vec<_>>());
        let phi = phi_ramp(100, 1, 50.5);
        let mask = predict_occlusion(&phi, &shift);
        let hits: Vec<usize> = (0..100).filter(|&x| mask[(x, 0)]).collect();
        assert_eq!(hits, (45..=50).collect::<Vec<_>>());
    }

    #[test]
    fn no_occlusion_when_background_is_nearer() {
        let f = CoordFrame::IDENTITY;
        let phi = ScalarField::from_fn(40, 10, |x, y| {
            8.0 - ((x as f64 - 20.0).powi(2) + (y as f64 - 5.0).powi(2)).sqrt()
        });
        let dt = compute_delta_theta(&ShapeModel::constant(3.0, f), &ShapeModel::constant(9.0, f), &phi, 16);
        assert_eq!(predict_occlusion(&phi, &dt).count(), 0);
    }

    proptest! {
        #[test]
        fn reframing_preserves_evaluations(
            coeffs in prop::array::uniform6(-5.0f64..5.0),
            x in 0.0f64..500.0,
            y in 0.0f64..400.0,
        ) {
            let norm = CoordFrame::normalized(500, 400);
            let shape = ShapeModel::new(coeffs, norm);
            let pixel = shape.reframe(CoordFrame::IDENTITY);
            let back = pixel.reframe(norm);
            let a = shape.eval(x, y);
            let b = pixel.eval(x, y);
            let scale = a.abs().max(1.0);
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{} vs {}", a, b);
            for (c0, c1) in coeffs.iter().zip(back.coeffs.iter()) {
                prop_assert!((c0 - c1).abs() <= 1e-9 * c0.abs().max(1.0));
            }
        }

        #[test]
        fn composition_is_piecewise_polynomial(
            coeffs in prop::array::uniform6(-2.0f64..2.0),
            c in 5.0f64..25.0,
        ) {
            let frame = CoordFrame::normalized(32, 8);
            let mut coeffs = coeffs;
            coeffs[5] = 20.0;
            let fg = ShapeModel::new(coeffs, frame);
            let bg = ShapeModel::constant(1.0, frame);
            let phi = phi_ramp(32, 8, c);
            let d = compose_disparity(&fg, &bg, &phi, 1000);
            // D is quadratic in x on each side: constant second differences
            let y = 3;
            let boundary = c.floor() as usize;
            let second = |x: usize| d[(x + 1, y)] - 2.0 * d[(x, y)] + d[(x - 1, y)];
            let fg_second = 2.0 * coeffs[0] / (frame.sx * frame.sx);
            for x in (boundary + 2)..31 {
                prop_assert!((second(x) - fg_second).abs() < 1e-9);
            }
            for x in 1..boundary.saturating_sub(1) {
                prop_assert!(second(x).abs() < 1e-12);
            }
        }
    }
}
