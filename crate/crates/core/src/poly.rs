//! Roots of the autoregressive characteristic polynomial
//! `z^p − α₁z^{p−1} − … − α_p`, found with the Aberth–Ehrlich iteration.
//!
//! This is deliberately independent of the eigenvalue route in
//! [`crate::linalg::spectral_radius`]; the two are cross-checked in tests.

use num_complex::Complex64;

use crate::error::{RcarError, Result};

const MAX_ITER: usize = 1_000;

/// Relative residual accepted for a root: `|poly(z)| ≤ RESIDUAL_TOL · Σ|c_k||z|^k`.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Monic coefficients, highest degree first: `[1, −α₁, …, −α_p]`.
fn monic(alpha: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(alpha.iter().map(|a| -a)).collect()
}

fn horner(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut value = Complex64::new(0.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for &ck in c {
        deriv = deriv * z + value;
        value = value * z + ck;
    }
    (value, deriv)
}

fn magnitude_scale(c: &[f64], z: Complex64) -> f64 {
    let r = z.norm();
    c.iter().fold(0.0, |acc, ck| acc * r + ck.abs())
}

/// Residual of `z` against the characteristic polynomial of `alpha`, scaled
/// by the magnitude of the polynomial's terms.
pub fn relative_residual(alpha: &[f64], z: Complex64) -> f64 {
    let c = monic(alpha);
    let (v, _) = horner(&c, z);
    v.norm() / (1.0 + magnitude_scale(&c, z))
}

/// All `p` roots (with multiplicity) of `z^p − α₁z^{p−1} − … − α_p`.
pub fn char_poly_roots(alpha: &[f64]) -> Result<Vec<Complex64>> {
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(RcarError::NonFinite("characteristic polynomial coefficients".into()));
    }
    // trailing zero coefficients contribute exact roots at the origin
    let nonzero_len = alpha.iter().rposition(|a| *a != 0.0).map_or(0, |i| i + 1);
    let mut roots = vec![Complex64::new(0.0, 0.0); alpha.len() - nonzero_len];
    let reduced = &alpha[..nonzero_len];

    match reduced.len() {
        0 => {}
        1 => roots.push(Complex64::new(reduced[0], 0.0)),
        _ => roots.extend(aberth(&monic(reduced))?),
    }

    for z in &roots {
        let res = relative_residual(alpha, *z);
        if !(res <= RESIDUAL_TOL) {
            return Err(RcarError::Solver(format!(
                "root {z} has relative residual {res:e} above {RESIDUAL_TOL:e}"
            )));
        }
    }
    Ok(roots)
}

fn aberth(c: &[f64]) -> Result<Vec<Complex64>> {
    let n = c.len() - 1;
    // Cauchy bound on root moduli
    let bound = 1.0 + c[1..].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let radius = 0.5 * bound;
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + 0.4;
            Complex64::from_polar(radius, theta)
        })
        .collect();

    for _ in 0..MAX_ITER {
        let mut max_step = 0.0_f64;
        for k in 0..n {
            let (v, d) = horner(c, z[k]);
            if v.norm() == 0.0 {
                continue;
            }
            let ratio = v / d;
            let repulsion: Complex64 = (0..n)
                .filter(|&j| j != k)
                .map(|j| {
                    let diff = z[k] - z[j];
                    if diff.norm() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        diff.inv()
                    }
                })
                .sum();
            let denom = Complex64::new(1.0, 0.0) - ratio * repulsion;
            let step = if d.norm() == 0.0 || denom.norm() == 0.0 || !ratio.is_finite() {
                // stationary point of the polynomial: nudge off it
                Complex64::new(1e-8 * (1.0 + z[k].norm()), 1e-8)
            } else {
                ratio / denom
            };
            if !step.is_finite() {
                return Err(RcarError::Solver("Aberth iteration produced a non-finite step".into()));
            }
            z[k] -= step;
            max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
        }
        if max_step < 4.0 * f64::EPSILON {
            break;
        }
    }

    // snap numerically-real roots onto the real axis
    for zk in z.iter_mut() {
        if zk.im.abs() <= 1e-14 * (1.0 + zk.re.abs()) {
            zk.im = 0.0;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<f64> {
        v.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn quadratic_matches_formula() {
        // z² − 0.5z − 0.3
        let disc = (0.25_f64 + 1.2).sqrt();
        let expect = [(0.5 + disc) / 2.0, (0.5 - disc) / 2.0];
        let got = sorted_re(char_poly_roots(&[0.5, 0.3]).unwrap());
        assert!((got[0] - expect[0]).abs() < 1e-13);
        assert!((got[1] - expect[1]).abs() < 1e-13);
        assert!((got[0] - 0.852_079_728_939_614_9).abs() < 1e-12);
    }

    #[test]
    fn unit_root_and_zero_polynomial() {
        assert_eq!(char_poly_roots(&[1.0]).unwrap(), vec![Complex64::new(1.0, 0.0)]);
        assert_eq!(char_poly_roots(&[0.0, 0.0]).unwrap(), vec![Complex64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn complex_pair() {
        // z² + 0.25 → ±0.5i
        let roots = char_poly_roots(&[0.0, -0.25]).unwrap();
        let mut ims: Vec<f64> = roots.iter().map(|z| z.im).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ims[0] + 0.5).abs() < 1e-13 && (ims[1] - 0.5).abs() < 1e-13);
        assert!(roots.iter().all(|z| z.re.abs() < 1e-13));
    }

    #[test]
    fn double_root_passes_residual_check() {
        // (z − 0.25)² = z² − 0.5z + 0.0625
        let roots = char_poly_roots(&[0.5, -0.0625]).unwrap();
        assert_eq!(roots.len(), 2);
        for z in roots {
            assert!((z - 0.25).norm() < 1e-6);
        }
    }

    #[test]
    fn mixed_trailing_zeros() {
        // z³ − 0.5z² = z²(z − 0.5)
        let roots = char_poly_roots(&[0.5, 0.0, 0.0]).unwrap();
        let mut mods: Vec<f64> = roots.iter().map(|z| z.norm()).collect();
        mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(mods, vec![0.0, 0.0, 0.5]);
    }

    #[test]
    fn rejects_nan() {
        assert!(char_poly_roots(&[f64::NAN]).is_err());
    }
}
