//! Independent reference values, computed without the library's solvers:
//! enumeration over atoms, geometric partial sums, the quadratic formula and
//! brute-force Kronecker identities.

use std::f64::consts::PI;
use std::fmt::Write;

use crate::error::{CliError, Result};

pub const REGISTRY: &[(&str, &str)] = &[
    ("two_atom_upsilon0", "υ(0) for atoms {0.2, 0.4}, equal weights, σ² = 1"),
    ("two_atom_moment", "E{a²} for atoms {0.2, 0.4}"),
    ("two_atom_telescoping", "υ(0) − υ(2) = E{σ²} for atoms {0.2, 0.4}"),
    ("ar1_gamma0", "Γ(0) = σ²/(1 − a²) by partial sums; args a=A [sigma2=S]"),
    ("ar1_spectral_zero", "S(0) = σ²/(2π(1 − a)²); args a=A [sigma2=S]"),
    ("roots", "characteristic roots of z^p − α₁z^{p−1} − … − α_p for p ≤ 2; args α₁ [α₂]"),
    ("kron_identity", "vec(AMB') = (B⊗A) vec M on fixed integer 2×2 matrices"),
];

fn keyed(args: &[String], key: &str, default: Option<f64>) -> Result<f64> {
    for a in args {
        if let Some((k, v)) = a.split_once('=') {
            if k == key {
                return v
                    .parse()
                    .map_err(|e| CliError::Config(format!("oracle argument {key}: cannot parse `{v}`: {e}")));
            }
        } else {
            return Err(CliError::Config(format!("oracle argument `{a}` is not KEY=VALUE")));
        }
    }
    default.ok_or_else(|| CliError::Config(format!("oracle needs argument {key}=…")))
}

/// `Σ_{k<n} x^k` until the next term is below `1e-18` of the sum.
fn geometric_partial_sum(x: f64) -> (f64, usize) {
    let mut sum = 0.0_f64;
    let mut term = 1.0_f64;
    let mut n = 0;
    while term.abs() > 1e-18 * sum.abs().max(1.0) && n < 100_000 {
        sum += term;
        term *= x;
        n += 1;
    }
    (sum, n)
}

pub fn cmd_oracle(name: &str, args: &[String]) -> Result<String> {
    let mut out = String::new();
    match name {
        "two_atom_upsilon0" => {
            let a = 1.0 / (1.0 - 0.2 * 0.2);
            let b = 1.0 / (1.0 - 0.4 * 0.4);
            writeln!(out, "two_atom_upsilon0 = ½(1/0.96 + 1/0.84)").unwrap();
            writeln!(out, "  1/0.96 = {a:.17}").unwrap();
            writeln!(out, "  1/0.84 = {b:.17}").unwrap();
            writeln!(out, "  value  = {:.17}", 0.5 * (a + b)).unwrap();
        }
        "two_atom_moment" => {
            writeln!(out, "two_atom_moment = ½(0.2² + 0.4²) = ½(0.04 + 0.16)").unwrap();
            writeln!(out, "  value  = {:.17}", 0.5 * (0.04 + 0.16)).unwrap();
        }
        "two_atom_telescoping" => {
            let ups = |k: i32| 0.5 * (0.2f64.powi(k) / 0.96 + 0.4f64.powi(k) / 0.84);
            writeln!(out, "two_atom_telescoping: υ(u) = ½(0.2^u/0.96 + 0.4^u/0.84)").unwrap();
            writeln!(out, "  υ(0)        = {:.17}", ups(0)).unwrap();
            writeln!(out, "  υ(2)        = {:.17}", ups(2)).unwrap();
            writeln!(out, "  ρ(2)        = {:.17}", ups(2) / ups(0)).unwrap();
            writeln!(out, "  υ(0) − υ(2) = ½(0.96/0.96 + 0.84/0.84) = {:.17}", ups(0) - ups(2)).unwrap();
        }
        "ar1_gamma0" => {
            let a = keyed(args, "a", None)?;
            let s2 = keyed(args, "sigma2", Some(1.0))?;
            if a.abs() >= 1.0 {
                return Err(CliError::Config(format!("ar1_gamma0 needs |a| < 1, got {a}")));
            }
            let (sum, n) = geometric_partial_sum(a * a);
            writeln!(out, "ar1_gamma0 a={a} sigma2={s2}: σ² Σ_k a^(2k)").unwrap();
            writeln!(out, "  partial sum ({n} terms) = {:.17}", s2 * sum).unwrap();
            writeln!(out, "  closed form σ²/(1−a²)   = {:.17}", s2 / (1.0 - a * a)).unwrap();
        }
        "ar1_spectral_zero" => {
            let a = keyed(args, "a", None)?;
            let s2 = keyed(args, "sigma2", Some(1.0))?;
            if a.abs() >= 1.0 {
                return Err(CliError::Config(format!("ar1_spectral_zero needs |a| < 1, got {a}")));
            }
            let (sum, n) = geometric_partial_sum(a);
            writeln!(out, "ar1_spectral_zero a={a} sigma2={s2}: (σ²/2π)(Σ_k a^k)²").unwrap();
            writeln!(out, "  partial sums ({n} terms) = {:.17}", s2 * sum * sum / (2.0 * PI)).unwrap();
            writeln!(out, "  closed form             = {:.17}", s2 / (2.0 * PI * (1.0 - a).powi(2))).unwrap();
        }
        "roots" => {
            let alpha = args
                .iter()
                .map(|a| a.parse::<f64>().map_err(|e| CliError::Config(format!("roots: cannot parse `{a}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            match alpha.as_slice() {
                [a1] => writeln!(out, "roots {a1}: z = {a1:.17}").unwrap(),
                [a1, a2] => {
                    // z² − α₁z − α₂ = 0
                    let disc = a1 * a1 + 4.0 * a2;
                    writeln!(out, "roots {a1} {a2}: z = (α₁ ± √(α₁² + 4α₂))/2, discriminant {disc:.17}").unwrap();
                    if disc >= 0.0 {
                        let r = disc.sqrt();
                        writeln!(out, "  z1 = {:.17}", (a1 + r) / 2.0).unwrap();
                        writeln!(out, "  z2 = {:.17}", (a1 - r) / 2.0).unwrap();
                    } else {
                        let im = (-disc).sqrt() / 2.0;
                        writeln!(out, "  z = {:.17} ± {im:.17}i", a1 / 2.0).unwrap();
                    }
                }
                _ => return Err(CliError::Config("roots takes one or two coefficients".into())),
            }
        }
        "kron_identity" => {
            let a = [[1.0, 2.0], [3.0, 4.0]];
            let m = [[0.0, -1.0], [5.0, 2.0]];
            let b = [[2.0, 0.0], [1.0, -3.0]];
            let mul = |x: &[[f64; 2]; 2], y: &[[f64; 2]; 2]| {
                let mut r = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
                    }
                }
                r
            };
            let bt = [[b[0][0], b[1][0]], [b[0][1], b[1][1]]];
            let lhs = mul(&mul(&a, &m), &bt);
            let vec_lhs = [lhs[0][0], lhs[1][0], lhs[0][1], lhs[1][1]];
            let vec_m = [m[0][0], m[1][0], m[0][1], m[1][1]];
            // (B⊗A)[2i+k][2j+l] = B[i][j]·A[k][l]
            let mut rhs = [0.0; 4];
            for (row, r) in rhs.iter_mut().enumerate() {
                for (col, v) in vec_m.iter().enumerate() {
                    *r += b[row / 2][col / 2] * a[row % 2][col % 2] * v;
                }
            }
            let diff = vec_lhs.iter().zip(&rhs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            writeln!(out, "kron_identity: vec(AMB') = {vec_lhs:?}").unwrap();
            writeln!(out, "               (B⊗A)vecM = {rhs:?}").unwrap();
            writeln!(out, "  max difference = {diff}").unwrap();
        }
        "list" => {
            for (n, d) in REGISTRY {
                writeln!(out, "{n:<22} {d}").unwrap();
            }
        }
        other => {
            let names: Vec<&str> = REGISTRY.iter().map(|(n, _)| *n).collect();
            return Err(CliError::Config(format!(
                "unknown oracle `{other}`; available: {}",
                names.join(", ")
            )));
        }
    }
    Ok(out)
}
