//! Browser bindings for the `www/` demo page.
//!
//! Laws are passed as flat arrays: `coefficients` holds the atoms back to back
//! (`k · p` numbers) and `weights` their probabilities. The plain functions in
//! [`demo`] do the work and are what the native tests exercise; the exported
//! wrappers only convert errors into JavaScript exceptions.

use wasm_bindgen::prelude::*;

pub mod demo {
    use rcar::model::{
        is_second_order_stationary, omega_matrix, AtomSet, CoefficientDistribution, ExpectationMode, ModelSpec,
        NoiseSpec, DEFAULT_BOUNDARY_TOL,
    };
    use rcar::moments::{spectral_density, spectral_existence_check, upsilon_closed_form, SeriesOptions};
    use rcar::simulate::{simulate_panel, SimulationOptions};

    pub const MAX_INDIVIDUALS: usize = 200;
    pub const MAX_HORIZON: usize = 2000;

    fn law(coefficients: &[f64], weights: &[f64], p: usize) -> Result<CoefficientDistribution, String> {
        if p == 0 || coefficients.len() != p * weights.len() {
            return Err(format!(
                "{} coefficients do not split into {} atoms of order {p}",
                coefficients.len(),
                weights.len()
            ));
        }
        let atoms = coefficients.chunks(p).map(<[f64]>::to_vec).collect();
        CoefficientDistribution::discrete(atoms, weights.to_vec()).map_err(|e| e.to_string())
    }

    fn stationary_atoms(law: &CoefficientDistribution) -> Result<AtomSet, String> {
        let verdict =
            is_second_order_stationary(law, DEFAULT_BOUNDARY_TOL, ExpectationMode::Exact).map_err(|e| e.to_string())?;
        if !verdict.stationary {
            return Err(format!(
                "law is not second-order stationary (ρ(E[A⊗A]) = {:.4}, largest atom radius {:.4})",
                verdict.mean_kron_radius, verdict.max_atom_radius
            ));
        }
        AtomSet::resolve(law, ExpectationMode::Exact, DEFAULT_BOUNDARY_TOL).map_err(|e| e.to_string())
    }

    /// One-line stationarity verdict for display.
    pub fn verdict(coefficients: &[f64], weights: &[f64], p: usize) -> Result<String, String> {
        let law = law(coefficients, weights, p)?;
        let v = is_second_order_stationary(&law, DEFAULT_BOUNDARY_TOL, ExpectationMode::Exact)
            .map_err(|e| e.to_string())?;
        Ok(format!(
            "{}: ρ(E[A⊗A]) = {:.6}, largest atom radius = {:.6}",
            if v.stationary { "stationary" } else { "nonstationary" },
            v.mean_kron_radius,
            v.max_atom_radius
        ))
    }

    /// `Υ(u)[0, 0]` for `u = 0..=max_lag`.
    pub fn autocovariance(
        coefficients: &[f64],
        weights: &[f64],
        p: usize,
        sigma2: f64,
        max_lag: usize,
    ) -> Result<Vec<f64>, String> {
        let atoms = stationary_atoms(&law(coefficients, weights, p)?)?;
        let omega = omega_matrix(p, sigma2);
        (0..=max_lag)
            .map(|u| upsilon_closed_form(&atoms, &omega, u).map(|m| m[(0, 0)]).map_err(|e| e.to_string()))
            .collect()
    }

    /// `Re S(λ)[0, 0]` on `points` equally spaced frequencies in `[0, π]`.
    pub fn spectrum(
        coefficients: &[f64],
        weights: &[f64],
        p: usize,
        sigma2: f64,
        points: usize,
    ) -> Result<Vec<f64>, String> {
        if points < 2 {
            return Err("need at least two frequencies".into());
        }
        let atoms = stationary_atoms(&law(coefficients, weights, p)?)?;
        let existence = spectral_existence_check(&atoms, DEFAULT_BOUNDARY_TOL).map_err(|e| e.to_string())?;
        if !existence.exists {
            return Err("spectral density does not exist for this law".into());
        }
        let omega = omega_matrix(p, sigma2);
        let opts = SeriesOptions::default();
        (0..points)
            .map(|k| {
                let lambda = std::f64::consts::PI * k as f64 / (points - 1) as f64;
                spectral_density(&atoms, &omega, lambda, &opts)
                    .map(|s| s.value[(0, 0)].re)
                    .map_err(|e| e.to_string())
            })
            .collect()
    }

    /// Paths of the first `individuals` draws, concatenated; each has `horizon + 1` points.
    pub fn paths(
        coefficients: &[f64],
        weights: &[f64],
        p: usize,
        sigma2: f64,
        individuals: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<Vec<f64>, String> {
        if individuals == 0 || individuals > MAX_INDIVIDUALS {
            return Err(format!("individuals must be in 1..={MAX_INDIVIDUALS}"));
        }
        if horizon > MAX_HORIZON {
            return Err(format!("horizon must be at most {MAX_HORIZON}"));
        }
        let law = law(coefficients, weights, p)?;
        stationary_atoms(&law)?;
        let noise = NoiseSpec::constant(sigma2).map_err(|e| e.to_string())?;
        let spec = ModelSpec::new(law, noise, individuals, horizon).map_err(|e| e.to_string())?;
        let panel = simulate_panel(&spec, seed, &SimulationOptions::default()).map_err(|e| e.to_string())?;
        Ok(panel.observations.concat())
    }
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub fn verdict(coefficients: Vec<f64>, weights: Vec<f64>, p: usize) -> Result<String, JsValue> {
    demo::verdict(&coefficients, &weights, p).map_err(js)
}

#[wasm_bindgen]
pub fn autocovariance(
    coefficients: Vec<f64>,
    weights: Vec<f64>,
    p: usize,
    sigma2: f64,
    max_lag: usize,
) -> Result<Vec<f64>, JsValue> {
    demo::autocovariance(&coefficients, &weights, p, sigma2, max_lag).map_err(js)
}

#[wasm_bindgen]
pub fn spectrum(
    coefficients: Vec<f64>,
    weights: Vec<f64>,
    p: usize,
    sigma2: f64,
    points: usize,
) -> Result<Vec<f64>, JsValue> {
    demo::spectrum(&coefficients, &weights, p, sigma2, points).map_err(js)
}

#[wasm_bindgen]
pub fn paths(
    coefficients: Vec<f64>,
    weights: Vec<f64>,
    p: usize,
    sigma2: f64,
    individuals: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>, JsValue> {
    demo::paths(&coefficients, &weights, p, sigma2, individuals, horizon, seed).map_err(js)
}
