//! Interactive browser demo for the Fucik-spectrum pipeline. The exported
//! handle builds the discrete problem once and answers three queries:
//! spectrum curves around a diagonal point, classification of a clicked
//! (a, b), and eigenfunction plots. All drawing happens in the page; every
//! method returns JSON text.

use fucik_core::curves::{gap_condition, FucikProblem};
use fucik_core::eigen::EigenDecomposition;
use fucik_core::fucik::SolverParams;
use fucik_core::{build_mesh, GalerkinForms, Mesh, ProblemConfig};
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Demo {
    config: ProblemConfig,
    mesh: Mesh,
    forms: GalerkinForms,
    decomp: EigenDecomposition,
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Builds mesh, forms and spectrum from a config JSON document.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> Result<Demo, JsValue> {
        #[cfg(target_arch = "wasm32")]
        console_error_panic_hook::set_once();
        build_demo(config_json).map_err(js_err)
    }

    /// Distinct eigenvalues with multiplicities and dof count.
    pub fn spectrum(&self) -> String {
        spectrum_json(&self.decomp, self.mesh.n_dofs())
    }

    /// Nodes and values of one eigenfunction of the k-th distinct
    /// eigenvalue (first basis column of the eigenspace).
    pub fn eigenfunction(&self, k: usize) -> Result<String, JsValue> {
        eigenfunction_json(&self.mesh, &self.decomp, k).map_err(js_err)
    }

    /// Traces the two curves around (lambda_k, lambda_k) on a grid.
    pub fn trace(&self, k: usize, grid: usize) -> Result<String, JsValue> {
        trace_json(&self.forms, &self.decomp, &self.config, k, grid).map_err(js_err)
    }

    /// Classifies a point of the square.
    pub fn classify(&self, k: usize, a: f64, b: f64) -> Result<String, JsValue> {
        classify_json(&self.forms, &self.decomp, &self.config, k, a, b).map_err(js_err)
    }

    /// Eigenspace asymmetry report at level k.
    pub fn gap(&self, k: usize) -> Result<String, JsValue> {
        let rep = gap_condition(&self.decomp, &self.forms.m_lumped, k).map_err(js_err)?;
        Ok(serde_json::json!({
            "nonempty": rep.nonempty,
            "asymmetry": rep.asymmetry,
            "witness_norms": [rep.part_norms.0, rep.part_norms.1],
        })
        .to_string())
    }
}

// plain functions so the host-side tests cover the same paths the bindings use

pub fn build_demo(config_json: &str) -> fucik_core::Result<Demo> {
    let config = ProblemConfig::from_json(config_json)?;
    let mesh = build_mesh(&config)?;
    let forms = GalerkinForms::assemble(&mesh, &config)?;
    let decomp = forms.solve_spectrum(config.tolerances.cluster_tol)?;
    Ok(Demo {
        config,
        mesh,
        forms,
        decomp,
    })
}

pub fn spectrum_json(decomp: &EigenDecomposition, n_dofs: usize) -> String {
    serde_json::json!({
        "lambdas": decomp.lambdas,
        "mults": decomp.mults,
        "dofs": n_dofs,
    })
    .to_string()
}

pub fn eigenfunction_json(
    mesh: &Mesh,
    decomp: &EigenDecomposition,
    k: usize,
) -> fucik_core::Result<String> {
    if k < 1 || k > decomp.n_distinct() {
        return Err(fucik_core::Error::KOutOfRange {
            k,
            lo: 1,
            hi: decomp.n_distinct(),
        });
    }
    let col = decomp.group_cols(k).start;
    let y = decomp.basis.column(col);
    // include the zero boundary nodes so plots show the extension by zero
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for el in &mesh.elements {
        if el.at_left_boundary {
            xs.push(el.x_left);
            ys.push(0.0);
        }
        let v = el.dofs[1].map_or(0.0, |i| y[i]);
        xs.push(el.x_right());
        ys.push(v);
    }
    Ok(serde_json::json!({"x": xs, "y": ys, "lambda": decomp.lambdas[k - 1]}).to_string())
}

pub fn trace_json(
    forms: &GalerkinForms,
    decomp: &EigenDecomposition,
    config: &ProblemConfig,
    k: usize,
    grid: usize,
) -> fucik_core::Result<String> {
    let problem = FucikProblem::new(
        &forms.stiffness,
        &forms.m_lumped,
        decomp,
        SolverParams::from_config(config),
    );
    let sample = problem.trace_curves(k, grid, 1)?;
    let rows: Vec<serde_json::Value> = sample
        .rows
        .iter()
        .map(|r| serde_json::json!({"a": r.a, "nu": r.nu, "mu": r.mu}))
        .collect();
    let lo = decomp.lambdas[k - 2];
    let hi = decomp.lambdas[k];
    Ok(serde_json::json!({
        "k": k,
        "lambda_k": decomp.lambdas[k - 1],
        "square": [lo, hi],
        "rows": rows,
    })
    .to_string())
}

pub fn classify_json(
    forms: &GalerkinForms,
    decomp: &EigenDecomposition,
    config: &ProblemConfig,
    k: usize,
    a: f64,
    b: f64,
) -> fucik_core::Result<String> {
    let problem = FucikProblem::new(
        &forms.stiffness,
        &forms.m_lumped,
        decomp,
        SolverParams::from_config(config),
    );
    let c = problem.classify_point(k, a, b)?;
    Ok(serde_json::json!({
        "label": c.label.as_str(),
        "n": c.n_value,
        "m": c.m_value,
        "itilde_signs": c.itilde,
    })
    .to_string())
}
