//! Browser bindings for the static demo in `www/`.
//!
//! Every export takes and returns JSON strings so the page needs no
//! generated glue beyond what `wasm-bindgen` emits. The logic lives in
//! [`api`], which is plain Rust and tested natively.

use wasm_bindgen::prelude::*;

pub mod api;

fn js(result: Result<String, String>) -> Result<String, JsValue> {
    result.map_err(|e| JsValue::from_str(&e))
}

/// Taxonomy document (all 25 labels in canonical order).
#[wasm_bindgen]
pub fn taxonomy() -> String {
    api::taxonomy()
}

/// Tags `text` with the shipped rules; returns labels and highlighted spans.
#[wasm_bindgen]
pub fn tag(text: &str) -> Result<String, JsValue> {
    js(api::tag(text))
}

/// Flat vs hierarchical decisions for a `{slug: score}` object at `threshold`.
#[wasm_bindgen]
pub fn gate(scores_json: &str, threshold: f64) -> Result<String, JsValue> {
    js(api::gate(scores_json, threshold))
}

/// Fleiss' kappa over an items x categories count matrix.
#[wasm_bindgen]
pub fn kappa(counts_json: &str) -> Result<String, JsValue> {
    js(api::kappa(counts_json))
}

/// Token-level F1 per category for gold vs predicted spans over `text`.
#[wasm_bindgen]
pub fn token_f1(text: &str, gold_json: &str, pred_json: &str) -> Result<String, JsValue> {
    js(api::token_f1(text, gold_json, pred_json))
}
