//! Browser bindings for the wave template and the waiting-time simulator.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and run natively too; the `#[wasm_bindgen]` wrappers only turn
//! their errors into JS exceptions.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use wavesched_core::sim::{self, Comparison, ReportFormat, SimConfig, SimReport};
use wavesched_core::template::{LayoutSeat, WaveTemplate};

/// Upper bound on replications per call so the page stays responsive.
pub const MAX_REPLICATIONS: u32 = 1000;

#[derive(Debug, Serialize)]
pub struct Layout {
    pub template: WaveTemplate,
    pub slots_per_hour: u32,
    pub sequential_slots: u32,
    pub catchup_start: u32,
    pub seats: Vec<LayoutSeat>,
}

#[derive(Debug, Serialize)]
pub struct SimulateOutput {
    pub report: SimReport,
    pub table: String,
}

#[derive(Debug, Serialize)]
pub struct CompareOutput {
    pub comparison: Comparison,
    pub table: String,
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, json: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("{what}: {e}"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// One hour of the template: where each seat starts and where catch-up begins.
pub fn hour_layout_json(template: &str) -> Result<String, String> {
    let template: WaveTemplate = parse("template", template)?;
    template.validate().map_err(|e| e.to_string())?;
    to_json(&Layout {
        template,
        slots_per_hour: template.slots_per_hour(),
        sequential_slots: template.sequential_slots(),
        catchup_start: template.catchup_start(),
        seats: template.hour_layout(),
    })
}

pub fn simulate_json(config: &str) -> Result<String, String> {
    let config: SimConfig = parse("config", config)?;
    let report = sim::run(&config).map_err(|e| e.to_string())?;
    let table = sim::emit_report(&report, ReportFormat::Table);
    to_json(&SimulateOutput { report, table })
}

pub fn compare_json(baseline: &str, treatment: &str, replications: u32) -> Result<String, String> {
    if replications > MAX_REPLICATIONS {
        return Err(format!("at most {MAX_REPLICATIONS} replications"));
    }
    let baseline: SimConfig = parse("baseline", baseline)?;
    let treatment: SimConfig = parse("treatment", treatment)?;
    let comparison = sim::compare(&baseline, &treatment, replications).map_err(|e| e.to_string())?;
    let table = sim::emit_comparison(&comparison, ReportFormat::Table);
    to_json(&CompareOutput { comparison, table })
}

#[wasm_bindgen(js_name = hourLayout)]
pub fn hour_layout(template: &str) -> Result<String, JsError> {
    hour_layout_json(template).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(config: &str) -> Result<String, JsError> {
    simulate_json(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(baseline: &str, treatment: &str, replications: u32) -> Result<String, JsError> {
    compare_json(baseline, treatment, replications).map_err(|e| JsError::new(&e))
}
