//! Per-question-type accuracy over a stored dataset.

use serde::Serialize;
use std::collections::BTreeMap;
use tnsr_core::datagen::{Answer, LoadedDataset};
use tnsr_core::executor::{classify_failure, GroundTruth};
use tnsr_core::grounding::{FlipGrounder, Grounder};
use tnsr_core::program::{delinearize, Primitive, Program};
use tnsr_core::{execute, ExecConfig, OracleGrounder};

/// Column order of the accuracy table.
pub const COLUMNS: [&str; 6] = ["Count", "Exist", "Compare Number", "Compare Attribute", "Query", "REF"];

/// Question type of a program, by its root primitive. Programs answering
/// with an object or an action on one count as referring expressions.
pub fn column(program: &Program) -> &'static str {
    use Primitive::*;
    match program.primitive {
        Count => "Count",
        Exist => "Exist",
        EqualInteger | Greater | Less => "Compare Number",
        EqualCategory | EqualColor | EqualMaterial => "Compare Attribute",
        QueryCategory | QueryColor | QueryMaterial => "Query",
        _ => "REF",
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
}

impl Cell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| 100.0 * self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub flip_rate: f64,
    pub seed: u64,
    pub columns: BTreeMap<String, Cell>,
    pub overall: Cell,
    pub families: BTreeMap<String, Cell>,
    /// Failure buckets of the wrong answers.
    pub failures: BTreeMap<String, usize>,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        let fmt = |c: &Cell| c.accuracy().map_or("-".to_string(), |a| format!("{a:.1}"));
        for name in COLUMNS {
            let w = name.len().max(6);
            head.push_str(&format!("{name:>w$}  "));
            row.push_str(&format!("{:>w$}  ", fmt(&self.columns[name])));
        }
        head.push_str("Overall");
        row.push_str(&format!("{:>7}", fmt(&self.overall)));
        let mut out = format!("{head}\n{row}\n");
        if !self.failures.is_empty() {
            let parts: Vec<String> = self.failures.iter().map(|(k, v)| format!("{k} {v}")).collect();
            out.push_str(&format!("failures: {}\n", parts.join(", ")));
        }
        out
    }
}

/// Execute every sample under the oracle, or under a score-flipping oracle
/// when `flip_rate > 0`, and tabulate accuracy.
pub fn evaluate(data: &LoadedDataset, flip_rate: f64, seed: u64) -> EvalReport {
    let cfg = &data.manifest.config;
    let memory = tnsr_core::ConceptMemory::training();
    let oracle = OracleGrounder::new(memory, cfg.thresholds);
    let flipped = FlipGrounder::new(oracle.clone(), flip_rate, seed);
    let grounder: &dyn Grounder = if flip_rate > 0.0 { &flipped } else { &oracle };
    let exec = ExecConfig::default();

    let mut columns: BTreeMap<String, Cell> = COLUMNS.iter().map(|c| (c.to_string(), Cell::default())).collect();
    let mut families: BTreeMap<String, Cell> = BTreeMap::new();
    let mut overall = Cell::default();
    let mut failures: BTreeMap<String, usize> = BTreeMap::new();
    for s in &data.samples {
        let Some(scene) = data.scenes.get(&s.scene_id) else { continue };
        let Ok(program) = delinearize(&s.program) else { continue };
        let trace = execute(&program, scene, grounder, &exec);
        let ok = trace.answer().map(|v| Answer::from_value(v, scene)).as_ref() == Some(&s.answer);
        for cell in [columns.get_mut(column(&program)).expect("known column"), families.entry(s.family.clone()).or_default()] {
            cell.total += 1;
            cell.correct += ok as usize;
        }
        overall.total += 1;
        overall.correct += ok as usize;
        if !ok {
            let gt = GroundTruth { program: &program, grounder: &oracle };
            let kind = classify_failure(&program, &trace, scene, Some(&gt), &exec);
            *failures.entry(kind.map_or("Unclassified".into(), |k| k.to_string())).or_default() += 1;
        }
    }
    EvalReport { flip_rate, seed, columns, overall, families, failures }
}
