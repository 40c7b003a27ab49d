use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logit::{attribute_probability, CalibratedLogit};
use super::neighbors::{transition_probability, NeighborGraph};
use super::Cell;
use crate::delineation::ParcelId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaConfig {
    pub neighborhood_radius_m: f64,
    /// Cells convert when their transition probability is at least this.
    pub threshold: f64,
    pub target_urban_area_m2: f64,
    /// Bound on the number of steps, seeding included.
    pub max_iterations: usize,
    /// Seeding step and progress fallback. Without them an all-rural start
    /// never converts anything.
    pub seeding: bool,
    pub record_trace: bool,
}

impl Default for CaConfig {
    fn default() -> Self {
        CaConfig {
            neighborhood_radius_m: 500.0,
            threshold: 0.5,
            target_urban_area_m2: 0.0,
            max_iterations: 10_000,
            seeding: true,
            record_trace: false,
        }
    }
}

impl CaConfig {
    pub fn with_target(mut self, target_urban_area_m2: f64) -> Self {
        self.target_urban_area_m2 = target_urban_area_m2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.neighborhood_radius_m > 0.0 && self.neighborhood_radius_m.is_finite()) {
            return Err(Error::Config(format!(
                "neighborhood radius must be positive, got {}",
                self.neighborhood_radius_m
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )));
        }
        if !(self.target_urban_area_m2 >= 0.0 && self.target_urban_area_m2.is_finite()) {
            return Err(Error::Config(format!(
                "urban area target must be non-negative, got {}",
                self.target_urban_area_m2
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluated candidate of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub parcel_id: ParcelId,
    pub probability: f64,
    pub converted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    /// Neighborhood factor taken as 1.
    Seeding,
    Regular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    /// In conversion order.
    pub converted: Vec<ParcelId>,
    /// The step converted only the single most probable cell because none
    /// reached the threshold.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaState {
    pub cells: Vec<Cell>,
    /// Number of steps applied.
    pub iteration: usize,
    /// Running sum of urban cell sizes, in conversion order.
    pub urban_area_m2: f64,
    /// Candidates of every step, when recording is enabled.
    pub trace: Option<Vec<TraceRecord>>,
    urban_neighbors: Vec<u32>,
}

impl CaState {
    /// Initial state; `graph` must be indexed like `cells`.
    pub fn new(cells: Vec<Cell>, graph: &NeighborGraph, record_trace: bool) -> Result<Self> {
        if graph.len() != cells.len() {
            return Err(Error::InvalidInput(format!(
                "neighbor graph has {} cells, expected {}",
                graph.len(),
                cells.len()
            )));
        }
        let mut ids: Vec<ParcelId> = cells.iter().map(|c| c.parcel_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("cells must have distinct parcel ids".into()));
        }
        if let Some(c) = cells.iter().find(|c| !(c.size_m2 > 0.0 && c.size_m2.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "cell {} has non-positive size {}",
                c.parcel_id, c.size_m2
            )));
        }
        let urban_neighbors = (0..cells.len())
            .map(|i| graph.neighbors(i).filter(|&j| cells[j].urban).count() as u32)
            .collect();
        let urban_area_m2 = cells.iter().filter(|c| c.urban).map(|c| c.size_m2).sum();
        Ok(CaState {
            cells,
            iteration: 0,
            urban_area_m2,
            trace: record_trace.then(Vec::new),
            urban_neighbors,
        })
    }

    pub fn urban_count(&self) -> usize {
        self.cells.iter().filter(|c| c.urban).count()
    }

    pub fn urban_ids(&self) -> Vec<ParcelId> {
        self.cells
            .iter()
            .filter(|c| c.urban)
            .map(|c| c.parcel_id)
            .collect()
    }

    /// Urban cells among the neighbors of cell `i`.
    pub fn urban_neighbors(&self, i: usize) -> usize {
        self.urban_neighbors[i] as usize
    }

    fn all_urban(&self) -> bool {
        self.cells.iter().all(|c| c.urban)
    }
}

/// Attribute probability of every cell.
pub fn attribute_probabilities(cells: &[Cell], model: &CalibratedLogit) -> Vec<f64> {
    cells
        .par_iter()
        .map(|c| attribute_probability(c, model))
        .collect()
}

/// Higher probability first, then lower parcel id.
fn rank(a: &(usize, f64), b: &(usize, f64), cells: &[Cell]) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| cells[a.0].parcel_id.cmp(&cells[b.0].parcel_id))
}

/// One synchronous update. Probabilities are evaluated against the state at
/// the start of the step; candidates then convert in rank order until the
/// urban area reaches the target. Urban cells never revert.
pub fn ca_step(
    state: &mut CaState,
    attributes: &[f64],
    graph: &NeighborGraph,
    config: &CaConfig,
    kind: StepKind,
) -> StepReport {
    let iteration = state.iteration;
    state.iteration += 1;
    let snapshot = &*state;
    let probabilities: Vec<(usize, f64)> = (0..snapshot.cells.len())
        .into_par_iter()
        .filter(|&i| !snapshot.cells[i].urban)
        .map(|i| {
            let p = match kind {
                StepKind::Seeding => attributes[i],
                StepKind::Regular => {
                    transition_probability(attributes[i], snapshot.urban_neighbors(i), graph.degree(i))
                }
            };
            (i, p)
        })
        .collect();

    let target = config.target_urban_area_m2;
    let mut candidates: Vec<(usize, f64)> = probabilities
        .iter()
        .copied()
        .filter(|&(_, p)| p >= config.threshold)
        .collect();
    candidates.sort_by(|a, b| rank(a, b, &state.cells));
    let mut fallback = false;
    if candidates.is_empty() && config.seeding && state.urban_area_m2 < target {
        if let Some(best) = probabilities.iter().min_by(|a, b| rank(a, b, &state.cells)) {
            candidates.push(*best);
            fallback = true;
        }
    }

    let mut converted = Vec::new();
    for &(i, p) in &candidates {
        let convert = state.urban_area_m2 < target;
        if convert {
            state.cells[i].urban = true;
            state.urban_area_m2 += state.cells[i].size_m2;
            for j in graph.neighbors(i) {
                state.urban_neighbors[j] += 1;
            }
            converted.push(state.cells[i].parcel_id);
        }
        if let Some(trace) = &mut state.trace {
            trace.push(TraceRecord {
                iteration,
                parcel_id: state.cells[i].parcel_id,
                probability: p,
                converted: convert,
            });
        }
    }
    StepReport {
        iteration,
        converted,
        fallback,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaOutcome {
    pub state: CaState,
    /// Urban area reached the target (or every cell is urban).
    pub converged: bool,
    pub steps: Vec<StepReport>,
}

/// Runs the automaton with a logistic attribute model.
pub fn run_constrained_ca(
    cells: Vec<Cell>,
    model: &CalibratedLogit,
    graph: &NeighborGraph,
    config: &CaConfig,
) -> Result<CaOutcome> {
    model.validate()?;
    let attributes = attribute_probabilities(&cells, model);
    run_with_attributes(cells, &attributes, graph, config)
}

/// Runs the automaton with given attribute probabilities, one per cell.
///
/// Steps repeat until the urban area reaches the target, the iteration bound
/// is hit, or a step converts nothing. With seeding enabled the first step
/// scores cells by attribute probability alone.
pub fn run_with_attributes(
    cells: Vec<Cell>,
    attributes: &[f64],
    graph: &NeighborGraph,
    config: &CaConfig,
) -> Result<CaOutcome> {
    config.validate()?;
    if cells.is_empty() {
        return Err(Error::InvalidInput("no cells to simulate".into()));
    }
    if attributes.len() != cells.len() {
        return Err(Error::InvalidInput(format!(
            "{} attribute probabilities for {} cells",
            attributes.len(),
            cells.len()
        )));
    }
    if let Some(p) = attributes.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!(
            "attribute probability {p} outside [0, 1]"
        )));
    }
    let available: f64 = cells.iter().map(|c| c.size_m2).sum();
    let target = config.target_urban_area_m2;
    if target > available {
        return Err(Error::TargetExceedsArea {
            target_m2: target,
            available_m2: available,
        });
    }

    let mut state = CaState::new(cells, graph, config.record_trace)?;
    let mut steps = Vec::new();
    let unmet = |s: &CaState| s.urban_area_m2 < target && !s.all_urban();
    if config.seeding && unmet(&state) {
        steps.push(ca_step(&mut state, attributes, graph, config, StepKind::Seeding));
    }
    while unmet(&state) && state.iteration < config.max_iterations {
        let report = ca_step(&mut state, attributes, graph, config, StepKind::Regular);
        let stalled = report.converted.is_empty();
        steps.push(report);
        if stalled {
            break;
        }
    }
    let converged = !unmet(&state);
    if !converged {
        log::warn!(
            "automaton stopped after {} steps at {:.1} of {:.1} m²",
            state.iteration,
            state.urban_area_m2,
            target
        );
    }
    Ok(CaOutcome {
        state,
        converged,
        steps,
    })
}
