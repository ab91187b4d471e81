//! Epsilon-dominance multi-objective genetic algorithm over hover points and
//! buffer thresholds.
//!
//! Objectives: maximise delivered bits, minimise delay. The archive divides
//! the observed objective ranges into `n_box` boxes per axis and keeps at most
//! one member per box, none of which lies in a box dominated by another.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ferrysim::{self, FerryParams, TStar};

#[derive(Debug, Error)]
pub enum MogaError {
    #[error("invalid optimiser parameter `{field}`: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("evaluation failed for {individual:?}: {reason}")]
    EvaluationFailed { individual: Individual, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub d1_m: f64,
    pub d2_m: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Individual {
    fn to_array(self) -> [f64; 4] {
        [self.d1_m, self.d2_m, self.alpha, self.beta]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self {
            d1_m: v[0],
            d2_m: v[1],
            alpha: v[2],
            beta: v[3],
        }
    }
}

/// Search box of the decision variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Bounds {
    pub fn new(d_min_m: f64, d_max_m: f64) -> Self {
        Self {
            d_min_m,
            d_max_m,
            alpha: (0.01, 1.0),
            beta: (0.0, 0.99),
        }
    }

    fn ranges(&self) -> [(f64, f64); 4] {
        [
            (self.d_min_m, self.d_max_m),
            (self.d_min_m, self.d_max_m),
            self.alpha,
            self.beta,
        ]
    }

    pub fn contains(&self, r: &Individual) -> bool {
        r.to_array()
            .iter()
            .zip(self.ranges())
            .all(|(v, (lo, hi))| *v >= lo && *v <= hi)
            && r.beta < r.alpha
    }

    /// Clamps into the box, then restores `beta < alpha`.
    pub fn repair(&self, r: Individual) -> Individual {
        let mut v = r.to_array();
        for (x, (lo, hi)) in v.iter_mut().zip(self.ranges()) {
            *x = x.clamp(lo, hi);
        }
        let mut out = Individual::from_array(v);
        if out.beta >= out.alpha {
            std::mem::swap(&mut out.alpha, &mut out.beta);
            out.alpha = out.alpha.clamp(self.alpha.0, self.alpha.1);
            out.beta = out.beta.clamp(self.beta.0, self.beta.1);
            if out.beta >= out.alpha {
                out.beta = (out.alpha - 0.01).max(self.beta.0);
            }
            if out.beta >= out.alpha {
                out.alpha = (out.beta + 0.01).min(self.alpha.1);
            }
        }
        out
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Individual {
        let v = self.ranges().map(|(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo });
        self.repair(Individual::from_array(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    /// Delivered data, bits (maximised).
    pub delivered: f64,
    /// Delay, seconds (minimised).
    pub delay: f64,
}

impl ObjectiveVector {
    fn coords(&self) -> [f64; 2] {
        [self.delivered, self.delay]
    }
}

/// Pareto dominance: no worse in both objectives and strictly better in one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    a.delivered >= b.delivered && a.delay <= b.delay && (a.delivered > b.delivered || a.delay < b.delay)
}

pub type BoxIndex = (usize, usize);

/// Box `a` is at least as good as `b` on both axes and differs from it.
fn box_dominates(a: BoxIndex, b: BoxIndex) -> bool {
    a != b && a.0 >= b.0 && a.1 <= b.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogaParams {
    pub population: usize,
    pub generations: usize,
    /// Offspring per generation (even).
    pub offspring: usize,
    /// Mutation is chosen when a uniform draw is at most this value.
    pub p_cm: f64,
    pub omega_range: (f64, f64),
    /// Mutation standard deviation as a fraction of each variable's range.
    pub mutation_sigma: f64,
    pub n_box: usize,
    pub seed: u64,
    /// Fix the objective ranges after the initial population is archived.
    #[serde(default)]
    pub freeze_ranges: bool,
}

impl Default for MogaParams {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            offspring: 20,
            p_cm: 0.1,
            omega_range: (-0.25, 1.25),
            mutation_sigma: 0.1,
            n_box: 100,
            seed: 1,
            freeze_ranges: false,
        }
    }
}

impl MogaParams {
    pub fn validate(&self) -> Result<(), MogaError> {
        let bad = |field: &'static str, reason: &str| {
            Err(MogaError::InvalidParams {
                field,
                reason: reason.into(),
            })
        };
        if self.population < 2 {
            return bad("population", "must be at least 2");
        }
        if self.offspring < 2 || !self.offspring.is_multiple_of(2) {
            return bad("offspring", "must be even and at least 2");
        }
        if !(0.0..=1.0).contains(&self.p_cm) {
            return bad("p_cm", "must lie in [0, 1]");
        }
        if !(self.omega_range.0 <= self.omega_range.1) {
            return bad("omega_range", "lower end exceeds upper end");
        }
        if !(self.mutation_sigma >= 0.0) {
            return bad("mutation_sigma", "must be non-negative");
        }
        if self.n_box < 2 {
            return bad("n_box", "must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMember {
    pub individual: Individual,
    pub objectives: ObjectiveVector,
    pub box_index: BoxIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsArchive {
    members: Vec<ArchiveMember>,
    /// `(min, max)` of delivered and delay.
    ranges: Option<[(f64, f64); 2]>,
    n_box: usize,
    frozen: bool,
}

impl EpsArchive {
    pub fn new(n_box: usize) -> Self {
        Self {
            members: Vec::new(),
            ranges: None,
            n_box,
            frozen: false,
        }
    }

    /// Archive with fixed objective ranges.
    pub fn with_ranges(n_box: usize, delivered: (f64, f64), delay: (f64, f64)) -> Self {
        Self {
            members: Vec::new(),
            ranges: Some([delivered, delay]),
            n_box,
            frozen: true,
        }
    }

    pub fn members(&self) -> &[ArchiveMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_box(&self) -> usize {
        self.n_box
    }

    pub fn ranges(&self) -> Option<[(f64, f64); 2]> {
        self.ranges
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn box_widths(&self) -> [f64; 2] {
        self.ranges
            .map_or([0.0; 2], |r| r.map(|(lo, hi)| (hi - lo) / self.n_box as f64))
    }

    pub fn box_of(&self, v: &ObjectiveVector) -> BoxIndex {
        let Some(ranges) = self.ranges else {
            return (0, 0);
        };
        let idx = |value: f64, (lo, hi): (f64, f64)| -> usize {
            let w = (hi - lo) / self.n_box as f64;
            if !(w > 0.0) {
                return 0;
            }
            let b = ((value - lo) / w).floor();
            b.clamp(0.0, (self.n_box - 1) as f64) as usize
        };
        let c = v.coords();
        (idx(c[0], ranges[0]), idx(c[1], ranges[1]))
    }

    /// Range-normalised distance to the best corner of the point's box.
    fn corner_distance(&self, v: &ObjectiveVector, b: BoxIndex) -> f64 {
        let Some(ranges) = self.ranges else {
            return 0.0;
        };
        let w = self.box_widths();
        let corner = [ranges[0].0 + (b.0 + 1) as f64 * w[0], ranges[1].0 + b.1 as f64 * w[1]];
        let c = v.coords();
        let mut sum = 0.0;
        for k in 0..2 {
            let span = ranges[k].1 - ranges[k].0;
            if span > 0.0 {
                sum += ((c[k] - corner[k]) / span).powi(2);
            }
        }
        sum.sqrt()
    }

    fn covers(&self, v: &ObjectiveVector) -> bool {
        self.ranges.is_some_and(|r| {
            v.coords()
                .iter()
                .zip(r)
                .all(|(x, (lo, hi))| *x >= lo && *x <= hi)
        })
    }

    /// Offers a candidate; returns whether it entered the archive.
    pub fn insert(&mut self, individual: Individual, objectives: ObjectiveVector) -> bool {
        if !self.frozen && !self.covers(&objectives) {
            let c = objectives.coords();
            let grown = match self.ranges {
                None => [(c[0], c[0]), (c[1], c[1])],
                Some(r) => [
                    (r[0].0.min(c[0]), r[0].1.max(c[0])),
                    (r[1].0.min(c[1]), r[1].1.max(c[1])),
                ],
            };
            self.ranges = Some(grown);
            let old = std::mem::take(&mut self.members);
            for m in old {
                self.place(m.individual, m.objectives);
            }
        }
        self.place(individual, objectives)
    }

    fn place(&mut self, individual: Individual, objectives: ObjectiveVector) -> bool {
        let b = self.box_of(&objectives);
        if self.members.iter().any(|m| box_dominates(m.box_index, b)) {
            return false;
        }
        let candidate = ArchiveMember {
            individual,
            objectives,
            box_index: b,
        };
        if let Some(pos) = self.members.iter().position(|m| m.box_index == b) {
            let incumbent = self.members[pos].objectives;
            let wins = if dominates(&objectives, &incumbent) {
                true
            } else if dominates(&incumbent, &objectives) || incumbent == objectives {
                false
            } else {
                self.corner_distance(&objectives, b) < self.corner_distance(&incumbent, b)
            };
            if wins {
                self.members[pos] = candidate;
            }
            return wins;
        }
        self.members.retain(|m| !box_dominates(b, m.box_index));
        self.members.push(candidate);
        true
    }

    /// True when no member Pareto-dominates another.
    pub fn is_mutually_nondominated(&self) -> bool {
        self.members.iter().all(|a| {
            self.members
                .iter()
                .all(|b| !dominates(&a.objectives, &b.objectives))
        })
    }

    /// Members ordered by delivered data.
    pub fn sorted_members(&self) -> Vec<ArchiveMember> {
        let mut v = self.members.clone();
        v.sort_by(|a, b| {
            a.objectives
                .delivered
                .total_cmp(&b.objectives.delivered)
                .then(a.objectives.delay.total_cmp(&b.objectives.delay))
        });
        v
    }
}

/// Dominated area w.r.t. a reference point that is worse on both objectives.
pub fn hypervolume(points: &[ObjectiveVector], reference: ObjectiveVector) -> f64 {
    let mut pts: Vec<ObjectiveVector> = points
        .iter()
        .copied()
        .filter(|p| p.delivered > reference.delivered && p.delay < reference.delay)
        .collect();
    pts.sort_by(|a, b| a.delay.total_cmp(&b.delay).then(b.delivered.total_cmp(&a.delivered)));
    let mut best = reference.delivered;
    let mut hv = 0.0;
    for p in pts {
        if p.delivered > best {
            hv += (p.delivered - best) * (reference.delay - p.delay);
            best = p.delivered;
        }
    }
    hv
}

/// Extended linear recombination followed by repair.
pub fn crossover(rp: &Individual, ra: &Individual, omega: f64, bounds: &Bounds) -> (Individual, Individual) {
    let (p, a) = (rp.to_array(), ra.to_array());
    let mix = |w: f64| {
        let mut v = [0.0; 4];
        for i in 0..4 {
            v[i] = w * p[i] + (1.0 - w) * a[i];
        }
        bounds.repair(Individual::from_array(v))
    };
    (mix(omega), mix(1.0 - omega))
}

/// Gaussian perturbation of every variable followed by repair.
pub fn mutate<R: Rng>(r: &Individual, params: &MogaParams, bounds: &Bounds, rng: &mut R) -> Individual {
    let mut v = r.to_array();
    for (x, (lo, hi)) in v.iter_mut().zip(bounds.ranges()) {
        let sd = params.mutation_sigma * (hi - lo);
        if sd > 0.0 {
            let n = Normal::new(0.0, sd).expect("finite positive deviation");
            *x += n.sample(rng);
        }
    }
    bounds.repair(Individual::from_array(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSnapshot {
    pub generation: usize,
    pub members: Vec<ArchiveMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogaResult {
    pub archive: EpsArchive,
    pub history: Vec<GenerationSnapshot>,
    pub evaluations: usize,
}

fn evaluate_all<E>(batch: &[Individual], evaluator: &E) -> Result<Vec<ObjectiveVector>, MogaError>
where
    E: Fn(&Individual) -> Result<ObjectiveVector, String> + Sync,
{
    batch
        .par_iter()
        .map(|ind| {
            let v = evaluator(ind).map_err(|reason| MogaError::EvaluationFailed {
                individual: *ind,
                reason,
            })?;
            if !(v.delivered >= 0.0 && v.delay >= 0.0 && v.delivered.is_finite() && v.delay.is_finite()) {
                return Err(MogaError::EvaluationFailed {
                    individual: *ind,
                    reason: format!("objectives out of domain: {v:?}"),
                });
            }
            Ok(v)
        })
        .collect()
}

/// `a` replaces `b` in the population when its box dominates, or when it
/// Pareto-dominates inside the same box.
fn eps_dominates(archive: &EpsArchive, a: &ObjectiveVector, b: &ObjectiveVector) -> bool {
    let (ba, bb) = (archive.box_of(a), archive.box_of(b));
    box_dominates(ba, bb) || (ba == bb && dominates(a, b))
}

pub fn run<E>(bounds: &Bounds, params: &MogaParams, evaluator: E) -> Result<MogaResult, MogaError>
where
    E: Fn(&Individual) -> Result<ObjectiveVector, String> + Sync,
{
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population: Vec<Individual> = (0..params.population).map(|_| bounds.sample(&mut rng)).collect();
    let mut fitness = evaluate_all(&population, &evaluator)?;
    let mut evaluations = population.len();

    let mut archive = EpsArchive::new(params.n_box);
    for (ind, obj) in population.iter().zip(&fitness) {
        archive.insert(*ind, *obj);
    }
    if params.freeze_ranges {
        archive.freeze();
    }
    let mut history = vec![GenerationSnapshot {
        generation: 0,
        members: archive.sorted_members(),
    }];

    for generation in 1..=params.generations {
        let mut children = Vec::with_capacity(params.offspring);
        for _ in 0..params.offspring / 2 {
            let rp = population[rng.random_range(0..population.len())];
            let ra = archive.members()[rng.random_range(0..archive.len())].individual;
            if rng.random::<f64>() > params.p_cm {
                let (lo, hi) = params.omega_range;
                let omega = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let (c1, c2) = crossover(&rp, &ra, omega, bounds);
                children.push(c1);
                children.push(c2);
            } else {
                children.push(mutate(&rp, params, bounds, &mut rng));
                children.push(mutate(&ra, params, bounds, &mut rng));
            }
        }
        let child_fitness = evaluate_all(&children, &evaluator)?;
        evaluations += children.len();

        for (ind, obj) in children.iter().zip(&child_fitness) {
            archive.insert(*ind, *obj);
        }
        for (ind, obj) in children.iter().zip(&child_fitness) {
            let j = rng.random_range(0..population.len());
            if eps_dominates(&archive, obj, &fitness[j]) {
                population[j] = *ind;
                fitness[j] = *obj;
            }
        }
        history.push(GenerationSnapshot {
            generation,
            members: archive.sorted_members(),
        });
    }

    Ok(MogaResult {
        archive,
        history,
        evaluations,
    })
}

/// Row of the exported Pareto front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub d1_m: f64,
    pub d2_m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delivered_bits: f64,
    pub delay_s: f64,
}

impl From<&ArchiveMember> for ParetoPoint {
    fn from(m: &ArchiveMember) -> Self {
        Self {
            d1_m: m.individual.d1_m,
            d2_m: m.individual.d2_m,
            alpha: m.individual.alpha,
            beta: m.individual.beta,
            delivered_bits: m.objectives.delivered,
            delay_s: m.objectives.delay,
        }
    }
}

pub fn pareto_front(archive: &EpsArchive) -> Vec<ParetoPoint> {
    archive.sorted_members().iter().map(ParetoPoint::from).collect()
}

/// One row per archive member per generation.
pub fn write_history_csv<W: Write>(history: &[GenerationSnapshot], writer: W) -> Result<(), MogaError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record([
        "generation",
        "d1_m",
        "d2_m",
        "alpha",
        "beta",
        "delivered_bits",
        "delay_s",
    ])?;
    for snap in history {
        for m in &snap.members {
            let p = ParetoPoint::from(m);
            wtr.serialize((snap.generation, p.d1_m, p.d2_m, p.alpha, p.beta, p.delivered_bits, p.delay_s))?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Delay objective: the first time the effective rate reaches the target, or
/// `T_total` plus a penalty proportional to the final rate shortfall.
pub fn penalized_delay(t_star: TStar, final_rate_bps: f64, re_star_bps: f64, t_total_s: f64) -> f64 {
    match t_star {
        TStar::Reached(t) => t,
        TStar::Unreached => {
            let deficit = if re_star_bps > 0.0 {
                ((re_star_bps - final_rate_bps) / re_star_bps).clamp(0.0, 1.0)
            } else {
                1.0
            };
            t_total_s * (1.0 + deficit)
        }
    }
}

/// Runs the ferry simulation for one decision vector. Vectors whose hover
/// points overlap or sit within one motion step get the worst objectives.
pub fn ferry_objectives(base: &FerryParams, ind: &Individual) -> Result<ObjectiveVector, String> {
    if base.d_total_m - ind.d1_m - ind.d2_m < base.speed_mps * base.dt_s {
        return Ok(ObjectiveVector {
            delivered: 0.0,
            delay: 2.0 * base.t_total_s,
        });
    }
    let p = FerryParams {
        d_load_m: ind.d1_m,
        d_offload_m: ind.d2_m,
        alpha: ind.alpha,
        beta: ind.beta,
        ..base.clone()
    };
    let (_, m) = ferrysim::run(&p).map_err(|e| e.to_string())?;
    Ok(ObjectiveVector {
        delivered: m.delivered_total_bits,
        delay: penalized_delay(m.t_star, m.final_effective_rate_bps, p.re_star_bps, p.t_total_s),
    })
}
