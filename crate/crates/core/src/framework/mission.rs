use std::f64::consts::FRAC_PI_2;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::belief_map::GridBelief;
use super::config::MissionConfig;
use super::model::{RefitSummary, TerrainModel};
use crate::belief::ElevationBelief;
use crate::error::Result;
use crate::geometry::{unit, Point2};
use crate::locomotion::{plan_step, ApexState, HighLevelAction, Stance, Waypoint};
use crate::model_error::{
    generate_training_set, perturb_execution, GridSpec, ModelErrorGp, ModelErrorOptions,
    PerturbationOracle,
};
use crate::planner::{
    build_partition, extract_waypoints, grow_local_tree, has_continuation, lda_g_rrt, score_error,
    score_info, select_trajectory, smooth, step_contexts, GlobalConfig, LocalConfig,
    LocalTrajectory, TrajectoryScores,
};
use crate::rng;
use crate::terrain::{generate_terrain, sense, TerrainField, TerrainSample};

/// Epochs in a row that may end without executing a step.
const MAX_IDLE_EPOCHS: usize = 3;
/// Consecutive epochs that may execute a segment short of the target.
const MAX_PARTIAL_EPOCHS: usize = 5;
/// Elevation assigned beyond the workspace edge when planning with clearance.
const BORDER_WALL: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reached,
    FailedUntraversable,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub planned: Waypoint,
    pub action: HighLevelAction,
    /// Signed lateral deviation drawn for the step.
    pub deviation: f64,
    /// World-frame offset; `realized = planned + offset` componentwise.
    pub offset: [f64; 2],
    pub realized: Waypoint,
    /// Foot placement of the PIPM step, when the step is dynamically feasible.
    pub foot: Option<[f64; 3]>,
    pub samples: Vec<TerrainSample>,
    /// Belief snapshot the step was planned on.
    pub snapshot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainReason {
    Prior,
    Segment,
    Period,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrainRecord {
    /// Id of the snapshot produced by this retrain.
    pub snapshot: usize,
    pub after_step: usize,
    pub reason: RetrainReason,
    pub points: usize,
    pub refit: Option<RefitSummary>,
    /// Mean posterior standard deviation over the lattice.
    pub env_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub steps: usize,
    pub scores: TrajectoryScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub start_step: usize,
    pub pose: Waypoint,
    pub snapshot: usize,
    /// Global path; absent when the global search failed.
    pub global_path: Option<Vec<[f64; 2]>>,
    /// Indices returned by waypoint extraction on `global_path`.
    pub extracted: Vec<usize>,
    pub target: [f64; 2],
    /// Index into `global_path` of the target; absent when heading straight for the goal.
    pub target_index: Option<usize>,
    pub candidates: Vec<CandidateRecord>,
    pub selected: Option<usize>,
    /// The executed segment stops short of the target; no search reached it.
    pub partial: bool,
    pub executed_steps: usize,
    /// Last failure of each planner during the epoch.
    pub global_error: Option<String>,
    pub local_error: Option<String>,
}

/// Complete, deterministic record of a mission. Carries no wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionLog {
    pub config: MissionConfig,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub retrains: Vec<RetrainRecord>,
    pub outcome: Outcome,
    /// Final posterior on the terrain lattice.
    pub final_map: Option<GridBelief>,
    /// Final posterior `(mean, variance)` at every realized waypoint.
    pub final_path: Vec<[f64; 2]>,
}

impl MissionLog {
    pub fn realized_positions(&self) -> Vec<Point2> {
        self.steps.iter().map(|s| s.realized.position()).collect()
    }
}

/// The learned deviation model and the oracle that perturbs execution.
pub struct ExecutionModels {
    pub model_error: ModelErrorGp,
    pub oracle: PerturbationOracle,
}

impl ExecutionModels {
    /// Loads the configured artifact, or trains the model from the oracle.
    pub fn from_config(cfg: &MissionConfig) -> Result<Self> {
        let me = &cfg.model_error;
        let oracle = PerturbationOracle::calibrated(&me.ranges, me.oracle_noise_std);
        let model_error = match &me.artifact {
            Some(path) => ModelErrorGp::load(path)?,
            None => train_model_error(&oracle, me.points_per_axis, me.ranges, me.training_seed)?,
        };
        Ok(Self {
            model_error,
            oracle,
        })
    }
}

pub fn train_model_error(
    oracle: &PerturbationOracle,
    points_per_axis: usize,
    ranges: crate::model_error::ContextRanges,
    seed: u64,
) -> Result<ModelErrorGp> {
    let grid = GridSpec {
        points_per_axis,
        ranges,
    };
    let data = generate_training_set(oracle, &grid, seed)?;
    ModelErrorGp::train(&data, ranges, &ModelErrorOptions::default())
}

/// Runs a mission, building the terrain and the execution models from the config.
pub fn run_mission(cfg: &MissionConfig) -> Result<MissionLog> {
    cfg.validate()?;
    let field = generate_terrain(&cfg.terrain, cfg.terrain_seed)?;
    let models = ExecutionModels::from_config(cfg)?;
    run_mission_on(cfg, &field, &models)
}

struct Mission<'a> {
    cfg: &'a MissionConfig,
    field: &'a TerrainField,
    models: &'a ExecutionModels,
    model: TerrainModel,
    belief: GridBelief,
    log: MissionLog,
    retrains: usize,
    since_retrain: usize,
}

impl Mission<'_> {
    fn retrain(&mut self, reason: RetrainReason) -> Result<()> {
        let refit = if reason == RetrainReason::Prior
            || (self.retrains + 1).is_multiple_of(self.cfg.refit_every)
        {
            if reason == RetrainReason::Prior {
                self.model.scale_to_data();
            }
            Some(self.model.refit()?)
        } else {
            self.model.condition()?;
            None
        };
        if reason != RetrainReason::Prior {
            self.retrains += 1;
        }
        self.belief = self.model.snapshot()?;
        self.since_retrain = 0;
        self.log.retrains.push(RetrainRecord {
            snapshot: self.belief.id,
            after_step: self.log.steps.len(),
            reason,
            points: self.model.len(),
            refit,
            env_std: self.belief.mean_std(),
        });
        Ok(())
    }
}

/// Algorithm loop on a given ground truth: global plan, local candidates,
/// perturbed execution with sensing, and terrain-model retraining.
pub fn run_mission_on(
    cfg: &MissionConfig,
    field: &TerrainField,
    models: &ExecutionModels,
) -> Result<MissionLog> {
    cfg.validate()?;
    let limits = cfg.limits;
    let bounds = field.bounds();
    let goal = Point2::new(cfg.goal[0], cfg.goal[1]);
    let mut pose = Waypoint::new(cfg.start[0], cfg.start[1], cfg.start_heading);
    let mut stance = Stance::Left;
    let mut previous: Option<HighLevelAction> = None;

    let mut plan_rng = rng::stream(cfg.seed, "plan");
    let mut sensor_rng = rng::stream(cfg.seed, "sensor");
    let mut perturb_rng = rng::stream(cfg.seed, "perturb");
    let mut prior_rng = rng::stream(cfg.seed, "prior");

    let mut model = TerrainModel::new(
        cfg.kernel,
        cfg.gp.clone(),
        bounds,
        field.cols(),
        field.rows(),
        cfg.seed,
    )?;
    let nodes = field.node_positions();
    let mut picks = sample(&mut prior_rng, nodes.len(), cfg.prior_points).into_vec();
    picks.sort_unstable();
    let prior: Vec<TerrainSample> = picks
        .iter()
        .map(|&i| TerrainSample {
            location: nodes[i],
            elevation: field.values()[i],
        })
        .collect();
    model.add(&prior);

    let mut m = Mission {
        cfg,
        field,
        models,
        model,
        belief: GridBelief {
            id: 0,
            bounds,
            cols: field.cols(),
            rows: field.rows(),
            mean: Vec::new(),
            variance: Vec::new(),
        },
        log: MissionLog {
            config: cfg.clone(),
            steps: Vec::new(),
            epochs: Vec::new(),
            retrains: Vec::new(),
            outcome: Outcome::BudgetExhausted,
            final_map: None,
            final_path: Vec::new(),
        },
        retrains: 0,
        since_retrain: 0,
    };

    if (pose.position() - goal).norm() <= limits.d_safe {
        m.log.outcome = Outcome::Reached;
        return finish(m);
    }
    m.retrain(RetrainReason::Prior)?;

    let partition = build_partition(bounds, cfg.global.region_size)?;
    let global_cfg = GlobalConfig {
        d_step: cfg.global.d_step,
        region_size: cfg.global.region_size,
        budget: cfg.global.budget,
        refine: cfg.global.refine,
        goal_bias: cfg.global.goal_bias,
        edge_spacing: cfg.global.edge_spacing,
        bounds,
    };
    let local_cfg = LocalConfig {
        budget: cfg.local.budget,
        goal_bias: cfg.local.goal_bias,
        margin: cfg.local.margin,
        edge_spacing: cfg.local.edge_spacing,
        check_edges: true,
        bounds: Some(bounds),
        lookahead: 0,
    };

    let (mut idle, mut partial_run) = (0, 0);
    'mission: loop {
        let epoch = m.log.epochs.len();
        let belief = m.belief.clone();
        let coarse = belief.dilated(cfg.global.clearance, Some(BORDER_WALL));
        let mut global = None;
        let (mut global_error, mut local_error) = (None, None);
        // Clearance is dropped for a last attempt, e.g. when the pose itself lies within it.
        let tries = cfg.global.attempts.max(1);
        for attempt in 0..=tries {
            let terrain: &dyn ElevationBelief = if attempt < tries { &coarse } else { &belief };
            match lda_g_rrt(
                pose.position(),
                pose.theta,
                goal,
                terrain,
                &limits,
                &global_cfg,
                &mut plan_rng,
            ) {
                Ok(plan) => {
                    global = Some(plan);
                    break;
                }
                Err(e) => global_error = Some(e.to_string()),
            }
        }
        let (extracted, target, target_index) = match &global {
            Some(plan) => {
                let ex = extract_waypoints(&plan.path, &partition);
                let idx = ex
                    .iter()
                    .copied()
                    .find(|&i| (plan.path[i] - pose.position()).norm() > limits.d_safe)
                    .unwrap_or(plan.path.len() - 1);
                (ex, plan.path[idx], Some(idx))
            }
            None => (Vec::new(), goal, None),
        };

        let mut candidates = Vec::new();
        // Closest non-cornered vertex to the target over all failed trees.
        let mut nearest: Option<(f64, LocalTrajectory)> = None;
        for round in 0..=cfg.local.retries {
            let round_cfg = LocalConfig {
                lookahead: if round < cfg.local.retries {
                    cfg.local.lookahead
                } else {
                    0
                },
                ..local_cfg
            };
            for _ in 0..cfg.local.candidates {
                match grow_local_tree(pose, target, &belief, &limits, &round_cfg, &mut plan_rng) {
                    Ok((g, Some(i))) => candidates.push(g.trajectory_to(i, &belief, stance)),
                    Ok((g, None)) => {
                        local_error = Some(format!(
                            "local search exhausted {} iterations with {} vertices",
                            round_cfg.budget,
                            g.len()
                        ));
                        for i in 1..g.len() {
                            let d = (g.vertices[i].position() - target).norm();
                            if nearest.as_ref().is_none_or(|(best, _)| d < *best)
                                && has_continuation(
                                    &g.vertices[i],
                                    cfg.local.lookahead,
                                    &belief,
                                    &limits,
                                    &local_cfg,
                                )
                            {
                                nearest = Some((d, g.trajectory_to(i, &belief, stance)));
                            }
                        }
                    }
                    Err(e) => local_error = Some(e.to_string()),
                }
            }
            if !candidates.is_empty() {
                break;
            }
        }
        let partial =
            candidates.is_empty() && nearest.is_some() && partial_run < MAX_PARTIAL_EPOCHS;
        if partial {
            candidates.extend(nearest.map(|n| n.1));
        }
        let mut candidates: Vec<(LocalTrajectory, TrajectoryScores)> = candidates
            .into_iter()
            .map(|raw| {
                let traj = smooth(&raw, &belief, &limits, cfg.local.edge_spacing);
                let scores = TrajectoryScores {
                    error: score_error(&traj, &m.models.model_error, previous.as_ref()),
                    info: score_info(&traj, &belief),
                };
                (traj, scores)
            })
            .collect();
        let mut record = EpochRecord {
            epoch,
            start_step: m.log.steps.len(),
            pose,
            snapshot: belief.id,
            global_path: global
                .as_ref()
                .map(|p| p.path.iter().map(|q| [q.x, q.y]).collect()),
            extracted,
            target: [target.x, target.y],
            target_index,
            candidates: candidates
                .iter()
                .map(|(t, s)| CandidateRecord {
                    steps: t.steps(),
                    scores: *s,
                })
                .collect(),
            selected: None,
            partial,
            executed_steps: 0,
            global_error,
            local_error,
        };
        if candidates.is_empty() {
            m.log.epochs.push(record);
            m.log.outcome = Outcome::FailedUntraversable;
            break;
        }
        let scores: Vec<TrajectoryScores> = candidates.iter().map(|c| c.1).collect();
        let chosen = select_trajectory(&scores, cfg.local.alpha_w, cfg.local.beta_w)?;
        record.selected = Some(chosen);
        let traj: LocalTrajectory = candidates.swap_remove(chosen).0;
        let contexts = step_contexts(&traj, previous.as_ref());

        let mut outcome = None;
        for (k, action) in traj.actions.iter().enumerate() {
            let from = traj.waypoints[k];
            let planned = traj.waypoints[k + 1];
            let apex = ApexState::nominal(from, belief.mean(from.position()), stance, &cfg.pipm);
            let foot = plan_step(&apex, action, &cfg.pipm, &limits, &belief)
                .ok()
                .map(|p| p.p_foot);
            let (realized, off) =
                perturb_execution(&planned, &contexts[k], &m.models.oracle, &mut perturb_rng);
            let deviation = off.dot(&unit(planned.theta + FRAC_PI_2));
            let samples = sense(
                m.field,
                bounds.clamp(realized.position()),
                &cfg.sensor,
                &mut sensor_rng,
            )?;
            m.model.add(&samples);
            m.log.steps.push(StepRecord {
                step: m.log.steps.len(),
                epoch,
                planned,
                action: *action,
                deviation,
                offset: [off.x, off.y],
                realized,
                foot,
                samples,
                snapshot: belief.id,
            });
            record.executed_steps += 1;
            pose = realized;
            stance = action.psi;
            previous = Some(*action);
            m.since_retrain += 1;
            if (realized.position() - goal).norm() <= limits.d_safe {
                outcome = Some(Outcome::Reached);
                break;
            }
            if m.log.steps.len() >= cfg.max_steps {
                outcome = Some(Outcome::BudgetExhausted);
                break;
            }
            if m.since_retrain >= cfg.retrain_period {
                // The next epoch replans on the retrained belief.
                m.retrain(RetrainReason::Period)?;
                break;
            }
        }
        let executed = record.executed_steps;
        m.log.epochs.push(record);
        if let Some(o) = outcome {
            m.log.outcome = o;
            break 'mission;
        }
        idle = if executed == 0 { idle + 1 } else { 0 };
        partial_run = if partial { partial_run + 1 } else { 0 };
        if idle >= MAX_IDLE_EPOCHS {
            m.log.outcome = Outcome::FailedUntraversable;
            break;
        }
        if m.since_retrain > 0 {
            m.retrain(RetrainReason::Segment)?;
        }
    }
    if m.since_retrain > 0 {
        m.retrain(RetrainReason::Final)?;
    }
    finish(m)
}

fn finish(mut m: Mission<'_>) -> Result<MissionLog> {
    if m.log.retrains.is_empty() {
        m.model.condition()?;
        m.belief = m.model.snapshot()?;
    }
    m.log.final_map = Some(m.belief.clone());
    let pts = m.log.realized_positions();
    let (mean, var) = if pts.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        m.model.predict(&pts)?
    };
    m.log.final_path = mean.into_iter().zip(var).map(|(a, b)| [a, b]).collect();
    Ok(m.log)
}
