//! The per-frame tracking loop.
//!
//! A [`TrackerSession`] precomputes the kernel and LLE weights once and then,
//! for every frame, downsamples the cloud, computes the visibility prior,
//! predicts with the motion model, runs EM and projects the result onto the
//! constraint set.

use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::{DepthRaster, MaskRaster, PinholeCamera};
use crate::constraints::{
    gen_correspondence_constraints, gen_obstacle_constraints, gen_self_intersection_constraints,
    gen_stretch_constraints, solve_projection, ConstraintSet, ObstacleSet, ProjectionStatus,
};
use crate::geometry::{
    build_gaussian_kernel, compute_lle_weights, voxel_downsample, DeformableTemplate, KernelMatrix,
    LleWeights,
};
use crate::prediction::{DiminishingRigidity, GripperState, ModelId, MotionModel, NoMotion};
use crate::registration::{gmm_em, visibility_prior, EmOperators, TrackerParams};
use crate::scenes::{Frame, MetricSeries, SceneSequence};
use crate::{Result, TrackError, Vec3};

/// Which constraint families are assembled each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintToggles {
    pub stretch: bool,
    pub correspondence: bool,
    pub self_intersection: bool,
    pub obstacle: bool,
}

impl Default for ConstraintToggles {
    fn default() -> Self {
        Self {
            stretch: true,
            correspondence: true,
            self_intersection: true,
            obstacle: true,
        }
    }
}

/// Everything the tracker receives for one frame.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub cloud: &'a [Vec3],
    pub depth: Option<&'a DepthRaster>,
    pub mask: Option<&'a MaskRaster>,
    pub camera: Option<&'a PinholeCamera>,
    pub grippers: &'a [GripperState],
    /// Seconds since the previous frame.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    pub stretch: usize,
    pub correspondence: usize,
    pub self_intersection: usize,
    pub obstacle: usize,
    /// Self-intersection pairs with no separating direction.
    pub skipped_self_intersection: usize,
}

/// Wall-clock milliseconds per stage. Not serialized so that trajectory
/// files stay reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    pub downsample_ms: f64,
    pub prior_ms: f64,
    pub prediction_ms: f64,
    pub em_ms: f64,
    pub constraints_ms: f64,
    pub projection_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub frame: usize,
    pub cloud_points: usize,
    pub downsampled_points: usize,
    pub em_iterations: usize,
    pub em_converged: bool,
    pub unobserved: bool,
    pub sigma2_history: Vec<f64>,
    pub rows: RowCounts,
    pub projection_status: ProjectionStatus,
    pub projection_objective: f64,
    pub max_violation: f64,
    pub dropped_rows: usize,
    #[serde(skip)]
    pub timings: StepTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub points: Vec<Vec3>,
    /// EM estimate before projection.
    pub em_points: Vec<Vec3>,
    pub diagnostics: StepDiagnostics,
}

/// Cross-frame tracking state for one object.
pub struct TrackerSession {
    template: DeformableTemplate,
    kernel: KernelMatrix,
    lle: LleWeights,
    ops: EmOperators,
    params: TrackerParams,
    obstacles: ObstacleSet,
    model: Option<Box<dyn MotionModel>>,
    toggles: ConstraintToggles,
    estimate: Vec<Vec3>,
    frame: usize,
    history: Vec<StepDiagnostics>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl TrackerSession {
    /// Starts from the template configuration.
    pub fn new(
        template: DeformableTemplate,
        obstacles: ObstacleSet,
        params: TrackerParams,
        model: ModelId,
        toggles: ConstraintToggles,
    ) -> Result<Self> {
        params.validate()?;
        let kernel = build_gaussian_kernel(template.geodesic(), params.beta)?;
        let lle = compute_lle_weights(template.points(), params.k_lle_neighbors)?;
        let ops = EmOperators::new(&kernel, &lle)?;
        let model: Option<Box<dyn MotionModel>> = match model {
            ModelId::None => None,
            ModelId::NoMotion => Some(Box::new(NoMotion)),
            ModelId::DiminishingRigidity => Some(Box::new(DiminishingRigidity {
                geodesic: template.geodesic().clone(),
                k: params.k_rigidity,
            })),
        };
        Ok(Self {
            estimate: template.points().to_vec(),
            template,
            kernel,
            lle,
            ops,
            params,
            obstacles,
            model,
            toggles,
            frame: 0,
            history: Vec::new(),
        })
    }

    pub fn template(&self) -> &DeformableTemplate {
        &self.template
    }

    pub fn kernel(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub fn lle(&self) -> &LleWeights {
        &self.lle
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn model(&self) -> ModelId {
        self.model.as_ref().map_or(ModelId::None, |m| m.id())
    }

    /// Current estimate, `M` nodes.
    pub fn estimate(&self) -> &[Vec3] {
        &self.estimate
    }

    /// Number of completed steps.
    pub fn frame_index(&self) -> usize {
        self.frame
    }

    pub fn history(&self) -> &[StepDiagnostics] {
        &self.history
    }

    /// Constraint rows for the given grippers, linearized at the current
    /// estimate.
    pub fn build_constraints(&self, grippers: &[GripperState]) -> Result<(ConstraintSet, usize)> {
        let prev = &self.estimate;
        let mut set = ConstraintSet::default();
        let mut skipped = 0;
        if self.toggles.stretch {
            set.stretch = gen_stretch_constraints(&self.template, self.params.lambda)?;
        }
        if self.toggles.correspondence && !grippers.is_empty() {
            for g in grippers {
                g.validate(prev.len())?;
            }
            let targets: Vec<(usize, Vec3)> =
                grippers.iter().flat_map(|g| g.grasp_targets()).collect();
            set.correspondence = gen_correspondence_constraints(&targets)?;
        }
        if self.toggles.self_intersection {
            let rows = gen_self_intersection_constraints(
                prev,
                self.template.edges(),
                self.params.s_check,
                self.params.s,
            )?;
            skipped = rows.skipped.len();
            set.self_intersection = rows.rows;
        }
        if self.toggles.obstacle {
            set.obstacle =
                gen_obstacle_constraints(prev, &self.obstacles, self.params.obstacle_margin);
        }
        Ok((set, skipped))
    }

    /// Tracks one frame and advances the session.
    pub fn step(&mut self, obs: &Observation<'_>) -> Result<StepResult> {
        if !obs.cloud.iter().all(|p| p.iter().all(|v| v.is_finite())) {
            return Err(TrackError::NonFinite("observation cloud"));
        }
        let start = Instant::now();
        let mut timings = StepTimings::default();

        let t = Instant::now();
        let cloud = voxel_downsample(obs.cloud, self.params.voxel_size)?;
        timings.downsample_ms = ms_since(t);

        let t = Instant::now();
        let prior = visibility_prior(
            &self.estimate,
            obs.depth,
            obs.mask,
            obs.camera,
            self.params.k_vis,
            self.params.w,
        )?;
        timings.prior_ms = ms_since(t);

        // The prediction depends only on the previous estimate and the
        // gripper motion, so it is computed once rather than per EM step.
        let t = Instant::now();
        let prediction = match &self.model {
            Some(model) => {
                Some(model.predict(&self.estimate, obs.grippers, &self.obstacles, obs.dt)?)
            }
            None => None,
        };
        timings.prediction_ms = ms_since(t);

        let t = Instant::now();
        let em = gmm_em(
            &self.estimate,
            &cloud,
            &self.ops,
            &prior,
            &self.params,
            prediction.as_ref().map(|p| p.points.as_slice()),
        )?;
        timings.em_ms = ms_since(t);

        let t = Instant::now();
        let (set, skipped) = self.build_constraints(obs.grippers)?;
        timings.constraints_ms = ms_since(t);

        let t = Instant::now();
        let projection = solve_projection(&em.points, &set)?;
        timings.projection_ms = ms_since(t);
        timings.total_ms = ms_since(start);

        let diagnostics = StepDiagnostics {
            frame: self.frame,
            cloud_points: obs.cloud.len(),
            downsampled_points: cloud.len(),
            em_iterations: em.iterations,
            em_converged: em.converged,
            unobserved: em.unobserved,
            sigma2_history: em.sigma2_history,
            rows: RowCounts {
                stretch: set.stretch.len(),
                correspondence: set.correspondence.len(),
                self_intersection: set.self_intersection.len(),
                obstacle: set.obstacle.len(),
                skipped_self_intersection: skipped,
            },
            projection_status: projection.status,
            projection_objective: projection.objective,
            max_violation: projection.max_violation,
            dropped_rows: projection.dropped.len(),
            timings,
        };
        self.estimate = projection.points.clone();
        self.frame += 1;
        self.history.push(diagnostics.clone());
        Ok(StepResult {
            points: projection.points,
            em_points: em.points,
            diagnostics,
        })
    }
}

impl<'a> Observation<'a> {
    /// Observation for one frame of a sequence.
    pub fn from_frame(frame: &'a Frame, camera: Option<&'a PinholeCamera>, dt: f64) -> Self {
        Self {
            cloud: &frame.cloud,
            depth: frame.depth.as_ref(),
            mask: frame.mask.as_ref(),
            camera,
            grippers: &frame.grippers,
            dt,
        }
    }
}

/// One line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: usize,
    pub points: Vec<Vec3>,
    pub diagnostics: StepDiagnostics,
}

/// A whole sequence tracked from the template configuration.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub records: Vec<TrajectoryRecord>,
    pub metrics: MetricSeries,
}

impl SequenceRun {
    /// Estimate before frame `i`: the template for frame 0.
    pub fn previous<'a>(&'a self, template: &'a DeformableTemplate, i: usize) -> &'a [Vec3] {
        if i == 0 {
            template.points()
        } else {
            &self.records[i - 1].points
        }
    }

    /// Writes one JSON object per frame. Timings are left out, so equal
    /// runs give equal bytes.
    pub fn write_trajectory<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Tracks every frame of `seq` with a fresh session.
pub fn track_sequence(
    seq: &SceneSequence,
    params: &TrackerParams,
    model: ModelId,
    toggles: ConstraintToggles,
) -> Result<SequenceRun> {
    let mut session = TrackerSession::new(
        seq.template.clone(),
        seq.obstacles.clone(),
        params.clone(),
        model,
        toggles,
    )?;
    let mut records = Vec::with_capacity(seq.frames.len());
    let mut metrics = MetricSeries::default();
    for frame in &seq.frames {
        let step = session.step(&Observation::from_frame(frame, seq.camera.as_ref(), seq.dt))?;
        metrics.push(&step.points, frame.ground_truth.as_deref(), &seq.obstacles)?;
        records.push(TrajectoryRecord {
            frame: step.diagnostics.frame,
            points: step.points,
            diagnostics: step.diagnostics,
        });
    }
    Ok(SequenceRun { records, metrics })
}
