//! Quasi-static push simulation.
//!
//! A spherical finger sweeps a straight segment at a fixed height. Boxes
//! whose top reaches into the finger's sweep band are shoved out of the
//! finger disk along the contact normal, and box-box overlaps propagate as
//! a depth-first chain. Boxes only translate; nothing rotates or topples.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, Rect, Vec2};
use crate::scene::{Block, Scene};

/// Finger advance per substep, cm.
pub const SUBSTEP: f64 = 0.1;
/// Relaxation passes allowed per substep.
pub const MAX_RESOLVE_ITERS: usize = 64;
/// Largest box-box interpenetration tolerated at rest, cm.
pub const REST_OVERLAP_TOL: f64 = 0.05;
/// Center displacement that counts as "moved", cm.
pub const MOVE_EPS: f64 = 1e-6;
/// Slack on height comparisons against the sweep band.
const HEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PhysicsError {
    #[error("contact resolution did not converge (residual overlap {residual:.4} cm)")]
    NonConvergent { residual: f64 },
}

/// Which push family an action belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    Target,
    Obstacle,
    Extra,
}

impl Primitive {
    pub fn from_index(i: usize) -> Option<Primitive> {
        match i {
            0 => Some(Primitive::Target),
            1 => Some(Primitive::Obstacle),
            2 => Some(Primitive::Extra),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Primitive::Target => 0,
            Primitive::Obstacle => 1,
            Primitive::Extra => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Target => "push_target",
            Primitive::Obstacle => "push_obstacle",
            Primitive::Extra => "push_extra",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Finger {
    pub radius: f64,
    /// Height of the sphere center during the sweep.
    pub center_height: f64,
}

impl Finger {
    /// Finger for a push: rolling on the surface, except the obstacle push
    /// which sweeps at the start point's height.
    pub fn for_push(radius: f64, push: &PushSpec) -> Finger {
        let center_height = match push.primitive {
            Primitive::Obstacle => push.p0[2],
            Primitive::Target | Primitive::Extra => radius,
        };
        Finger {
            radius,
            center_height,
        }
    }

    fn sweep_bottom(&self) -> f64 {
        self.center_height - self.radius
    }

    /// Whether a box of this height reaches into the sweep band.
    pub fn reaches(&self, block: &Block) -> bool {
        block.height() > self.sweep_bottom() + HEIGHT_EPS
    }
}

/// A fully resolved push. `p0` is in the target frame: origin at the
/// target center, axes parallel to the workspace axes. The finger travels
/// from `p0` to `p0 + distance * [cos θ, sin θ, 0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushSpec {
    pub p0: [f64; 3],
    pub theta: f64,
    pub distance: f64,
    pub primitive: Primitive,
}

impl PushSpec {
    pub fn direction(&self) -> Vec2 {
        geometry::unit(self.theta)
    }

    pub fn start_world(&self, scene: &Scene) -> Vec2 {
        geometry::add(scene.target.center, [self.p0[0], self.p0[1]])
    }

    pub fn end_world(&self, scene: &Scene) -> Vec2 {
        geometry::add(self.start_world(scene), geometry::scale(self.direction(), self.distance))
    }

    fn check(&self) {
        debug_assert!(self.distance > 0.0, "push distance must be positive");
        debug_assert!((0.0..TAU).contains(&self.theta), "push angle outside [0, 2π)");
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushOutcome {
    pub scene_after: Scene,
    pub moved_any: bool,
    pub target_moved: bool,
    pub target_off_surface: bool,
    pub approach_collision: bool,
    pub obstacles_removed: Vec<u32>,
}

impl PushOutcome {
    /// Outcome of a push aborted on the way down to `p0`.
    pub fn collided(scene: &Scene) -> PushOutcome {
        PushOutcome {
            scene_after: scene.clone(),
            moved_any: false,
            target_moved: false,
            target_off_surface: false,
            approach_collision: true,
            obstacles_removed: Vec::new(),
        }
    }
}

/// One substep of a sweep, for replay animation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub step: usize,
    pub finger: Vec2,
    /// `(id, x, y)` of every box still on the surface.
    pub boxes: Vec<(u32, f64, f64)>,
}

/// True iff the finger, descending vertically onto `p0`, would hit a box.
pub fn check_approach(scene: &Scene, push: &PushSpec, finger: &Finger) -> bool {
    let p = push.start_world(scene);
    scene.blocks().any(|b| {
        finger.reaches(b) && geometry::rect_distance_to_point(&b.footprint(), p) < finger.radius
    })
}

/// Runs the sweep. The caller is expected to have checked the approach;
/// see [`simulate`] for the combined entry point.
pub fn execute_push(scene: &Scene, push: &PushSpec, finger: &Finger) -> Result<PushOutcome, PhysicsError> {
    Sweep::new(scene, push, finger).run(None)
}

/// Like [`execute_push`], also recording every substep.
pub fn execute_push_traced(
    scene: &Scene,
    push: &PushSpec,
    finger: &Finger,
) -> Result<(PushOutcome, Vec<TraceFrame>), PhysicsError> {
    let mut frames = Vec::new();
    let out = Sweep::new(scene, push, finger).run(Some(&mut frames))?;
    Ok((out, frames))
}

/// Approach check followed by the sweep.
pub fn simulate(scene: &Scene, push: &PushSpec, finger: &Finger) -> Result<PushOutcome, PhysicsError> {
    if check_approach(scene, push, finger) {
        return Ok(PushOutcome::collided(scene));
    }
    execute_push(scene, push, finger)
}

/// Writes a trace as JSON lines.
pub fn write_trace<W: std::io::Write>(frames: &[TraceFrame], mut out: W) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

struct Sweep<'a> {
    scene: &'a Scene,
    push: &'a PushSpec,
    finger: &'a Finger,
    dir: Vec2,
    /// Target at index 0, then obstacles.
    blocks: Vec<Block>,
    present: Vec<bool>,
}

impl<'a> Sweep<'a> {
    fn new(scene: &'a Scene, push: &'a PushSpec, finger: &'a Finger) -> Self {
        push.check();
        let blocks: Vec<Block> = scene.blocks().cloned().collect();
        let present = vec![true; blocks.len()];
        Self {
            scene,
            push,
            finger,
            dir: push.direction(),
            blocks,
            present,
        }
    }

    fn rect(&self, i: usize) -> Rect {
        self.blocks[i].footprint()
    }

    fn shift(&mut self, i: usize, t: Vec2) {
        let c = &mut self.blocks[i].center;
        *c = geometry::add(*c, t);
    }

    /// Translation for a box pushed along contact normal `n` by `depth`,
    /// kept out of the backward half-plane of the push.
    fn box_translation(&self, n: Vec2, depth: f64, pusher: &Rect, pushed: &Rect) -> Vec2 {
        if geometry::dot(n, self.dir) >= -1e-12 {
            return geometry::scale(n, depth);
        }
        let u = self.lateral(n);
        geometry::scale(u, geometry::separation_along(pusher, pushed, u))
    }

    fn finger_translation(&self, n: Vec2, depth: f64, finger_pos: Vec2, pushed: &Rect) -> Vec2 {
        if geometry::dot(n, self.dir) >= -1e-12 {
            return geometry::scale(n, depth);
        }
        let u = self.lateral(n);
        geometry::scale(
            u,
            geometry::disk_separation_along(pushed, finger_pos, self.finger.radius, u),
        )
    }

    /// Component of `n` orthogonal to the push, normalized; falls back to
    /// the push direction when `n` is (anti)parallel to it.
    fn lateral(&self, n: Vec2) -> Vec2 {
        let along = geometry::dot(n, self.dir);
        let perp = geometry::sub(n, geometry::scale(self.dir, along));
        let len = geometry::norm(perp);
        if len < 1e-9 {
            self.dir
        } else {
            geometry::scale(perp, 1.0 / len)
        }
    }

    /// Moves box `i` by `t`, then recursively shoves whatever it now
    /// overlaps.
    fn chain_push(&mut self, i: usize, t: Vec2, depth: usize) {
        self.shift(i, t);
        if depth >= self.blocks.len() {
            return;
        }
        for j in 0..self.blocks.len() {
            if j == i || !self.present[j] {
                continue;
            }
            let (ri, rj) = (self.rect(i), self.rect(j));
            if let Some((n, d)) = geometry::penetration(&ri, &rj) {
                let tj = self.box_translation(n, d, &ri, &rj);
                self.chain_push(j, tj, depth + 1);
            }
        }
    }

    fn finger_contacts(&mut self, pos: Vec2) -> bool {
        let mut any = false;
        for i in 0..self.blocks.len() {
            if !self.present[i] || !self.finger.reaches(&self.blocks[i]) {
                continue;
            }
            let r = self.rect(i);
            if let Some((n, d)) = geometry::disk_penetration(&r, pos, self.finger.radius) {
                let t = self.finger_translation(n, d, pos, &r);
                self.chain_push(i, t, 0);
                any = true;
            }
        }
        any
    }

    /// Global pass: separate every remaining overlap, moving the box that
    /// sits further along the push.
    fn relax(&mut self, pos: Vec2) -> Result<(), PhysicsError> {
        for _ in 0..MAX_RESOLVE_ITERS {
            let mut dirty = self.finger_contacts(pos);
            for i in 0..self.blocks.len() {
                for j in i + 1..self.blocks.len() {
                    if !self.present[i] || !self.present[j] {
                        continue;
                    }
                    let (ri, rj) = (self.rect(i), self.rect(j));
                    if geometry::penetration(&ri, &rj).is_none() {
                        continue;
                    }
                    let ahead_j = geometry::dot(rj.center, self.dir) >= geometry::dot(ri.center, self.dir);
                    let (pusher, pushed) = if ahead_j { (i, j) } else { (j, i) };
                    let (rp, rq) = (self.rect(pusher), self.rect(pushed));
                    if let Some((n, d)) = geometry::penetration(&rp, &rq) {
                        let t = self.box_translation(n, d, &rp, &rq);
                        self.shift(pushed, t);
                        dirty = true;
                    }
                }
            }
            if !dirty {
                return Ok(());
            }
        }
        let residual = self.max_overlap();
        if residual > REST_OVERLAP_TOL {
            Err(PhysicsError::NonConvergent { residual })
        } else {
            Ok(())
        }
    }

    fn max_overlap(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.blocks.len() {
            for j in i + 1..self.blocks.len() {
                if self.present[i] && self.present[j] {
                    if let Some((_, d)) = geometry::penetration(&self.rect(i), &self.rect(j)) {
                        worst = worst.max(d);
                    }
                }
            }
        }
        worst
    }

    fn frame(&self, step: usize, pos: Vec2) -> TraceFrame {
        TraceFrame {
            step,
            finger: pos,
            boxes: self
                .blocks
                .iter()
                .zip(&self.present)
                .filter(|(_, &p)| p)
                .map(|(b, _)| (b.id, b.center[0], b.center[1]))
                .collect(),
        }
    }

    fn run(mut self, mut trace: Option<&mut Vec<TraceFrame>>) -> Result<PushOutcome, PhysicsError> {
        let start = self.push.start_world(self.scene);
        let steps = (self.push.distance / SUBSTEP).ceil().max(1.0) as usize;
        let w = self.scene.workspace_half;
        let mut target_off = false;
        let mut removed = Vec::new();
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.frame(0, start));
        }
        for s in 1..=steps {
            let travel = (s as f64 * SUBSTEP).min(self.push.distance);
            let pos = geometry::add(start, geometry::scale(self.dir, travel));
            self.finger_contacts(pos);
            self.relax(pos)?;
            for i in 0..self.blocks.len() {
                if !self.present[i] {
                    continue;
                }
                let c = self.blocks[i].center;
                if c[0].abs() > w || c[1].abs() > w {
                    if i == 0 {
                        target_off = true;
                    } else {
                        self.present[i] = false;
                        removed.push(self.blocks[i].id);
                    }
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.frame(s, pos));
            }
            if target_off {
                break;
            }
        }

        let moved = |a: &Block, b: &Block| geometry::norm(geometry::sub(a.center, b.center)) > MOVE_EPS;
        let target_moved = moved(&self.blocks[0], &self.scene.target);
        let moved_any = target_moved
            || !removed.is_empty()
            || self
                .blocks
                .iter()
                .skip(1)
                .zip(&self.scene.obstacles)
                .any(|(a, b)| moved(a, b));
        let mut blocks = self.blocks.into_iter().zip(self.present);
        let (target, _) = blocks.next().expect("target present");
        let obstacles = blocks.filter(|(_, p)| *p).map(|(b, _)| b).collect();
        Ok(PushOutcome {
            scene_after: Scene::new(target, obstacles, w),
            moved_any,
            target_moved,
            target_off_surface: target_off,
            approach_collision: false,
            obstacles_removed: removed,
        })
    }
}
