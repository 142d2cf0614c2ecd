//! Planar reach task with a disk obstacle on the straight path.
//!
//! The agent moves by 2-D velocity commands (norm at most `max_speed` per
//! step) inside `[-1, 1]^2`. An episode succeeds when the agent comes within
//! `success_radius` of the goal before `horizon` steps; entering the
//! obstacle ends it as a failure. The scripted expert passes the obstacle on
//! a side chosen per episode, so the demonstrations are bimodal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::datasets::{Dataset, DatasetMeta};
use crate::diff::Array;
use crate::error::{Error, Result};
use crate::flow::{draw_noise_batch, sample, Codebook};
use crate::net::VelocityModel;

pub type Vec2 = [f64; 2];

/// Observation size: agent, goal, obstacle centre.
pub const OBS_DIM: usize = 6;
pub const ACTION_DIM: usize = 2;

/// Free space kept beside the obstacle on both sides.
pub const PASSAGE_WIDTH: f64 = 0.15;

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Rescales `a` to norm `max` if it is longer.
pub fn clip_norm(a: Vec2, max: f64) -> Vec2 {
    let n = norm(a);
    if n > max {
        [a[0] * max / n, a[1] * max / n]
    } else {
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub start: Vec2,
    pub goal: Vec2,
    pub obstacle: Option<Obstacle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachEnv {
    pub horizon: usize,
    pub success_radius: f64,
    pub max_speed: f64,
    pub obstacle_radius: f64,
    /// Probability that a scene has an obstacle on the straight path.
    pub obstacle_prob: f64,
    /// Actions per predicted chunk and how many run before re-planning.
    pub chunk: usize,
    pub execute: usize,
}

impl Default for ReachEnv {
    fn default() -> Self {
        Self {
            horizon: 50,
            success_radius: 0.05,
            max_speed: 0.1,
            obstacle_radius: 0.2,
            obstacle_prob: 1.0,
            chunk: 8,
            execute: 4,
        }
    }
}

impl ReachEnv {
    pub fn chunk_dim(&self) -> usize {
        self.chunk * ACTION_DIM
    }

    /// Start and goal 0.8 to 1.4 apart inside `[-0.9, 0.9]^2`; the obstacle
    /// centre sits on the segment between 40% and 60% of the way. Scenes where
    /// either side of the obstacle is walled off by the box are redrawn.
    pub fn sample_scene<R: Rng + ?Sized>(&self, rng: &mut R) -> Scene {
        loop {
            let start = [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)];
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dist = rng.random_range(0.8..1.4);
            let goal = [start[0] + dist * angle.cos(), start[1] + dist * angle.sin()];
            if goal.iter().any(|g| g.abs() > 0.9) {
                continue;
            }
            let obstacle = if rng.random::<f64>() < self.obstacle_prob {
                let u = rng.random_range(0.4..0.6);
                let center = [
                    start[0] + u * (goal[0] - start[0]),
                    start[1] + u * (goal[1] - start[1]),
                ];
                let reach = self.obstacle_radius + PASSAGE_WIDTH;
                let (ux, uy) = ((goal[0] - start[0]) / dist, (goal[1] - start[1]) / dist);
                let open = |s: f64| {
                    (center[0] - s * reach * uy).abs() <= 0.95
                        && (center[1] + s * reach * ux).abs() <= 0.95
                };
                if !open(1.0) || !open(-1.0) {
                    continue;
                }
                Some(Obstacle {
                    center,
                    radius: self.obstacle_radius,
                })
            } else {
                None
            };
            return Scene {
                start,
                goal,
                obstacle,
            };
        }
    }

    pub fn observe(&self, scene: &Scene, agent: Vec2) -> [f64; OBS_DIM] {
        // obstacle-free scenes report the goal as the obstacle centre
        let c = scene.obstacle.map_or(scene.goal, |o| o.center);
        [agent[0], agent[1], scene.goal[0], scene.goal[1], c[0], c[1]]
    }

    pub fn collides(&self, scene: &Scene, p: Vec2) -> bool {
        scene
            .obstacle
            .is_some_and(|o| norm(sub(p, o.center)) < o.radius)
    }

    pub fn reached(&self, scene: &Scene, p: Vec2) -> bool {
        norm(sub(p, scene.goal)) < self.success_radius
    }

    /// Applies one command (clipped to `max_speed`), keeping the agent in
    /// the box.
    pub fn step(&self, p: Vec2, action: Vec2) -> Vec2 {
        let a = clip_norm(action, self.max_speed);
        [
            (p[0] + a[0]).clamp(-1.0, 1.0),
            (p[1] + a[1]).clamp(-1.0, 1.0),
        ]
    }
}

/// Which side of the obstacle the expert passes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Detour {
    Left,
    Right,
}

impl Detour {
    fn sign(self) -> f64 {
        match self {
            Detour::Left => 1.0,
            Detour::Right => -1.0,
        }
    }
}

/// Proportional controller that heads for a waypoint beside the obstacle,
/// then for the goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertPolicy {
    pub gain: f64,
    /// Extra clearance of the waypoint beyond the obstacle radius.
    pub clearance: f64,
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        Self {
            gain: 0.8,
            clearance: 0.12,
        }
    }
}

impl ExpertPolicy {
    pub fn waypoint(&self, scene: &Scene, detour: Detour) -> Option<Vec2> {
        let o = scene.obstacle?;
        let axis = sub(scene.goal, scene.start);
        let len = norm(axis);
        let left = [-axis[1] / len, axis[0] / len];
        let off = detour.sign() * (o.radius + self.clearance);
        Some([o.center[0] + off * left[0], o.center[1] + off * left[1]])
    }

    /// Expert command at `agent`. Stateless given the episode's detour side.
    pub fn action(&self, env: &ReachEnv, scene: &Scene, detour: Detour, agent: Vec2) -> Vec2 {
        if let Some(w) = self.waypoint(scene, detour) {
            let axis = sub(scene.goal, scene.start);
            let before = dot(sub(agent, w), axis) < 0.0;
            let err = sub(w, agent);
            let n = norm(err);
            if before && n > env.success_radius {
                // full speed towards the waypoint
                return [err[0] / n * env.max_speed, err[1] / n * env.max_speed];
            }
        }
        let err = sub(scene.goal, agent);
        clip_norm([err[0] * self.gain, err[1] * self.gain], env.max_speed)
    }

    /// Next `env.chunk` commands from simulating the expert forward.
    pub fn chunk(&self, env: &ReachEnv, scene: &Scene, detour: Detour, agent: Vec2) -> Vec<Vec2> {
        let mut p = agent;
        (0..env.chunk)
            .map(|_| {
                let a = self.action(env, scene, detour, p);
                p = env.step(p, a);
                a
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scene: Scene,
    pub detour: Detour,
    pub success: bool,
    pub steps: usize,
    /// Side of the start-goal line the agent was on when passing the
    /// obstacle centre, `None` without obstacle.
    pub passed_on: Option<Detour>,
}

#[derive(Debug, Clone)]
pub struct Demos {
    pub dataset: Dataset,
    pub episodes: Vec<EpisodeRecord>,
}

fn side_of(scene: &Scene, p: Vec2) -> Detour {
    let axis = sub(scene.goal, scene.start);
    let rel = sub(p, scene.start);
    if axis[0] * rel[1] - axis[1] * rel[0] >= 0.0 {
        Detour::Left
    } else {
        Detour::Right
    }
}

/// Runs the expert for `episodes` seeded episodes and records
/// `(observation, next chunk of actions)` pairs from the successful ones.
/// Observations are raw positions (already in `[-1, 1]`); actions are stored
/// divided by `max_speed` so every coordinate lies in `[-1, 1]`.
pub fn collect_demos(
    env: &ReachEnv,
    expert: &ExpertPolicy,
    episodes: usize,
    seed: u64,
) -> Result<Demos> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    let mut obs_rows = Vec::new();
    let mut act_rows = Vec::new();
    let mut records = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut rng = episode_rng(seed, ep);
        let scene = env.sample_scene(&mut rng);
        let detour = if rng.random::<bool>() {
            Detour::Left
        } else {
            Detour::Right
        };
        let mut p = scene.start;
        let mut pairs = Vec::new();
        let mut success = false;
        let mut passed_on = None;
        let mut steps = 0;
        while steps < env.horizon {
            let chunk = expert.chunk(env, &scene, detour, p);
            pairs.push((env.observe(&scene, p), chunk.clone()));
            let next = env.step(p, chunk[0]);
            steps += 1;
            if let Some(o) = scene.obstacle {
                let axis = sub(scene.goal, scene.start);
                if passed_on.is_none() && dot(sub(next, o.center), axis) >= 0.0 {
                    passed_on = Some(side_of(&scene, next));
                }
            }
            p = next;
            if env.collides(&scene, p) {
                break;
            }
            if env.reached(&scene, p) {
                success = true;
                break;
            }
        }
        if success {
            for (o, chunk) in pairs {
                obs_rows.extend_from_slice(&o);
                for a in chunk {
                    act_rows.push(a[0] / env.max_speed);
                    act_rows.push(a[1] / env.max_speed);
                }
            }
        }
        records.push(EpisodeRecord {
            scene,
            detour,
            success,
            steps,
            passed_on,
        });
    }
    let n = obs_rows.len() / OBS_DIM;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "no successful demonstrations".into(),
        ));
    }
    let successes = records.iter().filter(|r| r.success).count();
    let dataset = Dataset::new(
        Array::matrix(n, env.chunk_dim(), act_rows),
        Some(Array::matrix(n, OBS_DIM, obs_rows)),
        DatasetMeta {
            name: "reach".into(),
            seed,
            params: serde_json::json!({
                "episodes": episodes,
                "successful": successes,
                "env": env,
                "expert": expert,
            }),
        },
    )?;
    Ok(Demos {
        dataset,
        episodes: records,
    })
}

/// Independent stream per episode index.
pub fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Produces action chunks (in environment units) from observations.
pub trait ChunkPolicy {
    /// Called once per episode before the first chunk.
    fn reset(&mut self, _scene: &Scene, _rng: &mut ChaCha8Rng) {}

    fn chunk(
        &mut self,
        env: &ReachEnv,
        scene: &Scene,
        obs: &[f64; OBS_DIM],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec2>>;
}

/// The scripted expert as a policy; the detour side is drawn at reset.
#[derive(Debug, Clone)]
pub struct ExpertAsPolicy {
    pub expert: ExpertPolicy,
    detour: Detour,
}

impl ExpertAsPolicy {
    pub fn new(expert: ExpertPolicy) -> Self {
        Self {
            expert,
            detour: Detour::Left,
        }
    }
}

impl ChunkPolicy for ExpertAsPolicy {
    fn reset(&mut self, _scene: &Scene, rng: &mut ChaCha8Rng) {
        self.detour = if rng.random::<bool>() {
            Detour::Left
        } else {
            Detour::Right
        };
    }

    fn chunk(
        &mut self,
        env: &ReachEnv,
        scene: &Scene,
        obs: &[f64; OBS_DIM],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec2>> {
        Ok(self.expert.chunk(env, scene, self.detour, [obs[0], obs[1]]))
    }
}

/// Always commands zero velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl ChunkPolicy for ZeroPolicy {
    fn chunk(
        &mut self,
        env: &ReachEnv,
        _scene: &Scene,
        _obs: &[f64; OBS_DIM],
        _rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec2>> {
        Ok(vec![[0.0, 0.0]; env.chunk])
    }
}

/// A trained velocity model sampled with `steps` Euler steps.
pub struct FlowPolicy<'m> {
    pub model: &'m VelocityModel,
    pub steps: usize,
    pub codebook: Option<&'m Codebook>,
}

impl ChunkPolicy for FlowPolicy<'_> {
    fn chunk(
        &mut self,
        env: &ReachEnv,
        _scene: &Scene,
        obs: &[f64; OBS_DIM],
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Vec2>> {
        let dim = env.chunk_dim();
        let x0 = draw_noise_batch(self.codebook, 1, dim, rng);
        let o = Array::matrix(1, OBS_DIM, obs.to_vec());
        let x1 = sample(self.model, &x0, Some(&o), self.steps)?;
        Ok(x1
            .data()
            .chunks_exact(ACTION_DIM)
            .map(|a| [a[0] * env.max_speed, a[1] * env.max_speed])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub collided: bool,
    pub steps: usize,
}

/// One closed-loop episode: predict a chunk, run its first `env.execute`
/// actions, re-plan.
pub fn run_episode<P: ChunkPolicy + ?Sized>(
    env: &ReachEnv,
    policy: &mut P,
    scene: &Scene,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeOutcome> {
    policy.reset(scene, rng);
    let mut p = scene.start;
    let mut steps = 0;
    while steps < env.horizon {
        let obs = env.observe(scene, p);
        let chunk = policy.chunk(env, scene, &obs, rng)?;
        for a in chunk.iter().take(env.execute) {
            p = env.step(p, *a);
            steps += 1;
            if env.collides(scene, p) {
                return Ok(EpisodeOutcome {
                    success: false,
                    collided: true,
                    steps,
                });
            }
            if env.reached(scene, p) {
                return Ok(EpisodeOutcome {
                    success: true,
                    collided: false,
                    steps,
                });
            }
            if steps >= env.horizon {
                break;
            }
        }
    }
    Ok(EpisodeOutcome {
        success: false,
        collided: false,
        steps,
    })
}

/// Fraction of `episodes` seeded episodes that reach the goal. Episode `i`
/// draws its scene and all policy noise from [`episode_rng`]`(seed, i)`, so
/// the result depends only on the policy and `seed`.
pub fn rollout_policy<P: ChunkPolicy + ?Sized>(
    env: &ReachEnv,
    policy: &mut P,
    episodes: usize,
    seed: u64,
) -> Result<f64> {
    if episodes == 0 {
        return Ok(0.0);
    }
    let mut successes = 0;
    for ep in 0..episodes {
        let mut rng = episode_rng(seed ^ 0x005e_ed0f_e7a1, ep);
        let scene = env.sample_scene(&mut rng);
        if run_episode(env, policy, &scene, &mut rng)?.success {
            successes += 1;
        }
    }
    Ok(successes as f64 / episodes as f64)
}
