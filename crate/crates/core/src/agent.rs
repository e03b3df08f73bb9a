//! The online exploration loop: pick a goal, move towards it, compare the
//! forward model's prediction with what the camera sees, update learning
//! progress, and refit both models every full buffer with memory replay.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::{pretrain_on_world, Autoencoder, LatentCode, PretrainConfig, PretrainReport};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::memory::EpisodicMemory;
use crate::models::{evaluate_mse, ForwardModel, InverseModel, ModelConfig, SensorimotorSample, TestPair};
use crate::motivation::{compute_pe, init_goals, GoalSet, SelectionPolicy};
use crate::nn::save_weights;
use crate::world::{generate_world, load_dataset, Extent, MotorCommand, SimState, WorldConfig, WorldDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub world: WorldConfig,
    pub world_seed: u64,
    /// Load the world from a dataset file instead of generating it.
    pub dataset_path: Option<PathBuf>,
    pub latent_dim: usize,
    pub pretrain: PretrainConfig,
    /// Load a pretrained autoencoder from this directory instead of training one.
    pub encoder_path: Option<PathBuf>,
    pub iterations: usize,
    pub buffer_len: usize,
    pub eval_every: usize,
    pub testset_size: usize,
    pub n_goals: usize,
    pub policy: SelectionPolicy,
    pub motor_noise_sigma: f64,
    pub seed: u64,
    pub mem_batches: usize,
    pub p_em: f64,
    pub update_per_batch: bool,
    pub samples_per_move: usize,
    /// Put intermediate trajectory observations into the training buffer too.
    pub record_trajectory: bool,
    pub models: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            world_seed: 1,
            dataset_path: None,
            latent_dim: 16,
            pretrain: PretrainConfig::default(),
            encoder_path: None,
            iterations: 2000,
            buffer_len: 16,
            eval_every: 50,
            testset_size: 50,
            n_goals: 9,
            policy: SelectionPolicy::default(),
            motor_noise_sigma: 0.05,
            seed: 0,
            mem_batches: 20,
            p_em: 0.1,
            update_per_batch: false,
            samples_per_move: 1,
            record_trajectory: false,
            models: ModelConfig::default(),
        }
    }
}

fn set_opt<T: std::str::FromStr>(kv: &KvFile, key: &str, slot: &mut T) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = kv.get(key)? {
        *slot = v;
    }
    Ok(())
}

const RUN_KEYS: &[&str] = &[
    "world.grid_w",
    "world.grid_h",
    "world.img_w",
    "world.img_h",
    "world.x_min",
    "world.x_max",
    "world.y_min",
    "world.y_max",
    "world.blobs",
    "world.radius_min",
    "world.radius_max",
    "world.amplitude_min",
    "world.amplitude_max",
    "world.window",
    "world.seed",
    "world.dataset",
    "encoder.latent",
    "encoder.epochs",
    "encoder.minibatch",
    "encoder.learning_rate",
    "encoder.path",
    "loop.iterations",
    "loop.buffer_len",
    "loop.eval_every",
    "loop.testset_size",
    "loop.n_goals",
    "loop.epsilon_goal",
    "loop.p_random_move",
    "loop.motor_noise_sigma",
    "loop.decay",
    "loop.seed",
    "memory.batches",
    "memory.p_em",
    "memory.update_per_batch",
    "sim.samples_per_move",
    "sim.record_trajectory",
    "models.learning_rate",
    "models.momentum",
    "models.decay",
    "models.epochs_per_fit",
    "models.minibatch",
];

impl RunConfig {
    /// The full-length configuration: 5000 iterations and a 32-d latent space.
    pub fn full_scale() -> Self {
        Self {
            iterations: 5000,
            latent_dim: 32,
            ..Self::default()
        }
    }

    pub fn is_known_key(key: &str) -> bool {
        RUN_KEYS.contains(&key)
    }

    /// Overrides defaults with any `world.*`, `encoder.*`, `loop.*`,
    /// `memory.*`, `sim.*` and `models.*` keys. Keys outside `allow_prefixes`
    /// and not recognised are rejected.
    pub fn apply_kv(&mut self, kv: &KvFile, allow_prefixes: &[&str]) -> Result<()> {
        for key in kv.keys() {
            if !Self::is_known_key(key) && !allow_prefixes.iter().any(|p| key.starts_with(p)) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
        }
        let w = &mut self.world;
        set_opt(kv, "world.grid_w", &mut w.grid_w)?;
        set_opt(kv, "world.grid_h", &mut w.grid_h)?;
        set_opt(kv, "world.img_w", &mut w.img_w)?;
        set_opt(kv, "world.img_h", &mut w.img_h)?;
        set_opt(kv, "world.x_min", &mut w.extent.x_min)?;
        set_opt(kv, "world.x_max", &mut w.extent.x_max)?;
        set_opt(kv, "world.y_min", &mut w.extent.y_min)?;
        set_opt(kv, "world.y_max", &mut w.extent.y_max)?;
        set_opt(kv, "world.blobs", &mut w.blobs)?;
        set_opt(kv, "world.radius_min", &mut w.radius_min)?;
        set_opt(kv, "world.radius_max", &mut w.radius_max)?;
        set_opt(kv, "world.amplitude_min", &mut w.amplitude_min)?;
        set_opt(kv, "world.amplitude_max", &mut w.amplitude_max)?;
        set_opt(kv, "world.window", &mut w.window)?;
        set_opt(kv, "world.seed", &mut self.world_seed)?;
        if let Some(p) = kv.get_str("world.dataset") {
            self.dataset_path = (!p.is_empty()).then(|| PathBuf::from(p));
        }
        set_opt(kv, "encoder.latent", &mut self.latent_dim)?;
        set_opt(kv, "encoder.epochs", &mut self.pretrain.epochs)?;
        set_opt(kv, "encoder.minibatch", &mut self.pretrain.minibatch)?;
        set_opt(kv, "encoder.learning_rate", &mut self.pretrain.learning_rate)?;
        if let Some(p) = kv.get_str("encoder.path") {
            self.encoder_path = (!p.is_empty()).then(|| PathBuf::from(p));
        }
        set_opt(kv, "loop.iterations", &mut self.iterations)?;
        set_opt(kv, "loop.buffer_len", &mut self.buffer_len)?;
        set_opt(kv, "loop.eval_every", &mut self.eval_every)?;
        set_opt(kv, "loop.testset_size", &mut self.testset_size)?;
        set_opt(kv, "loop.n_goals", &mut self.n_goals)?;
        set_opt(kv, "loop.epsilon_goal", &mut self.policy.epsilon_goal)?;
        set_opt(kv, "loop.p_random_move", &mut self.policy.p_random_move)?;
        set_opt(kv, "loop.motor_noise_sigma", &mut self.motor_noise_sigma)?;
        set_opt(kv, "loop.decay", &mut self.policy.decay)?;
        set_opt(kv, "loop.seed", &mut self.seed)?;
        set_opt(kv, "memory.batches", &mut self.mem_batches)?;
        set_opt(kv, "memory.p_em", &mut self.p_em)?;
        set_opt(kv, "memory.update_per_batch", &mut self.update_per_batch)?;
        set_opt(kv, "sim.samples_per_move", &mut self.samples_per_move)?;
        set_opt(kv, "sim.record_trajectory", &mut self.record_trajectory)?;
        set_opt(kv, "models.learning_rate", &mut self.models.learning_rate)?;
        set_opt(kv, "models.momentum", &mut self.models.momentum)?;
        set_opt(kv, "models.decay", &mut self.models.decay)?;
        set_opt(kv, "models.epochs_per_fit", &mut self.models.epochs_per_fit)?;
        set_opt(kv, "models.minibatch", &mut self.models.minibatch)?;
        Ok(())
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(kv, &[])?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        let w = &self.world;
        kv.set("world.grid_w", w.grid_w);
        kv.set("world.grid_h", w.grid_h);
        kv.set("world.img_w", w.img_w);
        kv.set("world.img_h", w.img_h);
        kv.set("world.x_min", w.extent.x_min);
        kv.set("world.x_max", w.extent.x_max);
        kv.set("world.y_min", w.extent.y_min);
        kv.set("world.y_max", w.extent.y_max);
        kv.set("world.blobs", w.blobs);
        kv.set("world.radius_min", w.radius_min);
        kv.set("world.radius_max", w.radius_max);
        kv.set("world.amplitude_min", w.amplitude_min);
        kv.set("world.amplitude_max", w.amplitude_max);
        kv.set("world.window", w.window);
        kv.set("world.seed", self.world_seed);
        if let Some(p) = &self.dataset_path {
            kv.set("world.dataset", p.display());
        }
        kv.set("encoder.latent", self.latent_dim);
        kv.set("encoder.epochs", self.pretrain.epochs);
        kv.set("encoder.minibatch", self.pretrain.minibatch);
        kv.set("encoder.learning_rate", self.pretrain.learning_rate);
        if let Some(p) = &self.encoder_path {
            kv.set("encoder.path", p.display());
        }
        kv.set("loop.iterations", self.iterations);
        kv.set("loop.buffer_len", self.buffer_len);
        kv.set("loop.eval_every", self.eval_every);
        kv.set("loop.testset_size", self.testset_size);
        kv.set("loop.n_goals", self.n_goals);
        kv.set("loop.epsilon_goal", self.policy.epsilon_goal);
        kv.set("loop.p_random_move", self.policy.p_random_move);
        kv.set("loop.motor_noise_sigma", self.motor_noise_sigma);
        kv.set("loop.decay", self.policy.decay);
        kv.set("loop.seed", self.seed);
        kv.set("memory.batches", self.mem_batches);
        kv.set("memory.p_em", self.p_em);
        kv.set("memory.update_per_batch", self.update_per_batch);
        kv.set("sim.samples_per_move", self.samples_per_move);
        kv.set("sim.record_trajectory", self.record_trajectory);
        kv.set("models.learning_rate", self.models.learning_rate);
        kv.set("models.momentum", self.models.momentum);
        kv.set("models.decay", self.models.decay);
        kv.set("models.epochs_per_fit", self.models.epochs_per_fit);
        kv.set("models.minibatch", self.models.minibatch);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_path.is_none() {
            self.world.validate()?;
        }
        self.policy.validate()?;
        let positive = [
            ("encoder.latent", self.latent_dim),
            ("encoder.minibatch", self.pretrain.minibatch),
            ("loop.buffer_len", self.buffer_len),
            ("loop.eval_every", self.eval_every),
            ("loop.testset_size", self.testset_size),
            ("loop.n_goals", self.n_goals),
            ("sim.samples_per_move", self.samples_per_move),
            ("models.minibatch", self.models.minibatch),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{key}` must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_em) {
            return Err(Error::Config(format!("memory.p_em must lie in [0, 1], got {}", self.p_em)));
        }
        if !(self.motor_noise_sigma >= 0.0 && self.motor_noise_sigma.is_finite()) {
            return Err(Error::Config("loop.motor_noise_sigma must be finite and >= 0".into()));
        }
        if !(self.models.learning_rate >= 0.0 && self.pretrain.learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-axis Gaussian noise, clamped back into `[0, 1]`.
pub fn add_motor_noise<R: Rng + ?Sized>(cmd: MotorCommand, sigma: f64, rng: &mut R) -> Result<MotorCommand> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(cmd.clamped());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok(MotorCommand::new(cmd.x + normal.sample(rng), cmd.y + normal.sample(rng)).clamped())
}

/// Seeded RNG stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// World, frozen autoencoder and the standardized code of every cell; shared
/// read-only between runs.
#[derive(Debug, Clone)]
pub struct Environment {
    pub world: Arc<WorldDataset>,
    pub autoencoder: Arc<Autoencoder>,
    codes: Arc<Vec<LatentCode>>,
    pub pretrain_report: Option<PretrainReport>,
}

impl Environment {
    pub fn new(world: Arc<WorldDataset>, autoencoder: Arc<Autoencoder>) -> Result<Self> {
        if autoencoder.img_dims() != (world.img_w(), world.img_h()) {
            return Err(Error::Dimension(format!(
                "autoencoder expects {:?} images, world has {}x{}",
                autoencoder.img_dims(),
                world.img_w(),
                world.img_h()
            )));
        }
        let codes = world
            .images()
            .iter()
            .map(|img| autoencoder.encode_standardized(img))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            world,
            autoencoder,
            codes: Arc::new(codes),
            pretrain_report: None,
        })
    }

    /// Generates (or loads) the world and pretrains (or loads) the autoencoder
    /// as described by `cfg`.
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let world = match &cfg.dataset_path {
            Some(p) => load_dataset(p)?,
            None => generate_world(&cfg.world, &mut stream_rng(cfg.world_seed, 0))?,
        };
        let world = Arc::new(world);
        match &cfg.encoder_path {
            Some(dir) => {
                let ae = Autoencoder::load(dir)?;
                if ae.latent_dim() != cfg.latent_dim {
                    return Err(Error::Config(format!(
                        "encoder at {} has latent_dim {}, config asks for {}",
                        dir.display(),
                        ae.latent_dim(),
                        cfg.latent_dim
                    )));
                }
                Self::new(world, Arc::new(ae))
            }
            None => {
                let (ae, report) =
                    pretrain_on_world(&world, cfg.latent_dim, &cfg.pretrain, &mut stream_rng(cfg.world_seed, 1))?;
                let mut env = Self::new(world, Arc::new(ae))?;
                env.pretrain_report = Some(report);
                Ok(env)
            }
        }
    }

    /// Standardized code of the image at flat cell index `flat`.
    pub fn code(&self, flat: usize) -> &LatentCode {
        &self.codes[flat]
    }

    pub fn extent(&self) -> Extent {
        self.world.extent()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreRecord {
    pub iteration: usize,
    pub goal_id: usize,
    pub was_random: bool,
    pub cmd: MotorCommand,
    pub exec: MotorCommand,
    pub pe: f64,
    pub lp_selected: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub fwd_mse: f64,
    pub inv_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalRecord {
    pub iteration: usize,
    pub goal_id: usize,
    pub pred: MotorCommand,
    pub truth: MotorCommand,
}

impl GoalRecord {
    pub fn error(&self) -> f64 {
        self.pred.distance(self.truth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRecord {
    pub iteration: usize,
    pub selected_goal: usize,
    pub lps: Vec<f64>,
}

/// One row per memory update (every full buffer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryRecord {
    pub iteration: usize,
    pub occupancy: usize,
    pub replaced_count: usize,
    /// Some insert of this update had to force a replacement.
    pub forced: bool,
    pub diversity: f64,
}

/// What one call of [`AgentState::run_iteration`] did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutcome {
    pub explore: ExploreRecord,
    pub noise: (f64, f64),
    pub lps: Vec<f64>,
    /// `(forward loss, inverse loss)` when the buffer was full and both models were refit.
    pub fit: Option<(f64, f64)>,
    pub memory: Option<MemoryRecord>,
}

/// Everything a single run produced.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub config: RunConfig,
    pub explore: Vec<ExploreRecord>,
    pub mse: Vec<EvalRecord>,
    pub goals: Vec<GoalRecord>,
    pub lp: Vec<LpRecord>,
    pub memory: Vec<MemoryRecord>,
    pub goal_truth: Vec<MotorCommand>,
    pub fits: usize,
    pub samples_fitted: usize,
    pub skipped_steps: u64,
    pub forward: ForwardModel,
    pub inverse: InverseModel,
}

/// Mutable state of one run.
#[derive(Debug, Clone)]
pub struct AgentState {
    cfg: RunConfig,
    env: Environment,
    sim: SimState,
    fm: ForwardModel,
    im: InverseModel,
    goals: GoalSet,
    memory: EpisodicMemory,
    buffer: Vec<SensorimotorSample>,
    testset: Vec<TestPair>,
    test_cells: Vec<usize>,
    rng: ChaCha8Rng,
    iteration: usize,
    next_id: u64,
    fits: usize,
    samples_fitted: usize,
}

impl AgentState {
    /// Fresh models, goals sampled first, then a test set from the remaining cells.
    pub fn new(cfg: RunConfig, env: Environment) -> Result<Self> {
        cfg.validate()?;
        if env.autoencoder.latent_dim() != cfg.latent_dim {
            return Err(Error::Config(format!(
                "environment latent_dim {} differs from config {}",
                env.autoencoder.latent_dim(),
                cfg.latent_dim
            )));
        }
        let cells = env.world.cell_count();
        if cfg.n_goals + cfg.testset_size > cells {
            return Err(Error::Config(format!(
                "{} goals + {} test cells exceed the {cells} grid cells",
                cfg.n_goals, cfg.testset_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let goals = init_goals(&env.world, &env.autoencoder, cfg.n_goals, cfg.policy, &mut rng)?;
        let goal_cells: HashSet<usize> = goals.goals().iter().map(|g| env.world.flat(g.cell)).collect();
        let free: Vec<usize> = (0..cells).filter(|c| !goal_cells.contains(c)).collect();
        let test_cells: Vec<usize> = index::sample(&mut rng, free.len(), cfg.testset_size)
            .into_iter()
            .map(|i| free[i])
            .collect();
        let testset = test_cells
            .iter()
            .map(|&c| (env.world.cell_position(env.world.cell(c)), env.code(c).clone()))
            .collect();
        let fm = ForwardModel::new(cfg.latent_dim, cfg.models, &mut rng)?;
        let im = InverseModel::new(cfg.latent_dim, cfg.models, &mut rng)?;
        let memory = EpisodicMemory::new(cfg.mem_batches, cfg.buffer_len)?;
        let start = MotorCommand::new(rng.random(), rng.random());
        let sim = SimState::new(env.world.clone(), start);
        Ok(Self {
            cfg,
            env,
            sim,
            fm,
            im,
            goals,
            memory,
            buffer: Vec::new(),
            testset,
            test_cells,
            rng,
            iteration: 0,
            next_id: 0,
            fits: 0,
            samples_fitted: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn goals(&self) -> &GoalSet {
        &self.goals
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn buffer(&self) -> &[SensorimotorSample] {
        &self.buffer
    }

    pub fn forward_model(&self) -> &ForwardModel {
        &self.fm
    }

    pub fn inverse_model(&self) -> &InverseModel {
        &self.im
    }

    pub fn testset(&self) -> &[TestPair] {
        &self.testset
    }

    /// Flat indices of the test cells.
    pub fn test_cells(&self) -> &[usize] {
        &self.test_cells
    }

    pub fn fits(&self) -> usize {
        self.fits
    }

    /// Rows used across all fits, memory replays included.
    pub fn samples_fitted(&self) -> usize {
        self.samples_fitted
    }

    pub fn position(&self) -> MotorCommand {
        self.sim.position()
    }

    /// `(forward MSE, inverse MSE)` on the fixed test set; no side effects.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        evaluate_mse(&self.fm, &self.im, &self.testset)
    }

    /// Inverse-model prediction for every goal.
    pub fn goal_predictions(&self) -> Result<Vec<GoalRecord>> {
        self.goals
            .goals()
            .iter()
            .map(|g| {
                Ok(GoalRecord {
                    iteration: self.iteration,
                    goal_id: g.id,
                    pred: self.im.predict(&g.code)?,
                    truth: g.truth_motor,
                })
            })
            .collect()
    }

    pub fn run_iteration(&mut self) -> Result<IterationOutcome> {
        self.iteration += 1;
        let goal_id = self.goals.select_goal(&mut self.rng);
        let goal_code = self.goals.goal(goal_id).code.clone();
        let (cmd, was_random) = self.goals.choose_command(&self.im, &goal_code, &mut self.rng)?;
        let predicted = self.fm.predict(cmd);
        let target = add_motor_noise(cmd, self.cfg.motor_noise_sigma, &mut self.rng)?;
        let observations = self.sim.execute_move(target, self.cfg.samples_per_move);
        let last = observations.last().expect("at least one observation");
        let observed = self.env.code(self.env.world.flat(last.cell)).clone();
        let pe = compute_pe(&predicted, &observed)?;
        self.goals.update_lp(goal_id, pe)?;
        self.goals.decay_all();

        let recorded: &[_] = if self.cfg.record_trajectory {
            &observations
        } else {
            std::slice::from_ref(last)
        };
        for obs in recorded {
            let code = self.env.code(self.env.world.flat(obs.cell)).clone();
            self.buffer.push(SensorimotorSample {
                id: self.next_id,
                motor: obs.position,
                code,
            });
            self.next_id += 1;
        }

        let (fit, memory) = if self.buffer.len() >= self.cfg.buffer_len {
            let (f, m) = self.fit_and_remember()?;
            (Some(f), Some(m))
        } else {
            (None, None)
        };

        let lps = self.goals.lps();
        Ok(IterationOutcome {
            explore: ExploreRecord {
                iteration: self.iteration,
                goal_id,
                was_random,
                cmd,
                exec: last.position,
                pe,
                lp_selected: lps[goal_id],
            },
            noise: (target.x - cmd.x, target.y - cmd.y),
            lps,
            fit,
            memory,
        })
    }

    fn fit_and_remember(&mut self) -> Result<((f64, f64), MemoryRecord)> {
        let replay = self.memory.samples();
        let fwd = self.fm.online_fit(&self.buffer, replay, &mut self.rng)?;
        let inv = self.im.online_fit(&self.buffer, replay, &mut self.rng)?;
        self.fits += 1;
        self.samples_fitted += self.buffer.len() + replay.len();
        let mut replaced_count = 0;
        let mut forced = false;
        if self.cfg.update_per_batch {
            let r = self.memory.insert_batch(&self.buffer, self.cfg.p_em, &mut self.rng)?;
            replaced_count += r.replaced_indices.len();
            forced |= r.forced;
        } else {
            for s in &self.buffer {
                let r = self.memory.insert(s, self.cfg.p_em, &mut self.rng)?;
                replaced_count += r.replaced_indices.len();
                forced |= r.forced;
            }
        }
        self.buffer.clear();
        let record = MemoryRecord {
            iteration: self.iteration,
            occupancy: self.memory.len(),
            replaced_count,
            forced,
            diversity: self.memory.diversity(),
        };
        Ok(((fwd, inv), record))
    }

    /// Runs the remaining iterations, evaluating every `eval_every`.
    pub fn run_to_end(mut self) -> Result<RunLog> {
        let cfg = self.cfg.clone();
        let mut explore = Vec::with_capacity(cfg.iterations);
        let mut lp = Vec::with_capacity(cfg.iterations);
        let mut mse = Vec::new();
        let mut memory = Vec::new();
        let mut goals = self.goal_predictions()?;
        while self.iteration < cfg.iterations {
            let out = self.run_iteration()?;
            lp.push(LpRecord {
                iteration: out.explore.iteration,
                selected_goal: out.explore.goal_id,
                lps: out.lps,
            });
            explore.push(out.explore);
            memory.extend(out.memory);
            if self.iteration % cfg.eval_every == 0 {
                let (fwd_mse, inv_mse) = self.evaluate()?;
                mse.push(EvalRecord {
                    iteration: self.iteration,
                    fwd_mse,
                    inv_mse,
                });
                goals.extend(self.goal_predictions()?);
                log::debug!(
                    "seed {} iteration {}: fwd_mse {fwd_mse:.5} inv_mse {inv_mse:.5}",
                    cfg.seed,
                    self.iteration
                );
            }
        }
        let skipped_steps = self.fm.optimizer().skipped() + self.im.optimizer().skipped();
        if skipped_steps > 0 {
            log::warn!("seed {}: {skipped_steps} optimizer steps skipped", cfg.seed);
        }
        Ok(RunLog {
            goal_truth: self.goals.goals().iter().map(|g| g.truth_motor).collect(),
            config: cfg,
            explore,
            mse,
            goals,
            lp,
            memory,
            fits: self.fits,
            samples_fitted: self.samples_fitted,
            skipped_steps,
            forward: self.fm,
            inverse: self.im,
        })
    }
}

/// Runs one session in a prebuilt environment; writes logs to `out` when given.
pub fn run_with_env(cfg: &RunConfig, env: Environment, out: Option<&Path>) -> Result<RunLog> {
    let log = AgentState::new(cfg.clone(), env)?.run_to_end()?;
    if let Some(dir) = out {
        log.write_dir(dir)?;
    }
    Ok(log)
}

/// Builds the world and autoencoder, then runs one session.
pub fn run_session(cfg: &RunConfig, out: Option<&Path>) -> Result<RunLog> {
    cfg.validate()?;
    let env = Environment::build(cfg)?;
    run_with_env(cfg, env, out)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl RunLog {
    /// Writes explore.csv, mse.csv, goals.csv, lp.csv, memory.csv,
    /// forward.nn, inverse.nn and config.txt into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let mut w = csv::Writer::from_path(dir.join("explore.csv"))?;
        w.write_record(["iteration", "goal_id", "was_random", "cmd_x", "cmd_y", "exec_x", "exec_y", "pe", "lp_selected"])?;
        for r in &self.explore {
            w.write_record([
                r.iteration.to_string(),
                r.goal_id.to_string(),
                bit(r.was_random).to_string(),
                r.cmd.x.to_string(),
                r.cmd.y.to_string(),
                r.exec.x.to_string(),
                r.exec.y.to_string(),
                r.pe.to_string(),
                r.lp_selected.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("mse.csv"))?;
        w.write_record(["iteration", "fwd_mse", "inv_mse"])?;
        for r in &self.mse {
            w.write_record([r.iteration.to_string(), r.fwd_mse.to_string(), r.inv_mse.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("goals.csv"))?;
        w.write_record(["iteration", "goal_id", "pred_x", "pred_y", "true_x", "true_y"])?;
        for r in &self.goals {
            w.write_record([
                r.iteration.to_string(),
                r.goal_id.to_string(),
                r.pred.x.to_string(),
                r.pred.y.to_string(),
                r.truth.x.to_string(),
                r.truth.y.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("lp.csv"))?;
        let n = self.goal_truth.len();
        let mut header = vec!["iteration".to_string(), "selected_goal".to_string()];
        header.extend((0..n).map(|i| format!("lp_{i}")));
        w.write_record(&header)?;
        for r in &self.lp {
            let mut row = vec![r.iteration.to_string(), r.selected_goal.to_string()];
            row.extend(r.lps.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("memory.csv"))?;
        w.write_record(["iteration", "occupancy", "replaced_count", "forced", "diversity"])?;
        for r in &self.memory {
            w.write_record([
                r.iteration.to_string(),
                r.occupancy.to_string(),
                r.replaced_count.to_string(),
                bit(r.forced).to_string(),
                r.diversity.to_string(),
            ])?;
        }
        w.flush()?;

        save_weights(self.forward.net(), dir.join("forward.nn"))?;
        save_weights(self.inverse.net(), dir.join("inverse.nn"))?;
        self.config.to_kv().save(dir.join("config.txt"))
    }

    pub fn final_mse(&self) -> Option<EvalRecord> {
        self.mse.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_cfg() -> RunConfig {
        RunConfig {
            world: WorldConfig {
                grid_w: 12,
                grid_h: 12,
                img_w: 8,
                img_h: 8,
                blobs: 10,
                window: 0.3,
                ..WorldConfig::default()
            },
            latent_dim: 4,
            pretrain: PretrainConfig {
                epochs: 2,
                ..PretrainConfig::default()
            },
            iterations: 40,
            eval_every: 10,
            testset_size: 10,
            mem_batches: 1,
            ..RunConfig::default()
        }
    }

    #[test]
    fn noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = MotorCommand::new(0.3, 0.7);
        assert_eq!(add_motor_noise(c, 0.0, &mut rng).unwrap(), c);
        for _ in 0..1000 {
            let n = add_motor_noise(MotorCommand::new(0.99, 0.01), 0.5, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&n.x) && (0.0..=1.0).contains(&n.y));
        }
        assert!(add_motor_noise(c, -1.0, &mut rng).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = small_cfg();
        cfg.encoder_path = Some(PathBuf::from("enc"));
        cfg.update_per_batch = true;
        let back = RunConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        let mut kv = KvFile::new();
        kv.set("loop.iterationz", 3);
        assert!(RunConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn first_iterations_bookkeeping() {
        let cfg = small_cfg();
        let env = Environment::build(&cfg).unwrap();
        let mut agent = AgentState::new(cfg, env).unwrap();
        agent.run_iteration().unwrap();
        assert_eq!(agent.buffer().len(), 1);
        assert!(agent.memory().is_empty());
        assert_eq!(agent.goals().goals().iter().filter(|g| g.visits == 1).count(), 1);
        for _ in 1..16 {
            agent.run_iteration().unwrap();
        }
        assert_eq!(agent.fits(), 1);
        assert_eq!(agent.memory().len(), 16);
        assert!(agent.buffer().is_empty());
    }

    #[test]
    fn testset_avoids_goal_cells() {
        let cfg = small_cfg();
        let env = Environment::build(&cfg).unwrap();
        let agent = AgentState::new(cfg, env.clone()).unwrap();
        for g in agent.goals().goals() {
            assert!(!agent.test_cells().contains(&env.world.flat(g.cell)));
        }
        assert_eq!(agent.evaluate().unwrap(), agent.evaluate().unwrap());
    }
}
