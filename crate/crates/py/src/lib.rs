//! Python bindings: worlds, the autoencoder, episodic memory, the
//! motivation primitives, hull analysis and whole runs.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use curio_core::agent::{run_session as core_run_session, RunConfig};
use curio_core::analysis;
use curio_core::encoder::{pretrain_on_world, Autoencoder as CoreAutoencoder, LatentCode, PretrainConfig};
use curio_core::kv::KvFile;
use curio_core::memory::EpisodicMemory as CoreMemory;
use curio_core::models::{gradcheck_models, SensorimotorSample};
use curio_core::motivation::LP_MAX;
use curio_core::world::{self as core_world, GridIndex, Image, MotorCommand, WorldConfig, WorldDataset};

fn err(e: curio_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(module = "curio")]
struct World {
    inner: Arc<WorldDataset>,
}

impl World {
    fn cell(&self, ix: usize, iy: usize) -> PyResult<GridIndex> {
        if ix >= self.inner.grid_w() || iy >= self.inner.grid_h() {
            return Err(PyIndexError::new_err(format!("cell ({ix}, {iy}) outside the grid")));
        }
        Ok(GridIndex { ix, iy })
    }
}

#[pymethods]
impl World {
    #[staticmethod]
    #[pyo3(signature = (seed, grid_w=50, grid_h=50, img_w=16, img_h=16, blobs=8, window=1.0))]
    fn generate(seed: u64, grid_w: usize, grid_h: usize, img_w: usize, img_h: usize, blobs: usize, window: f64) -> PyResult<Self> {
        let cfg = WorldConfig {
            grid_w,
            grid_h,
            img_w,
            img_h,
            blobs,
            window,
            ..WorldConfig::default()
        };
        let world = core_world::generate_world(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(Self { inner: Arc::new(world) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(core_world::load_dataset(path).map_err(err)?),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_world::save_dataset(&self.inner, path).map_err(err)
    }

    #[getter]
    fn grid_w(&self) -> usize {
        self.inner.grid_w()
    }

    #[getter]
    fn grid_h(&self) -> usize {
        self.inner.grid_h()
    }

    #[getter]
    fn img_w(&self) -> usize {
        self.inner.img_w()
    }

    #[getter]
    fn img_h(&self) -> usize {
        self.inner.img_h()
    }

    /// Row-major pixels of the image seen from cell `(ix, iy)`.
    fn image(&self, ix: usize, iy: usize) -> PyResult<Vec<f32>> {
        Ok(self.inner.image(self.cell(ix, iy)?).pixels().to_vec())
    }

    fn cell_position(&self, ix: usize, iy: usize) -> PyResult<(f64, f64)> {
        let p = self.inner.cell_position(self.cell(ix, iy)?);
        Ok((p.x, p.y))
    }

    fn snap_to_grid(&self, x: f64, y: f64) -> (usize, usize) {
        let c = self.inner.snap_to_grid(MotorCommand::new(x, y));
        (c.ix, c.iy)
    }

    /// Waypoints from `start` to `end` at most `step_mm` apart.
    fn interpolate(&self, start: (f64, f64), end: (f64, f64), step_mm: f64) -> PyResult<Vec<(f64, f64)>> {
        let pts = core_world::interpolate_trajectory(
            MotorCommand::new(start.0, start.1),
            MotorCommand::new(end.0, end.1),
            step_mm,
            &self.inner,
        )
        .map_err(err)?;
        Ok(pts.into_iter().map(|p| (p.x, p.y)).collect())
    }
}

#[pyclass(module = "curio")]
struct Autoencoder {
    inner: CoreAutoencoder,
}

#[pymethods]
impl Autoencoder {
    /// Trains on 90% of the world's cells; returns the model and a report dict.
    #[staticmethod]
    #[pyo3(signature = (world, latent=16, epochs=50, seed=1))]
    fn pretrain<'py>(py: Python<'py>, world: &World, latent: usize, epochs: usize, seed: u64) -> PyResult<(Self, Bound<'py, PyDict>)> {
        let cfg = PretrainConfig {
            epochs,
            ..PretrainConfig::default()
        };
        let (ae, report) = pretrain_on_world(&world.inner, latent, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("history", report.history)?;
        d.set_item("untrained_train_mse", report.untrained_train_mse)?;
        d.set_item("train_mse", report.train_mse)?;
        d.set_item("holdout_mse", report.holdout_mse)?;
        Ok((Self { inner: ae }, d))
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreAutoencoder::load(dir).map_err(err)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(dir).map_err(err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    /// Raw code of a row-major image of the trained size.
    fn encode(&self, pixels: Vec<f32>) -> PyResult<Vec<f64>> {
        let (w, h) = self.inner.img_dims();
        let img = Image::new(w, h, pixels).map_err(err)?;
        Ok(self.inner.encode(&img).map_err(err)?.0)
    }

    fn encode_standardized(&self, pixels: Vec<f32>) -> PyResult<Vec<f64>> {
        let (w, h) = self.inner.img_dims();
        let img = Image::new(w, h, pixels).map_err(err)?;
        Ok(self.inner.encode_standardized(&img).map_err(err)?.0)
    }

    fn decode(&self, code: Vec<f64>) -> PyResult<Vec<f32>> {
        Ok(self.inner.decode(&LatentCode(code)).map_err(err)?.pixels().to_vec())
    }
}

#[pyclass(module = "curio")]
struct EpisodicMemory {
    inner: CoreMemory,
    rng: ChaCha8Rng,
}

#[pymethods]
impl EpisodicMemory {
    #[new]
    #[pyo3(signature = (capacity_batches, batch_len=16, seed=0))]
    fn new(capacity_batches: usize, batch_len: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreMemory::new(capacity_batches, batch_len).map_err(err)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Inserts one sample; returns the indices it overwrote and whether
    /// the overwrite was forced.
    fn insert(&mut self, id: u64, motor: (f64, f64), code: Vec<f64>, p_em: f64) -> PyResult<(Vec<usize>, bool)> {
        let sample = SensorimotorSample {
            id,
            motor: MotorCommand::new(motor.0, motor.1),
            code: LatentCode(code),
        };
        let r = self.inner.insert(&sample, p_em, &mut self.rng).map_err(err)?;
        Ok((r.replaced_indices, r.forced))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn capacity(&self) -> usize {
        self.inner.capacity()
    }

    /// Distinct ids over occupancy.
    fn diversity(&self) -> f64 {
        self.inner.diversity()
    }

    fn ids(&self) -> Vec<u64> {
        self.inner.samples().iter().map(|s| s.id).collect()
    }
}

/// Euclidean distance between a predicted and an observed code.
#[pyfunction]
fn compute_pe(predicted: Vec<f64>, observed: Vec<f64>) -> PyResult<f64> {
    curio_core::motivation::compute_pe(&LatentCode(predicted), &LatentCode(observed)).map_err(err)
}

/// `tanh(|pe_now - pe_prev|)`, kept strictly below 1.
#[pyfunction]
fn learning_progress(pe_prev: f64, pe_now: f64) -> f64 {
    (pe_now - pe_prev).abs().tanh().min(LP_MAX)
}

/// Counter-clockwise hull vertices and the hull area.
#[pyfunction]
fn convex_hull(points: Vec<(f64, f64)>) -> (Vec<(f64, f64)>, f64) {
    let pts: Vec<analysis::Point> = points.into_iter().map(|(x, y)| [x, y]).collect();
    let (hull, area) = analysis::convex_hull(&pts);
    (hull.into_iter().map(|p| (p[0], p[1])).collect(), area)
}

/// Worst relative gradient error of fresh forward and inverse models.
#[pyfunction]
#[pyo3(signature = (latent, h=1e-5, seed=0))]
fn gradcheck(latent: usize, h: f64, seed: u64) -> PyResult<(f64, f64)> {
    gradcheck_models(latent, h, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)
}

/// Runs one session. `config` maps configuration keys to values; `out`
/// optionally receives the run's CSV logs and model files.
#[pyfunction]
#[pyo3(signature = (config=None, out=None))]
fn run_session<'py>(py: Python<'py>, config: Option<Bound<'py, PyDict>>, out: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let mut kv = KvFile::new();
    if let Some(c) = config {
        for (k, v) in c.iter() {
            let value = if v.is_instance_of::<PyBool>() {
                v.extract::<bool>()?.to_string()
            } else {
                v.str()?.to_string()
            };
            kv.set(&k.str()?.to_string(), value);
        }
    }
    let cfg = RunConfig::from_kv(&kv).map_err(err)?;
    let log = py.detach(|| core_run_session(&cfg, out.as_deref())).map_err(err)?;
    let d = PyDict::new(py);
    let mse: Vec<(usize, f64, f64)> = log.mse.iter().map(|r| (r.iteration, r.fwd_mse, r.inv_mse)).collect();
    d.set_item("mse", mse)?;
    let explored: Vec<(f64, f64)> = log.explore.iter().map(|r| (r.exec.x, r.exec.y)).collect();
    d.set_item("explored", explored)?;
    d.set_item("fits", log.fits)?;
    d.set_item("memory_rows", log.memory.len())?;
    Ok(d)
}

#[pymodule]
fn curio(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<World>()?;
    m.add_class::<Autoencoder>()?;
    m.add_class::<EpisodicMemory>()?;
    m.add_function(wrap_pyfunction!(compute_pe, m)?)?;
    m.add_function(wrap_pyfunction!(learning_progress, m)?)?;
    m.add_function(wrap_pyfunction!(convex_hull, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    Ok(())
}
