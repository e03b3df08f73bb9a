//! Synthetic top-down camera world on a 2-axis gantry.
//!
//! Motor space is `[0, 1]^2`; the physical extent in millimetres is kept as
//! metadata. Each grid cell holds the image the camera sees from that
//! position, rendered from a field of Gaussian intensity blobs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorCommand {
    pub x: f64,
    pub y: f64,
}

impl MotorCommand {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn clamped(self) -> Self {
        Self::new(self.x.clamp(0.0, 1.0), self.y.clamp(0.0, 1.0))
    }

    /// Affine map `[0, 1] -> [-1, 1]` per axis.
    pub fn to_signed(self) -> [f64; 2] {
        [2.0 * self.x - 1.0, 2.0 * self.y - 1.0]
    }

    /// Inverse of [`MotorCommand::to_signed`], clamped into `[0, 1]^2`.
    pub fn from_signed(v: [f64; 2]) -> Self {
        Self::new((v[0] + 1.0) / 2.0, (v[1] + 1.0) / 2.0).clamped()
    }

    pub fn distance(self, other: MotorCommand) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Grayscale pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

/// Physical extent of the scanned plane in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn width_mm(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height_mm(&self) -> f64 {
        self.y_max - self.y_min
    }
}

/// Gaussian intensity bump in normalized world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl Blob {
    fn intensity(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.x).powi(2) + (y - self.y).powi(2);
        self.amplitude * (-d2 / (2.0 * self.radius * self.radius)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub img_w: usize,
    pub img_h: usize,
    pub extent: Extent,
    pub blobs: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    /// Side of the camera's view as a fraction of the world side.
    pub window: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        // 50 cells at 5 mm pitch; a few broad blobs seen through a wide
        // window keep neighbouring images correlated enough to learn from
        Self {
            grid_w: 50,
            grid_h: 50,
            img_w: 16,
            img_h: 16,
            extent: Extent {
                x_min: 0.0,
                x_max: 245.0,
                y_min: 0.0,
                y_max: 245.0,
            },
            blobs: 8,
            radius_min: 0.1,
            radius_max: 0.2,
            amplitude_min: 0.5,
            amplitude_max: 1.0,
            window: 1.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_w == 0 || self.grid_h == 0 || self.img_w == 0 || self.img_h == 0 {
            return Err(Error::Config("world dimensions must be positive".into()));
        }
        if self.extent.width_mm() <= 0.0 || self.extent.height_mm() <= 0.0 {
            return Err(Error::Config("world extent must be non-degenerate".into()));
        }
        if !(self.window > 0.0) {
            return Err(Error::Config("camera window must be positive".into()));
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max) {
            return Err(Error::Config("blob radius range must be positive and ordered".into()));
        }
        if !(self.amplitude_min >= 0.0 && self.amplitude_min <= self.amplitude_max) {
            return Err(Error::Config("blob amplitude range must be non-negative and ordered".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex {
    pub ix: usize,
    pub iy: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldDataset {
    grid_w: usize,
    grid_h: usize,
    img_w: usize,
    img_h: usize,
    extent: Extent,
    // y-major: cell (ix, iy) lives at iy * grid_w + ix
    images: Vec<Image>,
}

fn axis_position(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.5
    } else {
        i as f64 / (n - 1) as f64
    }
}

// Nearest of n evenly spaced cells over [0, 1]; exact halves go to the lower index.
fn axis_snap(v: f64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let t = v.clamp(0.0, 1.0) * (n - 1) as f64;
    ((t - 0.5).ceil().max(0.0) as usize).min(n - 1)
}

impl WorldDataset {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        img_w: usize,
        img_h: usize,
        extent: Extent,
        images: Vec<Image>,
    ) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 || img_w == 0 || img_h == 0 {
            return Err(Error::Config("world dimensions must be positive".into()));
        }
        if images.len() != grid_w * grid_h {
            return Err(Error::Dimension(format!(
                "{} images for a {grid_w}x{grid_h} grid",
                images.len()
            )));
        }
        if images.iter().any(|im| im.width != img_w || im.height != img_h) {
            return Err(Error::Dimension(format!("every image must be {img_w}x{img_h}")));
        }
        Ok(Self {
            grid_w,
            grid_h,
            img_w,
            img_h,
            extent,
            images,
        })
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn img_w(&self) -> usize {
        self.img_w
    }

    pub fn img_h(&self) -> usize {
        self.img_h
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn cell_count(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn flat(&self, cell: GridIndex) -> usize {
        cell.iy * self.grid_w + cell.ix
    }

    pub fn cell(&self, flat: usize) -> GridIndex {
        GridIndex {
            ix: flat % self.grid_w,
            iy: flat / self.grid_w,
        }
    }

    pub fn image(&self, cell: GridIndex) -> &Image {
        &self.images[self.flat(cell)]
    }

    pub fn cell_position(&self, cell: GridIndex) -> MotorCommand {
        MotorCommand::new(axis_position(cell.ix, self.grid_w), axis_position(cell.iy, self.grid_h))
    }

    /// Nearest grid cell; ties go to the lower index.
    pub fn snap_to_grid(&self, pos: MotorCommand) -> GridIndex {
        GridIndex {
            ix: axis_snap(pos.x, self.grid_w),
            iy: axis_snap(pos.y, self.grid_h),
        }
    }
}

pub fn render_world(cfg: &WorldConfig, blobs: &[Blob]) -> Result<WorldDataset> {
    cfg.validate()?;
    let mut images = Vec::with_capacity(cfg.grid_w * cfg.grid_h);
    for iy in 0..cfg.grid_h {
        for ix in 0..cfg.grid_w {
            let cx = axis_position(ix, cfg.grid_w);
            let cy = axis_position(iy, cfg.grid_h);
            let mut pixels = Vec::with_capacity(cfg.img_w * cfg.img_h);
            for r in 0..cfg.img_h {
                let y = cy + cfg.window * ((r as f64 + 0.5) / cfg.img_h as f64 - 0.5);
                for c in 0..cfg.img_w {
                    let x = cx + cfg.window * ((c as f64 + 0.5) / cfg.img_w as f64 - 0.5);
                    let v: f64 = blobs.iter().map(|b| b.intensity(x, y)).sum();
                    pixels.push(v.clamp(0.0, 1.0) as f32);
                }
            }
            images.push(Image {
                width: cfg.img_w,
                height: cfg.img_h,
                pixels,
            });
        }
    }
    WorldDataset::new(cfg.grid_w, cfg.grid_h, cfg.img_w, cfg.img_h, cfg.extent, images)
}

/// Blobs at seeded-random positions, rendered into a dataset.
pub fn generate_world<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> Result<WorldDataset> {
    cfg.validate()?;
    let blobs: Vec<Blob> = (0..cfg.blobs)
        .map(|_| Blob {
            x: rng.random::<f64>(),
            y: rng.random::<f64>(),
            radius: rng.random_range(cfg.radius_min..=cfg.radius_max),
            amplitude: rng.random_range(cfg.amplitude_min..=cfg.amplitude_max),
        })
        .collect();
    render_world(cfg, &blobs)
}

/// Points from `from` to `to` inclusive, evenly spaced at most `step_mm` apart.
pub fn interpolate_trajectory(
    from: MotorCommand,
    to: MotorCommand,
    step_mm: f64,
    world: &WorldDataset,
) -> Result<Vec<MotorCommand>> {
    if !(step_mm > 0.0) {
        return Err(Error::Config(format!("trajectory step must be positive, got {step_mm}")));
    }
    let dx = (to.x - from.x) * world.extent.width_mm();
    let dy = (to.y - from.y) * world.extent.height_mm();
    let length = dx.hypot(dy);
    if length == 0.0 {
        return Ok(vec![from]);
    }
    // relative slack keeps 10mm / 5mm from rounding up to 3 segments
    let segments = ((length / step_mm) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let mut points: Vec<MotorCommand> = (0..segments)
        .map(|k| {
            let t = k as f64 / segments as f64;
            MotorCommand::new(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t)
        })
        .collect();
    points.push(to);
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub position: MotorCommand,
    pub cell: GridIndex,
    pub image: Image,
}

#[derive(Debug, Clone)]
pub struct SimState {
    position: MotorCommand,
    world: Arc<WorldDataset>,
}

impl SimState {
    pub fn new(world: Arc<WorldDataset>, start: MotorCommand) -> Self {
        Self {
            position: start.clamped(),
            world,
        }
    }

    pub fn position(&self) -> MotorCommand {
        self.position
    }

    pub fn world(&self) -> &WorldDataset {
        &self.world
    }

    /// Observations at `samples_per_move` evenly spaced points ending at the
    /// clamped target; the camera ends up at the target.
    pub fn execute_move(&mut self, target: MotorCommand, samples_per_move: usize) -> Vec<Observation> {
        let n = samples_per_move.max(1);
        let target = target.clamped();
        let from = self.position;
        let obs = (1..=n)
            .map(|k| {
                let position = if k == n {
                    target
                } else {
                    let t = k as f64 / n as f64;
                    MotorCommand::new(from.x + (target.x - from.x) * t, from.y + (target.y - from.y) * t)
                };
                let cell = self.world.snap_to_grid(position);
                Observation {
                    position,
                    cell,
                    image: self.world.image(cell).clone(),
                }
            })
            .collect();
        self.position = target;
        obs
    }
}

pub const DATASET_MAGIC: &[u8; 9] = b"CURIOWLD1";

/// Layout: magic `CURIOWLD1`; `u32` grid_w, grid_h, img_w, img_h; four `f64`
/// extent values (mm); then every cell (y-major) as `img_h * img_w` `f32`
/// pixels, all little-endian.
pub fn write_dataset<W: Write>(world: &WorldDataset, mut w: W) -> std::io::Result<()> {
    w.write_all(DATASET_MAGIC)?;
    for d in [world.grid_w, world.grid_h, world.img_w, world.img_h] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let e = world.extent;
    for v in [e.x_min, e.x_max, e.y_min, e.y_max] {
        w.write_all(&v.to_le_bytes())?;
    }
    for img in &world.images {
        for p in &img.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_dataset(world: &WorldDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_dataset(world, BufWriter::new(file))?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R, origin: &Path) -> Result<WorldDataset> {
    let truncated = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(origin, "truncated dataset")
        } else {
            Error::Io(e)
        }
    };
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format(origin, "bad magic"));
    }
    let mut dims = [0usize; 4];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(truncated)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [grid_w, grid_h, img_w, img_h] = dims;
    if dims.contains(&0) || grid_w * grid_h > 1 << 26 || img_w * img_h > 1 << 24 {
        return Err(Error::format(origin, format!("implausible dimensions {dims:?}")));
    }
    let mut ext = [0f64; 4];
    for v in &mut ext {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(truncated)?;
        *v = f64::from_le_bytes(b);
    }
    let extent = Extent {
        x_min: ext[0],
        x_max: ext[1],
        y_min: ext[2],
        y_max: ext[3],
    };
    let per_image = img_w * img_h;
    let mut buf = vec![0u8; per_image * 4];
    let mut images = Vec::with_capacity(grid_w * grid_h);
    for cell in 0..grid_w * grid_h {
        r.read_exact(&mut buf).map_err(truncated)?;
        let pixels: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        let image = Image::new(img_w, img_h, pixels)
            .map_err(|e| Error::format(origin, format!("cell {cell}: {e}")))?;
        images.push(image);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format(origin, "trailing bytes after last cell"));
    }
    WorldDataset::new(grid_w, grid_h, img_w, img_h, extent, images)
        .map_err(|e| Error::format(origin, e.to_string()))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<WorldDataset> {
    let path = path.as_ref();
    read_dataset(BufReader::new(File::open(path)?), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> WorldConfig {
        WorldConfig {
            grid_w: 12,
            grid_h: 10,
            img_w: 6,
            img_h: 5,
            blobs: 8,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn no_blobs_means_dark_images() {
        let cfg = WorldConfig {
            blobs: 0,
            ..small_cfg()
        };
        let w = generate_world(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(w.images().iter().all(|im| im.pixels().iter().all(|&p| p == 0.0)));
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn centered_blob_peaks_at_image_center() {
        let cfg = WorldConfig {
            grid_w: 51,
            grid_h: 51,
            img_w: 15,
            img_h: 15,
            window: 1.0,
            ..WorldConfig::default()
        };
        let blob = Blob {
            x: 0.5,
            y: 0.5,
            radius: 0.1,
            amplitude: 0.9,
        };
        let w = render_world(&cfg, &[blob]).unwrap();
        let img = w.image(GridIndex { ix: 25, iy: 25 });
        let (mut best, mut at) = (-1.0, (0, 0));
        for r in 0..15 {
            for c in 0..15 {
                if img.get(r, c) > best {
                    best = img.get(r, c);
                    at = (r, c);
                }
            }
        }
        assert_eq!(at, (7, 7));
        // pixel (7, 7) samples the blob center exactly
        assert_eq!(best, 0.9f32);
    }

    #[test]
    fn rejects_zero_dims() {
        let cfg = WorldConfig {
            img_w: 0,
            ..small_cfg()
        };
        assert!(generate_world(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn snapping() {
        let w = generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(w.snap_to_grid(MotorCommand::new(0.0, 0.0)), GridIndex { ix: 0, iy: 0 });
        assert_eq!(w.snap_to_grid(MotorCommand::new(1.0, 1.0)), GridIndex { ix: 11, iy: 9 });
        // x-cells at 2/11 and 3/11; midpoint goes low. y: 0.5 is between 4/9 and 5/9
        let mid = MotorCommand::new(2.5 / 11.0, 0.5);
        assert_eq!(w.snap_to_grid(mid), GridIndex { ix: 2, iy: 4 });
        let cell = GridIndex { ix: 7, iy: 3 };
        assert_eq!(w.snap_to_grid(w.cell_position(cell)), cell);
    }

    #[test]
    fn trajectory_examples() {
        let w = generate_world(&WorldConfig { blobs: 0, ..WorldConfig::default() }, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let ten_mm = 10.0 / 245.0;
        let pts = interpolate_trajectory(
            MotorCommand::new(0.0, 0.0),
            MotorCommand::new(0.0, ten_mm),
            5.0,
            &w,
        )
        .unwrap();
        assert_eq!(pts.len(), 3);
        assert!((pts[1].y * 245.0 - 5.0).abs() < 1e-12);
        assert_eq!(pts[2], MotorCommand::new(0.0, ten_mm));

        let p = MotorCommand::new(0.3, 0.4);
        assert_eq!(interpolate_trajectory(p, p, 5.0, &w).unwrap(), vec![p]);

        let q = MotorCommand::new(0.31, 0.4);
        assert_eq!(interpolate_trajectory(p, q, 50.0, &w).unwrap(), vec![p, q]);
        assert!(interpolate_trajectory(p, q, 0.0, &w).is_err());
    }

    #[test]
    fn moves() {
        let world = Arc::new(generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        let mut sim = SimState::new(world.clone(), MotorCommand::new(0.0, 0.0));
        let obs = sim.execute_move(MotorCommand::new(1.0, 0.0), 3);
        let xs: Vec<f64> = obs.iter().map(|o| o.position.x).collect();
        assert!((xs[0] - 1.0 / 3.0).abs() < 1e-15 && (xs[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(xs[2], 1.0);
        assert_eq!(sim.position(), MotorCommand::new(1.0, 0.0));

        let obs = sim.execute_move(MotorCommand::new(1.7, -0.2), 1);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].position, MotorCommand::new(1.0, 0.0));
        assert_eq!(&obs[0].image, world.image(world.snap_to_grid(obs[0].position)));

        let mut a = SimState::new(world.clone(), MotorCommand::new(0.2, 0.2));
        let mut b = a.clone();
        let t = MotorCommand::new(0.8, 0.6);
        assert_eq!(a.execute_move(t, 4), b.execute_move(t, 4));
    }

    #[test]
    fn neighbors_are_more_alike_than_far_pairs() {
        let world = generate_world(&WorldConfig::default(), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let diff = |a: &Image, b: &Image| -> f64 {
            a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
                / a.pixels().len() as f64
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut near, mut far) = (0.0, 0.0);
        let trials = 2000;
        for _ in 0..trials {
            let ix = rng.random_range(0..49);
            let iy = rng.random_range(0..50);
            let a = GridIndex { ix, iy };
            near += diff(world.image(a), world.image(GridIndex { ix: ix + 1, iy }));
            let b = GridIndex {
                ix: rng.random_range(0..50),
                iy: rng.random_range(0..50),
            };
            if a.ix.abs_diff(b.ix) + a.iy.abs_diff(b.iy) >= 15 {
                far += diff(world.image(a), world.image(b));
            } else {
                far += diff(world.image(a), world.image(GridIndex { ix: (ix + 25) % 50, iy: (iy + 25) % 50 }));
            }
        }
        assert!(near / trials as f64 * 2.0 < far / trials as f64);
    }

    #[test]
    fn dataset_roundtrip_and_corruption() {
        let world = generate_world(&small_cfg(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.bin");
        save_dataset(&world, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), world);

        let mut bytes = Vec::new();
        write_dataset(&world, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 9 + 16 + 32 + 12 * 10 * 30 * 4);
        let origin = Path::new("mem");
        let mut bad = bytes.clone();
        bad[3] = b'?';
        assert!(read_dataset(&bad[..], origin).is_err());
        assert!(read_dataset(&bytes[..bytes.len() - 1], origin).is_err());
        let mut out_of_range = bytes.clone();
        out_of_range[57..61].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(read_dataset(&out_of_range[..], origin), Err(Error::Format { .. })));
    }

    proptest::proptest! {
        #[test]
        fn trajectory_stays_on_segment(
            fx in 0.0f64..1.0, fy in 0.0f64..1.0, tx in 0.0f64..1.0, ty in 0.0f64..1.0, step in 1.0f64..80.0
        ) {
            let world = WorldDataset::new(
                1, 1, 1, 1,
                Extent { x_min: 0.0, x_max: 245.0, y_min: 0.0, y_max: 245.0 },
                vec![Image::new(1, 1, vec![0.0]).unwrap()],
            ).unwrap();
            let from = MotorCommand::new(fx, fy);
            let to = MotorCommand::new(tx, ty);
            let pts = interpolate_trajectory(from, to, step, &world).unwrap();
            proptest::prop_assert_eq!(pts[0], from);
            proptest::prop_assert_eq!(*pts.last().unwrap(), to);
            let (dx, dy) = (tx - fx, ty - fy);
            let mut prev = -1.0;
            for p in &pts {
                let cross = dx * (p.y - fy) - dy * (p.x - fx);
                proptest::prop_assert!(cross.abs() < 1e-12);
                let along = dx * (p.x - fx) + dy * (p.y - fy);
                proptest::prop_assert!(along >= prev);
                prev = along;
            }
            for w in pts.windows(2) {
                let mm = ((w[1].x - w[0].x) * 245.0).hypot((w[1].y - w[0].y) * 245.0);
                proptest::prop_assert!(mm <= step * (1.0 + 1e-9));
            }
        }
    }
}
