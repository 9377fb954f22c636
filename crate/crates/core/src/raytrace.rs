//! Shooting-and-bouncing-rays propagation over a tiled scene.
//!
//! Rays leave the transmitter along a Fibonacci-sphere direction set and
//! reflect specularly about the *virtual* normal of each tile they hit (the
//! tile's true normal rotated to its steering state). A receiver captures a
//! ray segment that passes within `scale · spacing · L` of it, where `L` is
//! the unfolded distance travelled and `spacing` the mean angular ray
//! spacing. Captures of the same geometric path are merged by bounce key:
//! the ordered list of (surface, tile state) pairs the ray reflected from.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emfunc::{TileFunction, ABSORB_LOSS_DB, STATE_COUNT, STEER_ANGLES_DEG};
use crate::error::{Error, Result};
use crate::scene::{floorplan, Hit, Scene};
use crate::vec3::Vec3;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Lowest reportable power; weaker receptions count as disconnected.
pub const DEFAULT_POWER_FLOOR_DBM: f64 = -250.0;

/// Peak gain of a half-wave dipole (linear).
pub const DIPOLE_PEAK_GAIN: f64 = 1.64;

/// Mirror `incident` (propagation direction) about the plane with unit `normal`.
pub fn reflect_dir(incident: Vec3, normal: Vec3) -> Result<Vec3> {
    let c = incident.dot(normal);
    if c.abs() < 1e-9 {
        return Err(Error::Grazing);
    }
    Ok((incident - normal * (2.0 * c)).normalized())
}

/// Free-space path loss in dB.
pub fn friis_loss_db(frequency: f64, distance: f64) -> f64 {
    let wavelength = SPEED_OF_LIGHT / frequency;
    20.0 * (4.0 * std::f64::consts::PI * distance / wavelength).log10()
}

/// Half-wave dipole gain (linear) at `angle` radians from the dipole axis.
pub fn dipole_gain(angle_from_axis: f64) -> f64 {
    let s = angle_from_axis.sin();
    if s.abs() < 1e-12 {
        return 0.0;
    }
    let f = (std::f64::consts::FRAC_PI_2 * angle_from_axis.cos()).cos() / s;
    DIPOLE_PEAK_GAIN * f * f
}

fn vertical_dipole_gain_db(direction: Vec3) -> f64 {
    let g = dipole_gain(direction.z.clamp(-1.0, 1.0).acos());
    if g > 0.0 {
        10.0 * g.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Unit directions on a Fibonacci sphere.
pub fn fibonacci_sphere(count: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Mean angular spacing (radians) of `count` rays over the full sphere.
pub fn ray_spacing(count: usize) -> f64 {
    (4.0 * std::f64::consts::PI / count as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Carrier frequency in Hz.
    pub frequency: f64,
    pub bandwidth: f64,
    pub tx_power_dbm: f64,
    pub tx_position: Vec3,
    pub rx_positions: Vec<Vec3>,
    pub max_bounces: usize,
    pub ray_count: usize,
    /// Reception sphere radius per metre travelled, in units of the ray spacing.
    pub rx_sphere_scale: f64,
    pub power_floor_dbm: f64,
    /// Reflection loss of untiled concrete surfaces.
    pub concrete_loss_db: f64,
}

impl RadioParams {
    /// Evaluation setup of the two-corridor floor plan at `frequency`.
    pub fn paper(frequency: f64) -> Self {
        RadioParams {
            frequency,
            bandwidth: 25e6,
            tx_power_dbm: 100.0,
            tx_position: floorplan::TX_POSITION,
            rx_positions: floorplan::receiver_grid(),
            max_bounces: 3,
            ray_count: 200_000,
            rx_sphere_scale: 0.7,
            power_floor_dbm: DEFAULT_POWER_FLOOR_DBM,
            concrete_loss_db: default_concrete_loss_db(frequency),
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.frequency.is_nan() || self.frequency <= 0.0 {
            return bad("frequency must be positive");
        }
        if self.ray_count == 0 {
            return bad("ray count must be at least 1");
        }
        if self.rx_sphere_scale.is_nan() || self.rx_sphere_scale <= 0.0 {
            return bad("reception sphere scale must be positive");
        }
        if self.concrete_loss_db < 0.0 {
            return bad("concrete loss must be non-negative");
        }
        Ok(())
    }
}

/// 13 dB per concrete bounce at millimetre-wave frequencies, 7 dB below.
pub fn default_concrete_loss_db(frequency: f64) -> f64 {
    if frequency >= 10e9 {
        13.0
    } else {
        7.0
    }
}

/// Function state of every tile, as [`TileFunction`] indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvConfiguration {
    states: Vec<u8>,
}

impl EnvConfiguration {
    /// Every tile reflects specularly.
    pub fn plain(tile_count: usize) -> Self {
        Self::uniform(tile_count, TileFunction::PLAIN)
    }

    pub fn uniform(tile_count: usize, function: TileFunction) -> Self {
        EnvConfiguration {
            states: vec![function.index(); tile_count],
        }
    }

    pub fn from_states(states: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = states.iter().find(|&&s| s as usize >= STATE_COUNT) {
            return Err(Error::InvalidParameter(format!("tile state {bad} out of range")));
        }
        Ok(EnvConfiguration { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn function(&self, tile: usize) -> TileFunction {
        TileFunction::from_index(self.states[tile]).expect("validated state")
    }

    pub fn set(&mut self, tile: usize, function: TileFunction) {
        self.states[tile] = function.index();
    }
}

/// Bounce key entry: surface id and tile state (`None` for untiled surfaces).
pub type BounceKey = (usize, Option<u8>);

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    pub rx_index: usize,
    pub bounce_points: Vec<Hit>,
    pub key: Vec<BounceKey>,
    pub unfolded_length: f64,
    /// Seconds.
    pub delay: f64,
    pub bounce_loss_db: f64,
    /// Linear amplitude relative to the transmitted wave.
    pub attenuation: f64,
    pub rx_power_dbm: f64,
    /// Reflection-induced phase (radians); the tile model is loss-only, so 0.
    pub phase: f64,
    pub connected: bool,
    pub departure: Vec3,
    pub arrival: Vec3,
}

impl PropagationPath {
    pub fn bounce_count(&self) -> usize {
        self.bounce_points.len()
    }
}

/// Paths found at each receiver, indexed like `RadioParams::rx_positions`.
/// Each list is sorted by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub paths: Vec<Vec<PropagationPath>>,
}

impl Trace {
    pub fn receiver(&self, rx: usize) -> &[PropagationPath] {
        &self.paths[rx]
    }

    pub fn path_count(&self) -> usize {
        self.paths.iter().map(Vec::len).sum()
    }

    /// CSV dump: `rx_index,bounces,length_m,delay_s,power_dbm`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "rx_index,bounces,length_m,delay_s,power_dbm")?;
        for list in &self.paths {
            for p in list {
                writeln!(
                    w,
                    "{},{},{:.6},{:.6e},{:.4}",
                    p.rx_index,
                    p.bounce_count(),
                    p.unfolded_length,
                    p.delay,
                    p.rx_power_dbm
                )?;
            }
        }
        Ok(())
    }
}

/// Raw capture of one ray by one receiver.
#[derive(Debug, Clone)]
struct Capture {
    rx: usize,
    ray: usize,
    key: Vec<BounceKey>,
    bounces: Vec<Hit>,
    /// Miss distance over unfolded length; smaller is closer to the true path.
    miss: f64,
    length: f64,
    loss_db: f64,
    arrival: Vec3,
}

/// One straight piece of a ray's trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub origin: Vec3,
    pub direction: Vec3,
    /// Length until the next hit, or infinity if the ray escapes.
    pub length: f64,
    /// Unfolded distance travelled before this segment.
    pub travelled: f64,
    pub loss_db: f64,
}

/// Launch setup that is independent of the tile configuration: ray
/// directions, first hits and line-of-sight captures. Reusable across
/// configurations, which is what the optimiser does.
pub struct Tracer<'a> {
    scene: &'a Scene,
    params: RadioParams,
    directions: Vec<Vec3>,
    first_hits: Vec<Option<Hit>>,
    los: Vec<Capture>,
    spacing: f64,
    /// Per tile, the virtual normal of each steering state.
    steer_normals: Vec<[Vec3; 25]>,
    rx_box: (Vec3, Vec3),
}

impl<'a> Tracer<'a> {
    pub fn new(scene: &'a Scene, params: RadioParams) -> Result<Self> {
        params.validate()?;
        let directions = fibonacci_sphere(params.ray_count);
        let spacing = ray_spacing(params.ray_count);
        let first_hits: Vec<Option<Hit>> = directions
            .par_iter()
            .map(|&d| scene.ray_intersect(params.tx_position, d))
            .collect();
        let steer_normals = scene
            .tiles()
            .iter()
            .map(|t| {
                let mut ns = [Vec3::ZERO; 25];
                for (i, n) in ns.iter_mut().enumerate() {
                    *n = t.steered_normal(STEER_ANGLES_DEG[i / 5], STEER_ANGLES_DEG[i % 5]);
                }
                ns
            })
            .collect();
        let rx_box = bounding_box(&params.rx_positions);
        let mut tracer = Tracer {
            scene,
            params,
            directions,
            first_hits,
            los: Vec::new(),
            spacing,
            steer_normals,
            rx_box,
        };
        let los: Vec<Capture> = (0..tracer.directions.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut out = Vec::new();
                let seg = Segment {
                    origin: tracer.params.tx_position,
                    direction: tracer.directions[i],
                    length: tracer.first_hits[i].map_or(f64::INFINITY, |h| h.distance),
                    travelled: 0.0,
                    loss_db: 0.0,
                };
                tracer.capture(i, &seg, &[], &[], &mut out);
                out
            })
            .collect();
        tracer.los = los;
        Ok(tracer)
    }

    pub fn params(&self) -> &RadioParams {
        &self.params
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    /// Traces every launched ray through `config`. `seed` only decides which
    /// of two equally close captures represents a path.
    pub fn trace(&self, config: &EnvConfiguration, seed: u64) -> Result<Trace> {
        if config.len() != self.scene.tile_count() {
            return Err(Error::GenomeLength {
                expected: self.scene.tile_count(),
                got: config.len(),
            });
        }
        const CHUNK: usize = 2048;
        let n = self.directions.len();
        let merged = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut best = HashMap::new();
                let mut caps = Vec::new();
                for ray in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    caps.clear();
                    self.follow(ray, config, &mut caps);
                    for cap in caps.drain(..) {
                        keep_best(&mut best, cap, seed);
                    }
                }
                best
            })
            .reduce(HashMap::new, |mut a, b| {
                for (_, cap) in b {
                    keep_best(&mut a, cap, seed);
                }
                a
            });
        let mut best = merged;
        for cap in &self.los {
            keep_best(&mut best, cap.clone(), seed);
        }

        let mut paths = vec![Vec::new(); self.params.rx_positions.len()];
        for (_, cap) in best {
            let departure = self.directions[cap.ray];
            paths[cap.rx].push(self.make_path(cap, departure));
        }
        for list in &mut paths {
            list.sort_by(|a: &PropagationPath, b| {
                a.delay.total_cmp(&b.delay).then_with(|| a.key.cmp(&b.key))
            });
        }
        Ok(Trace { paths })
    }

    fn make_path(&self, cap: Capture, departure: Vec3) -> PropagationPath {
        let p = &self.params;
        let gains = vertical_dipole_gain_db(departure) + vertical_dipole_gain_db(-cap.arrival);
        let raw = p.tx_power_dbm - friis_loss_db(p.frequency, cap.length) - cap.loss_db + gains;
        let connected = raw.is_finite() && raw >= p.power_floor_dbm;
        let rx_power_dbm = if connected {
            raw.min(p.tx_power_dbm)
        } else {
            p.power_floor_dbm
        };
        PropagationPath {
            rx_index: cap.rx,
            bounce_points: cap.bounces,
            key: cap.key,
            unfolded_length: cap.length,
            delay: cap.length / SPEED_OF_LIGHT,
            bounce_loss_db: cap.loss_db,
            attenuation: 10f64.powf((rx_power_dbm - p.tx_power_dbm) / 20.0),
            rx_power_dbm,
            phase: 0.0,
            connected,
            departure,
            arrival: cap.arrival,
        }
    }

    /// Walks one launched ray from its first hit, reporting captures.
    fn follow(&self, ray: usize, config: &EnvConfiguration, out: &mut Vec<Capture>) {
        let mut key: Vec<BounceKey> = Vec::with_capacity(self.params.max_bounces);
        let mut bounces: Vec<Hit> = Vec::with_capacity(self.params.max_bounces);
        let scene = self.scene;
        walk(
            scene,
            &self.steer_normals,
            config,
            &self.params,
            self.directions[ray],
            self.first_hits[ray],
            |seg, hit, state| {
                key.push((hit.surface, state));
                bounces.push(hit);
                self.capture(ray, &seg, &key, &bounces, out);
            },
        );
    }

    fn capture(&self, ray: usize, seg: &Segment, key: &[BounceKey], bounces: &[Hit], out: &mut Vec<Capture>) {
        let reach = seg.travelled + seg.length.min(1e6);
        let max_r = self.params.rx_sphere_scale * self.spacing * reach;
        let end = seg.origin + seg.direction * seg.length.min(1e6);
        let (lo, hi) = self.rx_box;
        if seg.origin.x.min(end.x) > hi.x + max_r
            || seg.origin.x.max(end.x) < lo.x - max_r
            || seg.origin.y.min(end.y) > hi.y + max_r
            || seg.origin.y.max(end.y) < lo.y - max_r
            || seg.origin.z.min(end.z) > hi.z + max_r
            || seg.origin.z.max(end.z) < lo.z - max_r
        {
            return;
        }
        for (rx, &pos) in self.params.rx_positions.iter().enumerate() {
            let w = pos - seg.origin;
            let t = w.dot(seg.direction);
            if t <= 0.0 || t >= seg.length {
                continue;
            }
            let miss_sq = (w.norm_sq() - t * t).max(0.0);
            let along = seg.travelled + t;
            let radius = self.params.rx_sphere_scale * self.spacing * along;
            if miss_sq > radius * radius {
                continue;
            }
            let dist = w.norm();
            out.push(Capture {
                rx,
                ray,
                key: key.to_vec(),
                bounces: bounces.to_vec(),
                miss: miss_sq.sqrt() / along,
                length: seg.travelled + dist,
                loss_db: seg.loss_db,
                arrival: w / dist,
            });
        }
    }
}

fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    if points.is_empty() {
        // Inverted box: every segment is culled.
        return (Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY));
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    (lo, hi)
}

fn tie_rank(seed: u64, ray: usize) -> u64 {
    // splitmix64
    let mut z = seed ^ (ray as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn keep_best(best: &mut HashMap<(usize, Vec<BounceKey>), Capture>, cap: Capture, seed: u64) {
    use std::collections::hash_map::Entry;
    match best.entry((cap.rx, cap.key.clone())) {
        Entry::Vacant(e) => {
            e.insert(cap);
        }
        Entry::Occupied(mut e) => {
            let cur = e.get();
            let better = cap
                .miss
                .total_cmp(&cur.miss)
                .then_with(|| tie_rank(seed, cap.ray).cmp(&tie_rank(seed, cur.ray)))
                .then_with(|| cap.ray.cmp(&cur.ray))
                .is_lt();
            if better {
                e.insert(cap);
            }
        }
    }
}

/// Follows a ray after its first hit through up to `max_bounces`
/// reflections. For each reflection `visit` receives the outgoing segment,
/// the hit it left from and the tile state used (`None` off tiles).
fn walk(
    scene: &Scene,
    steer_normals: &[[Vec3; 25]],
    config: &EnvConfiguration,
    params: &RadioParams,
    direction: Vec3,
    first_hit: Option<Hit>,
    mut visit: impl FnMut(Segment, Hit, Option<u8>),
) {
    let mut hit = first_hit;
    let mut dir = direction;
    let mut travelled = 0.0;
    let mut loss_db = 0.0;
    for _ in 0..params.max_bounces {
        let Some(h) = hit else { return };
        let surface = &scene.surfaces()[h.surface];
        let true_n = surface.true_normal;
        if dir.dot(true_n) >= 0.0 {
            // Back side of a surface; only possible from inside a solid.
            return;
        }
        let (normal, extra, state) = match h.tile {
            Some(t) => {
                let s = config.states()[t];
                if s as usize == 25 {
                    (true_n, ABSORB_LOSS_DB, Some(s))
                } else {
                    (steer_normals[t][s as usize], 0.0, Some(s))
                }
            }
            None => (true_n, params.concrete_loss_db, None),
        };
        let Ok(out) = reflect_dir(dir, normal) else { return };
        if out.dot(true_n) <= 1e-12 {
            // Steered into the wall.
            return;
        }
        travelled += h.distance;
        loss_db += extra;
        dir = out;
        hit = scene.ray_intersect(h.point, dir);
        let seg = Segment {
            origin: h.point,
            direction: dir,
            length: hit.map_or(f64::INFINITY, |n| n.distance),
            travelled,
            loss_db,
        };
        visit(seg, h, state);
    }
}

/// Trajectory of a single ray: its segments and the hits between them.
#[derive(Debug, Clone)]
pub struct RayHistory {
    pub segments: Vec<Segment>,
    pub hits: Vec<Hit>,
}

/// Follows one ray through `config` without any receivers.
pub fn trace_ray(
    scene: &Scene,
    config: &EnvConfiguration,
    params: &RadioParams,
    origin: Vec3,
    direction: Vec3,
) -> RayHistory {
    let normals: Vec<[Vec3; 25]> = scene
        .tiles()
        .iter()
        .map(|t| {
            let mut ns = [Vec3::ZERO; 25];
            for (i, n) in ns.iter_mut().enumerate() {
                *n = t.steered_normal(STEER_ANGLES_DEG[i / 5], STEER_ANGLES_DEG[i % 5]);
            }
            ns
        })
        .collect();
    let first = scene.ray_intersect(origin, direction);
    let mut segments = vec![Segment {
        origin,
        direction,
        length: first.map_or(f64::INFINITY, |h| h.distance),
        travelled: 0.0,
        loss_db: 0.0,
    }];
    let mut hits = Vec::new();
    walk(scene, &normals, config, params, direction, first, |seg, hit, _| {
        hits.push(hit);
        segments.push(seg);
    });
    RayHistory { segments, hits }
}

/// Traces `config` through `scene` from scratch.
pub fn launch_rays(scene: &Scene, config: &EnvConfiguration, params: &RadioParams, seed: u64) -> Result<Trace> {
    Tracer::new(scene, params.clone())?.trace(config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_paper_floorplan, Material, Surface};

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn reflect_examples() {
        assert!(close(reflect_dir(-Vec3::Z, Vec3::Z).unwrap(), Vec3::Z, 1e-15));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = reflect_dir(Vec3::new(s, 0.0, -s), Vec3::Z).unwrap();
        assert!(close(r, Vec3::new(s, 0.0, s), 1e-15));
        let a = 15f64.to_radians();
        let r = reflect_dir(-Vec3::Z, Vec3::new(0.0, a.sin(), a.cos())).unwrap();
        assert!(close(r, Vec3::new(0.0, 0.5, 0.75f64.sqrt()), 1e-12));
        assert!(matches!(reflect_dir(Vec3::X, Vec3::Z), Err(Error::Grazing)));
    }

    #[test]
    fn friis_reference_values() {
        assert!((friis_loss_db(60e9, 10.0) - 88.0).abs() < 0.1);
        assert!((friis_loss_db(2.4e9, 10.0) - 60.1).abs() < 0.1);
        let lambda = SPEED_OF_LIGHT / 5e9;
        assert!(friis_loss_db(5e9, lambda / (4.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn dipole_pattern() {
        assert!((dipole_gain(std::f64::consts::FRAC_PI_2) - 1.64).abs() < 1e-12);
        assert_eq!(dipole_gain(0.0), 0.0);
        assert!(dipole_gain(1e-6) < 1e-10);
        assert_eq!(dipole_gain(std::f64::consts::PI), 0.0);
        // Numeric evaluation of the pattern formula at 45°.
        let t = std::f64::consts::FRAC_PI_4;
        let expected = 1.64 * ((std::f64::consts::FRAC_PI_2 * t.cos()).cos() / t.sin()).powi(2);
        assert!((dipole_gain(t) - expected).abs() < 1e-12);
        assert!((dipole_gain(t) - 0.6466).abs() < 1e-3);
    }

    #[test]
    fn fibonacci_directions_are_unit() {
        let d = fibonacci_sphere(1000);
        assert!(d.iter().all(|v| v.is_unit(1e-12)));
        let mean = d.iter().fold(Vec3::ZERO, |a, &b| a + b) / 1000.0;
        assert!(mean.norm() < 1e-2);
    }

    fn free_params(rx: Vec<Vec3>) -> RadioParams {
        RadioParams {
            tx_position: Vec3::new(0.0, 0.0, 2.0),
            rx_positions: rx,
            ray_count: 20_000,
            ..RadioParams::paper(60e9)
        }
    }

    #[test]
    fn empty_scene_single_los_path() {
        let scene = Scene::empty();
        let params = free_params(vec![Vec3::new(10.0, 0.0, 2.0)]);
        let trace = launch_rays(&scene, &EnvConfiguration::plain(0), &params, 0).unwrap();
        assert_eq!(trace.paths[0].len(), 1);
        let p = &trace.paths[0][0];
        assert!((p.rx_power_dbm - 16.3).abs() < 0.5, "{}", p.rx_power_dbm);
        assert!((p.unfolded_length - 10.0).abs() < 1e-12);
        assert!((p.delay - 10.0 / SPEED_OF_LIGHT).abs() < 1e-12);
    }

    #[test]
    fn nlos_receivers_blocked_without_bounces() {
        let scene = build_paper_floorplan();
        let params = RadioParams {
            max_bounces: 0,
            ray_count: 20_000,
            ..RadioParams::paper(60e9)
        };
        let trace = launch_rays(&scene, &EnvConfiguration::plain(222), &params, 0).unwrap();
        assert_eq!(trace.path_count(), 0);
    }

    #[test]
    fn rejects_wrong_configuration_length() {
        let scene = build_paper_floorplan();
        let params = RadioParams { ray_count: 10, ..RadioParams::paper(60e9) };
        assert!(matches!(
            launch_rays(&scene, &EnvConfiguration::plain(5), &params, 0),
            Err(Error::GenomeLength { expected: 222, got: 5 })
        ));
    }

    fn mirror_scene() -> Scene {
        // One 4 m × 4 m tiled wall in the plane x = 0, facing +x.
        Scene::new(
            vec![Surface {
                id: 0,
                name: "mirror".into(),
                origin: Vec3::new(0.0, -2.0, 0.0),
                edge_u: Vec3::Y * 4.0,
                edge_v: Vec3::Z * 4.0,
                material: Material::TiledWall,
                true_normal: Vec3::X,
            }],
            Vec::new(),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn single_bounce_matches_image_method() {
        let scene = mirror_scene();
        let tx = Vec3::new(3.0, -0.7, 2.5);
        let rx = Vec3::new(2.0, 0.9, 1.5);
        let params = RadioParams {
            tx_position: tx,
            rx_positions: vec![rx],
            ray_count: 50_000,
            ..RadioParams::paper(60e9)
        };
        let trace = launch_rays(&scene, &EnvConfiguration::plain(16), &params, 0).unwrap();
        let one: Vec<_> = trace.paths[0].iter().filter(|p| p.bounce_count() == 1).collect();
        assert_eq!(one.len(), 1);
        let image = Vec3::new(-tx.x, tx.y, tx.z);
        assert!((one[0].unfolded_length - image.distance(rx)).abs() < 0.01);
    }

    #[test]
    fn absorb_costs_exactly_35_db() {
        let scene = mirror_scene();
        // Specular point at the centre of tile (row 2, col 2): y = 0.5, z = 2.5.
        let tx = Vec3::new(2.0, -0.3, 2.5);
        let rx = Vec3::new(2.0, 1.3, 2.5);
        let params = RadioParams {
            tx_position: tx,
            rx_positions: vec![rx],
            ray_count: 50_000,
            ..RadioParams::paper(60e9)
        };
        let plain = EnvConfiguration::plain(16);
        let mut absorb = plain.clone();
        let tile = scene.tile_at(0, Vec3::new(0.0, 0.5, 2.5)).unwrap();
        absorb.set(tile, TileFunction::Absorb);
        let a = launch_rays(&scene, &plain, &params, 0).unwrap();
        let b = launch_rays(&scene, &absorb, &params, 0).unwrap();
        let pa = a.paths[0].iter().find(|p| p.bounce_count() == 1).unwrap();
        let pb = b.paths[0].iter().find(|p| p.bounce_count() == 1).unwrap();
        assert!((pa.rx_power_dbm - pb.rx_power_dbm - 35.0).abs() < 1e-9);
    }

    #[test]
    fn steered_ray_follows_virtual_normal() {
        let scene = mirror_scene();
        let tile = scene.tile_at(0, Vec3::new(0.0, 0.5, 2.5)).unwrap();
        let params = RadioParams::paper(60e9);
        let origin = Vec3::new(2.0, 0.5, 2.5);
        for state in TileFunction::all() {
            let mut cfg = EnvConfiguration::plain(16);
            cfg.set(tile, state);
            let h = trace_ray(&scene, &cfg, &params, origin, -Vec3::X);
            let n = match state {
                TileFunction::Steer { azimuth, elevation } => scene.tiles()[tile].steered_normal(azimuth as f64, elevation as f64),
                TileFunction::Absorb => Vec3::X,
            };
            let expected = -Vec3::X - n * (2.0 * (-Vec3::X).dot(n));
            assert!(h.segments[1].direction.angle_to(expected) < 1e-9);
        }
    }

    #[test]
    fn worker_count_does_not_change_paths() {
        let scene = build_paper_floorplan();
        let params = RadioParams { ray_count: 20_000, ..RadioParams::paper(60e9) };
        let mut cfg = EnvConfiguration::plain(222);
        for t in (0..222).step_by(7) {
            cfg.set(t, TileFunction::from_index((t % 26) as u8).unwrap());
        }
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| launch_rays(&scene, &cfg, &params, 5).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn path_csv_layout() {
        let scene = Scene::empty();
        let params = free_params(vec![Vec3::new(10.0, 0.0, 2.0)]);
        let trace = launch_rays(&scene, &EnvConfiguration::plain(0), &params, 0).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "rx_index,bounces,length_m,delay_s,power_dbm");
        assert!(lines[1].starts_with("0,0,10.000000,"));
    }
}
