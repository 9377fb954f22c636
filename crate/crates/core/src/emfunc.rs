//! Tile EM functions and their realisation as switch configurations.
//!
//! The metasurface is abstracted to an `M × M` binary-phase reflectarray:
//! each unit cell re-radiates the incident wave with an extra phase of 0
//! (switch open) or π (switch closed). The far-field power pattern of a
//! configuration is the squared magnitude of the array factor.
//!
//! Tile-local frame: `x` is the tile's horizontal in-plane axis, `y` the
//! vertical in-plane axis and `z` the outward normal. Directions handed to
//! [`array_pattern`] are in this frame; directions handed to
//! [`quantize_function`] are in world coordinates. In both cases the
//! incident direction `I` points from the tile back towards the source and
//! the outgoing direction `O` points away from the tile, so `I` and `O` are
//! interchangeable under reciprocity.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::ga::{ga_run, GaParams};
use crate::raytrace::reflect_dir;
use crate::scene::Tile;
use crate::vec3::Vec3;

/// Catalog steering angles, shared by azimuth and elevation.
pub const STEER_ANGLES_DEG: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];

/// Number of tile function states: 25 steering combinations plus absorb.
pub const STATE_COUNT: usize = 26;

/// Absorbing tiles attenuate the reflected wave by this much.
pub const ABSORB_LOSS_DB: f64 = 35.0;

/// Per-tile function state; the gene of an environment configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileFunction {
    Steer { azimuth: i8, elevation: i8 },
    Absorb,
}

impl TileFunction {
    /// Plain Snell reflection.
    pub const PLAIN: TileFunction = TileFunction::Steer {
        azimuth: 0,
        elevation: 0,
    };

    /// Index in `0..26`: `5 * azimuth_slot + elevation_slot` for steering, 25 for absorb.
    pub fn index(self) -> u8 {
        match self {
            TileFunction::Steer { azimuth, elevation } => {
                (angle_slot(azimuth) * 5 + angle_slot(elevation)) as u8
            }
            TileFunction::Absorb => 25,
        }
    }

    pub fn from_index(index: u8) -> Result<Self> {
        match index {
            25 => Ok(TileFunction::Absorb),
            i if i < 25 => Ok(TileFunction::Steer {
                azimuth: STEER_ANGLES_DEG[(i / 5) as usize] as i8,
                elevation: STEER_ANGLES_DEG[(i % 5) as usize] as i8,
            }),
            i => Err(Error::InvalidParameter(format!("tile function index {i} out of range"))),
        }
    }

    pub fn steer(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        for a in [azimuth_deg, elevation_deg] {
            if !STEER_ANGLES_DEG.contains(&a) {
                return Err(Error::InvalidAngle(a));
            }
        }
        Ok(TileFunction::Steer {
            azimuth: azimuth_deg as i8,
            elevation: elevation_deg as i8,
        })
    }

    pub fn all() -> impl Iterator<Item = TileFunction> {
        (0..STATE_COUNT as u8).map(|i| TileFunction::from_index(i).unwrap())
    }
}

fn angle_slot(deg: i8) -> usize {
    STEER_ANGLES_DEG
        .iter()
        .position(|&a| a == deg as f64)
        .expect("steer angle is a catalog value")
}

impl fmt::Display for TileFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TileFunction::Steer { azimuth, elevation } => write!(f, "steer({azimuth},{elevation})"),
            TileFunction::Absorb => f.write_str("absorb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EmKind {
    Steer,
    Absorb,
}

impl fmt::Display for EmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmKind::Steer => "STEER",
            EmKind::Absorb => "ABSORB",
        })
    }
}

/// A requested metasurface function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmFunction {
    pub kind: EmKind,
    /// Direction of arrival, pointing from the tile towards the source.
    pub incident: Vec3,
    /// Intended reflection direction; required for STEER, forbidden for ABSORB.
    pub outgoing: Option<Vec3>,
    /// Wavelength in metres.
    pub wavelength: f64,
}

impl EmFunction {
    pub fn steer(incident: Vec3, outgoing: Vec3, wavelength: f64) -> Self {
        EmFunction {
            kind: EmKind::Steer,
            incident: incident.normalized(),
            outgoing: Some(outgoing.normalized()),
            wavelength,
        }
    }

    pub fn absorb(incident: Vec3, wavelength: f64) -> Self {
        EmFunction {
            kind: EmKind::Absorb,
            incident: incident.normalized(),
            outgoing: None,
            wavelength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.outgoing) {
            (EmKind::Steer, None) => Err(Error::InvalidParameter(
                "STEER requires an outgoing direction".into(),
            )),
            (EmKind::Absorb, Some(_)) => Err(Error::InvalidParameter(
                "ABSORB takes no outgoing direction".into(),
            )),
            _ if self.wavelength.is_nan() || self.wavelength <= 0.0 => {
                Err(Error::InvalidParameter("wavelength must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Canonical tile-local function for a catalog state under broadside
    /// illumination: the outgoing direction is the mirror of the broadside
    /// DoA about the steered normal.
    pub fn for_state(state: TileFunction, wavelength: f64) -> Self {
        let incident = Vec3::Z;
        match state {
            TileFunction::Absorb => EmFunction::absorb(incident, wavelength),
            TileFunction::Steer { azimuth, elevation } => {
                let n = local_steered_normal(azimuth as f64, elevation as f64);
                let out = reflect_dir(-incident, n).expect("broadside is never grazing");
                EmFunction::steer(incident, out, wavelength)
            }
        }
    }

    /// Table key: kind, directions as (azimuth, elevation) in tenths of a
    /// degree, wavelength in micrometres.
    pub fn key(&self) -> String {
        let (ia, ie) = direction_angles_deg(self.incident);
        let mut k = format!("{}:I({:.1},{:.1})", self.kind, ia, ie);
        if let Some(o) = self.outgoing {
            let (oa, oe) = direction_angles_deg(o);
            k.push_str(&format!(":O({oa:.1},{oe:.1})"));
        }
        k.push_str(&format!(":L{:.0}um", self.wavelength * 1e6));
        k
    }
}

fn local_steered_normal(azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
    let (sa, ca) = azimuth_deg.to_radians().sin_cos();
    let (se, ce) = elevation_deg.to_radians().sin_cos();
    Vec3::new(sa, ca * se, ca * ce)
}

/// Direction from pattern angles in the tile frame: azimuth about the
/// vertical axis, elevation towards it.
pub fn direction_from_angles(azimuth: f64, elevation: f64) -> Vec3 {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    Vec3::new(sp * ct, st, cp * ct)
}

fn direction_angles_deg(d: Vec3) -> (f64, f64) {
    let el = d.y.clamp(-1.0, 1.0).asin();
    let az = d.x.atan2(d.z);
    // Avoid "-0.0" keys.
    let r = |a: f64| {
        let v = (a.to_degrees() * 10.0).round() / 10.0;
        if v == 0.0 {
            0.0
        } else {
            v
        }
    };
    (r(az), r(el))
}

/// Binary switch states of one tile's `M × M` unit-cell array, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SwitchMatrix {
    m: usize,
    bits: Vec<u8>,
}

impl SwitchMatrix {
    pub fn zeros(m: usize) -> Self {
        SwitchMatrix {
            m,
            bits: vec![0; m * m],
        }
    }

    pub fn from_bits(m: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != m * m || bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter(format!(
                "switch matrix needs {} binary entries",
                m * m
            )));
        }
        Ok(SwitchMatrix { m, bits })
    }

    /// The configuration whose row-major bit string, read as a binary number
    /// with `s_00` as the most significant bit, equals `index`.
    pub fn from_index(m: usize, index: u64) -> Self {
        let n = m * m;
        let bits = (0..n).map(|k| ((index >> (n - 1 - k)) & 1) as u8).collect();
        SwitchMatrix { m, bits }
    }

    pub fn index(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.m + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.m + col] = value as u8;
    }

    pub fn complement(&self) -> Self {
        SwitchMatrix {
            m: self.m,
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(m: usize, s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Schema(format!("bad switch bit {c:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        SwitchMatrix::from_bits(m, bits)
    }
}

/// Sampled power reflection pattern over azimuth × elevation in (−90°, 90°).
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionPattern {
    pub step_deg: f64,
    /// Sample angles (degrees), shared by both axes.
    pub angles_deg: Vec<f64>,
    /// `power[el_index * n + az_index]`, linear, relative to a single cell.
    pub power: Vec<f64>,
}

impl ReflectionPattern {
    pub fn max(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    /// Sample nearest to the given angles.
    pub fn at(&self, azimuth_deg: f64, elevation_deg: f64) -> f64 {
        let n = self.angles_deg.len();
        let idx = |a: f64| {
            let i = ((a - self.angles_deg[0]) / self.step_deg).round();
            (i.max(0.0) as usize).min(n - 1)
        };
        self.power[idx(elevation_deg) * n + idx(azimuth_deg)]
    }
}

/// Sample angles covering the open interval (−90°, 90°) at `step_deg`.
pub fn pattern_angles(step_deg: f64) -> Vec<f64> {
    let k = ((90.0 / step_deg).ceil() as i64 - 1).max(0);
    (-k..=k).map(|i| i as f64 * step_deg).collect()
}

/// Array geometry and angular sampling for pattern evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayModel {
    pub wavelength: f64,
    pub cell_pitch: f64,
    pub grid_step_deg: f64,
}

impl ArrayModel {
    /// Half-wavelength pitch and 1° pattern sampling.
    pub fn new(wavelength: f64) -> Self {
        ArrayModel {
            wavelength,
            cell_pitch: wavelength / 2.0,
            grid_step_deg: 1.0,
        }
    }

    /// Per-cell phasors `exp(j k (I + O) · r)` for one outgoing direction.
    fn phasors(&self, m: usize, incident: Vec3, out: Vec3) -> Vec<Complex64> {
        let k = 2.0 * std::f64::consts::PI / self.wavelength;
        let s = incident + out;
        let mut v = Vec::with_capacity(m * m);
        for row in 0..m {
            for col in 0..m {
                let phase = k * self.cell_pitch * (s.x * col as f64 + s.y * row as f64);
                v.push(Complex64::from_polar(1.0, phase));
            }
        }
        v
    }
}

#[inline]
fn array_power(bits: &[u8], phasors: &[Complex64]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&b, &p) in bits.iter().zip(phasors) {
        if b == 0 {
            acc += p;
        } else {
            acc -= p;
        }
    }
    acc.norm_sqr()
}

/// Relative power re-radiated towards `out` (tile frame).
pub fn power_toward(sigma: &SwitchMatrix, incident: Vec3, out: Vec3, model: &ArrayModel) -> f64 {
    array_power(sigma.bits(), &model.phasors(sigma.dim(), incident, out))
}

/// Far-field power pattern of a switch configuration for a wave arriving
/// from `incident` (tile frame), sampled at `model.grid_step_deg`.
pub fn array_pattern(sigma: &SwitchMatrix, incident: Vec3, model: &ArrayModel) -> ReflectionPattern {
    let grid = PatternGrid::new(sigma.dim(), incident.normalized(), model);
    ReflectionPattern {
        step_deg: model.grid_step_deg,
        angles_deg: grid.angles_deg.clone(),
        power: grid.powers(sigma.bits()).collect(),
    }
}

/// Precomputed phasors for every grid direction.
struct PatternGrid {
    angles_deg: Vec<f64>,
    cells: usize,
    phasors: Vec<Complex64>,
}

impl PatternGrid {
    fn new(m: usize, incident: Vec3, model: &ArrayModel) -> Self {
        let angles_deg = pattern_angles(model.grid_step_deg);
        let mut phasors = Vec::with_capacity(angles_deg.len().pow(2) * m * m);
        for &el in &angles_deg {
            for &az in &angles_deg {
                let out = direction_from_angles(az.to_radians(), el.to_radians());
                phasors.extend(model.phasors(m, incident, out));
            }
        }
        PatternGrid {
            angles_deg,
            cells: m * m,
            phasors,
        }
    }

    fn powers<'a>(&'a self, bits: &'a [u8]) -> impl Iterator<Item = f64> + 'a {
        self.phasors.chunks_exact(self.cells).map(move |p| array_power(bits, p))
    }

    /// Pattern maximum, abandoning early once it reaches `bound`.
    fn max_bounded(&self, bits: &[u8], bound: f64) -> f64 {
        let mut m = 0.0f64;
        for p in self.powers(bits) {
            m = m.max(p);
            if m >= bound {
                break;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LookupSearch {
    /// Enumerate all of Σ; only for `M·M ≤ 16`.
    Exhaustive,
    Genetic(GaParams),
}

/// Table from function key to the best switch configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    m: usize,
    entries: BTreeMap<String, SwitchMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LookupFile {
    m: usize,
    entries: BTreeMap<String, String>,
}

impl LookupTable {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, function: &EmFunction) -> Option<&SwitchMatrix> {
        self.entries.get(&function.key())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &SwitchMatrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_toml(&self) -> String {
        let file = LookupFile {
            m: self.m,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_bit_string()))
                .collect(),
        };
        toml::to_string_pretty(&file).expect("lookup table serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: LookupFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let entries = file
            .entries
            .into_iter()
            .map(|(k, v)| Ok((k, SwitchMatrix::from_bit_string(file.m, &v)?)))
            .collect::<Result<_>>()?;
        Ok(LookupTable { m: file.m, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_toml())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        LookupTable::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// How well `sigma` realises `function`; higher is better.
///
/// ABSORB: negated pattern maximum (minimising the strongest lobe).
/// STEER: power re-radiated towards the intended direction.
pub fn configuration_fitness(function: &EmFunction, sigma: &SwitchMatrix, model: &ArrayModel) -> f64 {
    match function.outgoing {
        Some(out) => power_toward(sigma, function.incident, out, model),
        None => -array_pattern(sigma, function.incident, model).max(),
    }
}

/// Fills the lookup table with the best configuration for every catalog
/// function. The patterns use `ArrayModel::new(function.wavelength)`.
pub fn populate_lookup(catalog: &[EmFunction], m: usize, search: &LookupSearch) -> Result<LookupTable> {
    populate_lookup_with(catalog, m, search, |f| ArrayModel::new(f.wavelength))
}

pub fn populate_lookup_with(
    catalog: &[EmFunction],
    m: usize,
    search: &LookupSearch,
    model_for: impl Fn(&EmFunction) -> ArrayModel,
) -> Result<LookupTable> {
    if m == 0 {
        return Err(Error::InvalidParameter("switch array must be at least 1x1".into()));
    }
    if matches!(search, LookupSearch::Exhaustive) && m * m > 16 {
        return Err(Error::InvalidParameter(format!(
            "exhaustive search is limited to 16 switches, got {}",
            m * m
        )));
    }
    let mut entries = BTreeMap::new();
    for f in catalog {
        f.validate()?;
        let model = model_for(f);
        let best = match search {
            LookupSearch::Exhaustive => exhaustive_best(f, m, &model),
            LookupSearch::Genetic(ga) => genetic_best(f, m, &model, ga),
        };
        entries.insert(f.key(), best);
    }
    Ok(LookupTable { m, entries })
}

/// Exact argmax over Σ. A configuration and its complement share a pattern,
/// so only half of Σ (`s_00 = 0`) is visited; that half holds the lower
/// index of every complementary pair, which is the tie-break we want.
fn exhaustive_best(f: &EmFunction, m: usize, model: &ArrayModel) -> SwitchMatrix {
    let n = m * m;
    let half = 1u64 << (n - 1);
    match f.outgoing {
        Some(out) => {
            let phasors = model.phasors(m, f.incident, out);
            let mut best = (f64::NEG_INFINITY, 0u64);
            for idx in 0..half {
                let s = SwitchMatrix::from_index(m, idx);
                let p = array_power(s.bits(), &phasors);
                if p > best.0 {
                    best = (p, idx);
                }
            }
            SwitchMatrix::from_index(m, best.1)
        }
        None => {
            let grid = PatternGrid::new(m, f.incident, model);
            let mut best = (f64::INFINITY, 0u64);
            for idx in 0..half {
                let s = SwitchMatrix::from_index(m, idx);
                let peak = grid.max_bounded(s.bits(), best.0);
                if peak < best.0 {
                    best = (peak, idx);
                }
            }
            SwitchMatrix::from_index(m, best.1)
        }
    }
}

fn genetic_best(f: &EmFunction, m: usize, model: &ArrayModel, ga: &GaParams) -> SwitchMatrix {
    let n = m * m;
    let result = match f.outgoing {
        Some(out) => {
            let phasors = model.phasors(m, f.incident, out);
            ga_run(|g: &[u8]| array_power(g, &phasors), ga, 2, n, &[])
        }
        None => {
            let grid = PatternGrid::new(m, f.incident, model);
            ga_run(
                |g: &[u8]| -grid.max_bounded(g, f64::INFINITY),
                ga,
                2,
                n,
                &[],
            )
        }
    };
    let s = SwitchMatrix::from_bits(m, result.best).expect("binary genome");
    // Report the lower-index member of the complementary pair.
    let c = s.complement();
    if c.index() < s.index() {
        c
    } else {
        s
    }
}

/// Catalog state whose virtual-normal mirror of the requested incident
/// direction lands closest to the requested outgoing direction. Ties go to
/// the smaller total steering angle.
pub fn quantize_function(requested: &EmFunction, tile: &Tile) -> TileFunction {
    let Some(out) = requested.outgoing else {
        return TileFunction::Absorb;
    };
    let travel = -requested.incident.normalized();
    let out = out.normalized();
    let mut best: Option<(f64, f64, TileFunction)> = None;
    for &az in &STEER_ANGLES_DEG {
        for &el in &STEER_ANGLES_DEG {
            let n = tile.steered_normal(az, el);
            let reflected = travel - n * (2.0 * travel.dot(n));
            let err = reflected.angle_to(out);
            let size = az.abs() + el.abs();
            let state = TileFunction::Steer {
                azimuth: az as i8,
                elevation: el as i8,
            };
            let better = match best {
                None => true,
                Some((be, bs, _)) => err < be - 1e-9 || ((err - be).abs() <= 1e-9 && size < bs),
            };
            if better {
                best = Some((err, size, state));
            }
        }
    }
    best.expect("catalog is non-empty").2
}

/// Canonical catalog functions for all 26 tile states.
pub fn tile_state_catalog(wavelength: f64) -> Vec<EmFunction> {
    TileFunction::all().map(|s| EmFunction::for_state(s, wavelength)).collect()
}
