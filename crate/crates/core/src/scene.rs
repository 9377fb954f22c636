//! Indoor geometry: planar rectangular surfaces, the tile grid laid over
//! tiled walls, ray queries and virtual-normal steering.
//!
//! Coordinates follow the floor plan convention used throughout the crate:
//! origin on the floor at the upper-left corner, `x` across the corridors,
//! `y` along them and `z` up.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emfunc::STEER_ANGLES_DEG;
use crate::error::{Error, Result};
use crate::vec3::Vec3;

/// Rays never re-hit a surface closer than this (metres).
pub const RAY_EPSILON: f64 = 1e-6;

const GEOM_TOL: f64 = 1e-9;

pub const SCENE_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    TiledWall,
    Concrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub id: usize,
    #[serde(default)]
    pub name: String,
    pub origin: Vec3,
    /// Horizontal extent; tile columns run along this edge.
    pub edge_u: Vec3,
    /// Second extent; tile rows run along this edge.
    pub edge_v: Vec3,
    pub material: Material,
    pub true_normal: Vec3,
}

impl Surface {
    pub fn width(&self) -> f64 {
        self.edge_u.norm()
    }

    pub fn height(&self) -> f64 {
        self.edge_v.norm()
    }

    pub fn is_tiled(&self) -> bool {
        self.material == Material::TiledWall
    }

    /// Local (u, v) coordinates in metres of a point assumed to lie on the plane.
    pub fn local(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        (
            d.dot(self.edge_u) / self.width(),
            d.dot(self.edge_v) / self.height(),
        )
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        if (p - self.origin).dot(self.true_normal).abs() > tol.max(GEOM_TOL) {
            return false;
        }
        let (u, v) = self.local(p);
        u >= -tol && u <= self.width() + tol && v >= -tol && v <= self.height() + tol
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidScene(format!("surface {}: {m}", self.id)));
        if self.width() <= 0.0 || self.height() <= 0.0 {
            return bad("zero-length edge");
        }
        if self.edge_u.dot(self.edge_v).abs() > GEOM_TOL * self.width() * self.height() {
            return bad("edges are not orthogonal");
        }
        if !self.true_normal.is_unit(1e-9) {
            return bad("normal is not unit length");
        }
        if self.true_normal.dot(self.edge_u).abs() > GEOM_TOL * self.width()
            || self.true_normal.dot(self.edge_v).abs() > GEOM_TOL * self.height()
        {
            return bad("normal is not perpendicular to the surface");
        }
        Ok(())
    }
}

/// Axis-aligned solid block, e.g. a thick interior wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solid {
    pub min: Vec3,
    pub max: Vec3,
}

impl Solid {
    pub fn contains_strictly(&self, p: Vec3) -> bool {
        p.x > self.min.x
            && p.x < self.max.x
            && p.y > self.min.y
            && p.y < self.max.y
            && p.z > self.min.z
            && p.z < self.max.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tile {
    pub id: usize,
    pub parent_surface: usize,
    pub row: usize,
    pub col: usize,
    pub center: Vec3,
    pub side: f64,
    pub true_normal: Vec3,
    /// In-plane axis that azimuth steering rotates about.
    pub up: Vec3,
    /// In-plane axis that elevation steering rotates about (`up × normal`).
    pub across: Vec3,
}

impl Tile {
    /// Virtual normal for a steering state, without catalog validation.
    ///
    /// The true normal is rotated by `azimuth` about `up` and then by
    /// `elevation` about `across`; positive elevation tilts towards `up`.
    pub fn steered_normal(&self, azimuth_deg: f64, elevation_deg: f64) -> Vec3 {
        let (sa, ca) = azimuth_deg.to_radians().sin_cos();
        let (se, ce) = elevation_deg.to_radians().sin_cos();
        (self.true_normal * (ca * ce) + self.across * sa + self.up * (ca * se)).normalized()
    }
}

/// Tile normal rotated to a catalog steering state.
pub fn virtual_normal(tile: &Tile, azimuth_deg: f64, elevation_deg: f64) -> Result<Vec3> {
    for a in [azimuth_deg, elevation_deg] {
        if !STEER_ANGLES_DEG.contains(&a) {
            return Err(Error::InvalidAngle(a));
        }
    }
    Ok(tile.steered_normal(azimuth_deg, elevation_deg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec3,
    pub distance: f64,
    pub surface: usize,
    pub tile: Option<usize>,
}

#[derive(Debug, Clone)]
struct TileGrid {
    base: usize,
    cols: usize,
    rows: usize,
}

/// Immutable scene: surfaces, optional solid blocks and the derived tile grid.
#[derive(Debug, Clone)]
pub struct Scene {
    surfaces: Vec<Surface>,
    solids: Vec<Solid>,
    tile_side: f64,
    tiles: Vec<Tile>,
    grids: Vec<Option<TileGrid>>,
}

impl Scene {
    pub fn new(surfaces: Vec<Surface>, solids: Vec<Solid>, tile_side: f64) -> Result<Self> {
        if tile_side.is_nan() || tile_side <= 0.0 {
            return Err(Error::InvalidScene("tile side must be positive".into()));
        }
        for (i, s) in surfaces.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidScene(format!(
                    "surface ids must be 0..n in order; found {} at position {i}",
                    s.id
                )));
            }
            s.validate()?;
        }

        let mut tiles = Vec::new();
        let mut grids = Vec::with_capacity(surfaces.len());
        for s in &surfaces {
            if !s.is_tiled() {
                grids.push(None);
                continue;
            }
            let cols_f = s.width() / tile_side;
            let rows_f = s.height() / tile_side;
            let cols = cols_f.round() as usize;
            let rows = rows_f.round() as usize;
            if (cols_f - cols as f64).abs() > 1e-9 || (rows_f - rows as f64).abs() > 1e-9 {
                return Err(Error::InvalidScene(format!(
                    "surface {} is not an integer number of tiles",
                    s.id
                )));
            }
            let base = tiles.len();
            let u = s.edge_u.normalized();
            let v = s.edge_v.normalized();
            let up = v;
            let across = up.cross(s.true_normal).normalized();
            for row in 0..rows {
                for col in 0..cols {
                    let center =
                        s.origin + u * ((col as f64 + 0.5) * tile_side) + v * ((row as f64 + 0.5) * tile_side);
                    tiles.push(Tile {
                        id: tiles.len(),
                        parent_surface: s.id,
                        row,
                        col,
                        center,
                        side: tile_side,
                        true_normal: s.true_normal,
                        up,
                        across,
                    });
                }
            }
            grids.push(Some(TileGrid { base, cols, rows }));
        }

        Ok(Scene {
            surfaces,
            solids,
            tile_side,
            tiles,
            grids,
        })
    }

    /// A scene with nothing in it; every ray escapes.
    pub fn empty() -> Self {
        Scene::new(Vec::new(), Vec::new(), 1.0).expect("empty scene is valid")
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn solids(&self) -> &[Solid] {
        &self.solids
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tile(&self, id: usize) -> Option<&Tile> {
        self.tiles.get(id)
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    pub fn tile_side(&self) -> f64 {
        self.tile_side
    }

    /// Tile ids of one surface, row-major.
    pub fn surface_tiles(&self, surface: usize) -> std::ops::Range<usize> {
        match self.grids.get(surface).and_then(|g| g.as_ref()) {
            Some(g) => g.base..g.base + g.rows * g.cols,
            None => 0..0,
        }
    }

    /// Tile containing a point on a tiled surface.
    pub fn tile_at(&self, surface: usize, point: Vec3) -> Option<usize> {
        let grid = self.grids.get(surface)?.as_ref()?;
        let s = &self.surfaces[surface];
        let (u, v) = s.local(point);
        let col = ((u / self.tile_side).floor().max(0.0) as usize).min(grid.cols - 1);
        let row = ((v / self.tile_side).floor().max(0.0) as usize).min(grid.rows - 1);
        Some(grid.base + row * grid.cols + col)
    }

    /// Nearest surface hit further than [`RAY_EPSILON`] along a unit direction.
    pub fn ray_intersect(&self, origin: Vec3, direction: Vec3) -> Option<Hit> {
        let mut best: Option<(f64, usize, Vec3)> = None;
        for s in &self.surfaces {
            let denom = direction.dot(s.true_normal);
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (s.origin - origin).dot(s.true_normal) / denom;
            if t <= RAY_EPSILON || best.is_some_and(|(bt, _, _)| t >= bt) {
                continue;
            }
            let p = origin + direction * t;
            let (u, v) = s.local(p);
            let tol = 1e-9;
            if u < -tol || u > s.width() + tol || v < -tol || v > s.height() + tol {
                continue;
            }
            best = Some((t, s.id, p));
        }
        best.map(|(distance, surface, point)| Hit {
            point,
            distance,
            surface,
            tile: self.tile_at(surface, point),
        })
    }

    pub fn is_inside_solid(&self, p: Vec3) -> bool {
        self.solids.iter().any(|s| s.contains_strictly(p))
    }

    /// Pairs of tiles whose squares touch along an edge on the open side of
    /// both tiles. Tiles meeting at a corner of the room are linked; tiles
    /// whose shared edge is buried inside a solid are not.
    pub fn tile_adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.tiles.len();
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in a + 1..n {
                if let Some(mid) = self.touching_edge_midpoint(&self.tiles[a], &self.tiles[b]) {
                    let na = self.tiles[a].true_normal;
                    let nb = self.tiles[b].true_normal;
                    let bisector = na + nb;
                    if bisector.norm() < 1e-6 {
                        continue;
                    }
                    let probe = mid + bisector.normalized() * 0.01;
                    if self.is_inside_solid(probe) {
                        continue;
                    }
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        adj
    }

    fn touching_edge_midpoint(&self, a: &Tile, b: &Tile) -> Option<Vec3> {
        for (x, y) in [(a, b), (b, a)] {
            for (p, q) in tile_edges(x) {
                if tile_square_contains(y, p) && tile_square_contains(y, q) {
                    return Some((p + q) * 0.5);
                }
            }
        }
        None
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            version: SCENE_FILE_VERSION,
            tile_side: self.tile_side,
            surfaces: self.surfaces.clone(),
            solids: self.solids.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.to_file()).expect("scene serialises")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.into_scene()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Scene::from_toml(&std::fs::read_to_string(path)?)
    }
}

fn tile_corners(t: &Tile) -> [Vec3; 4] {
    let h = t.side * 0.5;
    let u = t.across * h;
    let v = t.up * h;
    [t.center - u - v, t.center + u - v, t.center + u + v, t.center - u + v]
}

fn tile_edges(t: &Tile) -> [(Vec3, Vec3); 4] {
    let c = tile_corners(t);
    [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
}

fn tile_square_contains(t: &Tile, p: Vec3) -> bool {
    let d = p - t.center;
    let tol = 1e-6;
    let h = t.side * 0.5 + tol;
    d.dot(t.true_normal).abs() < tol && d.dot(t.across).abs() <= h && d.dot(t.up).abs() <= h
}

/// On-disk scene description (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u32,
    pub tile_side: f64,
    #[serde(default, rename = "surface")]
    pub surfaces: Vec<Surface>,
    #[serde(default, rename = "solid")]
    pub solids: Vec<Solid>,
}

impl SceneFile {
    pub fn into_scene(self) -> Result<Scene> {
        if self.version != SCENE_FILE_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scene file version {} (expected {SCENE_FILE_VERSION})",
                self.version
            )));
        }
        Scene::new(self.surfaces, self.solids, self.tile_side)
    }
}

pub mod floorplan {
    //! Two-corridor office floor: a 10 m × 15 m × 3 m box split by a 1 m
    //! thick middle wall that leaves a 3 m opening at the `y = 0` end.
    //!
    //! Tiled faces, in canonical order (tile ids are assigned face by face,
    //! row-major, bottom row first):
    //!
    //! | face | plane     | columns run | tiles |
    //! |------|-----------|-------------|-------|
    //! | south| y = 0     | +x          | 30    |
    //! | east | x = 10    | +y          | 45    |
    //! | north| y = 15    | −x          | 30    |
    //! | west | x = 0     | −y          | 45    |
    //! | middle wall, west face | x = 4.5 | −y | 36 |
    //! | middle wall, east face | x = 5.5 | −y | 36 |
    //!
    //! The 1 m end cap of the middle wall, the floor and the ceiling are
    //! untiled concrete. This layout is inferred from the room dimensions:
    //! it is the face assignment that yields 222 tiles.

    use super::*;

    pub const WIDTH: f64 = 10.0;
    pub const LENGTH: f64 = 15.0;
    pub const HEIGHT: f64 = 3.0;
    pub const MIDDLE_WALL_X: (f64, f64) = (4.5, 5.5);
    pub const MIDDLE_WALL_Y: (f64, f64) = (3.0, 15.0);
    pub const TILE_COUNT: usize = 222;

    pub const TX_POSITION: Vec3 = Vec3::new(7.0, 12.0, 2.0);

    /// 2 × 6 receiver grid at 2.5 m pitch, centred in the NLOS corridor
    /// `x ∈ [0, 4]`, `y ∈ [0, 15]` at 1.5 m height. Ordered by row (`y`), then `x`.
    pub fn receiver_grid() -> Vec<Vec3> {
        let xs = [0.75, 3.25];
        (0..6)
            .flat_map(|j| {
                let y = 1.25 + 2.5 * j as f64;
                xs.iter().map(move |&x| Vec3::new(x, y, 1.5))
            })
            .collect()
    }

    pub fn build() -> Scene {
        let h = Vec3::Z * HEIGHT;
        let (mx0, mx1) = MIDDLE_WALL_X;
        let (my0, my1) = MIDDLE_WALL_Y;
        let wall = |id: usize, name: &str, origin: Vec3, u: Vec3, normal: Vec3, material: Material| Surface {
            id,
            name: name.to_string(),
            origin,
            edge_u: u,
            edge_v: h,
            material,
            true_normal: normal,
        };
        let surfaces = vec![
            wall(0, "south", Vec3::ZERO, Vec3::X * WIDTH, Vec3::Y, Material::TiledWall),
            wall(1, "east", Vec3::new(WIDTH, 0.0, 0.0), Vec3::Y * LENGTH, -Vec3::X, Material::TiledWall),
            wall(2, "north", Vec3::new(WIDTH, LENGTH, 0.0), -Vec3::X * WIDTH, -Vec3::Y, Material::TiledWall),
            wall(3, "west", Vec3::new(0.0, LENGTH, 0.0), -Vec3::Y * LENGTH, Vec3::X, Material::TiledWall),
            wall(
                4,
                "middle_west",
                Vec3::new(mx0, my1, 0.0),
                -Vec3::Y * (my1 - my0),
                -Vec3::X,
                Material::TiledWall,
            ),
            wall(
                5,
                "middle_east",
                Vec3::new(mx1, my1, 0.0),
                -Vec3::Y * (my1 - my0),
                Vec3::X,
                Material::TiledWall,
            ),
            wall(
                6,
                "middle_end_cap",
                Vec3::new(mx0, my0, 0.0),
                Vec3::X * (mx1 - mx0),
                -Vec3::Y,
                Material::Concrete,
            ),
            Surface {
                id: 7,
                name: "floor".into(),
                origin: Vec3::ZERO,
                edge_u: Vec3::X * WIDTH,
                edge_v: Vec3::Y * LENGTH,
                material: Material::Concrete,
                true_normal: Vec3::Z,
            },
            Surface {
                id: 8,
                name: "ceiling".into(),
                origin: h,
                edge_u: Vec3::X * WIDTH,
                edge_v: Vec3::Y * LENGTH,
                material: Material::Concrete,
                true_normal: -Vec3::Z,
            },
        ];
        let solids = vec![Solid {
            min: Vec3::new(mx0, my0, 0.0),
            max: Vec3::new(mx1, my1, HEIGHT),
        }];
        Scene::new(surfaces, solids, 1.0).expect("floor plan is valid")
    }
}

/// The 222-tile two-corridor floor plan.
pub fn build_paper_floorplan() -> Scene {
    floorplan::build()
}
