//! Fixtures shared by the benchmarks.

use hsfsim::raytrace::RadioParams;
use hsfsim::scene::floorplan;
use hsfsim::Scene;

pub fn paper_setup(ray_count: usize) -> (Scene, RadioParams) {
    let mut params = RadioParams::paper(60e9);
    params.ray_count = ray_count;
    (floorplan::build(), params)
}
