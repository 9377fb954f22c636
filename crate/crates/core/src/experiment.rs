//! Scenario files and the experiment runner behind the command line.
//!
//! A run writes, under its output directory:
//! `summary.txt`, `power_grid.csv`, `delay_spread_grid.csv`, `paths.csv`,
//! `best_genome.json`, `history.csv` and `scenario.toml`. Every file starts
//! with a header carrying the seed and the full parameter set, so a run is
//! reproducible from any one of its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{FitnessReport, GaParams, Objective, Optimizer};
use crate::raytrace::{EnvConfiguration, RadioParams};
use crate::scene::{floorplan, Scene};

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Every tile specular; no search.
    Plain,
    /// Maximise the minimum received power.
    CaseA,
    /// Minimise the maximum delay spread subject to a power threshold.
    CaseB,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Plain => "plain",
            Case::CaseA => "case_a",
            Case::CaseB => "case_b",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneSource {
    PaperFloorplan,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub case: Case,
    /// Carrier frequency in Hz.
    pub frequency: f64,
    /// Required per-receiver power for Case B, in dBm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_dbm: Option<f64>,
    pub seed: u64,
    pub scene: SceneSource,
    /// Start the search from a population of Plain genomes only.
    #[serde(default)]
    pub plain_only_population: bool,
    pub ga: GaParams,
    pub radio: RadioParams,
}

impl Scenario {
    /// Two-corridor floor plan defaults at `frequency`.
    pub fn paper(case: Case, frequency: f64) -> Self {
        Scenario {
            version: SCENARIO_VERSION,
            case,
            frequency,
            threshold_dbm: (case == Case::CaseB).then(|| default_threshold_dbm(frequency)),
            seed: 1,
            scene: SceneSource::PaperFloorplan,
            plain_only_population: false,
            ga: GaParams::default(),
            radio: RadioParams::paper(frequency),
        }
    }

    /// Parses and validates a scenario. Syntax and schema problems come back
    /// as [`Error::Schema`] with the line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                self.version
            )));
        }
        if self.case == Case::CaseB && self.threshold_dbm.is_none() {
            return Err(Error::Schema("case_b requires threshold_dbm".into()));
        }
        if self.frequency != self.radio.frequency {
            return Err(Error::InvalidParameter(format!(
                "frequency {} differs from radio.frequency {}",
                self.frequency, self.radio.frequency
            )));
        }
        self.ga.validate()?;
        self.radio.validate()
    }

    pub fn objective(&self) -> Objective {
        match self.case {
            Case::CaseB => Objective::MinMaxDelaySpread {
                threshold_dbm: self.threshold_dbm.expect("validated"),
            },
            _ => Objective::MaxMinPower,
        }
    }

    fn build_scene(&self) -> Result<Scene> {
        match &self.scene {
            SceneSource::PaperFloorplan => Ok(floorplan::build()),
            SceneSource::File(p) => Scene::load(p),
        }
    }

    /// Single-line description used as the header of every output file.
    pub fn header(&self) -> String {
        let r = &self.radio;
        let g = &self.ga;
        format!(
            "hsfsim case={} seed={} frequency_hz={} threshold_dbm={} rays={} bounces={} tx_power_dbm={} \
             rx_sphere_scale={} floor_dbm={} concrete_loss_db={} population={} generations={} crossover={} \
             mutation={} elite={} ga_seed={} plain_only={} scene={}",
            self.case.name(),
            self.seed,
            self.frequency,
            self.threshold_dbm.map_or("none".to_string(), |t| t.to_string()),
            r.ray_count,
            r.max_bounces,
            r.tx_power_dbm,
            r.rx_sphere_scale,
            r.power_floor_dbm,
            r.concrete_loss_db,
            g.population_size,
            g.generations,
            g.crossover_rate,
            g.mutation_rate,
            g.elite_count,
            g.seed,
            self.plain_only_population,
            match &self.scene {
                SceneSource::PaperFloorplan => "paper_floorplan".to_string(),
                SceneSource::File(p) => p.display().to_string(),
            }
        )
    }
}

/// Case B thresholds of the evaluation: 1 dBm at 60 GHz, 30 dBm at 2.4 GHz.
pub fn default_threshold_dbm(frequency: f64) -> f64 {
    if frequency >= 10e9 {
        1.0
    } else {
        30.0
    }
}

/// Parses `60GHz`, `2.4GHz`, `2400MHz` or a plain number of Hz.
pub fn parse_frequency(text: &str) -> Result<f64> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (num, scale) = if let Some(n) = lower.strip_suffix("ghz") {
        (n, 1e9)
    } else if let Some(n) = lower.strip_suffix("mhz") {
        (n, 1e6)
    } else if let Some(n) = lower.strip_suffix("hz") {
        (n, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    match num.trim().parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(v * scale),
        _ => Err(Error::InvalidParameter(format!("bad frequency '{text}'"))),
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub best: EnvConfiguration,
    pub report: FitnessReport,
    pub plain: FitnessReport,
    pub history: Vec<[f64; 3]>,
    pub table: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        Some(Stats {
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

/// Max/Mean/Min table of power (dBm, all receivers) and delay spread (ns,
/// connected receivers), optimised next to Plain.
pub fn summary_table(best: &FitnessReport, plain: &FitnessReport) -> String {
    let spreads = |r: &FitnessReport| -> Vec<f64> { r.delay_spreads.iter().flatten().map(|s| s * 1e9).collect() };
    let cols = [
        Stats::of(&best.rx_power_dbm),
        Stats::of(&plain.rx_power_dbm),
        Stats::of(&spreads(best)),
        Stats::of(&spreads(plain)),
    ];
    let mut out = String::new();
    let _ = writeln!(out, "{:<6}|{:^21}|{:^21}", "", "Power (dBmW)", "Delay spread (nsec)");
    let _ = writeln!(out, "{:<6}|{:>10}|{:>10}|{:>10}|{:>10}", "", "HSF", "Plain", "HSF", "Plain");
    for (name, pick) in [
        ("Max", (|s: &Stats| s.max) as fn(&Stats) -> f64),
        ("Mean", |s: &Stats| s.mean),
        ("Min", |s: &Stats| s.min),
    ] {
        let cells: Vec<String> = cols
            .iter()
            .map(|c| c.as_ref().map_or("-".to_string(), |s| format!("{:.2}", pick(s))))
            .collect();
        let _ = writeln!(out, "{:<6}|{:>10}|{:>10}|{:>10}|{:>10}", name, cells[0], cells[1], cells[2], cells[3]);
    }
    out
}

/// Runs `scenario` and writes its artifacts under `out_dir`.
pub fn run(scenario: &Scenario, out_dir: impl AsRef<Path>) -> Result<RunSummary> {
    scenario.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let scene = scenario.build_scene()?;
    let objective = scenario.objective();
    let optimizer = Optimizer::new(&scene, scenario.radio.clone(), scenario.seed)?;
    let plain_config = EnvConfiguration::plain(scene.tile_count());
    let plain = optimizer.evaluate(&plain_config, objective)?;

    let (best, report, history) = match scenario.case {
        Case::Plain => (plain_config.clone(), plain.clone(), vec![plain.score.0]),
        Case::CaseA | Case::CaseB => {
            let seeds = if scenario.plain_only_population {
                vec![plain_config.states().to_vec(); scenario.ga.population_size]
            } else {
                vec![plain_config.states().to_vec()]
            };
            let r = optimizer.run_seeded(objective, &scenario.ga, &seeds)?;
            (r.best, r.report, r.history.iter().map(|s| s.0).collect())
        }
    };

    let header = scenario.header();
    let table = summary_table(&report, &plain);
    let floor = scenario.radio.power_floor_dbm;

    let mut summary = format!("# {header}\n{table}");
    let _ = writeln!(summary, "disconnected receivers: HSF {} / Plain {}", report.disconnected(floor), plain.disconnected(floor));
    if let Some(t) = scenario.threshold_dbm {
        let met = report.rx_power_dbm.iter().all(|&p| p >= t);
        let _ = writeln!(
            summary,
            "minimum total received power {t} dBmW: {}",
            if met { "met" } else { "not met" }
        );
    }
    fs::write(out_dir.join("summary.txt"), &summary)?;

    let rx = &scenario.radio.rx_positions;
    let mut power = format!("# {header}\nrx,x,y,z,hsf_dbm,plain_dbm\n");
    let mut spread = format!("# {header}\nrx,x,y,z,hsf_ns,plain_ns\n");
    let ns = |v: Option<f64>| v.map_or(String::new(), |s| format!("{:.4}", s * 1e9));
    for (i, p) in rx.iter().enumerate() {
        let _ = writeln!(
            power,
            "{i},{:.3},{:.3},{:.3},{:.4},{:.4}",
            p.x, p.y, p.z, report.rx_power_dbm[i], plain.rx_power_dbm[i]
        );
        let _ = writeln!(
            spread,
            "{i},{:.3},{:.3},{:.3},{},{}",
            p.x,
            p.y,
            p.z,
            ns(report.delay_spreads[i]),
            ns(plain.delay_spreads[i])
        );
    }
    fs::write(out_dir.join("power_grid.csv"), power)?;
    fs::write(out_dir.join("delay_spread_grid.csv"), spread)?;

    let mut paths = format!("# {header}\n").into_bytes();
    optimizer.trace(&best)?.write_csv(&mut paths)?;
    fs::write(out_dir.join("paths.csv"), paths)?;

    let genome = serde_json::json!({
        "header": header,
        "seed": scenario.seed,
        "case": scenario.case,
        "genome": best.states(),
        "objective": report.objective,
        "score": report.score.0,
        "constraint_satisfied": report.constraint_satisfied,
        "rx_power_dbm": report.rx_power_dbm,
        "delay_spreads_s": report.delay_spreads,
    });
    fs::write(
        out_dir.join("best_genome.json"),
        serde_json::to_string_pretty(&genome).expect("json") + "\n",
    )?;

    let mut hist = format!("# {header}\ngeneration,score0,score1,score2\n");
    for (g, s) in history.iter().enumerate() {
        let _ = writeln!(hist, "{g},{:.9e},{:.9e},{:.9e}", s[0], s[1], s[2]);
    }
    fs::write(out_dir.join("history.csv"), hist)?;

    fs::write(out_dir.join("scenario.toml"), format!("# {header}\n{}", scenario.to_toml()))?;

    Ok(RunSummary {
        best,
        report,
        plain,
        history,
        table,
    })
}
