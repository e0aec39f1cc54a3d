//! Run-configuration schema: a single TOML file describing the plant, its
//! block structure, the attack, the coding protocol, and simulation knobs.
//!
//! Parsing is strict — unknown or missing fields fail with the field path and
//! the line/column reported by the TOML parser — and every run artifact
//! records a digest of the configuration that is stable under reordering of
//! keys and sections.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::dos::{self, DoSInterval, DoSParams, DoSTrace, TraceGenerator};
use crate::error::{Error, Result};
use crate::model::{build_transformed_system, BlockStructure, JordanBlock, PlantSpec, TransformedSystem};
use crate::rates::RateAssignment;
use crate::sim::{Protocol, SimConfig};
use crate::tvr::TvrConfig;

/// Command-line overrides that take precedence over config-file values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub substeps: Option<u32>,
    pub horizon: Option<f64>,
}

/// Top-level configuration file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantSection,
    /// Real Jordan structure of the plant. Optional only for plants with
    /// distinct eigenvalues, where it can be derived numerically.
    #[serde(default)]
    pub structure: Option<StructureSection>,
    pub sim: SimSection,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub dos: DosSection,
    #[serde(default)]
    pub bound: BoundSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// Plant matrices as row-major nested arrays.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    /// Similarity matrix `S` with `S A S^-1` in real Jordan form.
    pub s: Vec<Vec<f64>>,
    pub blocks: Vec<BlockSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSection {
    /// Real part of the block's eigenvalue (1/s).
    pub real: f64,
    /// Imaginary-part magnitude (rad/s); 0 marks a real block.
    #[serde(default)]
    pub imag: f64,
    /// Block multiplicity: spans `size` states when real, `2*size` when
    /// complex.
    pub size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Interval between transmission attempts (s).
    pub delta: f64,
    /// Simulated time span (s).
    pub horizon: f64,
    /// Integration substeps per attempt interval.
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    /// Initial plant state, original coordinates.
    pub x0: Vec<f64>,
    /// Additive margin on the initial quantization range.
    #[serde(default = "default_range_margin")]
    pub range_margin: f64,
}

fn default_substeps() -> u32 {
    20
}

fn default_range_margin() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    TimeInvariant,
    TimeVarying,
    Unquantized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub kind: ProtocolKind,
    /// Bits per block and attempt (the cap, for the time-varying protocol).
    /// A single entry is broadcast to every block.
    #[serde(default)]
    pub bits: Vec<u32>,
    /// Per-block growth rates for the time-varying budget rule; defaults to
    /// `c + 1`. A single entry is broadcast.
    #[serde(default)]
    pub growth: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    /// Explicit attack intervals as `[onset_s, duration_s]` pairs.
    #[serde(default)]
    pub intervals: Option<Vec<[f64; 2]>>,
    /// Horizon the trace is defined on; defaults to the simulation horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub generator: Option<GeneratorSection>,
    /// Assumed frequency/duration budget used by bound computations and
    /// threshold warnings.
    #[serde(default)]
    pub assume: Option<AssumeSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    /// Cycle-length range (s).
    pub period: [f64; 2],
    /// Jammed fraction range per cycle.
    pub duty: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumeSection {
    pub eta: f64,
    pub tau_d: f64,
    pub kappa: f64,
    pub t_frac: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// Extra bits added on top of the smallest stabilizing integer rate.
    #[serde(default)]
    pub guard: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Uniform per-block rate range, inclusive.
    pub r_min: u32,
    pub r_max: u32,
    /// Attack-level range (combined frequency + duration load).
    pub level_min: f64,
    pub level_max: f64,
    pub level_count: usize,
    /// Monte-Carlo seeds per grid cell.
    #[serde(default = "default_sweep_seeds")]
    pub seeds: u64,
    /// Whether to run simulations at analytically stable cells.
    #[serde(default = "default_true")]
    pub empirical: bool,
    /// Refuse grids with more cells than this.
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
    /// Sweep-specific horizon (s); defaults to the `[sim]` horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Sweep-specific substeps; defaults to the `[sim]` value.
    #[serde(default)]
    pub substeps: Option<u32>,
}

fn default_sweep_seeds() -> u64 {
    20
}

fn default_true() -> bool {
    true
}

fn default_max_cells() -> usize {
    2000
}

/// Read and parse a configuration file, reporting the path plus the parser's
/// line/column/field diagnostics on failure. Returns the parsed config along
/// with the raw text (used for digesting).
pub fn load(path: &Path) -> Result<(RunConfig, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok((config, text))
}

fn matrix_from(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Config(format!("{name} must be a nonempty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl RunConfig {
    /// Assemble the plant and its validated block structure.
    pub fn build_system(&self) -> Result<TransformedSystem> {
        let a = matrix_from(&self.plant.a, "plant.a")?;
        let b = matrix_from(&self.plant.b, "plant.b")?;
        let k = matrix_from(&self.plant.k, "plant.k")?;
        let plant = PlantSpec::new(a, b, k)?;
        let structure = match &self.structure {
            Some(sec) => {
                let s = matrix_from(&sec.s, "structure.s")?;
                let mut blocks = Vec::with_capacity(sec.blocks.len());
                for blk in &sec.blocks {
                    blocks.push(JordanBlock::new(blk.real, blk.imag, blk.size)?);
                }
                BlockStructure::new(blocks, s)?
            }
            None => BlockStructure::from_diagonalizable(plant.a())?,
        };
        build_transformed_system(plant, structure)
    }

    /// Effective simulation horizon after command-line overrides.
    pub fn effective_horizon(&self, ov: &Overrides) -> f64 {
        ov.horizon.unwrap_or(self.sim.horizon)
    }

    /// Effective generator seed after overrides, if the attack is generated.
    pub fn effective_seed(&self, ov: &Overrides) -> Option<u64> {
        match (&self.dos.generator, ov.seed) {
            (Some(_), Some(s)) => Some(s),
            (Some(g), None) => Some(g.seed),
            (None, _) => None,
        }
    }

    /// Build the attack trace: explicit intervals, a seeded generator run, or
    /// an empty (attack-free) trace when neither is configured.
    pub fn build_trace(&self, ov: &Overrides) -> Result<DoSTrace> {
        let sim_horizon = self.effective_horizon(ov);
        match (&self.dos.intervals, &self.dos.generator) {
            (Some(_), Some(_)) => Err(Error::Config(
                "dos.intervals and dos.generator are mutually exclusive".into(),
            )),
            (Some(pairs), None) => {
                let intervals: Vec<DoSInterval> = pairs
                    .iter()
                    .map(|&[onset, duration]| DoSInterval { onset, duration })
                    .collect();
                let last_end = intervals.iter().map(|iv| iv.end()).fold(0.0, f64::max);
                let horizon = self.dos.horizon.unwrap_or(sim_horizon.max(last_end));
                DoSTrace::new(intervals, horizon)
            }
            (None, Some(gen)) => {
                let g = TraceGenerator::new(
                    (gen.period[0], gen.period[1]),
                    (gen.duty[0], gen.duty[1]),
                )?;
                let horizon = self.dos.horizon.unwrap_or(sim_horizon).max(sim_horizon);
                let seed = ov.seed.unwrap_or(gen.seed);
                dos::generate_trace(&g, horizon, seed)
            }
            (None, None) => {
                let horizon = self.dos.horizon.unwrap_or(sim_horizon).max(sim_horizon);
                DoSTrace::empty(horizon)
            }
        }
    }

    /// Per-block bit counts, broadcasting a single entry across all blocks.
    fn rate_assignment(&self, structure: &BlockStructure) -> Result<RateAssignment> {
        let n_blocks = structure.blocks().len();
        match self.protocol.bits.len() {
            0 => Err(Error::Config(
                "protocol.bits is required for quantized protocols".into(),
            )),
            1 => RateAssignment::new(vec![self.protocol.bits[0]; n_blocks]),
            n if n == n_blocks => RateAssignment::new(self.protocol.bits.clone()),
            n => Err(Error::Config(format!(
                "protocol.bits has {n} entries but the structure has {n_blocks} blocks"
            ))),
        }
    }

    /// Build the coding protocol against a concrete block structure.
    pub fn build_protocol(&self, structure: &BlockStructure) -> Result<Protocol> {
        match self.protocol.kind {
            ProtocolKind::Unquantized => Ok(Protocol::Unquantized),
            ProtocolKind::TimeInvariant => {
                Ok(Protocol::TimeInvariant(self.rate_assignment(structure)?))
            }
            ProtocolKind::TimeVarying => {
                let r_max = self.rate_assignment(structure)?;
                let cfg = match &self.protocol.growth {
                    None => TvrConfig::with_default_growth(structure, &r_max)?,
                    Some(w) => {
                        let n_blocks = structure.blocks().len();
                        let w = match w.len() {
                            1 => vec![w[0]; n_blocks],
                            n if n == n_blocks => w.clone(),
                            n => {
                                return Err(Error::Config(format!(
                                    "protocol.growth has {n} entries but the structure has {n_blocks} blocks"
                                )))
                            }
                        };
                        TvrConfig::new(structure, &r_max, &w)?
                    }
                };
                Ok(Protocol::TimeVarying(cfg))
            }
        }
    }

    /// Assumed attack budget, if the config provides one.
    pub fn assumed_params(&self) -> Result<Option<DoSParams>> {
        match &self.dos.assume {
            None => Ok(None),
            Some(a) => Ok(Some(DoSParams::new(a.eta, a.tau_d, a.kappa, a.t_frac)?)),
        }
    }

    /// Assemble the full simulation description.
    pub fn build_sim(&self, ov: &Overrides) -> Result<SimConfig> {
        let system = self.build_system()?;
        let trace = self.build_trace(ov)?;
        let protocol = self.build_protocol(system.structure())?;
        if self.sim.x0.len() != system.n_x() {
            return Err(Error::Config(format!(
                "sim.x0 has {} entries, plant has {} states",
                self.sim.x0.len(),
                system.n_x()
            )));
        }
        Ok(SimConfig {
            system,
            trace,
            protocol,
            delta: self.sim.delta,
            horizon: self.effective_horizon(ov),
            substeps: ov.substeps.unwrap_or(self.sim.substeps),
            x0: DVector::from_vec(self.sim.x0.clone()),
            range_margin: self.sim.range_margin,
            dos_params: self.assumed_params()?,
        })
    }
}

fn canonical_leaf(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::String(s) => out.push_str(&format!("{s:?}")),
        toml::Value::Integer(i) => out.push_str(&i.to_string()),
        toml::Value::Float(f) => out.push_str(&format!("{f:?}")),
        toml::Value::Boolean(b) => out.push_str(&b.to_string()),
        toml::Value::Datetime(d) => out.push_str(&d.to_string()),
        toml::Value::Array(_) | toml::Value::Table(_) => unreachable!("handled by caller"),
    }
}

fn canonicalize(value: &toml::Value, path: &mut Vec<String>, out: &mut String) {
    match value {
        toml::Value::Table(table) => {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort();
            for key in keys {
                path.push(key.clone());
                canonicalize(&table[key.as_str()], path, out);
                path.pop();
            }
        }
        toml::Value::Array(items) => {
            for (index, item) in items.iter().enumerate() {
                path.push(index.to_string());
                canonicalize(item, path, out);
                path.pop();
            }
        }
        leaf => {
            out.push_str(&path.join("."));
            out.push('=');
            canonical_leaf(leaf, out);
            out.push('\n');
        }
    }
}

/// SHA-256 of the configuration in a canonical flattened form: `path=value`
/// lines with all table keys sorted, so reordering keys or whole sections
/// leaves the digest unchanged.
pub fn config_digest(text: &str) -> Result<String> {
    let value: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("cannot digest config: {e}")))?;
    let mut canon = String::new();
    let mut path = Vec::new();
    canonicalize(&value, &mut path, &mut canon);
    let mut hasher = Sha256::new();
    hasher.update(canon.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [plant]
        a = [[1.0, 1.0], [0.0, 1.0]]
        b = [[1.0, 0.0], [0.0, 1.0]]
        k = [[-2.1961, -0.7545], [-0.7545, -2.7146]]

        [structure]
        s = [[1.0, 0.0], [0.0, 1.0]]
        [[structure.blocks]]
        real = 1.0
        size = 2

        [sim]
        delta = 0.1
        horizon = 20.0
        x0 = [1.0, 1.0]

        [protocol]
        kind = "time-invariant"
        bits = [2]
    "#;

    #[test]
    fn minimal_config_builds_a_runnable_sim() {
        let config: RunConfig = toml::from_str(MINIMAL).unwrap();
        let sim = config.build_sim(&Overrides::default()).unwrap();
        sim.validate().unwrap();
        assert_eq!(sim.substeps, 20);
        assert_eq!(sim.x0.len(), 2);
        match &sim.protocol {
            Protocol::TimeInvariant(ra) => assert_eq!(ra.bits(), &[2]),
            other => panic!("unexpected protocol {other:?}"),
        }
        assert_eq!(sim.trace.intervals().len(), 0);
    }

    #[test]
    fn missing_plant_field_reports_its_name() {
        let broken = MINIMAL.replace("a = [[1.0, 1.0], [0.0, 1.0]]", "");
        let err = toml::from_str::<RunConfig>(&broken).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('a'), "diagnostic should name the field: {msg}");
    }

    #[test]
    fn unknown_field_is_rejected_with_its_name() {
        let broken = MINIMAL.replace("delta = 0.1", "delta = 0.1\n        detla2 = 0.3");
        let err = toml::from_str::<RunConfig>(&broken).unwrap_err();
        assert!(err.to_string().contains("detla2"));
    }

    #[test]
    fn overrides_take_precedence() {
        let config: RunConfig = toml::from_str(MINIMAL).unwrap();
        let ov = Overrides {
            seed: Some(9),
            substeps: Some(7),
            horizon: Some(12.5),
        };
        let sim = config.build_sim(&ov).unwrap();
        assert_eq!(sim.substeps, 7);
        assert_eq!(sim.horizon, 12.5);
        // No generator configured, so the seed has nothing to override.
        assert_eq!(config.effective_seed(&ov), None);
    }

    #[test]
    fn digest_is_stable_under_key_and_section_reordering() {
        let reordered = r#"
        [protocol]
        bits = [2]
        kind = "time-invariant"

        [sim]
        x0 = [1.0, 1.0]
        horizon = 20.0
        delta = 0.1

        [structure]
        [[structure.blocks]]
        size = 2
        real = 1.0

        [plant]
        k = [[-2.1961, -0.7545], [-0.7545, -2.7146]]
        b = [[1.0, 0.0], [0.0, 1.0]]
        a = [[1.0, 1.0], [0.0, 1.0]]
        "#;
        // The structure.s key cannot move above the [[structure.blocks]]
        // array-of-tables in TOML syntax, so inject it in both variants at a
        // legal spot.
        let reordered = reordered.replace("[structure]", "[structure]\n        s = [[1.0, 0.0], [0.0, 1.0]]");
        let d1 = config_digest(MINIMAL).unwrap();
        let d2 = config_digest(&reordered).unwrap();
        assert_eq!(d1, d2);
        let changed = MINIMAL.replace("bits = [2]", "bits = [3]");
        assert_ne!(d1, config_digest(&changed).unwrap());
    }

    #[test]
    fn intervals_and_generator_conflict() {
        let conflicted = format!(
            "{MINIMAL}\n[dos]\nintervals = [[0.5, 0.2]]\n[dos.generator]\nperiod = [1.0, 2.0]\nduty = [0.1, 0.2]\n"
        );
        let config: RunConfig = toml::from_str(&conflicted).unwrap();
        assert!(config.build_trace(&Overrides::default()).is_err());
    }

    #[test]
    fn generator_seed_falls_back_to_config() {
        let gen = format!(
            "{MINIMAL}\n[dos.generator]\nperiod = [1.0, 2.0]\nduty = [0.1, 0.2]\nseed = 5\n"
        );
        let config: RunConfig = toml::from_str(&gen).unwrap();
        assert_eq!(config.effective_seed(&Overrides::default()), Some(5));
        assert_eq!(
            config.effective_seed(&Overrides {
                seed: Some(11),
                ..Default::default()
            }),
            Some(11)
        );
        let t5 = config.build_trace(&Overrides::default()).unwrap();
        let t11 = config
            .build_trace(&Overrides {
                seed: Some(11),
                ..Default::default()
            })
            .unwrap();
        assert!(t5.horizon() >= 20.0 && t11.horizon() >= 20.0);
    }
}
