//! Run configuration, experiment dispatch, artifact writers and golden checks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allen_cahn::{
    convergence_experiment, default_dt, diffuse_front, well_prepared_init, AcSolver, ConvergenceConfig, Seed,
};
use crate::barrier::{consistency_check, subsolution_residual, BarrierConfig, BarrierProfiles, CircleMotion, DELTA_EXPONENT};
use crate::error::{Error, Result};
use crate::fmcf::{run_circle_benchmark, FmcParams};
use crate::fracops::{compute_c_ns, spectral_symbol_closed_form, FracConstants, FracOrder};
use crate::geometry::{omega_closed_form, signed_distance_circle, FrontCurve, SignedDistanceField, DEFAULT_RHO_CELLS};
use crate::profiles::{
    compute_c0, solve_corrector, solve_layer, solvability_defect, CorrectorProfile, DoubleWell, LayerGrid, LayerSolution,
};
use crate::ScalarField;

/// Pinned acceptance tolerances.
pub mod tol {
    pub const RIDGE_DEFECT: f64 = 1e-3;
    pub const RIDGE_HALVING: f64 = 1.8;
    pub const KERNEL_CLOSED_FORM: f64 = 5e-3;
    pub const LAYER_RESIDUAL: f64 = 1e-8;
    pub const TAIL_EXPONENT: f64 = 0.03;
    pub const TAIL_COEFFICIENT: f64 = 0.05;
    pub const PHI_DOT_MASS: f64 = 1e-6;
    pub const SOLVABILITY: f64 = 1e-8;
    pub const CORRECTOR_RESIDUAL: f64 = 1e-6;
    pub const CORRECTOR_DECAY_FACTOR: f64 = 2.0;
    pub const CURVATURE_SLOPE: f64 = 0.02;
    pub const OMEGA_AGREEMENT: f64 = 0.01;
    pub const RADIUS_LAW_R2: f64 = 0.999;
    pub const EXTINCTION_TIME: f64 = 0.05;
    pub const MAX_PRINCIPLE_SLACK: f64 = 1e-10;
    pub const ENERGY_INCREASE: f64 = 1e-9;
    pub const HAUSDORFF_REDUCTION: f64 = 2.0;
    pub const BARRIER_NEGATIVE_FRACTION: f64 = 0.95;
    pub const BARRIER_BAND_FRACTION: f64 = 1.0;
    pub const CONSISTENCY_SHRINK: f64 = 1.5;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub quantity: String,
    pub value: f64,
}

pub fn tolerance_table() -> Vec<Tolerance> {
    use tol::*;
    [
        ("ridge identity defect / sup|I1 v|", RIDGE_DEFECT),
        ("ridge defect reduction per halving", RIDGE_HALVING),
        ("partial kernel sums vs closed form (relative)", KERNEL_CLOSED_FORM),
        ("layer residual", LAYER_RESIDUAL),
        ("tail exponent vs 2s (absolute)", TAIL_EXPONENT),
        ("tail coefficient (relative)", TAIL_COEFFICIENT),
        ("integral of phi_dot vs 1", PHI_DOT_MASS),
        ("corrector solvability", SOLVABILITY),
        ("corrector residual", CORRECTOR_RESIDUAL),
        ("corrector decay envelope factor", CORRECTOR_DECAY_FACTOR),
        ("curvature log-log slope vs -2s", CURVATURE_SLOPE),
        ("omega agreement between radii (relative)", OMEGA_AGREEMENT),
        ("radius law R^2", RADIUS_LAW_R2),
        ("extinction time (relative)", EXTINCTION_TIME),
        ("maximum principle slack", MAX_PRINCIPLE_SLACK),
        ("energy increase per step (relative)", ENERGY_INCREASE),
        ("Hausdorff reduction over the ladder", HAUSDORFF_REDUCTION),
        ("barrier J < 0 fraction over the grid", BARRIER_NEGATIVE_FRACTION),
        ("barrier J < 0 fraction over the band", BARRIER_BAND_FRACTION),
        ("consistency shrink factor per halving", CONSISTENCY_SHRINK),
    ]
    .into_iter()
    .map(|(q, v)| Tolerance { quantity: q.into(), value: v })
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Constants,
    Layer,
    Corrector,
    Fmcf,
    Allencahn,
    Compare,
    BarrierCheck,
}

impl Kind {
    fn uses_epsilon(self) -> bool {
        matches!(self, Kind::Allencahn | Kind::Compare | Kind::BarrierCheck)
    }

    fn planar(self) -> bool {
        !matches!(self, Kind::Constants | Kind::Layer | Kind::Corrector)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedKind {
    Circle,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub kind: Kind,
    /// Reserved; no computation draws random numbers.
    pub rng_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrderSection {
    pub s: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub points: usize,
    #[serde(rename = "box")]
    pub box_len: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub epsilons: Vec<f64>,
    pub delta_exponent: f64,
    pub sigma: f64,
    pub r0: f64,
    pub seed: SeedKind,
    pub rho: f64,
    /// Kernel truncation radius for the barrier auxiliaries; defaults to a quarter box.
    pub r_kernel: Option<f64>,
    /// Checkpoints as fractions of the sharp extinction time.
    pub checkpoints: Vec<f64>,
    /// The circle benchmark stops once `r ≤ stop_fraction · r0`.
    pub stop_fraction: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub min_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub order: OrderSection,
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub output: OutputSection,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { kind: Kind::Constants, rng_seed: 0 }
    }
}

impl Default for OrderSection {
    fn default() -> Self {
        Self { s: 0.25, n: 2 }
    }
}

impl Default for GridSection {
    fn default() -> Self {
        Self { points: 256, box_len: 1.0 }
    }
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.08, 0.04, 0.02],
            delta_exponent: DELTA_EXPONENT,
            sigma: 0.015,
            r0: 0.35,
            seed: SeedKind::Circle,
            rho: 0.0375,
            r_kernel: None,
            checkpoints: vec![0.15, 0.3],
            stop_fraction: 0.5,
            inner_radius: 0.15,
            outer_radius: 0.45,
            min_steps: 20,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Parse(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::Parse(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Defaults, overridden by the file text, overridden by `key=value` assignments.
    pub fn resolve(file: Option<&str>, sets: &[String]) -> Result<Self> {
        let mut table: toml::Table = match file {
            Some(text) => text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?,
            None => toml::Table::new(),
        };
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{s}`")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let text = toml::to_string(&table).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn order(&self) -> Result<FracOrder> {
        FracOrder::new(self.order.s, self.order.n)
    }

    pub fn spacing(&self) -> f64 {
        self.grid.box_len / self.grid.points as f64
    }

    pub fn r_kernel(&self) -> f64 {
        self.physics.r_kernel.unwrap_or(0.25 * self.grid.box_len)
    }

    /// Every violated cross-field constraint, checked before any computation.
    pub fn validate(&self) -> Result<()> {
        let kind = self.run.kind;
        let p = &self.physics;
        let mut v = Vec::new();
        if let Err(e) = self.order() {
            v.push(format!("FracOrder: {e}"));
        }
        if self.grid.points < 16 {
            v.push(format!("grid.points = {} must be at least 16", self.grid.points));
        }
        if !(self.grid.box_len > 0.0) {
            v.push(format!("grid.box = {} must be positive", self.grid.box_len));
        }
        if kind.planar() {
            if self.order.n != 2 {
                v.push(format!("order.n = {} must be 2 for planar experiments", self.order.n));
            }
            if self.grid.box_len != 1.0 {
                v.push(format!("grid.box = {} must be 1 for planar experiments", self.grid.box_len));
            }
            let margin = 0.5 * self.grid.box_len - p.r0;
            if !(p.r0 > 0.0 && margin > 0.0) {
                v.push(format!("physics.r0 = {} must lie in (0, box/2)", p.r0));
            }
            if kind == Kind::Fmcf && p.r0 < 15.0 * self.spacing() {
                v.push(format!("physics.r0 = {} spans fewer than 15 cells", p.r0));
            }
            if kind == Kind::Fmcf && 4.0 * DEFAULT_RHO_CELLS * self.spacing() > margin {
                v.push(format!("the {DEFAULT_RHO_CELLS}-cell band leaves less than 4ρ of box margin {margin}"));
            }
            if kind != Kind::Fmcf && !(p.rho > 0.0 && p.rho < 0.25 * p.r0 && 4.0 * p.rho <= margin) {
                v.push(format!("physics.rho = {} must lie in (0, r0/4) with 4ρ within the box margin {margin}", p.rho));
            }
        }
        if kind == Kind::Fmcf && !(p.stop_fraction > 0.0 && p.stop_fraction < 1.0) {
            v.push(format!("physics.stop_fraction = {} must lie in (0, 1)", p.stop_fraction));
        }
        if kind.uses_epsilon() {
            let h = self.spacing();
            if p.epsilons.is_empty() {
                v.push("physics.epsilons must not be empty".into());
            }
            for &e in &p.epsilons {
                if !(e > 0.0 && e < 1.0) {
                    v.push(format!("ε = {e} must lie in (0, 1)"));
                } else if e < 4.0 * h {
                    v.push(format!("ε = {e} is below 4 cells ({})", 4.0 * h));
                }
            }
            if p.epsilons.windows(2).any(|w| w[1] >= w[0]) {
                v.push("physics.epsilons must decrease strictly".into());
            }
            if p.delta_exponent != DELTA_EXPONENT {
                v.push(format!("physics.delta_exponent = {} must equal {DELTA_EXPONENT} (δ = ε^{DELTA_EXPONENT})", p.delta_exponent));
            }
        }
        if matches!(kind, Kind::Allencahn | Kind::Compare) {
            if p.checkpoints.is_empty()
                || p.checkpoints.iter().any(|&c| !(c > 0.0 && c < 1.0))
                || p.checkpoints.windows(2).any(|w| w[1] <= w[0])
            {
                v.push(format!("physics.checkpoints = {:?} must increase strictly within (0, 1)", p.checkpoints));
            }
            if p.min_steps == 0 {
                v.push("physics.min_steps must be positive".into());
            }
        }
        if kind == Kind::Compare && !(p.inner_radius > 0.0 && p.inner_radius < p.outer_radius) {
            v.push(format!("physics.inner_radius = {} must lie in (0, outer_radius = {})", p.inner_radius, p.outer_radius));
        }
        if kind == Kind::BarrierCheck {
            let r = self.r_kernel();
            if !(r > 0.0 && r <= 0.25 * self.grid.box_len) {
                v.push(format!("r_max = {r} must lie in (0, box/4]"));
            }
            if !(p.sigma > 0.0 && p.sigma < 1.0) {
                v.push(format!("physics.sigma = {} must lie in (0, 1)", p.sigma));
            }
            let sigma_tilde = p.sigma / DoubleWell::standard().well_curvature;
            if !(sigma_tilde < 0.5 * p.rho) {
                v.push(format!("σ̃ = {sigma_tilde} must be below ρ/2 = {}", 0.5 * p.rho));
            }
            if p.seed != SeedKind::Circle {
                v.push("barrier-check needs the circle seed".into());
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Seventeen significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn csv_text(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_bytes(path, csv_text(header, rows).as_bytes())
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))?;
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().map_err(|e| Error::Parse(format!("{c}: {e}")))).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((header.split(',').map(String::from).collect(), rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Sidecar of a `*.f64` field dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub shape: Vec<usize>,
    #[serde(rename = "box")]
    pub box_size: Vec<f64>,
    pub origin: Vec<f64>,
    pub t: f64,
    pub epsilon: Option<f64>,
    pub s: f64,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Little-endian row-major samples at `path` and the sidecar at `path.json`.
pub fn write_field(path: &Path, field: &ScalarField, t: f64, epsilon: Option<f64>, s: f64) -> Result<PathBuf> {
    let bytes: Vec<u8> = field.data.iter().flat_map(|x| x.to_le_bytes()).collect();
    write_bytes(path, &bytes)?;
    let meta = FieldMeta { shape: field.shape.clone(), box_size: field.box_size(), origin: field.origin.clone(), t, epsilon, s };
    let side = sidecar_path(path);
    write_json(&side, &meta)?;
    Ok(side)
}

pub fn read_field(path: &Path) -> Result<(ScalarField, FieldMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: FieldMeta = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let len: usize = meta.shape.iter().product();
    if bytes.len() != 8 * len || meta.shape.is_empty() {
        return Err(Error::Shape(format!("{} holds {} bytes for shape {:?}", path.display(), bytes.len(), meta.shape)));
    }
    let mut field = ScalarField::zeros(&meta.shape, meta.box_size[0] / meta.shape[0] as f64, &meta.origin);
    field.data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((field, meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub tolerances: Vec<Tolerance>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let p = self.path(name);
        write_csv(&p, header, rows)?;
        self.files.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value)?;
        self.files.push(p);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        write_bytes(&p, text.as_bytes())?;
        self.files.push(p);
        Ok(())
    }

    fn field(&mut self, name: &str, field: &ScalarField, t: f64, epsilon: Option<f64>, s: f64) -> Result<()> {
        let p = self.path(name);
        let side = write_field(&p, field, t, epsilon, s)?;
        self.files.push(p);
        self.files.push(side);
        Ok(())
    }

    fn inventory(&self) -> Result<Vec<FileEntry>> {
        self.files
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                let rel = p.strip_prefix(&self.dir).unwrap_or(p);
                Ok(FileEntry { path: rel.display().to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
            })
            .collect()
    }
}

struct Layer {
    well: DoubleWell,
    order: FracOrder,
    constants: FracConstants,
    layer: LayerSolution,
    c0: f64,
}

fn layer_bundle(order: FracOrder) -> Result<Layer> {
    let well = DoubleWell::standard();
    let constants = FracConstants::new(order).map_err(|e| e.in_stage("fracops"))?;
    let layer = solve_layer(&well, order, constants.c_ns, LayerGrid::default()).map_err(|e| e.in_stage("profiles"))?;
    let c0 = compute_c0(&layer).map_err(|e| e.in_stage("profiles"))?;
    Ok(Layer { well, order, constants, layer, c0 })
}

fn corrector(b: &Layer) -> Result<CorrectorProfile> {
    solve_corrector(&b.layer, &b.well, b.c0).map_err(|e| e.in_stage("profiles"))
}

#[derive(Serialize)]
struct ConstantsReport {
    s: f64,
    n: usize,
    c_ns: f64,
    spectral_symbol: f64,
    spectral_symbol_closed_form: f64,
    spectral_symbol_residual: f64,
    c0: f64,
    solvability_defect: f64,
    omega: f64,
    phi_dot_integral: f64,
}

#[derive(Serialize)]
struct ProfileReport {
    s: f64,
    half_width: f64,
    points: usize,
    c_ns: f64,
    c0: f64,
    residual: f64,
    tail_exponent: f64,
    tail_coefficient_range: (f64, f64),
    tail_coefficient_predicted: f64,
    phi_dot_integral: f64,
    corrector_residual: Option<f64>,
    solvability_defect: Option<f64>,
}

fn profile_report(b: &Layer, corr: Option<&CorrectorProfile>) -> ProfileReport {
    let fit = b.layer.tail_fit(&b.well);
    ProfileReport {
        s: b.order.s(),
        half_width: b.layer.grid.half_width,
        points: b.layer.grid.points,
        c_ns: b.layer.c_ns,
        c0: b.c0,
        residual: b.layer.residual,
        tail_exponent: fit.exponent,
        tail_coefficient_range: fit.coefficient_range,
        tail_coefficient_predicted: fit.predicted_coefficient,
        phi_dot_integral: b.layer.phi_dot_integral(),
        corrector_residual: corr.map(|c| c.residual_norm),
        solvability_defect: corr.map(|_| solvability_defect(&b.layer, &b.well, b.c0)),
    }
}

fn front_rows(front: &FrontCurve) -> Vec<Vec<f64>> {
    front
        .polylines
        .iter()
        .enumerate()
        .flat_map(|(k, p)| p.points.iter().map(move |x| vec![k as f64, x[0], x[1]]))
        .collect()
}

fn run_kind(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let order = cfg.order()?;
    let s = order.s();
    let p = &cfg.physics;
    let n = cfg.grid.points;
    let center = [0.5, 0.5];
    match cfg.run.kind {
        Kind::Constants => {
            let b = layer_bundle(order)?;
            let closed = spectral_symbol_closed_form(order);
            let report = ConstantsReport {
                s,
                n: order.n(),
                c_ns: compute_c_ns(order)?,
                spectral_symbol: b.constants.spectral_symbol_coeff,
                spectral_symbol_closed_form: closed,
                spectral_symbol_residual: (b.constants.spectral_symbol_coeff / closed - 1.0).abs(),
                c0: b.c0,
                solvability_defect: solvability_defect(&b.layer, &b.well, b.c0),
                omega: omega_closed_form(s),
                phi_dot_integral: b.layer.phi_dot_integral(),
            };
            out.json("constants.json", &report)
        }
        Kind::Layer | Kind::Corrector => {
            let b = layer_bundle(order)?;
            let corr = match cfg.run.kind {
                Kind::Corrector => Some(corrector(&b)?),
                _ => None,
            };
            let rows: Vec<Vec<f64>> = (0..b.layer.phi.xi.len())
                .map(|k| {
                    let mut r = vec![b.layer.phi.xi[k], b.layer.phi.values[k], b.layer.phi_dot.values[k]];
                    if let Some(c) = &corr {
                        r.push(c.psi_tilde.eval(b.layer.phi.xi[k]));
                    }
                    r
                })
                .collect();
            let header: &[&str] = if corr.is_some() { &["xi", "phi", "phi_dot", "psi_tilde"] } else { &["xi", "phi", "phi_dot"] };
            out.csv("profile.csv", header, &rows)?;
            out.json("profile.json", &profile_report(&b, corr.as_ref()))
        }
        Kind::Fmcf => {
            let b = layer_bundle(order)?;
            let params = FmcParams::new(order, b.c0, omega_closed_form(s), None, 0.3)?;
            let bench = run_circle_benchmark(p.r0, params, n, p.stop_fraction).map_err(|e| e.in_stage("fmcf"))?;
            let rows: Vec<Vec<f64>> = bench.rows.iter().map(|&(t, r, e)| vec![t, r, e]).collect();
            out.csv("radius.csv", &["t", "r_measured", "r_exact"], &rows)?;
            out.json("fmcf.json", &serde_json::json!({
                "r0": bench.r0,
                "n": bench.n,
                "r_squared": bench.r_squared,
                "extinction_fit": bench.extinction_fit,
                "extinction_exact": bench.extinction_exact,
                "extinction_error": bench.extinction_error(),
            }))
        }
        Kind::Allencahn => {
            let b = layer_bundle(order)?;
            let eps = p.epsilons[0];
            let d0 = match p.seed {
                SeedKind::Circle => signed_distance_circle(n, 1.0, center, p.r0, 0.0, p.rho)?,
                SeedKind::Empty => SignedDistanceField { field: ScalarField::square(n, 1.0).map(|_| -2.0 * p.rho), rho: p.rho },
            };
            let mut state = well_prepared_init(&d0, &b.layer.phi, eps, &b.well, order).map_err(|e| e.in_stage("allen_cahn"))?;
            let solver = AcSolver::new(order, n, 1.0)?;
            let t_ext = FmcParams::new(order, b.c0, omega_closed_form(s), None, 0.3)?.extinction_time(p.r0);
            let t_end = p.checkpoints[p.checkpoints.len() - 1] * t_ext;
            let dt = default_dt(eps, s).min(t_end / p.min_steps as f64);
            out.field("u_initial.f64", &state.u, 0.0, Some(eps), s)?;
            let mut energy = Vec::new();
            let record = |st: &crate::allen_cahn::AcState, energy: &mut Vec<Vec<f64>>| -> Result<()> {
                let e = solver.energy(st)?;
                let (lo, hi) = st.u.min_max();
                energy.push(vec![e.t, e.gagliardo, e.potential, e.total, lo, hi]);
                Ok(())
            };
            record(&state, &mut energy)?;
            for &c in &p.checkpoints {
                let target = c * t_ext;
                while state.t < target {
                    state = solver.step(&state, dt.min(target - state.t)).map_err(|e| e.in_stage("allen_cahn"))?;
                    record(&state, &mut energy)?;
                }
                let tag = format!("{c}");
                out.field(&format!("u_t{tag}.f64"), &state.u, state.t, Some(eps), s)?;
                out.csv(&format!("front_t{tag}.csv"), &["polyline", "x", "y"], &front_rows(&diffuse_front(&state)))?;
            }
            out.csv("energy.csv", &["t", "gagliardo", "potential", "total", "u_min", "u_max"], &energy)
        }
        Kind::Compare => {
            let b = layer_bundle(order)?;
            let omega = omega_closed_form(s);
            let t_ext = FmcParams::new(order, b.c0, omega, None, 0.3)?.extinction_time(p.r0);
            let ccfg = ConvergenceConfig {
                order,
                n,
                c0: b.c0,
                omega,
                times: p.checkpoints.iter().map(|c| c * t_ext).collect(),
                inner_radius: p.inner_radius,
                outer_radius: p.outer_radius,
                min_steps: p.min_steps,
            };
            let seed = match p.seed {
                SeedKind::Circle => Seed::Circle { center, radius: p.r0 },
                SeedKind::Empty => Seed::Empty,
            };
            let rows = convergence_experiment(&seed, &p.epsilons, &ccfg, &b.layer.phi, &b.well).map_err(|e| e.in_stage("allen_cahn"))?;
            let table: Vec<Vec<f64>> = rows
                .iter()
                .map(|r| vec![r.epsilon, r.t, r.hausdorff.unwrap_or(f64::NAN), r.sup_inside, r.sup_outside, r.steps as f64])
                .collect();
            out.csv("compare.csv", &["epsilon", "t", "hausdorff", "sup_inside", "sup_outside", "steps"], &table)?;
            out.json("compare.json", &rows)
        }
        Kind::BarrierCheck => {
            let b = layer_bundle(order)?;
            let corr = corrector(&b)?;
            let prof = BarrierProfiles { phi: &b.layer.phi, phi_dot: &b.layer.phi_dot, psi_tilde: &corr.psi_tilde, c0: b.c0 };
            let motion = CircleMotion::forced(center, p.r0, p.rho, b.c0, omega_closed_form(s), p.sigma, s)?;
            let t = 0.5 * motion.horizon();
            let mut summary = Vec::new();
            for &eps in &p.epsilons {
                let bc = BarrierConfig::new(order, eps, p.sigma, &b.well, cfg.r_kernel(), p.rho)?;
                let rep = subsolution_residual(&motion, t, n, &prof, &b.well, &bc, &b.constants).map_err(|e| e.in_stage("barrier"))?;
                let d = motion.distance(t, n)?;
                let cons = consistency_check(&d, &b.layer.phi, &b.well, &bc, &b.constants).map_err(|e| e.in_stage("barrier"))?;
                out.field(&format!("j_eps{eps}.f64"), &rep.j, t, Some(eps), s)?;
                out.json(&format!("residual_eps{eps}.json"), &serde_json::json!({ "residual": &rep, "consistency": &cons }))?;
                summary.push(vec![
                    eps,
                    bc.delta,
                    rep.fraction_negative,
                    rep.fraction_negative_band,
                    rep.max_j_band,
                    rep.audit,
                    cons.curvature_gap,
                    cons.operator_defect,
                ]);
            }
            out.csv(
                "barrier.csv",
                &["epsilon", "delta", "fraction_negative", "fraction_negative_band", "max_j_band", "audit", "curvature_gap", "operator_defect"],
                &summary,
            )
        }
    }
}

/// Validate, dispatch, write every artifact under `output.dir` and return the manifest (also
/// written to `manifest.json`).
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let mut out = Outputs { dir: cfg.output.dir.clone(), files: Vec::new() };
    out.text("config.toml", &cfg.to_toml()?)?;
    run_kind(cfg, &mut out)?;
    let manifest = RunManifest {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.inventory()?,
        tolerances: tolerance_table(),
    };
    write_json(&out.path("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub const GOLDEN_FILE: &str = "constants.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldenStatus {
    Pass,
    Fail,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoldenEntry {
    pub quantity: String,
    pub golden: Option<f64>,
    pub computed: f64,
    /// Relative tolerance.
    pub tolerance: f64,
    pub status: GoldenStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoldenReport {
    pub entries: Vec<GoldenEntry>,
}

impl GoldenReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.status == GoldenStatus::Pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| e.status == GoldenStatus::Fail).map(|e| e.quantity.as_str()).collect()
    }
}

/// Cheap quantities with their relative tolerances, for `s = 1/4` in the plane.
pub fn golden_quantities() -> Result<Vec<(String, f64, f64)>> {
    let order = FracOrder::new(0.25, 2)?;
    let b = layer_bundle(order)?;
    let fit = b.layer.tail_fit(&b.well);
    Ok(vec![
        ("c_ns".into(), b.constants.c_ns, 1e-10),
        ("spectral_symbol".into(), b.constants.spectral_symbol_coeff, 1e-8),
        ("omega".into(), omega_closed_form(0.25), 1e-12),
        ("c0".into(), b.c0, 1e-6),
        ("tail_exponent".into(), fit.exponent, 1e-6),
        ("tail_coefficient_high".into(), fit.coefficient_range.1, 1e-6),
        ("phi_dot_integral".into(), b.layer.phi_dot_integral(), 1e-9),
    ])
}

pub fn write_goldens(dir: &Path) -> Result<PathBuf> {
    let map: BTreeMap<String, f64> = golden_quantities()?.into_iter().map(|(k, v, _)| (k, v)).collect();
    let path = dir.join(GOLDEN_FILE);
    write_json(&path, &map)?;
    Ok(path)
}

/// Recompute the golden quantities and diff them against `dir/constants.json`; a missing file or
/// key is reported as absent.
pub fn verify_goldens(dir: &Path) -> Result<GoldenReport> {
    let path = dir.join(GOLDEN_FILE);
    let stored: BTreeMap<String, f64> = match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let entries = golden_quantities()?
        .into_iter()
        .map(|(quantity, computed, tolerance)| {
            let golden = stored.get(&quantity).copied();
            let status = match golden {
                None => GoldenStatus::Absent,
                Some(g) if (computed - g).abs() <= tolerance * g.abs() => GoldenStatus::Pass,
                Some(_) => GoldenStatus::Fail,
            };
            GoldenEntry { quantity, golden, computed, tolerance, status }
        })
        .collect();
    Ok(GoldenReport { entries })
}
