//! Run configuration, subcommand pipelines and on-disk artifacts.
//!
//! A run is described by one TOML file. Each subcommand reads the sections it needs,
//! writes its reports into the output directory and finishes with `manifest.json`,
//! which lists every written file with its SHA-256 digest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dirac_algebra::MassCharge;
use crate::dynamics::{compare_dynamic_stationary, geometric_ladder, s_operator, wave_operator_estimate, CompareConfig, PropagationConfig, WavePacketSpec};
use crate::error::{Result, RlsError};
use crate::green_kernel::{b_kernel_fft_oracle, Branch, LatticeKernel, OracleRegularization, QuadratureSpec, SpectralParam};
use crate::grid::GridSpec;
use crate::linalg::{c, Vec3};
use crate::potential::{PotentialSpec, PotentialTable, Profile};
use crate::rls_solver::{random_control, recover_phi, sigma_min_scan, smooth_testers, solve_modified, weak_residual, write_field_binary, write_field_csv, ScatterChannel, SolverConfig};
use crate::scattering::{amplitude, far_field_check, AmplitudeForm, DirectionSet};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    KernelCheck,
    Solve,
    Amplitude,
    ScanExceptional,
    Dynamics,
    Compare,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::KernelCheck => "kernel-check",
            Subcommand::Solve => "solve",
            Subcommand::Amplitude => "amplitude",
            Subcommand::ScanExceptional => "scan-exceptional",
            Subcommand::Dynamics => "dynamics",
            Subcommand::Compare => "compare",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleBlock {
    pub mass: Option<f64>,
    #[serde(default = "unit_charge")]
    pub charge: f64,
}

fn unit_charge() -> f64 {
    1.0
}

/// Profiles of nu and A; `table` names a CSV with columns r1,r2,r3,nu,A1,A2,A3,
/// resolved relative to the config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    #[serde(default)]
    pub scalar: Profile,
    #[serde(default)]
    pub vector: [Profile; 3],
    pub table: Option<PathBuf>,
}

/// Solve lattice; centered on the origin when `origin` is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub h: f64,
    pub origin: Option<[f64; 3]>,
}

impl GridBlock {
    pub fn spec(&self) -> Result<GridSpec> {
        match self.origin {
            Some(o) => GridSpec::new(self.n, self.h, o),
            None => GridSpec::centered(self.n, self.h),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    pub k: [f64; 3],
    pub n: usize,
    #[serde(default = "plus")]
    pub branch: Branch,
}

fn plus() -> Branch {
    Branch::Plus
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum DirectionsBlock {
    Dodecahedron,
    LatLong { n_theta: usize, n_phi: usize },
}

impl DirectionsBlock {
    pub fn build(&self) -> Result<DirectionSet> {
        match *self {
            DirectionsBlock::Dodecahedron => Ok(DirectionSet::dodecahedron()),
            DirectionsBlock::LatLong { n_theta, n_phi } => DirectionSet::lat_long(n_theta, n_phi),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeBlock {
    #[serde(default = "dodecahedron")]
    pub directions: DirectionsBlock,
    #[serde(default = "far_field")]
    pub form: AmplitudeForm,
    /// Radii of the far-field check; skipped when empty.
    #[serde(default)]
    pub far_field_radii: Vec<f64>,
}

impl Default for AmplitudeBlock {
    fn default() -> Self {
        Self { directions: dodecahedron(), form: far_field(), far_field_radii: Vec::new() }
    }
}

fn dodecahedron() -> DirectionsBlock {
    DirectionsBlock::Dodecahedron
}

fn far_field() -> AmplitudeForm {
    AmplitudeForm::FarField
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub count: usize,
    #[serde(default = "plus")]
    pub branch: Branch,
}

impl ScanBlock {
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        if self.count == 0 || !(self.lambda_max >= self.lambda_min) {
            return Err(RlsError::Config("scan needs count >= 1 and lambda_max >= lambda_min".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.lambda_min]);
        }
        let step = (self.lambda_max - self.lambda_min) / (self.count - 1) as f64;
        Ok((0..self.count).map(|j| self.lambda_min + j as f64 * step).collect())
    }
}

/// Weak-residual certificate of the recovered solution on the solve grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateBlock {
    pub testers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsBlock {
    pub packet: WavePacketSpec,
    #[serde(default)]
    pub propagation: PropagationConfig,
    /// Explicit ladder; when empty the geometric ladder from `t0` and `ladder_len` is used.
    #[serde(default)]
    pub ladder: Vec<f64>,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_ladder_len")]
    pub ladder_len: usize,
    #[serde(default = "default_cauchy_tol")]
    pub cauchy_tol: f64,
    /// Time of the S-operator estimate; skipped when absent.
    pub s_time: Option<f64>,
}

fn default_t0() -> f64 {
    5.0
}

fn default_ladder_len() -> usize {
    4
}

fn default_cauchy_tol() -> f64 {
    1e-3
}

impl DynamicsBlock {
    pub fn ladder(&self) -> Vec<f64> {
        if self.ladder.is_empty() {
            geometric_ladder(self.t0, self.ladder_len)
        } else {
            self.ladder.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckBlock {
    pub n: usize,
    pub h: f64,
    pub lambda: f64,
    pub branch: Branch,
    pub regularization: OracleRegularization,
    /// Points closer to the origin than this are skipped.
    pub min_radius: f64,
    /// Points closer to the grid boundary than this are skipped.
    pub boundary_margin: f64,
}

impl Default for KernelCheckBlock {
    fn default() -> Self {
        Self { n: 48, h: 0.5, lambda: 1.5, branch: Branch::Plus, regularization: OracleRegularization::default(), min_radius: 0.75, boundary_margin: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Also write solution fields (binary dump and CSV).
    #[serde(default)]
    pub fields: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), fields: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub particle: ParticleBlock,
    pub potential: Option<PotentialBlock>,
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    pub channel: Option<ChannelBlock>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub certificate: Option<CertificateBlock>,
    pub amplitude: Option<AmplitudeBlock>,
    pub scan: Option<ScanBlock>,
    pub dynamics: Option<DynamicsBlock>,
    pub compare: Option<CompareConfig>,
    pub kernel_check: Option<KernelCheckBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub seed: u64,
    /// Directory of the config file, used to resolve relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn missing(key: &str) -> RlsError {
    RlsError::Config(format!("missing key `{key}`"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RlsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that hold for every subcommand.
    pub fn validate(&self) -> Result<()> {
        self.mass_charge()?;
        self.quadrature.validate()?;
        self.solver.validate()?;
        if let Some(g) = &self.grid {
            g.spec()?;
        }
        Ok(())
    }

    pub fn mass_charge(&self) -> Result<MassCharge> {
        let m = self.particle.mass.ok_or_else(|| missing("particle.mass"))?;
        MassCharge::new(m, self.particle.charge)
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let b = self.potential.as_ref().ok_or_else(|| missing("potential"))?;
        let mut spec = PotentialSpec { scalar: b.scalar, vector: b.vector, charge: self.particle.charge, table: None };
        if let Some(path) = &b.table {
            spec = spec.with_table(PotentialTable::from_csv_path(&self.base_dir.join(path))?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        self.grid.as_ref().ok_or_else(|| missing("grid"))?.spec()
    }

    pub fn channel(&self, mc: &MassCharge) -> Result<ScatterChannel> {
        let b = self.channel.as_ref().ok_or_else(|| missing("channel"))?;
        ScatterChannel::new(Vec3::from(b.k), b.n, b.branch, mc)
    }

    /// Verifies that every section used by `cmd` is present.
    pub fn require(&self, cmd: Subcommand) -> Result<()> {
        let need = |ok: bool, key: &str| if ok { Ok(()) } else { Err(missing(key)) };
        match cmd {
            Subcommand::KernelCheck => Ok(()),
            Subcommand::Solve | Subcommand::Amplitude => {
                need(self.potential.is_some(), "potential")?;
                need(self.grid.is_some(), "grid")?;
                need(self.channel.is_some(), "channel")
            }
            Subcommand::ScanExceptional => {
                need(self.potential.is_some(), "potential")?;
                need(self.grid.is_some(), "grid")?;
                need(self.scan.is_some(), "scan")
            }
            Subcommand::Dynamics => {
                need(self.potential.is_some(), "potential")?;
                need(self.dynamics.is_some(), "dynamics")
            }
            Subcommand::Compare => {
                need(self.potential.is_some(), "potential")?;
                need(self.channel.is_some(), "channel")?;
                need(self.dynamics.is_some(), "dynamics")
            }
        }
    }

    /// SHA-256 of the canonical JSON form, so formatting and comments do not change it.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self).map_err(|e| RlsError::Config(e.to_string()))?;
        Ok(hex(&Sha256::digest(&json)))
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| RlsError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| RlsError::Config(format!("{}: {e}", path.display())))?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

/// 2 for configuration and input errors, 3 for numerical failures.
pub fn exit_code(e: &RlsError) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(2 * bytes.len());
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Conventions fixed by this implementation, recorded with every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionLedger {
    pub fourier_forward: String,
    pub fourier_normalization: String,
    pub convolution_constant: String,
    pub operator_norm: String,
    pub amplitude_form: String,
    pub free_projector: String,
}

impl Default for ConventionLedger {
    fn default() -> Self {
        Self {
            fourier_forward: "exp(-i q.r)".into(),
            fourier_normalization: "(2pi)^(-3/2) in both directions".into(),
            convolution_constant: "B = Q + (2pi)^(-3/2) lambda^2 (Q*J) + lambda J".into(),
            operator_norm: "spectral (largest singular value)".into(),
            amplitude_form: "far-field: -(1/4pi)(lambda + H0(m1 w)) I(w); literal: -(lambda/4pi) I(w)".into(),
            free_projector: "P0 = I".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub subcommand: Subcommand,
    pub config_hash: String,
    pub seed: u64,
    pub conventions: ConventionLedger,
    pub started_unix_s: f64,
    pub wall_time_s: f64,
    /// Named stage timings in seconds.
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<OutputEntry>,
    pub status: String,
    pub error: Option<String>,
}

/// Every artifact goes through this writer so the manifest inventory is complete.
pub struct OutputSink {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
    timings: Vec<(String, f64)>,
}

impl OutputSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new(), timings: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), data)?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(OutputEntry { path: name.to_string(), bytes: data.len() as u64, sha256: hex(&Sha256::digest(data)) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut data = serde_json::to_vec_pretty(value).map_err(|e| RlsError::Config(e.to_string()))?;
        data.push(b'\n');
        self.bytes(name, &data)
    }

    pub fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut data = Vec::new();
        f(&mut data)?;
        self.bytes(name, &data)
    }

    pub fn time(&mut self, stage: &str, start: Instant) {
        self.timings.push((stage.to_string(), start.elapsed().as_secs_f64()));
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Deterministic JSON of a serializable report with the wall-clock fields removed.
fn strip_timing<T: Serialize>(value: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value).map_err(|e| RlsError::Config(e.to_string()))?;
    if let Some(o) = v.as_object_mut() {
        o.remove("wall_time_s");
    }
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelCheckReport {
    pub grid: GridSpec,
    pub lambda: f64,
    pub branch: Branch,
    pub points: usize,
    pub max_relative_deviation: f64,
    pub mean_relative_deviation: f64,
    pub valid_radius: f64,
}

/// Lattice samples of B against the FFT oracle on the same grid.
pub fn kernel_check(block: &KernelCheckBlock, quad: &QuadratureSpec, mc: &MassCharge) -> Result<KernelCheckReport> {
    let grid = GridSpec::centered(block.n, block.h)?;
    let oracle = b_kernel_fft_oracle(&grid, block.lambda, block.regularization, block.branch, mc)?;
    let sp = SpectralParam::real(block.lambda, block.branch, mc)?;
    let lattice = LatticeKernel::new(block.h, block.n / 2, sp, quad, mc)?;
    let (mut worst, mut sum, mut count) = (0.0f64, 0.0, 0usize);
    for idx in 0..grid.len() {
        let r = grid.point(idx);
        let rr = r.norm();
        if rr < block.min_radius || rr > oracle.valid_radius || grid.distance_to_boundary(&r) < block.boundary_margin {
            continue;
        }
        let Some(d) = grid.lattice_offset(&r) else { continue };
        let want = lattice.coeffs(d);
        let e = oracle.values[idx].add(&want.scale(c(-1.0))).max_abs() / want.max_abs();
        worst = worst.max(e);
        sum += e;
        count += 1;
    }
    if count == 0 {
        return Err(RlsError::Config("kernel check excludes every grid point; enlarge the grid".into()));
    }
    Ok(KernelCheckReport {
        grid,
        lambda: block.lambda,
        branch: block.branch,
        points: count,
        max_relative_deviation: worst,
        mean_relative_deviation: sum / count as f64,
        valid_radius: oracle.valid_radius,
    })
}

#[derive(Clone, Debug, Serialize)]
struct CertificateReport {
    testers: usize,
    seed: u64,
    residual: f64,
    control_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
struct ScanRow {
    lambda: f64,
    sigma_min: f64,
}

/// Short human-readable summary of a finished run.
pub struct RunSummary {
    pub manifest: RunManifest,
    pub lines: Vec<String>,
}

/// Runs `cmd`, writes its artifacts into `cfg.output.dir` and finishes with the manifest.
/// The manifest is written on failure too, with the error recorded.
pub fn run_subcommand(cmd: Subcommand, cfg: &RunConfig) -> Result<RunSummary> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    cfg.validate()?;
    cfg.require(cmd)?;
    let dir = cfg.base_dir.join(&cfg.output.dir);
    let mut sink = OutputSink::new(&dir)?;
    let mut lines = Vec::new();
    let outcome = dispatch(cmd, cfg, &mut sink, &mut lines);
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.to_string(),
        subcommand: cmd,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        conventions: ConventionLedger::default(),
        started_unix_s: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
        timings: sink.timings.clone(),
        outputs: sink.entries.clone(),
        status: if outcome.is_ok() { "ok".into() } else { "error".into() },
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    let data = serde_json::to_vec_pretty(&manifest).map_err(|e| RlsError::Config(e.to_string()))?;
    write_atomic(&dir.join("manifest.json"), &data)?;
    outcome?;
    Ok(RunSummary { manifest, lines })
}

fn dispatch(cmd: Subcommand, cfg: &RunConfig, sink: &mut OutputSink, lines: &mut Vec<String>) -> Result<()> {
    let mc = cfg.mass_charge()?;
    match cmd {
        Subcommand::KernelCheck => {
            let t = Instant::now();
            let block = cfg.kernel_check.unwrap_or_default();
            let report = kernel_check(&block, &cfg.quadrature, &mc)?;
            sink.time("kernel_check", t);
            lines.push(format!("kernel vs FFT oracle: max relative deviation {:.3e} over {} points", report.max_relative_deviation, report.points));
            sink.json("kernel_check.json", &report)
        }
        Subcommand::Solve | Subcommand::Amplitude => {
            let spec = cfg.potential_spec()?;
            let grid = cfg.grid_spec()?;
            let ch = cfg.channel(&mc)?;
            let t = Instant::now();
            let sol = solve_modified(&ch, &grid, &spec, &mc, &cfg.solver)?;
            sink.time("solve", t);
            lines.push(format!("solve: residual {:.3e}, sigma_min {:?}", sol.report.residual, sol.report.sigma_min));
            sink.json("solve_report.json", &strip_timing(&sol.report)?)?;
            if cfg.output.fields {
                sink.with_writer("psi.bin", |w| write_field_binary(&sol.psi, w))?;
                sink.with_writer("psi.csv", |w| write_field_csv(&sol.psi, w))?;
            }
            let t = Instant::now();
            let phi = recover_phi(&sol.psi, &ch, &spec, &mc, &cfg.quadrature)?;
            sink.time("recover", t);
            if cfg.output.fields {
                sink.with_writer("phi.bin", |w| write_field_binary(&phi, w))?;
                sink.with_writer("phi.csv", |w| write_field_csv(&phi, w))?;
            }
            if let Some(cert) = cfg.certificate {
                let t = Instant::now();
                let testers = smooth_testers(&grid, cert.testers, cfg.seed);
                let residual = weak_residual(&phi, ch.lambda, &spec, &mc, &testers)?;
                let control_residual = weak_residual(&random_control(&grid, cfg.seed), ch.lambda, &spec, &mc, &testers)?;
                sink.time("certificate", t);
                lines.push(format!("weak residual {residual:.3e} (control {control_residual:.3e})"));
                sink.json("certificate.json", &CertificateReport { testers: cert.testers, seed: cfg.seed, residual, control_residual })?;
            }
            if cmd == Subcommand::Amplitude {
                let block = cfg.amplitude.clone().unwrap_or_default();
                let dirs = block.directions.build()?;
                let t = Instant::now();
                let mut res = amplitude(&phi, &ch, &spec, &mc, &dirs, block.form)?;
                res.grid = Some(grid);
                sink.time("amplitude", t);
                let peak = res.directions.iter().map(|d| d.strength).fold(0.0, f64::max);
                lines.push(format!("amplitude: {} directions, max |f|^2 {peak:.3e}", res.directions.len()));
                sink.bytes("amplitude.json", res.to_json()?.as_bytes())?;
                sink.with_writer("amplitude.csv", |w| res.write_csv(w))?;
                if !block.far_field_radii.is_empty() {
                    let ff_form = if block.form == AmplitudeForm::FarField { res.clone() } else { amplitude(&phi, &ch, &spec, &mc, &dirs, AmplitudeForm::FarField)? };
                    let t = Instant::now();
                    let rep = far_field_check(&sol.psi, &ch, &spec, &mc, &cfg.quadrature, &ff_form, &block.far_field_radii)?;
                    sink.time("far_field", t);
                    lines.push(format!("far field: epsilon {:?}, monotone {}", rep.epsilon, rep.monotone));
                    sink.json("far_field.json", &rep)?;
                }
            }
            Ok(())
        }
        Subcommand::ScanExceptional => {
            let spec = cfg.potential_spec()?;
            let grid = cfg.grid_spec()?;
            let scan = cfg.scan.as_ref().ok_or_else(|| missing("scan"))?;
            let t = Instant::now();
            let rows: Vec<ScanRow> = sigma_min_scan(&scan.lambdas()?, &grid, &spec, &mc, scan.branch, &cfg.solver)?.into_iter().map(|(lambda, sigma_min)| ScanRow { lambda, sigma_min }).collect();
            sink.time("scan", t);
            let low = rows.iter().map(|r| r.sigma_min).fold(f64::INFINITY, f64::min);
            lines.push(format!("scan: {} energies, min sigma_min {low:.6}", rows.len()));
            sink.with_writer("scan.csv", |w| {
                writeln!(w, "lambda,sigma_min")?;
                for r in &rows {
                    writeln!(w, "{:.17e},{:.17e}", r.lambda, r.sigma_min)?;
                }
                Ok(())
            })?;
            sink.json("scan.json", &rows)
        }
        Subcommand::Dynamics => {
            let spec = cfg.potential_spec()?;
            let dy = cfg.dynamics.as_ref().ok_or_else(|| missing("dynamics"))?;
            let t = Instant::now();
            let est = wave_operator_estimate(&dy.packet, &dy.propagation, &spec, &mc, &dy.ladder(), dy.cauchy_tol)?;
            sink.time("wave_operator", t);
            lines.push(format!("wave operator: converged {}, differences {:?}", est.converged, est.cauchy_differences));
            sink.json("wave_operator.json", &est)?;
            sink.with_writer("wave_operator.csv", |w| est.write_csv(w))?;
            if cfg.output.fields {
                sink.with_writer("w_plus.bin", |w| write_field_binary(&est.field, w))?;
            }
            if let Some(ts) = dy.s_time {
                let t = Instant::now();
                let s = s_operator(&dy.packet, &dy.propagation, &spec, &mc, ts)?;
                sink.time("s_operator", t);
                lines.push(format!("S operator: norm ratio {:.12}, shell overlap {:.4}", s.norm_ratio, s.shell_overlap));
                sink.json("s_operator.json", &s)?;
                if cfg.output.fields {
                    sink.with_writer("s_psi.bin", |w| write_field_binary(&s.field, w))?;
                }
            }
            Ok(())
        }
        Subcommand::Compare => {
            let spec = cfg.potential_spec()?;
            let ch = cfg.channel(&mc)?;
            let dy = cfg.dynamics.as_ref().ok_or_else(|| missing("dynamics"))?;
            let cc = cfg.compare.unwrap_or_default();
            let t = Instant::now();
            let rep = compare_dynamic_stationary(&dy.packet, &ch, &dy.propagation, &spec, &mc, &cc)?;
            sink.time("compare", t);
            lines.push(format!("compare: shape discrepancy {:.4}, ratio {:.6e}", rep.shape_discrepancy, rep.ratio));
            sink.json("compare.json", &rep)?;
            sink.with_writer("compare.csv", |w| {
                writeln!(w, "theta_upper,dynamic,stationary")?;
                for j in 0..rep.dynamic.len() {
                    writeln!(w, "{:.17e},{:.17e},{:.17e}", rep.theta_edges[j], rep.dynamic[j], rep.stationary[j])?;
                }
                Ok(())
            })
        }
    }
}
