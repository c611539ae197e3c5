use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use serde_json::json;

use ionqec::bench::{
    self, curve_csv, fidelity_curve_with, fit_json, fmt9, log_grid, mean_fidelity, sweep_and_fit, sweep_csv,
    sweep_curves_csv, SweepConfig, POINTS_PER_DECADE,
};
use ionqec::crystal_modes::{solve_modes, CrystalConfig};
use ionqec::pulse_synth::{
    evolutionary_search, integer_search, verify_solution, Budget, EvolutionConfig, SearchConfig, SolutionFile,
    TargetUnitary, ACCEPT_TOLERANCE,
};
use ionqec::qec_protocol::{CodeKind, Protocol, DEFAULT_GATE_TIME, SOLUTION_TOLERANCE};
use ionqec::quantum_engine::{random_pure_target, Pauli, PureTarget};
use ionqec::rng::substream;
use ionqec::spin_coupling::{cyclic_classes, PulseSolution, SpinModeCoupling, N_QUBITS};

use crate::settings::{RunManifest, Settings};

/// Bad parameter values detected after parsing; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<ionqec::Error>() {
        Some(ionqec::Error::Argument(_) | ionqec::Error::Config(_)) => 2,
        _ => 1,
    }
}

struct Output<'a> {
    name: &'static str,
    settings: &'a Settings,
    out: Option<&'a Path>,
    start: Instant,
}

impl Output<'_> {
    fn manifest(&self, outputs: Vec<PathBuf>) -> RunManifest {
        RunManifest {
            subcommand: self.name.to_string(),
            parameters: self.settings.clone(),
            seed: self.settings.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time: self.start.elapsed().as_secs_f64(),
            outputs,
        }
    }

    /// Writes to `--out` with a sibling manifest, or to standard output.
    fn emit(&self, content: &str) -> Result<()> {
        match self.out {
            Some(path) => {
                std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?;
                let mut m = path.as_os_str().to_owned();
                m.push(".manifest.json");
                self.manifest(vec![path.to_path_buf()]).write(Path::new(&m))
            }
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }
}

fn json_text(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Fills in the defaults a subcommand would use, so manifests record the
/// full parameter set.
pub fn resolve(name: &str, s: &Settings) -> Settings {
    let mut d = Settings {
        seed: Some(0),
        ..Default::default()
    };
    let kind = s.code.as_deref().and_then(|c| c.parse::<CodeKind>().ok()).unwrap_or(CodeKind::FiveRC);
    match name {
        "modes" => {
            let c = CrystalConfig::default();
            d.n_ions = Some(c.n_ions);
            d.beta = Some(c.beta);
        }
        "search" => {
            d.method = Some("tree".into());
            d.bound = Some(if s.method.as_deref() == Some("evolution") { EvolutionConfig::default().bound } else { 3 });
            d.tol = Some(ACCEPT_TOLERANCE);
        }
        "verify" => d.tol = Some(SOLUTION_TOLERANCE),
        "inject" => d.code = Some(kind.label().into()),
        "simulate" | "sweep" => {
            d.code = Some(kind.label().into());
            d.samples = Some(bench::DEFAULT_SAMPLES);
            d.gate_time = Some(DEFAULT_GATE_TIME);
            if name == "sweep" {
                d.sigmas = Some(bench::default_sigmas(kind));
                d.tmax = Some(1.0);
            } else {
                d.sigma = Some(0.0);
            }
        }
        _ => {}
    }
    s.clone().over(d)
}

pub fn run(name: &'static str, s: &Settings, out: Option<&Path>) -> Result<ExitCode> {
    let resolved = resolve(name, s);
    let s = &resolved;
    let o = Output {
        name,
        settings: s,
        out,
        start: Instant::now(),
    };
    match name {
        "modes" => modes(s, &o),
        "phases" => phases(s, &o),
        "search" => search(s, &o),
        "verify" => verify(s, &o),
        "inject" => inject(s, &o),
        "simulate" => simulate(s, &o),
        "sweep" => sweep(s, &o),
        other => Err(usage(format!("unknown subcommand {other}"))),
    }
}

fn coupling() -> Result<SpinModeCoupling> {
    let (_, modes) = solve_modes(&CrystalConfig::default())?;
    Ok(SpinModeCoupling::new(&modes)?)
}

fn code(s: &Settings) -> Result<CodeKind> {
    s.code
        .as_deref()
        .unwrap_or("5rc")
        .parse()
        .map_err(|_| usage(format!("unknown code {:?}; use 5rc or 5qc", s.code.as_deref().unwrap_or(""))))
}

#[derive(serde::Deserialize)]
#[serde(untagged)]
enum TargetFile {
    Bare(Vec<f64>),
    Named { name: Option<String>, phases: Vec<f64> },
}

fn load_target_file(path: &Path) -> Result<TargetUnitary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: TargetFile =
        serde_json::from_str(&text).map_err(|e| usage(format!("target file {}: {e}", path.display())))?;
    let (name, phases) = match parsed {
        TargetFile::Bare(p) => (None, p),
        TargetFile::Named { name, phases } => (name, phases),
    };
    let name = name.unwrap_or_else(|| path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into()));
    Ok(TargetUnitary::custom(name, phases)?)
}

/// `--target-file`, then `--target`, then `fallback`.
fn target(s: &Settings, fallback: Option<&str>) -> Result<TargetUnitary> {
    if let Some(path) = &s.target_file {
        return load_target_file(path);
    }
    match s.target.as_deref().or(fallback) {
        Some(name) => TargetUnitary::by_name(name).map_err(|_| usage(format!("unknown target {name:?}"))),
        None => Err(usage("no target given; use --target spokes|ring or --target-file")),
    }
}

fn load_solution(path: &Path) -> Result<SolutionFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("solution file {}: {e}", path.display())))
}

fn modes(s: &Settings, o: &Output) -> Result<ExitCode> {
    let mut cfg = CrystalConfig::default();
    if let Some(n) = s.n_ions {
        cfg.n_ions = n;
    }
    if let Some(b) = s.beta {
        cfg.beta = b;
    }
    let (_, basis) = solve_modes(&cfg)?;
    o.emit(&json_text(&basis.to_report())?)?;
    Ok(ExitCode::SUCCESS)
}

fn phases(s: &Settings, o: &Output) -> Result<ExitCode> {
    let classes = cyclic_classes();
    let values: Vec<f64> = match &s.solution {
        Some(path) => {
            let file = load_solution(path)?;
            let mut sol = file.solution();
            if let Some(k) = s.pulses {
                sol = sol.truncated(k);
            }
            let q = coupling()?;
            let p = q.solution_phases(&sol);
            classes.iter().map(|c| p.0[c.representative]).collect()
        }
        None => {
            if s.pulses.is_some() {
                return Err(usage("--pulses needs --solution"));
            }
            target(s, Some("spokes"))?.class_phases(&classes)
        }
    };
    let mut csv = String::from("class,representative,multiplicity,phi_over_pi,phi_over_pi_mod2\n");
    for (c, phi) in classes.iter().zip(values) {
        let x = phi / std::f64::consts::PI;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            c.label(),
            c.representative,
            c.multiplicity(),
            fmt9(x),
            fmt9(x.rem_euclid(2.0))
        );
    }
    o.emit(&csv)?;
    Ok(ExitCode::SUCCESS)
}

fn search(s: &Settings, o: &Output) -> Result<ExitCode> {
    let tgt = target(s, None)?;
    let q = coupling()?;
    let seed = s.seed.unwrap_or(0);
    let tolerance = s.tol.unwrap_or(ACCEPT_TOLERANCE);
    let report = match s.method.as_deref().unwrap_or("tree") {
        "tree" => integer_search(
            &tgt,
            &q,
            &SearchConfig {
                bound: s.bound.unwrap_or(3),
                tolerance,
                budget: Budget {
                    max_nodes: None,
                    max_secs: s.budget_secs,
                },
                seed,
                ..Default::default()
            },
        )?,
        "evolution" => evolutionary_search(
            &tgt,
            &q,
            &EvolutionConfig {
                seed,
                bound: s.bound.unwrap_or(EvolutionConfig::default().bound),
                tolerance,
                ..Default::default()
            },
        )?,
        other => return Err(usage(format!("unknown method {other:?}; use tree or evolution"))),
    };
    eprintln!(
        "{} solution(s), {} nodes explored, {} pruned, {:.1} s{}",
        report.solutions.len(),
        report.nodes_explored,
        report.nodes_pruned,
        report.wall_time,
        if report.exhausted { ", budget exhausted" } else { "" }
    );
    let Some(best) = report.solutions.first() else {
        eprintln!("no solution found");
        return Ok(ExitCode::from(1));
    };
    o.emit(&json_text(&SolutionFile::from_hit(&tgt.name, best))?)?;
    Ok(ExitCode::SUCCESS)
}

fn verify(s: &Settings, o: &Output) -> Result<ExitCode> {
    let path = s.solution.as_deref().ok_or_else(|| usage("verify needs --solution"))?;
    let file = load_solution(path)?;
    let tgt = target(s, Some(&file.target))?;
    let tol = s.tol.unwrap_or(SOLUTION_TOLERANCE);
    let sol = PulseSolution::new(file.areas.clone(), file.ratio, file.target.clone());
    if sol.areas.len() != 4 {
        return Err(usage(format!("expected 4 pulse areas, got {}", sol.areas.len())));
    }
    let deviation = verify_solution(&sol, &tgt, &coupling()?)?;
    let ok = deviation <= tol;
    o.emit(&json_text(&json!({
        "target": tgt.name,
        "deviation": deviation,
        "deviation_over_pi": deviation / std::f64::consts::PI,
        "tolerance": tol,
        "ok": ok,
    }))?)?;
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn parse_error(spec: &str) -> Result<(usize, Pauli)> {
    let bad = || usage(format!("bad error {spec:?}; expected P@i with P in IXYZ and i in 0..{N_QUBITS}"));
    let (p, q) = spec.split_once('@').ok_or_else(bad)?;
    let mut chars = p.trim().chars();
    let pauli = match (chars.next(), chars.next()) {
        (Some(c), None) => Pauli::parse(c.to_ascii_uppercase()).ok_or_else(bad)?,
        _ => return Err(bad()),
    };
    let qubit: usize = q.trim().parse().map_err(|_| bad())?;
    if qubit >= N_QUBITS {
        return Err(bad());
    }
    Ok((qubit, pauli))
}

/// Probe states for the injection demo: the six axis states and four Haar
/// draws.
fn probes(seed: u64) -> Vec<PureTarget> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut v = vec![
        PureTarget::down(),
        PureTarget::up(),
        PureTarget::plus(),
        PureTarget::minus(),
        PureTarget::from_bloch_angles(half_pi, half_pi),
        PureTarget::from_bloch_angles(half_pi, -half_pi),
    ];
    let mut rng = substream(seed, &[0x1e]);
    v.extend((0..4).map(|_| random_pure_target(&mut rng)));
    v
}

fn inject(s: &Settings, o: &Output) -> Result<ExitCode> {
    let kind = code(s)?;
    let errors = s
        .errors
        .as_deref()
        .unwrap_or_default()
        .iter()
        .map(|e| parse_error(e).map(|pe| (e.clone(), pe)))
        .collect::<Result<Vec<_>>>()?;
    if errors.is_empty() {
        return Err(usage("inject needs at least one --error P@i"));
    }
    let protocol = Protocol::standard(kind)?;
    let probes = probes(s.seed.unwrap_or(0));
    let worst = |errs: &[(usize, Pauli)]| -> Result<f64> {
        probes
            .iter()
            .map(|psi| protocol.run_with_errors(psi, errs))
            .try_fold(1.0f64, |m, f| Ok(m.min(f?)))
    };
    let mut rows = Vec::new();
    for (label, e) in &errors {
        rows.push(json!({ "error": label, "fidelity": worst(&[*e])? }));
    }
    let all: Vec<(usize, Pauli)> = errors.iter().map(|(_, e)| *e).collect();
    o.emit(&json_text(&json!({
        "code": kind.label(),
        "probes": probes.len(),
        "per_error": rows,
        "combined": worst(&all)?,
    }))?)?;
    Ok(ExitCode::SUCCESS)
}

fn check_positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must be positive, got {v}")))
    }
}

fn sweep_config(s: &Settings, kind: CodeKind, sigmas: Vec<f64>) -> Result<SweepConfig> {
    let tmax = check_positive("tmax", s.tmax.unwrap_or(1.0))?;
    if tmax <= 1e-4 {
        return Err(usage("--tmax must exceed 1e-4"));
    }
    let cfg = SweepConfig {
        code: kind,
        sigmas,
        samples: s.samples.unwrap_or(bench::DEFAULT_SAMPLES),
        time_grid: log_grid(1e-4, tmax, POINTS_PER_DECADE),
        seed: s.seed.unwrap_or(0),
        gate_time: s.gate_time.unwrap_or(DEFAULT_GATE_TIME),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn simulate(s: &Settings, o: &Output) -> Result<ExitCode> {
    let kind = code(s)?;
    let sigma = s.sigma.unwrap_or(0.0);
    match (s.t, s.tmax) {
        (Some(t), _) => {
            let samples = s.samples.unwrap_or(bench::DEFAULT_SAMPLES);
            let gate_time = s.gate_time.unwrap_or(DEFAULT_GATE_TIME);
            if !(gate_time.is_finite() && gate_time >= 0.0) {
                return Err(usage("--gate-time must be ≥ 0"));
            }
            let protocol = Protocol::standard(kind)?.with_gate_time(gate_time);
            let p = mean_fidelity(&protocol, sigma, t, samples, s.seed.unwrap_or(0))?;
            o.emit(&json_text(&json!({
                "code": kind.label(),
                "sigma": sigma,
                "t": t,
                "samples": samples,
                "mean_fidelity": p.mean,
                "std_err": p.std_err,
            }))?)?;
        }
        (None, Some(_)) => {
            let cfg = sweep_config(s, kind, vec![sigma])?;
            let curve = fidelity_curve_with(&cfg.protocol()?, &cfg, 0)?;
            o.emit(&curve_csv(&[curve]))?;
        }
        (None, None) => return Err(usage("simulate needs --t or --tmax")),
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(s: &Settings, o: &Output) -> Result<ExitCode> {
    let kind = code(s)?;
    let sigmas = s.sigmas.clone().unwrap_or_else(|| bench::default_sigmas(kind));
    if sigmas.len() < 3 {
        return Err(usage("--sigmas needs at least 3 values"));
    }
    let cfg = sweep_config(s, kind, sigmas)?;
    let record = sweep_and_fit(&cfg)?;
    let fit = match &record.fit {
        Some(f) => fit_json(f),
        None => json!({
            "error": record.fit_error,
            "ratios": record.ratios(),
        }),
    };
    match o.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let files = [
                ("curves.csv", sweep_curves_csv(&record)),
                ("sweep.csv", sweep_csv(&record)),
                ("fit.json", json_text(&fit)?),
                ("record.json", json_text(&record)?),
            ];
            let mut written = Vec::new();
            for (name, content) in files {
                let path = dir.join(name);
                std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
            o.manifest(written).write(&dir.join("manifest.json"))?;
        }
        None => print!("{}", sweep_csv(&record)),
    }
    eprintln!("fit: {}", serde_json::to_string(&fit)?);
    if record.fit.is_none() {
        return Err(anyhow!("scaling fit failed; raw ratios were written"));
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_specs() {
        assert_eq!(parse_error("Z@3").unwrap(), (3, Pauli::Z));
        assert_eq!(parse_error("x@0").unwrap(), (0, Pauli::X));
        for bad in ["Z3", "Q@1", "Z@6", "ZZ@1", "Z@-1"] {
            assert_eq!(exit_code(&parse_error(bad).unwrap_err()), 2, "{bad}");
        }
    }

    #[test]
    fn runtime_errors_exit_one() {
        let e = anyhow!("disk");
        assert_eq!(exit_code(&e), 1);
    }
}
