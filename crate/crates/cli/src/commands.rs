//! The five subcommands.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use krsbm::brwre::{kill_and_project, run_replicas, SimulationConfig};
use krsbm::environment::{enhance, lemma_norm_survey, sample_noise, EnhancedEnvironment, NoiseSpec, SurveyConfig};
use krsbm::io;
use krsbm::pam::{principal_eigenpair, solve_linear_pam, PamProblem, PowerIterationOptions, Trajectory};
use krsbm::spectral::{renormalization_constant, MultiplierSpec};
use krsbm::verify::{
    test_laplace_functional, test_martingale_qv, test_moment_duality, test_mass_tail, test_ordering_replicas,
    DualitySetup, TestReport,
};
use krsbm::{Field, LatticeSpec};

use crate::config::{Command, RunConfig};
use crate::manifest::{now_unix_ms, CapStatus, DerivedConstants, OutputSet, RunManifest};

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    /// Test reports of `verify`; empty otherwise.
    pub reports: Vec<TestReport>,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.reports.iter().filter(|r| !r.pass).count()
    }
}

#[derive(Default)]
struct Extras {
    derived: Vec<DerivedConstants>,
    cap: Option<CapStatus>,
    warnings: Vec<String>,
    reports: Vec<TestReport>,
}

/// Runs the configured command and writes its manifest.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let started = now_unix_ms();
    let mut out = OutputSet::new(&cfg.output_dir);
    let extras = match cfg.command {
        Command::GenEnv => gen_env(cfg, &mut out)?,
        Command::Solve => solve(cfg, &mut out)?,
        Command::Simulate => simulate(cfg, &mut out)?,
        Command::Verify => verify(cfg, &mut out)?,
        Command::Survey => survey(cfg, &mut out)?,
    };
    let root = out.root().to_path_buf();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cfg.command.to_string(),
        config_hash: cfg.hash(),
        config: cfg.resolved().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        derived: extras.derived,
        cap: extras.cap,
        warnings: extras.warnings,
        started_unix_ms: started,
        finished_unix_ms: now_unix_ms(),
        outputs: out.finish(),
    };
    let manifest_path = root.join(format!("manifest-{}.json", cfg.command));
    std::fs::write(&manifest_path, manifest.to_json())
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok(RunSummary {
        manifest,
        manifest_path,
        reports: extras.reports,
    })
}

fn ambient(cfg: &RunConfig, n: usize) -> Result<LatticeSpec> {
    Ok(LatticeSpec::new(n, cfg.l_max, cfg.d)?)
}

pub fn env_file_name(n: usize, seed: u64) -> String {
    format!("env_n{n}_seed{seed}.txt")
}

fn derived(env: &EnhancedEnvironment) -> DerivedConstants {
    DerivedConstants {
        n: env.spec().n(),
        seed: Some(env.noise.spec.seed),
        kappa_n: env.kappa_n,
        c_n: env.c_n,
        nu: env.nu,
    }
}

/// Loads an archive and checks that it matches the configuration.
fn load_env(cfg: &RunConfig, n: usize, seed: u64) -> Result<EnhancedEnvironment> {
    let path = cfg.env_dir.join(env_file_name(n, seed));
    if !path.exists() {
        bail!("missing environment archive {}; run gen-env first", path.display());
    }
    let env = io::load_environment(&path)?;
    let want = ambient(cfg, n)?;
    if *env.spec() != want || env.noise.spec.distribution != cfg.phi || env.noise.spec.seed != seed {
        bail!(
            "archive {} holds {} {} seed {}, config asks for {} {} seed {}",
            path.display(),
            env.spec(),
            env.noise.spec.distribution,
            env.noise.spec.seed,
            want,
            cfg.phi,
            seed
        );
    }
    Ok(env)
}

/// `∏_a (1 − (x_a/(L/2))²)`, zero on the boundary.
pub fn test_function(spec: LatticeSpec) -> Field {
    let half = spec.l() as f64 / 2.0;
    let mut f = Field::from_fn(spec, |_, x| (0..spec.d()).map(|a| 1.0 - (x[a] / half).powi(2)).product());
    f.zero_boundary();
    f
}

fn pairs(cfg: &RunConfig) -> impl Iterator<Item = (usize, u64)> + '_ {
    cfg.ns.iter().flat_map(move |&n| cfg.seeds.iter().map(move |&s| (n, s)))
}

fn gen_env(cfg: &RunConfig, out: &mut OutputSet) -> Result<Extras> {
    let mut ex = Extras::default();
    let rel_dir = cfg.env_dir.strip_prefix(&cfg.output_dir).ok().map(PathBuf::from);
    for (n, seed) in pairs(cfg) {
        let env = enhance(sample_noise(&NoiseSpec::new(ambient(cfg, n)?, cfg.phi, seed)))?;
        let text = io::environment_to_text(&env);
        let name = env_file_name(n, seed);
        match &rel_dir {
            Some(rel) => out.write(&rel.join(&name).to_string_lossy().replace('\\', "/"), text.as_bytes())?,
            None => out.write_outside(&cfg.env_dir.join(&name), text.as_bytes())?,
        };
        ex.derived.push(derived(&env));
    }
    Ok(ex)
}

fn solve(cfg: &RunConfig, out: &mut OutputSet) -> Result<Extras> {
    let mut ex = Extras::default();
    let jobs: Vec<(usize, Option<u64>)> = if cfg.zero_env {
        cfg.ns.iter().map(|&n| (n, None)).collect()
    } else {
        pairs(cfg).map(|(n, s)| (n, Some(s))).collect()
    };
    for (n, seed) in jobs {
        let env = match seed {
            Some(s) => {
                let env = load_env(cfg, n, s)?;
                ex.derived.push(derived(&env));
                Some(env)
            }
            None => None,
        };
        let tag = seed.map_or("zero".to_string(), |s| format!("seed{s}"));
        for &l in &cfg.ls {
            let spec = LatticeSpec::new(n, l, cfg.d)?;
            let potential = match &env {
                Some(e) => e.effective_potential_on(&spec)?,
                None => Field::zeros(spec),
            };
            let problem = PamProblem::new(potential.clone(), test_function(spec), cfg.horizon, cfg.dt);
            let traj = solve_linear_pam(&problem)?;
            let dump = sample_times(&traj, &cfg.times);
            out.write(&format!("solve/traj_n{n}_{tag}_L{l}.txt"), io::trajectory_to_text(&dump).as_bytes())?;
            let ep = principal_eigenpair(&potential, &PowerIterationOptions::default())?;
            out.write(&format!("solve/eigen_n{n}_{tag}_L{l}.csv"), io::eigenpair_report(&ep).as_bytes())?;
        }
    }
    Ok(ex)
}

/// States on the solver grid nearest to the requested times.
fn sample_times(traj: &Trajectory, times: &[f64]) -> Trajectory {
    let mut out = Trajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let i = traj
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("non-empty trajectory");
        out.times.push(traj.times[i]);
        out.states.push(traj.states[i].clone());
    }
    out
}

fn measure_boxes(cfg: &RunConfig) -> Vec<usize> {
    let mut boxes = cfg.ls.clone();
    boxes.push(cfg.l_max);
    boxes.sort_unstable();
    boxes.dedup();
    boxes
}

fn simulate(cfg: &RunConfig, out: &mut OutputSet) -> Result<Extras> {
    let mut ex = Extras::default();
    let boxes = measure_boxes(cfg);
    let mut cap = CapStatus {
        population_cap: cfg.population_cap,
        runs: 0,
        exploded: 0,
    };
    let seeds = cfg.replica_seeds();
    for (n, seed) in pairs(cfg) {
        let env = load_env(cfg, n, seed)?;
        ex.derived.push(derived(&env));
        let base = SimulationConfig {
            population_cap: cfg.population_cap,
            record_events: true,
            ..SimulationConfig::new(cfg.horizon, 0)
        };
        let d = cfg.d;
        let files = run_replicas(&env.effective_potential(), &base, &seeds, |o| {
            let mut events = Vec::new();
            io::write_events(&mut events, &o.events).expect("in-memory write");
            let path = kill_and_project(&o, &boxes, &cfg.times)?;
            Ok((o.seed, o.exploded, events, io::measure_to_csv(&path, d)))
        })?;
        for (r, exploded, events, csv) in files {
            cap.runs += 1;
            cap.exploded += exploded as usize;
            out.write(&format!("simulate/events_n{n}_seed{seed}_rep{r}.bin"), &events)?;
            out.write(&format!("simulate/measure_n{n}_seed{seed}_rep{r}.csv"), csv.as_bytes())?;
        }
    }
    ex.cap = Some(cap);
    Ok(ex)
}

fn tag(r: TestReport, hash: &str, n: usize, seed: u64, l: Option<usize>) -> TestReport {
    let r = r.with_config_hash(hash).with_extra("n", n as f64).with_extra("seed", seed as f64);
    match l {
        Some(l) => r.with_extra("L", l as f64),
        None => r,
    }
}

fn verify(cfg: &RunConfig, out: &mut OutputSet) -> Result<Extras> {
    let mut ex = Extras::default();
    let hash = cfg.hash();
    let mut exploded = 0;
    let mut runs = 0;
    for (n, seed) in pairs(cfg) {
        let env = load_env(cfg, n, seed)?;
        ex.derived.push(derived(&env));
        for &l in &cfg.ls {
            let mut setup = DualitySetup::new(env.effective_potential(), l, cfg.replica_seeds());
            setup.population_cap = cfg.population_cap;
            setup.dt = cfg.dt;
            let phi = test_function(setup.box_spec()?);
            let mut reports = vec![test_moment_duality(&setup, cfg.horizon, &phi)?];
            let qv = test_martingale_qv(&setup, cfg.horizon, &phi)?;
            reports.push(qv.mean);
            reports.push(qv.quadratic_variation);
            reports.extend(test_laplace_functional(&setup, cfg.horizon, &phi, &cfg.times)?);
            let tail = test_mass_tail(&setup, cfg.horizon, &cfg.r_grid)?;
            let mut mass = tail.report;
            for (r, p) in tail.r_grid.iter().zip(&tail.tail) {
                mass = mass.with_extra(&format!("tail_R{r}"), *p);
            }
            reports.push(mass);
            for r in reports {
                runs += r.replicas + r.exploded;
                exploded += r.exploded;
                ex.reports.push(tag(r, &hash, n, seed, Some(l)));
            }
        }
        let setup = DualitySetup {
            population_cap: cfg.population_cap,
            ..DualitySetup::new(env.effective_potential(), cfg.l_max, cfg.replica_seeds())
        };
        let ord = test_ordering_replicas(&setup, cfg.horizon, &cfg.ls, &cfg.times)?;
        ex.reports.push(tag(ord, &hash, n, seed, None));
    }
    out.write("verify/reports.jsonl", io::reports_to_json_lines(&ex.reports).as_bytes())?;
    ex.cap = Some(CapStatus {
        population_cap: cfg.population_cap,
        runs,
        exploded,
    });
    Ok(ex)
}

fn survey(cfg: &RunConfig, out: &mut OutputSet) -> Result<Extras> {
    let mut ex = Extras::default();
    let rep = lemma_norm_survey(&SurveyConfig {
        ns: cfg.ns.clone(),
        l: cfg.l_max,
        d: cfg.d,
        distribution: cfg.phi,
        seeds: cfg.seeds.clone(),
        alpha: cfg.alpha,
        epsilon: cfg.epsilon,
        p: cfg.p,
        q: cfg.q,
    })?;
    out.write("survey/norms.csv", io::norms_to_csv(&rep.rows).as_bytes())?;
    for &n in &cfg.ns {
        let kappa = if cfg.d == 2 {
            renormalization_constant(&ambient(cfg, n)?, &MultiplierSpec::cutoff())?
        } else {
            0.0
        };
        ex.derived.push(DerivedConstants {
            n,
            seed: None,
            kappa_n: kappa,
            c_n: kappa,
            nu: cfg.phi.positive_part_mean(),
        });
    }
    ex.warnings = rep.warnings;
    Ok(ex)
}
