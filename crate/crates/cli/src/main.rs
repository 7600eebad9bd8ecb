//! `copepod`: runs a scenario file and writes CSV/SVG artifacts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver found no feasible
//! trajectory, 4 internal numerical failure. Errors are reported on stderr as
//! a single `error[<kind>]: <message>` line and any files written by the
//! failed run are removed.

mod scenario;

use std::f64::consts::{PI, TAU};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use copepod::export;
use copepod::extremals::{sample_curve, verify_abnormal, S1Family, S2Family};
use copepod::liegeometry::{defect_roots, psi_sweep};
use copepod::ocp::{path_curvature, pmp_diagnostic, rotation_policy_check, solve, table1_rows, OcpSolution, Table1Outcome};
use copepod::simulation::integrate;
use copepod::State;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenario::{one_line, Command, ConfigError, Scenario};

#[derive(Parser, Debug)]
#[command(name = "copepod", version, about = "Simulate and optimize strokes of a two-legged planar swimmer")]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides the scenario's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multistart seed; overrides the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Collocation intervals; overrides the scenario's `intervals`.
    #[arg(long)]
    n: Option<usize>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Infeasible(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            Failure::Config(m) => ("config", m),
            Failure::Infeasible(m) => ("infeasible", m),
            Failure::Numerical(m) => ("numerical", m),
        };
        format!("error[{kind}]: {}", one_line(msg))
    }
}

impl From<copepod::Error> for Failure {
    fn from(e: copepod::Error) -> Self {
        match e {
            copepod::Error::InvalidInput(_) => Failure::Config(e.to_string()),
            copepod::Error::InfeasibleWithinBudget { .. } => Failure::Infeasible(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

/// Files written so far; removed again if the run fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Outputs, Failure> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
        if !dir.is_dir() {
            return Err(Failure::Config(format!("{} is not a directory", dir.display())));
        }
        Ok(Outputs { dir: dir.to_path_buf(), created_dir, files: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, fill: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| Failure::Numerical(format!("formatting {name}: {e}")))?;
        let path = self.dir.join(name);
        self.files.push(path.clone());
        fs::write(&path, buf).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        self.write(name, |w| {
            w.extend_from_slice(body.as_bytes());
            Ok(())
        })
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(summary) => {
            if !args.quiet {
                print!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.code())
        }
    }
}

fn run(args: &Args) -> Result<String, Failure> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", args.scenario.display())))?;
    let sc = Scenario::parse(&text)?;
    let dir = args
        .out
        .clone()
        .or_else(|| sc.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = Outputs::open(&dir)?;
    match execute(&sc, args, &mut out) {
        Ok(summary) => {
            out.text("summary.txt", &summary)?;
            Ok(summary)
        }
        Err(f) => {
            out.discard();
            Err(f)
        }
    }
}

fn execute(sc: &Scenario, args: &Args, out: &mut Outputs) -> Result<String, Failure> {
    let cfg = sc.transcription(args.seed, args.n);
    match sc.command {
        Command::Simulate => simulate(sc, out),
        Command::Optimize => {
            let spec = sc.boundary(&sc.optimize.boundary)?;
            let sol = solve(&spec, &cfg)?;
            write_solution(out, &sol)?;
            let pmp = pmp_diagnostic(&sol);
            Ok(format!(
                "boundary={}\n{}\nmax_defect={:e}\nboundary_violation={:e}\npmp_correlation={}\n",
                sc.optimize.boundary,
                sol.summary_line(),
                sol.max_defect,
                sol.boundary_violation,
                pmp.correlation
            ))
        }
        Command::Analyze => {
            let rows = psi_sweep(sc.analyze.samples, sc.analyze.rank_tol);
            out.write("psi_sweep.csv", |w| export::write_sweep_csv(w, &rows))?;
            let roots = defect_roots(0.0, TAU, sc.analyze.samples.max(16));
            out.write("defect_roots.csv", |w| {
                w.extend_from_slice(b"psi\n");
                for r in &roots {
                    w.extend_from_slice(format!("{r:.16e}\n").as_bytes());
                }
                Ok(())
            })?;
            let list: Vec<String> = roots.iter().map(|r| format!("{r:.12}")).collect();
            Ok(format!("defect_roots={}\n", list.join(",")))
        }
        Command::Abnormal => abnormal(sc, &cfg, out),
        Command::Table1 => {
            let wanted = sc.table1.rows.clone();
            let rows: Vec<_> = table1_rows()
                .into_iter()
                .filter(|r| wanted.as_ref().map_or(true, |w| w.contains(r.label)))
                .collect();
            if rows.is_empty() {
                return Err(Failure::Config("no benchmark rows selected".into()));
            }
            let outcomes: Vec<Table1Outcome> = rows
                .into_iter()
                .map(|row| Table1Outcome { row, result: solve(&row.boundary(), &cfg) })
                .collect();
            out.write("table1.csv", |w| export::write_table1_csv(w, &outcomes))?;
            let passed = outcomes.iter().filter(|o| o.passes()).count();
            Ok(format!("rows={} within_band={}\n", outcomes.len(), passed))
        }
        Command::Rotate => {
            let rep = rotation_policy_check(sc.rotate.delta_phi, &cfg)?;
            write_solution(out, &rep.solution)?;
            out.write("rotation.csv", |w| export::write_rotation_csv(w, &rep))?;
            Ok(format!(
                "delta_phi={}\n{}\ntraversals={}\ntube_fraction={}\nterminal_on_hypotenuse={}\n",
                rep.delta_phi,
                rep.solution.summary_line(),
                rep.traversals,
                rep.tube_fraction,
                rep.terminal_on_hypotenuse
            ))
        }
    }
}

fn simulate(sc: &Scenario, out: &mut Outputs) -> Result<String, Failure> {
    let stroke = sc.stroke(&sc.simulate.stroke)?;
    let schedule = stroke.schedule()?;
    let [t1, t2] = stroke.initial_legs();
    let [x, y, phi] = sc.simulate.pose;
    let traj = integrate(&State::two_leg(x, y, phi, t1, t2), &schedule, sc.simulate.tol)?;
    out.write("trajectory.csv", |w| export::write_trajectory_csv(w, &traj))?;
    let states: Vec<[f64; 5]> = traj.states.iter().map(State::to_array).collect();
    out.text("xy_path.svg", &export::xy_path_svg(&states))?;
    out.text("theta_plane.svg", &export::theta_plane_svg(&states))?;
    let q = traj.final_state().to_array();
    Ok(format!(
        "final x={} y={} phi={} theta1={} theta2={}\nenergy={}\nbox_violation={}\n",
        q[0],
        q[1],
        q[2],
        q[3],
        q[4],
        traj.energy(),
        traj.box_violation
    ))
}

fn write_solution(out: &mut Outputs, sol: &OcpSolution) -> Result<(), Failure> {
    out.write("ocp_solution.csv", |w| export::write_ocp_csv(w, sol))?;
    let states = sol.node_states();
    out.write("curvature.csv", |w| export::write_curvature_csv(w, &path_curvature(&states)))?;
    out.text("xy_path.svg", &export::xy_path_svg(&states))?;
    out.text("theta_plane.svg", &export::theta_plane_svg(&states))
}

/// Residuals above this indicate a bug, not a property of the draw.
const ABNORMAL_TOL: f64 = 1e-9;

fn abnormal(sc: &Scenario, cfg: &copepod::ocp::TranscriptionConfig, out: &mut Outputs) -> Result<String, Failure> {
    let draws = sc.abnormal.draws;
    let samples = sc.abnormal.samples.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lines = vec!["family,draw,n,sign,phi0,x0,y0,c1,c2,p_f1,p_f2,p_f3,p_f45,hamilton,max".to_string()];
    let mut worst = 0.0f64;
    let real = |v: f64| format!("{v:.16e}");
    for family in ["s1", "s2"] {
        for d in 0..draws {
            let n = rng.gen_range(-1i64..=1);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let phi0 = rng.gen_range(-PI..PI);
            let x0 = rng.gen_range(-1.0..1.0);
            let y0 = rng.gen_range(-1.0..1.0);
            let c1 = rng.gen_range(-1.0..1.0);
            let c2 = rng.gen_range(-1.0..1.0);
            let (res, sign, c1, c2) = if family == "s1" {
                let fam = S1Family::new(n, sign, phi0, x0, y0, c1, c2)?;
                (verify_abnormal(&sample_curve(|t| fam.eval(t), 0.0, TAU, samples), [1.0, 1.0]), sign, c1, c2)
            } else {
                let fam = S2Family { n, phi0, x0, y0 };
                (verify_abnormal(&sample_curve(|t| fam.eval(t), 0.0, TAU, samples), [1.0, 1.0]), 0.0, 0.0, 0.0)
            };
            worst = worst.max(res.max());
            lines.push(
                [
                    family.to_string(),
                    d.to_string(),
                    n.to_string(),
                    real(sign),
                    real(phi0),
                    real(x0),
                    real(y0),
                    real(c1),
                    real(c2),
                    real(res.p_f1),
                    real(res.p_f2),
                    real(res.p_f3),
                    real(res.p_f45),
                    real(res.hamilton),
                    real(res.max()),
                ]
                .join(","),
            );
        }
    }
    let mut body = lines.join("\n");
    body.push('\n');
    out.text("abnormal_residuals.csv", &body)?;
    if worst > ABNORMAL_TOL {
        return Err(Failure::Numerical(format!(
            "abnormal residual {worst:e} exceeds {ABNORMAL_TOL:e}"
        )));
    }
    Ok(format!("draws_per_family={draws}\nmax_residual={worst:e}\n"))
}
