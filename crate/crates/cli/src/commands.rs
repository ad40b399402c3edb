use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use darboux_core::catalog::{self, CatalogEntry};
use darboux_core::config::RunConfig;
use darboux_core::models::{Family, Potential, PrintedPotential};
use darboux_core::verify::{
    analytic_slice, cn_nodes, evolve_recorded, l2_error_slices, potential_csv, run_suite, slices_csv, FamilyContext,
    Grid1D,
};
use darboux_core::{Error, Result};
use serde_json::json;

pub enum Outcome {
    Pass,
    Fail,
}

pub struct RunOptions {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub family: Option<String>,
    pub params: Vec<String>,
    pub json: bool,
    pub negative_controls: bool,
}

impl RunOptions {
    /// The validated configuration after `--family` and `--param`.
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(name) = &self.family {
            let entry = catalog::lookup(name).ok_or_else(|| unknown_family(name))?;
            cfg.families.retain(|e| e.family.name() == name);
            if cfg.families.is_empty() {
                cfg.families.push(entry.template);
            }
        } else if !self.params.is_empty() {
            return Err(Error::Config("--param needs --family".into()));
        }
        for p in &self.params {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--param {p}: expected KEY=VALUE")))?;
            cfg.families = cfg
                .families
                .iter()
                .map(|e| e.with_param(k.trim(), v.trim()))
                .collect::<Result<_>>()?;
        }
        if self.negative_controls {
            cfg.checks.negative_controls = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn unknown_family(name: &str) -> Error {
    let names: Vec<String> = catalog::catalog().into_iter().map(|e| e.name).collect();
    Error::Config(format!("unknown family '{name}'; expected one of {}", names.join(", ")))
}

/// File stem for the i-th family of a run.
fn stem(i: usize, family: &Family) -> String {
    format!("{i:02}-{}", family.name())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn catalog(family: Option<&str>, as_json: bool) -> Result<Outcome> {
    let entries: Vec<CatalogEntry> = match family {
        Some(name) => vec![catalog::lookup(name).ok_or_else(|| unknown_family(name))?],
        None => catalog::catalog(),
    };
    if as_json {
        print!("{}", to_json(&entries)?);
        return Ok(Outcome::Pass);
    }
    let mut out = String::new();
    for e in &entries {
        let _ = writeln!(out, "{}  ({})", e.name, e.origin);
        let _ = writeln!(out, "  transformation function: {}", e.transformation_function);
        let _ = writeln!(
            out,
            "  geometry: {}, operator order {}, printed potential: {}",
            e.geometry,
            e.operator_order,
            if e.printed_potential { "yes" } else { "absent" }
        );
        for p in &e.parameters {
            let _ = writeln!(out, "  {:<8} {:<8} {}", p.name, p.kind, p.constraint);
        }
        if let Some(rule) = &e.rule {
            let _ = writeln!(out, "  rule: {rule}");
        }
    }
    print!("{out}");
    Ok(Outcome::Pass)
}

pub fn verify(opts: &RunOptions) -> Result<Outcome> {
    let cfg = opts.load()?;
    let dir = opts.out_dir(&cfg)?;
    let report = run_suite(&cfg)?;
    let path = dir.join(&cfg.output.report);
    report.write_json(&path)?;
    if opts.json {
        print!("{}", report.to_json()?);
    } else {
        print!("{}", report.summary());
        println!("report written to {}", path.display());
    }
    Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
}

fn sample_grid(cfg: &RunConfig, ctx: &FamilyContext) -> Result<Grid1D> {
    let g = cfg
        .grid
        .grid(ctx.geometry)
        .with_nx(cfg.output.sample_nx)
        .with_time(cfg.grid.t_min, cfg.grid.t_max, cfg.output.sample_nt);
    g.validate()?;
    Ok(g)
}

pub fn potential(opts: &RunOptions) -> Result<Outcome> {
    let cfg = opts.load()?;
    let dir = opts.out_dir(&cfg)?;
    let mut summary = Vec::new();
    for (i, entry) in cfg.families.iter().enumerate() {
        let ctx = FamilyContext::from_entry(&cfg, entry)?;
        let grid = sample_grid(&cfg, &ctx)?;
        let v1 = ctx.operator.potential(ctx.v0.clone());
        let file = format!("{}-potential.csv", stem(i, &entry.family));
        write(&dir.join(&file), &potential_csv(v1.as_ref(), &grid)?)?;
        let printed = match entry.family {
            Family::Osc2 { .. } => None,
            _ => Some(PrintedPotential(ctx.spec.clone())),
        };
        let (printed_file, deviation) = match &printed {
            Some(p) => {
                let file = format!("{}-printed.csv", stem(i, &entry.family));
                write(&dir.join(&file), &potential_csv(p, &grid)?)?;
                (Some(file), Some(max_deviation(v1.as_ref(), p, &grid)?))
            }
            None => (None, None),
        };
        summary.push(json!({
            "family": ctx.label,
            "potential": file,
            "printed": printed_file,
            "max_scaled_deviation": deviation,
        }));
        if !opts.json {
            match deviation {
                Some(d) => println!("{:<44} printed form agrees to {d:.3e}", ctx.label),
                None => println!("{:<44} printed form absent", ctx.label),
            }
        }
    }
    let text = to_json(&summary)?;
    write(&dir.join("potential.json"), &text)?;
    if opts.json {
        print!("{text}");
    }
    Ok(Outcome::Pass)
}

/// max |V − V_printed| / (1 + |V_printed|) over the grid.
fn max_deviation(v: &dyn Potential, printed: &dyn Potential, grid: &Grid1D) -> Result<f64> {
    let xs = grid.xs();
    let mut d = 0.0f64;
    for t in grid.ts() {
        for (a, b) in v.row(&xs, t)?.iter().zip(printed.row(&xs, t)?) {
            d = d.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    Ok(d)
}

pub fn propagate(opts: &RunOptions) -> Result<Outcome> {
    let cfg = opts.load()?;
    let dir = opts.out_dir(&cfg)?;
    let tol = cfg.tolerances.propagation;
    let mut summary = Vec::new();
    let mut all_pass = true;
    for (i, entry) in cfg.families.iter().enumerate() {
        let ctx = FamilyContext::from_entry(&cfg, entry)?;
        let targets = ctx.propagation_targets();
        if targets.is_empty() && !opts.json {
            println!("{:<44} no propagation target", ctx.label);
        }
        for n in targets {
            let target = ctx.operator.image(ctx.basis(n));
            let v1 = ctx.operator.potential(ctx.v0.clone());
            let (grid, cn) = ctx.propagation_setup(&cfg);
            let every = ((grid.nt - 1) / (cfg.output.propagation_rows - 1)).max(1);
            let psi0 = analytic_slice(target.as_ref(), &grid, grid.t_min)?;
            let (run, numeric) = evolve_recorded(v1.as_ref(), &psi0, &grid, cn, every)?;
            let mut analytic = Vec::with_capacity(numeric.len());
            let mut errors = Vec::with_capacity(numeric.len());
            for (t, row) in &numeric {
                let exact = analytic_slice(target.as_ref(), &grid, *t)?;
                errors.push(l2_error_slices(row, &exact)?);
                analytic.push((*t, exact));
            }
            let xs = cn_nodes(&grid);
            let base = format!("{}-state{n}", stem(i, &entry.family));
            write(&dir.join(format!("{base}-numeric.csv")), &slices_csv(&xs, &numeric))?;
            write(&dir.join(format!("{base}-analytic.csv")), &slices_csv(&xs, &analytic))?;
            let error = *errors.last().expect("at least one row");
            all_pass &= error < tol;
            if !opts.json {
                println!("{:<44} state {n}: L2 error {error:.3e} at t = {}", ctx.label, grid.t_max);
            }
            summary.push(json!({
                "family": ctx.label,
                "state": n,
                "error": error,
                "tolerance": tol,
                "row_errors": errors,
                "norm_drift": run.norm_drift,
                "boundary_max": run.boundary_max,
                "files": [format!("{base}-numeric.csv"), format!("{base}-analytic.csv")],
            }));
        }
    }
    let text = to_json(&summary)?;
    write(&dir.join("propagation.json"), &text)?;
    if opts.json {
        print!("{text}");
    }
    Ok(if all_pass { Outcome::Pass } else { Outcome::Fail })
}
