//! One function per subcommand. Each returns the process exit code.

use serde_json::{json, Value};
use ultralap::bvp::{
    edge_boundary, solve_bvp, vertex_boundary, BvpOutcome, Condition, Region, Violation,
};
use ultralap::heat::{
    empirical_law, heat_kernel, sample_paths, solve_cauchy, total_mass, total_variation,
    transition_matrix, DiagonalStatus, JumpChain, SpectralDecomposition,
};
use ultralap::schottky::{validate_fundamental_domain, CheckEntry};
use ultralap::spectral::{
    assemble_matrix, eigenpairs, full_spectrum, Eigenpair, Model, OperatorMatrix,
};
use ultralap::wavelets::Anchor;

use crate::config::{DecompositionJson, ExperimentConfig, InitialJson};
use crate::error::CliError;
use crate::output::{fmt_f64, Bundle, Csv};

pub struct Prepared {
    pub model: Model,
    pub matrix: OperatorMatrix,
}

impl Prepared {
    pub fn build(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<Self, CliError> {
        let configs = config.component_configs()?;
        for (i, c) in configs.iter().enumerate() {
            let check = c.convergence();
            if !check.sharp {
                return Err(CliError::Precondition(format!(
                    "component {i}: length series diverges at alpha = {} (need (2g-1) p^-alpha < 1)",
                    c.alpha
                )));
            }
            if !check.coarse {
                eprintln!("warning: component {i}: p^alpha <= 2g; the sharp condition (2g-1) p^-alpha < 1 holds");
            }
        }
        let coupling = config.coupling()?;
        let model = bundle.timed("model", || {
            Model::build(&configs, coupling, config.numerics.depth, config.options())
        })?;
        let matrix = bundle.timed("matrix", || assemble_matrix(&model));
        Ok(Prepared { model, matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn pairs(&self) -> Result<Vec<Eigenpair>, CliError> {
        Ok(eigenpairs(&self.model, &self.matrix)?)
    }

    pub fn decomposition(
        &self,
        block: DecompositionJson,
        bundle: &mut Bundle,
    ) -> Result<SpectralDecomposition, CliError> {
        match block {
            DecompositionJson::Direct => Ok(bundle.timed("decomposition", || {
                SpectralDecomposition::from_matrix(&self.matrix)
            })),
            DecompositionJson::Analytic => {
                let pairs = bundle.timed("eigenpairs", || self.pairs())?;
                let model = &self.model;
                Ok(SpectralDecomposition::from_eigenpairs(
                    &pairs,
                    self.matrix.mu.clone(),
                    |a| match *a {
                        Anchor::Vertex {
                            component,
                            orbit,
                            vertex,
                        } => {
                            model.components[component].partition.trees[orbit]
                                .vertex(vertex)
                                .depth
                        }
                        _ => 0,
                    },
                ))
            }
        }
    }

    pub fn initial(&self, block: &InitialJson) -> Result<Vec<f64>, CliError> {
        let n = self.n();
        match block {
            InitialJson::Values(v) if v.len() == n => Ok(v.clone()),
            InitialJson::Values(v) => Err(CliError::Config(format!(
                "initial values: expected {n} entries, got {}",
                v.len()
            ))),
            InitialJson::Indicator(leaves) => {
                let mut u = vec![0.0; n];
                for &l in leaves {
                    *u.get_mut(l).ok_or_else(|| {
                        CliError::Config(format!("initial indicator: no leaf {l}"))
                    })? = 1.0;
                }
                Ok(u)
            }
            InitialJson::Eigenfunction(id) => self
                .pairs()?
                .into_iter()
                .find(|p| p.anchor.to_string() == *id)
                .map(|p| p.vector)
                .ok_or_else(|| {
                    CliError::Config(format!("initial eigenfunction: no anchor `{id}`"))
                }),
        }
    }

    fn leaves_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "leaf_id",
            "component",
            "orbit",
            "vertex",
            "center",
            "rho",
            "mass",
            "mass_exact",
        ]);
        let mut id = 0;
        for c in &self.model.components {
            let d = &c.partition;
            for (i, leaf) in d.leaves.iter().enumerate() {
                csv.row(&[
                    id.to_string(),
                    c.index.to_string(),
                    leaf.orbit.to_string(),
                    leaf.vertex.to_string(),
                    d.leaf_center(i).to_string(),
                    d.leaf_disc(i).rho.to_string(),
                    fmt_f64(self.matrix.mu[id]),
                    d.leaf_mu(i).to_string(),
                ]);
                id += 1;
            }
        }
        csv
    }
}

fn times_nonnegative(times: &[f64], field: &str) -> Result<(), CliError> {
    match times.iter().find(|t| !(**t >= 0.0)) {
        Some(t) => Err(CliError::Config(format!(
            "{field}: time {t} must be nonnegative"
        ))),
        None => Ok(()),
    }
}

fn condition_name(c: Condition) -> &'static str {
    match c {
        Condition::Dirichlet => "dirichlet",
        Condition::VonNeumann => "von_neumann",
    }
}

fn status_name(s: DiagonalStatus) -> &'static str {
    match s {
        DiagonalStatus::Converged => "converged",
        DiagonalStatus::Diverged => "diverged",
        DiagonalStatus::Inconclusive => "inconclusive",
    }
}

struct Failure {
    code: i32,
    detail: Value,
}

pub fn validate(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<i32, CliError> {
    let mut failures: Vec<Failure> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut components = Vec::new();
    let mut configs = Vec::new();
    for (i, block) in config.components.iter().enumerate() {
        let c = match block.to_config(i) {
            Ok(c) => c,
            Err(e) => {
                failures.push(Failure {
                    code: e.exit_code(),
                    detail: json!({"component": i, "check": "schema", "message": e.to_string()}),
                });
                components.push(json!({"index": i, "parsed": false}));
                continue;
            }
        };
        let report = validate_fundamental_domain(&c.group, &c.fundamental_domain, None);
        for f in report.failures() {
            let what = match f {
                CheckEntry::Disjointness { first, second, .. } => {
                    format!("discs {first} and {second} overlap")
                }
                CheckEntry::Pairing { generator, .. } => {
                    format!("generator {generator} does not map the complement of disc {generator} onto disc {}", generator + c.group.genus())
                }
            };
            failures.push(Failure {
                code: 2,
                detail: json!({"component": i, "check": "fundamental_domain", "message": what}),
            });
        }
        let conv = c.convergence();
        if !conv.sharp {
            failures.push(Failure {
                code: 3,
                detail: json!({"component": i, "check": "convergence", "message": format!("(2g-1) p^-alpha >= 1 at alpha = {}", c.alpha)}),
            });
        } else if !conv.coarse {
            warnings.push(format!(
                "component {i}: p^alpha <= 2g at alpha = {}; the counting bound (2g)^l does not converge but the sharp condition (2g-1) p^-alpha < 1 holds",
                c.alpha
            ));
        }
        let built = match c.build(i, config.numerics.depth) {
            Ok(comp) => {
                json!({"ok": true, "leaves": comp.num_leaves(), "total_mass": comp.total_mass().to_string()})
            }
            Err(e) => {
                let e = CliError::from(e);
                failures.push(Failure {
                    code: e.exit_code(),
                    detail: json!({"component": i, "check": "partition", "message": e.to_string()}),
                });
                json!({"ok": false})
            }
        };
        components.push(json!({
            "index": i,
            "parsed": true,
            "prime": c.group.prime().get(),
            "genus": c.group.genus(),
            "alpha": c.alpha.to_string(),
            "fundamental_domain_valid": report.valid,
            "convergence": {"sharp": conv.sharp, "coarse": conv.coarse},
            "partition": built,
        }));
        configs.push(c);
    }
    let coupling = match config.coupling() {
        Ok(c) => Some(c),
        Err(e) => {
            failures.push(Failure {
                code: e.exit_code(),
                detail: json!({"check": "coupling", "message": e.to_string()}),
            });
            None
        }
    };
    if let (Some(coupling), true) = (coupling, failures.is_empty()) {
        if let Err(e) = bundle.timed("model", || {
            Model::build(&configs, coupling, config.numerics.depth, config.options())
        }) {
            let e = CliError::from(e);
            failures.push(Failure {
                code: e.exit_code(),
                detail: json!({"check": "operator", "message": e.to_string()}),
            });
        }
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for f in &failures {
        eprintln!(
            "error: {}",
            f.detail["message"].as_str().unwrap_or_default()
        );
    }
    let valid = failures.is_empty();
    bundle.write_json(
        "validation.json",
        &json!({
            "valid": valid,
            "components": components,
            "warnings": warnings,
            "failures": failures.iter().map(|f| f.detail.clone()).collect::<Vec<_>>(),
        }),
    )?;
    Ok(if valid {
        0
    } else if failures.iter().any(|f| f.code == 2) {
        2
    } else {
        3
    })
}

pub fn spectrum(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<i32, CliError> {
    let prep = Prepared::build(config, bundle)?;
    let entries = bundle.timed("spectrum", || full_spectrum(&prep.model, &prep.matrix))?;
    let mut csv = Csv::new(&[
        "component",
        "anchor_id",
        "depth",
        "eigenvalue",
        "multiplicity",
        "tail_bound",
    ]);
    for e in &entries {
        csv.row(&[
            e.component.to_string(),
            e.anchor.to_string(),
            e.depth.to_string(),
            fmt_f64(e.eigenvalue),
            e.multiplicity.to_string(),
            fmt_f64(e.tail_bound),
        ]);
    }
    bundle.write_csv("leaves.csv", &prep.leaves_csv())?;
    bundle.write_csv("spectrum.csv", &csv)?;
    Ok(0)
}

pub fn heat(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<i32, CliError> {
    let block = config
        .heat
        .as_ref()
        .ok_or_else(|| CliError::Config("the heat command needs a `heat` block".into()))?;
    times_nonnegative(&block.times, "heat.times")?;
    let prep = Prepared::build(config, bundle)?;
    let u0 = prep.initial(&block.initial)?;
    let d = prep.decomposition(config.numerics.decomposition, bundle)?;
    let mass0 = total_mass(&u0, &d.mu);
    let mut csv = Csv::new(&["time", "leaf_id", "value"]);
    let mut summary = Vec::new();
    for &t in &block.times {
        let u = solve_cauchy(&u0, t, &d)?;
        let p = transition_matrix(t, &d)?;
        if p.clipped > 0 {
            eprintln!(
                "warning: t = {t}: clipped {} small negative transition entries",
                p.clipped
            );
        }
        for (leaf, v) in u.iter().enumerate() {
            csv.row(&[fmt_f64(t), leaf.to_string(), fmt_f64(*v)]);
        }
        let mass = total_mass(&u, &d.mu);
        summary.push(json!({
            "time": t,
            "mass": mass,
            "mass_defect": (mass - mass0).abs(),
            "l2_norm": d.inner(&u, &u).sqrt(),
            "row_sum_defect": p.row_sum_defect(),
            "detailed_balance_defect": p.detailed_balance_defect(),
            "clipped_entries": p.clipped,
        }));
    }
    bundle.write_csv("leaves.csv", &prep.leaves_csv())?;
    bundle.write_csv("heat.csv", &csv)?;
    bundle.write_json(
        "heat_summary.json",
        &json!({ "initial_mass": mass0, "times": summary }),
    )?;
    Ok(0)
}

pub fn kernel(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<i32, CliError> {
    let block = config
        .kernel
        .as_ref()
        .ok_or_else(|| CliError::Config("the kernel command needs a `kernel` block".into()))?;
    times_nonnegative(&block.times, "kernel.times")?;
    let prep = Prepared::build(config, bundle)?;
    let n = prep.n();
    let pairs: Vec<[usize; 2]> = match &block.pairs {
        Some(p) => p.clone(),
        None => (0..n).flat_map(|x| (0..n).map(move |y| [x, y])).collect(),
    };
    if let Some([x, y]) = pairs.iter().find(|[x, y]| *x >= n || *y >= n) {
        return Err(CliError::Config(format!(
            "kernel.pairs: ({x}, {y}) is outside the {n} leaves"
        )));
    }
    let d = prep.decomposition(config.numerics.decomposition, bundle)?;
    let mut csv = Csv::new(&[
        "time",
        "x",
        "y",
        "value",
        "transition",
        "status",
        "threshold",
    ]);
    for &t in &block.times {
        let p = transition_matrix(t, &d)?;
        for &[x, y] in &pairs {
            let k = heat_kernel(t, x, y, &d)?;
            let (status, threshold) = match &k.diagnostic {
                Some(g) => (status_name(g.status), fmt_f64(g.threshold)),
                None => ("finite", String::new()),
            };
            csv.row(&[
                fmt_f64(t),
                x.to_string(),
                y.to_string(),
                fmt_f64(k.value),
                fmt_f64(p.matrix[(x, y)]),
                status.to_string(),
                threshold,
            ]);
        }
    }
    bundle.write_csv("leaves.csv", &prep.leaves_csv())?;
    bundle.write_csv("kernel.csv", &csv)?;
    Ok(0)
}

pub fn sample(
    config: &ExperimentConfig,
    seed: Option<u64>,
    bundle: &mut Bundle,
) -> Result<i32, CliError> {
    let block = config
        .sample
        .as_ref()
        .ok_or_else(|| CliError::Config("the sample command needs a `sample` block".into()))?;
    let seed = seed.unwrap_or(block.seed);
    let prep = Prepared::build(config, bundle)?;
    if block.start >= prep.n() {
        return Err(CliError::Config(format!(
            "sample.start: no leaf {}",
            block.start
        )));
    }
    let chain = JumpChain::new(&prep.matrix);
    let paths = bundle.timed("sampling", || {
        sample_paths(block.start, block.horizon, seed, block.paths, &chain)
    })?;
    let mut csv = Csv::new(&["path_id", "jump_time", "leaf_id"]);
    for p in &paths {
        csv.row(&[
            p.path_index.to_string(),
            fmt_f64(0.0),
            p.initial.to_string(),
        ]);
        for (t, s) in p.jump_times.iter().zip(&p.states) {
            csv.row(&[p.path_index.to_string(), fmt_f64(*t), s.to_string()]);
        }
    }
    let d = prep.decomposition(config.numerics.decomposition, bundle)?;
    let exact = transition_matrix(block.horizon, &d)?.row(block.start);
    let law = empirical_law(&paths, prep.n());
    let mut law_csv = Csv::new(&["leaf_id", "empirical", "transition"]);
    for (leaf, (e, q)) in law.iter().zip(&exact).enumerate() {
        law_csv.row(&[leaf.to_string(), fmt_f64(*e), fmt_f64(*q)]);
    }
    bundle.write_csv("leaves.csv", &prep.leaves_csv())?;
    bundle.write_csv("paths.csv", &csv)?;
    bundle.write_csv("law.csv", &law_csv)?;
    bundle.write_json(
        "sample_summary.json",
        &json!({
            "seed": seed,
            "paths": block.paths,
            "start": block.start,
            "horizon": block.horizon,
            "jumps": paths.iter().map(|p| p.jump_times.len()).sum::<usize>(),
            "total_variation": total_variation(&law, &exact),
        }),
    )?;
    Ok(0)
}

pub fn bvp(config: &ExperimentConfig, bundle: &mut Bundle) -> Result<i32, CliError> {
    let block = config
        .bvp
        .as_ref()
        .ok_or_else(|| CliError::Config("the bvp command needs a `bvp` block".into()))?;
    times_nonnegative(&block.times, "bvp.times")?;
    let prep = Prepared::build(config, bundle)?;
    let region = Region::new(prep.n(), block.region.iter().copied())?;
    let u0 = prep.initial(&block.initial)?;
    let d = prep.decomposition(config.numerics.decomposition, bundle)?;
    let condition: Condition = block.condition.into();
    let boundary = vertex_boundary(&region, &prep.matrix);
    let edges = edge_boundary(&region, &prep.matrix).len();
    bundle.write_csv("leaves.csv", &prep.leaves_csv())?;
    let outcome = bundle.timed("bvp", || {
        solve_bvp(&u0, &region, condition, &block.times, &d, &prep.matrix)
    })?;
    let sol = match outcome {
        BvpOutcome::UnsupportedInitialData { leaves_outside } => {
            bundle.write_json(
                "bvp_report.json",
                &json!({
                    "condition": condition_name(condition),
                    "supported": false,
                    "violations": [],
                    "solution_csv_path": Value::Null,
                    "leaves_outside": leaves_outside,
                    "vertex_boundary": boundary,
                    "edge_boundary_size": edges,
                }),
            )?;
            eprintln!("{}", CliError::UnsupportedInitialData(leaves_outside));
            return Ok(4);
        }
        BvpOutcome::Solved(sol) => sol,
    };
    let mut csv = Csv::new(&["time", "leaf_id", "value", "in_region"]);
    for (t, u) in sol.times.iter().zip(&sol.solutions) {
        for (leaf, v) in u.iter().enumerate() {
            csv.row(&[
                fmt_f64(*t),
                leaf.to_string(),
                fmt_f64(*v),
                u8::from(region.contains(leaf)).to_string(),
            ]);
        }
    }
    bundle.write_csv("bvp_solution.csv", &csv)?;
    let violations: Vec<Value> = sol
        .violations
        .iter()
        .map(|v| match v {
            Violation::Leak { t, max_outside } => {
                json!({"kind": "leak", "time": t, "max_outside": max_outside})
            }
            Violation::Boundary { t, condition } => {
                json!({"kind": "boundary", "time": t, "condition": condition_name(*condition)})
            }
        })
        .collect();
    if !violations.is_empty() {
        eprintln!(
            "warning: {} boundary or confinement violations, see bvp_report.json",
            violations.len()
        );
    }
    bundle.write_json(
        "bvp_report.json",
        &json!({
            "condition": condition_name(condition),
            "supported": true,
            "violations": violations,
            "solution_csv_path": "bvp_solution.csv",
            "max_outside": sol.max_outside,
            "vertex_boundary": boundary,
            "edge_boundary_size": edges,
        }),
    )?;
    Ok(0)
}
