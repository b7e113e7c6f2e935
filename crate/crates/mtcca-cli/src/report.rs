//! Report document structures and command execution.
//!
//! Every run produces one JSON document: a config echo plus the command's
//! results. Serialization uses shortest-round-trip float formatting, so a
//! re-parsed report reproduces every numeric field exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mtcca::experiments::{
    run_monte_carlo, Method, MethodConfig, ModelName, MonteCarloConfig, MonteCarloSummary,
    SimulationModel,
};
use mtcca::graph::{
    build_graph, closest_graph_by_edit_distance, lambda_grid, symmetric_difference,
    DependencyGraph,
};
use mtcca::param_select::{select_parameters, SearchKind, SelectConfig, SelectionResult};
use mtcca::significance::{
    permutation_test_all_orders, PermutationConfig, SignificanceReport, SpecStrategy,
};
use mtcca::solver::{mtcca, CcaSolution};
use mtcca::{MtFunctionSpec, PairedSample};

use crate::config::{Command, MtFamily, RunConfig};
use crate::error::CliError;
use crate::ingest;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigEcho {
    pub command: String,
    pub mt_family: String,
    pub inputs: Vec<String>,
    pub n_samples: usize,
    pub n_trials: usize,
    pub m_permutations: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    pub n_starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub full_scale: bool,
}

impl ConfigEcho {
    fn from(config: &RunConfig) -> Self {
        Self {
            command: match config.command {
                Command::Simulate => "simulate",
                Command::Analyze => "analyze",
                Command::Graph => "graph",
            }
            .into(),
            mt_family: config.mt_family.name().into(),
            inputs: config.inputs.clone(),
            n_samples: config.n_samples,
            n_trials: config.effective_trials(),
            m_permutations: config.effective_permutations(),
            alpha: config.alpha,
            lambda: config.lambda,
            seed: config.seed,
            n_starts: config.n_starts,
            max_iters: config.max_iters,
            tol: config.tol,
            full_scale: config.full_scale,
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct OrderReport {
    pub order: usize,
    pub mean_rho: f64,
    pub std_rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_a_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_a_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_b_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment_b_std: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SimulateReport {
    pub config: ConfigEcho,
    pub model: String,
    pub method: String,
    pub n_trials: usize,
    pub n_failures: usize,
    pub orders: Vec<OrderReport>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PValueReport {
    pub order: usize,
    pub theta0: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub start: usize,
    pub iteration: usize,
    pub psi: f64,
    pub step_norm: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SpecReport {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl SpecReport {
    fn from(spec: &MtFunctionSpec) -> Self {
        match spec {
            MtFunctionSpec::Identity => Self {
                family: "identity".into(),
                s: None,
                t: None,
                sigma: None,
                tau: None,
            },
            MtFunctionSpec::Exponential { s, t } => Self {
                family: "exponential".into(),
                s: Some(s.iter().copied().collect()),
                t: Some(t.iter().copied().collect()),
                sigma: None,
                tau: None,
            },
            MtFunctionSpec::Gaussian { s, t, sigma, tau } => Self {
                family: "gaussian".into(),
                s: Some(s.iter().copied().collect()),
                t: Some(t.iter().copied().collect()),
                sigma: Some(*sigma),
                tau: Some(*tau),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    pub spec_used: SpecReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_star: Option<f64>,
    pub effective_sample_fraction: f64,
    pub log_weight_max: f64,
    pub min_eig_sigma_x: f64,
    pub min_eig_sigma_y: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct AnalyzeReport {
    pub config: ConfigEcho,
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    pub n_observations: usize,
    pub coefficients: Vec<f64>,
    /// Direction matrices as lists of columns: `a[k]` pairs with `b[k]`.
    pub directions_a: Vec<Vec<f64>>,
    pub directions_b: Vec<Vec<f64>>,
    pub p_values: Vec<PValueReport>,
    pub psi_trace: Vec<TraceRow>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphReport {
    pub config: ConfigEcho,
    pub labels: Vec<String>,
    /// Row-major symmetric matrix of pairwise first-order coefficients.
    pub coefficients: Vec<Vec<f64>>,
    pub lambda: f64,
    pub edges: Vec<(usize, usize)>,
    /// Linear-CCA baseline and its closest graph over the lambda grid.
    pub lcca_coefficients: Vec<Vec<f64>>,
    pub lcca_closest_lambda: f64,
    pub lcca_closest_edges: Vec<(usize, usize)>,
    pub edit_distance: usize,
    pub edges_only_here: Vec<(usize, usize)>,
    pub edges_only_lcca: Vec<(usize, usize)>,
}

/// Top-level report: exactly one variant per command.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Report {
    Simulate(SimulateReport),
    Analyze(Box<AnalyzeReport>),
    Graph(GraphReport),
}

fn model_from_name(name: &str) -> Result<ModelName, CliError> {
    match name {
        "example1" => Ok(ModelName::Example1),
        "example2" => Ok(ModelName::Example2),
        "null" | "independent" => Ok(ModelName::IndependentNull),
        other => Err(CliError::Usage(format!(
            "unknown model `{other}` (expected example1, example2, or null)"
        ))),
    }
}

fn method_for_family(family: MtFamily) -> Method {
    match family {
        MtFamily::Identity => Method::Lcca,
        MtFamily::Exponential => Method::MtccaExponential,
        MtFamily::Gaussian => Method::MtccaGaussian,
    }
}

fn summary_to_report(config: &RunConfig, model: &str, s: &MonteCarloSummary) -> SimulateReport {
    SimulateReport {
        config: ConfigEcho::from(config),
        model: model.into(),
        method: s.label.clone(),
        n_trials: s.n_trials,
        n_failures: s.n_failures,
        orders: s
            .orders
            .iter()
            .map(|o| OrderReport {
                order: o.order_k,
                mean_rho: o.mean_rho,
                std_rho: o.std_rho,
                mean_p: o.mean_p,
                rejection_rate: o.rejection_rate,
                alignment_a_mean: o.alignment_a.map(|m| m.mean),
                alignment_a_std: o.alignment_a.map(|m| m.std),
                alignment_b_mean: o.alignment_b.map(|m| m.mean),
                alignment_b_std: o.alignment_b.map(|m| m.std),
            })
            .collect(),
    }
}

fn run_simulate(config: &RunConfig) -> Result<Report, CliError> {
    let [model_name] = config.inputs.as_slice() else {
        return Err(CliError::Usage(
            "simulate expects exactly one model name".into(),
        ));
    };
    let name = model_from_name(model_name)?;
    let model = SimulationModel::new(name, config.n_samples, config.seed);
    let method = MethodConfig {
        label: config.mt_family.name().into(),
        method: method_for_family(config.mt_family),
        select: config.select_config(),
        reselect: SelectConfig {
            tol: config.tol,
            ..SelectConfig::fast()
        },
    };
    let mc = MonteCarloConfig {
        n_trials: config.effective_trials(),
        m_permutations: config.effective_permutations(),
        alpha: config.alpha,
        seed: config.seed,
        run_permutation_tests: true,
    };
    let summaries = run_monte_carlo(&model, std::slice::from_ref(&method), &mc)?;
    Ok(Report::Simulate(summary_to_report(
        config,
        model_name,
        &summaries[0],
    )))
}

/// Fits the configured family on one sample: optional parameter selection,
/// the pencil solve, and the matching permutation strategy.
fn fit_family(
    sample: &PairedSample,
    family: MtFamily,
    select: &SelectConfig,
) -> Result<(CcaSolution, Option<SelectionResult>, SpecStrategy), CliError> {
    match family {
        MtFamily::Identity => Ok((
            mtcca(sample, &MtFunctionSpec::Identity)?,
            None,
            SpecStrategy::Identity,
        )),
        MtFamily::Exponential | MtFamily::Gaussian => {
            let kind = match family {
                MtFamily::Exponential => SearchKind::ExponentialQuadratic,
                _ => SearchKind::GaussianPercentileBox,
            };
            let selection = select_parameters(sample, kind, select)?;
            let solution = mtcca(sample, &selection.spec_star)?;
            let strategy = SpecStrategy::Reselect {
                kind,
                config: SelectConfig {
                    tol: select.tol,
                    ..SelectConfig::fast()
                },
            };
            Ok((solution, Some(selection), strategy))
        }
    }
}

fn run_analyze(config: &RunConfig) -> Result<(Report, Option<String>), CliError> {
    let sample = ingest::ingest(&config.inputs)?;
    let (solution, selection, strategy) = fit_family(
        &sample,
        config.mt_family,
        &config.select_config(),
    )?;
    let perm = PermutationConfig {
        m_permutations: config.effective_permutations(),
        alpha: config.alpha,
        seed: config.seed,
        retain_null: false,
    };
    let reports: Vec<SignificanceReport> =
        permutation_test_all_orders(&sample, &strategy, &perm)?;

    let moments = mtcca::transformed_moments(&sample, &solution.spec_used)?;
    let psi_trace = selection
        .as_ref()
        .map(|sel| {
            sel.trace
                .iter()
                .enumerate()
                .flat_map(|(start, steps)| {
                    steps.iter().map(move |s| TraceRow {
                        start,
                        iteration: s.iteration,
                        psi: s.psi,
                        step_norm: s.step_norm,
                    })
                })
                .collect()
        })
        .unwrap_or_default();

    // Scatter data for the first-order canonical variates.
    let a1 = solution.a_dirs.column(0);
    let b1 = solution.b_dirs.column(0);
    let mut scatter = String::from("u1,v1\n");
    for i in 0..sample.n() {
        let u = sample.x().row(i).transpose().dot(&a1);
        let v = sample.y().row(i).transpose().dot(&b1);
        scatter.push_str(&format!("{u},{v}\n"));
    }

    let report = AnalyzeReport {
        config: ConfigEcho::from(config),
        x_labels: sample.x_labels().to_vec(),
        y_labels: sample.y_labels().to_vec(),
        n_observations: sample.n(),
        coefficients: solution.rho.iter().copied().collect(),
        directions_a: (0..solution.order())
            .map(|k| solution.a_dirs.column(k).iter().copied().collect())
            .collect(),
        directions_b: (0..solution.order())
            .map(|k| solution.b_dirs.column(k).iter().copied().collect())
            .collect(),
        p_values: reports
            .iter()
            .map(|r| PValueReport {
                order: r.order_k,
                theta0: r.theta0,
                p_value: r.p_value,
                significant: r.significant(),
            })
            .collect(),
        psi_trace,
        diagnostics: Diagnostics {
            spec_used: SpecReport::from(&solution.spec_used),
            psi_star: selection.as_ref().map(|s| s.psi_star),
            effective_sample_fraction: moments.effective_sample_fraction,
            log_weight_max: moments.log_weight_max,
            min_eig_sigma_x: solution.conditioning.0,
            min_eig_sigma_y: solution.conditioning.1,
        },
    };
    Ok((Report::Analyze(Box::new(report)), Some(scatter)))
}

fn file_stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string())
}

fn run_graph(config: &RunConfig) -> Result<Report, CliError> {
    if config.inputs.len() < 2 {
        return Err(CliError::Usage(
            "graph expects at least two CSV paths, one entity per file".into(),
        ));
    }
    let tables: Vec<ingest::NumericTable> = config
        .inputs
        .iter()
        .map(|p| ingest::read_table(Path::new(p)))
        .collect::<Result<_, _>>()?;
    let labels: Vec<String> = config.inputs.iter().map(|p| file_stem(p)).collect();
    let n_entities = tables.len();

    let matrices: Vec<nalgebra::DMatrix<f64>> = tables
        .iter()
        .map(|t| {
            nalgebra::DMatrix::from_fn(t.rows.len(), t.labels.len(), |i, j| t.rows[i][j])
        })
        .collect();

    let pairwise = |family: MtFamily| -> Result<nalgebra::DMatrix<f64>, CliError> {
        let mut coeff = nalgebra::DMatrix::zeros(n_entities, n_entities);
        for i in 0..n_entities {
            for j in (i + 1)..n_entities {
                if matrices[i].nrows() != matrices[j].nrows() {
                    return Err(CliError::RowCountMismatch {
                        x_rows: matrices[i].nrows(),
                        y_rows: matrices[j].nrows(),
                    });
                }
                let sample = PairedSample::new(
                    matrices[i].clone(),
                    matrices[j].clone(),
                    tables[i].labels.clone(),
                    tables[j].labels.clone(),
                )
                .map_err(CliError::Module)?;
                let (solution, _, _) = fit_family(&sample, family, &config.select_config())?;
                coeff[(i, j)] = solution.rho1();
                coeff[(j, i)] = solution.rho1();
            }
        }
        Ok(coeff)
    };

    let coeff = pairwise(config.mt_family)?;
    let family_graph = build_graph(&coeff, &labels, config.lambda);

    let lcca_coeff = pairwise(MtFamily::Identity)?;
    let grid = lambda_grid(101);
    let (lcca_closest, distance) =
        closest_graph_by_edit_distance(&family_graph, &lcca_coeff, &labels, &grid)
            .map_err(CliError::Module)?;
    let (only_here, only_lcca) =
        symmetric_difference(&family_graph, &lcca_closest).map_err(CliError::Module)?;

    let to_rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect()
    };
    let edges = |g: &DependencyGraph| -> Vec<(usize, usize)> { g.edges.iter().copied().collect() };

    Ok(Report::Graph(GraphReport {
        config: ConfigEcho::from(config),
        labels,
        coefficients: to_rows(&coeff),
        lambda: config.lambda,
        edges: edges(&family_graph),
        lcca_coefficients: to_rows(&lcca_coeff),
        lcca_closest_lambda: lcca_closest.lambda,
        lcca_closest_edges: edges(&lcca_closest),
        edit_distance: distance,
        edges_only_here: only_here,
        edges_only_lcca: only_lcca,
    }))
}

/// Path for the scatter side-file: the report name with a `.scatter.csv`
/// suffix.
pub fn scatter_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.scatter.csv"))
}

/// Executes the configured command and writes its artifacts. Returns the
/// report document that was emitted.
pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    let (report, scatter) = match config.command {
        Command::Simulate => (run_simulate(config)?, None),
        Command::Analyze => {
            let (r, s) = run_analyze(config)?;
            (r, s)
        }
        Command::Graph => (run_graph(config)?, None),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &config.out {
        Some(path) => {
            fs::write(path, json.as_bytes()).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if let Some(scatter) = scatter {
                let spath = scatter_path(path);
                fs::write(&spath, scatter.as_bytes()).map_err(|e| CliError::Io {
                    path: spath.display().to_string(),
                    message: e.to_string(),
                })?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(json.as_bytes()).ok();
            stdout.write_all(b"\n").ok();
        }
    }
    Ok(report)
}
