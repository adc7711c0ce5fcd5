//! Experiment configuration: a strict TOML schema plus command-line overrides.
//!
//! A file is parsed into [`ConfigFile`] (every key optional, unknown keys
//! rejected), merged with [`Overrides`], and resolved into an
//! [`ExperimentConfig`] in which every default has been filled in. The resolved
//! form is what gets echoed into `summary.json`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use quartic_core::functions::TestFunction;
use quartic_core::verify::{BnTolerances, ExpansionTolerances, ItoTolerances, TrapezoidTolerances};
use quartic_core::CovKernel;
use serde::{Deserialize, Serialize};

use crate::LabError;

/// Default master seed when neither the file nor the command line sets one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Ito,
    Bn,
    Trapezoid,
    Expansion,
    FbmWindow,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] =
        [ExperimentKind::Ito, ExperimentKind::Bn, ExperimentKind::Trapezoid, ExperimentKind::Expansion, ExperimentKind::FbmWindow];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ito => "ito",
            ExperimentKind::Bn => "bn",
            ExperimentKind::Trapezoid => "trapezoid",
            ExperimentKind::Expansion => "expansion",
            ExperimentKind::FbmWindow => "fbm-window",
        }
    }

    /// Trapezoid and expansion compare several resolutions; the rest use one.
    fn multi_resolution(self) -> bool {
        matches!(self, ExperimentKind::Trapezoid | ExperimentKind::Expansion)
    }

    fn uses_function(self) -> bool {
        self != ExperimentKind::Bn
    }

    fn default_kernel(self) -> CovKernel {
        match self {
            ExperimentKind::FbmWindow => CovKernel::fbm_decomposition(),
            _ => CovKernel::Heat,
        }
    }

    fn default_replicates(self) -> usize {
        match self {
            ExperimentKind::Trapezoid | ExperimentKind::Expansion => 200,
            _ => 1000,
        }
    }

    /// `(repeats, min_passing)`.
    fn default_repeats(self) -> (usize, usize) {
        match self {
            ExperimentKind::Ito | ExperimentKind::FbmWindow => (3, 2),
            _ => (1, 1),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ExperimentKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment `{s}`, expected one of {}", names.join(", "))
        })
    }
}

/// Tolerance overrides. Which keys apply depends on the experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub ks_max: Option<f64>,
    pub mean_diff_max: Option<f64>,
    pub var_ratio_max: Option<f64>,
    pub corr_max: Option<f64>,
    pub final_relative_mse: Option<f64>,
    pub allowed_inversions: Option<usize>,
}

/// The file as written. All keys are optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<ExperimentKind>,
    pub kernel: Option<CovKernel>,
    pub c: Option<f64>,
    pub g: Option<String>,
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    #[serde(alias = "M")]
    pub replicates: Option<usize>,
    #[serde(alias = "T")]
    pub horizon: Option<f64>,
    pub probes: Option<Vec<f64>>,
    pub window_start: Option<f64>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub min_passing: Option<usize>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    pub output_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, LabError> {
        toml::from_str(text).map_err(|e| LabError::Config { field: "<file>".into(), message: e.message().to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config { field: "<file>".into(), message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text).map_err(|e| match e {
            LabError::Config { message, .. } => LabError::Config { field: path.display().to_string(), message },
            other => other,
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub n: Option<usize>,
    pub ns: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Tolerances {
    Ito(ItoTolerances),
    Bn(BnTolerances),
    Trapezoid(TrapezoidTolerances),
    Expansion(ExpansionTolerances),
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub kernel: CovKernel,
    pub g: Option<TestFunction>,
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub horizon: f64,
    pub probes: Vec<f64>,
    pub window_start: Option<f64>,
    pub seed: u64,
    pub repeats: usize,
    pub min_passing: usize,
    pub tolerances: Tolerances,
    /// Where artifacts go; not part of the summary, so that reruns into
    /// different directories produce identical files.
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

fn bad(field: &str, message: impl Into<String>) -> LabError {
    LabError::Config { field: field.into(), message: message.into() }
}

fn positive(field: &str, v: f64) -> Result<f64, LabError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

/// Applies `c` to the kernel: a bare heat kernel becomes `c F`, a composite
/// gets its scale replaced.
fn apply_scale(kernel: CovKernel, c: f64) -> Result<CovKernel, LabError> {
    if !c.is_finite() {
        return Err(bad("c", format!("must be finite, got {c}")));
    }
    match kernel {
        CovKernel::Heat => Ok(CovKernel::Composite { c, components: vec![CovKernel::Heat], mean: None }),
        CovKernel::Composite { components, mean, .. } => Ok(CovKernel::Composite { c, components, mean }),
        other => Err(bad("c", format!("kernel `{}` has no heat component to scale", other.id()))),
    }
}

impl ExperimentConfig {
    /// Merges `file` and `over` and fills in the defaults for the experiment.
    pub fn resolve(file: ConfigFile, over: Overrides) -> Result<Self, LabError> {
        let experiment = match (over.experiment, file.experiment) {
            (Some(a), Some(b)) if a != b => {
                return Err(bad("experiment", format!("command line says `{a}` but the file says `{b}`")))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(bad("experiment", "missing; set it in the file or pass --experiment")),
        };

        let ns = resolve_resolutions(experiment, &file, &over)?;

        let mut kernel = file.kernel.unwrap_or_else(|| experiment.default_kernel());
        if let Some(c) = file.c {
            kernel = apply_scale(kernel, c)?;
        }
        kernel.validate().map_err(|e| bad("kernel", e.to_string()))?;

        let g = match (experiment.uses_function(), file.g) {
            (false, Some(_)) => return Err(bad("g", format!("experiment `{experiment}` takes no test function"))),
            (false, None) => None,
            (true, None) => Some(TestFunction::Square),
            (true, Some(s)) => Some(s.parse::<TestFunction>().map_err(|e| bad("g", e.to_string()))?),
        };


        let replicates = over.replicates.or(file.replicates).unwrap_or(experiment.default_replicates());
        if replicates < 4 {
            return Err(bad("replicates", format!("need at least 4, got {replicates}")));
        }

        let horizon = positive("horizon", file.horizon.unwrap_or(1.0))?;
        let probes = resolve_probes(experiment, file.probes, horizon)?;

        let window_start = match (experiment, file.window_start) {
            (ExperimentKind::FbmWindow, w) => Some(w.unwrap_or(0.1)),
            (ExperimentKind::Ito, w) => w,
            (_, Some(_)) => return Err(bad("window_start", format!("experiment `{experiment}` has no window"))),
            (_, None) => None,
        };
        if let Some(w) = window_start {
            if !(w >= 0.0 && w < probes[0]) {
                return Err(bad("window_start", format!("must lie in [0, {}) (the first probe), got {w}", probes[0])));
            }
        }

        let (default_repeats, default_min) = experiment.default_repeats();
        let repeats = file.repeats.unwrap_or(default_repeats);
        let min_passing = file.min_passing.unwrap_or(if file.repeats.is_some() { repeats } else { default_min });
        if repeats == 0 {
            return Err(bad("repeats", "must be at least 1"));
        }
        if min_passing == 0 || min_passing > repeats {
            return Err(bad("min_passing", format!("must lie in 1..={repeats}, got {min_passing}")));
        }

        let tolerances = resolve_tolerances(experiment, &file.tolerances)?;

        Ok(Self {
            experiment,
            kernel,
            g,
            ns,
            replicates,
            horizon,
            probes,
            window_start,
            seed: over.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            repeats,
            min_passing,
            tolerances,
            output_dir: over.output_dir.or(file.output_dir),
        })
    }

    /// The single resolution of a one-resolution experiment.
    pub fn n(&self) -> usize {
        *self.ns.last().expect("resolution list is never empty")
    }
}

fn resolve_resolutions(experiment: ExperimentKind, file: &ConfigFile, over: &Overrides) -> Result<Vec<usize>, LabError> {
    let ns = if experiment.multi_resolution() {
        if over.n.is_some() {
            return Err(bad("n", format!("experiment `{experiment}` compares resolutions; use --ns")));
        }
        if file.n.is_some() {
            return Err(bad("n", format!("experiment `{experiment}` compares resolutions; use `ns = [...]`")));
        }
        over.ns.clone().or_else(|| file.ns.clone()).unwrap_or_else(|| vec![256, 1024, 4096])
    } else {
        if over.ns.is_some() {
            return Err(bad("ns", format!("experiment `{experiment}` runs at one resolution; use --n")));
        }
        if file.ns.is_some() {
            return Err(bad("ns", format!("experiment `{experiment}` runs at one resolution; use `n = ...`")));
        }
        vec![over.n.or(file.n).unwrap_or(4096)]
    };
    if ns.is_empty() {
        return Err(bad("ns", "must not be empty"));
    }
    if let Some(&n) = ns.iter().find(|&&n| n < 2) {
        return Err(bad(if experiment.multi_resolution() { "ns" } else { "n" }, format!("resolutions must be at least 2, got {n}")));
    }
    Ok(ns)
}

/// Sorted, deduplicated probe times in `(0, T]`; `T` itself is always included
/// since the grid spans `[0, T]`.
fn resolve_probes(experiment: ExperimentKind, probes: Option<Vec<f64>>, horizon: f64) -> Result<Vec<f64>, LabError> {
    let mut probes = probes.unwrap_or_else(|| vec![horizon]);
    if let Some(&p) = probes.iter().find(|&&p| !(p > 0.0 && p <= horizon)) {
        return Err(bad("probes", format!("probe times must lie in (0, {horizon}], got {p}")));
    }
    probes.sort_by(f64::total_cmp);
    probes.dedup();
    if probes.last() != Some(&horizon) {
        probes.push(horizon);
    }
    if experiment == ExperimentKind::Expansion && probes.len() > 1 {
        return Err(bad("probes", "the expansion experiment evaluates at T only"));
    }
    Ok(probes)
}

fn resolve_tolerances(experiment: ExperimentKind, t: &ToleranceOverrides) -> Result<Tolerances, LabError> {
    let allowed: &[&str] = match experiment {
        ExperimentKind::Ito | ExperimentKind::FbmWindow => &["ks_max", "mean_diff_max", "var_ratio_max"],
        ExperimentKind::Bn => &["ks_max", "corr_max"],
        ExperimentKind::Trapezoid => &["final_relative_mse", "allowed_inversions"],
        ExperimentKind::Expansion => &["allowed_inversions"],
    };
    let set = [
        ("ks_max", t.ks_max.is_some()),
        ("mean_diff_max", t.mean_diff_max.is_some()),
        ("var_ratio_max", t.var_ratio_max.is_some()),
        ("corr_max", t.corr_max.is_some()),
        ("final_relative_mse", t.final_relative_mse.is_some()),
        ("allowed_inversions", t.allowed_inversions.is_some()),
    ];
    if let Some((name, _)) = set.iter().find(|(name, given)| *given && !allowed.contains(name)) {
        return Err(bad(&format!("tolerances.{name}"), format!("does not apply to experiment `{experiment}`")));
    }
    let pick = |name: &str, v: Option<f64>, default: f64| -> Result<f64, LabError> {
        v.map_or(Ok(default), |v| positive(&format!("tolerances.{name}"), v))
    };
    Ok(match experiment {
        ExperimentKind::Ito | ExperimentKind::FbmWindow => {
            let d = ItoTolerances::default();
            Tolerances::Ito(ItoTolerances {
                ks_max: pick("ks_max", t.ks_max, d.ks_max)?,
                mean_diff_max: pick("mean_diff_max", t.mean_diff_max, d.mean_diff_max)?,
                var_ratio_max: pick("var_ratio_max", t.var_ratio_max, d.var_ratio_max)?,
            })
        }
        ExperimentKind::Bn => {
            let d = BnTolerances::default();
            Tolerances::Bn(BnTolerances {
                ks_max: pick("ks_max", t.ks_max, d.ks_max)?,
                corr_max: pick("corr_max", t.corr_max, d.corr_max)?,
            })
        }
        ExperimentKind::Trapezoid => {
            let d = TrapezoidTolerances::default();
            Tolerances::Trapezoid(TrapezoidTolerances {
                final_relative_mse: pick("final_relative_mse", t.final_relative_mse, d.final_relative_mse)?,
                allowed_inversions: t.allowed_inversions.unwrap_or(d.allowed_inversions),
            })
        }
        ExperimentKind::Expansion => Tolerances::Expansion(ExpansionTolerances {
            allowed_inversions: t.allowed_inversions.unwrap_or(ExpansionTolerances::default().allowed_inversions),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<ExperimentConfig, LabError> {
        ExperimentConfig::resolve(ConfigFile::parse(text)?, Overrides::default())
    }

    fn field_of(e: LabError) -> String {
        match e {
            LabError::Config { field, .. } => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_for_ito() {
        let c = resolve("experiment = \"ito\"").unwrap();
        assert_eq!(c.kernel, CovKernel::Heat);
        assert_eq!(c.g, Some(TestFunction::Square));
        assert_eq!((c.n(), c.replicates, c.repeats, c.min_passing), (4096, 1000, 3, 2));
        assert_eq!(c.probes, vec![1.0]);
        assert_eq!(c.tolerances, Tolerances::Ito(ItoTolerances::default()));
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn aliases_and_tables() {
        let c = resolve(
            r#"
            experiment = "fbm-window"
            M = 50
            T = 2.0
            probes = [1.5, 0.5, 1.5]
            window_start = 0.2
            g = "sine:2"
            [kernel]
            kind = "composite"
            c = 0.5
            components = [{ kind = "heat" }, { kind = "lei_nualart_xi" }]
            [tolerances]
            ks_max = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(c.replicates, 50);
        assert_eq!(c.probes, vec![0.5, 1.5, 2.0]);
        assert_eq!(c.g, Some(TestFunction::Sine { frequency: 2.0 }));
        assert_eq!(c.kernel.heat_scale(), Some(0.5));
        match c.tolerances {
            Tolerances::Ito(t) => assert_eq!((t.ks_max, t.mean_diff_max), (0.2, 0.05)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scale_applies_to_heat_and_composites() {
        let c = resolve("experiment = \"ito\"\nc = 0.0").unwrap();
        assert_eq!(c.kernel.heat_scale(), Some(0.0));
        let e = resolve("experiment = \"ito\"\nc = 1.0\nkernel = { kind = \"brownian_motion\" }").unwrap_err();
        assert_eq!(field_of(e), "c");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = resolve("experiment = \"bn\"\nreplicate = 10").unwrap_err();
        assert!(e.to_string().contains("replicate"), "{e}");
        assert!(resolve("experiment = \"bn\"\n[tolerances]\nks = 0.1").is_err());
        assert!(resolve("experiment = \"bn\"\nkernel = { kind = \"heat\", c = 1.0 }").is_err());
    }

    #[test]
    fn field_level_errors() {
        let cases = [
            ("experiment = \"bn\"\ng = \"square\"", "g"),
            ("experiment = \"bn\"\nprobes = [1.5]", "probes"),
            ("experiment = \"bn\"\nM = 2", "replicates"),
            ("experiment = \"bn\"\nns = [16, 32]", "ns"),
            ("experiment = \"trapezoid\"\nn = 16", "n"),
            ("experiment = \"trapezoid\"\nns = []", "ns"),
            ("experiment = \"ito\"\n[tolerances]\ncorr_max = 0.1", "tolerances.corr_max"),
            ("experiment = \"ito\"\n[tolerances]\nks_max = -0.1", "tolerances.ks_max"),
            ("experiment = \"ito\"\ng = \"nope\"", "g"),
            ("experiment = \"ito\"\nrepeats = 2\nmin_passing = 3", "min_passing"),
            ("experiment = \"ito\"\nwindow_start = 1.0", "window_start"),
            ("experiment = \"bn\"\nwindow_start = 0.1", "window_start"),
            ("experiment = \"expansion\"\nprobes = [0.5]", "probes"),
            ("T = 1.0", "experiment"),
        ];
        for (text, field) in cases {
            assert_eq!(field_of(resolve(text).unwrap_err()), field, "{text}");
        }
    }

    #[test]
    fn overrides_win() {
        let file = ConfigFile::parse("experiment = \"bn\"\nn = 64\nseed = 1").unwrap();
        let over = Overrides { n: Some(128), seed: Some(9), replicates: Some(10), ..Default::default() };
        let c = ExperimentConfig::resolve(file, over).unwrap();
        assert_eq!((c.n(), c.seed, c.replicates), (128, 9, 10));
        let file = ConfigFile::parse("experiment = \"bn\"").unwrap();
        let over = Overrides { experiment: Some(ExperimentKind::Ito), ..Default::default() };
        assert_eq!(field_of(ExperimentConfig::resolve(file, over).unwrap_err()), "experiment");
    }

    #[test]
    fn repeats_given_alone_require_all() {
        let c = resolve("experiment = \"ito\"\nrepeats = 5").unwrap();
        assert_eq!((c.repeats, c.min_passing), (5, 5));
    }

    #[test]
    fn experiment_names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!("fbm_window".parse::<ExperimentKind>().is_err());
    }
}
