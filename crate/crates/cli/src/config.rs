//! Scenario files: TOML, unknown keys rejected, then checked field by field.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spinqe::symbol::named_symbol;
use spinqe::{GridSpec, HamiltonianModel, PauliAxis, SpinCoupling};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelConfig,
    pub grid: GridConfig,
    /// The ħ ladder; spectral diagnostics run once per entry.
    pub hbar: Vec<f64>,
    #[serde(default)]
    pub window: WindowConfig,
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub seeds: Seeds,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Harmonic,
    Quartic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: Option<usize>,
    pub beta: Option<f64>,
    pub energy: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    #[default]
    None,
    /// `c·σ_axis` with constant `c = strength`.
    Constant,
    /// `strength·x₁·σ_axis`.
    AbelianLinear,
    /// `strength·x₁²·σ_axis`.
    AbelianQuadratic,
    /// Zeeman term `−strength·(F x + offset)·σ` with a 3×d matrix `F`.
    MagneticLinear,
    /// `strength·(x × p)·σ`, the spin-orbit form for `φ(r) = r²/2`.
    SpinOrbit,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(default)]
    pub kind: CouplingKind,
    pub axis: Option<String>,
    pub strength: Option<f64>,
    pub field: Option<Vec<Vec<f64>>>,
    pub offset: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize) -> Option<Vec<T>> {
        match self {
            OneOrMany::One(v) => Some(vec![v.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Some(v.clone()),
            OneOrMany::Many(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    /// `L = sqrt(πħN/2)`: equal position and momentum extents.
    #[default]
    Balanced,
    /// Same cell count, extents split in the ratio of the model's box.
    Shell,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Points per axis, one value for the whole ladder or one per ħ.
    pub points: OneOrMany<usize>,
    #[serde(default)]
    pub layout: GridLayout,
    /// Fixed half-width; overrides `layout`.
    pub half_width: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    /// Defaults to the model energy.
    pub energy: Option<f64>,
    /// Window half-width in units of ħ; defaults to 1.
    pub omega: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub symbol: String,
    /// Classical target `(1/2)tr μ_E(B)`; estimated by sampling when absent.
    pub target: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub flow: Option<FlowConfig>,
    pub transport: Option<FlowConfig>,
    pub ergodic: Option<ErgodicConfig>,
    pub szego: Option<SzegoConfig>,
    pub s2: Option<S2Config>,
    pub egorov: Option<EgorovConfig>,
    pub wigner: Option<WignerConfig>,
    pub counterexample: Option<CounterexampleConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    pub t: f64,
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "sigma_3")]
    pub observable: String,
    pub n_base: usize,
    pub n_g: usize,
    pub schedule: Vec<f64>,
    pub mu_trace: Option<f64>,
    #[serde(default)]
    pub require_decreasing: bool,
}

fn sigma_3() -> String {
    "sigma_3".into()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SzegoConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub max_deviation: Option<f64>,
    #[serde(default)]
    pub require_decreasing: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct S2Config {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub max: Option<f64>,
    pub min: Option<f64>,
    #[serde(default)]
    pub require_decreasing: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EgorovConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub symbol: String,
    pub t: f64,
    pub energy_cut: Option<f64>,
    pub min_slope: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Index into the ħ ladder.
    #[serde(default)]
    pub level: usize,
    /// Window states to transform, counted from the bottom of the window.
    #[serde(default = "first")]
    pub states: Vec<usize>,
    #[serde(default = "yes")]
    pub husimi: bool,
    #[serde(default = "one")]
    pub csv_stride: usize,
    #[serde(default)]
    pub equidistribution: bool,
    #[serde(default = "target_samples")]
    pub samples: usize,
}

fn first() -> Vec<usize> {
    vec![0]
}

fn one() -> usize {
    1
}

fn target_samples() -> usize {
    20_000
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub n_base: usize,
    pub n_g: usize,
    pub schedule: Vec<f64>,
    #[serde(default = "min_s2")]
    pub min_s2: f64,
}

fn min_s2() -> f64 {
    0.9
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub ergodic: Option<u64>,
    pub counterexample: Option<u64>,
    /// Shell sampling for classical targets.
    pub targets: Option<u64>,
}

/// One schema diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn parse(text: &str) -> Result<ScenarioConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

fn enabled<T>(o: &Option<T>, f: impl Fn(&T) -> bool) -> Option<&T> {
    o.as_ref().filter(|v| f(v))
}

impl Diagnostics {
    pub fn flow(&self) -> Option<&FlowConfig> {
        enabled(&self.flow, |c| c.enabled)
    }
    pub fn transport(&self) -> Option<&FlowConfig> {
        enabled(&self.transport, |c| c.enabled)
    }
    pub fn ergodic(&self) -> Option<&ErgodicConfig> {
        enabled(&self.ergodic, |c| c.enabled)
    }
    pub fn szego(&self) -> Option<&SzegoConfig> {
        enabled(&self.szego, |c| c.enabled)
    }
    pub fn s2(&self) -> Option<&S2Config> {
        enabled(&self.s2, |c| c.enabled)
    }
    pub fn egorov(&self) -> Option<&EgorovConfig> {
        enabled(&self.egorov, |c| c.enabled)
    }
    pub fn wigner(&self) -> Option<&WignerConfig> {
        enabled(&self.wigner, |c| c.enabled)
    }
    pub fn counterexample(&self) -> Option<&CounterexampleConfig> {
        enabled(&self.counterexample, |c| c.enabled)
    }
}

pub fn parse_axis(s: &str) -> Option<PauliAxis> {
    match s {
        "x" | "1" => Some(PauliAxis::X),
        "y" | "2" => Some(PauliAxis::Y),
        "z" | "3" => Some(PauliAxis::Z),
        _ => None,
    }
}

impl ScenarioConfig {
    pub fn dim(&self) -> usize {
        match self.model.kind {
            ModelKind::Harmonic => self.model.dim.unwrap_or(1),
            ModelKind::Quartic => 2,
        }
    }

    pub fn window_energy(&self) -> f64 {
        self.window.energy.unwrap_or(self.model.energy)
    }

    pub fn window_omega(&self) -> f64 {
        self.window.omega.unwrap_or(1.0)
    }

    /// Whether the run needs the ħ-ladder eigensystems.
    pub fn needs_spectra(&self) -> bool {
        let d = &self.diagnostics;
        d.szego().is_some() || d.s2().is_some() || d.wigner().is_some()
    }

    pub fn validate(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let mut bad = |field: String, message: String| out.push(Issue { field, message });
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;

        if self.name.trim().is_empty() {
            bad("name".into(), "must not be empty".into());
        }
        let m = &self.model;
        let dim = self.dim();
        match m.kind {
            ModelKind::Harmonic => {
                if !(1..=2).contains(&dim) {
                    bad("model.dim".into(), format!("harmonic model supports d = 1 or 2, got {dim}"));
                }
                if m.beta.is_some() {
                    bad("model.beta".into(), "only the quartic model takes beta".into());
                }
            }
            ModelKind::Quartic => {
                if m.dim.is_some_and(|d| d != 2) {
                    bad("model.dim".into(), "the quartic model is two-dimensional".into());
                }
                match m.beta {
                    None => bad("model.beta".into(), "required for the quartic model".into()),
                    Some(b) if !finite_pos(b) => bad("model.beta".into(), format!("must be positive, got {b}")),
                    _ => {}
                }
            }
        }
        if !finite_pos(m.energy) {
            bad("model.energy".into(), format!("must be positive, got {}", m.energy));
        }
        if !finite_pos(m.epsilon) {
            bad("model.epsilon".into(), format!("must be positive, got {}", m.epsilon));
        }
        let c = &m.coupling;
        let needs_axis = matches!(
            c.kind,
            CouplingKind::Constant | CouplingKind::AbelianLinear | CouplingKind::AbelianQuadratic
        );
        match (&c.axis, needs_axis) {
            (None, true) => bad("model.coupling.axis".into(), "required for abelian couplings".into()),
            (Some(a), true) if parse_axis(a).is_none() => {
                bad("model.coupling.axis".into(), format!("expected x, y or z, got `{a}`"))
            }
            (Some(_), false) => bad("model.coupling.axis".into(), "only abelian couplings take an axis".into()),
            _ => {}
        }
        if c.kind != CouplingKind::None {
            match c.strength {
                None => bad("model.coupling.strength".into(), "required".into()),
                Some(s) if !s.is_finite() => bad("model.coupling.strength".into(), "must be finite".into()),
                _ => {}
            }
        }
        if c.kind == CouplingKind::MagneticLinear {
            match &c.field {
                Some(f) if f.len() == 3 && f.iter().all(|r| r.len() == dim && r.iter().all(|v| v.is_finite())) => {}
                _ => bad("model.coupling.field".into(), format!("must be a 3x{dim} matrix of finite numbers")),
            }
        } else if c.field.is_some() || c.offset.is_some() {
            bad("model.coupling.field".into(), "only magnetic_linear takes field/offset".into());
        }

        if self.hbar.is_empty() {
            bad("hbar".into(), "the ladder must have at least one entry".into());
        }
        for (i, h) in self.hbar.iter().enumerate() {
            if !finite_pos(*h) {
                bad(format!("hbar[{i}]"), format!("must be positive, got {h}"));
            }
        }
        match self.grid.points.expand(self.hbar.len()) {
            None => bad("grid.points".into(), format!("give one value or {} (one per hbar)", self.hbar.len())),
            Some(ns) => {
                for (i, n) in ns.iter().enumerate() {
                    if *n < 2 || n % 2 != 0 {
                        bad(format!("grid.points[{i}]"), format!("must be even and at least 2, got {n}"));
                    }
                }
            }
        }
        if let Some(l) = self.grid.half_width {
            if !finite_pos(l) {
                bad("grid.half_width".into(), format!("must be positive, got {l}"));
            }
        }
        if let Some(e) = self.window.energy {
            if !e.is_finite() {
                bad("window.energy".into(), "must be finite".into());
            }
        }
        if !finite_pos(self.window_omega()) {
            bad("window.omega".into(), format!("must be positive, got {}", self.window_omega()));
        }

        let mut names = BTreeSet::new();
        for (i, o) in self.observables.iter().enumerate() {
            if !names.insert(o.name.as_str()) {
                bad(format!("observables[{i}].name"), format!("duplicate observable name `{}`", o.name));
            }
            if named_symbol(&o.symbol, dim).is_none() {
                bad(format!("observables[{i}].symbol"), format!("unknown symbol `{}`", o.symbol));
            }
            if o.target.is_some_and(|t| !t.is_finite()) {
                bad(format!("observables[{i}].target"), "must be finite".into());
            }
        }

        let d = &self.diagnostics;
        for (key, f) in [("diagnostics.flow", d.flow()), ("diagnostics.transport", d.transport())] {
            if let Some(f) = f {
                if f.p.len() != dim || f.x.len() != dim {
                    bad(format!("{key}.p"), format!("start point needs {dim} momentum and {dim} position entries"));
                }
                if !f.t.is_finite() {
                    bad(format!("{key}.t"), "must be finite".into());
                }
                if f.tolerance.is_some_and(|t| !finite_pos(t)) {
                    bad(format!("{key}.tolerance"), "must be positive".into());
                }
            }
        }
        if let Some(e) = d.ergodic() {
            if self.seeds.ergodic.is_none() {
                bad("seeds.ergodic".into(), "required by the ergodic diagnostic".into());
            }
            if named_symbol(&e.observable, dim).is_none() {
                bad("diagnostics.ergodic.observable".into(), format!("unknown symbol `{}`", e.observable));
            }
            if e.n_base == 0 || e.n_g == 0 {
                bad("diagnostics.ergodic.n_base".into(), "ensemble sizes must be positive".into());
            }
            if e.schedule.is_empty() || e.schedule.iter().any(|t| !finite_pos(*t)) {
                bad("diagnostics.ergodic.schedule".into(), "needs positive averaging times".into());
            }
        }
        let spectral_targets = d.szego().is_some() || d.s2().is_some();
        if spectral_targets {
            if self.observables.is_empty() {
                bad("observables".into(), "szego/s2 diagnostics need at least one observable".into());
            }
            if self.observables.iter().any(|o| o.target.is_none()) && self.seeds.targets.is_none() {
                bad("seeds.targets".into(), "required to estimate observables without a target".into());
            }
        }
        if let Some(s) = d.szego() {
            if s.require_decreasing && self.hbar.len() < 2 {
                bad("diagnostics.szego.require_decreasing".into(), "needs at least two hbar values".into());
            }
        }
        if let Some(s) = d.s2() {
            if s.require_decreasing && self.hbar.len() < 2 {
                bad("diagnostics.s2.require_decreasing".into(), "needs at least two hbar values".into());
            }
        }
        if let Some(e) = d.egorov() {
            if named_symbol(&e.symbol, dim).is_none() {
                bad("diagnostics.egorov.symbol".into(), format!("unknown symbol `{}`", e.symbol));
            }
            if !e.t.is_finite() {
                bad("diagnostics.egorov.t".into(), "must be finite".into());
            }
            if e.min_slope.is_some() && self.hbar.len() < 2 {
                bad("diagnostics.egorov.min_slope".into(), "a slope needs at least two hbar values".into());
            }
        }
        if let Some(w) = d.wigner() {
            if w.level >= self.hbar.len().max(1) {
                bad("diagnostics.wigner.level".into(), format!("ladder has {} entries", self.hbar.len()));
            }
            if w.csv_stride == 0 {
                bad("diagnostics.wigner.csv_stride".into(), "must be positive".into());
            }
            if w.equidistribution && self.seeds.targets.is_none() {
                bad("seeds.targets".into(), "required by wigner.equidistribution".into());
            }
        }
        if let Some(cx) = d.counterexample() {
            if self.seeds.counterexample.is_none() {
                bad("seeds.counterexample".into(), "required by the counterexample diagnostic".into());
            }
            if !needs_axis {
                bad("diagnostics.counterexample".into(), "needs an abelian coupling".into());
            }
            if cx.n_base == 0 || cx.n_g == 0 {
                bad("diagnostics.counterexample.n_base".into(), "ensemble sizes must be positive".into());
            }
            if cx.schedule.is_empty() || cx.schedule.iter().any(|t| !finite_pos(*t)) {
                bad("diagnostics.counterexample.schedule".into(), "needs positive averaging times".into());
            }
        }
        out
    }

    /// The model; call after [`validate`](Self::validate) succeeded.
    pub fn build_model(&self) -> spinqe::Result<HamiltonianModel> {
        let m = &self.model;
        let base = match m.kind {
            ModelKind::Harmonic => HamiltonianModel::harmonic(self.dim(), m.energy, m.epsilon)?,
            ModelKind::Quartic => HamiltonianModel::quartic(m.beta.unwrap_or(0.0), m.energy, m.epsilon)?,
        };
        let c = &m.coupling;
        let g = c.strength.unwrap_or(0.0);
        let axis = c.axis.as_deref().and_then(parse_axis).unwrap_or(PauliAxis::Z);
        let coupling = match c.kind {
            CouplingKind::None => return Ok(base),
            CouplingKind::Constant => SpinCoupling::constant(axis, g),
            CouplingKind::AbelianLinear => SpinCoupling::abelian(axis, move |_, x| g * x[0]),
            CouplingKind::AbelianQuadratic => SpinCoupling::abelian(axis, move |_, x| g * x[0] * x[0]),
            CouplingKind::MagneticLinear => {
                let f = c.field.clone().unwrap_or_default();
                let off = c.offset.unwrap_or([0.0; 3]);
                SpinCoupling::magnetic(g, move |x| {
                    std::array::from_fn(|r| off[r] + f[r].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                })
            }
            CouplingKind::SpinOrbit => SpinCoupling::spin_orbit(g, |r| r),
        };
        Ok(base.with_coupling(coupling))
    }

    pub fn grids(&self, model: &HamiltonianModel) -> spinqe::Result<Vec<GridSpec>> {
        let ns = self.grid.points.expand(self.hbar.len()).unwrap_or_default();
        self.hbar
            .iter()
            .zip(ns)
            .map(|(&h, n)| {
                let dim = self.dim();
                match (self.grid.half_width, self.grid.layout) {
                    (Some(l), _) => GridSpec::new(dim, l, n, h),
                    (None, GridLayout::Balanced) => GridSpec::balanced(dim, n, h),
                    (None, GridLayout::Shell) => {
                        let area = std::f64::consts::PI * h * n as f64 / 2.0;
                        let ratio = model.bbox.x_hi[0] / model.bbox.p_hi[0];
                        GridSpec::new(dim, (area * ratio).sqrt(), n, h)
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "t"
        hbar = [0.1]
        [model]
        kind = "harmonic"
        energy = 1.0
        epsilon = 0.5
        [grid]
        points = 32
    "#;

    #[test]
    fn minimal_config_is_valid() {
        let c = parse(MINIMAL).unwrap();
        assert!(c.validate().is_empty());
        assert_eq!(c.dim(), 1);
        let grids = c.grids(&c.build_model().unwrap()).unwrap();
        assert_eq!(grids[0].n, 32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        let err = parse(&MINIMAL.replace("epsilon = 0.5", "epsilon = 0.5\nomega = 2")).unwrap_err();
        assert!(err.contains("omega"), "{err}");
    }

    #[test]
    fn issues_name_their_fields() {
        let c = parse(&MINIMAL.replace("hbar = [0.1]", "hbar = [0.1, -0.2]")).unwrap();
        let fields: Vec<String> = c.validate().into_iter().map(|i| i.field).collect();
        assert!(fields.contains(&"hbar[1]".to_string()), "{fields:?}");

        let text = format!(
            "{MINIMAL}\n[[observables]]\nname = \"a\"\nsymbol = \"x1\"\n[[observables]]\nname = \"a\"\nsymbol = \"nope\"\n"
        );
        let fields: Vec<String> = parse(&text).unwrap().validate().into_iter().map(|i| i.field).collect();
        assert!(fields.contains(&"observables[1].name".to_string()));
        assert!(fields.contains(&"observables[1].symbol".to_string()));
    }

    #[test]
    fn stochastic_diagnostics_need_seeds() {
        let text = format!(
            "{MINIMAL}\n[diagnostics.ergodic]\nn_base = 2\nn_g = 2\nschedule = [1.0]\n"
        );
        let c = parse(&text).unwrap();
        assert_eq!(c.validate()[0].field, "seeds.ergodic");
        let c = parse(&format!("{text}\n[seeds]\nergodic = 3\n")).unwrap();
        assert!(c.validate().is_empty());
    }
}
